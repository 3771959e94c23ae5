"""Point encoder with implicit and explicit decoders, with manual backprop.

Batches hold equally sized clouds. Losses are averaged over batch items; the
implicit loss of one item is its mean over queries, the explicit loss is the
sum-form Chamfer distance to the item's target cloud.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InvalidInput, NumericalDegeneracy
from ..geometry import as_cloud
from ..metrics import chamfer_frozen_grad, implicit_loss_grad, sigmoid
from .nn import MLP

FIELD_KINDS = ("sdf", "udf", "occ")


def canonical_order(cloud: np.ndarray) -> np.ndarray:
    """Lexicographic point order.

    Running the shared point MLP on a canonical order makes the latent
    bit-identical under input permutations (BLAS results may depend on a row's
    position in the batch).
    """
    return np.lexsort((cloud[:, 2], cloud[:, 1], cloud[:, 0]))


@dataclass
class PointEncoder:
    """Shared per-point MLP, channel-wise max pooling, then a head MLP."""

    point_mlp: MLP
    head: MLP

    @classmethod
    def init(cls, rng, hidden=(64, 128), latent: int = 16, act: str = "relu"):
        sizes = (3, *hidden)
        return cls(MLP.init(sizes, [act] * len(hidden), rng), MLP.init((hidden[-1], latent), ["identity"], rng))

    @property
    def latent_dim(self) -> int:
        return self.head.layers[-1].W.shape[0]

    def mlps(self):
        return [self.point_mlp, self.head]

    def forward(self, clouds: np.ndarray):
        """``clouds`` is (B, P, 3); returns latents (B, m) and a cache."""
        B, P, _ = clouds.shape
        if P == 0:
            raise InvalidInput("cannot encode an empty cloud")
        ordered = np.stack([c[canonical_order(c)] for c in clouds])
        feats, pm_cache = self.point_mlp.forward(ordered.reshape(B * P, 3))
        feats = feats.reshape(B, P, -1)
        winner = np.argmax(feats, axis=1)  # first index wins ties
        pooled = np.take_along_axis(feats, winner[:, None, :], axis=1)[:, 0, :]
        latent, head_cache = self.head.forward(pooled)
        return latent, (B, P, feats.shape[2], winner, pm_cache, head_cache)

    def backward(self, cache, d_latent):
        B, P, C, winner, pm_cache, head_cache = cache
        d_pooled, g_head = self.head.backward(head_cache, d_latent, "encoder head")
        d_feats = np.zeros((B, P, C))
        np.put_along_axis(d_feats, winner[:, None, :], d_pooled[:, None, :], axis=1)
        _, g_pm = self.point_mlp.backward(pm_cache, d_feats.reshape(B * P, C), "encoder point MLP")
        return g_pm + g_head


@dataclass
class ImplicitDecoder:
    """MLP on ``[latent, query]`` giving one field value per query.

    For ``occ`` the network output is a logit and :meth:`predict` applies a sigmoid.
    """

    mlp: MLP
    field: str = "sdf"

    @classmethod
    def init(cls, rng, latent: int = 16, hidden=(128, 64), field: str = "sdf", act: str = "relu"):
        if field not in FIELD_KINDS:
            raise InvalidInput(f"unknown field kind {field!r}")
        sizes = (latent + 3, *hidden, 1)
        return cls(MLP.init(sizes, [act] * len(hidden) + ["identity"], rng), field)

    def mlps(self):
        return [self.mlp]

    def forward(self, latents: np.ndarray, queries: np.ndarray):
        """``latents`` (B, m), ``queries`` (B, Q, 3) -> raw outputs (B, Q)."""
        B, Q, _ = queries.shape
        m = latents.shape[1]
        x = np.concatenate([np.repeat(latents[:, None, :], Q, axis=1), queries], axis=2)
        out, cache = self.mlp.forward(x.reshape(B * Q, m + 3))
        return out.reshape(B, Q), (B, Q, m, cache)

    def backward(self, cache, d_out):
        B, Q, m, mlp_cache = cache
        d_x, grads = self.mlp.backward(mlp_cache, d_out.reshape(B * Q, 1), "implicit decoder")
        d_latent = d_x[:, :m].reshape(B, Q, m).sum(axis=1)
        return d_latent, grads

    def predict(self, latents, queries):
        raw, _ = self.forward(latents, queries)
        return sigmoid(raw) if self.field == "occ" else raw


@dataclass
class ExplicitDecoder:
    """MLP from the latent to ``n_out`` x 3 point coordinates."""

    mlp: MLP

    @classmethod
    def init(cls, rng, latent: int = 16, n_out: int = 256, hidden=(128, 256), act: str = "relu"):
        sizes = (latent, *hidden, 3 * n_out)
        return cls(MLP.init(sizes, [act] * len(hidden) + ["identity"], rng))

    @property
    def n_out(self) -> int:
        return self.mlp.layers[-1].W.shape[0] // 3

    def mlps(self):
        return [self.mlp]

    def forward(self, latents):
        out, cache = self.mlp.forward(latents)
        return out.reshape(len(latents), -1, 3), cache

    def backward(self, cache, d_points):
        d_latent, grads = self.mlp.backward(cache, d_points.reshape(len(d_points), -1), "explicit decoder")
        return d_latent, grads

    def predict(self, latents):
        return self.forward(latents)[0]


@dataclass
class AutoEncoder:
    encoder: PointEncoder
    decoder: ImplicitDecoder | ExplicitDecoder

    @property
    def paradigm(self) -> str:
        return "iae" if isinstance(self.decoder, ImplicitDecoder) else "eae"

    def mlps(self):
        return self.encoder.mlps() + self.decoder.mlps()

    def params(self):
        return [p for mlp in self.mlps() for p in mlp.params()]


def encode(net: PointEncoder, cloud) -> np.ndarray:
    """Latent vector of a single cloud."""
    pts = as_cloud(cloud)
    if len(pts) == 0:
        raise InvalidInput("cannot encode an empty cloud")
    return net.forward(pts[None])[0][0]


def encode_many(net: PointEncoder, clouds) -> np.ndarray:
    return net.forward(np.asarray(clouds, dtype=np.float64))[0]


def decode_implicit(net: ImplicitDecoder, latent, queries) -> np.ndarray:
    """Field values (probabilities for ``occ``) at each query."""
    q = np.asarray(queries, dtype=np.float64).reshape(-1, 3)
    if len(q) == 0:
        raise InvalidInput("query list is empty")
    z = np.asarray(latent, dtype=np.float64).reshape(1, -1)
    return net.predict(z, q[None])[0]


@dataclass
class ImplicitBatch:
    clouds: np.ndarray   # (B, P, 3)
    queries: np.ndarray  # (B, Q, 3)
    targets: np.ndarray  # (B, Q)


@dataclass
class ExplicitBatch:
    clouds: np.ndarray   # (B, P, 3)
    targets: np.ndarray  # (B, T, 3)


def forward_backward(model: AutoEncoder, batch, loss_kind: str | None = None):
    """Loss and gradients for every parameter (ordered as ``model.params()``).

    ``loss_kind`` is a field kind for implicit models and ``"chamfer"`` for
    explicit ones; it defaults to the model's own.
    """
    latents, enc_cache = model.encoder.forward(batch.clouds)
    B = len(latents)
    if isinstance(model.decoder, ImplicitDecoder):
        kind = loss_kind or model.decoder.field
        if kind not in FIELD_KINDS:
            raise InvalidInput(f"implicit model cannot use loss {kind!r}")
        raw, dec_cache = model.decoder.forward(latents, batch.queries)
        loss, d_raw = implicit_loss_grad(kind, raw.ravel(), batch.targets.ravel())
        d_latent, g_dec = model.decoder.backward(dec_cache, d_raw.reshape(raw.shape))
    else:
        if loss_kind not in (None, "chamfer"):
            raise InvalidInput(f"explicit model cannot use loss {loss_kind!r}")
        pts, dec_cache = model.decoder.forward(latents)
        losses, d_pts = [], np.empty_like(pts)
        for b in range(B):
            l_b, d_pts[b] = chamfer_frozen_grad(pts[b], batch.targets[b])
            losses.append(l_b)
        loss = float(np.sum(losses) / B)
        d_latent, g_dec = model.decoder.backward(dec_cache, d_pts / B)
    if not np.isfinite(loss):
        raise NumericalDegeneracy("loss is not finite")
    g_enc = model.encoder.backward(enc_cache, d_latent)
    return loss, g_enc + g_dec
