"""Training loops for the implicit and explicit toy autoencoders."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ..errors import InvalidInput, NumericalDegeneracy
from ..sampling import Aabb, resample_surface, sample_bbox_uniform
from .models import (
    AutoEncoder, ExplicitBatch, ExplicitDecoder, ImplicitBatch, ImplicitDecoder,
    PointEncoder, forward_backward,
)
from .nn import AdamState, adam_step

QUERY_BOX = Aabb((-1.1, -1.1, -1.1), (1.1, 1.1, 1.1))


@dataclass(frozen=True)
class TrainConfig:
    field: str = "sdf"
    steps: int = 2000
    batch_size: int = 10
    n_points: int = 256
    n_queries: int = 256
    n_out: int = 256
    noise_sigma: float = 0.01
    latent: int = 16
    enc_hidden: tuple = (64, 128)
    lr: float = 1e-4
    lr_final: float | None = None
    seed: int = 0

    def lr_at(self, step: int) -> float:
        """Constant ``lr``, or a cosine decay to ``lr_final`` when that is set."""
        if self.lr_final is None:
            return self.lr
        frac = step / max(self.steps - 1, 1)
        return self.lr_final + 0.5 * (self.lr - self.lr_final) * (1.0 + np.cos(np.pi * frac))

    def with_(self, **kw) -> "TrainConfig":
        return replace(self, **kw)


@dataclass
class TrainResult:
    model: AutoEncoder
    losses: list = field(default_factory=list)


def field_values(shape, queries: np.ndarray, kind: str) -> np.ndarray:
    sdf = shape.sdf(queries)
    if kind == "sdf":
        return sdf
    if kind == "udf":
        return np.abs(sdf)
    return (sdf < 0).astype(np.float64)


def _pick(shapes, cfg, rng):
    if cfg.batch_size >= len(shapes):
        return list(range(len(shapes)))
    return sorted(rng.choice(len(shapes), cfg.batch_size, replace=False).tolist())


def _loop(model, make_batch, shapes, cfg, rng):
    params = model.params()
    state = AdamState.zeros_like(params)
    losses = []
    for step in range(cfg.steps):
        batch = make_batch([shapes[i] for i in _pick(shapes, cfg, rng)])
        try:
            loss, grads = forward_backward(model, batch)
        except NumericalDegeneracy as exc:
            raise NumericalDegeneracy(f"step {step}: {exc}") from exc
        losses.append(loss)
        adam_step(params, grads, state, cfg.lr_at(step))
    return losses


def _check(shapes, cfg):
    if cfg.steps < 1:
        raise InvalidInput("need at least one training step")
    if not shapes:
        raise InvalidInput("no training shapes")


def train_iae(shapes, cfg: TrainConfig = TrainConfig()) -> TrainResult:
    """Fresh surface resample as input each step; analytic field values as target."""
    _check(shapes, cfg)
    rng = np.random.default_rng(cfg.seed)
    init_rng = np.random.default_rng([cfg.seed, 1])
    model = AutoEncoder(
        PointEncoder.init(init_rng, cfg.enc_hidden, cfg.latent),
        ImplicitDecoder.init(init_rng, cfg.latent, field=cfg.field),
    )

    def make_batch(batch_shapes):
        clouds = np.stack([resample_surface(s, cfg.n_points, cfg.noise_sigma, rng) for s in batch_shapes])
        queries = np.stack([sample_bbox_uniform(QUERY_BOX, cfg.n_queries, rng) for _ in batch_shapes])
        targets = np.stack([field_values(s, q, cfg.field) for s, q in zip(batch_shapes, queries)])
        return ImplicitBatch(clouds, queries, targets)

    return TrainResult(model, _loop(model, make_batch, shapes, cfg, rng))


def train_eae(shapes, cfg: TrainConfig = TrainConfig(), fixed_clouds=None) -> TrainResult:
    """Fresh surface resample as input each step; the same sample is the target.

    With ``fixed_clouds`` (one per shape) the inputs never change.
    """
    _check(shapes, cfg)
    rng = np.random.default_rng(cfg.seed)
    init_rng = np.random.default_rng([cfg.seed, 1])
    model = AutoEncoder(
        PointEncoder.init(init_rng, cfg.enc_hidden, cfg.latent),
        ExplicitDecoder.init(init_rng, cfg.latent, cfg.n_out),
    )
    index = {id(s): i for i, s in enumerate(shapes)}

    def make_batch(batch_shapes):
        if fixed_clouds is not None:
            clouds = np.stack([fixed_clouds[index[id(s)]] for s in batch_shapes])
        else:
            clouds = np.stack([resample_surface(s, cfg.n_points, cfg.noise_sigma, rng) for s in batch_shapes])
        return ExplicitBatch(clouds, clouds)

    return TrainResult(model, _loop(model, make_batch, shapes, cfg, rng))
