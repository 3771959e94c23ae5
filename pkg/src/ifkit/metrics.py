"""Point-set distances (Chamfer, EMD) and implicit-field reconstruction losses."""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass

import numpy as np

from . import _backend
from .errors import InvalidInput, ResourceLimit
from .geometry import KnnIndex, as_cloud, build_knn_index, udf_knn

EMD_CAP = 2048
PROB_CLAMP = 1e-7
_CHUNK_ENTRIES = 1 << 18


def _nonempty(cloud, name):
    pts = as_cloud(cloud)
    if len(pts) == 0:
        raise InvalidInput(f"{name} is empty")
    return pts


def nearest_distances(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """For every point of ``src`` the distance to its nearest point in ``dst`` (O(nm) scan)."""
    out = np.empty(len(src))
    step = max(1, _CHUNK_ENTRIES // max(len(dst), 1))
    bx, by, bz = (np.ascontiguousarray(dst[:, a]) for a in range(3))
    for s in range(0, len(src), step):
        chunk = src[s:s + step]
        dx = chunk[:, 0:1] - bx
        d2 = dx * dx
        dy = np.subtract(chunk[:, 1:2], by, out=dx)
        d2 += dy * dy
        dz = np.subtract(chunk[:, 2:3], bz, out=dx)
        d2 += dz * dz
        out[s:s + step] = np.sqrt(d2.min(axis=1))
    return out


def chamfer(p, q, normalized: bool = False) -> float:
    """Sum of nearest-neighbour distances in both directions.

    With ``normalized`` each directed sum is divided by its cloud size.
    """
    p = _nonempty(p, "p")
    q = _nonempty(q, "q")
    d_qp = nearest_distances(q, p)
    d_pq = nearest_distances(p, q)
    if normalized:
        return float(d_qp.mean() + d_pq.mean())
    return float(d_qp.sum() + d_pq.sum())


def chamfer_accelerated(p, q, ip: KnnIndex | None = None, iq: KnnIndex | None = None,
                        normalized: bool = False) -> float:
    """Chamfer distance using k-d tree nearest-neighbour queries."""
    p = _nonempty(p, "p")
    q = _nonempty(q, "q")
    ip = build_knn_index(p) if ip is None else ip
    iq = build_knn_index(q) if iq is None else iq
    if ip.points.shape != p.shape or not np.array_equal(ip.points, p):
        raise InvalidInput("index ip was not built over p")
    if iq.points.shape != q.shape or not np.array_equal(iq.points, q):
        raise InvalidInput("index iq was not built over q")
    _, d_qp = ip.query(q, 1)
    _, d_pq = iq.query(p, 1)
    if normalized:
        return float(d_qp.mean() + d_pq.mean())
    return float(d_qp.sum() + d_pq.sum())


def pairwise_distances(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    diff = p[:, None, :] - q[None, :, :]
    return np.sqrt(np.sum(diff * diff, axis=-1))


def _same_size(p, q):
    p = _nonempty(p, "p")
    q = _nonempty(q, "q")
    if len(p) != len(q):
        raise InvalidInput(f"EMD needs equal sizes, got {len(p)} and {len(q)}")
    return p, q


def emd_assignment(p, q, cap: int = EMD_CAP) -> np.ndarray:
    """Optimal bijection ``p[i] -> q[assign[i]]`` minimising total distance."""
    p, q = _same_size(p, q)
    if len(p) > cap:
        raise ResourceLimit(f"exact EMD capped at {cap} points, got {len(p)}")
    return _backend.kernels.hungarian(np.ascontiguousarray(pairwise_distances(p, q)))


def emd_exact(p, q, cap: int = EMD_CAP, normalized: bool = False) -> float:
    """Minimum over bijections of the summed point-to-point distances."""
    p, q = _same_size(p, q)
    assign = emd_assignment(p, q, cap)
    total = float(np.sum(np.linalg.norm(p - q[assign], axis=1)))
    return total / len(p) if normalized else total


def emd_approx(p, q, iterations: int = 8, rng: np.random.Generator | None = None,
               normalized: bool = False, return_history: bool = False):
    """Upper bound on EMD from epsilon-scaling auction rounds.

    Starts from a random bijection; each iteration runs one auction phase with
    a smaller epsilon and keeps the cheapest bijection seen, so the reported
    cost never increases across iterations and never undercuts the exact EMD.
    """
    p, q = _same_size(p, q)
    if iterations < 1:
        raise InvalidInput("iterations must be positive")
    rng = np.random.default_rng(0) if rng is None else rng
    n = len(p)
    cost = np.ascontiguousarray(pairwise_distances(p, q))
    rows = np.arange(n)
    best_assign = rng.permutation(n)
    best = float(np.sum(cost[rows, best_assign]))
    history = [best]
    cmax = float(cost.max())
    if cmax > 0:
        prices = np.zeros(n)
        eps = cmax / 4.0
        for _ in range(iterations):
            assign = _backend.kernels.auction_round(cost, prices, eps, rng.permutation(n).astype(np.int64))
            c = float(np.sum(cost[rows, assign]))
            if c < best:
                best, best_assign = c, assign
            history.append(best)
            eps = max(eps / 4.0, cmax * 1e-12)
    value = best / n if normalized else best
    if return_history:
        return value, [h / n if normalized else h for h in history]
    return value


# ------------------------------------------------------------- implicit losses

FIELD_KINDS = ("sdf", "udf", "occ")


@dataclass(frozen=True)
class ImplicitSampleSet:
    kind: str
    queries: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        if self.kind not in FIELD_KINDS:
            raise InvalidInput(f"unknown field kind {self.kind!r}")
        q = np.asarray(self.queries, dtype=np.float64).reshape(-1, 3)
        v = np.asarray(self.values, dtype=np.float64).reshape(-1)
        if len(q) != len(v):
            raise InvalidInput("queries and values differ in length")
        if self.kind == "udf" and np.any(v < 0):
            raise InvalidInput("udf values must be nonnegative")
        if self.kind == "occ" and not np.all((v == 0) | (v == 1)):
            raise InvalidInput("occupancy values must be 0 or 1")
        object.__setattr__(self, "queries", q)
        object.__setattr__(self, "values", v)

    def __len__(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class LossValue:
    value: float
    count: int

    def __float__(self) -> float:
        return self.value


def _targets(pred, gt, kind):
    if isinstance(gt, ImplicitSampleSet):
        if gt.kind != kind:
            raise InvalidInput(f"expected {kind} samples, got {gt.kind}")
        values = gt.values
    else:
        values = np.asarray(gt, dtype=np.float64).reshape(-1)
        ImplicitSampleSet(kind, np.zeros((len(values), 3)), values)
    pred = np.asarray(pred, dtype=np.float64).reshape(-1)
    if len(pred) != len(values):
        raise InvalidInput(f"{len(pred)} predictions for {len(values)} targets")
    return pred, values


def _mean(terms):
    return LossValue(float(np.sum(terms) / len(terms)) if len(terms) else 0.0, len(terms))


def loss_sdf(pred, gt) -> LossValue:
    """Mean absolute error between predicted and true signed distances."""
    pred, s = _targets(pred, gt, "sdf")
    return _mean(np.abs(pred - s))


def loss_udf(pred, gt) -> LossValue:
    """Mean of ``| |pred| - u |``; the prediction's sign is ignored."""
    pred, u = _targets(pred, gt, "udf")
    return _mean(np.abs(np.abs(pred) - u))


def loss_occ(pred_probabilities, gt) -> LossValue:
    """Binary cross-entropy with probabilities clamped to ``[1e-7, 1 - 1e-7]``."""
    p, o = _targets(pred_probabilities, gt, "occ")
    p = np.clip(p, PROB_CLAMP, 1.0 - PROB_CLAMP)
    return _mean(-(o * np.log(p) + (1.0 - o) * np.log1p(-p)))


def implicit_loss_grad(kind: str, pred: np.ndarray, target: np.ndarray):
    """Loss value and its gradient with respect to ``pred``.

    For ``occ`` the prediction is a logit and the loss is cross-entropy of its
    sigmoid; the gradient is taken with respect to the logit.
    """
    pred = np.asarray(pred, dtype=np.float64).reshape(-1)
    n = len(pred)
    if kind == "sdf":
        loss = loss_sdf(pred, target).value
        grad = np.sign(pred - target) / n
    elif kind == "udf":
        loss = loss_udf(pred, target).value
        grad = np.sign(np.abs(pred) - target) * np.sign(pred) / n
    elif kind == "occ":
        prob = sigmoid(pred)
        loss = loss_occ(prob, target).value
        inside = (prob > PROB_CLAMP) & (prob < 1.0 - PROB_CLAMP)
        grad = np.where(inside, prob - target, 0.0) / n
    else:
        raise InvalidInput(f"unknown field kind {kind!r}")
    return loss, grad


def sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def chamfer_frozen_grad(pred: np.ndarray, target: np.ndarray):
    """Chamfer (sum form) and its gradient w.r.t. ``pred`` with nearest-neighbour
    correspondences held fixed at their current assignment."""
    d = pairwise_distances(pred, target)
    nn_t = np.argmin(d, axis=1)  # pred -> target
    nn_p = np.argmin(d, axis=0)  # target -> pred
    rows = np.arange(len(pred))
    cols = np.arange(len(target))
    d_pt = d[rows, nn_t]
    d_tp = d[nn_p, cols]
    loss = float(d_pt.sum() + d_tp.sum())
    grad = np.zeros_like(pred)
    diff = pred - target[nn_t]
    nz = d_pt > 0
    grad[nz] += diff[nz] / d_pt[nz, None]
    diff2 = pred[nn_p] - target
    nz2 = d_tp > 0
    np.add.at(grad, nn_p[nz2], diff2[nz2] / d_tp[nz2, None])
    return loss, grad


# ------------------------------------------------------------ cost profiling

COST_MODES = ("chamfer", "chamfer_accelerated", "emd_approx", "implicit")


def _implicit_workload(n_queries: int, rng: np.random.Generator, width: int = 64):
    """A fixed-size decoder forward pass plus UDF loss on ``n_queries`` samples."""
    W1 = rng.standard_normal((3, width)) * 0.5
    W2 = rng.standard_normal((width, 1)) * 0.1

    def run(queries, labels):
        pred = (np.maximum(queries @ W1, 0.0) @ W2).ravel()
        return loss_udf(pred, labels).value

    return run


def cost_profile(mode: str, sizes, trials: int = 3, seed: int = 0, n_queries: int = 2048,
                 repeats: int | None = None):
    """Wall time of one loss evaluation per (size, trial).

    ``chamfer``/``chamfer_accelerated``/``emd_approx`` compare two random clouds
    of ``size`` points. ``implicit`` keeps ``n_queries`` fixed while the
    ground-truth source cloud has ``size`` points; its UDF labels are generated
    beforehand (as a data pipeline would) and only the per-step decoder+loss
    evaluation is timed. ``bytes_estimate`` is the dominant working-set size of
    a dense implementation (pairwise matrix, or decoder activations).

    Returns rows ``(mode, size, trial, seconds, bytes_estimate)``.
    """
    if mode not in COST_MODES:
        raise InvalidInput(f"unknown mode {mode!r}; choose from {COST_MODES}")
    sizes = [int(s) for s in sizes]
    if sizes != sorted(sizes):
        raise InvalidInput("sizes must be ascending")
    rng = np.random.default_rng(seed)
    rows = []
    for size in sizes:
        for trial in range(trials):
            p = rng.random((size, 3))
            q = rng.random((size, 3))
            if mode == "chamfer":
                fn, nbytes = (lambda: chamfer(p, q)), 8 * size * size
            elif mode == "chamfer_accelerated":
                fn, nbytes = (lambda: chamfer_accelerated(p, q)), 8 * 2 * size * 11
            elif mode == "emd_approx":
                fn, nbytes = (lambda: emd_approx(p, q, rng=np.random.default_rng(trial))), 8 * size * size
            else:
                queries = rng.random((n_queries, 3))
                labels = udf_knn(build_knn_index(p), queries, 3)
                work = _implicit_workload(n_queries, np.random.default_rng(trial))
                fn, nbytes = (lambda: work(queries, labels)), 8 * n_queries * (64 + 4)
            reps = repeats if repeats is not None else (50 if mode == "implicit" else 1)
            t0 = time.perf_counter()
            for _ in range(reps):
                fn()
            rows.append((mode, size, trial, (time.perf_counter() - t0) / reps, nbytes))
    return rows


def fit_exponent(rows) -> float:
    """Least-squares slope of log(median seconds) against log(size)."""
    sizes = sorted({r[1] for r in rows})
    med = [np.median([r[3] for r in rows if r[1] == s]) for s in sizes]
    return float(np.polyfit(np.log(sizes), np.log(med), 1)[0])


def write_cost_csv(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["mode", "size", "trial", "seconds", "bytes_estimate"])
        for mode, size, trial, sec, nbytes in rows:
            w.writerow([mode, size, trial, f"{sec:.6e}", nbytes])
