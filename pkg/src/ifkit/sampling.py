"""Query samplers, cloud subsampling/cropping/augmentation and analytic shapes.

Randomness always comes from an explicitly passed ``numpy.random.Generator``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInput
from .geometry import as_cloud


def make_rng(seed: int = 42) -> np.random.Generator:
    return np.random.default_rng(seed)


def split_rng(rng: np.random.Generator, n: int) -> list[np.random.Generator]:
    """Independent child generators, e.g. one per shape or per worker."""
    return rng.spawn(n)


@dataclass(frozen=True)
class Aabb:
    min: np.ndarray
    max: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.min, dtype=np.float64).reshape(3)
        hi = np.asarray(self.max, dtype=np.float64).reshape(3)
        if np.any(lo > hi):
            raise InvalidInput("Aabb min must not exceed max")
        object.__setattr__(self, "min", lo)
        object.__setattr__(self, "max", hi)

    @classmethod
    def around(cls, points, pad: float = 0.0) -> "Aabb":
        pts = as_cloud(points)
        return cls(pts.min(axis=0) - pad, pts.max(axis=0) + pad)

    @property
    def extent(self) -> np.ndarray:
        return self.max - self.min

    def contains(self, points) -> np.ndarray:
        pts = np.asarray(points).reshape(-1, 3)
        return np.all((pts >= self.min) & (pts <= self.max), axis=1)


def sample_bbox_uniform(box: Aabb, count: int, rng: np.random.Generator) -> np.ndarray:
    """``count`` i.i.d. uniform points inside ``box``."""
    if not np.all(box.extent > 0):
        raise InvalidInput("cannot sample a zero-volume box")
    if count < 0:
        raise InvalidInput("count must be nonnegative")
    return box.min + rng.random((count, 3)) * box.extent


def sample_queries(box: Aabb, count: int, rng: np.random.Generator, shape=None,
                   near_surface_fraction: float = 0.0, near_sigma: float = 0.05) -> np.ndarray:
    """Uniform box queries, optionally mixing in jittered surface samples.

    A fraction ``near_surface_fraction`` of the queries are surface points of
    ``shape`` plus Gaussian offsets of std ``near_sigma``.
    """
    if not 0.0 <= near_surface_fraction <= 1.0:
        raise InvalidInput("near_surface_fraction must lie in [0, 1]")
    n_near = int(round(count * near_surface_fraction)) if shape is not None else 0
    uniform = sample_bbox_uniform(box, count - n_near, rng)
    if n_near == 0:
        return uniform
    near = resample_surface(shape, n_near, near_sigma, rng)
    return np.concatenate([uniform, near])


def subsample(cloud, n: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` points drawn without replacement, in draw order."""
    pts = as_cloud(cloud)
    if n < 1 or n > len(pts):
        raise InvalidInput(f"cannot draw {n} points from a cloud of {len(pts)}")
    return pts[rng.choice(len(pts), size=n, replace=False)]


def _axis_starts(lo: float, hi: float, d: float, stride: float) -> np.ndarray:
    extent = hi - lo
    count = 1 if extent <= d else int(math.ceil((extent - d) / stride)) + 1
    return lo + stride * np.arange(count)


def sliding_window_crop(scene, d: float = 3.0, stride: float | None = None):
    """Split a scene into ``d``-sized cubes on a ``stride`` lattice.

    The lattice starts at the scene minimum. A point belongs to a cube when
    ``lo < x <= hi`` on every axis, so points on a shared face go to the lower
    cube; the lattice's first layer also keeps points at ``x == lo``. Empty
    cubes are dropped. Returns a list of ``(Aabb, points)``.
    """
    pts = as_cloud(scene)
    if len(pts) == 0:
        raise InvalidInput("scene is empty")
    if d <= 0:
        raise InvalidInput("cube size must be positive")
    stride = d if stride is None else stride
    if stride <= 0:
        raise InvalidInput("stride must be positive")
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    starts = [_axis_starts(lo[a], hi[a], d, stride) for a in range(3)]
    masks = []
    for a in range(3):
        x = pts[:, a]
        s = starts[a][:, None]
        m = (x > s) & (x <= s + d)
        m[0] |= x == starts[a][0]
        masks.append(m)
    crops = []
    for i, sx in enumerate(starts[0]):
        if not masks[0][i].any():
            continue
        for j, sy in enumerate(starts[1]):
            mxy = masks[0][i] & masks[1][j]
            if not mxy.any():
                continue
            for k, sz in enumerate(starts[2]):
                m = mxy & masks[2][k]
                if m.any():
                    corner = np.array([sx, sy, sz])
                    crops.append((Aabb(corner, corner + d), pts[m]))
    return crops


@dataclass(frozen=True)
class AugmentConfig:
    rotate: bool = True
    scale_range: tuple[float, float] = (0.9, 1.1)
    translate: float = 0.1
    up_axis: int = 2

    @classmethod
    def identity(cls) -> "AugmentConfig":
        return cls(rotate=False, scale_range=(1.0, 1.0), translate=0.0)


def augment(cloud, rng: np.random.Generator, cfg: AugmentConfig = AugmentConfig()):
    """Rotate about the up axis, scale uniformly, then translate."""
    pts = as_cloud(cloud)
    if len(pts) == 0:
        raise InvalidInput("cannot augment an empty cloud")
    theta = rng.uniform(0.0, 2 * math.pi) if cfg.rotate else 0.0
    scale = rng.uniform(*cfg.scale_range)
    shift = rng.uniform(-cfg.translate, cfg.translate, size=3)
    a, b = [ax for ax in range(3) if ax != cfg.up_axis]
    c, s = math.cos(theta), math.sin(theta)
    rot = np.eye(3)
    rot[a, a], rot[a, b], rot[b, a], rot[b, b] = c, -s, s, c
    if not cfg.rotate and cfg.scale_range == (1.0, 1.0) and cfg.translate == 0.0:
        return pts.copy()
    return (pts @ rot.T) * scale + shift


# ---------------------------------------------------------------- shapes

SHAPE_KINDS = ("sphere", "box", "torus", "capsule", "union")


def _unit(v):
    return v / np.linalg.norm(v, axis=1, keepdims=True)


@dataclass(frozen=True)
class SynthShape:
    """Analytic shape with an exact (or 1-Lipschitz, for unions) SDF."""

    kind: str
    params: dict = field(default_factory=dict)

    def sdf(self, q) -> np.ndarray:
        q = np.asarray(q, dtype=np.float64)
        single = q.ndim == 1
        p = q.reshape(-1, 3)
        if self.kind == "union":
            a, b = self.params["parts"]
            out = np.minimum(a.sdf(p), b.sdf(p))
        else:
            p = p - self.params["center"]
            out = getattr(self, f"_sdf_{self.kind}")(p)
        return float(out[0]) if single else out

    def _sdf_sphere(self, p):
        return np.linalg.norm(p, axis=1) - self.params["radius"]

    def _sdf_box(self, p):
        q = np.abs(p) - self.params["half_extents"]
        outside = np.linalg.norm(np.maximum(q, 0.0), axis=1)
        return outside + np.minimum(q.max(axis=1), 0.0)

    def _sdf_torus(self, p):
        ring = np.hypot(p[:, 0], p[:, 1]) - self.params["major"]
        return np.hypot(ring, p[:, 2]) - self.params["minor"]

    def _sdf_capsule(self, p):
        h = self.params["half_length"]
        axis_pt = np.zeros_like(p)
        axis_pt[:, 2] = np.clip(p[:, 2], -h, h)
        return np.linalg.norm(p - axis_pt, axis=1) - self.params["radius"]

    @property
    def area(self) -> float:
        k, pr = self.kind, self.params
        if k == "sphere":
            return 4 * math.pi * pr["radius"] ** 2
        if k == "box":
            x, y, z = 2 * np.asarray(pr["half_extents"])
            return float(2 * (x * y + y * z + x * z))
        if k == "torus":
            return 4 * math.pi ** 2 * pr["major"] * pr["minor"]
        if k == "capsule":
            r = pr["radius"]
            return 4 * math.pi * r * pr["half_length"] + 4 * math.pi * r * r
        return sum(part.area for part in pr["parts"])

    def bounds(self) -> Aabb:
        k, pr = self.kind, self.params
        if k == "union":
            a, b = (part.bounds() for part in pr["parts"])
            return Aabb(np.minimum(a.min, b.min), np.maximum(a.max, b.max))
        if k == "sphere":
            half = np.full(3, pr["radius"])
        elif k == "box":
            half = np.asarray(pr["half_extents"], dtype=np.float64)
        elif k == "torus":
            R, r = pr["major"], pr["minor"]
            half = np.array([R + r, R + r, r])
        else:
            r = pr["radius"]
            half = np.array([r, r, r + pr["half_length"]])
        return Aabb(pr["center"] - half, pr["center"] + half)

    def sample_surface(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if n < 0:
            raise InvalidInput("n must be nonnegative")
        if self.kind == "union":
            return self._sample_union(n, rng)
        pts = getattr(self, f"_sample_{self.kind}")(n, rng)
        return pts + self.params["center"]

    def _sample_sphere(self, n, rng):
        return self.params["radius"] * _unit(rng.standard_normal((n, 3)))

    def _sample_box(self, n, rng):
        h = np.asarray(self.params["half_extents"], dtype=np.float64)
        face_area = np.array([h[1] * h[2], h[0] * h[2], h[0] * h[1]] * 2)
        face = rng.choice(6, size=n, p=face_area / face_area.sum())
        pts = rng.uniform(-1.0, 1.0, size=(n, 3)) * h
        axis = face % 3
        sign = np.where(face < 3, 1.0, -1.0)
        pts[np.arange(n), axis] = sign * h[axis]
        return pts

    def _sample_torus(self, n, rng):
        R, r = self.params["major"], self.params["minor"]
        out = np.empty((0, 3))
        while len(out) < n:
            m = 2 * (n - len(out)) + 16
            theta = rng.uniform(0, 2 * math.pi, m)
            phi = rng.uniform(0, 2 * math.pi, m)
            keep = rng.random(m) < (R + r * np.cos(phi)) / (R + r)
            ring = R + r * np.cos(phi[keep])
            pts = np.stack([ring * np.cos(theta[keep]), ring * np.sin(theta[keep]), r * np.sin(phi[keep])], axis=1)
            out = np.concatenate([out, pts])
        return out[:n]

    def _sample_capsule(self, n, rng):
        r, h = self.params["radius"], self.params["half_length"]
        side = 4 * math.pi * r * h
        caps = 4 * math.pi * r * r
        on_side = rng.random(n) < side / (side + caps)
        pts = np.empty((n, 3))
        ns = int(on_side.sum())
        theta = rng.uniform(0, 2 * math.pi, ns)
        pts[on_side] = np.stack([r * np.cos(theta), r * np.sin(theta), rng.uniform(-h, h, ns)], axis=1)
        cap = r * _unit(rng.standard_normal((n - ns, 3)))
        cap[:, 2] += np.where(cap[:, 2] >= 0, h, -h)
        pts[~on_side] = cap
        return pts

    def _sample_union(self, n, rng):
        a, b = self.params["parts"]
        out = np.empty((0, 3))
        pa = a.area / (a.area + b.area)
        while len(out) < n:
            m = 2 * (n - len(out)) + 16
            na = rng.binomial(m, pa)
            sa = a.sample_surface(na, rng)
            sb = b.sample_surface(m - na, rng)
            # keep only the parts of each surface lying outside the other solid
            cand = np.concatenate([sa[b.sdf(sa) > 0], sb[a.sdf(sb) > 0]])
            cand = cand[rng.permutation(len(cand))]
            out = np.concatenate([out, cand])
        return out[:n]


def _positive(name, value):
    arr = np.asarray(value, dtype=np.float64)
    if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
        raise InvalidInput(f"{name} must be positive, got {value!r}")
    return arr if arr.ndim else float(arr)


def synth_shape(kind: str, **params) -> SynthShape:
    """Build an analytic shape.

    sphere(radius), box(half_extents), torus(major, minor),
    capsule(radius, half_length), union(parts=(shape_a, shape_b)); all but
    ``union`` take an optional ``center``.
    """
    if kind not in SHAPE_KINDS:
        raise InvalidInput(f"unknown shape kind {kind!r}")
    if kind == "union":
        parts = params.get("parts")
        if parts is None or len(parts) != 2 or not all(isinstance(p, SynthShape) for p in parts):
            raise InvalidInput("union needs parts=(SynthShape, SynthShape)")
        return SynthShape("union", {"parts": tuple(parts)})
    required = {
        "sphere": ("radius",),
        "box": ("half_extents",),
        "torus": ("major", "minor"),
        "capsule": ("radius", "half_length"),
    }[kind]
    clean = {}
    for name in required:
        if name not in params:
            raise InvalidInput(f"{kind} needs parameter {name!r}")
        clean[name] = _positive(name, params[name])
    if kind == "box":
        clean["half_extents"] = np.broadcast_to(clean["half_extents"], (3,)).astype(np.float64)
    center = np.asarray(params.get("center", (0.0, 0.0, 0.0)), dtype=np.float64).reshape(3)
    if not np.all(np.isfinite(center)):
        raise InvalidInput("center must be finite")
    clean["center"] = center
    return SynthShape(kind, clean)


def resample_surface(shape: SynthShape, n: int, noise_sigma: float, rng: np.random.Generator) -> np.ndarray:
    """Fresh surface sample with isotropic Gaussian jitter (sampling variation)."""
    if n < 1:
        raise InvalidInput("n must be at least 1")
    if noise_sigma < 0:
        raise InvalidInput("noise_sigma must be nonnegative")
    pts = shape.sample_surface(n, rng)
    if noise_sigma > 0:
        pts = pts + noise_sigma * rng.standard_normal(pts.shape)
    return pts


def shape_library() -> list[SynthShape]:
    """Ten distinct unit-scale shapes used by the toy autoencoder experiments."""
    s = synth_shape
    return [
        s("sphere", radius=0.8),
        s("box", half_extents=(0.6, 0.6, 0.6)),
        s("box", half_extents=(0.9, 0.35, 0.2)),
        s("torus", major=0.6, minor=0.2),
        s("torus", major=0.45, minor=0.3),
        s("capsule", radius=0.3, half_length=0.5),
        s("capsule", radius=0.5, half_length=0.2),
        s("union", parts=(s("sphere", radius=0.45, center=(-0.4, 0, 0)), s("sphere", radius=0.45, center=(0.4, 0, 0)))),
        s("union", parts=(s("box", half_extents=(0.8, 0.15, 0.15)), s("box", half_extents=(0.15, 0.15, 0.8)))),
        s("union", parts=(s("capsule", radius=0.2, half_length=0.5), s("torus", major=0.55, minor=0.12))),
    ]
