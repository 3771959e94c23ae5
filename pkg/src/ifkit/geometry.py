"""Spatial indices and exact implicit-field queries.

Point clouds are plain ``(n, 3)`` float64 arrays. Queries accept either a single
3-vector (scalar result) or a ``(q, 3)`` batch (array result).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _backend
from .errors import InvalidInput, NumericalDegeneracy

KD_LEAF_SIZE = 16
BVH_LEAF_SIZE = 4
DEGENERATE_AREA2 = 1e-12
SURFACE_EPS = 1e-12


def as_cloud(points) -> np.ndarray:
    """Validate and convert to a contiguous ``(n, 3)`` float64 array."""
    pts = np.ascontiguousarray(points, dtype=np.float64)
    if pts.ndim == 1 and pts.size == 3:
        pts = pts.reshape(1, 3)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise InvalidInput(f"expected (n, 3) points, got shape {pts.shape}")
    if not np.all(np.isfinite(pts)):
        raise InvalidInput("point coordinates must be finite")
    return pts


def _as_queries(q):
    arr = np.asarray(q, dtype=np.float64)
    single = arr.ndim == 1
    arr = np.ascontiguousarray(arr.reshape(-1, 3))
    if not np.all(np.isfinite(arr)):
        raise InvalidInput("query coordinates must be finite")
    return arr, single


@dataclass(frozen=True)
class _FlatTree:
    # node ranges index into an item array stored in tree order
    start: np.ndarray
    end: np.ndarray
    left: np.ndarray
    right: np.ndarray
    lo: np.ndarray
    hi: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.start)

    def leaves(self):
        return np.flatnonzero(self.left < 0)


def _build_tree(keys: np.ndarray, item_lo: np.ndarray, item_hi: np.ndarray, leaf_size: int):
    """Median-split tree over items with split keys and per-item bounds.

    Returns the item permutation (tree order) and the flat node arrays.
    """
    n = len(keys)
    order = np.arange(n)
    start, end, left, right, lo, hi = [], [], [], [], [], []

    def new_node(s, e):
        idx = order[s:e]
        start.append(s)
        end.append(e)
        left.append(-1)
        right.append(-1)
        lo.append(item_lo[idx].min(axis=0))
        hi.append(item_hi[idx].max(axis=0))
        return len(start) - 1

    root = new_node(0, n)
    todo = [root]
    while todo:
        node = todo.pop()
        s, e = start[node], end[node]
        if e - s <= leaf_size:
            continue
        sub = keys[order[s:e]]
        axis = int(np.argmax(sub.max(axis=0) - sub.min(axis=0)))
        # stable sort keeps the build deterministic for a given input order
        order[s:e] = order[s:e][np.argsort(sub[:, axis], kind="stable")]
        mid = s + (e - s) // 2
        left[node] = new_node(s, mid)
        right[node] = new_node(mid, e)
        todo.extend((left[node], right[node]))

    as_i = lambda a: np.asarray(a, dtype=np.int64)
    tree = _FlatTree(
        as_i(start), as_i(end), as_i(left), as_i(right),
        np.ascontiguousarray(lo, dtype=np.float64),
        np.ascontiguousarray(hi, dtype=np.float64),
    )
    return order, tree


class KnnIndex:
    """Balanced k-d tree over a point cloud (axis-aligned median splits).

    Immutable after construction; safe for concurrent read-only queries.
    """

    def __init__(self, cloud, leaf_size: int = KD_LEAF_SIZE):
        pts = as_cloud(cloud)
        if len(pts) == 0:
            raise InvalidInput("cannot index an empty cloud")
        if leaf_size < 1:
            raise InvalidInput("leaf_size must be positive")
        self.points = pts
        self.leaf_size = leaf_size
        perm, self.tree = _build_tree(pts, pts, pts, leaf_size)
        self.perm = np.ascontiguousarray(perm, dtype=np.int64)
        self._sorted = np.ascontiguousarray(pts[self.perm])

    def __len__(self) -> int:
        return len(self.points)

    def query(self, q, k: int = 1, backend: str | None = None):
        """Indices and distances of the ``k`` nearest points, ascending.

        Equal distances are ordered by original point index.
        """
        if not isinstance(k, (int, np.integer)) or k < 1:
            raise InvalidInput("k must be a positive integer")
        if k > len(self.points):
            raise InvalidInput(f"k={k} exceeds cloud size {len(self.points)}")
        qs, single = _as_queries(q)
        t = self.tree
        idx, dist = _backend.get(backend).knn_query(
            self._sorted, self.perm, t.start, t.end, t.left, t.right, t.lo, t.hi, qs, int(k)
        )
        if single:
            return idx[0], dist[0]
        return idx, dist


def build_knn_index(cloud, leaf_size: int = KD_LEAF_SIZE) -> KnnIndex:
    return KnnIndex(cloud, leaf_size)


def knn_query(index: KnnIndex, q, k: int):
    """List of ``(point, distance)`` pairs for a single query, nearest first."""
    idx, dist = index.query(np.asarray(q, dtype=np.float64).reshape(3), k)
    return [(index.points[i].copy(), float(d)) for i, d in zip(idx, dist)]


def udf_knn(index: KnnIndex, q, k: int = 3):
    """Unsigned distance as the mean distance to the ``k`` nearest cloud points."""
    _, dist = index.query(q, k)
    return dist.mean(axis=-1)


@dataclass(frozen=True)
class TriangleMesh:
    vertices: np.ndarray
    faces: np.ndarray
    watertight: bool = False

    def __post_init__(self):
        v = np.ascontiguousarray(self.vertices, dtype=np.float64)
        f = np.ascontiguousarray(self.faces, dtype=np.int64)
        if v.ndim != 2 or v.shape[1] != 3 or not np.all(np.isfinite(v)):
            raise InvalidInput("vertices must be a finite (n, 3) array")
        if f.ndim != 2 or f.shape[1] != 3 or len(f) == 0:
            raise InvalidInput("faces must be a nonempty (m, 3) index array")
        if f.min() < 0 or f.max() >= len(v):
            raise InvalidInput("face index out of range")
        cross = np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]])
        area2 = 0.25 * np.einsum("ij,ij->i", cross, cross)
        bad = np.flatnonzero(area2 <= DEGENERATE_AREA2)
        if len(bad):
            raise InvalidInput(f"degenerate triangle(s) at face index {bad[:5].tolist()}")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)

    def triangles(self) -> np.ndarray:
        """Corner coordinates, shape ``(m, 3, 3)``."""
        return self.vertices[self.faces]

    def is_closed_manifold(self) -> bool:
        """Every undirected edge is shared by exactly two faces."""
        f = self.faces
        edges = np.sort(np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]]), axis=1)
        _, counts = np.unique(edges, axis=0, return_counts=True)
        return bool(np.all(counts == 2))


def icosphere(subdivisions: int = 3, radius: float = 1.0) -> TriangleMesh:
    """Subdivided icosahedron with every vertex on the sphere; flagged watertight."""
    if subdivisions < 0 or radius <= 0:
        raise InvalidInput("need subdivisions >= 0 and radius > 0")
    t = (1.0 + 5.0 ** 0.5) / 2.0
    verts = [(-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0), (0, -1, t), (0, 1, t),
             (0, -1, -t), (0, 1, -t), (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1)]
    faces = [(0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11), (1, 5, 9), (5, 11, 4),
             (11, 10, 2), (10, 7, 6), (7, 1, 8), (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8),
             (3, 8, 9), (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1)]
    verts = [np.array(v, dtype=np.float64) / np.linalg.norm(v) for v in verts]
    for _ in range(subdivisions):
        cache = {}

        def mid(a, b):
            key = (a, b) if a < b else (b, a)
            if key not in cache:
                m = verts[a] + verts[b]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        nxt = []
        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            nxt += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = nxt
    return TriangleMesh(radius * np.array(verts), np.array(faces, dtype=np.int64), watertight=True)


def sphere_chord_bound(mesh: TriangleMesh, radius: float = 1.0) -> float:
    """Hausdorff bound between an inscribed sphere mesh and its sphere.

    All mesh points lie between the smallest face-plane distance ``h`` and
    ``radius`` from the origin, and every ray from the origin meets the mesh
    in that shell, so distances to mesh and sphere differ by at most ``radius - h``.
    """
    tri = mesh.triangles()
    n = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    n /= np.linalg.norm(n, axis=1, keepdims=True)
    h = np.abs(np.einsum("ij,ij->i", n, tri[:, 0]))
    return float(radius - h.min())


class MeshIndex:
    """Bounding-volume hierarchy over a triangle mesh (median split, leaf size 4)."""

    def __init__(self, mesh: TriangleMesh, leaf_size: int = BVH_LEAF_SIZE):
        if not isinstance(mesh, TriangleMesh):
            raise InvalidInput("expected a TriangleMesh")
        self.mesh = mesh
        tris = mesh.triangles()
        order, self.tree = _build_tree(tris.mean(axis=1), tris.min(axis=1), tris.max(axis=1), leaf_size)
        self.tri_order = np.asarray(order, dtype=np.int64)
        t = tris[self.tri_order]
        self._a = np.ascontiguousarray(t[:, 0])
        self._b = np.ascontiguousarray(t[:, 1])
        self._c = np.ascontiguousarray(t[:, 2])

    def closest(self, q, backend: str | None = None):
        """Distance to the nearest triangle and that triangle's face index."""
        qs, single = _as_queries(q)
        t = self.tree
        d, ti = _backend.get(backend).mesh_closest(
            self._a, self._b, self._c, t.start, t.end, t.left, t.right, t.lo, t.hi, qs
        )
        face = self.tri_order[ti]
        if single:
            return float(d[0]), int(face[0])
        return d, face

    def ray_crossings(self, origins, dirs, tol: float = 1e-9, backend: str | None = None):
        t = self.tree
        return _backend.get(backend).mesh_ray_crossings(
            self._a, self._b, self._c, t.start, t.end, t.left, t.right, t.lo, t.hi,
            np.ascontiguousarray(origins, dtype=np.float64),
            np.ascontiguousarray(dirs, dtype=np.float64),
            tol,
        )


def build_mesh_index(mesh: TriangleMesh) -> MeshIndex:
    return MeshIndex(mesh)


def unsigned_distance_mesh(index: MeshIndex, q):
    d, _ = index.closest(q)
    return d


def _random_dirs(rng, n):
    v = rng.standard_normal((n, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def sign_by_parity(index: MeshIndex, q, directions: int = 3, seed: int = 0,
                   max_retries: int = 16, tol: float = 1e-9):
    """Inside test by majority vote over ray-crossing parity.

    Returns ``True`` for inside (odd crossings). Rays that graze an edge, a
    vertex, or start on the surface are re-drawn up to ``max_retries`` times.
    """
    if not index.mesh.watertight:
        raise InvalidInput("sign requires a mesh flagged watertight")
    if directions < 1:
        raise InvalidInput("directions must be positive")
    qs, single = _as_queries(q)
    rng = np.random.default_rng(seed)
    votes = np.zeros(len(qs), dtype=np.int64)
    t = index.tree
    inside_root = np.all((qs >= t.lo[0]) & (qs <= t.hi[0]), axis=1)
    todo_q = np.flatnonzero(inside_root)
    for _ in range(directions):
        pending = todo_q
        for _attempt in range(max_retries + 1):
            if len(pending) == 0:
                break
            dirs = _random_dirs(rng, len(pending))
            count, bad = index.ray_crossings(qs[pending], dirs, tol)
            ok = bad == 0
            votes[pending[ok]] += count[ok] % 2
            pending = pending[~ok]
        if len(pending):
            raise NumericalDegeneracy(
                f"ray parity failed after {max_retries} retries for {len(pending)} point(s)"
            )
    inside = votes * 2 > directions
    return bool(inside[0]) if single else inside


def sdf_mesh(index: MeshIndex, q, seed: int = 0):
    """Signed distance to a watertight mesh, negative inside."""
    if not index.mesh.watertight:
        raise InvalidInput("signed distance requires a mesh flagged watertight")
    qs, single = _as_queries(q)
    d, _ = index.closest(qs)
    off = d > SURFACE_EPS
    sdf = np.zeros_like(d)
    if off.any():
        inside = sign_by_parity(index, qs[off], seed=seed)
        sdf[off] = np.where(inside, -d[off], d[off])
    return float(sdf[0]) if single else sdf


def occupancy_mesh(index: MeshIndex, q, seed: int = 0):
    """1 inside the watertight mesh, 0 outside; points on the surface count as inside."""
    sdf = np.atleast_1d(sdf_mesh(index, q, seed=seed))
    occ = (sdf <= 0).astype(np.int64)
    return int(occ[0]) if np.asarray(q).ndim == 1 else occ


@dataclass(frozen=True)
class FeatureGrid:
    """Dense lattice of feature vectors; ``values`` has shape ``(rx, ry, rz, c)``.

    Node ``(i, j, k)`` sits at ``bbox_min + (i, j, k) * (bbox_max - bbox_min) / (r - 1)``.
    """

    values: np.ndarray
    bbox_min: np.ndarray
    bbox_max: np.ndarray
    resolution: tuple = field(init=False)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.ndim == 3:
            vals = vals[..., None]
        if vals.ndim != 4 or min(vals.shape[:3]) < 1:
            raise InvalidInput("values must have shape (rx, ry, rz, c)")
        lo = np.asarray(self.bbox_min, dtype=np.float64).reshape(3)
        hi = np.asarray(self.bbox_max, dtype=np.float64).reshape(3)
        if not np.all(hi - lo > 0):
            raise InvalidInput("grid bounding box needs positive extent on every axis")
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "bbox_min", lo)
        object.__setattr__(self, "bbox_max", hi)
        object.__setattr__(self, "resolution", tuple(vals.shape[:3]))

    @property
    def channels(self) -> int:
        return self.values.shape[3]

    def node_positions(self) -> np.ndarray:
        axes = [np.linspace(self.bbox_min[a], self.bbox_max[a], self.resolution[a]) for a in range(3)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)


def trilinear_interpolate(grid: FeatureGrid, q, return_clamped: bool = False):
    """Blend the 8 surrounding nodes; queries outside the box are clamped onto it."""
    qs, single = _as_queries(q)
    res = np.asarray(grid.resolution)
    span = grid.bbox_max - grid.bbox_min
    u = (qs - grid.bbox_min) / span
    clamped = np.any((u < 0) | (u > 1), axis=1)
    u = np.clip(u, 0.0, 1.0) * np.maximum(res - 1, 0)
    i0 = np.minimum(np.floor(u).astype(np.int64), np.maximum(res - 2, 0))
    f = u - i0
    i1 = np.minimum(i0 + 1, res - 1)
    v = grid.values
    out = np.zeros((len(qs), grid.channels))
    for cx in (0, 1):
        wx = f[:, 0] if cx else 1.0 - f[:, 0]
        ix = i1[:, 0] if cx else i0[:, 0]
        for cy in (0, 1):
            wy = f[:, 1] if cy else 1.0 - f[:, 1]
            iy = i1[:, 1] if cy else i0[:, 1]
            for cz in (0, 1):
                wz = f[:, 2] if cz else 1.0 - f[:, 2]
                iz = i1[:, 2] if cz else i0[:, 2]
                out += (wx * wy * wz)[:, None] * v[ix, iy, iz]
    if single:
        out, clamped = out[0], bool(clamped[0])
    return (out, clamped) if return_clamped else out
