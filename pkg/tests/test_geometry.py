import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from ifkit import InvalidInput
from ifkit.geometry import (
    FeatureGrid, TriangleMesh, build_knn_index, build_mesh_index, icosphere, knn_query,
    occupancy_mesh, sdf_mesh, sign_by_parity, sphere_chord_bound, trilinear_interpolate,
    udf_knn, unsigned_distance_mesh,
)
from conftest import brute_knn, brute_mesh_distance, cube_mesh


# ----------------------------------------------------------------- k-d tree

def test_singleton_index():
    idx = build_knn_index([[0.5, -1.0, 2.0]])
    for q in np.random.default_rng(0).normal(size=(20, 3)):
        (p, d), = knn_query(idx, q, 1)
        assert np.array_equal(p, [0.5, -1.0, 2.0])
        assert d == pytest.approx(np.linalg.norm(q - p))


def test_empty_cloud_rejected():
    with pytest.raises(InvalidInput):
        build_knn_index(np.zeros((0, 3)))


def test_self_query_distance_zero(backend):
    pts = np.random.default_rng(1).random((10_000, 3))
    idx = build_knn_index(pts)
    sel = np.random.default_rng(2).choice(len(pts), 200, replace=False)
    _, d = idx.query(pts[sel], 1, backend=backend)
    assert np.all(d == 0)


def test_hand_geometry_and_tie_rule():
    idx = build_knn_index([[0, 0, 0], [1, 0, 0], [0, 1, 0]])
    res = knn_query(idx, [0, 0, 0], 3)
    assert [d for _, d in res] == [0.0, 1.0, 1.0]
    # (1,0,0) and (0,1,0) tie; the lower index comes first
    assert np.array_equal(res[1][0], [1, 0, 0])
    assert udf_knn(idx, [0, 0, 0], 3) == pytest.approx(2 / 3)
    with pytest.raises(InvalidInput):
        knn_query(idx, [0, 0, 0], 4)


def test_equidistant_query_lists_lower_index_first(backend):
    idx = build_knn_index([[5, 5, 5], [1, 0, 0], [-1, 0, 0]])
    i, d = idx.query([0, 0, 0], 2, backend=backend)
    assert list(i) == [1, 2] and d[0] == d[1] == 1.0


@pytest.mark.parametrize("k", [1, 3, 5, 16, 40])
def test_knn_matches_exhaustive_scan(backend, k):
    rng = np.random.default_rng(k)
    pts = rng.random((2000, 3))
    qs = rng.random((100, 3)) * 1.4 - 0.2
    idx, dist = build_knn_index(pts).query(qs, k, backend=backend)
    for q, i, d in zip(qs, idx, dist):
        bi, bd = brute_knn(pts, q, k)
        assert np.array_equal(i, bi)
        assert np.array_equal(d, bd)


def test_knn_with_duplicates_and_grid_ties(backend):
    g = np.arange(6, dtype=float)
    pts = np.stack(np.meshgrid(g, g, g, indexing="ij"), -1).reshape(-1, 3)
    pts = np.concatenate([pts, pts[::7]])
    qs = np.random.default_rng(3).integers(0, 6, (50, 3)).astype(float) + 0.5
    idx, dist = build_knn_index(pts).query(qs, 10, backend=backend)
    for q, i, d in zip(qs, idx, dist):
        bi, bd = brute_knn(pts, q, 10)
        assert np.array_equal(i, bi) and np.array_equal(d, bd)


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 300), st.just(3)),
              elements=st.floats(-100, 100, allow_nan=False)),
       st.integers(1, 8), st.integers(0, 2 ** 31))
def test_knn_property(pts, k, seed):
    k = min(k, len(pts))
    q = np.random.default_rng(seed).uniform(-120, 120, 3)
    i, d = build_knn_index(pts).query(q, k)
    bi, bd = brute_knn(pts, q, k)
    assert np.array_equal(d, bd)
    assert np.array_equal(i, bi)


def test_udf_knn_k1_is_nearest_distance():
    rng = np.random.default_rng(4)
    pts = rng.random((500, 3))
    qs = rng.random((50, 3))
    u = udf_knn(build_knn_index(pts), qs, 1)
    exact = np.array([np.sqrt(((pts - q) ** 2).sum(1)).min() for q in qs])
    assert np.array_equal(u, exact)
    assert np.all(u >= 0)


def test_udf_knn_sphere_sample_within_gap_bound():
    rng = np.random.default_rng(5)
    v = rng.normal(size=(5000, 3))
    pts = v / np.linalg.norm(v, axis=1, keepdims=True)
    idx = build_knn_index(pts)
    # every sphere point lies within this spacing of some sample
    probe = rng.normal(size=(20_000, 3))
    probe /= np.linalg.norm(probe, axis=1, keepdims=True)
    gap = idx.query(probe, 1)[1].max()
    # the 3 nearest samples sit within a few gaps of the closest sphere point
    assert abs(udf_knn(idx, [2.0, 0, 0], 3) - 1.0) <= 3 * gap


# ------------------------------------------------------------- mesh queries

def test_single_triangle_one_leaf():
    mesh = TriangleMesh(np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0.0]]), np.array([[0, 1, 2]]))
    idx = build_mesh_index(mesh)
    assert len(idx.tree.start) == 1
    assert unsigned_distance_mesh(idx, [0.25, 0.25, 1.0]) == pytest.approx(1.0, abs=1e-15)
    assert unsigned_distance_mesh(idx, [1.0, 0.0, 0.0]) == 0.0


def test_degenerate_triangle_rejected():
    with pytest.raises(InvalidInput):
        TriangleMesh(np.array([[0, 0, 0], [1, 0, 0], [2, 0, 0.0]]), np.array([[0, 1, 2]]))


def test_bvh_bounds_contain_children():
    mesh = icosphere(3)
    idx = build_mesh_index(mesh)
    t = idx.tree
    tris = mesh.triangles()[idx.tri_order]

    def check(node):
        lo, hi = t.lo[node], t.hi[node]
        if t.left[node] < 0:
            box = tris[t.start[node]:t.end[node]].reshape(-1, 3)
            assert np.all(box >= lo) and np.all(box <= hi)
            return t.end[node] - t.start[node]
        for child in (t.left[node], t.right[node]):
            assert np.all(t.lo[child] >= lo) and np.all(t.hi[child] <= hi)
        return check(t.left[node]) + check(t.right[node])

    assert check(0) == len(tris)


def test_closest_matches_all_triangle_scan(backend):
    mesh = icosphere(2)
    rng = np.random.default_rng(6)
    qs = rng.uniform(-1.6, 1.6, (150, 3))
    d, _ = build_mesh_index(mesh).closest(qs, backend=backend)
    brute = np.array([brute_mesh_distance(mesh, q) for q in qs])
    assert np.max(np.abs(d - brute)) <= 1e-12


@pytest.mark.slow
def test_closest_large_mesh_brute_force():
    mesh = icosphere(5, radius=0.7)  # 20480 triangles
    rng = np.random.default_rng(7)
    qs = rng.uniform(-1, 1, (1000, 3))
    d = unsigned_distance_mesh(build_mesh_index(mesh), qs)
    tri = mesh.triangles()
    # vectorised oracle: exact plane/edge distances over all triangles
    a, b, c = tri[:, 0], tri[:, 1], tri[:, 2]
    n = np.cross(b - a, c - a)
    n /= np.linalg.norm(n, axis=1, keepdims=True)
    worst = 0.0
    for q, dq in zip(qs, d):
        s = np.einsum("ij,ij->i", q - a, n)
        foot = q - s[:, None] * n
        inside = np.ones(len(tri), bool)
        for v0, v1 in ((a, b), (b, c), (c, a)):
            inside &= np.einsum("ij,ij->i", np.cross(v1 - v0, foot - v0), n) >= 0
        best = np.where(inside, np.abs(s), np.inf)
        for v0, v1 in ((a, b), (b, c), (c, a)):
            e = v1 - v0
            t = np.clip(np.einsum("ij,ij->i", q - v0, e) / np.einsum("ij,ij->i", e, e), 0, 1)
            best = np.minimum(best, np.linalg.norm(q - (v0 + t[:, None] * e), axis=1))
        worst = max(worst, abs(best.min() - dq))
    assert worst <= 1e-12


def test_icosphere_point_distance_matches_scan():
    mesh = icosphere(3)
    d = unsigned_distance_mesh(build_mesh_index(mesh), [0, 0, 2.0])
    assert abs(d - brute_mesh_distance(mesh, np.array([0, 0, 2.0]))) <= 1e-12


def test_vertex_query_gives_zero():
    mesh = icosphere(2)
    idx = build_mesh_index(mesh)
    assert unsigned_distance_mesh(idx, mesh.vertices[17]) == 0.0
    assert sdf_mesh(idx, mesh.vertices[17]) == 0.0


def test_cube_sign_sdf_occupancy():
    idx = build_mesh_index(cube_mesh())
    assert sign_by_parity(idx, [0, 0, 0]) is True
    assert sign_by_parity(idx, [5, 5, 5]) is False
    assert sdf_mesh(idx, [0, 0, 0]) == pytest.approx(-1.0, abs=1e-15)
    assert occupancy_mesh(idx, [0, 0, 0]) == 1
    assert occupancy_mesh(idx, [0, 3, 0]) == 0
    # on the surface counts as inside
    assert occupancy_mesh(idx, [1, 0.2, 0.3]) == 1


def test_sign_requires_watertight_flag():
    m = cube_mesh()
    idx = build_mesh_index(TriangleMesh(m.vertices, m.faces, watertight=False))
    with pytest.raises(InvalidInput):
        sign_by_parity(idx, [0, 0, 0])
    with pytest.raises(InvalidInput):
        sdf_mesh(idx, [0, 0, 0])


def test_closed_manifold_check():
    m = cube_mesh()
    assert m.is_closed_manifold()
    assert not TriangleMesh(m.vertices, m.faces[:-1]).is_closed_manifold()


def _icosphere_queries(n, seed):
    q = np.random.default_rng(seed).uniform(-1.5, 1.5, (n, 3))
    return q


def test_icosphere_sign_matches_analytic(backend):
    mesh = icosphere(3)
    idx = build_mesh_index(mesh)
    q = _icosphere_queries(1000, 8)
    ud = unsigned_distance_mesh(idx, q)
    far = ud >= 1e-6
    r = np.linalg.norm(q, axis=1)
    # the mesh is inscribed: points between mesh and sphere are genuinely outside the mesh
    bound = sphere_chord_bound(mesh)
    clear = far & (np.abs(r - 1) > bound)
    inside = sign_by_parity(idx, q[far])
    assert np.array_equal(inside[clear[far]], (r < 1)[clear])


@pytest.mark.parametrize("seed", [0, 1, 2, 3])
def test_sign_invariant_to_direction_seed(seed):
    idx = build_mesh_index(icosphere(3))
    q = _icosphere_queries(300, 9)
    far = unsigned_distance_mesh(idx, q) >= 1e-6
    assert np.array_equal(sign_by_parity(idx, q[far], seed=seed), sign_by_parity(idx, q[far], seed=99))


def test_sdf_abs_equals_udf_and_occupancy():
    mesh = icosphere(2)
    idx = build_mesh_index(mesh)
    q = _icosphere_queries(400, 10)
    s = sdf_mesh(idx, q)
    assert np.array_equal(np.abs(s), unsigned_distance_mesh(idx, q))
    assert np.array_equal(occupancy_mesh(idx, q), (s <= 0).astype(int))


def test_sdf_icosphere_far_point_within_chord_bound():
    mesh = icosphere(3)
    assert abs(sdf_mesh(build_mesh_index(mesh), [2.0, 0, 0]) - 1.0) <= sphere_chord_bound(mesh)


# -------------------------------------------------------------- feature grid

def test_trilinear_node_constant_and_affine():
    rng = np.random.default_rng(11)
    vals = rng.normal(size=(4, 5, 3, 2))
    g = FeatureGrid(vals, (-1, 0, 2), (1, 3, 4))
    nodes = g.node_positions()
    for ijk in [(0, 0, 0), (3, 4, 2), (1, 2, 1)]:
        assert np.allclose(trilinear_interpolate(g, nodes[ijk]), vals[ijk], atol=1e-14, rtol=0)
    const = FeatureGrid(np.full((3, 3, 3, 1), 2.5), (0, 0, 0), (1, 1, 1))
    out = trilinear_interpolate(const, rng.random((50, 3)))
    assert np.allclose(out, 2.5, atol=1e-14, rtol=0)
    f = lambda p: p[..., 0] + 2 * p[..., 1] + 3 * p[..., 2]
    aff = FeatureGrid(f(g.node_positions())[..., None], g.bbox_min, g.bbox_max)
    q = g.bbox_min + rng.random((100, 3)) * (g.bbox_max - g.bbox_min)
    assert np.allclose(trilinear_interpolate(aff, q)[:, 0], f(q), atol=1e-12, rtol=0)


def test_trilinear_clamps_outside_with_flag():
    g = FeatureGrid(np.arange(8.0).reshape(2, 2, 2, 1), (0, 0, 0), (1, 1, 1))
    v, clamped = trilinear_interpolate(g, [2.0, 0, 0], return_clamped=True)
    assert clamped and v[0] == pytest.approx(trilinear_interpolate(g, [1.0, 0, 0])[0])
    with pytest.raises(InvalidInput):
        FeatureGrid(np.zeros((2, 2, 2, 1)), (0, 0, 0), (1, 0, 1))
