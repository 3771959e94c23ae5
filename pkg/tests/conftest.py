import numpy as np
import pytest

from ifkit import _backend
from ifkit.geometry import TriangleMesh

BACKEND_NAMES = list(_backend.BACKENDS)


@pytest.fixture(params=BACKEND_NAMES)
def backend(request):
    return request.param


def cube_mesh(half=1.0):
    v = np.array([[x, y, z] for x in (-half, half) for y in (-half, half) for z in (-half, half)], dtype=float)
    quads = [(0, 1, 3, 2), (4, 6, 7, 5), (0, 4, 5, 1), (2, 3, 7, 6), (0, 2, 6, 4), (1, 5, 7, 3)]
    faces = [f for a, b, c, d in quads for f in ((a, b, c), (a, c, d))]
    return TriangleMesh(v, np.array(faces), watertight=True)


def _seg_dist(p, a, b):
    ab = b - a
    t = np.clip(np.dot(p - a, ab) / np.dot(ab, ab), 0.0, 1.0)
    return np.linalg.norm(p - (a + t * ab))


def brute_triangle_distance(p, a, b, c):
    """Plane projection if it lands inside, else the nearest edge."""
    n = np.cross(b - a, c - a)
    n = n / np.linalg.norm(n)
    foot = p - np.dot(p - a, n) * n
    # same-side tests on the projected point
    inside = all(np.dot(np.cross(v1 - v0, foot - v0), n) >= 0 for v0, v1 in ((a, b), (b, c), (c, a)))
    if inside:
        return abs(np.dot(p - a, n))
    return min(_seg_dist(p, a, b), _seg_dist(p, b, c), _seg_dist(p, c, a))


def brute_mesh_distance(mesh, p):
    return min(brute_triangle_distance(p, *t) for t in mesh.triangles())


def brute_knn(cloud, q, k):
    d = np.sqrt(((cloud - q) ** 2).sum(axis=1))
    order = np.lexsort((np.arange(len(cloud)), d))[:k]
    return order, d[order]


# one line per acceptance criterion, echoed at the end of the run
ACCEPTANCE_LINES = {}


@pytest.fixture
def acceptance(request):
    def record(number, ok, detail):
        ACCEPTANCE_LINES[number] = f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2}: {detail}"
        print(ACCEPTANCE_LINES[number])
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[number])
