# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops. Every function here has a twin in ``_pykernels``."""

import numpy as np
from libc.math cimport sqrt, fabs, INFINITY

ctypedef long long i64


cdef inline bint _before(double d2a, i64 ia, double d2b, i64 ib) noexcept nogil:
    return d2a < d2b or (d2a == d2b and ia < ib)


cdef inline double _box_d2(const double[:, ::1] lo, const double[:, ::1] hi, i64 node,
                           double qx, double qy, double qz) noexcept nogil:
    cdef double d2 = 0.0, t
    t = lo[node, 0] - qx
    if t > 0:
        d2 += t * t
    else:
        t = qx - hi[node, 0]
        if t > 0:
            d2 += t * t
    t = lo[node, 1] - qy
    if t > 0:
        d2 += t * t
    else:
        t = qy - hi[node, 1]
        if t > 0:
            d2 += t * t
    t = lo[node, 2] - qz
    if t > 0:
        d2 += t * t
    else:
        t = qz - hi[node, 2]
        if t > 0:
            d2 += t * t
    return d2


def knn_query(const double[:, ::1] pts, const i64[::1] perm,
              const i64[::1] start, const i64[::1] end,
              const i64[::1] left, const i64[::1] right,
              const double[:, ::1] lo, const double[:, ::1] hi,
              const double[:, ::1] queries, int k):
    cdef Py_ssize_t nq = queries.shape[0]
    cdef Py_ssize_t nn = start.shape[0]
    out_idx = np.empty((nq, k), dtype=np.int64)
    out_d = np.empty((nq, k), dtype=np.float64)
    cdef i64[:, ::1] oi = out_idx
    cdef double[:, ::1] od = out_d
    best_d2_arr = np.empty(k, dtype=np.float64)
    best_i_arr = np.empty(k, dtype=np.int64)
    stack_arr = np.empty(max(nn, 1) + 64, dtype=np.int64)
    cdef double[::1] bd = best_d2_arr
    cdef i64[::1] bi = best_i_arr
    cdef i64[::1] stack = stack_arr
    cdef Py_ssize_t q, j, s
    cdef int filled, pos
    cdef i64 node, c1, c2, oidx, p
    cdef double qx, qy, qz, dx, dy, dz, d2, b1, b2
    with nogil:
        for q in range(nq):
            qx = queries[q, 0]
            qy = queries[q, 1]
            qz = queries[q, 2]
            filled = 0
            s = 0
            stack[s] = 0
            s += 1
            while s > 0:
                s -= 1
                node = stack[s]
                if filled == k and _box_d2(lo, hi, node, qx, qy, qz) > bd[k - 1]:
                    continue
                if left[node] < 0:
                    for p in range(start[node], end[node]):
                        dx = pts[p, 0] - qx
                        dy = pts[p, 1] - qy
                        dz = pts[p, 2] - qz
                        d2 = dx * dx + dy * dy + dz * dz
                        oidx = perm[p]
                        if filled == k and not _before(d2, oidx, bd[k - 1], bi[k - 1]):
                            continue
                        if filled < k:
                            pos = filled
                            filled += 1
                        else:
                            pos = k - 1
                        while pos > 0 and _before(d2, oidx, bd[pos - 1], bi[pos - 1]):
                            bd[pos] = bd[pos - 1]
                            bi[pos] = bi[pos - 1]
                            pos -= 1
                        bd[pos] = d2
                        bi[pos] = oidx
                    continue
                c1 = left[node]
                c2 = right[node]
                b1 = _box_d2(lo, hi, c1, qx, qy, qz)
                b2 = _box_d2(lo, hi, c2, qx, qy, qz)
                # push the farther child first so the nearer one is popped next
                if b1 <= b2:
                    stack[s] = c2
                    stack[s + 1] = c1
                else:
                    stack[s] = c1
                    stack[s + 1] = c2
                s += 2
            for j in range(k):
                oi[q, j] = bi[j]
                od[q, j] = sqrt(bd[j])
    return out_idx, out_d


cdef inline double _dot(double ax, double ay, double az,
                        double bx, double by, double bz) noexcept nogil:
    return ax * bx + ay * by + az * bz


cdef double _point_tri_d2(double px, double py, double pz,
                          double ax, double ay, double az,
                          double bx, double by, double bz,
                          double cx, double cy, double cz) noexcept nogil:
    # Voronoi-region closest point on triangle
    cdef double abx = bx - ax, aby = by - ay, abz = bz - az
    cdef double acx = cx - ax, acy = cy - ay, acz = cz - az
    cdef double apx = px - ax, apy = py - ay, apz = pz - az
    cdef double d1 = _dot(abx, aby, abz, apx, apy, apz)
    cdef double d2 = _dot(acx, acy, acz, apx, apy, apz)
    cdef double rx, ry, rz, v, w, denom
    if d1 <= 0 and d2 <= 0:
        return apx * apx + apy * apy + apz * apz
    cdef double bpx = px - bx, bpy = py - by, bpz = pz - bz
    cdef double d3 = _dot(abx, aby, abz, bpx, bpy, bpz)
    cdef double d4 = _dot(acx, acy, acz, bpx, bpy, bpz)
    if d3 >= 0 and d4 <= d3:
        return bpx * bpx + bpy * bpy + bpz * bpz
    cdef double vc = d1 * d4 - d3 * d2
    if vc <= 0 and d1 >= 0 and d3 <= 0:
        v = d1 / (d1 - d3)
        rx = apx - v * abx
        ry = apy - v * aby
        rz = apz - v * abz
        return rx * rx + ry * ry + rz * rz
    cdef double cpx = px - cx, cpy = py - cy, cpz = pz - cz
    cdef double d5 = _dot(abx, aby, abz, cpx, cpy, cpz)
    cdef double d6 = _dot(acx, acy, acz, cpx, cpy, cpz)
    if d6 >= 0 and d5 <= d6:
        return cpx * cpx + cpy * cpy + cpz * cpz
    cdef double vb = d5 * d2 - d1 * d6
    if vb <= 0 and d2 >= 0 and d6 <= 0:
        w = d2 / (d2 - d6)
        rx = apx - w * acx
        ry = apy - w * acy
        rz = apz - w * acz
        return rx * rx + ry * ry + rz * rz
    cdef double va = d3 * d6 - d5 * d4
    if va <= 0 and (d4 - d3) >= 0 and (d5 - d6) >= 0:
        w = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        rx = bpx - w * (cx - bx)
        ry = bpy - w * (cy - by)
        rz = bpz - w * (cz - bz)
        return rx * rx + ry * ry + rz * rz
    denom = 1.0 / (va + vb + vc)
    v = vb * denom
    w = vc * denom
    rx = apx - abx * v - acx * w
    ry = apy - aby * v - acy * w
    rz = apz - abz * v - acz * w
    return rx * rx + ry * ry + rz * rz


def mesh_closest(const double[:, ::1] ta, const double[:, ::1] tb, const double[:, ::1] tc,
                 const i64[::1] start, const i64[::1] end,
                 const i64[::1] left, const i64[::1] right,
                 const double[:, ::1] lo, const double[:, ::1] hi,
                 const double[:, ::1] queries):
    cdef Py_ssize_t nq = queries.shape[0]
    cdef Py_ssize_t nn = start.shape[0]
    out_d = np.empty(nq, dtype=np.float64)
    out_t = np.empty(nq, dtype=np.int64)
    cdef double[::1] od = out_d
    cdef i64[::1] ot = out_t
    stack_arr = np.empty(nn + 64, dtype=np.int64)
    cdef i64[::1] stack = stack_arr
    cdef Py_ssize_t q, s
    cdef i64 node, t, c1, c2, best_t
    cdef double qx, qy, qz, best, d2, b1, b2
    with nogil:
        for q in range(nq):
            qx = queries[q, 0]
            qy = queries[q, 1]
            qz = queries[q, 2]
            best = INFINITY
            best_t = -1
            s = 0
            stack[s] = 0
            s += 1
            while s > 0:
                s -= 1
                node = stack[s]
                if _box_d2(lo, hi, node, qx, qy, qz) > best:
                    continue
                if left[node] < 0:
                    for t in range(start[node], end[node]):
                        d2 = _point_tri_d2(qx, qy, qz,
                                           ta[t, 0], ta[t, 1], ta[t, 2],
                                           tb[t, 0], tb[t, 1], tb[t, 2],
                                           tc[t, 0], tc[t, 1], tc[t, 2])
                        if d2 < best:
                            best = d2
                            best_t = t
                    continue
                c1 = left[node]
                c2 = right[node]
                b1 = _box_d2(lo, hi, c1, qx, qy, qz)
                b2 = _box_d2(lo, hi, c2, qx, qy, qz)
                if b1 <= b2:
                    stack[s] = c2
                    stack[s + 1] = c1
                else:
                    stack[s] = c1
                    stack[s + 1] = c2
                s += 2
            od[q] = sqrt(best)
            ot[q] = best_t
    return out_d, out_t


cdef inline bint _ray_box(const double[:, ::1] lo, const double[:, ::1] hi, i64 node,
                          double ox, double oy, double oz,
                          double ix, double iy, double iz) noexcept nogil:
    cdef double t0 = 0.0, t1 = INFINITY, a, b, tmp
    a = (lo[node, 0] - ox) * ix
    b = (hi[node, 0] - ox) * ix
    if a > b:
        tmp = a; a = b; b = tmp
    if a > t0: t0 = a
    if b < t1: t1 = b
    a = (lo[node, 1] - oy) * iy
    b = (hi[node, 1] - oy) * iy
    if a > b:
        tmp = a; a = b; b = tmp
    if a > t0: t0 = a
    if b < t1: t1 = b
    a = (lo[node, 2] - oz) * iz
    b = (hi[node, 2] - oz) * iz
    if a > b:
        tmp = a; a = b; b = tmp
    if a > t0: t0 = a
    if b < t1: t1 = b
    return t0 <= t1 * (1.0 + 1e-12) + 1e-12


def mesh_ray_crossings(const double[:, ::1] ta, const double[:, ::1] tb, const double[:, ::1] tc,
                       const i64[::1] start, const i64[::1] end,
                       const i64[::1] left, const i64[::1] right,
                       const double[:, ::1] lo, const double[:, ::1] hi,
                       const double[:, ::1] origins, const double[:, ::1] dirs,
                       double tol):
    """Count forward ray-triangle hits; flag rays that graze an edge or vertex."""
    cdef Py_ssize_t nq = origins.shape[0]
    cdef Py_ssize_t nn = start.shape[0]
    out_n = np.zeros(nq, dtype=np.int64)
    out_bad = np.zeros(nq, dtype=np.uint8)
    cdef i64[::1] on = out_n
    cdef unsigned char[::1] ob = out_bad
    stack_arr = np.empty(nn + 64, dtype=np.int64)
    cdef i64[::1] stack = stack_arr
    cdef Py_ssize_t q, s
    cdef i64 node, t, count
    cdef unsigned char bad
    cdef double ox, oy, oz, dx, dy, dz, ix, iy, iz
    cdef double e1x, e1y, e1z, e2x, e2y, e2z, px, py, pz, det, inv
    cdef double sx, sy, sz, u, v, qvx, qvy, qvz, tt
    with nogil:
        for q in range(nq):
            ox = origins[q, 0]; oy = origins[q, 1]; oz = origins[q, 2]
            dx = dirs[q, 0]; dy = dirs[q, 1]; dz = dirs[q, 2]
            ix = 1.0 / dx if dx != 0 else INFINITY
            iy = 1.0 / dy if dy != 0 else INFINITY
            iz = 1.0 / dz if dz != 0 else INFINITY
            count = 0
            bad = 0
            s = 0
            stack[s] = 0
            s += 1
            while s > 0 and not bad:
                s -= 1
                node = stack[s]
                if not _ray_box(lo, hi, node, ox, oy, oz, ix, iy, iz):
                    continue
                if left[node] >= 0:
                    stack[s] = left[node]
                    stack[s + 1] = right[node]
                    s += 2
                    continue
                for t in range(start[node], end[node]):
                    e1x = tb[t, 0] - ta[t, 0]; e1y = tb[t, 1] - ta[t, 1]; e1z = tb[t, 2] - ta[t, 2]
                    e2x = tc[t, 0] - ta[t, 0]; e2y = tc[t, 1] - ta[t, 1]; e2z = tc[t, 2] - ta[t, 2]
                    px = dy * e2z - dz * e2y
                    py = dz * e2x - dx * e2z
                    pz = dx * e2y - dy * e2x
                    det = e1x * px + e1y * py + e1z * pz
                    if fabs(det) < 1e-300:
                        continue
                    inv = 1.0 / det
                    sx = ox - ta[t, 0]; sy = oy - ta[t, 1]; sz = oz - ta[t, 2]
                    u = (sx * px + sy * py + sz * pz) * inv
                    if u < -tol or u > 1.0 + tol:
                        continue
                    qvx = sy * e1z - sz * e1y
                    qvy = sz * e1x - sx * e1z
                    qvz = sx * e1y - sy * e1x
                    v = (dx * qvx + dy * qvy + dz * qvz) * inv
                    if v < -tol or u + v > 1.0 + tol:
                        continue
                    tt = (e2x * qvx + e2y * qvy + e2z * qvz) * inv
                    if tt < -tol:
                        continue
                    if fabs(tt) <= tol or u <= tol or v <= tol or u + v >= 1.0 - tol:
                        bad = 1
                        break
                    count += 1
            on[q] = count
            ob[q] = bad
    return out_n, out_bad


def hungarian(const double[:, ::1] cost):
    """Shortest-augmenting-path assignment; returns row -> column."""
    cdef Py_ssize_t n = cost.shape[0]
    u_arr = np.zeros(n + 1)
    v_arr = np.zeros(n + 1)
    p_arr = np.zeros(n + 1, dtype=np.int64)
    way_arr = np.zeros(n + 1, dtype=np.int64)
    minv_arr = np.empty(n + 1)
    used_arr = np.empty(n + 1, dtype=np.uint8)
    cdef double[::1] u = u_arr, v = v_arr, minv = minv_arr
    cdef i64[::1] p = p_arr, way = way_arr
    cdef unsigned char[::1] used = used_arr
    cdef Py_ssize_t i, j, j0, j1, i0
    cdef double delta, cur
    with nogil:
        for i in range(1, n + 1):
            p[0] = i
            j0 = 0
            for j in range(n + 1):
                minv[j] = INFINITY
                used[j] = 0
            while True:
                used[j0] = 1
                i0 = p[j0]
                delta = INFINITY
                j1 = 0
                for j in range(1, n + 1):
                    if not used[j]:
                        cur = cost[i0 - 1, j - 1] - u[i0] - v[j]
                        if cur < minv[j]:
                            minv[j] = cur
                            way[j] = j0
                        if minv[j] < delta:
                            delta = minv[j]
                            j1 = j
                for j in range(n + 1):
                    if used[j]:
                        u[p[j]] += delta
                        v[j] -= delta
                    else:
                        minv[j] -= delta
                j0 = j1
                if p[j0] == 0:
                    break
            while True:
                j1 = way[j0]
                p[j0] = p[j1]
                j0 = j1
                if j0 == 0:
                    break
    out = np.empty(n, dtype=np.int64)
    for j in range(1, n + 1):
        out[p_arr[j] - 1] = j - 1
    return out


def auction_round(const double[:, ::1] cost, double[::1] prices, double eps,
                  const i64[::1] order):
    """One epsilon phase of a forward Gauss-Seidel auction (minimising cost).

    ``prices`` is updated in place; returns person -> object.
    """
    cdef Py_ssize_t n = cost.shape[0]
    owner_arr = np.full(n, -1, dtype=np.int64)
    assign_arr = np.full(n, -1, dtype=np.int64)
    queue_arr = np.empty(n, dtype=np.int64)
    cdef i64[::1] owner = owner_arr, assign = assign_arr, queue = queue_arr
    cdef Py_ssize_t head = 0, size = n, j, jbest
    cdef i64 i, prev
    cdef double best, second, val
    for j in range(n):
        queue[j] = order[j]
    with nogil:
        while size > 0:
            i = queue[head]
            head = (head + 1) % n
            size -= 1
            best = -INFINITY
            second = -INFINITY
            jbest = 0
            for j in range(n):
                val = -cost[i, j] - prices[j]
                if val > best:
                    second = best
                    best = val
                    jbest = j
                elif val > second:
                    second = val
            if second == -INFINITY:
                second = best
            prices[jbest] += best - second + eps
            prev = owner[jbest]
            owner[jbest] = i
            assign[i] = jbest
            if prev >= 0:
                assign[prev] = -1
                queue[(head + size) % n] = prev
                size += 1
    return assign_arr
