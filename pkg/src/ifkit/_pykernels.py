"""Pure-Python versions of the compiled kernels in ``_ckernels.pyx``.

Signatures and results match the compiled module exactly; they are used when
the extension is unavailable or ``IFK_PURE_PYTHON`` is set.
"""

import math

import numpy as np


def _box_d2(lo, hi, qx, qy, qz):
    d2 = 0.0
    for q, a, b in ((qx, lo[0], hi[0]), (qy, lo[1], hi[1]), (qz, lo[2], hi[2])):
        t = a - q
        if t > 0:
            d2 += t * t
        else:
            t = q - b
            if t > 0:
                d2 += t * t
    return d2


def knn_query(pts, perm, start, end, left, right, lo, hi, queries, k):
    nq = queries.shape[0]
    out_idx = np.empty((nq, k), dtype=np.int64)
    out_d = np.empty((nq, k), dtype=np.float64)
    pl = pts.tolist()
    perm_l = perm.tolist()
    start_l, end_l = start.tolist(), end.tolist()
    left_l, right_l = left.tolist(), right.tolist()
    lo_l, hi_l = lo.tolist(), hi.tolist()
    for q, (qx, qy, qz) in enumerate(queries.tolist()):
        best = []  # sorted list of (d2, original index)
        stack = [0]
        while stack:
            node = stack.pop()
            if len(best) == k and _box_d2(lo_l[node], hi_l[node], qx, qy, qz) > best[-1][0]:
                continue
            if left_l[node] < 0:
                for p in range(start_l[node], end_l[node]):
                    x, y, z = pl[p]
                    dx = x - qx
                    dy = y - qy
                    dz = z - qz
                    cand = (dx * dx + dy * dy + dz * dz, perm_l[p])
                    if len(best) == k:
                        if not cand < best[-1]:
                            continue
                        best.pop()
                    pos = len(best)
                    while pos > 0 and cand < best[pos - 1]:
                        pos -= 1
                    best.insert(pos, cand)
                continue
            c1, c2 = left_l[node], right_l[node]
            b1 = _box_d2(lo_l[c1], hi_l[c1], qx, qy, qz)
            b2 = _box_d2(lo_l[c2], hi_l[c2], qx, qy, qz)
            if b1 <= b2:
                stack.extend((c2, c1))
            else:
                stack.extend((c1, c2))
        for j, (d2, idx) in enumerate(best):
            out_idx[q, j] = idx
            out_d[q, j] = math.sqrt(d2)
    return out_idx, out_d


def point_tri_d2(p, a, b, c):
    px, py, pz = p
    ax, ay, az = a
    abx, aby, abz = b[0] - ax, b[1] - ay, b[2] - az
    acx, acy, acz = c[0] - ax, c[1] - ay, c[2] - az
    apx, apy, apz = px - ax, py - ay, pz - az
    d1 = abx * apx + aby * apy + abz * apz
    d2 = acx * apx + acy * apy + acz * apz
    if d1 <= 0 and d2 <= 0:
        return apx * apx + apy * apy + apz * apz
    bpx, bpy, bpz = px - b[0], py - b[1], pz - b[2]
    d3 = abx * bpx + aby * bpy + abz * bpz
    d4 = acx * bpx + acy * bpy + acz * bpz
    if d3 >= 0 and d4 <= d3:
        return bpx * bpx + bpy * bpy + bpz * bpz
    vc = d1 * d4 - d3 * d2
    if vc <= 0 and d1 >= 0 and d3 <= 0:
        v = d1 / (d1 - d3)
        rx, ry, rz = apx - v * abx, apy - v * aby, apz - v * abz
        return rx * rx + ry * ry + rz * rz
    cpx, cpy, cpz = px - c[0], py - c[1], pz - c[2]
    d5 = abx * cpx + aby * cpy + abz * cpz
    d6 = acx * cpx + acy * cpy + acz * cpz
    if d6 >= 0 and d5 <= d6:
        return cpx * cpx + cpy * cpy + cpz * cpz
    vb = d5 * d2 - d1 * d6
    if vb <= 0 and d2 >= 0 and d6 <= 0:
        w = d2 / (d2 - d6)
        rx, ry, rz = apx - w * acx, apy - w * acy, apz - w * acz
        return rx * rx + ry * ry + rz * rz
    va = d3 * d6 - d5 * d4
    if va <= 0 and (d4 - d3) >= 0 and (d5 - d6) >= 0:
        w = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        rx = bpx - w * (c[0] - b[0])
        ry = bpy - w * (c[1] - b[1])
        rz = bpz - w * (c[2] - b[2])
        return rx * rx + ry * ry + rz * rz
    denom = 1.0 / (va + vb + vc)
    v = vb * denom
    w = vc * denom
    rx = apx - abx * v - acx * w
    ry = apy - aby * v - acy * w
    rz = apz - abz * v - acz * w
    return rx * rx + ry * ry + rz * rz


def mesh_closest(ta, tb, tc, start, end, left, right, lo, hi, queries):
    nq = queries.shape[0]
    out_d = np.empty(nq, dtype=np.float64)
    out_t = np.empty(nq, dtype=np.int64)
    A, B, C = ta.tolist(), tb.tolist(), tc.tolist()
    lo_l, hi_l = lo.tolist(), hi.tolist()
    for q, qp in enumerate(queries.tolist()):
        qx, qy, qz = qp
        best, best_t = math.inf, -1
        stack = [0]
        while stack:
            node = stack.pop()
            if _box_d2(lo_l[node], hi_l[node], qx, qy, qz) > best:
                continue
            if left[node] < 0:
                for t in range(start[node], end[node]):
                    d2 = point_tri_d2(qp, A[t], B[t], C[t])
                    if d2 < best:
                        best, best_t = d2, t
                continue
            c1, c2 = int(left[node]), int(right[node])
            b1 = _box_d2(lo_l[c1], hi_l[c1], qx, qy, qz)
            b2 = _box_d2(lo_l[c2], hi_l[c2], qx, qy, qz)
            stack.extend((c2, c1) if b1 <= b2 else (c1, c2))
        out_d[q] = math.sqrt(best)
        out_t[q] = best_t
    return out_d, out_t


def _ray_box(lo, hi, o, inv):
    t0, t1 = 0.0, math.inf
    for ax in range(3):
        a = (lo[ax] - o[ax]) * inv[ax]
        b = (hi[ax] - o[ax]) * inv[ax]
        if a > b:
            a, b = b, a
        if a > t0:
            t0 = a
        if b < t1:
            t1 = b
    return t0 <= t1 * (1.0 + 1e-12) + 1e-12


def mesh_ray_crossings(ta, tb, tc, start, end, left, right, lo, hi, origins, dirs, tol):
    nq = origins.shape[0]
    out_n = np.zeros(nq, dtype=np.int64)
    out_bad = np.zeros(nq, dtype=np.uint8)
    A, B, C = ta.tolist(), tb.tolist(), tc.tolist()
    lo_l, hi_l = lo.tolist(), hi.tolist()
    for q in range(nq):
        o = origins[q].tolist()
        dx, dy, dz = dirs[q].tolist()
        inv = [1.0 / d if d != 0 else math.inf for d in (dx, dy, dz)]
        count, bad = 0, False
        stack = [0]
        while stack and not bad:
            node = stack.pop()
            if not _ray_box(lo_l[node], hi_l[node], o, inv):
                continue
            if left[node] >= 0:
                stack.extend((int(left[node]), int(right[node])))
                continue
            for t in range(start[node], end[node]):
                a, b, c = A[t], B[t], C[t]
                e1 = (b[0] - a[0], b[1] - a[1], b[2] - a[2])
                e2 = (c[0] - a[0], c[1] - a[1], c[2] - a[2])
                px = dy * e2[2] - dz * e2[1]
                py = dz * e2[0] - dx * e2[2]
                pz = dx * e2[1] - dy * e2[0]
                det = e1[0] * px + e1[1] * py + e1[2] * pz
                if abs(det) < 1e-300:
                    continue
                inv_det = 1.0 / det
                sx, sy, sz = o[0] - a[0], o[1] - a[1], o[2] - a[2]
                u = (sx * px + sy * py + sz * pz) * inv_det
                if u < -tol or u > 1.0 + tol:
                    continue
                qvx = sy * e1[2] - sz * e1[1]
                qvy = sz * e1[0] - sx * e1[2]
                qvz = sx * e1[1] - sy * e1[0]
                v = (dx * qvx + dy * qvy + dz * qvz) * inv_det
                if v < -tol or u + v > 1.0 + tol:
                    continue
                tt = (e2[0] * qvx + e2[1] * qvy + e2[2] * qvz) * inv_det
                if tt < -tol:
                    continue
                if abs(tt) <= tol or u <= tol or v <= tol or u + v >= 1.0 - tol:
                    bad = True
                    break
                count += 1
        out_n[q] = count
        out_bad[q] = bad
    return out_n, out_bad


def hungarian(cost):
    n = cost.shape[0]
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    p = np.zeros(n + 1, dtype=np.int64)
    way = np.zeros(n + 1, dtype=np.int64)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = np.full(n + 1, np.inf)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = p[j0]
            free = ~used[1:]
            cur = cost[i0 - 1] - u[i0] - v[1:]
            better = free & (cur < minv[1:])
            minv[1:][better] = cur[better]
            way[1:][better] = j0
            masked = np.where(free, minv[1:], np.inf)
            j1 = int(np.argmin(masked)) + 1
            delta = masked[j1 - 1]
            u[p[used]] += delta
            v[used] -= delta
            minv[~used] -= delta
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
    out[p[1:] - 1] = np.arange(n)
    return out


def auction_round(cost, prices, eps, order):
    n = cost.shape[0]
    owner = [-1] * n
    assign = np.full(n, -1, dtype=np.int64)
    queue = list(order.tolist())
    head = 0
    while head < len(queue):
        i = queue[head]
        head += 1
        vals = -cost[i] - prices
        jbest = int(np.argmax(vals))
        best = vals[jbest]
        if n > 1:
            vals[jbest] = -np.inf
            second = vals.max()
        else:
            second = best
        prices[jbest] += best - second + eps
        prev = owner[jbest]
        owner[jbest] = i
        assign[i] = jbest
        if prev >= 0:
            assign[prev] = -1
            queue.append(prev)
    return assign
