"""Inner loops: scan updates, horizon rollouts, A*/Yen search, local path
selection, plan projection and the supervisor objective.

Everything here works on flat row-major grids: cell ``(x, y)`` (1-based) lives
at index ``(y - 1) * width + (x - 1)``. Functions are plain Python so the
numpy fallback runs the identical algorithm when numba is switched off.
"""
from __future__ import annotations

import math

import numpy as np

from ._accel import jit

# Moore neighbourhood in row-major order.
DX = np.array([-1, 0, 1, -1, 1, -1, 0, 1], dtype=np.int64)
DY = np.array([-1, -1, -1, 0, 0, 1, 1, 1], dtype=np.int64)


# --------------------------------------------------------------------------
# scan certainty


@jit
def scan_update(cert, width, height, xs, ys, radii, etas):
    """Apply one joint scan in place.

    ``xs``/``ys`` are 0-based robot columns/rows, already in canonical robot
    order. Cells outside every field are left untouched.
    """
    nr = xs.shape[0]
    if nr == 0:
        return
    x0 = width
    x1 = -1
    y0 = height
    y1 = -1
    for i in range(nr):
        r = int(math.ceil(radii[i]))
        lo = int(xs[i]) - r
        hi = int(xs[i]) + r
        if lo < x0:
            x0 = lo
        if hi > x1:
            x1 = hi
        lo = int(ys[i]) - r
        hi = int(ys[i]) + r
        if lo < y0:
            y0 = lo
        if hi > y1:
            y1 = hi
    x0 = max(x0, 0)
    y0 = max(y0, 0)
    x1 = min(x1, width - 1)
    y1 = min(y1, height - 1)
    for y in range(y0, y1 + 1):
        for x in range(x0, x1 + 1):
            s = 1.0
            hit = False
            for i in range(nr):
                dx = x - xs[i]
                dy = y - ys[i]
                r = math.sqrt(dx * dx + dy * dy)
                if r < radii[i]:
                    s *= 1.0 - (1.0 - etas[i]) * math.exp(-r)
                    hit = True
            if hit:
                k = y * width + x
                # c + (1 - s) z equals 1 - s z but never rounds below c
                cert[k] = min(cert[k] + (1.0 - s) * (1.0 - cert[k]), 1.0)


@jit
def rollout(cert, width, height, paths, offsets, lens, radii, etas):
    """Scan along every path for ``max(lens)`` steps; returns the final grid.

    A robot whose path is shorter than the horizon keeps scanning from its
    last cell.
    """
    c = cert.copy()
    nr = lens.shape[0]
    horizon = 0
    for i in range(nr):
        if lens[i] > horizon:
            horizon = lens[i]
    xs = np.empty(nr, dtype=np.float64)
    ys = np.empty(nr, dtype=np.float64)
    for t in range(horizon):
        for i in range(nr):
            step = t if t < lens[i] else lens[i] - 1
            pos = paths[offsets[i] + step]
            xs[i] = pos % width
            ys[i] = pos // width
        scan_update(c, width, height, xs, ys, radii, etas)
    return c


# --------------------------------------------------------------------------
# graph search


@jit
def _heap_push(heap, size, key):
    i = size
    heap[i] = key
    while i > 0:
        p = (i - 1) >> 1
        if heap[p] <= heap[i]:
            break
        tmp = heap[p]
        heap[p] = heap[i]
        heap[i] = tmp
        i = p
    return size + 1


@jit
def _heap_pop(heap, size):
    top = heap[0]
    size -= 1
    heap[0] = heap[size]
    i = 0
    while True:
        c = 2 * i + 1
        if c >= size:
            break
        if c + 1 < size and heap[c + 1] < heap[c]:
            c += 1
        if heap[i] <= heap[c]:
            break
        tmp = heap[c]
        heap[c] = heap[i]
        heap[i] = tmp
        i = c
    return top, size


@jit
def chebyshev(a, b, width):
    dx = abs(a % width - b % width)
    dy = abs(a // width - b // width)
    return dx if dx > dy else dy


@jit
def astar(passable, width, height, start, goal, node_block, edge_u, edge_v, n_edges):
    """Minimum-step 8-connected path from ``start`` to ``goal``.

    Open-list order is (f, h, row-major index) with the Chebyshev heuristic.
    ``node_block`` removes cells, ``edge_u[:n_edges] -> edge_v[:n_edges]``
    removes directed moves. Returns an empty array when unreachable.
    """
    n = width * height
    if not passable[start] or not passable[goal] or node_block[start] or node_block[goal]:
        return np.empty(0, dtype=np.int64)
    g = np.full(n, -1, dtype=np.int64)
    parent = np.full(n, -1, dtype=np.int64)
    closed = np.zeros(n, dtype=np.bool_)
    heap = np.empty(8 * n + 8, dtype=np.int64)
    stride = np.int64(n + 1) * np.int64(n)
    gx = goal % width
    gy = goal // width
    g[start] = 0
    h0 = chebyshev(start, goal, width)
    size = _heap_push(heap, 0, h0 * stride + h0 * n + start)
    found = False
    while size > 0:
        key, size = _heap_pop(heap, size)
        cur = key % n
        if closed[cur]:
            continue
        closed[cur] = True
        if cur == goal:
            found = True
            break
        cx = cur % width
        cy = cur // width
        for d in range(8):
            nx = cx + DX[d]
            ny = cy + DY[d]
            if nx < 0 or ny < 0 or nx >= width or ny >= height:
                continue
            nb = ny * width + nx
            if closed[nb] or not passable[nb] or node_block[nb]:
                continue
            cut = False
            for e in range(n_edges):
                if edge_u[e] == cur and edge_v[e] == nb:
                    cut = True
                    break
            if cut:
                continue
            ng = g[cur] + 1
            if g[nb] < 0 or ng < g[nb]:
                g[nb] = ng
                parent[nb] = cur
                hx = abs(nx - gx)
                hy = abs(ny - gy)
                h = hx if hx > hy else hy
                size = _heap_push(heap, size, (ng + h) * stride + h * n + nb)
    if not found:
        return np.empty(0, dtype=np.int64)
    length = g[goal] + 1
    path = np.empty(length, dtype=np.int64)
    cur = goal
    for i in range(length - 1, -1, -1):
        path[i] = cur
        cur = parent[cur]
    return path


@jit
def _same_prefix(a, b, m):
    for i in range(m):
        if a[i] != b[i]:
            return False
    return True


@jit
def _grow(buf, need):
    if need <= buf.shape[0]:
        return buf
    out = np.empty(max(need, 2 * buf.shape[0]), dtype=buf.dtype)
    out[: buf.shape[0]] = buf
    return out


@jit
def _stored(buf, offs, lens, alive, count, p):
    """True if ``p`` equals one of the first ``count`` stored (live) paths."""
    for q in range(count):
        if not alive[q] or lens[q] != p.shape[0]:
            continue
        if _same_prefix(buf[offs[q] : offs[q] + lens[q]], p, p.shape[0]):
            return True
    return False


@jit
def yen(passable, width, height, start, goal, k):
    """Up to ``k`` loopless shortest paths, first one identical to :func:`astar`.

    Candidates of equal length are accepted in the order they were generated.
    Paths come back packed as ``(cells, offsets, lengths)``.
    """
    n = width * height
    node_block = np.zeros(n, dtype=np.bool_)
    edge_u = np.empty(k + 1, dtype=np.int64)
    edge_v = np.empty(k + 1, dtype=np.int64)
    acc = np.empty(64, dtype=np.int64)
    acc_off = np.zeros(k, dtype=np.int64)
    acc_len = np.zeros(k, dtype=np.int64)
    acc_alive = np.ones(k, dtype=np.bool_)
    first = astar(passable, width, height, start, goal, node_block, edge_u, edge_v, 0)
    if first.shape[0] == 0:
        return acc[:0], acc_off[:0], acc_len[:0]
    acc = _grow(acc, first.shape[0])
    acc[: first.shape[0]] = first
    acc_len[0] = first.shape[0]
    na = 1
    used = first.shape[0]
    pool = np.empty(64, dtype=np.int64)
    pool_off = np.empty(16, dtype=np.int64)
    pool_len = np.empty(16, dtype=np.int64)
    pool_alive = np.empty(16, dtype=np.bool_)
    npool = 0
    pool_used = 0
    for _ in range(1, k):
        prev = acc[acc_off[na - 1] : acc_off[na - 1] + acc_len[na - 1]].copy()
        for j in range(prev.shape[0] - 1):
            spur = prev[j]
            node_block[:] = False
            for t in range(j):
                node_block[prev[t]] = True
            ne = 0
            for q in range(na):
                p = acc[acc_off[q] : acc_off[q] + acc_len[q]]
                if p.shape[0] > j + 1 and _same_prefix(p, prev, j + 1):
                    edge_u[ne] = p[j]
                    edge_v[ne] = p[j + 1]
                    ne += 1
            tail = astar(passable, width, height, spur, goal, node_block, edge_u, edge_v, ne)
            if tail.shape[0] == 0:
                continue
            cand = np.concatenate((prev[:j], tail))
            if _stored(acc, acc_off, acc_len, acc_alive, na, cand):
                continue
            if _stored(pool, pool_off, pool_len, pool_alive, npool, cand):
                continue
            pool = _grow(pool, pool_used + cand.shape[0])
            pool[pool_used : pool_used + cand.shape[0]] = cand
            if npool == pool_off.shape[0]:
                pool_off = _grow(pool_off, npool + 1)
                pool_len = _grow(pool_len, npool + 1)
                pool_alive = _grow(pool_alive, npool + 1)
            pool_off[npool] = pool_used
            pool_len[npool] = cand.shape[0]
            pool_alive[npool] = True
            npool += 1
            pool_used += cand.shape[0]
        best = -1
        for b in range(npool):
            if pool_alive[b] and (best < 0 or pool_len[b] < pool_len[best]):
                best = b
        if best < 0:
            break
        pool_alive[best] = False
        m = pool_len[best]
        acc = _grow(acc, used + m)
        acc[used : used + m] = pool[pool_off[best] : pool_off[best] + m]
        acc_off[na] = used
        acc_len[na] = m
        used += m
        na += 1
    return acc[:used].copy(), acc_off[:na].copy(), acc_len[:na].copy()


@jit
def path_grade(path, prio, lam, c1, c2):
    eps = 0.0
    w = 1.0
    for j in range(path.shape[0]):
        eps += w * prio[path[j]]
        w *= lam
    return -c1 * path.shape[0] + c2 * eps


@jit
def best_local_path(passable, width, height, origin, goals, prio, k, lam, c1, c2, avoid):
    """Highest-grade path over up to ``k`` shortest paths to every goal.

    Ties go to the shorter path, then to the earlier goal. Paths visiting
    ``avoid`` after their first cell are skipped (``avoid < 0`` disables).
    Falls back to staying put when nothing qualifies.
    """
    best = np.empty(1, dtype=np.int64)
    best[0] = origin
    best_g = -np.inf
    best_len = 1
    for gi in range(goals.shape[0]):
        cells, offs, lens = yen(passable, width, height, origin, goals[gi], k)
        for q in range(lens.shape[0]):
            p = cells[offs[q] : offs[q] + lens[q]]
            if avoid >= 0:
                bad = False
                for j in range(1, p.shape[0]):
                    if p[j] == avoid:
                        bad = True
                        break
                if bad:
                    continue
            g = path_grade(p, prio, lam, c1, c2)
            if g > best_g or (g == best_g and p.shape[0] < best_len):
                best_g = g
                best_len = p.shape[0]
                best = p.copy()
    if best_g == -np.inf:
        best_g = path_grade(best, prio, lam, c1, c2)
    return best, best_g


# --------------------------------------------------------------------------
# supervisor: projection, repair, objective


@jit
def round_half_away(v):
    if v >= 0.0:
        return math.floor(v + 0.5)
    return -math.floor(-v + 0.5)


@jit
def project_path(wx, wy, start, passable, width, height):
    """Turn real-valued waypoints into a valid cell path starting at ``start``.

    Waypoints are rounded to cell centres (1-based coordinates) and clipped to
    the grid; repeats are dropped, gaps are bridged with A*, and waypoints on
    known obstacles or unreachable ones are skipped.
    """
    n = width * height
    m = wx.shape[0]
    out = np.empty(n * (m + 1) + 1, dtype=np.int64)
    out[0] = start
    length = 1
    none_blocked = np.zeros(n, dtype=np.bool_)
    eu = np.empty(1, dtype=np.int64)
    for w in range(m):
        cx = int(round_half_away(wx[w]))
        cy = int(round_half_away(wy[w]))
        cx = min(max(cx, 1), width)
        cy = min(max(cy, 1), height)
        c = (cy - 1) * width + (cx - 1)
        last = out[length - 1]
        if c == last or not passable[c]:
            continue
        if chebyshev(last, c, width) == 1:
            out[length] = c
            length += 1
            continue
        seg = astar(passable, width, height, last, c, none_blocked, eu, eu, 0)
        for s in range(1, seg.shape[0]):
            out[length] = seg[s]
            length += 1
    return out[:length].copy()


@jit
def _index_of(path, start, value):
    for j in range(start, path.shape[0]):
        if path[j] == value:
            return j
    return -1


@jit
def project_plan(x, counts, starts, passable, width, height, prio, victims, lam, c1, c2):
    """Project a decision vector to one path per robot and repair shared
    victim cells.

    ``x`` holds ``(x, y)`` pairs, ``counts[i]`` of them for robot ``i``. When
    several paths pass through an observed victim's cell after their start,
    the path that loses least grade by stopping short of it is truncated,
    until only one path keeps the cell.
    Returns ``(flat_paths, offsets, lens)``.
    """
    nr = counts.shape[0]
    paths = []
    pos = 0
    for i in range(nr):
        m = counts[i]
        wx = np.empty(m, dtype=np.float64)
        wy = np.empty(m, dtype=np.float64)
        for w in range(m):
            wx[w] = x[2 * (pos + w)]
            wy[w] = x[2 * (pos + w) + 1]
        pos += m
        paths.append(project_path(wx, wy, starts[i], passable, width, height))
    for v in range(victims.shape[0]):
        cell = victims[v]
        while True:
            holders = 0
            for i in range(nr):
                if _index_of(paths[i], 1, cell) >= 0:
                    holders += 1
            if holders < 2:
                break
            pick = -1
            pick_loss = np.inf
            for i in range(nr):
                j = _index_of(paths[i], 1, cell)
                if j < 0:
                    continue
                loss = path_grade(paths[i], prio[i], lam, c1, c2) - path_grade(
                    paths[i][:j], prio[i], lam, c1, c2
                )
                if loss <= pick_loss:
                    pick_loss = loss
                    pick = i
            j = _index_of(paths[pick], 1, cell)
            paths[pick] = paths[pick][:j].copy()
    lens = np.empty(nr, dtype=np.int64)
    offsets = np.empty(nr, dtype=np.int64)
    total = 0
    for i in range(nr):
        offsets[i] = total
        lens[i] = paths[i].shape[0]
        total += lens[i]
    flat = np.empty(total, dtype=np.int64)
    for i in range(nr):
        flat[offsets[i] : offsets[i] + lens[i]] = paths[i]
    return flat, offsets, lens


@jit
def shared_victim_cells(flat, offsets, lens, victims):
    """Number of victim cells held by two or more paths past their start."""
    bad = 0
    for v in range(victims.shape[0]):
        holders = 0
        for i in range(lens.shape[0]):
            for j in range(1, lens[i]):
                if flat[offsets[i] + j] == victims[v]:
                    holders += 1
                    break
        if holders > 1:
            bad += 1
    return bad


@jit
def plan_value(flat, offsets, lens, prio, cert, width, height, radii, etas, victims,
               w1, w2, lam, c1, c2, g_norm, penalty):
    """Normalised supervisor objective for an already projected plan."""
    gsum = 0.0
    for i in range(lens.shape[0]):
        gsum += path_grade(flat[offsets[i] : offsets[i] + lens[i]], prio[i], lam, c1, c2)
    final = rollout(cert, width, height, flat, offsets, lens, radii, etas)
    j = w1 * gsum / g_norm + w2 * final.sum() / (width * height)
    if shared_victim_cells(flat, offsets, lens, victims) > 0:
        j -= penalty
    return j


@jit
def evaluate_decision(x, counts, starts, passable, width, height, prio, cert, radii, etas,
                      victims, w1, w2, lam, c1, c2, g_norm, penalty):
    flat, offsets, lens = project_plan(x, counts, starts, passable, width, height, prio,
                                       victims, lam, c1, c2)
    return plan_value(flat, offsets, lens, prio, cert, width, height, radii, etas, victims,
                      w1, w2, lam, c1, c2, g_norm, penalty)


# --------------------------------------------------------------------------
# fuzzy inference (loop form; fuzzy.py carries the vectorised numpy form)


@jit
def trapezoid(x, a, b, c, d):
    if x < a or x > d:
        return 0.0
    if b <= x <= c:
        return 1.0
    if x < b:
        if a == -np.inf:
            return 1.0
        return (x - a) / (b - a)
    if d == np.inf:
        return 1.0
    return (d - x) / (d - c)


@jit
def infer_batch(ev, hv, cv, in_mf, in_lo, in_hi, rule_terms, rule_out, out_grid, out_mu):
    """Mamdani inference for a batch of cells.

    ``in_mf[v, t]`` is the (a, b, c, d) of term ``t`` of input ``v``;
    ``rule_terms[m]`` holds the three antecedent term indices of rule ``m``
    and ``rule_out[m]`` its consequent. ``out_mu[t, s]`` is output term ``t``
    sampled on ``out_grid``. Returns NaN where no rule fires.
    """
    n = ev.shape[0]
    n_terms = in_mf.shape[1]
    n_out = out_mu.shape[0]
    ns = out_grid.shape[0]
    res = np.empty(n, dtype=np.float64)
    mu = np.empty((3, n_terms), dtype=np.float64)
    strength = np.empty(n_out, dtype=np.float64)
    for q in range(n):
        vals = (ev[q], hv[q], cv[q])
        for v in range(3):
            xv = min(max(vals[v], in_lo[v]), in_hi[v])
            for t in range(n_terms):
                mu[v, t] = trapezoid(xv, in_mf[v, t, 0], in_mf[v, t, 1], in_mf[v, t, 2],
                                     in_mf[v, t, 3])
        strength[:] = 0.0
        for m in range(rule_terms.shape[0]):
            f = min(mu[0, rule_terms[m, 0]], mu[1, rule_terms[m, 1]], mu[2, rule_terms[m, 2]])
            if f > strength[rule_out[m]]:
                strength[rule_out[m]] = f
        num = 0.0
        den = 0.0
        for s in range(ns):
            agg = 0.0
            for t in range(n_out):
                a = out_mu[t, s]
                if strength[t] < a:
                    a = strength[t]
                if a > agg:
                    agg = a
            num += out_grid[s] * agg
            den += agg
        res[q] = num / den if den > 0.0 else np.nan
    return res
