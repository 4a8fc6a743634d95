"""Compiled inner loops shared by construction and search.

Everything here works on plain numpy arrays: vectors are ``(n, d)`` float32,
graphs are CSR triples ``(indptr, indices, dists)``.  Distances are always
float32 with a float32 running sum so that every caller agrees bit-for-bit
on tie-breaking.
"""

import numba
import numpy as np
from numba import njit, prange

# the parallel matrix kernel only needs a basic pool; avoids probing TBB
numba.config.THREADING_LAYER = "workqueue"

INF32 = np.float32(np.inf)


@njit(cache=True, nogil=True)
def l2(a, b):
    s = np.float32(0.0)
    for i in range(a.shape[0]):
        t = a[i] - b[i]
        s += t * t
    return np.sqrt(s)


@njit(cache=True, nogil=True)
def l2_to_rows(data, rows, q):
    out = np.empty(rows.shape[0], dtype=np.float32)
    for i in range(rows.shape[0]):
        out[i] = l2(data[rows[i]], q)
    return out


@njit(cache=True, nogil=True)
def l2_rowwise(data, a, b):
    out = np.empty(a.shape[0], dtype=np.float32)
    for i in range(a.shape[0]):
        out[i] = l2(data[a[i]], data[b[i]])
    return out


@njit(cache=True, parallel=True)
def l2_matrix(queries, base):
    nq = queries.shape[0]
    n = base.shape[0]
    out = np.empty((nq, n), dtype=np.float32)
    for i in prange(nq):
        for j in range(n):
            out[i, j] = l2(queries[i], base[j])
    return out


@njit(cache=True, nogil=True)
def before(d1, i1, d2, i2):
    """Strict (distance, id) order."""
    return d1 < d2 or (d1 == d2 and i1 < i2)


@njit(cache=True, nogil=True)
def pool_insert(ids, dists, flags, size, cap, v, d, flag):
    """Insert into a pool kept sorted by (distance, id).

    Returns the new size, or -1 when ``v`` was rejected (worse than a full
    pool's tail).  The caller guarantees ``v`` is not already present.
    """
    if size == cap and not before(d, v, dists[size - 1], ids[size - 1]):
        return -1
    pos = size if size < cap else cap - 1
    while pos > 0 and before(d, v, dists[pos - 1], ids[pos - 1]):
        if pos < cap:
            ids[pos] = ids[pos - 1]
            dists[pos] = dists[pos - 1]
            flags[pos] = flags[pos - 1]
        pos -= 1
    ids[pos] = v
    dists[pos] = d
    flags[pos] = flag
    return size + 1 if size < cap else cap


# --------------------------------------------------------------------------
# routing


@njit(cache=True, nogil=True)
def _expand(indptr, indices, data, q, x, guided, visited, stamp,
            pool_ids, pool_d, pool_f, size, cap, counters):
    """Evaluate the neighbors of ``x`` and merge them into the pool."""
    start = indptr[x]
    end = indptr[x + 1]
    xv = data[x]
    best_dim = 0
    side = np.float32(0.0)
    if guided:
        best_gap = np.float32(-1.0)
        for i in range(q.shape[0]):
            gap = abs(q[i] - xv[i])
            if gap > best_gap:
                best_gap = gap
                best_dim = i
        side = q[best_dim] - xv[best_dim]
    for e in range(start, end):
        n = indices[e]
        if visited[n] == stamp:
            continue
        if guided and e != start:
            delta = data[n, best_dim] - xv[best_dim]
            if np.sign(delta) != np.sign(side):
                continue
        visited[n] = stamp
        d = l2(data[n], q)
        counters[0] += 1
        new = pool_insert(pool_ids, pool_d, pool_f, size, cap, n, d, 0)
        if new >= 0:
            size = new
    return size


@njit(cache=True, nogil=True)
def _converge(indptr, indices, data, q, guided, max_hops, visited, stamp,
              expanded, pool_ids, pool_d, pool_f, size, cap, counters,
              exp_ids, exp_d):
    """Expand the nearest unexpanded pool entry until none remain."""
    while True:
        if max_hops >= 0 and counters[1] >= max_hops:
            return size
        pos = -1
        for i in range(size):
            if pool_f[i] == 0:
                pos = i
                break
        if pos < 0:
            return size
        x = pool_ids[pos]
        pool_f[pos] = 1
        expanded[x] = stamp
        exp_ids[counters[1]] = x
        exp_d[counters[1]] = pool_d[pos]
        counters[1] += 1
        size = _expand(indptr, indices, data, q, x, guided, visited, stamp,
                       pool_ids, pool_d, pool_f, size, cap, counters)


@njit(cache=True, nogil=True)
def best_first(indptr, indices, data, q, cap, seeds, seed_d, guided, max_hops,
               backtrack, visited, expanded, stamp):
    """Capacity-bounded best-first routing.

    ``seed_d`` holds already-known seed distances (NaN means evaluate and
    count it).  With ``guided`` set only a directional subset of each
    neighbor list is evaluated.  ``backtrack`` > 0 enables revisiting the
    unexplored edges of the second-closest expanded vertex after
    convergence, spending one unit of budget per forced expansion.

    Returns (pool ids, pool dists, ndc, hops).
    """
    n = indptr.shape[0] - 1
    pool_ids = np.empty(cap, dtype=np.int32)
    pool_d = np.empty(cap, dtype=np.float32)
    pool_f = np.zeros(cap, dtype=np.uint8)
    exp_ids = np.empty(n + 1, dtype=np.int32)
    exp_d = np.empty(n + 1, dtype=np.float32)
    counters = np.zeros(2, dtype=np.int64)  # ndc, hops
    size = 0
    for i in range(seeds.shape[0]):
        s = seeds[i]
        if np.isnan(seed_d[i]):
            if visited[s] == stamp:
                continue
            visited[s] = stamp
            d = l2(data[s], q)
            counters[0] += 1
        else:
            visited[s] = stamp
            d = seed_d[i]
        new = pool_insert(pool_ids, pool_d, pool_f, size, cap, s, d, 0)
        if new >= 0:
            size = new
    size = _converge(indptr, indices, data, q, guided, max_hops, visited,
                     stamp, expanded, pool_ids, pool_d, pool_f, size, cap,
                     counters, exp_ids, exp_d)

    budget = backtrack
    while budget > 0:
        h = counters[1]
        order = np.argsort(exp_d[:h], kind="mergesort")
        target = -1
        for r in range(1, h):
            v = exp_ids[order[r]]
            for e in range(indptr[v], indptr[v + 1]):
                u = indices[e]
                if visited[u] == stamp and expanded[u] != stamp:
                    target = u
                    break
            if target >= 0:
                break
        if target < 0:
            break
        budget -= 1
        expanded[target] = stamp
        exp_ids[h] = target
        exp_d[h] = l2(data[target], q)  # already counted when first evaluated
        counters[1] += 1
        size = _expand(indptr, indices, data, q, target, guided, visited,
                       stamp, pool_ids, pool_d, pool_f, size, cap, counters)
        size = _converge(indptr, indices, data, q, guided, -1, visited,
                         stamp, expanded, pool_ids, pool_d, pool_f, size,
                         cap, counters, exp_ids, exp_d)
    return pool_ids[:size].copy(), pool_d[:size].copy(), counters[0], counters[1]


@njit(cache=True, nogil=True)
def _heap_push(h_ids, h_d, size, v, d):
    i = size
    h_ids[i] = v
    h_d[i] = d
    while i > 0:
        p = (i - 1) // 2
        if before(h_d[i], h_ids[i], h_d[p], h_ids[p]):
            h_ids[i], h_ids[p] = h_ids[p], h_ids[i]
            h_d[i], h_d[p] = h_d[p], h_d[i]
            i = p
        else:
            break
    return size + 1


@njit(cache=True, nogil=True)
def _heap_pop(h_ids, h_d, size):
    size -= 1
    h_ids[0] = h_ids[size]
    h_d[0] = h_d[size]
    i = 0
    while True:
        l = 2 * i + 1
        r = l + 1
        m = i
        if l < size and before(h_d[l], h_ids[l], h_d[m], h_ids[m]):
            m = l
        if r < size and before(h_d[r], h_ids[r], h_d[m], h_ids[m]):
            m = r
        if m == i:
            return size
        h_ids[i], h_ids[m] = h_ids[m], h_ids[i]
        h_d[i], h_d[m] = h_d[m], h_d[i]
        i = m


@njit(cache=True, nogil=True)
def range_route(indptr, indices, data, q, k, epsilon, seeds, visited, stamp):
    """Unbounded best-first routing with a (1+epsilon)-scaled radius."""
    n = indptr.shape[0] - 1
    h_ids = np.empty(n, dtype=np.int32)
    h_d = np.empty(n, dtype=np.float32)
    hsize = 0
    res_ids = np.empty(k, dtype=np.int32)
    res_d = np.empty(k, dtype=np.float32)
    res_f = np.zeros(k, dtype=np.uint8)
    rsize = 0
    ndc = 0
    hops = 0
    scale = 1.0 + epsilon
    for i in range(seeds.shape[0]):
        s = seeds[i]
        if visited[s] == stamp:
            continue
        visited[s] = stamp
        d = l2(data[s], q)
        ndc += 1
        hsize = _heap_push(h_ids, h_d, hsize, s, d)
        new = pool_insert(res_ids, res_d, res_f, rsize, k, s, d, 0)
        if new >= 0:
            rsize = new
    while hsize > 0:
        x = h_ids[0]
        dx = h_d[0]
        radius = res_d[k - 1] if rsize == k else np.inf
        if dx > scale * radius:
            break
        hsize = _heap_pop(h_ids, h_d, hsize)
        hops += 1
        for e in range(indptr[x], indptr[x + 1]):
            m = indices[e]
            if visited[m] == stamp:
                continue
            visited[m] = stamp
            d = l2(data[m], q)
            ndc += 1
            radius = res_d[k - 1] if rsize == k else np.inf
            if d < scale * radius:
                hsize = _heap_push(h_ids, h_d, hsize, m, d)
            new = pool_insert(res_ids, res_d, res_f, rsize, k, m, d, 0)
            if new >= 0:
                rsize = new
    return res_ids[:rsize].copy(), res_d[:rsize].copy(), ndc, hops


# --------------------------------------------------------------------------
# construction


@njit(cache=True, nogil=True)
def expansion_candidates(indptr, indices, dists, data, p, mark, stamp):
    """Neighbors and neighbors' neighbors of ``p`` with distances to ``p``."""
    total = 0
    for e in range(indptr[p], indptr[p + 1]):
        u = indices[e]
        total += 1 + indptr[u + 1] - indptr[u]
    ids = np.empty(total, dtype=np.int32)
    ds = np.empty(total, dtype=np.float32)
    m = 0
    mark[p] = stamp
    for e in range(indptr[p], indptr[p + 1]):
        u = indices[e]
        if mark[u] != stamp:
            mark[u] = stamp
            ids[m] = u
            ds[m] = dists[e]
            m += 1
    for e in range(indptr[p], indptr[p + 1]):
        u = indices[e]
        for f in range(indptr[u], indptr[u + 1]):
            w = indices[f]
            if mark[w] != stamp:
                mark[w] = stamp
                ids[m] = w
                ds[m] = l2(data[w], data[p])
                m += 1
    return ids[:m].copy(), ds[:m].copy()


@njit(cache=True, nogil=True)
def rng_alpha_select(data, cand_ids, cand_d, alpha, max_degree):
    """Accept x iff alpha * d(x, y) > d(x, p) for every accepted y."""
    out = np.empty(min(max_degree, cand_ids.shape[0]), dtype=np.int64)
    m = 0
    for i in range(cand_ids.shape[0]):
        if m >= max_degree:
            break
        x = cand_ids[i]
        ok = True
        for j in range(m):
            y = cand_ids[out[j]]
            if not (alpha * l2(data[x], data[y]) > cand_d[i]):
                ok = False
                break
        if ok:
            out[m] = i
            m += 1
    return out[:m].copy()


@njit(cache=True, nogil=True)
def _angle(data, p, x, y):
    """Angle xpy in radians; zero-length legs count as pi."""
    dot = 0.0
    nx = 0.0
    ny = 0.0
    for i in range(data.shape[1]):
        a = np.float64(data[x, i]) - np.float64(data[p, i])
        b = np.float64(data[y, i]) - np.float64(data[p, i])
        dot += a * b
        nx += a * a
        ny += b * b
    if nx == 0.0 or ny == 0.0:
        return np.pi
    c = dot / np.sqrt(nx * ny)
    if c > 1.0:
        c = 1.0
    elif c < -1.0:
        c = -1.0
    return np.arccos(c)


@njit(cache=True, nogil=True)
def angle_select(data, p, cand_ids, theta, max_degree):
    out = np.empty(min(max_degree, cand_ids.shape[0]), dtype=np.int64)
    m = 0
    for i in range(cand_ids.shape[0]):
        if m >= max_degree:
            break
        x = cand_ids[i]
        ok = True
        for j in range(m):
            if _angle(data, p, x, cand_ids[out[j]]) < theta:
                ok = False
                break
        if ok:
            out[m] = i
            m += 1
    return out[:m].copy()


@njit(cache=True, nogil=True)
def anglesum_select(data, p, cand_ids, kappa):
    """Greedy: seed with the nearest, then add the angle-sum maximizer."""
    c = cand_ids.shape[0]
    budget = min(kappa, c)
    out = np.empty(budget, dtype=np.int64)
    if budget == 0:
        return out
    taken = np.zeros(c, dtype=np.uint8)
    score = np.zeros(c, dtype=np.float64)
    out[0] = 0
    taken[0] = 1
    for m in range(1, budget):
        last = cand_ids[out[m - 1]]
        best = -1
        best_s = -1.0
        for i in range(c):
            if taken[i]:
                continue
            score[i] += _angle(data, p, cand_ids[i], last)
            if score[i] > best_s:
                best_s = score[i]
                best = i
        out[m] = best
        taken[best] = 1
    return out


@njit(cache=True, nogil=True)
def kruskal(data, points):
    """Euclidean MST over ``points`` (sorted ascending); ties by edge ids."""
    m = points.shape[0]
    ne = m * (m - 1) // 2
    ea = np.empty(ne, dtype=np.int32)
    eb = np.empty(ne, dtype=np.int32)
    w = np.empty(ne, dtype=np.float32)
    t = 0
    for i in range(m):
        for j in range(i + 1, m):
            ea[t] = i
            eb[t] = j
            w[t] = l2(data[points[i]], data[points[j]])
            t += 1
    order = np.argsort(w, kind="mergesort")
    parent = np.arange(m)
    rank = np.zeros(m, dtype=np.int32)
    out_a = np.empty(max(m - 1, 0), dtype=np.int32)
    out_b = np.empty(max(m - 1, 0), dtype=np.int32)
    out_w = np.empty(max(m - 1, 0), dtype=np.float32)
    got = 0
    for oi in range(ne):
        if got == m - 1:
            break
        e = order[oi]
        ra = ea[e]
        while parent[ra] != ra:
            parent[ra] = parent[parent[ra]]
            ra = parent[ra]
        rb = eb[e]
        while parent[rb] != rb:
            parent[rb] = parent[parent[rb]]
            rb = parent[rb]
        if ra == rb:
            continue
        if rank[ra] < rank[rb]:
            ra, rb = rb, ra
        parent[rb] = ra
        if rank[ra] == rank[rb]:
            rank[ra] += 1
        out_a[got] = points[ea[e]]
        out_b[got] = points[eb[e]]
        out_w[got] = w[e]
        got += 1
    return out_a, out_b, out_w


@njit(cache=True, nogil=True)
def _pool_has(ids, size, v):
    for i in range(size):
        if ids[i] == v:
            return True
    return False


@njit(cache=True, nogil=True)
def _try_insert(pool_ids, pool_d, pool_f, sizes, v, u, d, cap):
    size = sizes[v]
    if size == cap and not before(d, u, pool_d[v, size - 1], pool_ids[v, size - 1]):
        return 0
    if _pool_has(pool_ids[v], size, u):
        return 0
    new = pool_insert(pool_ids[v], pool_d[v], pool_f[v], size, cap, u, d, 1)
    sizes[v] = new
    return 1


@njit(cache=True, nogil=True)
def _shuffle_prefix(arr, m, take):
    """Partial Fisher-Yates: leave a uniform sample of ``take`` in arr[:take]."""
    for i in range(min(take, m)):
        j = i + np.random.randint(0, m - i)
        arr[i], arr[j] = arr[j], arr[i]


@njit(cache=True, nogil=True)
def nn_descent(data, init_ids, init_d, pool_cap, n_iter, sample, reverse, seed):
    """Neighborhood-propagation refinement of a K-regular graph.

    Pools hold up to ``pool_cap`` entries sorted by (distance, id), each
    flagged new (1) or old (0).  Every iteration samples ``sample`` new
    entries per vertex plus ``reverse`` reverse entries, then joins pairs.
    Vertices are processed in id order so the result depends only on
    ``seed``.
    """
    np.random.seed(seed)
    n, k = init_ids.shape
    pool_ids = np.full((n, pool_cap), -1, dtype=np.int32)
    pool_d = np.full((n, pool_cap), INF32, dtype=np.float32)
    pool_f = np.zeros((n, pool_cap), dtype=np.uint8)
    sizes = np.zeros(n, dtype=np.int64)
    for v in range(n):
        for j in range(k):
            pool_ids[v, j] = init_ids[v, j]
            pool_d[v, j] = init_d[v, j]
            pool_f[v, j] = 1
        sizes[v] = k

    new_l = np.empty((n, sample), dtype=np.int32)
    new_c = np.zeros(n, dtype=np.int64)
    old_l = np.empty((n, pool_cap), dtype=np.int32)
    old_c = np.zeros(n, dtype=np.int64)
    rnew_l = np.empty((n, max(reverse, 1)), dtype=np.int32)
    rnew_c = np.zeros(n, dtype=np.int64)
    rnew_seen = np.zeros(n, dtype=np.int64)
    rold_l = np.empty((n, max(reverse, 1)), dtype=np.int32)
    rold_c = np.zeros(n, dtype=np.int64)
    rold_seen = np.zeros(n, dtype=np.int64)
    slots = np.empty(pool_cap, dtype=np.int64)
    mark = np.zeros(n, dtype=np.int64)
    stamp = 0
    a_buf = np.empty(sample + max(reverse, 1), dtype=np.int32)
    b_buf = np.empty(pool_cap + max(reverse, 1), dtype=np.int32)

    for _ in range(n_iter):
        for v in range(n):
            m = 0
            oc = 0
            for j in range(sizes[v]):
                if pool_f[v, j] == 1:
                    slots[m] = j
                    m += 1
                else:
                    old_l[v, oc] = pool_ids[v, j]
                    oc += 1
            _shuffle_prefix(slots, m, sample)
            nc = min(sample, m)
            for t in range(nc):
                new_l[v, t] = pool_ids[v, slots[t]]
                pool_f[v, slots[t]] = 0
            new_c[v] = nc
            old_c[v] = oc
        rnew_c[:] = 0
        rnew_seen[:] = 0
        rold_c[:] = 0
        rold_seen[:] = 0
        if reverse > 0:
            for v in range(n):
                for t in range(new_c[v]):
                    u = new_l[v, t]
                    rnew_seen[u] += 1
                    if rnew_c[u] < reverse:
                        rnew_l[u, rnew_c[u]] = v
                        rnew_c[u] += 1
                    else:
                        r = np.random.randint(0, rnew_seen[u])
                        if r < reverse:
                            rnew_l[u, r] = v
                for t in range(old_c[v]):
                    u = old_l[v, t]
                    rold_seen[u] += 1
                    if rold_c[u] < reverse:
                        rold_l[u, rold_c[u]] = v
                        rold_c[u] += 1
                    else:
                        r = np.random.randint(0, rold_seen[u])
                        if r < reverse:
                            rold_l[u, r] = v

        updates = 0
        for v in range(n):
            stamp += 1
            na = 0
            for t in range(new_c[v]):
                u = new_l[v, t]
                if mark[u] != stamp:
                    mark[u] = stamp
                    a_buf[na] = u
                    na += 1
            for t in range(rnew_c[v]):
                u = rnew_l[v, t]
                if mark[u] != stamp:
                    mark[u] = stamp
                    a_buf[na] = u
                    na += 1
            nb = 0
            for t in range(old_c[v]):
                u = old_l[v, t]
                if mark[u] != stamp:
                    mark[u] = stamp
                    b_buf[nb] = u
                    nb += 1
            for t in range(rold_c[v]):
                u = rold_l[v, t]
                if mark[u] != stamp:
                    mark[u] = stamp
                    b_buf[nb] = u
                    nb += 1
            for i in range(na):
                a = a_buf[i]
                for j in range(i + 1, na):
                    b = a_buf[j]
                    d = l2(data[a], data[b])
                    updates += _try_insert(pool_ids, pool_d, pool_f, sizes, a, b, d, pool_cap)
                    updates += _try_insert(pool_ids, pool_d, pool_f, sizes, b, a, d, pool_cap)
                for j in range(nb):
                    b = b_buf[j]
                    if a == b:
                        continue
                    d = l2(data[a], data[b])
                    updates += _try_insert(pool_ids, pool_d, pool_f, sizes, a, b, d, pool_cap)
                    updates += _try_insert(pool_ids, pool_d, pool_f, sizes, b, a, d, pool_cap)
        if updates == 0:
            break
    return pool_ids[:, :k].copy(), pool_d[:, :k].copy()
