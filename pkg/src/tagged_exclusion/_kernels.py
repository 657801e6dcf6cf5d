"""Compiled kinetic Monte Carlo core.

Configurations are kept in the lab frame together with the tagged
particle's lab index; the reference frame is recovered by rolling the
array so the tag sits at the origin.  Sites are flattened to integers
and neighbours come from precomputed tables, so the same kernel serves
d=1 and d=2.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def _fenwick_build(w, tree):
    n = w.shape[0]
    for i in range(n + 1):
        tree[i] = 0.0
    for i in range(n):
        k = i + 1
        tree[k] += w[i]
        parent = k + (k & -k)
        if parent <= n:
            tree[parent] += tree[k]


@njit(cache=True)
def _fenwick_add(tree, i, delta):
    n = tree.shape[0] - 1
    k = i + 1
    while k <= n:
        tree[k] += delta
        k += k & -k


@njit(cache=True)
def _fenwick_find(tree, u, top):
    # smallest index whose prefix sum exceeds u
    n = tree.shape[0] - 1
    pos = 0
    step = top
    while step > 0:
        nxt = pos + step
        if nxt <= n and tree[nxt] <= u:
            pos = nxt
            u -= tree[nxt]
        step >>= 1
    return pos, u


@njit(cache=True)
def _site_rate(occ, nbr, rates, i):
    if occ[i] == 0:
        return 0.0
    r = 0.0
    for k in range(rates.shape[0]):
        if occ[nbr[i, k]] == 0:
            r += rates[k]
    return r


@njit(cache=True)
def run_trial(occ, tag, nbr, back, vec, rates, t_grid, seed,
              out_x, out_n, out_a, out_ix, ev_t, ev_kind, ev_a, ev_b, ev_tag):
    """Simulate one trajectory in place.

    ``occ`` is modified to the final lab configuration.  Returns the final
    tag index and the number of events recorded in the event buffers
    (recording stops silently when the buffers are full; the count is
    still returned so callers can detect truncation).
    """
    np.random.seed(seed)
    n_sites, K = nbr.shape
    d = vec.shape[1]
    w = np.zeros(n_sites)
    for i in range(n_sites):
        w[i] = _site_rate(occ, nbr, rates, i)
    tree = np.zeros(n_sites + 1)
    _fenwick_build(w, tree)
    top = 1
    while top * 2 <= n_sites:
        top *= 2

    x = np.zeros(d)
    nj = np.zeros(K)
    aj = np.zeros(K)
    ix = np.zeros(d)
    t = 0.0
    g = 0
    T = t_grid.shape[0]
    cap = ev_t.shape[0]
    n_ev = 0
    total = 0.0
    for i in range(n_sites):
        total += w[i]
    while g < T:
        if total <= 1e-300:
            dt = np.inf
        else:
            dt = np.random.exponential(1.0 / total)
        t_next = t + dt
        while g < T and t_grid[g] <= t_next:
            h = t_grid[g] - t
            for c in range(d):
                out_x[g, c] = x[c]
                out_ix[g, c] = ix[c] + x[c] * h
            for k in range(K):
                free = 1.0 - occ[nbr[tag, k]]
                out_n[g, k] = nj[k]
                out_a[g, k] = aj[k] + rates[k] * free * h
            g += 1
        if g >= T:
            break
        for k in range(K):
            aj[k] += rates[k] * (1.0 - occ[nbr[tag, k]]) * dt
        for c in range(d):
            ix[c] += x[c] * dt
        t = t_next

        # pick the source site, then the jump
        site = -1
        rem = 0.0
        for attempt in range(2):
            u = np.random.random() * total
            pos, rem = _fenwick_find(tree, u, top)
            if pos < n_sites and w[pos] > 0.0:
                site = pos
                break
            # rounding drift in the tree: rebuild and retry
            _fenwick_build(w, tree)
            total = 0.0
            for i in range(n_sites):
                total += w[i]
        if site < 0:
            # fall back to an explicit scan
            u = np.random.random() * total
            acc = 0.0
            for i in range(n_sites):
                acc += w[i]
                if acc > u and w[i] > 0.0:
                    site = i
                    rem = u - (acc - w[i])
                    break
        kk = -1
        last = -1
        acc = 0.0
        for k in range(K):
            if occ[nbr[site, k]] == 0:
                last = k
                acc += rates[k]
                if rem < acc:
                    kk = k
                    break
        if kk < 0:
            kk = last
        target = nbr[site, kk]

        if n_ev < cap:
            ev_t[n_ev] = t
            ev_tag[n_ev] = tag
            ev_a[n_ev] = site
            if site == tag:
                ev_kind[n_ev] = 1
                ev_b[n_ev] = kk
            else:
                ev_kind[n_ev] = 0
                ev_b[n_ev] = target
        n_ev += 1

        occ[site] = 0
        occ[target] = 1
        if site == tag:
            tag = target
            nj[kk] += 1.0
            for c in range(d):
                x[c] += vec[kk, c]

        # refresh rates touched by the move
        for s in (site, target):
            for k in range(K + 1):
                if k == K:
                    v = s
                else:
                    v = back[s, k]
                new = _site_rate(occ, nbr, rates, v)
                delta = new - w[v]
                if delta != 0.0:
                    w[v] = new
                    _fenwick_add(tree, v, delta)
                    total += delta
        if total < 0.0:
            total = 0.0
    return tag, n_ev


@njit(cache=True)
def run_batch(occ0, tag0, nbr, back, vec, rates, t_grid, seeds,
              out_x, out_n, out_a, out_ix, final_occ, final_tag):
    """Independent trials from given initial configurations, no event log."""
    ev_t = np.zeros(0)
    ev_i = np.zeros(0, dtype=np.int64)
    n_trials = seeds.shape[0]
    for r in range(n_trials):
        occ = occ0[r].copy()
        tag, _ = run_trial(occ, tag0[r], nbr, back, vec, rates, t_grid, seeds[r],
                           out_x[r], out_n[r], out_a[r], out_ix[r],
                           ev_t, ev_i, ev_i, ev_i, ev_i)
        final_occ[r, :] = occ
        final_tag[r] = tag
