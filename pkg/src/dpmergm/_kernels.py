"""Compiled inner loops: change statistics and the single-dyad ERGM chain.

Terms are passed as parallel arrays (``kinds``, ``decays``, ``nattr``,
``eattr``) produced by :meth:`dpmergm.stats.ModelSpec.compile`. Shared
partners are always counted on the undirected skeleton.
"""

import numpy as np
from numba import njit, uint64

EDGES = 0
TRIANGLES = 1
MUTUAL = 2
NODEMATCH = 3
EDGECOV = 4
GWESP = 5
GWDSP = 6


# xoshiro256** seeded by splitmix64; numba's np.random is several times
# slower inside the toggle loop.


@njit(cache=True, nogil=True, inline="always")
def _rotl(x, k):
    return (x << uint64(k)) | (x >> uint64(64 - k))


@njit(cache=True, nogil=True)
def rng_state(seed):
    st = np.empty(4, dtype=np.uint64)
    z = uint64(seed)
    for i in range(4):
        z = z + uint64(0x9E3779B97F4A7C15)
        x = z
        x = (x ^ (x >> uint64(30))) * uint64(0xBF58476D1CE4E5B9)
        x = (x ^ (x >> uint64(27))) * uint64(0x94D049BB133111EB)
        st[i] = x ^ (x >> uint64(31))
    return st


@njit(cache=True, nogil=True, inline="always")
def _next(st):
    s0 = st[0]
    s1 = st[1]
    s2 = st[2]
    s3 = st[3]
    result = _rotl(s1 * uint64(5), 7) * uint64(9)
    t = s1 << uint64(17)
    s2 ^= s0
    s3 ^= s1
    s1 ^= s2
    s0 ^= s3
    s2 ^= t
    s3 = _rotl(s3, 45)
    st[0] = s0
    st[1] = s1
    st[2] = s2
    st[3] = s3
    return result


@njit(cache=True, nogil=True, inline="always")
def rand_below(st, m):
    """Integer in ``[0, m)`` for ``m < 2**32`` (multiply-shift)."""
    return np.int64(((_next(st) >> uint64(32)) * uint64(m)) >> uint64(32))


@njit(cache=True, nogil=True, inline="always")
def rand_uniform(st):
    return np.float64(_next(st) >> uint64(11)) * (1.0 / 9007199254740992.0)


@njit(cache=True, nogil=True)
def skeleton_and_partners(adj, directed):
    n = adj.shape[0]
    skel = np.zeros((n, n), dtype=np.int64)
    for i in range(n):
        for j in range(n):
            if adj[i, j] or (directed and adj[j, i]):
                skel[i, j] = 1
    sp = np.zeros((n, n), dtype=np.int64)
    for i in range(n):
        for j in range(i + 1, n):
            c = 0
            for t in range(n):
                c += skel[i, t] * skel[j, t]
            sp[i, j] = c
            sp[j, i] = c
    return skel, sp


@njit(cache=True, nogil=True)
def _gw_delta(adj, skel, sp, directed, r, s, decay, qpow, row, edgewise):
    n = adj.shape[0]
    total = 0.0
    if edgewise:
        total += np.exp(decay) * (1.0 - qpow[row, sp[r, s]])
    if directed and adj[s, r] == 1:
        # skeleton unchanged by toggling r->s
        return total
    on_now = skel[r, s]
    for t in range(n):
        if t == r or t == s:
            continue
        if skel[s, t]:
            k = sp[r, t] - on_now
            w = 1.0
            if edgewise:
                w = adj[r, t] + (adj[t, r] if directed else 0)
            total += w * qpow[row, k]
        if skel[r, t]:
            k = sp[s, t] - on_now
            w = 1.0
            if edgewise:
                w = adj[s, t] + (adj[t, s] if directed else 0)
            total += w * qpow[row, k]
    return total


@njit(cache=True, nogil=True, inline="always")
def change_stats_into(adj, skel, sp, directed, kinds, decays, qpow, nattr, eattr, theta, r, s, out):
    """Write dS for dyad (r, s) into ``out``; return ``theta . dS``."""
    eta = 0.0
    for k in range(kinds.shape[0]):
        kind = kinds[k]
        if kind == EDGES:
            v = 1.0
        elif kind == TRIANGLES:
            v = float(sp[r, s])
        elif kind == MUTUAL:
            v = float(adj[s, r])
        elif kind == NODEMATCH:
            v = 1.0 if nattr[k, r] == nattr[k, s] else 0.0
        elif kind == EDGECOV:
            if directed:
                v = eattr[k, r, s]
            else:
                v = eattr[k, min(r, s), max(r, s)]
        elif kind == GWESP:
            v = _gw_delta(adj, skel, sp, directed, r, s, decays[k], qpow, k, True)
        else:
            v = _gw_delta(adj, skel, sp, directed, r, s, decays[k], qpow, k, False)
        out[k] = v
        eta += theta[k] * v
    return eta


@njit(cache=True, nogil=True)
def gw_power_table(decays, n):
    """``(1 - e^-decay)^k`` for k = 0..n, one row per term."""
    tab = np.ones((decays.shape[0], n + 1))
    for k in range(decays.shape[0]):
        q = 1.0 - np.exp(-decays[k]) if decays[k] > 0 else 0.0
        for j in range(1, n + 1):
            tab[k, j] = tab[k, j - 1] * q
    return tab


@njit(cache=True, nogil=True)
def all_change_stats(adj, directed, kinds, decays, nattr, eattr, dyads):
    skel, sp = skeleton_and_partners(adj, directed)
    qpow = gw_power_table(decays, adj.shape[0])
    zero = np.zeros(kinds.shape[0])
    out = np.empty((dyads.shape[0], kinds.shape[0]))
    for m in range(dyads.shape[0]):
        change_stats_into(adj, skel, sp, directed, kinds, decays, qpow, nattr, eattr, zero,
                          dyads[m, 0], dyads[m, 1], out[m])
    return out


@njit(cache=True, nogil=True, inline="always")
def _flip_skeleton(skel, sp, r, s, sign):
    # branch-free: mispredictions dominated the branchy version
    n = skel.shape[0]
    for t in range(n):
        a = sign * skel[s, t]
        b = sign * skel[r, t]
        sp[r, t] += a
        sp[t, r] += a
        sp[s, t] += b
        sp[t, s] += b
    # t == r and t == s hit the diagonal twice; undo
    sp[r, r] -= 2 * sign * skel[s, r]
    sp[s, s] -= 2 * sign * skel[r, s]
    v = 1 if sign > 0 else 0
    skel[r, s] = v
    skel[s, r] = v


@njit(cache=True, nogil=True)
def run_chain(adj0, directed, kinds, decays, nattr, eattr, theta, stats0,
              burn_in, thin, count, keep_graphs, seed):
    """Metropolis chain of uniform single-dyad toggles.

    Draw ``c`` (1-based) is taken after ``burn_in + c * thin`` proposals.
    Returns ``(stats, graphs, accepted)``.
    """
    st = rng_state(seed)
    n = adj0.shape[0]
    d = kinds.shape[0]
    adj = adj0.copy()
    skel, sp = skeleton_and_partners(adj, directed)
    qpow = gw_power_table(decays, n)
    cur = stats0.copy()
    delta = np.empty(d)
    out = np.empty((count, d))
    graphs = np.zeros((count if keep_graphs else 0, n, n), dtype=np.uint8)
    accepted = 0
    total = burn_in + thin * count
    step = 0
    kept = 0
    while step < total:
        step += 1
        r = rand_below(st, n)
        s = rand_below(st, n - 1)
        if s >= r:
            s += 1
        # change statistics written out here rather than calling
        # change_stats_into: numba's inlining of that call costs ~8x
        eta = 0.0
        for k in range(d):
            kind = kinds[k]
            if kind == EDGES:
                v = 1.0
            elif kind == TRIANGLES:
                v = float(sp[r, s])
            elif kind == MUTUAL:
                v = float(adj[s, r])
            elif kind == NODEMATCH:
                v = 1.0 if nattr[k, r] == nattr[k, s] else 0.0
            elif kind == EDGECOV:
                if directed:
                    v = eattr[k, r, s]
                else:
                    v = eattr[k, min(r, s), max(r, s)]
            elif kind == GWESP:
                v = _gw_delta(adj, skel, sp, directed, r, s, decays[k], qpow, k, True)
            else:
                v = _gw_delta(adj, skel, sp, directed, r, s, decays[k], qpow, k, False)
            delta[k] = v
            eta += theta[k] * v
        present = adj[r, s] == 1
        log_ratio = -eta if present else eta
        if log_ratio >= 0.0 or rand_uniform(st) < np.exp(log_ratio):
            accepted += 1
            if present:
                adj[r, s] = 0
                if not directed:
                    adj[s, r] = 0
                    _flip_skeleton(skel, sp, r, s, -1)
                elif adj[s, r] == 0:
                    _flip_skeleton(skel, sp, r, s, -1)
                for k in range(d):
                    cur[k] -= delta[k]
            else:
                if directed:
                    if adj[s, r] == 0:
                        _flip_skeleton(skel, sp, r, s, 1)
                else:
                    _flip_skeleton(skel, sp, r, s, 1)
                    adj[s, r] = 1
                adj[r, s] = 1
                for k in range(d):
                    cur[k] += delta[k]
        if step > burn_in and (step - burn_in) % thin == 0:
            for k in range(d):
                out[kept, k] = cur[k]
            if keep_graphs:
                graphs[kept] = adj
            kept += 1
    return out, graphs, accepted
