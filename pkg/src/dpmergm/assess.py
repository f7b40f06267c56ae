"""Post-processing of sampler traces.

Component labels are not identified across iterations, so summaries are
built on the co-clustering matrix: networks that share a component in more
than half the retained iterations form a block, and each iteration's
components are mapped to the block holding most of their members.
"""

from __future__ import annotations

import logging

import numpy as np
from scipy.sparse.csgraph import connected_components
from scipy.special import comb
from scipy.stats import gaussian_kde

from .errors import DpmErgmError
from .simulate import SimConfig, simulate_stats
from .streams import chain_seed

log = logging.getLogger(__name__)

__all__ = [
    "cocluster_matrix",
    "partition",
    "match_components",
    "group_samples",
    "summarize_trace",
    "adjusted_rand_index",
    "density_summary",
    "posterior_predictive",
    "gof_distance",
]

QUANTILES = (0.025, 0.25, 0.5, 0.75, 0.975)


def _window(trace, burn_in):
    if not 0 <= burn_in < len(trace):
        raise DpmErgmError(f"burn_in={burn_in} leaves no records in a trace of length {len(trace)}")
    return trace[burn_in:]


def cocluster_matrix(trace, burn_in=0):
    """Fraction of retained iterations with ``z_i == z_j``."""
    recs = _window(trace, burn_in)
    Z = np.stack([r.z for r in recs])
    N = Z.shape[1]
    C = np.zeros((N, N))
    for z in Z:
        C += z[:, None] == z[None, :]
    return C / len(recs)


def partition(C, threshold=0.5):
    """Blocks of the graph ``C > threshold``, labelled 1.. in order of first member."""
    _, lab = connected_components(C > threshold, directed=False)
    order = {}
    for x in lab:
        order.setdefault(x, len(order) + 1)
    return np.array([order[x] for x in lab], dtype=np.int64)


def match_components(z, blocks):
    """Map each component label in ``z`` to the block holding most of its members.

    Ties go to the lower block label.
    """
    G = blocks.max()
    out = {}
    for j in np.unique(z):
        hits = np.bincount(blocks[z == j], minlength=G + 1)[1:]
        out[int(j)] = int(np.argmax(hits)) + 1
    return out


def group_samples(trace, burn_in, blocks):
    """Per block: theta samples and accept flags, one per iteration in which the block is matched.

    When several components map to one block, the largest is used.
    """
    G = int(blocks.max())
    theta = {g: [] for g in range(1, G + 1)}
    accept = {g: [] for g in range(1, G + 1)}
    for r in _window(trace, burn_in):
        best = {}
        for j, g in match_components(r.z, blocks).items():
            size = r.counts[j - 1]
            if g not in best or size > best[g][1]:
                best[g] = (j, size)
        for g, (j, _) in best.items():
            theta[g].append(r.theta[j - 1])
            accept[g].append(r.accept[j - 1])
    d = trace[0].theta.shape[1]
    return ({g: np.array(v).reshape(-1, d) for g, v in theta.items()},
            {g: np.array(v, dtype=np.int64) for g, v in accept.items()})


def adjusted_rand_index(a, b):
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError("label vectors differ in length")
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    table = np.zeros((ai.max() + 1, bi.max() + 1))
    np.add.at(table, (ai, bi), 1)
    sum_ij = comb(table, 2).sum()
    sum_a = comb(table.sum(axis=1), 2).sum()
    sum_b = comb(table.sum(axis=0), 2).sum()
    total = comb(len(a), 2)
    expected = sum_a * sum_b / total if total else 0.0
    top = 0.5 * (sum_a + sum_b)
    if top == expected:
        return 1.0
    return float((sum_ij - expected) / (top - expected))


def density_summary(samples, points=128):
    """Gaussian kernel density on a grid, bandwidth by Silverman's rule."""
    x = np.asarray(samples, dtype=float)
    if len(x) < 2 or np.ptp(x) == 0:
        return {"grid": [float(x.mean())] if len(x) else [], "density": [], "bandwidth": 0.0}
    kde = gaussian_kde(x, bw_method="silverman")
    bw = float(kde.factor * x.std(ddof=1))
    grid = np.linspace(x.min() - 3 * bw, x.max() + 3 * bw, points)
    return {"grid": grid.tolist(), "density": kde(grid).tolist(), "bandwidth": bw}


def _freq(values):
    u, c = np.unique(values, return_counts=True)
    return {int(k): int(v) for k, v in zip(u, c)}


def summarize_trace(trace, burn_in=0, labels=None, densities=False):
    """Summary dict of the retained part of a trace.

    Reports the histogram of ``k_star`` (instantiated components) and of the
    number of occupied components, the block partition, per-network block
    frequencies, and per-block theta summaries with acceptance rates.
    """
    recs = _window(trace, burn_in)
    C = cocluster_matrix(trace, burn_in)
    blocks = partition(C)
    G = int(blocks.max())
    N = len(blocks)
    freq = np.zeros((N, G))
    for r in recs:
        m = match_components(r.z, blocks)
        freq[np.arange(N), [m[int(j)] - 1 for j in r.z]] += 1
    freq /= len(recs)
    thetas, accepts = group_samples(trace, burn_in, blocks)
    k_hist = _freq([r.k_star for r in recs])
    occ_hist = _freq([int((r.counts > 0).sum()) for r in recs])
    groups = {}
    for g in range(1, G + 1):
        th = thetas[g]
        acc = accepts[g]
        acc = acc[acc >= 0]
        entry = {
            "members": np.flatnonzero(blocks == g).tolist(),
            "n_samples": int(len(th)),
            "mean": th.mean(axis=0).tolist() if len(th) else None,
            "sd": th.std(axis=0).tolist() if len(th) else None,
            "quantiles": {str(q): np.quantile(th, q, axis=0).tolist() for q in QUANTILES} if len(th) else None,
            "acceptance_rate": float(acc.mean()) if len(acc) else None,
        }
        if labels is not None:
            entry["labels"] = list(labels)
        if densities and len(th):
            entry["density"] = [density_summary(th[:, k]) for k in range(th.shape[1])]
        groups[str(g)] = entry
    return {
        "n_retained": len(recs),
        "burn_in": burn_in,
        "k_star_hist": k_hist,
        "modal_k_star": max(k_hist, key=lambda k: (k_hist[k], -k)),
        "occupied_hist": occ_hist,
        "modal_occupied": max(occ_hist, key=lambda k: (occ_hist[k], -k)),
        "modal_assignment": blocks.tolist(),
        "assignment_freq": freq.tolist(),
        "groups": groups,
    }


def posterior_predictive(spec, source, template, cov=None, count=200, mode="from-samples",
                         cfg=SimConfig(), thin=50, seed=None):
    """Statistics of ``count`` graphs simulated from posterior theta draws.

    ``source`` is an ``(m, d)`` array of theta samples, or a single theta in
    ``from-mean`` mode. In ``from-samples`` mode every ``thin``-th sample is
    used (cycling if ``count`` exceeds them), one fresh chain per draw; in
    ``from-mean`` mode one chain at the mean theta yields all draws.
    """
    src = np.atleast_2d(np.asarray(source, dtype=float))
    root = cfg.seed if seed is None else seed
    if count == 0:
        return np.zeros((0, spec.d))
    if mode == "from-mean":
        return simulate_stats(spec, src.mean(axis=0), template, cov, count, cfg,
                              seed=chain_seed(root, "assess", 0))
    if mode != "from-samples":
        raise ValueError(f"unknown mode {mode!r}; expected 'from-samples' or 'from-mean'")
    picks = src[::thin]
    out = np.empty((count, spec.d))
    for k in range(count):
        out[k] = simulate_stats(spec, picks[k % len(picks)], template, cov, 1, cfg,
                                seed=chain_seed(root, "assess", 1, k))[0]
    return out


def gof_distance(observed, assignment, simulated):
    """Per group: sum over members of ``|S(y_i) - mean simulated S|^2``.

    ``simulated`` maps group label to an ``(m, d)`` array. Groups without
    members or without simulations are skipped.
    """
    observed = np.asarray(observed, dtype=float)
    assignment = np.asarray(assignment)
    out = {}
    for g, sims in simulated.items():
        members = assignment == g
        sims = np.asarray(sims, dtype=float)
        if not members.any() or len(sims) == 0:
            log.warning("group %s has no members or no simulated draws; skipped", g)
            continue
        out[g] = float(((observed[members] - sims.mean(axis=0)) ** 2).sum())
    return out
