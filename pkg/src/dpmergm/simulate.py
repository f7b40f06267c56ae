"""Drawing graphs from an ERGM, plus exact enumeration for tiny graphs.

The sampler is a Metropolis chain whose proposal flips one uniformly chosen
dyad; a flip is accepted with probability ``min(1, exp(+/- theta . dS))``.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from . import _kernels as K
from .errors import CapacityError, SpecError
from .graph import Covariates, Graph, dyad_index
from .stats import compute_stats
from .streams import chain_seed

__all__ = [
    "SimConfig",
    "simulate_ergm",
    "simulate_stats",
    "ExactDistribution",
    "exact_distribution",
    "exact_log_normalizer",
    "enumerate_graphs",
    "ENUM_MAX_N",
    "ChainTask",
    "run_chain_tasks",
]

ENUM_MAX_N = {False: 5, True: 4}


@dataclass(frozen=True)
class SimConfig:
    """Chain lengths in toggle proposals.

    ``None`` for ``burn_in``/``thin`` means 20 and 10 proposals per dyad.
    """

    burn_in: int | None = None
    thin: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.burn_in is not None and self.burn_in < 0:
            raise ValueError("burn_in must be non-negative")
        if self.thin is not None and self.thin < 1:
            raise ValueError("thin must be >= 1")

    def resolve(self, n, directed):
        dyads = n * (n - 1) if directed else n * (n - 1) // 2
        burn = 20 * dyads if self.burn_in is None else self.burn_in
        thin = 10 * dyads if self.thin is None else self.thin
        return int(burn), int(thin)

    def with_seed(self, seed):
        return SimConfig(self.burn_in, self.thin, int(seed))

    def to_dict(self):
        return {"burn_in": self.burn_in, "thin": self.thin, "seed": self.seed}


def _chain(spec, theta, template, cov, count, cfg, keep_graphs, seed=None):
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (spec.d,):
        raise SpecError(f"theta has shape {theta.shape}, model needs ({spec.d},)")
    if template.n < 2:
        raise SpecError("simulation needs at least two nodes")
    compiled = spec.compile(template.n, template.directed, cov)
    burn, thin = cfg.resolve(template.n, template.directed)
    stats0 = compute_stats(spec, template, cov)
    seed = chain_seed(cfg.seed, "simulate") if seed is None else int(seed)
    return K.run_chain(
        np.ascontiguousarray(template.adjacency), compiled.directed, compiled.kinds,
        compiled.decays, compiled.nattr, compiled.eattr, theta, stats0,
        burn, thin, int(count), keep_graphs, seed,
    )


def simulate_ergm(spec, theta, template, cov=None, count=1, cfg=SimConfig(), *, seed=None):
    """Draw ``count`` graphs, starting the chain at ``template``.

    ``seed`` overrides the chain seed derived from ``cfg.seed``.
    """
    _, graphs, _ = _chain(spec, theta, template, cov, count, cfg, True, seed)
    return [Graph(a, template.directed, _trusted=True) for a in graphs]


def simulate_stats(spec, theta, template, cov=None, count=1, cfg=SimConfig(), *, seed=None):
    """Statistics of ``count`` draws, shape ``(count, d)``; no graphs are kept."""
    stats, _, _ = _chain(spec, theta, template, cov, count, cfg, False, seed)
    return stats


def simulate_draws(spec, theta, template, cov=None, count=1, cfg=SimConfig(), *, seed=None):
    """Both graphs and their statistics; returns ``(graphs, stats)``."""
    stats, graphs, _ = _chain(spec, theta, template, cov, count, cfg, True, seed)
    return [Graph(a, template.directed, _trusted=True) for a in graphs], stats


@dataclass(frozen=True)
class ChainTask:
    """One auxiliary chain: start graph, its statistics, target theta, lengths and seed."""

    compiled: object
    adj: np.ndarray
    stats0: np.ndarray
    theta: np.ndarray
    burn_in: int
    thin: int
    count: int
    seed: int

    def run(self):
        c = self.compiled
        out, _, _ = K.run_chain(self.adj, c.directed, c.kinds, c.decays, c.nattr, c.eattr,
                                np.asarray(self.theta, dtype=float), self.stats0,
                                self.burn_in, self.thin, self.count, False, self.seed)
        return out


def run_chain_tasks(tasks, workers=1):
    """Run chains, returning their statistic arrays in task order.

    Chains release the GIL, so a thread pool gives real parallelism. Seeds
    live in the tasks, so the result does not depend on ``workers``.
    """
    tasks = list(tasks)
    if workers <= 1 or len(tasks) < 2:
        return [t.run() for t in tasks]
    with ThreadPoolExecutor(max_workers=min(workers, len(tasks))) as ex:
        return list(ex.map(ChainTask.run, tasks))


# --------------------------------------------------------------------------
# exact enumeration


def enumerate_graphs(n, directed):
    """All graphs on ``n`` nodes as a ``(2**n_dyads, n, n)`` uint8 array.

    Graph ``c`` has dyad ``m`` (canonical order) present iff bit ``m`` of ``c`` is set.
    """
    if n > ENUM_MAX_N[bool(directed)]:
        raise CapacityError(
            f"exact enumeration supports n <= {ENUM_MAX_N[bool(directed)]} "
            f"({'directed' if directed else 'undirected'}), got n={n}")
    dy = dyad_index(n, directed)
    codes = np.arange(2 ** len(dy), dtype=np.int64)
    bits = ((codes[:, None] >> np.arange(len(dy))) & 1).astype(np.uint8)
    adj = np.zeros((len(codes), n, n), dtype=np.uint8)
    adj[:, dy[:, 0], dy[:, 1]] = bits
    if not directed:
        adj[:, dy[:, 1], dy[:, 0]] = bits
    return adj


def _cov_key(cov):
    if cov is None:
        return None
    return (tuple((k, v.tobytes()) for k, v in sorted(cov.node_attrs.items())),
            tuple((k, v.tobytes()) for k, v in sorted(cov.edge_attrs.items())))


_STATS_CACHE = {}


def enumeration_stats(spec, n, directed, cov=None):
    """Statistics of every graph from :func:`enumerate_graphs`, cached."""
    key = (spec, n, bool(directed), _cov_key(cov))
    if key not in _STATS_CACHE:
        adj = enumerate_graphs(n, directed)
        spec.validate(n, directed, cov if cov is not None else Covariates(n))
        _STATS_CACHE[key] = np.vstack(
            [compute_stats(spec, Graph(a, directed, _trusted=True), cov) for a in adj])
    return _STATS_CACHE[key]


@dataclass
class ExactDistribution:
    """Probability of every graph on ``n`` nodes, indexed as in :func:`enumerate_graphs`."""

    n: int
    directed: bool
    stats: np.ndarray
    probs: np.ndarray
    log_k: float

    @property
    def k(self):
        return float(np.exp(self.log_k))

    def graph(self, code):
        return Graph(enumerate_graphs(self.n, self.directed)[code], self.directed, _trusted=True)


def exact_distribution(spec, theta, n, directed=False, cov=None):
    """Exact ERGM law by summing ``exp(theta . S(y))`` over all graphs."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (spec.d,):
        raise SpecError(f"theta has shape {theta.shape}, model needs ({spec.d},)")
    stats = enumeration_stats(spec, n, directed, cov)
    logits = stats @ theta
    log_k = float(logsumexp(logits))
    return ExactDistribution(n, bool(directed), stats, np.exp(logits - log_k), log_k)


def exact_log_normalizer(spec, theta, n, directed=False, cov=None):
    """``log k(theta)``; ``theta`` may be a single vector or a ``(m, d)`` stack."""
    stats = enumeration_stats(spec, n, directed, cov)
    theta = np.asarray(theta, dtype=float)
    return logsumexp(stats @ np.atleast_2d(theta).T, axis=0) if theta.ndim == 2 else float(
        logsumexp(stats @ theta))


def graph_code(g):
    """Index of ``g`` in :func:`enumerate_graphs` order."""
    dy = dyad_index(g.n, g.directed)
    bits = g.adjacency[dy[:, 0], dy[:, 1]].astype(np.int64)
    return int((bits << np.arange(len(dy))).sum())
