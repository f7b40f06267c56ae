"""Normalizing-constant ratios k(theta') / k(theta) by importance sampling.

The move theta -> theta' is split into ``m1 + 1`` short segments along a
straight line. For each segment a fresh chain at the segment's start draws
``m2`` graphs ``z``, and the segment ratio is estimated by the sample mean of
``exp((theta_{r+1} - theta_r) . S(z))``. The estimate of the whole ratio is
the product over segments, carried here as a sum of logs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .errors import ConfigError, SpecError
from .graph import Graph
from .simulate import ENUM_MAX_N, ChainTask, SimConfig, exact_log_normalizer, run_chain_tasks
from .stats import compute_stats
from .streams import chain_seed

__all__ = [
    "RatioConfig",
    "ThetaPath",
    "make_path",
    "log_ratio_from_stats",
    "estimate_log_ratio",
    "estimate_ratio",
    "sweep_estimator",
]


@dataclass(frozen=True)
class RatioConfig:
    m1: int = 2
    m2: int = 10
    sim: SimConfig = field(default_factory=SimConfig)

    def __post_init__(self):
        problems = []
        if int(self.m1) != self.m1 or self.m1 < 0:
            problems.append(("m1", "must be a non-negative integer"))
        if int(self.m2) != self.m2 or self.m2 < 1:
            problems.append(("m2", "must be a positive integer"))
        if problems:
            raise ConfigError(problems)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        unknown = set(d) - {"m1", "m2", "burn_in", "thin"}
        if unknown:
            raise ConfigError([(k, "unknown key") for k in sorted(unknown)])
        return cls(int(d.get("m1", 2)), int(d.get("m2", 10)),
                   SimConfig(d.get("burn_in"), d.get("thin")))

    def to_dict(self):
        return {"m1": self.m1, "m2": self.m2, "burn_in": self.sim.burn_in, "thin": self.sim.thin}


@dataclass(frozen=True)
class ThetaPath:
    """``m1 + 2`` points from theta to theta', shape ``(m1 + 2, d)``."""

    points: np.ndarray

    @property
    def m1(self):
        return len(self.points) - 2

    @property
    def steps(self):
        return np.diff(self.points, axis=0)

    @property
    def trivial(self):
        return not np.any(self.steps)


def make_path(theta, theta_prime, m1):
    theta = np.asarray(theta, dtype=float)
    theta_prime = np.asarray(theta_prime, dtype=float)
    if theta.shape != theta_prime.shape or theta.ndim != 1:
        raise SpecError(f"path endpoints differ in shape: {theta.shape} vs {theta_prime.shape}")
    if m1 < 0:
        raise ValueError("m1 must be non-negative")
    t = np.arange(m1 + 2) / (m1 + 1)
    pts = theta + t[:, None] * (theta_prime - theta)
    pts[0] = theta
    pts[-1] = theta_prime
    return ThetaPath(pts)


def log_ratio_from_stats(path, seg_stats):
    """Log of the product of per-segment means, given each segment's draw statistics.

    ``seg_stats[r]`` holds the ``(m2, d)`` statistics drawn at ``path.points[r]``.
    """
    total = 0.0
    for step, st in zip(path.steps, seg_stats):
        if not np.any(step):
            continue
        x = np.asarray(st) @ step
        total += logsumexp(x) - np.log(len(x))
    return float(total)


def segment_tasks(compiled, path, adj, stats0, cfg, n, directed, seeds):
    """Chain tasks for every segment of ``path``; ``seeds`` has one seed per segment."""
    burn, thin = cfg.sim.resolve(n, directed)
    return [ChainTask(compiled, adj, stats0, path.points[r], burn, thin, cfg.m2, int(seeds[r]))
            for r in range(len(path.points) - 1)]


def estimate_log_ratio(spec, path, cov, template, cfg=RatioConfig(), *, seed=None, workers=1):
    """Log of the intermediate importance sampling estimate of k(theta') / k(theta).

    Chains start at ``template``. Exactly 0 when theta' == theta.
    """
    if path.points.shape[1] != spec.d:
        raise SpecError(f"path has dimension {path.points.shape[1]}, model needs {spec.d}")
    if path.trivial:
        return 0.0
    root = cfg.sim.seed if seed is None else seed
    compiled = spec.compile(template.n, template.directed, cov)
    adj = np.ascontiguousarray(template.adjacency)
    stats0 = compute_stats(spec, template, cov)
    seeds = [chain_seed(root, "ratio", r) for r in range(path.m1 + 1)]
    tasks = segment_tasks(compiled, path, adj, stats0, cfg, template.n, template.directed, seeds)
    return log_ratio_from_stats(path, run_chain_tasks(tasks, workers))


def estimate_ratio(spec, path, cov, template, cfg=RatioConfig(), *, seed=None, workers=1):
    return float(np.exp(estimate_log_ratio(spec, path, cov, template, cfg,
                                           seed=seed, workers=workers)))


def sweep_estimator(spec, theta, theta_prime, m1_grid, m2_grid, replications, *,
                    template=None, n=4, directed=False, cov=None, sim=SimConfig(), seed=0,
                    workers=1):
    """Ratio estimates over an ``m1 x m2 x replication`` grid.

    Returns a list of row dicts with keys m1, m2, replication, estimate and
    exact. ``exact`` is ``None`` unless the graph is small enough to enumerate.
    """
    m1_grid, m2_grid = list(m1_grid), list(m2_grid)
    if not m1_grid or not m2_grid or replications < 1:
        raise ValueError("sweep grids must be non-empty and replications >= 1")
    if template is None:
        template = Graph.empty(n, directed)
    exact = None
    if template.n <= ENUM_MAX_N[template.directed]:
        exact = float(np.exp(exact_log_normalizer(spec, theta_prime, template.n, template.directed, cov)
                             - exact_log_normalizer(spec, theta, template.n, template.directed, cov)))
    rows = []
    for m1 in m1_grid:
        path = make_path(theta, theta_prime, m1)
        for m2 in m2_grid:
            cfg = RatioConfig(m1, m2, sim)
            for rep in range(replications):
                est = estimate_ratio(spec, path, cov, template, cfg,
                                     seed=chain_seed(seed, "sweep", m1, m2, rep), workers=workers)
                rows.append({"m1": m1, "m2": m2, "replication": rep, "estimate": est, "exact": exact})
    return rows
