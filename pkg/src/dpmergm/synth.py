"""Synthetic ensembles drawn from a finite mixture of ERGMs."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .graph import Covariates, Ensemble, Graph
from .simulate import SimConfig, simulate_ergm
from .stats import ModelSpec
from .streams import chain_seed, make_rng

__all__ = ["MixtureSpec", "generate", "draw_labels", "benchmark_two_group"]


@dataclass(frozen=True, eq=False)
class MixtureSpec:
    spec: ModelSpec
    weights: np.ndarray
    thetas: np.ndarray
    n: int
    N: int
    seed: int = 0
    directed: bool = False
    covariates: Covariates | None = None

    def __post_init__(self):
        w = np.atleast_1d(np.asarray(self.weights, dtype=float))
        th = np.atleast_2d(np.asarray(self.thetas, dtype=float))
        problems = []
        if len(w) < 1 or np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            problems.append(("weights", "must be non-negative and sum to 1"))
        if th.shape != (len(w), self.spec.d):
            problems.append(("thetas", f"expected shape ({len(w)}, {self.spec.d}), got {th.shape}"))
        if self.n < 2:
            problems.append(("n", "must be >= 2"))
        if self.N < 1:
            problems.append(("N", "must be >= 1"))
        if problems:
            raise ConfigError(problems)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "thetas", th)

    @property
    def K(self):
        return len(self.weights)


def draw_labels(ms):
    """Component labels (1-based) for all ``N`` networks."""
    rng = make_rng(ms.seed, "synth", 0)
    return rng.choice(ms.K, size=ms.N, p=ms.weights) + 1


def generate(ms, cfg=SimConfig(), workers=1):
    """Draw labels, then one graph per network from its component's ERGM.

    Chains start at the empty graph. Returns ``(ensemble, labels)``; the
    labels are also stored on the ensemble as ``truth``.
    """
    labels = draw_labels(ms)
    template = Graph.empty(ms.n, ms.directed)

    def one(i):
        th = ms.thetas[labels[i] - 1]
        return simulate_ergm(ms.spec, th, template, ms.covariates, 1, cfg,
                             seed=chain_seed(ms.seed, "synth", 1, i))[0]

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            graphs = list(ex.map(one, range(ms.N)))
    else:
        graphs = [one(i) for i in range(ms.N)]
    ens = Ensemble(graphs, ms.covariates, truth=[int(x) for x in labels])
    return ens, labels


def benchmark_two_group(seed=0, n=30, N=40):
    """The two-group edges + triangles benchmark: a sparse transitive group and a Bernoulli group."""
    return MixtureSpec(ModelSpec.of("edges", "triangles"), [0.5, 0.5],
                       [[-3.0, 0.9], [-1.0, 0.0]], n, N, seed)
