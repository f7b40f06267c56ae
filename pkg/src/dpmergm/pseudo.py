"""Pseudo-likelihood and the sampler that uses it in place of the likelihood.

The log pseudo-likelihood of a graph is a logistic log-likelihood over its
dyads, with the change statistics of each dyad as covariates:

    log PL(theta) = sum_dyads  y * eta - log(1 + exp(eta)),   eta = theta . dS

Undirected graphs contribute each unordered dyad once. The change
statistics depend only on the observed graph, so they are computed once.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .dpm import _members, run_sampler
from .errors import SpecError
from .graph import dyad_index
from .stats import all_change_stats

__all__ = ["PlCache", "log_pl", "log_pl_grad", "PlBackend", "run_pms"]


@dataclass(frozen=True)
class PlCache:
    """Change statistics ``(n_dyads, d)`` and dyad states of one observed graph."""

    dS: np.ndarray
    y: np.ndarray

    @classmethod
    def build(cls, spec, g, cov=None):
        dy = dyad_index(g.n, g.directed)
        dS = all_change_stats(spec, g, cov, dy)
        y = g.adjacency[dy[:, 0], dy[:, 1]].astype(float)
        dS.setflags(write=False)
        y.setflags(write=False)
        return cls(dS, y)


def _cache(spec, g, cov, cache):
    c = PlCache.build(spec, g, cov) if cache is None else cache
    if c.dS.shape[1] != spec.d:
        raise SpecError(f"cache has dimension {c.dS.shape[1]}, model needs {spec.d}")
    return c


def log_pl(spec, g, cov, theta, cache=None):
    """Log pseudo-likelihood of ``g`` at ``theta`` (one value, or one per row of a 2-D ``theta``)."""
    c = _cache(spec, g, cov, cache)
    theta = np.asarray(theta, dtype=float)
    if theta.shape[-1] != spec.d:
        raise SpecError(f"theta has length {theta.shape[-1]}, model needs {spec.d}")
    eta = c.dS @ theta.T
    val = (c.y @ eta) - np.logaddexp(0.0, eta).sum(axis=0)
    return val if theta.ndim == 2 else float(val)


def log_pl_grad(spec, g, cov, theta, cache=None):
    c = _cache(spec, g, cov, cache)
    eta = c.dS @ np.asarray(theta, dtype=float)
    return c.dS.T @ (c.y - expit(eta))


class PlBackend:
    """Likelihood terms for the shared sampler scan, from cached pseudo-likelihoods."""

    name = "pms"

    def __init__(self, ensemble, spec, cfg=None, workers=1):
        self.caches = [PlCache.build(spec, g, ensemble.covariates_for(i))
                       for i, g in enumerate(ensemble.graphs)]
        # all graphs share a dyad set, so stack for one matrix product
        self.dS = np.stack([c.dS for c in self.caches])
        self.y = np.stack([c.y for c in self.caches])

    def _lpl(self, idx, thetas):
        """``(len(idx), m)`` log PL of the selected graphs at each of ``m`` thetas."""
        th = np.atleast_2d(thetas)
        sub = self.dS[idx]
        eta = (sub.reshape(-1, sub.shape[2]) @ th.T).reshape(sub.shape[0], sub.shape[1], len(th))
        return np.einsum("id,idm->im", self.y[idx], eta) - np.logaddexp(0.0, eta).sum(axis=1)

    def mh_log_lik_ratios(self, state, comps, proposals, rng):
        out = []
        for j, prop in zip(comps, proposals):
            mem = _members(state, j)
            lp = self._lpl(mem, np.vstack([state.theta[j - 1], prop]))
            out.append(float(lp[:, 1].sum() - lp[:, 0].sum()))
        return np.array(out)

    def alloc_log_lik(self, state, kmax, rng, log_ratio=None):
        return self._lpl(np.arange(len(self.caches)), state.theta[:kmax])


def run_pms(ensemble, spec, cfg, *, workers=1, stream_ids=None, on_record=None):
    """Fit with the pseudo-likelihood; no graphs are simulated."""
    backend = PlBackend(ensemble, spec, cfg)
    return run_sampler(ensemble, spec, cfg, backend, stream_ids=stream_ids, on_record=on_record)
