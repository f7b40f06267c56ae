"""Network statistics S(y, X) and change statistics.

Supported terms: ``edges``, ``triangles`` (undirected), ``mutual``
(directed), ``nodematch`` (node attribute), ``edgecov`` (edge attribute),
``gwesp`` and ``gwdsp`` (geometrically weighted shared partners with a
fixed decay).

Shared partners of a dyad are counted on the undirected skeleton: for a
directed graph, ``t`` is a shared partner of ``(r, s)`` if ``t`` is tied to
each of ``r`` and ``s`` in at least one direction. GWDSP sums over unordered
pairs; GWESP sums over the ties counted by ``edges`` (ordered pairs for
directed graphs).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .errors import DomainError, SpecError
from .graph import Covariates, dyad_index

__all__ = [
    "StatTerm",
    "ModelSpec",
    "compute_stats",
    "change_stats",
    "all_change_stats",
    "gw_weights",
]

_KIND_CODES = {
    "edges": K.EDGES,
    "triangles": K.TRIANGLES,
    "mutual": K.MUTUAL,
    "nodematch": K.NODEMATCH,
    "edgecov": K.EDGECOV,
    "gwesp": K.GWESP,
    "gwdsp": K.GWDSP,
}


@dataclass(frozen=True)
class StatTerm:
    kind: str
    attr: str | None = None
    decay: float | None = None

    def __post_init__(self):
        if self.kind not in _KIND_CODES:
            raise SpecError(f"unknown statistic {self.kind!r}; expected one of {sorted(_KIND_CODES)}")
        if self.kind in ("nodematch", "edgecov") and not self.attr:
            raise SpecError(f"{self.kind} needs an 'attr'")
        if self.kind in ("gwesp", "gwdsp"):
            if self.decay is None or not np.isfinite(self.decay) or self.decay <= 0:
                raise SpecError(f"{self.kind} needs a finite positive 'decay', got {self.decay!r}")

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        unknown = set(d) - {"kind", "attr", "decay"}
        if unknown:
            raise SpecError(f"unknown term keys {sorted(unknown)}")
        if "kind" not in d:
            raise SpecError("term is missing 'kind'")
        return cls(d["kind"], d.get("attr"), None if d.get("decay") is None else float(d["decay"]))

    def to_dict(self):
        out = {"kind": self.kind}
        if self.attr is not None:
            out["attr"] = self.attr
        if self.decay is not None:
            out["decay"] = self.decay
        return out

    @property
    def label(self):
        if self.attr:
            return f"{self.kind}.{self.attr}"
        if self.decay is not None:
            return f"{self.kind}.{self.decay:g}"
        return self.kind


class ModelSpec:
    """Ordered statistic terms; the order fixes the coordinates of S and theta."""

    def __init__(self, terms):
        terms = tuple(t if isinstance(t, StatTerm) else StatTerm.from_dict(t) for t in terms)
        if not terms:
            raise SpecError("a model needs at least one term")
        self.terms = terms

    @classmethod
    def of(cls, *kinds):
        """Shorthand for attribute-free terms, e.g. ``ModelSpec.of("edges", "triangles")``."""
        return cls([StatTerm(k) for k in kinds])

    @property
    def d(self):
        return len(self.terms)

    @property
    def labels(self):
        return [t.label for t in self.terms]

    @property
    def dyad_independent(self):
        return all(t.kind in ("edges", "nodematch", "edgecov") for t in self.terms)

    def to_list(self):
        return [t.to_dict() for t in self.terms]

    def __eq__(self, other):
        return isinstance(other, ModelSpec) and self.terms == other.terms

    def __hash__(self):
        return hash(self.terms)

    def __repr__(self):
        return f"ModelSpec({', '.join(self.labels)})"

    def validate(self, n, directed, cov=None):
        cov = cov if cov is not None else Covariates(n)
        if cov.n != n:
            raise SpecError(f"covariates are for n={cov.n}, graph has n={n}")
        for t in self.terms:
            if t.kind == "mutual" and not directed:
                raise SpecError("'mutual' is only defined for directed graphs")
            if t.kind == "triangles" and directed:
                raise SpecError("'triangles' is only defined for undirected graphs")
            if t.kind == "nodematch" and t.attr not in cov.node_attrs:
                raise SpecError(f"nodematch attribute {t.attr!r} not found among node attributes")
            if t.kind == "edgecov" and t.attr not in cov.edge_attrs:
                raise SpecError(f"edgecov attribute {t.attr!r} not found among edge attributes")

    def compile(self, n, directed, cov=None):
        """Array form consumed by the compiled kernels."""
        cov = cov if cov is not None else Covariates(n)
        self.validate(n, directed, cov)
        d = self.d
        kinds = np.array([_KIND_CODES[t.kind] for t in self.terms], dtype=np.int64)
        decays = np.array([t.decay or 0.0 for t in self.terms], dtype=float)
        nattr = np.zeros((d, n))
        eattr = np.zeros((d, n, n))
        for k, t in enumerate(self.terms):
            if t.kind == "nodematch":
                nattr[k] = cov.node_attrs[t.attr]
            elif t.kind == "edgecov":
                eattr[k] = cov.edge_attrs[t.attr]
        return CompiledSpec(kinds, decays, nattr, eattr, bool(directed))


@dataclass(frozen=True)
class CompiledSpec:
    kinds: np.ndarray
    decays: np.ndarray
    nattr: np.ndarray
    eattr: np.ndarray
    directed: bool


def gw_weights(k, decay):
    """Geometric shared-partner weight ``e^decay * (1 - (1 - e^-decay)^k)``; zero at k=0."""
    k = np.asarray(k, dtype=float)
    return np.exp(decay) * (1.0 - (1.0 - np.exp(-decay)) ** k)


def _check_graph(spec, g, cov):
    if cov is not None and cov.n != g.n:
        raise SpecError(f"covariates are for n={cov.n}, graph has n={g.n}")


def compute_stats(spec, g, cov=None):
    """Statistic vector of ``g`` in the coordinate order of ``spec``."""
    _check_graph(spec, g, cov)
    cov = cov if cov is not None else Covariates(g.n)
    spec.validate(g.n, g.directed, cov)
    a = g.adjacency.astype(np.int64)
    n = g.n
    upper = np.triu(np.ones((n, n), dtype=bool), 1)
    mask = ~np.eye(n, dtype=bool) if g.directed else upper
    skel = (a | a.T) if g.directed else a
    sp = skel @ skel
    out = np.empty(spec.d)
    for k, t in enumerate(spec.terms):
        if t.kind == "edges":
            out[k] = a[mask].sum()
        elif t.kind == "triangles":
            out[k] = (a * sp)[upper].sum() / 3
        elif t.kind == "mutual":
            out[k] = (a * a.T)[upper].sum()
        elif t.kind == "nodematch":
            x = cov.node_attrs[t.attr]
            out[k] = (a * (x[:, None] == x[None, :]))[mask].sum()
        elif t.kind == "edgecov":
            out[k] = (a * cov.edge_attrs[t.attr])[mask].sum()
        elif t.kind == "gwesp":
            out[k] = (a * gw_weights(sp, t.decay))[mask].sum()
        elif t.kind == "gwdsp":
            out[k] = gw_weights(sp, t.decay)[upper].sum()
    return out


def change_stats(spec, g, cov, r, s):
    """``S(g with (r,s) on) - S(g with (r,s) off)``, whatever the current state of (r,s)."""
    if r == s:
        raise DomainError("change statistics are undefined for r == s")
    if not (0 <= r < g.n and 0 <= s < g.n):
        raise DomainError(f"dyad ({r}, {s}) out of range for n={g.n}")
    _check_graph(spec, g, cov)
    c = spec.compile(g.n, g.directed, cov)
    adj = np.ascontiguousarray(g.adjacency)
    return K.all_change_stats(adj, c.directed, c.kinds, c.decays, c.nattr, c.eattr,
                              np.array([[r, s]], dtype=np.int64))[0]


def all_change_stats(spec, g, cov=None, dyads=None):
    """Change statistics for every dyad, shape ``(n_dyads, d)`` in canonical dyad order."""
    _check_graph(spec, g, cov)
    c = spec.compile(g.n, g.directed, cov)
    if dyads is None:
        dyads = dyad_index(g.n, g.directed)
    return K.all_change_stats(np.ascontiguousarray(g.adjacency), c.directed, c.kinds, c.decays,
                              c.nattr, c.eattr, np.asarray(dyads, dtype=np.int64))


def stats_matrix(spec, graphs, cov=None):
    """Stack :func:`compute_stats` over graphs (per-graph covariates allowed as a list)."""
    graphs = list(graphs)
    covs = cov if isinstance(cov, list) else [cov] * len(graphs)
    if not graphs:
        return np.zeros((0, spec.d))
    return np.vstack([compute_stats(spec, g, c) for g, c in zip(graphs, covs)])
