"""Slice sampler for a Dirichlet-process mixture of ERGMs.

One iteration updates, in order, the slice variables ``u``, the stick
fractions ``v`` (and weights ``w``), the component parameters ``theta`` and
the labels ``z``. Labels are 1-based; component ``j`` has slice level
``xi_j = exp(-j)``.

Everything that depends on the likelihood goes through a *backend*. The
default backend (:class:`McmcBackend`) uses auxiliary chain draws and
importance-sampled normalizing-constant ratios; :mod:`dpmergm.pseudo`
supplies a pseudo-likelihood backend for the same scan.

Random streams: step ``k`` of iteration ``t`` draws from
``make_rng(seed, "dpm", t, k)``. Per-network draws come out of one vector
indexed by each network's stream id, so reordering the ensemble together
with its stream ids reorders the output and nothing else.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, DomainError, DpmErgmError
from .ratio import RatioConfig, log_ratio_from_stats, make_path, segment_tasks
from .simulate import run_chain_tasks
from .stats import stats_matrix
from .streams import draw_seed, make_rng

log = logging.getLogger(__name__)

__all__ = [
    "DpmConfig",
    "SamplerState",
    "TraceRecord",
    "SamplerError",
    "xi",
    "max_component",
    "stick_weights",
    "initial_state",
    "update_u",
    "update_sticks",
    "update_thetas",
    "update_z",
    "allocation_log_weights",
    "theta_c",
    "McmcBackend",
    "run_sampler",
    "run_iims",
    "write_trace",
    "read_trace",
]


class SamplerError(DpmErgmError):
    """Iteration-level failure; ``trace`` holds the records completed so far."""

    def __init__(self, message, trace=()):
        super().__init__(message)
        self.trace = list(trace)


def _as_cov(x, d, name, problems):
    a = np.asarray(x, dtype=float)
    if a.ndim == 0:
        a = np.eye(d) * float(a)
    elif a.ndim == 1:
        a = np.diag(a)
    if a.shape != (d, d):
        problems.append((name, f"expected a ({d}, {d}) matrix, a length-{d} diagonal or a scalar"))
        return np.eye(d)
    if not np.allclose(a, a.T):
        problems.append((name, "must be symmetric"))
        return np.eye(d)
    try:
        np.linalg.cholesky(a)
    except np.linalg.LinAlgError:
        problems.append((name, "must be positive definite"))
        return np.eye(d)
    return a


@dataclass(frozen=True, eq=False)
class DpmConfig:
    """Priors, proposal and run length.

    ``sigma0`` and ``proposal_cov`` accept a full matrix, a diagonal vector
    or a scalar variance. ``theta0`` defaults to ``mu0``.
    """

    mu0: np.ndarray
    sigma0: np.ndarray
    proposal_cov: np.ndarray
    beta: float = 0.1
    ratio_mmcmh: RatioConfig = field(default_factory=lambda: RatioConfig(2, 10))
    ratio_alloc: RatioConfig = field(default_factory=lambda: RatioConfig(5, 10))
    iterations: int = 1000
    burn_in: int = 0
    seed: int = 0
    theta0: np.ndarray | None = None

    def __post_init__(self):
        problems = []
        mu0 = np.atleast_1d(np.asarray(self.mu0, dtype=float))
        d = len(mu0)
        object.__setattr__(self, "mu0", mu0)
        object.__setattr__(self, "sigma0", _as_cov(self.sigma0, d, "sigma0", problems))
        object.__setattr__(self, "proposal_cov", _as_cov(self.proposal_cov, d, "proposal_cov", problems))
        th0 = mu0.copy() if self.theta0 is None else np.atleast_1d(np.asarray(self.theta0, dtype=float))
        if th0.shape != (d,):
            problems.append(("theta0", f"expected length {d}"))
        object.__setattr__(self, "theta0", th0)
        if not (np.isfinite(self.beta) and self.beta > 0):
            problems.append(("beta", "must be a positive number"))
        if self.iterations < 1:
            problems.append(("iterations", "must be >= 1"))
        if not 0 <= self.burn_in < self.iterations:
            problems.append(("burn_in", "must satisfy 0 <= burn_in < iterations"))
        if problems:
            raise ConfigError(problems)

    @property
    def d(self):
        return len(self.mu0)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        known = {"mu0", "sigma0", "proposal_cov", "beta", "ratio_mmcmh", "ratio_alloc",
                 "iterations", "burn_in", "seed", "theta0"}
        unknown = set(d) - known
        if unknown:
            raise ConfigError([(k, "unknown key") for k in sorted(unknown)])
        missing = [k for k in ("mu0", "sigma0", "proposal_cov") if k not in d]
        if missing:
            raise ConfigError([(k, "required") for k in missing])
        kw = {k: d[k] for k in known & set(d)}
        for k in ("ratio_mmcmh", "ratio_alloc"):
            if k in kw:
                try:
                    kw[k] = RatioConfig.from_dict(kw[k])
                except ConfigError as e:
                    raise ConfigError([(f"{k}.{f}", m) for f, m in e.problems]) from None
        for k in ("iterations", "burn_in", "seed"):
            if k in kw:
                kw[k] = int(kw[k])
        return cls(**kw)

    def to_dict(self):
        return {
            "mu0": self.mu0.tolist(),
            "sigma0": self.sigma0.tolist(),
            "proposal_cov": self.proposal_cov.tolist(),
            "beta": self.beta,
            "ratio_mmcmh": self.ratio_mmcmh.to_dict(),
            "ratio_alloc": self.ratio_alloc.to_dict(),
            "iterations": self.iterations,
            "burn_in": self.burn_in,
            "seed": self.seed,
            "theta0": self.theta0.tolist(),
        }

    def prior_logpdf(self, theta):
        """Log prior density up to a constant."""
        r = np.atleast_2d(theta) - self.mu0
        q = np.einsum("ij,jk,ik->i", r, np.linalg.inv(self.sigma0), r)
        return -0.5 * q if np.ndim(theta) == 2 else float(-0.5 * q[0])


def xi(j):
    """Slice level ``exp(-j)`` of component ``j >= 1``."""
    j = np.asarray(j)
    if np.any(j < 1):
        raise DomainError("component index must be >= 1")
    return np.exp(-j.astype(float)) if j.ndim else float(np.exp(-float(j)))


def max_component(u):
    """Number of components with ``xi_j > u``, i.e. ``floor(-log u)``."""
    u = np.asarray(u, dtype=float)
    if np.any((u <= 0) | (u >= 1)):
        raise DomainError("slice variable must lie in (0, 1)")
    k = np.floor(-np.log(u)).astype(np.int64)
    return k if k.ndim else int(k)


def stick_weights(v):
    v = np.asarray(v, dtype=float)
    rest = np.concatenate([[1.0], np.cumprod(1.0 - v)[:-1]])
    return v * rest


@dataclass
class SamplerState:
    """Sampler state. Arrays over components have ``k_star`` rows."""

    u: np.ndarray
    v: np.ndarray
    w: np.ndarray
    z: np.ndarray
    theta: np.ndarray
    stream_ids: np.ndarray
    accept: np.ndarray = None

    def __post_init__(self):
        if self.accept is None:
            self.accept = np.full(len(self.v), -1, dtype=np.int64)

    @property
    def k_star(self):
        return len(self.v)

    @property
    def N(self):
        return len(self.z)

    def counts(self):
        return np.bincount(self.z - 1, minlength=self.k_star)[: self.k_star]

    def copy(self):
        return SamplerState(self.u.copy(), self.v.copy(), self.w.copy(), self.z.copy(),
                            self.theta.copy(), self.stream_ids.copy(), self.accept.copy())

    def check(self):
        """Raise ``AssertionError`` if a state invariant is broken."""
        assert np.allclose(self.w, stick_weights(self.v), rtol=0, atol=1e-15)
        assert np.all(self.u < xi(self.z))
        assert self.z.min() >= 1 and self.z.max() <= self.k_star
        assert self.theta.shape[0] == self.k_star


@dataclass
class TraceRecord:
    iteration: int
    k_star: int
    z: np.ndarray
    counts: np.ndarray
    w: np.ndarray
    theta: np.ndarray
    accept: np.ndarray

    @classmethod
    def of(cls, it, state):
        return cls(it, state.k_star, state.z.copy(), state.counts(), state.w.copy(),
                   state.theta.copy(), state.accept.copy())


def initial_state(N, cfg, stream_ids=None):
    """All networks in component 1 at ``cfg.theta0``; ``u`` and ``v`` are drawn in step 1 and 2."""
    ids = np.arange(N) if stream_ids is None else np.asarray(stream_ids, dtype=np.int64)
    if sorted(ids.tolist()) != list(range(N)):
        raise ValueError("stream_ids must be a permutation of 0..N-1")
    v = np.array([0.5])
    return SamplerState(np.full(N, 0.5 * np.exp(-1.0)), v, stick_weights(v),
                        np.ones(N, dtype=np.int64), cfg.theta0[None, :].copy(), ids)


def _per_network(draws, state):
    return draws[state.stream_ids]


def update_u(state, rng):
    """Step 1: ``u_i ~ U(0, xi(z_i))``."""
    r = _per_network(rng.random(state.N), state)
    # rng.random is in [0, 1); keep u strictly positive
    state.u = np.maximum(r, np.finfo(float).tiny) * xi(state.z)
    return state


def update_sticks(state, beta, rng):
    """Step 2: ``v_j ~ Beta(1 + a_j, beta + b_j)`` and the weight recursion."""
    a = state.counts()
    b = a[::-1].cumsum()[::-1] - a
    state.v = rng.beta(1.0 + a, beta + b)
    state.w = stick_weights(state.v)
    return state


def _members(state, j):
    """Members of component ``j`` ordered by stream id."""
    idx = np.flatnonzero(state.z == j)
    return idx[np.argsort(state.stream_ids[idx], kind="stable")]


class McmcBackend:
    """Likelihood terms from auxiliary chains and importance-sampled ratios."""

    name = "iims"

    def __init__(self, ensemble, spec, cfg, workers=1):
        self.ens = ensemble
        self.spec = spec
        self.cfg = cfg
        self.workers = workers
        self.S = stats_matrix(spec, ensemble.graphs, [ensemble.covariates_for(i) for i in range(ensemble.N)])
        self._compiled = {}
        self._adj = [np.ascontiguousarray(g.adjacency) for g in ensemble.graphs]

    def compiled(self, i):
        cov = self.ens.covariates_for(i)
        key = id(cov)
        if key not in self._compiled:
            self._compiled[key] = self.spec.compile(self.ens.n, self.ens.directed, cov)
        return self._compiled[key]

    def _tasks(self, path, start, rcfg, seeds):
        return segment_tasks(self.compiled(start), path, self._adj[start], self.S[start], rcfg,
                             self.ens.n, self.ens.directed, seeds)

    def _log_ratios(self, jobs, rcfg, rng):
        """Estimated ``log k(b) - log k(a)`` for each ``(a, b, start)`` job.

        Seeds are drawn in job order before any chain runs.
        """
        plan = []
        for a, b, start in jobs:
            path = make_path(a, b, rcfg.m1)
            seeds = [draw_seed(rng) for _ in range(rcfg.m1 + 1)]
            plan.append((path, [] if path.trivial else self._tasks(path, start, rcfg, seeds)))
        flat = [t for _, ts in plan for t in ts]
        results = iter(run_chain_tasks(flat, self.workers))
        out = []
        for path, ts in plan:
            out.append(log_ratio_from_stats(path, [next(results) for _ in ts]) if ts else 0.0)
        return np.array(out)

    def mh_log_lik_ratios(self, state, comps, proposals, rng):
        """Log-likelihood ratio ``theta -> theta'`` for each occupied component."""
        jobs, pooled, sizes = [], [], []
        for j, prop in zip(comps, proposals):
            mem = _members(state, j)
            jobs.append((state.theta[j - 1], prop, mem[0]))
            pooled.append(self.S[mem].sum(axis=0))
            sizes.append(len(mem))
        log_gamma = self._log_ratios(jobs, self.cfg.ratio_mmcmh, rng)
        return np.array([(prop - state.theta[j - 1]) @ s - n * lg
                         for j, prop, s, n, lg in zip(comps, proposals, pooled, sizes, log_gamma)])

    def default_start(self, state):
        return int(np.argmin(state.stream_ids))

    def alloc_log_lik(self, state, kmax, rng, log_ratio=None):
        """``(N, kmax)`` matrix of ``theta_j . S_i + log k(theta_c) - log k(theta_j)``."""
        th = state.theta[:kmax]
        tc = theta_c(state)
        if log_ratio is None:
            jobs = []
            for j in range(1, kmax + 1):
                mem = _members(state, j)
                start = mem[0] if len(mem) else self.default_start(state)
                jobs.append((th[j - 1], tc, start))
            lr = self._log_ratios(jobs, self.cfg.ratio_alloc, rng)
        else:
            lr = np.array([log_ratio(th[j - 1], tc, j) for j in range(1, kmax + 1)])
        return self.S @ th.T + lr[None, :]


def theta_c(state):
    """Reference parameter for allocation ratios: occupancy-weighted mean of the thetas."""
    a = state.counts().astype(float)
    return (a[:, None] * state.theta).sum(axis=0) / a.sum()


def update_thetas(state, cfg, backend, rng):
    """Step 3: random-walk Metropolis on each occupied component's theta.

    Instantiated but empty components have no likelihood term; their theta
    is redrawn from the prior. ``state.accept`` gets 1/0 for occupied
    components and -1 for the rest.
    """
    a = state.counts()
    comps = [j for j in range(1, state.k_star + 1) if a[j - 1] > 0]
    L = np.linalg.cholesky(cfg.proposal_cov)
    eps = rng.standard_normal((state.k_star, cfg.d)) @ L.T
    unif = rng.random(state.k_star)
    prior_draws = rng.multivariate_normal(cfg.mu0, cfg.sigma0, size=state.k_star)
    proposals = [state.theta[j - 1] + eps[j - 1] for j in comps]
    llr = backend.mh_log_lik_ratios(state, comps, proposals, rng)
    accept = np.full(state.k_star, -1, dtype=np.int64)
    for j, prop, ll in zip(comps, proposals, llr):
        log_alpha = cfg.prior_logpdf(prop) - cfg.prior_logpdf(state.theta[j - 1]) + ll
        if not np.isfinite(log_alpha):
            log.warning("non-finite acceptance ratio for component %d; rejecting", j)
            accept[j - 1] = 0
            continue
        ok = np.log(unif[j - 1]) < log_alpha
        accept[j - 1] = int(ok)
        if ok:
            state.theta[j - 1] = prop
    for j in range(1, state.k_star + 1):
        if a[j - 1] == 0:
            state.theta[j - 1] = prior_draws[j - 1]
    state.accept = accept
    return state


def _extend(state, kmax, cfg, rng):
    """Instantiate components ``k_star+1..kmax`` from the prior."""
    extra = kmax - state.k_star
    v_new = rng.beta(1.0, cfg.beta, size=extra)
    th_new = rng.multivariate_normal(cfg.mu0, cfg.sigma0, size=extra)
    if extra > 0:
        state.v = np.concatenate([state.v, v_new])
        state.w = stick_weights(state.v)
        state.theta = np.vstack([state.theta, th_new])
        state.accept = np.concatenate([state.accept, np.full(extra, -1, dtype=np.int64)])
    return state


def allocation_log_weights(state, loglik, K):
    """Unnormalized log allocation weights ``(N, kmax)``; ``-inf`` outside each slice."""
    kmax = loglik.shape[1]
    j = np.arange(1, kmax + 1)
    with np.errstate(divide="ignore"):
        lw = np.log(state.w[:kmax])[None, :] + j[None, :] + loglik
    return np.where(j[None, :] <= K[:, None], lw, -np.inf)


def _categorical_rows(logw, u):
    """One 1-based draw per row of ``logw`` by inversion with uniforms ``u``."""
    m = logw.max(axis=1, keepdims=True)
    p = np.exp(logw - m)
    cum = np.cumsum(p, axis=1)
    return (cum < (u * cum[:, -1])[:, None]).sum(axis=1) + 1


def update_z(state, cfg, backend, rng, log_ratio=None):
    """Step 4: draw every label from its slice-restricted full conditional.

    ``log_ratio(theta_j, theta_c, j)``, when given, replaces the estimated
    ``log k(theta_c) - log k(theta_j)``.
    """
    K = max_component(state.u)
    kmax = int(K.max())
    _extend(state, kmax, cfg, rng)
    pick = _per_network(rng.random(state.N), state)
    retry_u = _per_network(rng.random(state.N), state)
    loglik = backend.alloc_log_lik(state, kmax, rng, log_ratio)
    lw = allocation_log_weights(state, loglik, K)
    for i in np.flatnonzero(~np.isfinite(lw).any(axis=1)):
        # redraw u_i once, then give up
        state.u[i] = max(retry_u[i], np.finfo(float).tiny) * xi(state.z[i])
        lw[i] = allocation_log_weights(state, loglik[i:i + 1], np.array([max_component(state.u[i])]))[0]
        if not np.isfinite(lw[i]).any():
            raise SamplerError(f"all allocation weights vanished for network {i}")
    state.z = _categorical_rows(lw, pick).astype(np.int64)
    _truncate(state)
    return state


def _truncate(state):
    top = int(state.z.max())
    state.v = state.v[:top]
    state.w = state.w[:top]
    state.theta = state.theta[:top]
    state.accept = state.accept[:top]


def run_sampler(ensemble, spec, cfg, backend, *, stream_ids=None, on_record=None, state=None):
    """Iterate steps 1-4 ``cfg.iterations`` times, one :class:`TraceRecord` each.

    ``on_record`` is called with every record as it is produced. A failure
    raises :class:`SamplerError` carrying the partial trace.
    """
    if spec.d != cfg.d:
        raise ConfigError([("mu0", f"length {cfg.d} does not match the model dimension {spec.d}")])
    state = initial_state(ensemble.N, cfg, stream_ids) if state is None else state
    trace = []
    for it in range(cfg.iterations):
        try:
            update_u(state, make_rng(cfg.seed, "dpm", it, 1))
            update_sticks(state, cfg.beta, make_rng(cfg.seed, "dpm", it, 2))
            update_thetas(state, cfg, backend, make_rng(cfg.seed, "dpm", it, 3))
            update_z(state, cfg, backend, make_rng(cfg.seed, "dpm", it, 4))
        except SamplerError as e:
            e.trace = trace
            raise
        except Exception as e:  # noqa: BLE001
            raise SamplerError(f"iteration {it} failed: {e}", trace) from e
        rec = TraceRecord.of(it, state)
        trace.append(rec)
        if on_record is not None:
            on_record(rec)
    return trace


def run_iims(ensemble, spec, cfg, *, workers=1, stream_ids=None, on_record=None):
    """Fit with auxiliary-chain likelihood ratios."""
    backend = McmcBackend(ensemble, spec, cfg, workers)
    return run_sampler(ensemble, spec, cfg, backend, stream_ids=stream_ids, on_record=on_record)


# --------------------------------------------------------------------------
# trace files

TRACE_COLUMNS = ["iteration", "k_star", "z", "counts", "w", "theta", "accept"]


def _fmt(x):
    return format(float(x), ".17g")


def _join(values, fmt=str):
    return ";".join(fmt(v) for v in values)


def trace_row(rec):
    return [str(rec.iteration), str(rec.k_star), _join(rec.z), _join(rec.counts),
            _join(rec.w, _fmt), _join(rec.theta.ravel(), _fmt), _join(rec.accept)]


class TraceWriter:
    """Stream trace records to CSV as they are produced."""

    def __init__(self, path):
        self._fh = open(path, "w", newline="")
        self._w = csv.writer(self._fh, lineterminator="\n")
        self._w.writerow(TRACE_COLUMNS)

    def __call__(self, rec):
        self._w.writerow(trace_row(rec))
        self._fh.flush()

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def write_trace(trace, path):
    with TraceWriter(path) as w:
        for rec in trace:
            w(rec)


def read_trace(path, d=None):
    """Read a trace CSV back into records; ``d`` is inferred when omitted."""
    out = []
    with open(path, newline="") as fh:
        rows = csv.DictReader(fh)
        if rows.fieldnames != TRACE_COLUMNS:
            raise ValueError(f"{path}: not a trace file (columns {rows.fieldnames})")
        for row in rows:
            k = int(row["k_star"])

            def arr(key, typ):
                return np.array([typ(x) for x in row[key].split(";")] if row[key] else [], dtype=typ)

            theta = arr("theta", float)
            dd = d if d is not None else len(theta) // k
            out.append(TraceRecord(int(row["iteration"]), k, arr("z", np.int64), arr("counts", np.int64),
                                   arr("w", float), theta.reshape(k, dd), arr("accept", np.int64)))
    return out


def with_iterations(cfg, iterations, burn_in=0):
    """Copy of ``cfg`` with a different run length."""
    return replace(cfg, iterations=iterations, burn_in=burn_in)
