import numpy as np
import pytest
from scipy.special import expit

import dpmergm.simulate as simulate_mod
from dpmergm.dpm import DpmConfig
from dpmergm.errors import SpecError
from dpmergm.graph import Covariates, Ensemble, Graph
from dpmergm.pseudo import PlCache, log_pl, log_pl_grad, run_pms
from dpmergm.stats import ModelSpec, StatTerm, change_stats

from conftest import random_graph

ET = ModelSpec.of("edges", "triangles")


def test_edges_only_equals_exact_likelihood(rng):
    spec = ModelSpec.of("edges")
    for n in (3, 7):
        g = random_graph(rng, n)
        e = g.edge_count()
        D = n * (n - 1) // 2
        for th in (-1.0, 0.4):
            assert log_pl(spec, g, None, [th]) == pytest.approx(e * th - D * np.log1p(np.exp(th)), abs=1e-10)


def test_theta_zero():
    g = Graph.from_edges(5, [(0, 1), (2, 3)], directed=True)
    spec = ModelSpec.of("edges", "mutual")
    assert log_pl(spec, g, None, [0.0, 0.0]) == pytest.approx(20 * np.log(0.5), abs=1e-12)


def test_term_by_term_product(rng):
    g = random_graph(rng, 6)
    theta = np.array([-0.7, 0.4])
    total = 0.0
    for r in range(6):
        for s in range(r + 1, 6):
            p = expit(theta @ change_stats(ET, g, None, r, s))
            total += np.log(p) if g.has_edge(r, s) else np.log1p(-p)
    assert log_pl(ET, g, None, theta) == pytest.approx(total, abs=1e-10)


def test_stable_for_large_eta(rng):
    g = random_graph(rng, 8)
    val = log_pl(ET, g, None, [-800.0, 0.0])
    assert np.isfinite(val)
    assert val == pytest.approx(-800.0 * g.edge_count(), rel=1e-12)


def test_stacked_thetas(rng):
    g = random_graph(rng, 7)
    th = np.array([[-1.0, 0.1], [0.3, -0.2], [0.0, 0.0]])
    np.testing.assert_allclose(log_pl(ET, g, None, th), [log_pl(ET, g, None, t) for t in th])


def test_gradient_finite_differences(rng):
    spec = ModelSpec([StatTerm("edges"), StatTerm("triangles"), StatTerm("gwesp", decay=0.5)])
    g = random_graph(rng, 9)
    cache = PlCache.build(spec, g)
    for _ in range(5):
        th = rng.normal(scale=0.5, size=3)
        grad = log_pl_grad(spec, g, None, th, cache)
        h = 1e-5
        fd = np.array([(log_pl(spec, g, None, th + h * e, cache) - log_pl(spec, g, None, th - h * e, cache))
                       / (2 * h) for e in np.eye(3)])
        np.testing.assert_allclose(grad, fd, rtol=1e-6, atol=1e-8)


def test_dyad_independent_with_covariates(rng):
    n = 8
    cov = Covariates(n, {"g": rng.integers(0, 2, n)}, {"x": rng.normal(size=(n, n))})
    spec = ModelSpec([StatTerm("edges"), StatTerm("nodematch", "g"), StatTerm("edgecov", "x")])
    g = random_graph(rng, n, directed=True)
    th = rng.normal(size=3)
    # exact: product of independent logistic dyads
    exact = 0.0
    for r in range(n):
        for s in range(n):
            if r != s:
                eta = th @ change_stats(spec, g, cov, r, s)
                exact += g.has_edge(r, s) * eta - np.logaddexp(0, eta)
    assert log_pl(spec, g, cov, th) == pytest.approx(exact, abs=1e-10)


def test_dimension_mismatch(rng):
    g = random_graph(rng, 5)
    with pytest.raises(SpecError):
        log_pl(ET, g, None, [0.0])
    with pytest.raises(SpecError):
        log_pl(ET, g, None, [0.0, 0.0], PlCache.build(ModelSpec.of("edges"), g))


def test_pms_never_simulates(rng, monkeypatch):
    def boom(*a, **k):
        raise AssertionError("simulation called during pseudo-likelihood fit")

    monkeypatch.setattr(simulate_mod.K, "run_chain", boom)
    ens = Ensemble([random_graph(rng, 6, p=0.2 + 0.1 * i) for i in range(5)])
    cfg = DpmConfig(mu0=[-1.0, 0.0], sigma0=4.0, proposal_cov=0.01, iterations=20)
    trace = run_pms(ens, ET, cfg)
    assert len(trace) == 20
    assert all(r.counts.sum() == 5 for r in trace)
