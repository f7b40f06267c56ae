import numpy as np
import pytest

from dpmergm.errors import ConfigError, SpecError
from dpmergm.graph import Graph
from dpmergm.ratio import (RatioConfig, estimate_log_ratio, estimate_ratio, log_ratio_from_stats,
                           make_path, sweep_estimator)
from dpmergm.simulate import exact_log_normalizer
from dpmergm.stats import ModelSpec

ET = ModelSpec.of("edges", "triangles")
EDGES = ModelSpec.of("edges")


def test_path_points():
    p = make_path([0.0, 0.0], [3.0, -3.0], 2)
    np.testing.assert_allclose(p.points, [[0, 0], [1, -1], [2, -2], [3, -3]])
    assert p.m1 == 2
    np.testing.assert_allclose(p.steps, [[1, -1]] * 3)
    direct = make_path([1.0], [2.0], 0)
    np.testing.assert_allclose(direct.points, [[1.0], [2.0]])
    assert make_path([1.0, 2.0], [1.0, 2.0], 4).trivial
    with pytest.raises(SpecError):
        make_path([0.0], [0.0, 1.0], 1)


def test_identical_endpoints_give_exactly_one():
    path = make_path([-1.0, 0.3], [-1.0, 0.3], 3)
    assert estimate_log_ratio(ET, path, None, Graph.empty(5)) == 0.0
    assert estimate_ratio(ET, path, None, Graph.empty(5)) == 1.0


def test_log_ratio_from_stats_by_hand():
    path = make_path([0.0], [1.0], 1)
    seg = [np.array([[0.0], [1.0]]), np.array([[2.0], [2.0]])]
    want = np.log((1 + np.exp(0.5)) / 2) + 1.0
    assert log_ratio_from_stats(path, seg) == pytest.approx(want, abs=1e-14)


def test_edges_closed_form():
    # k(theta) = (1 + e^theta)^D for the edges-only model
    D = 10
    est = estimate_log_ratio(EDGES, make_path([-1.0], [-0.5], 3), None, Graph.empty(5),
                             RatioConfig(3, 4000), seed=1)
    exact = D * (np.log1p(np.exp(-0.5)) - np.log1p(np.exp(-1.0)))
    assert est == pytest.approx(exact, abs=0.02)


def test_estimate_close_to_exact_and_positive():
    theta, theta_p = np.array([-1.0, 0.2]), np.array([-0.6, 0.5])
    exact = exact_log_normalizer(ET, theta_p, 4) - exact_log_normalizer(ET, theta, 4)
    est = estimate_log_ratio(ET, make_path(theta, theta_p, 2), None, Graph.empty(4),
                             RatioConfig(2, 3000), seed=4)
    assert est == pytest.approx(exact, abs=0.03)
    assert estimate_ratio(ET, make_path(theta, theta_p, 0), None, Graph.empty(4),
                          RatioConfig(0, 5), seed=0) > 0


def test_segment_factorization():
    # the product over segments telescopes, so each segment's exact ratio multiplies up
    theta, theta_p = np.array([-2.0, 0.0]), np.array([0.0, 1.0])
    path = make_path(theta, theta_p, 3)
    logs = [exact_log_normalizer(ET, b, 4) - exact_log_normalizer(ET, a, 4)
            for a, b in zip(path.points[:-1], path.points[1:])]
    whole = exact_log_normalizer(ET, theta_p, 4) - exact_log_normalizer(ET, theta, 4)
    assert sum(logs) == pytest.approx(whole, abs=1e-12)


def test_seeded_and_worker_independent():
    path = make_path([-1.0, 0.0], [-0.5, 0.4], 2)
    a = estimate_log_ratio(ET, path, None, Graph.empty(6), seed=8)
    b = estimate_log_ratio(ET, path, None, Graph.empty(6), seed=8, workers=3)
    assert a == b


def test_sweep_rows():
    rows = sweep_estimator(ET, [-1.0, 0.0], [-0.8, 0.2], [0, 2], [5, 10], 3, seed=2)
    assert len(rows) == 12
    assert {(r["m1"], r["m2"]) for r in rows} == {(0, 5), (0, 10), (2, 5), (2, 10)}
    exact = np.exp(exact_log_normalizer(ET, [-0.8, 0.2], 4) - exact_log_normalizer(ET, [-1.0, 0.0], 4))
    assert all(r["exact"] == pytest.approx(exact) for r in rows)
    assert all(r["estimate"] > 0 for r in rows)
    big = sweep_estimator(EDGES, [0.0], [0.1], [1], [5], 1, n=7)
    assert big[0]["exact"] is None


def test_config_validation():
    with pytest.raises(ConfigError):
        RatioConfig(m1=-1)
    with pytest.raises(ConfigError):
        RatioConfig(m2=0)
    with pytest.raises(ConfigError):
        RatioConfig.from_dict({"m3": 1})
    cfg = RatioConfig.from_dict({"m1": 4, "m2": 7, "thin": 3})
    assert (cfg.m1, cfg.m2, cfg.sim.thin, cfg.sim.burn_in) == (4, 7, 3, None)
    assert RatioConfig.from_dict(cfg.to_dict()) == cfg


@pytest.mark.parametrize("spec, theta, theta_p, m1", [
    (EDGES, [-1.0], [-0.5], 2),
    (ET, [0.2, 0.1], [0.4, 0.2], 5),
])
def test_worked_examples(spec, theta, theta_p, m1):
    est = estimate_ratio(spec, make_path(theta, theta_p, m1), None, Graph.empty(4), RatioConfig(m1, 1000), seed=3)
    exact = np.exp(exact_log_normalizer(spec, theta_p, 4) - exact_log_normalizer(spec, theta, 4))
    if spec == EDGES:
        assert exact == pytest.approx((1 + np.exp(-0.5)) ** 6 / (1 + np.exp(-1.0)) ** 6, rel=1e-12)
    assert est == pytest.approx(exact, rel=0.05)
