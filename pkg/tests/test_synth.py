import numpy as np
import pytest
from scipy.special import expit
from scipy.stats import chisquare

from dpmergm.errors import ConfigError
from dpmergm.graph import load_ensemble, save_ensemble
from dpmergm.simulate import SimConfig
from dpmergm.stats import ModelSpec
from dpmergm.synth import MixtureSpec, benchmark_two_group, draw_labels, generate

ET = ModelSpec.of("edges", "triangles")


def test_single_component():
    ens, labels = generate(MixtureSpec(ET, [1.0], [[-1.0, 0.0]], 6, 8, seed=1))
    assert set(labels.tolist()) == {1}
    assert ens.truth == [1] * 8


def test_zero_weight_never_drawn():
    ms = MixtureSpec(ET, [1.0, 0.0], [[-1.0, 0.0], [0.0, 0.0]], 5, 500, seed=3)
    assert np.all(draw_labels(ms) == 1)


def test_label_frequencies_chi_square():
    w = np.array([0.2, 0.3, 0.5])
    ms = MixtureSpec(ET, w, np.zeros((3, 2)), 5, 10000, seed=7)
    counts = np.bincount(draw_labels(ms), minlength=4)[1:]
    assert chisquare(counts, w * 10000).pvalue > 0.01


def test_bernoulli_component_density():
    ms = MixtureSpec(ET, [1.0], [[-1.0, 0.0]], 12, 300, seed=2)
    ens, _ = generate(ms)
    freq = np.mean([g.adjacency[np.triu_indices(12, 1)] for g in ens.graphs])
    se = np.sqrt(expit(-1) * (1 - expit(-1)) / (300 * 66))
    assert abs(freq - expit(-1.0)) < 4 * se


def test_deterministic_and_worker_independent():
    ms = MixtureSpec(ET, [0.5, 0.5], [[-2.0, 0.3], [-1.0, 0.0]], 8, 6, seed=4)
    a, la = generate(ms, SimConfig(thin=5))
    b, lb = generate(ms, SimConfig(thin=5), workers=3)
    assert np.array_equal(la, lb)
    assert all(np.array_equal(x.adjacency, y.adjacency) for x, y in zip(a.graphs, b.graphs))


def test_truth_round_trips_through_bundle(tmp_path):
    ens, labels = generate(MixtureSpec(ET, [0.5, 0.5], [[-2.0, 0.0], [-1.0, 0.0]], 5, 4, seed=1))
    save_ensemble(ens, tmp_path / "e.json")
    back = load_ensemble(tmp_path / "e.json")
    assert back.truth == labels.tolist()


def test_benchmark_definition():
    ms = benchmark_two_group()
    assert (ms.n, ms.N, ms.K) == (30, 40, 2)
    np.testing.assert_array_equal(ms.thetas, [[-3.0, 0.9], [-1.0, 0.0]])


def test_validation():
    with pytest.raises(ConfigError):
        MixtureSpec(ET, [0.6, 0.6], [[0, 0], [0, 0]], 5, 5)
    with pytest.raises(ConfigError):
        MixtureSpec(ET, [1.0], [[0, 0, 0]], 5, 5)
    with pytest.raises(ConfigError):
        MixtureSpec(ET, [1.0], [[0, 0]], 1, 5)
