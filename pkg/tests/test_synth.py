import math

import numpy as np
import pytest

from buffgraph import heterophily
from buffgraph.synth import SynthConfig, _decode_triangle, generate, write_dataset
from buffgraph.graph import load_graph


def test_disjoint_triangles():
    g = generate(SynthConfig([3, 3], p_in=1.0, p_out=0.0, seed=1))
    src, dst = g.edges()
    assert list(zip(src.tolist(), dst.tolist())) == [(0, 1), (0, 2), (1, 2), (3, 4), (3, 5), (4, 5)]
    assert g.labels.tolist() == [0, 0, 0, 1, 1, 1]


def test_edgeless():
    g = generate(SynthConfig([10, 7], p_in=0.0, p_out=0.0))
    assert g.num_edges == 0


def test_complete():
    g = generate(SynthConfig([4, 5], p_in=1.0, p_out=1.0))
    assert g.num_edges == math.comb(9, 2)


def test_edge_count_binomial():
    n_pairs = math.comb(220, 2)
    mean, sd = n_pairs * 0.05, math.sqrt(n_pairs * 0.05 * 0.95)
    for seed in range(10):
        g = generate(SynthConfig([200, 20], p_in=0.05, p_out=0.05, seed=seed))
        assert abs(g.num_edges - mean) < 3 * sd


def test_block_densities():
    # intra- and inter-class densities both near their probabilities
    g = generate(SynthConfig([300, 300], p_in=0.1, p_out=0.02, seed=5))
    src, dst = g.edges()
    same = g.labels[src] == g.labels[dst]
    intra_pairs = 2 * math.comb(300, 2)
    assert same.sum() / intra_pairs == pytest.approx(0.1, rel=0.05)
    assert (~same).sum() / (300 * 300) == pytest.approx(0.02, rel=0.08)


def test_deterministic():
    cfg = SynthConfig([40, 30, 5], p_in=0.2, p_out=0.05, seed=9)
    assert generate(cfg) == generate(cfg)
    assert generate(cfg) != generate(SynthConfig([40, 30, 5], p_in=0.2, p_out=0.05, seed=10))


def test_triangle_decode_matches_enumeration():
    n = 57
    expected = [(i, j) for j in range(n) for i in range(j)]
    i, j = _decode_triangle(np.arange(len(expected)))
    assert list(zip(i.tolist(), j.tolist())) == expected


def test_triangle_decode_large_indices():
    n = 20000
    k = np.array([0, 1, n * (n - 1) // 2 - 1, 123456789])
    i, j = _decode_triangle(k)
    assert np.all(i < j) and np.all(j < n)
    assert np.array_equal(j * (j - 1) // 2 + i, k)


def test_feature_means():
    cfg = SynthConfig([500, 500, 500], p_in=0, p_out=0, feature_dim=2, class_mean_scale=3.0,
                      feature_noise=0.1, seed=0)
    g = generate(cfg)
    means = np.array([g.features[g.labels == c].mean(axis=0) for c in range(3)])
    # class 2 cycles back onto the first basis direction
    np.testing.assert_allclose(means, [[3, 0], [0, 3], [3, 0]], atol=0.05)


def test_random_mixing_heterophily():
    classes = 4
    cfg = SynthConfig([300] * classes, p_in=0.01, p_out=0.01, seed=2)
    g = generate(cfg)
    beta = heterophily.node_scores(g)
    assert abs(np.nanmean(beta) - (classes - 1) / classes) < 0.05
    assert cfg.expected_heterophily() == pytest.approx((classes - 1) / classes, abs=0.01)


@pytest.mark.parametrize("kwargs", [
    {"class_sizes": [0, 3]},
    {"p_in": 1.5},
    {"p_out": -0.1},
    {"feature_noise": -1.0},
])
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        SynthConfig(**kwargs)


def test_write_dataset(tmp_path):
    cfg = SynthConfig([5, 6], p_in=0.5, p_out=0.1, seed=3)
    g = write_dataset(cfg, tmp_path)
    assert (tmp_path / "config.json").is_file()
    assert load_graph(tmp_path) == g
