import csv
import logging
from dataclasses import astuple

import numpy as np
import pytest

from buffgraph import metrics
from buffgraph.graph import Graph, Split, split_random
from buffgraph.nn import ModelState, init_model
from buffgraph.synth import SynthConfig, generate
from buffgraph.train import (
    TrainConfig,
    evaluate,
    fit,
    loss_adjustments,
    predict,
    pretrain,
    train_vanilla,
)

SMALL = dict(hidden=16, num_hidden=2, pretrain_epochs=5, max_epochs=30, patience=30)


def split_of(graph, seed=0):
    return split_random(graph, seed=seed)


def strip_times(log):
    return [astuple(r)[:-2] for r in log.records]


class TestConfig:
    def test_defaults(self):
        cfg = TrainConfig()
        assert (cfg.alpha, cfg.lam, cfg.margin, cfg.lr) == (0.5, 1.0, 1.0, 0.01)
        assert (cfg.max_epochs, cfg.patience, cfg.pretrain_epochs, cfg.recompute_interval) == (2000, 500, 200, 50)
        assert (cfg.hidden, cfg.num_hidden, cfg.dropout) == (256, 3, 0.4)

    @pytest.mark.parametrize("kwargs, msg", [
        ({"recompute_interval": 0}, "recompute_interval"),
        ({"patience": 10, "max_epochs": 5}, "patience"),
        ({"lam": -1.0}, "lambda"),
        ({"alpha": 1.5}, "alpha"),
        ({"loss_mode": "focal"}, "loss_mode"),
        ({"fixed_gate": 2.0}, "fixed_gate"),
    ])
    def test_invalid(self, kwargs, msg):
        with pytest.raises(ValueError, match=msg):
            TrainConfig(**kwargs)


class TestLossAdjustments:
    def test_plain(self):
        assert loss_adjustments([0, 1, 1], [0, 1, 2], 2, "plain") == (None, None)

    def test_reweight_inverse_frequency(self):
        w, adj = loss_adjustments([0, 1, 1, 1], np.arange(4), 2, "reweight")
        assert adj is None
        np.testing.assert_allclose(w, [2.0, 2 / 3])
        assert w[0] / w[1] == pytest.approx(3.0)

    def test_balanced_log_prior(self):
        w, adj = loss_adjustments([0, 1, 1, 1], np.arange(4), 2, "balanced")
        assert w is None
        np.testing.assert_allclose(adj, np.log([0.25, 0.75]))


class TestPretrain:
    def test_clique_symmetry(self):
        k = 5
        src, dst = [], []
        for base in (0, k):
            for i in range(k):
                for j in range(i + 1, k):
                    src.append(base + i)
                    dst.append(base + j)
        rng = np.random.default_rng(0)
        x = np.repeat(rng.standard_normal((2, 3)), k, axis=0)
        g = Graph.from_edges(2 * k, src, dst, x, [0] * (2 * k), 1)
        split = Split(np.array([0, 1, 5, 6]), np.array([2, 7]), np.array([3, 8]))
        _, h = pretrain(g, split, TrainConfig(hidden=8, num_hidden=2, pretrain_epochs=10))
        assert len(h) == g.num_edges
        assert np.all(h == h[0])

    def test_zero_epochs_uses_initial_model(self, small_sbm):
        cfg = TrainConfig(pretrain_epochs=0, hidden=8, num_hidden=2)
        model, h = pretrain(small_sbm, split_of(small_sbm), cfg)
        assert model.step == 0
        init = init_model(6, 8, 4, 2, cfg.dropout, cfg.seed)
        for a, b in zip(model.weights, init.weights):
            np.testing.assert_array_equal(a, b)
        assert len(h) == small_sbm.num_edges and np.all(np.isfinite(h))

    def test_step_count(self, small_sbm):
        model, _ = pretrain(small_sbm, split_of(small_sbm), TrainConfig(pretrain_epochs=7, hidden=8))
        assert model.step == 7

    def test_separable_sbm_inter_exceeds_intra(self):
        inter, intra = [], []
        for seed in range(5):
            g = generate(SynthConfig([40, 40, 40], p_in=0.1, p_out=0.03, feature_dim=6,
                                     class_mean_scale=2.0, feature_noise=0.3, seed=seed))
            _, h = pretrain(g, split_of(g, seed), TrainConfig(hidden=16, num_hidden=2,
                                                              pretrain_epochs=50, seed=seed))
            src, dst = g.edges()
            same = g.labels[src] == g.labels[dst]
            inter.append(h[~same].mean())
            intra.append(h[same].mean())
        assert np.mean(inter) > np.mean(intra)


class TestFit:
    def test_single_epoch(self, small_sbm):
        cfg = TrainConfig(**{**SMALL, "max_epochs": 1, "patience": 1})
        best, _, log = fit(small_sbm, split_of(small_sbm), cfg)
        assert len(log.records) == 1 and log.records[0].epoch == 1
        assert best.step == cfg.pretrain_epochs + 1

    def test_refresh_at_multiples_of_interval(self, small_sbm):
        cfg = TrainConfig(hidden=8, num_hidden=2, pretrain_epochs=2, max_epochs=120, patience=120)
        _, _, log = fit(small_sbm, split_of(small_sbm), cfg)
        assert [r.epoch for r in log.records] == list(range(1, 121))
        assert [r.epoch for r in log.records if r.gates_refreshed] == [50, 100]

    def test_fixed_gate_never_refreshes(self, small_sbm):
        cfg = TrainConfig(hidden=8, num_hidden=2, pretrain_epochs=0, max_epochs=60, patience=60,
                          fixed_gate=0.3)
        _, aug, log = fit(small_sbm, split_of(small_sbm), cfg)
        assert not any(r.gates_refreshed for r in log.records)
        assert np.all(aug.gates == 0.3)

    def test_best_epoch_is_max(self, small_sbm):
        best, aug, log = fit(small_sbm, split_of(small_sbm), TrainConfig(**SMALL))
        vals = [r.val_bacc for r in log.records]
        assert log.best_val_bacc == max(vals)
        assert log.records[log.best_epoch - 1].val_bacc == max(vals)
        assert vals.index(max(vals)) + 1 == log.best_epoch
        # returned model and gates reproduce the recorded validation score
        assert evaluate(best, aug, split_of(small_sbm), "val").bacc == log.best_val_bacc

    def test_early_stopping(self, small_sbm):
        cfg = TrainConfig(**{**SMALL, "max_epochs": 200, "patience": 5, "lr": 0.0})
        _, _, log = fit(small_sbm, split_of(small_sbm), cfg)
        assert log.best_epoch == 1 and len(log.records) == 6

    def test_losses_logged(self, small_sbm):
        cfg = TrainConfig(**{**SMALL, "lam": 0.5})
        _, _, log = fit(small_sbm, split_of(small_sbm), cfg)
        for r in log.records:
            assert r.loss_total == pytest.approx(r.loss_pred + 0.5 * r.loss_hetero, abs=1e-12)

    @pytest.mark.parametrize("mode", ["plain", "reweight", "balanced"])
    def test_loss_modes_run(self, small_sbm, mode):
        _, _, log = fit(small_sbm, split_of(small_sbm), TrainConfig(**SMALL, loss_mode=mode))
        assert all(np.isfinite(r.loss_total) for r in log.records)

    def test_deterministic(self, small_sbm):
        split = split_of(small_sbm)
        a = fit(small_sbm, split, TrainConfig(**SMALL))
        b = fit(small_sbm, split, TrainConfig(**SMALL))
        assert strip_times(a[2]) == strip_times(b[2])
        np.testing.assert_array_equal(a[1].gates, b[1].gates)

    def test_vanilla_equivalence(self, small_sbm):
        split = split_of(small_sbm)
        cfg = TrainConfig(**{**SMALL, "lam": 0.0, "fixed_gate": 0.0, "pretrain_epochs": 0})
        n = small_sbm.num_nodes
        aug_logits, base_logits = [], []
        fit(small_sbm, split, cfg, callback=lambda e, m, t: aug_logits.append(t.logits[:n].copy()))
        train_vanilla(small_sbm, split, cfg, callback=lambda e, m, t: base_logits.append(t.logits.copy()))
        assert len(aug_logits) == len(base_logits) == 30
        for a, b in zip(aug_logits, base_logits):
            np.testing.assert_allclose(a, b, rtol=0, atol=1e-10)

    def test_no_train_edges_warns(self, caplog):
        g = Graph.from_edges(6, [0, 2], [1, 3], np.eye(6), [0, 1, 0, 1, 0, 1], 2)
        split = Split(np.array([0, 3]), np.array([1, 4]), np.array([2, 5]))
        cfg = TrainConfig(hidden=4, num_hidden=1, pretrain_epochs=0, max_epochs=3, patience=3)
        with caplog.at_level(logging.WARNING):
            _, _, log = fit(g, split, cfg)
        assert "heterophily loss is 0" in caplog.text
        assert all(r.loss_hetero == 0 for r in log.records)

    def test_empty_validation_rejected(self, small_sbm):
        split = Split(np.arange(10), np.array([], dtype=np.int64), np.arange(10, 20))
        with pytest.raises(ValueError, match="validation"):
            fit(small_sbm, split, TrainConfig(**SMALL))

    def test_log_csv(self, small_sbm, tmp_path):
        _, _, log = fit(small_sbm, split_of(small_sbm), TrainConfig(**SMALL))
        log.write_csv(tmp_path / "log.csv", include_times=False)
        rows = list(csv.DictReader(open(tmp_path / "log.csv")))
        assert len(rows) == len(log.records)
        assert "train_time" not in rows[0]
        assert float(rows[3]["val_bacc"]) == log.records[3].val_bacc


class TestEvaluate:
    def test_memorised_train_set(self):
        n = 12
        g = Graph.from_edges(n, [], [], np.eye(n), np.arange(n) % 3, 3)
        split = Split(np.arange(8), np.array([8, 9]), np.array([10, 11]))
        cfg = TrainConfig(hidden=16, num_hidden=1, dropout=0.0, max_epochs=200, patience=200)
        final = {}
        train_vanilla(g, split, cfg, callback=lambda e, m, t: final.update(model=m.copy()))
        assert evaluate(final["model"], g, split, "train").acc == 1.0

    def test_constant_logits(self):
        g = Graph.from_edges(4, [0, 2], [1, 3], np.ones((4, 2)), [0, 1, 0, 1], 2)
        model = ModelState([np.zeros((2, 3)), np.zeros((3, 2))])
        split = Split(np.array([], dtype=np.int64), np.array([], dtype=np.int64), np.arange(4))
        r = evaluate(model, g, split)
        assert r.bacc == 0.5 and r.mask_name == "test"

    def test_matches_metrics_module(self, small_sbm):
        split = split_of(small_sbm)
        best, aug, _ = fit(small_sbm, split, TrainConfig(**SMALL))
        preds = predict(best, aug).argmax(axis=1)
        expected = metrics.compute(preds, small_sbm.labels, split.test, 4)
        r = evaluate(best, aug, split)
        assert (r.acc, r.bacc, r.macro_f1) == (expected.acc, expected.bacc, expected.macro_f1)
        assert all(np.isfinite(row.heterophily) for row in r.per_class)

    def test_six_node_toy(self):
        # identity propagation (no edges) and one-hot features give fixed logits
        g = Graph.from_edges(6, [], [], np.eye(6), [0, 0, 1, 1, 2, 2], 3)
        w = np.zeros((6, 3))
        w[[0, 1, 2, 3, 4, 5], [0, 1, 1, 1, 2, 0]] = 1.0
        model = ModelState([w])
        split = Split(np.array([], dtype=np.int64), np.array([], dtype=np.int64), np.arange(6))
        r = evaluate(model, g, split)
        # preds [0,1,1,1,2,0] vs labels [0,0,1,1,2,2]
        assert r.acc == pytest.approx(4 / 6, abs=1e-15)
        assert r.bacc == pytest.approx(4 / 6, abs=1e-15)
        assert r.macro_f1 == pytest.approx((0.5 + 0.8 + 2 / 3) / 3, abs=1e-15)
