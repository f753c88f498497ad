"""Metric tests: counting oracle agreement, Dice/accuracy algebra, reporting."""

import numpy as np
import pytest

from oracles import confusion_loops
from parceldelin.dataset import Sample
from parceldelin.errors import ConfigError, ShapeError
from parceldelin.metrics import (
    ConfusionCounts,
    MetricsReport,
    UndefinedMetricError,
    accuracy,
    aggregate,
    confusion,
    dice,
    evaluate,
    format_table,
    merge_counts,
    merge_reports,
    threshold,
)
from parceldelin.variants import ModelVariant, Task


class TestThreshold:
    def test_tie_rule_half(self):
        assert threshold(np.full((3, 3), 0.5)).all()

    def test_tau_zero_all_ones(self):
        assert threshold(np.zeros((2, 2)), tau=0.0).all()

    def test_tau_one_only_exact_ones(self):
        prob = np.array([[1.0, 0.999], [0.5, 1.0]])
        assert threshold(prob, tau=1.0).tolist() == [[1, 0], [0, 1]]


class TestConfusion:
    def test_perfect(self):
        m = (np.random.default_rng(0).random((8, 8)) < 0.4).astype(np.uint8)
        c = confusion(m, m)
        assert c.fp == 0 and c.fn == 0
        assert c.tp == int(m.sum())

    def test_inverted(self):
        m = (np.random.default_rng(1).random((8, 8)) < 0.4).astype(np.uint8)
        c = confusion(1 - m, m)
        assert c.tp == 0 and c.tn == 0

    def test_random_pairs_match_loop_oracle(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            pred = (rng.random((8, 8)) < 0.5).astype(np.uint8)
            gt = (rng.random((8, 8)) < 0.3).astype(np.uint8)
            c = confusion(pred, gt)
            assert (c.tp, c.fp, c.fn, c.tn) == confusion_loops(pred, gt)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            confusion(np.zeros((2, 2)), np.zeros((3, 2)))


class TestScores:
    def test_dice_formula(self):
        assert dice(ConfusionCounts(2, 1, 1, 10)) == pytest.approx(4 / 6)

    def test_dice_perfect(self):
        assert dice(ConfusionCounts(5, 0, 0, 10)) == 1.0

    def test_dice_zero_tp(self):
        assert dice(ConfusionCounts(0, 3, 2, 10)) == 0.0

    def test_dice_undefined(self):
        with pytest.raises(UndefinedMetricError):
            dice(ConfusionCounts(0, 0, 0, 10))

    def test_accuracy(self):
        assert accuracy(ConfusionCounts(2, 1, 1, 6)) == pytest.approx(0.8)
        assert accuracy(ConfusionCounts(0, 0, 10, 90)) == pytest.approx(0.9)

    def test_accuracy_empty(self):
        with pytest.raises(ConfigError):
            accuracy(ConfusionCounts(0, 0, 0, 0))

    def test_f1_identity(self):
        rng = np.random.default_rng(3)
        for _ in range(30):
            c = ConfusionCounts(*(int(v) for v in rng.integers(1, 40, size=4)))
            precision = c.tp / (c.tp + c.fp)
            recall = c.tp / (c.tp + c.fn)
            f1 = 2 * precision * recall / (precision + recall)
            assert dice(c) == pytest.approx(f1)

    def test_permutation_invariance(self):
        rng = np.random.default_rng(4)
        pred = (rng.random(64) < 0.5).astype(np.uint8)
        gt = (rng.random(64) < 0.4).astype(np.uint8)
        perm = rng.permutation(64)
        a = confusion(pred, gt)
        b = confusion(pred[perm], gt[perm])
        assert a == b


class TestAggregation:
    def test_micro_equals_concatenated(self):
        rng = np.random.default_rng(5)
        preds = [(rng.random((4, 4)) < 0.5).astype(np.uint8) for _ in range(5)]
        gts = [(rng.random((4, 4)) < 0.5).astype(np.uint8) for _ in range(5)]
        counts = [confusion(p, g) for p, g in zip(preds, gts)]
        micro = aggregate(counts, "micro")
        concat = confusion(np.concatenate(preds), np.concatenate(gts))
        assert micro.dice == pytest.approx(dice(concat))
        assert micro.accuracy == pytest.approx(accuracy(concat))

    def test_micro_vs_macro_hand_computed(self):
        """Two 2x2 images computed by hand.

        img1: pred [[1,1],[0,0]] gt [[1,0],[0,0]]  -> tp1 fp1 fn0 tn2
              dice 2/3, acc 3/4
        img2: pred [[0,0],[0,1]] gt [[1,1],[1,1]]  -> tp1 fp0 fn3 tn0
              dice 2/5, acc 1/4
        micro: tp2 fp1 fn3 tn2 -> dice 4/8 = 0.5, acc 4/8 = 0.5
        macro: dice (2/3+2/5)/2 = 8/15, acc (3/4+1/4)/2 = 0.5
        """
        c1 = confusion(np.array([[1, 1], [0, 0]]), np.array([[1, 0], [0, 0]]))
        c2 = confusion(np.array([[0, 0], [0, 1]]), np.array([[1, 1], [1, 1]]))
        micro = aggregate([c1, c2], "micro")
        macro = aggregate([c1, c2], "macro")
        assert micro.dice == pytest.approx(0.5)
        assert micro.accuracy == pytest.approx(0.5)
        assert macro.dice == pytest.approx(8 / 15)
        assert macro.accuracy == pytest.approx(0.5)
        assert micro.dice != macro.dice

    def test_macro_counts_undefined(self):
        counts = [ConfusionCounts(0, 0, 0, 16), ConfusionCounts(2, 0, 0, 14)]
        entry = aggregate(counts, "macro")
        assert entry.n_undefined == 1
        assert entry.dice == pytest.approx(1.0)


class _MirrorModel:
    """Fake model: probability map = red channel of the mid-year image."""

    variant = ModelVariant.SPATIAL

    def forward(self, x, train=False):
        from parceldelin.nn import Tensor

        return Tensor(np.ascontiguousarray(x[:, :1]))


def mirror_sample(tile_id, mask):
    size = mask.shape[0]
    img = np.zeros((size, size, 3), dtype=np.float32)
    img[:, :, 0] = mask
    return Sample(tile_id, [img, img, img], (False, False, False), mask, mask)


class TestEvaluate:
    def test_single_perfect_sample(self):
        mask = (np.random.default_rng(6).random((8, 8)) < 0.4).astype(np.uint8)
        report = evaluate(_MirrorModel(), [mirror_sample(0, mask)], Task.BOUNDARY)
        entry = report.entries[("Spatial U-Net", "boundary")]
        assert entry.dice == 1.0 and entry.accuracy == 1.0

    def test_empty_split_rejected(self):
        with pytest.raises(ConfigError):
            evaluate(_MirrorModel(), [], Task.BOUNDARY)

    def test_format_table_layout(self):
        report = MetricsReport()
        from parceldelin.metrics import MetricEntry

        report.add("Spatial U-Net", Task.BOUNDARY, MetricEntry(0.56, 0.76, 10))
        report.add("Spatial U-Net", Task.AREA, MetricEntry(0.72, 0.71, 10))
        report.add("Spatio-temporal U-Net", Task.BOUNDARY, MetricEntry(0.60, 0.81, 10))
        table = format_table(report)
        for row in ("Dice Score - Boundary", "Dice Score - Area", "Accuracy - Boundary", "Accuracy - Area"):
            assert row in table
        assert "Spatial U-Net" in table and "Spatio-temporal U-Net" in table
        assert "0.56" in table and "0.60" in table

    def test_merge_reports(self):
        mask = np.ones((4, 4), dtype=np.uint8)
        r1 = evaluate(_MirrorModel(), [mirror_sample(0, mask)], Task.BOUNDARY)
        r2 = evaluate(_MirrorModel(), [mirror_sample(0, mask)], Task.AREA)
        merged = merge_reports([r1, r2])
        assert len(merged.entries) == 2

    def test_report_json(self):
        mask = np.ones((4, 4), dtype=np.uint8)
        report = evaluate(_MirrorModel(), [mirror_sample(0, mask)], Task.AREA)
        doc = report.to_dict()
        assert doc["aggregation"] == "micro"
        assert doc["results"][0]["dice"] == 1.0


def test_merge_counts_totals():
    counts = [ConfusionCounts(1, 2, 3, 4), ConfusionCounts(5, 6, 7, 8)]
    total = merge_counts(counts)
    assert (total.tp, total.fp, total.fn, total.tn) == (6, 8, 10, 12)
    assert total.total == 36
