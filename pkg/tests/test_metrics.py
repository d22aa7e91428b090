"""Scorer tests: hand-computed micro-F1 fixtures, log loss closed forms,
comparison tables, histograms, and ensembling properties."""

import math

import numpy as np
import pytest

from gapgrep.data import GapSample, Label, Mention
from gapgrep.metrics import (
    PredictionRecord,
    ScoreReport,
    accuracy,
    class_recall,
    confusion_compare,
    ensemble_mean,
    gap_f1,
    logloss,
    make_predictions,
    prob_histograms,
    read_predictions_csv,
    write_predictions_csv,
)


def sample(sid, label, gender="F"):
    pron = "she" if gender == "F" else "he"
    text = f"Anna spoke with Mary before {pron} left."
    return GapSample(
        id=sid,
        text=text,
        pronoun=Mention(pron, text.index(pron + " left")),
        a=Mention("Anna", 0),
        b=Mention("Mary", text.index("Mary")),
        a_coref=label == Label.A,
        b_coref=label == Label.B,
    )


def one_hot(label):
    v = np.full(3, 0.0)
    v[int(label)] = 1.0
    return v


class TestGapF1:
    def test_gold_as_predictions_is_perfect(self):
        gold = [sample(f"s{i}", Label(i % 3), gender="M" if i % 2 else "F") for i in range(12)]
        preds = {s.id: one_hot(s.label) for s in gold}
        report = gap_f1(preds, gold)
        assert (report.f1_m, report.f1_f, report.f1_overall, report.bias) == (1.0, 1.0, 1.0, 1.0)

    def test_hand_computed_six_sample_fixture(self):
        # M: gold A,B,N predicted A,A,N -> TP=1 FP=1 FN=1 -> F1 = 0.5
        # F: gold A,A,B all correct     -> TP=3          -> F1 = 1.0
        # Overall: TP=4 FP=1 FN=1 -> 2*4/(8+1+1) = 0.8; bias = 1.0/0.5 = 2.0
        gold = [
            sample("m1", Label.A, "M"), sample("m2", Label.B, "M"), sample("m3", Label.NEITHER, "M"),
            sample("f1", Label.A, "F"), sample("f2", Label.A, "F"), sample("f3", Label.B, "F"),
        ]
        preds = {
            "m1": one_hot(Label.A), "m2": one_hot(Label.A), "m3": one_hot(Label.NEITHER),
            "f1": one_hot(Label.A), "f2": one_hot(Label.A), "f3": one_hot(Label.B),
        }
        report = gap_f1(preds, gold)
        assert report.f1_m == 0.5
        assert report.f1_f == 1.0
        assert report.f1_overall == 0.8
        assert report.bias == 2.0
        assert report.per_class == {"A": 3, "B": 2, "NEITHER": 1}

    def test_all_neither_on_no_neither_gold_is_zero(self):
        gold = [sample(f"s{i}", Label.A) for i in range(4)]
        preds = {s.id: one_hot(Label.NEITHER) for s in gold}
        report = gap_f1(preds, gold)
        assert report.f1_f == 0.0

    def test_missing_prediction_scored_as_no_coref(self):
        gold = [sample("s0", Label.A), sample("s1", Label.NEITHER)]
        with pytest.warns(UserWarning, match="no prediction"):
            report = gap_f1({"s0": one_hot(Label.A)}, gold)
        # s1 falls back to (F, F), which is correct for NEITHER gold.
        assert report.f1_f == 1.0

    def test_bias_two_decimal_display(self):
        report = ScoreReport(f1_m=0.940, f1_f=0.911, bias=0.911 / 0.940, f1_overall=0.925, logloss=0.317, per_class={})
        table = report.format_table("single model")
        assert "0.97" in table
        assert "0.317" in table
        assert report.bias == 0.911 / 0.940  # full precision retained

    def test_bias_is_exact_ratio(self):
        gold = [sample("m1", Label.A, "M"), sample("m2", Label.B, "M"), sample("f1", Label.A, "F")]
        preds = {"m1": one_hot(Label.A), "m2": one_hot(Label.A), "f1": one_hot(Label.A)}
        report = gap_f1(preds, gold)
        assert report.bias == report.f1_f / report.f1_m


class TestLogLoss:
    def test_perfect_predictions_hit_clip_floor(self):
        gold = [sample("s0", Label.A)]
        value = logloss({"s0": one_hot(Label.A)}, gold)
        assert 0 <= value <= 1.2e-15

    def test_uniform_is_ln3(self):
        gold = [sample(f"s{i}", Label(i % 3)) for i in range(9)]
        preds = {s.id: np.full(3, 1 / 3) for s in gold}
        assert abs(logloss(preds, gold) - math.log(3)) < 1e-9

    def test_zero_probability_clipped(self):
        gold = [sample("s0", Label.A)]
        value = logloss({"s0": one_hot(Label.B)}, gold)
        assert abs(value - (-math.log(1e-15))) < 1e-6


class TestPredictionRecord:
    def test_argmax_tie_breaks_by_class_order(self):
        rec = PredictionRecord("x", (0.4, 0.4, 0.2), Label.B, "F")
        assert rec.predicted == Label.A
        rec = PredictionRecord("x", (0.3, 0.35, 0.35), Label.B, "F")
        assert rec.predicted == Label.B

    def test_rejects_unnormalized(self):
        with pytest.raises(ValueError):
            PredictionRecord("x", (0.9, 0.4, 0.2), Label.A, "F")

    def test_make_predictions(self):
        gold = [sample("s0", Label.A), sample("s1", Label.B, "M")]
        rows = np.array([[0.8, 0.1, 0.1], [0.2, 0.7, 0.1]])
        recs = make_predictions(rows, gold)
        assert recs[0].predicted == Label.A and recs[0].gender == "F"
        assert recs[1].gold == Label.B and recs[1].gender == "M"


class TestCsv:
    def test_roundtrip(self, tmp_path):
        preds = {"s0": np.array([0.7, 0.2, 0.1]), "s1": np.array([0.1, 0.1, 0.8])}
        path = tmp_path / "preds.csv"
        write_predictions_csv(path, preds)
        loaded = read_predictions_csv(path)
        for sid in preds:
            np.testing.assert_allclose(loaded[sid], preds[sid], atol=1e-9)

    def test_header_checked(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("ID,X,Y,Z\n")
        with pytest.raises(ValueError, match="header"):
            read_predictions_csv(path)


class TestConfusionCompare:
    def test_identical_predictions_zero_off_diagonal(self):
        gold = [sample(f"s{i}", Label(i % 3)) for i in range(9)]
        preds = {s.id: one_hot(s.label) for s in gold}
        table = confusion_compare(preds, preds, gold)
        for cls in table.cells.values():
            assert cls[(True, False)] == 0 and cls[(False, True)] == 0

    def test_cell_sums_equal_class_sizes(self):
        rng = np.random.default_rng(0)
        gold = [sample(f"s{i}", Label(int(rng.integers(3)))) for i in range(30)]
        noisy = {}
        for s in gold:
            v = rng.random(3)
            noisy[s.id] = v / v.sum()
        correct = {s.id: one_hot(s.label) for s in gold}
        table = confusion_compare(correct, noisy, gold)
        for label in Label:
            count = sum(1 for s in gold if s.label == label)
            assert sum(table.cells[label.name].values()) == count
        assert sum(table.cells["Overall"].values()) == 30

    def test_layout_contains_fix_counts(self):
        # One model fixes the other's NEITHER errors.
        gold = [sample(f"s{i}", Label.NEITHER) for i in range(5)]
        always_wrong = {s.id: one_hot(Label.A) for s in gold}
        always_right = {s.id: one_hot(Label.NEITHER) for s in gold}
        table = confusion_compare(always_wrong, always_right, gold)
        assert table.cells["NEITHER"][(False, True)] == 5
        assert "NEITHER" in table.format_table("first", "second")

    def test_id_mismatch(self):
        gold = [sample("s0", Label.A)]
        with pytest.raises(ValueError):
            confusion_compare({"s0": one_hot(Label.A)}, {"other": one_hot(Label.A)}, gold)


class TestHistograms:
    def test_perfect_predictions_top_bin(self):
        gold = [sample(f"s{i}", Label.A) for i in range(6)]
        hist = prob_histograms({s.id: one_hot(Label.A) for s in gold}, gold)
        assert hist["A"][-1] == 6 and sum(hist["A"]) == 6

    def test_uniform_predictions_land_in_third_bin(self):
        gold = [sample(f"s{i}", Label.B) for i in range(5)]
        hist = prob_histograms({s.id: np.full(3, 1 / 3) for s in gold}, gold)
        # 1/3 falls in [0.30, 0.35)
        assert hist["B"][6] == 5

    def test_counts_sum_to_class_sizes(self):
        rng = np.random.default_rng(1)
        gold = [sample(f"s{i}", Label(int(rng.integers(3)))) for i in range(40)]
        preds = {}
        for s in gold:
            v = rng.random(3)
            preds[s.id] = v / v.sum()
        hist = prob_histograms(preds, gold)
        for label in Label:
            assert sum(hist[label.name]) == sum(1 for s in gold if s.label == label)


class TestEnsemble:
    def test_idempotent_on_identical_sets(self):
        s = {"a": np.array([0.6, 0.3, 0.1]), "b": np.array([0.2, 0.2, 0.6])}
        out = ensemble_mean([s, dict(s), dict(s)])
        for k in s:
            np.testing.assert_allclose(out[k], s[k], atol=1e-12)

    def test_two_one_hots_average(self):
        out = ensemble_mean([{"x": np.array([1.0, 0, 0])}, {"x": np.array([0, 1.0, 0])}])
        np.testing.assert_allclose(out["x"], [0.5, 0.5, 0.0], atol=1e-12)

    def test_rows_renormalized(self):
        rng = np.random.default_rng(2)
        sets = []
        for _ in range(4):
            d = {}
            for i in range(6):
                v = rng.random(3)
                d[f"s{i}"] = v / v.sum()
            sets.append(d)
        out = ensemble_mean(sets)
        for v in out.values():
            np.testing.assert_allclose(v.sum(), 1.0, atol=1e-9)

    def test_jensen_bound_over_random_sets(self):
        rng = np.random.default_rng(3)
        gold = [sample(f"s{i}", Label(int(rng.integers(3)))) for i in range(20)]
        for _ in range(100):
            sets = []
            for _ in range(int(rng.integers(2, 6))):
                d = {}
                for s in gold:
                    v = rng.random(3) + 0.05
                    d[s.id] = v / v.sum()
                sets.append(d)
            ens = logloss(ensemble_mean(sets), gold)
            members = [logloss(d, gold) for d in sets]
            assert ens <= np.mean(members) + 1e-12

    def test_id_mismatch_rejected(self):
        with pytest.raises(ValueError):
            ensemble_mean([{"a": np.full(3, 1 / 3)}, {"b": np.full(3, 1 / 3)}])

    def test_weighted_variant(self):
        out = ensemble_mean(
            [{"x": np.array([1.0, 0, 0])}, {"x": np.array([0, 1.0, 0])}],
            weights=[3.0, 1.0],
        )
        np.testing.assert_allclose(out["x"], [0.75, 0.25, 0.0], atol=1e-12)


class TestHelpers:
    def test_accuracy_and_recall(self):
        gold = [sample("s0", Label.A), sample("s1", Label.NEITHER), sample("s2", Label.NEITHER)]
        preds = {"s0": one_hot(Label.A), "s1": one_hot(Label.A), "s2": one_hot(Label.NEITHER)}
        assert accuracy(preds, gold) == pytest.approx(2 / 3)
        assert class_recall(preds, gold, Label.NEITHER) == pytest.approx(0.5)
