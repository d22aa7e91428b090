"""Scoring: gendered micro-F1 with a bias ratio, log loss, model comparison
tables, probability histograms, and prediction-set ensembling.

Each 3-way prediction converts to two binary coreference decisions
(A -> (T,F), B -> (F,T), NEITHER -> (F,F)); F1 is micro-averaged over the
decisions, separately per pronoun gender and overall. The bias figure is
feminine F1 over masculine F1 at full precision, rounded only for display.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import GapSample, Label

_CLIP_LO = 1e-15
_CLIP_HI = 1.0 - 1e-15


@dataclass(frozen=True)
class PredictionRecord:
    sample_id: str
    probs: tuple[float, float, float]
    gold: Label
    gender: str

    @property
    def predicted(self) -> Label:
        # Ties break to the earlier class (A < B < NEITHER).
        return Label(int(np.argmax(self.probs)))

    def __post_init__(self):
        total = sum(self.probs)
        if abs(total - 1.0) > 1e-6:
            raise ValueError(f"{self.sample_id}: probabilities sum to {total}, not 1")


def make_predictions(prob_rows: np.ndarray, samples: list[GapSample]) -> list[PredictionRecord]:
    if len(prob_rows) != len(samples):
        raise ValueError(f"{len(prob_rows)} probability rows for {len(samples)} samples")
    return [
        PredictionRecord(sample_id=s.id, probs=tuple(float(v) for v in row), gold=s.label, gender=s.gender)
        for row, s in zip(prob_rows, samples)
    ]


def write_predictions_csv(path: str | Path, predictions: dict[str, np.ndarray]) -> None:
    """Submission-style CSV: ID,A,B,NEITHER."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["ID", "A", "B", "NEITHER"])
        for sid, probs in predictions.items():
            writer.writerow([sid, f"{probs[0]:.9f}", f"{probs[1]:.9f}", f"{probs[2]:.9f}"])


def read_predictions_csv(path: str | Path) -> dict[str, np.ndarray]:
    out: dict[str, np.ndarray] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["ID", "A", "B", "NEITHER"]:
            raise ValueError(f"{path}: expected header ID,A,B,NEITHER, got {header}")
        for row in reader:
            out[row[0]] = np.array([float(row[1]), float(row[2]), float(row[3])])
    return out


@dataclass
class ScoreReport:
    f1_m: float
    f1_f: float
    bias: float
    f1_overall: float
    logloss: float | None
    per_class: dict[str, int]

    def to_dict(self) -> dict:
        return {
            "f1_m": self.f1_m,
            "f1_f": self.f1_f,
            "bias": self.bias,
            "f1_overall": self.f1_overall,
            "logloss": self.logloss,
            "per_class": self.per_class,
        }

    def format_table(self, name: str = "model") -> str:
        # Column order: M, F, B (bias), O (overall), logloss.
        head = f"{'':24}{'M':>8}{'F':>8}{'B':>8}{'O':>8}{'logloss':>10}"
        ll = f"{self.logloss:.3f}" if self.logloss is not None else "-"
        row = (
            f"{name:24}{self.f1_m * 100:>8.1f}{self.f1_f * 100:>8.1f}"
            f"{self.bias:>8.2f}{self.f1_overall * 100:>8.1f}{ll:>10}"
        )
        return head + "\n" + row


def _label_to_flags(label: Label) -> tuple[bool, bool]:
    return label == Label.A, label == Label.B


def _micro_f1(pairs: list[tuple[tuple[bool, bool], tuple[bool, bool]]]) -> float:
    tp = fp = fn = 0
    for (pa, pb), (ga, gb) in pairs:
        for p, g in ((pa, ga), (pb, gb)):
            if p and g:
                tp += 1
            elif p and not g:
                fp += 1
            elif g and not p:
                fn += 1
    if fp == 0 and fn == 0:
        return 1.0
    return 2 * tp / (2 * tp + fp + fn)


def gap_f1(predictions: dict[str, np.ndarray], gold: list[GapSample]) -> ScoreReport:
    """Gendered micro-F1 over binary coref decisions, plus log loss.

    A missing prediction counts as (F, F) — no coreference asserted — with
    a warning, mirroring the scorer convention for absent system output.
    """
    pairs_by_gender: dict[str, list] = {"M": [], "F": []}
    losses = []
    per_class = {l.name: 0 for l in Label}
    for s in gold:
        gold_flags = (s.a_coref, s.b_coref)
        per_class[s.label.name] += 1
        if s.id in predictions:
            probs = np.asarray(predictions[s.id], dtype=np.float64)
            pred_label = Label(int(np.argmax(probs)))
            losses.append(-np.log(np.clip(probs[int(s.label)], _CLIP_LO, _CLIP_HI)))
        else:
            warnings.warn(f"no prediction for {s.id}; scored as no-coreference")
            pred_label = Label.NEITHER
        pairs_by_gender[s.gender].append((_label_to_flags(pred_label), gold_flags))

    f1_m = _micro_f1(pairs_by_gender["M"])
    f1_f = _micro_f1(pairs_by_gender["F"])
    f1_o = _micro_f1(pairs_by_gender["M"] + pairs_by_gender["F"])
    bias = f1_f / f1_m if f1_m > 0 else float("nan")
    return ScoreReport(
        f1_m=f1_m,
        f1_f=f1_f,
        bias=bias,
        f1_overall=f1_o,
        logloss=float(np.mean(losses)) if losses else None,
        per_class=per_class,
    )


def logloss(predictions: dict[str, np.ndarray], gold: list[GapSample]) -> float:
    """Mean -ln p[gold] with probabilities clipped to [1e-15, 1 - 1e-15]."""
    losses = []
    for s in gold:
        probs = np.asarray(predictions[s.id], dtype=np.float64)
        losses.append(-np.log(np.clip(probs[int(s.label)], _CLIP_LO, _CLIP_HI)))
    return float(np.mean(losses))


def accuracy(predictions: dict[str, np.ndarray], gold: list[GapSample]) -> float:
    hits = [int(np.argmax(predictions[s.id])) == int(s.label) for s in gold]
    return float(np.mean(hits))


def class_recall(predictions: dict[str, np.ndarray], gold: list[GapSample], label: Label) -> float:
    subset = [s for s in gold if s.label == label]
    if not subset:
        return float("nan")
    return accuracy(predictions, subset)


@dataclass
class ConfusionCompare:
    """Agreement tables between two models, per gold class and overall.

    cells[class][(a_correct, b_correct)] -> count; off-diagonal cells show
    where one model fixes the other's errors.
    """

    cells: dict[str, dict[tuple[bool, bool], int]]

    def format_table(self, name_a: str = "first", name_b: str = "second") -> str:
        lines = [f"{'':12}{name_a:>12}{name_b + ' wrong':>16}{name_b + ' right':>16}"]
        for cls, table in self.cells.items():
            lines.append(f"{cls:12}{'wrong':>12}{table[(False, False)]:>16}{table[(False, True)]:>16}")
            lines.append(f"{'':12}{'right':>12}{table[(True, False)]:>16}{table[(True, True)]:>16}")
        return "\n".join(lines)


def confusion_compare(
    preds_a: dict[str, np.ndarray],
    preds_b: dict[str, np.ndarray],
    gold: list[GapSample],
) -> ConfusionCompare:
    if set(preds_a) != set(preds_b):
        raise ValueError("prediction sets cover different sample ids")
    groups = {l.name: {(x, y): 0 for x in (False, True) for y in (False, True)} for l in Label}
    groups["Overall"] = {(x, y): 0 for x in (False, True) for y in (False, True)}
    for s in gold:
        a_ok = int(np.argmax(preds_a[s.id])) == int(s.label)
        b_ok = int(np.argmax(preds_b[s.id])) == int(s.label)
        groups[s.label.name][(a_ok, b_ok)] += 1
        groups["Overall"][(a_ok, b_ok)] += 1
    return ConfusionCompare(cells=groups)


def prob_histograms(predictions: dict[str, np.ndarray], gold: list[GapSample], bins: int = 20) -> dict[str, list[int]]:
    """Per gold class: histogram of the probability assigned to that class."""
    out: dict[str, list[int]] = {}
    edges = np.linspace(0.0, 1.0, bins + 1)
    for label in Label:
        values = [float(predictions[s.id][int(label)]) for s in gold if s.label == label and s.id in predictions]
        counts, _ = np.histogram(values, bins=edges)
        out[label.name] = counts.tolist()
    return out


def ensemble_mean(sets: list[dict[str, np.ndarray]], weights: list[float] | None = None) -> dict[str, np.ndarray]:
    """Per-sample weighted mean of probability vectors, renormalized.

    Equal weights by default; all sets must cover identical sample ids.
    """
    if not sets:
        raise ValueError("nothing to ensemble")
    ids = set(sets[0])
    for i, s in enumerate(sets[1:], start=2):
        if set(s) != ids:
            raise ValueError(f"prediction set {i} covers different sample ids")
    if weights is None:
        w = np.full(len(sets), 1.0 / len(sets))
    else:
        if len(weights) != len(sets):
            raise ValueError("one weight per prediction set required")
        w = np.asarray(weights, dtype=np.float64)
        w = w / w.sum()
    out = {}
    for sid in ids:
        mixed = sum(wi * np.asarray(s[sid], dtype=np.float64) for wi, s in zip(w, sets))
        out[sid] = mixed / mixed.sum()
    return out


def save_report(path: str | Path, report: ScoreReport, name: str = "model") -> None:
    payload = report.to_dict()
    payload["table"] = report.format_table(name)
    Path(path).write_text(json.dumps(payload, indent=2), encoding="utf-8")
