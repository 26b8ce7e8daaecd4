"""Extraction metrics, agreement statistics, and report rendering.

Conventions: zero-denominator precision/recall/F1 collapse to 0; macro rows
are unweighted means over factors; tasks with no prediction are excluded
from counts and surfaced in their own column rather than silently scored
negative.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Hashable, Iterable, Mapping, Sequence, TypeVar

from .corpus import GoldRelevanceSet
from .pipeline import StageTrace

K = TypeVar("K", bound=Hashable)


class EvalError(ValueError):
    """Inconsistent inputs to a metric computation."""


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    def __post_init__(self) -> None:
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise EvalError("confusion counts must be nonnegative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def swapped(self) -> "ConfusionCounts":
        """Counts with the negative class treated as positive."""
        return ConfusionCounts(tp=self.tn, fp=self.fn, fn=self.fp, tn=self.tp)


@dataclass(frozen=True)
class BinaryMetrics:
    precision: float
    recall: float
    f1: float
    accuracy: float


def score_binary(
    pred: Mapping[K, bool], gold: Mapping[K, bool]
) -> tuple[ConfusionCounts, list[K]]:
    """2x2 counts over the keys present in both maps.

    Returns the counts and the sorted list of gold keys with no prediction
    (excluded from the counts). Predictions for unknown keys are an error.
    """
    extra = set(pred) - set(gold)
    if extra:
        raise EvalError(f"predictions for keys not in gold: {sorted(extra)[:5]}")
    missing = sorted(set(gold) - set(pred))
    scored = [k for k in pred if k in gold]
    if not scored:
        raise EvalError("no overlapping keys between predictions and gold")
    tp = fp = fn = tn = 0
    for key in scored:
        p, g = pred[key], gold[key]
        if p and g:
            tp += 1
        elif p and not g:
            fp += 1
        elif not p and g:
            fn += 1
        else:
            tn += 1
    return ConfusionCounts(tp=tp, fp=fp, fn=fn, tn=tn), missing


def prf1(counts: ConfusionCounts) -> BinaryMetrics:
    """Precision, recall, F1 (their harmonic mean), and accuracy."""
    if counts.total < 1:
        raise EvalError("metrics need at least one counted item")
    precision = counts.tp / (counts.tp + counts.fp) if counts.tp + counts.fp else 0.0
    recall = counts.tp / (counts.tp + counts.fn) if counts.tp + counts.fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    accuracy = (counts.tp + counts.tn) / counts.total
    return BinaryMetrics(precision=precision, recall=recall, f1=f1, accuracy=accuracy)


def two_class_macro_f1(counts: ConfusionCounts) -> float:
    """Mean of the positive-class and negative-class F1 scores."""
    return (prf1(counts).f1 + prf1(counts.swapped()).f1) / 2


def cohens_kappa(a: Sequence[bool | int], b: Sequence[bool | int]) -> float:
    """Chance-corrected agreement between two binary label vectors.

    When expected agreement is 1 (both raters constant and equal) kappa is
    defined as 1.
    """
    if len(a) != len(b):
        raise EvalError(f"label vectors differ in length: {len(a)} vs {len(b)}")
    if not a:
        raise EvalError("label vectors must be non-empty")
    xs = [bool(x) for x in a]
    ys = [bool(y) for y in b]
    n = len(xs)
    observed = sum(1 for x, y in zip(xs, ys) if x == y) / n
    pa_true = sum(xs) / n
    pb_true = sum(ys) / n
    expected = pa_true * pb_true + (1 - pa_true) * (1 - pb_true)
    if expected == 1.0:
        return 1.0
    return (observed - expected) / (1 - expected)


# --- stage-wise retrieval accuracy ---------------------------------------


@dataclass
class FactorRetrievalAccuracy:
    factor_id: str
    stage1_accuracy: float
    stage2_accuracy: float
    n_labeled: int
    stage1_hit: int
    stage1_missed: int
    stage1_spurious: int
    stage2_hit: int
    stage2_missed: int
    stage2_spurious: int

    @property
    def improvement(self) -> float:
        return self.stage2_accuracy - self.stage1_accuracy


@dataclass
class RetrievalAccuracyReport:
    per_factor: list[FactorRetrievalAccuracy]

    @property
    def mean_stage1(self) -> float:
        return sum(r.stage1_accuracy for r in self.per_factor) / len(self.per_factor)

    @property
    def mean_stage2(self) -> float:
        return sum(r.stage2_accuracy for r in self.per_factor) / len(self.per_factor)

    @property
    def mean_improvement(self) -> float:
        return self.mean_stage2 - self.mean_stage1

    def to_obj(self) -> dict:
        return {
            "per_factor": [
                {
                    "factor_id": r.factor_id,
                    "stage1_accuracy": r.stage1_accuracy,
                    "stage2_accuracy": r.stage2_accuracy,
                    "improvement": r.improvement,
                    "n_labeled": r.n_labeled,
                    "stage1": {
                        "hit": r.stage1_hit,
                        "missed": r.stage1_missed,
                        "spurious": r.stage1_spurious,
                    },
                    "stage2": {
                        "hit": r.stage2_hit,
                        "missed": r.stage2_missed,
                        "spurious": r.stage2_spurious,
                    },
                }
                for r in self.per_factor
            ],
            "mean_stage1_accuracy": self.mean_stage1,
            "mean_stage2_accuracy": self.mean_stage2,
            "mean_improvement": self.mean_improvement,
        }


def retrieval_accuracy(
    traces: Iterable[StageTrace], gold: GoldRelevanceSet
) -> RetrievalAccuracyReport:
    """Per-factor accuracy of the retrieved (stage 1) and verified (stage 2)
    sentence sets against the gold relevance labels.

    A gold-Relevant sentence counts as correct when present in the stage's
    set, a gold-NotRelevant sentence when absent; accuracy is correct over
    labeled. Unlabeled sentences never count.
    """
    per_factor: dict[str, dict[str, int]] = {}
    missing_pairs = []
    for trace in traces:
        labels = gold.labels_for(trace.incident_id, trace.factor_id)
        if not labels:
            missing_pairs.append((trace.incident_id, trace.factor_id))
            continue
        stats = per_factor.setdefault(
            trace.factor_id,
            {
                "labeled": 0,
                "correct1": 0,
                "correct2": 0,
                "hit1": 0,
                "miss1": 0,
                "spur1": 0,
                "hit2": 0,
                "miss2": 0,
                "spur2": 0,
            },
        )
        retrieved = {(r.report, r.index) for r in trace.retrieved}
        verified = {(r.report, r.index) for r in trace.verified}
        for ref, relevant in labels.items():
            stats["labeled"] += 1
            in1, in2 = ref in retrieved, ref in verified
            if in1 == relevant:
                stats["correct1"] += 1
            if in2 == relevant:
                stats["correct2"] += 1
            if relevant:
                stats["hit1" if in1 else "miss1"] += 1
                stats["hit2" if in2 else "miss2"] += 1
            else:
                if in1:
                    stats["spur1"] += 1
                if in2:
                    stats["spur2"] += 1
    if missing_pairs:
        shown = ", ".join(f"{i}/{f}" for i, f in missing_pairs[:5])
        raise EvalError(
            f"{len(missing_pairs)} traced pairs have no gold relevance labels: {shown}"
        )
    if not per_factor:
        raise EvalError("no traces to evaluate")
    rows = [
        FactorRetrievalAccuracy(
            factor_id=factor_id,
            stage1_accuracy=s["correct1"] / s["labeled"],
            stage2_accuracy=s["correct2"] / s["labeled"],
            n_labeled=s["labeled"],
            stage1_hit=s["hit1"],
            stage1_missed=s["miss1"],
            stage1_spurious=s["spur1"],
            stage2_hit=s["hit2"],
            stage2_missed=s["miss2"],
            stage2_spurious=s["spur2"],
        )
        for factor_id, s in sorted(per_factor.items())
    ]
    return RetrievalAccuracyReport(per_factor=rows)


# --- extraction report -----------------------------------------------------


@dataclass
class EvalRow:
    factor_id: str
    mode: str
    counts: ConfusionCounts
    n_missing: int

    @property
    def metrics(self) -> BinaryMetrics:
        return prf1(self.counts)

    @property
    def macro2_f1(self) -> float:
        return two_class_macro_f1(self.counts)


@dataclass
class EvalReport:
    rows: list[EvalRow]
    metadata: dict = field(default_factory=dict)

    def modes(self) -> list[str]:
        return sorted({row.mode for row in self.rows})

    def macro_for_mode(self, mode: str) -> dict[str, float]:
        rows = [r for r in self.rows if r.mode == mode]
        if not rows:
            raise EvalError(f"no rows for mode {mode!r}")
        n = len(rows)
        return {
            "precision": sum(r.metrics.precision for r in rows) / n,
            "recall": sum(r.metrics.recall for r in rows) / n,
            "f1": sum(r.metrics.f1 for r in rows) / n,
            "accuracy": sum(r.metrics.accuracy for r in rows) / n,
            "macro2_f1": sum(r.macro2_f1 for r in rows) / n,
        }

    def to_obj(self) -> dict:
        return {
            "rows": [
                {
                    "factor_id": r.factor_id,
                    "mode": r.mode,
                    "counts": {
                        "tp": r.counts.tp,
                        "fp": r.counts.fp,
                        "fn": r.counts.fn,
                        "tn": r.counts.tn,
                    },
                    "precision": r.metrics.precision,
                    "recall": r.metrics.recall,
                    "f1": r.metrics.f1,
                    "accuracy": r.metrics.accuracy,
                    "macro2_f1": r.macro2_f1,
                    "n_missing": r.n_missing,
                }
                for r in self.rows
            ],
            "macro": {mode: self.macro_for_mode(mode) for mode in self.modes()},
            "metadata": self.metadata,
        }

    @classmethod
    def from_obj(cls, obj: dict) -> "EvalReport":
        rows = [
            EvalRow(
                factor_id=r["factor_id"],
                mode=r["mode"],
                counts=ConfusionCounts(
                    tp=r["counts"]["tp"],
                    fp=r["counts"]["fp"],
                    fn=r["counts"]["fn"],
                    tn=r["counts"]["tn"],
                ),
                n_missing=r["n_missing"],
            )
            for r in obj["rows"]
        ]
        return cls(rows=rows, metadata=obj.get("metadata", {}))


def build_eval_report(
    predictions: Mapping[tuple[str, str, str], bool],
    gold: Mapping[tuple[str, str], bool],
    metadata: dict | None = None,
) -> EvalReport:
    """Score predictions keyed by (incident, factor, mode) against gold
    labels keyed by (incident, factor)."""
    by_factor_mode: dict[tuple[str, str], dict[str, bool]] = {}
    for (incident_id, factor_id, mode), value in predictions.items():
        by_factor_mode.setdefault((factor_id, mode), {})[incident_id] = value
    rows = []
    for (factor_id, mode), pred in sorted(by_factor_mode.items()):
        factor_gold = {
            iid: value for (iid, fid), value in gold.items() if fid == factor_id
        }
        counts, missing = score_binary(pred, factor_gold)
        rows.append(EvalRow(factor_id=factor_id, mode=mode, counts=counts, n_missing=len(missing)))
    if not rows:
        raise EvalError("no predictions to report")
    return EvalReport(rows=rows, metadata=metadata or {})


# --- rendering --------------------------------------------------------------

RENDER_FORMATS = ("json", "text")


def _fmt(x: float) -> str:
    return f"{x:.4f}"


def render_eval_text(report: EvalReport) -> str:
    """One row per factor, P/R/F1 columns per mode, macro-average last."""
    modes = report.modes()
    headers = ["factor"]
    for mode in modes:
        headers += [f"{mode}-P", f"{mode}-R", f"{mode}-F1"]
    headers.append("missing")
    by_factor: dict[str, dict[str, EvalRow]] = {}
    for row in report.rows:
        by_factor.setdefault(row.factor_id, {})[row.mode] = row
    rows = []
    for factor_id in sorted(by_factor):
        cells = [factor_id]
        missing = 0
        for mode in modes:
            row = by_factor[factor_id].get(mode)
            if row is None:
                cells += ["-", "-", "-"]
            else:
                m = row.metrics
                cells += [_fmt(m.precision), _fmt(m.recall), _fmt(m.f1)]
                missing += row.n_missing
        cells.append(str(missing))
        rows.append(cells)
    macro_cells = ["MACRO-AVG"]
    for mode in modes:
        macro = report.macro_for_mode(mode)
        macro_cells += [_fmt(macro["precision"]), _fmt(macro["recall"]), _fmt(macro["f1"])]
    macro_cells.append("")
    rows.append(macro_cells)
    widths = [max(len(h), *(len(row[i]) for row in rows)) for i, h in enumerate(headers)]
    lines = [
        "  ".join(h.ljust(widths[i]) for i, h in enumerate(headers)),
        "  ".join("-" * w for w in widths),
    ]
    lines += ["  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)) for row in rows]
    return "\n".join(lines) + "\n"


def render_retrieval_text(report: RetrievalAccuracyReport) -> str:
    headers = ["factor", "stage1-acc", "stage2-acc", "improvement", "labeled"]
    rows = [
        [
            r.factor_id,
            _fmt(r.stage1_accuracy),
            _fmt(r.stage2_accuracy),
            _fmt(r.improvement),
            str(r.n_labeled),
        ]
        for r in report.per_factor
    ]
    rows.append(
        [
            "MEAN",
            _fmt(report.mean_stage1),
            _fmt(report.mean_stage2),
            _fmt(report.mean_improvement),
            "",
        ]
    )
    widths = [max(len(h), *(len(row[i]) for row in rows)) for i, h in enumerate(headers)]
    lines = [
        "  ".join(h.ljust(widths[i]) for i, h in enumerate(headers)),
        "  ".join("-" * w for w in widths),
    ]
    lines += ["  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)) for row in rows]
    return "\n".join(lines) + "\n"


def render_report(report: EvalReport | RetrievalAccuracyReport, fmt: str, path: str | Path) -> None:
    """Write a report to ``path`` as machine JSON or an aligned text table."""
    if fmt not in RENDER_FORMATS:
        raise EvalError(f"unknown report format {fmt!r} (expected one of {RENDER_FORMATS})")
    path = Path(path)
    if fmt == "json":
        path.write_text(
            json.dumps(report.to_obj(), indent=2, ensure_ascii=False) + "\n", encoding="utf-8"
        )
        return
    if isinstance(report, EvalReport):
        path.write_text(render_eval_text(report), encoding="utf-8")
    else:
        path.write_text(render_retrieval_text(report), encoding="utf-8")
