"""Incident records, gold annotations, and the line-JSON corpus format.

One incident per line. Canonical serialization fixes key order and sorts
gold maps so write -> load -> write round-trips byte-identically.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

from .factors import FactorRegistry
from .segmenter import segment

REPORT_TAGS = ("cme", "le")


class CorpusError(ValueError):
    """Malformed corpus file or invariant violation; carries line context."""

    def __init__(self, message: str, line_no: int | None = None):
        self.line_no = line_no
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class IncidentRecord:
    """One suicide incident: the two investigation reports plus optional gold."""

    incident_id: str
    cme_report: str = ""
    le_report: str = ""
    gold_labels: Mapping[str, bool] | None = None
    gold_sentences: Mapping[str, frozenset[tuple[str, int]]] | None = None
    metadata: Mapping[str, str] | None = None

    def __post_init__(self) -> None:
        if not self.incident_id:
            raise CorpusError("incident_id must be non-empty")
        if not self.cme_report and not self.le_report:
            raise CorpusError(f"incident {self.incident_id!r}: both reports are empty")

    def report(self, tag: str) -> str:
        if tag == "cme":
            return self.cme_report
        if tag == "le":
            return self.le_report
        raise CorpusError(f"unknown report tag {tag!r}")


@dataclass
class GoldRelevanceSet:
    """Binary sentence-relevance labels keyed by (incident, factor, report, index)."""

    labels: dict[tuple[str, str, str, int], bool] = field(default_factory=dict)

    def set_label(self, incident_id: str, factor_id: str, report: str, index: int, relevant: bool) -> None:
        self.labels[(incident_id, factor_id, report, index)] = relevant

    def labels_for(self, incident_id: str, factor_id: str) -> dict[tuple[str, int], bool]:
        return {
            (report, index): relevant
            for (iid, fid, report, index), relevant in self.labels.items()
            if iid == incident_id and fid == factor_id
        }

    def pairs(self) -> set[tuple[str, str]]:
        return {(iid, fid) for (iid, fid, _, _) in self.labels}


def _validate_gold(rec: IncidentRecord, registry: FactorRegistry, line_no: int | None) -> None:
    seg_counts: dict[str, int] = {}
    for mapping in (rec.gold_labels, rec.gold_sentences):
        if mapping is None:
            continue
        for factor_id in mapping:
            if factor_id not in registry:
                raise CorpusError(
                    f"incident {rec.incident_id!r}: unknown factor_id {factor_id!r}", line_no
                )
    if rec.gold_labels:
        for factor_id, value in rec.gold_labels.items():
            if not isinstance(value, bool):
                raise CorpusError(
                    f"incident {rec.incident_id!r}: gold label for {factor_id!r} "
                    f"must be a boolean, got {value!r}",
                    line_no,
                )
    if rec.gold_sentences:
        for factor_id, refs in rec.gold_sentences.items():
            for report, index in refs:
                if report not in REPORT_TAGS:
                    raise CorpusError(
                        f"incident {rec.incident_id!r}: bad report tag {report!r}", line_no
                    )
                if report not in seg_counts:
                    seg_counts[report] = len(segment(report, rec.report(report)))
                if not 0 <= index < seg_counts[report]:
                    raise CorpusError(
                        f"incident {rec.incident_id!r}: gold sentence index {index} for factor "
                        f"{factor_id!r} is out of range for the {report} report",
                        line_no,
                    )


def _record_from_obj(obj: dict, line_no: int | None) -> IncidentRecord:
    if not isinstance(obj, dict):
        raise CorpusError("each line must be a JSON object", line_no)
    if "incident_id" not in obj:
        raise CorpusError("missing incident_id", line_no)
    gold_sentences = None
    if obj.get("gold_sentences") is not None:
        try:
            gold_sentences = {
                factor_id: frozenset((ref["report"], ref["index"]) for ref in refs)
                for factor_id, refs in obj["gold_sentences"].items()
            }
        except (KeyError, TypeError, AttributeError):
            raise CorpusError(
                "malformed gold_sentences: expected factor_id -> "
                '[{"report": ..., "index": ...}]',
                line_no,
            ) from None
    try:
        return IncidentRecord(
            incident_id=obj["incident_id"],
            cme_report=obj.get("cme_report", ""),
            le_report=obj.get("le_report", ""),
            gold_labels=obj.get("gold_labels"),
            gold_sentences=gold_sentences,
            metadata=obj.get("metadata"),
        )
    except CorpusError as exc:
        raise CorpusError(str(exc), line_no) from None


def load_corpus(path: str | Path, registry: FactorRegistry) -> list[IncidentRecord]:
    """Read a line-JSON corpus file, validating every record. Order preserved."""
    records = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"not valid JSON: {exc.msg}", line_no) from None
            rec = _record_from_obj(obj, line_no)
            if rec.incident_id in seen:
                raise CorpusError(f"duplicate incident_id {rec.incident_id!r}", line_no)
            seen.add(rec.incident_id)
            _validate_gold(rec, registry, line_no)
            records.append(rec)
    return records


def record_to_obj(rec: IncidentRecord) -> dict:
    """Canonical JSON object for one record: fixed key order, sorted gold maps."""
    obj: dict = {"incident_id": rec.incident_id}
    obj["cme_report"] = rec.cme_report
    obj["le_report"] = rec.le_report
    if rec.gold_labels is not None:
        obj["gold_labels"] = {k: rec.gold_labels[k] for k in sorted(rec.gold_labels)}
    if rec.gold_sentences is not None:
        obj["gold_sentences"] = {
            factor_id: [
                {"report": report, "index": index}
                for report, index in sorted(rec.gold_sentences[factor_id])
            ]
            for factor_id in sorted(rec.gold_sentences)
        }
    if rec.metadata is not None:
        obj["metadata"] = {k: rec.metadata[k] for k in sorted(rec.metadata)}
    return obj


def write_corpus(path: str | Path, records: Iterable[IncidentRecord]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(record_to_obj(rec), ensure_ascii=False))
            fh.write("\n")


def load_gold_relevance(path: str | Path) -> GoldRelevanceSet:
    gold = GoldRelevanceSet()
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                gold.set_label(
                    obj["incident_id"],
                    obj["factor_id"],
                    obj["report"],
                    obj["index"],
                    {"Relevant": True, "NotRelevant": False}[obj["label"]],
                )
            except (json.JSONDecodeError, KeyError) as exc:
                raise CorpusError(f"bad gold relevance line: {exc}", line_no) from None
    return gold


def write_gold_relevance(path: str | Path, gold: GoldRelevanceSet) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for (incident_id, factor_id, report, index) in sorted(gold.labels):
            relevant = gold.labels[(incident_id, factor_id, report, index)]
            obj = {
                "incident_id": incident_id,
                "factor_id": factor_id,
                "report": report,
                "index": index,
                "label": "Relevant" if relevant else "NotRelevant",
            }
            fh.write(json.dumps(obj, ensure_ascii=False))
            fh.write("\n")


def concat_reports(rec: IncidentRecord) -> str:
    """Join the two reports, shorter first, separated by one blank line.

    Ties go CME-first; an empty report is omitted along with its separator.
    """
    if not rec.cme_report:
        return rec.le_report
    if not rec.le_report:
        return rec.cme_report
    if len(rec.cme_report) <= len(rec.le_report):
        first, second = rec.cme_report, rec.le_report
    else:
        first, second = rec.le_report, rec.cme_report
    return f"{first}\n\n{second}"


def balanced_sample(
    records: list[IncidentRecord], factor_id: str, per_class: int, seed: int
) -> list[IncidentRecord]:
    """Equal-count positive/negative sample for one factor.

    Both classes are capped at min(per_class, smaller class availability) so
    the output stays balanced; the combined sample is shuffled
    deterministically by ``seed``.
    """
    if per_class < 1:
        raise CorpusError("per_class must be positive")
    positives, negatives = [], []
    for rec in records:
        if rec.gold_labels is None or factor_id not in rec.gold_labels:
            raise CorpusError(
                f"incident {rec.incident_id!r} has no gold label for factor {factor_id!r}"
            )
        (positives if rec.gold_labels[factor_id] else negatives).append(rec)
    if not positives or not negatives:
        raise CorpusError(
            f"factor {factor_id!r}: need at least one positive and one negative "
            f"(got {len(positives)} / {len(negatives)})"
        )
    cap = min(per_class, len(positives), len(negatives))
    rng = random.Random(seed)
    sample = rng.sample(positives, cap) + rng.sample(negatives, cap)
    rng.shuffle(sample)
    return sample
