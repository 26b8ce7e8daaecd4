"""Study configuration and report arithmetic for the two-arm annotation study.

Pure functions over stored events; the HTTP layer in ``service`` stays thin.
"""

from __future__ import annotations

import json
import random
import statistics
from dataclasses import dataclass, field
from importlib import resources
from typing import Mapping

from ..corpus import IncidentRecord
from ..factors import FactorRegistry
from ..pipeline import StageTrace

ARMS = ("control", "intervention")

DEFAULT_MIN_ARM_GAP_SECONDS = 24 * 3600.0


class StudyError(ValueError):
    """Invalid study configuration or report request."""


def load_questionnaire() -> list[dict]:
    """The shared question fixture: id, wording, and scale anchors."""
    text = resources.files("sdohx.data").joinpath("questionnaire.json").read_text("utf-8")
    return json.loads(text)


def questionnaire_ranges(questions: list[dict]) -> dict[str, int]:
    return {q["id"]: len(q["scale"]) for q in questions}


def validate_answers(answers: Mapping[str, object], questions: list[dict]) -> dict[str, int]:
    """Enforce presence and range of every questionnaire answer."""
    ranges = questionnaire_ranges(questions)
    missing = sorted(set(ranges) - set(answers))
    if missing:
        raise StudyError(f"missing answers: {missing}")
    unknown = sorted(set(answers) - set(ranges))
    if unknown:
        raise StudyError(f"unknown question ids: {unknown}")
    clean: dict[str, int] = {}
    for qid, top in ranges.items():
        value = answers[qid]
        if not isinstance(value, int) or isinstance(value, bool) or not 1 <= value <= top:
            raise StudyError(f"{qid}: answer must be an integer in 1..{top}, got {value!r}")
        clean[qid] = value
    return clean


@dataclass(frozen=True)
class StudyConfig:
    study_id: str
    factors: tuple[str, ...]
    incidents: tuple[str, ...]
    min_arm_gap_seconds: float = DEFAULT_MIN_ARM_GAP_SECONDS
    highlights_enabled: bool = True
    seed: int = 0

    def items(self) -> list[tuple[str, str]]:
        return [(incident, factor) for incident in self.incidents for factor in self.factors]

    def item_order(self, annotator_id: str) -> list[tuple[str, str]]:
        """Per-annotator item order: seeded shuffle, identical in both arms."""
        items = self.items()
        random.Random(f"{self.seed}:{annotator_id}").shuffle(items)
        return items

    def to_obj(self) -> dict:
        return {
            "study_id": self.study_id,
            "factors": list(self.factors),
            "incidents": list(self.incidents),
            "min_arm_gap_seconds": self.min_arm_gap_seconds,
            "highlights_enabled": self.highlights_enabled,
            "seed": self.seed,
        }

    @classmethod
    def from_obj(cls, obj: dict) -> "StudyConfig":
        return cls(
            study_id=obj["study_id"],
            factors=tuple(obj["factors"]),
            incidents=tuple(obj["incidents"]),
            min_arm_gap_seconds=obj.get("min_arm_gap_seconds", DEFAULT_MIN_ARM_GAP_SECONDS),
            highlights_enabled=obj.get("highlights_enabled", True),
            seed=obj.get("seed", 0),
        )


def validate_study(
    config: StudyConfig,
    records: Mapping[str, IncidentRecord],
    registry: FactorRegistry,
    traces: Mapping[tuple[str, str], StageTrace],
) -> None:
    """Reject configs with dangling references, listing every one."""
    problems = []
    if not config.factors or not config.incidents:
        problems.append("study needs at least one factor and one incident")
    for factor_id in config.factors:
        if factor_id not in registry:
            problems.append(f"unknown factor {factor_id!r}")
    for incident_id in config.incidents:
        if incident_id not in records:
            problems.append(f"unknown incident {incident_id!r}")
    if config.highlights_enabled:
        for incident_id, factor_id in config.items():
            if incident_id in records and factor_id in registry:
                if (incident_id, factor_id) not in traces:
                    problems.append(f"no trace for {incident_id}/{factor_id}")
    for record in records.values():
        if record.incident_id in config.incidents and record.gold_labels is None:
            problems.append(f"incident {record.incident_id!r} has no gold labels")
    if problems:
        raise StudyError("; ".join(problems))


@dataclass
class ArmReport:
    n_sessions: int = 0
    n_completed_sessions: int = 0
    n_decisions: int = 0
    n_correct: int = 0
    item_seconds: list[float] = field(default_factory=list)
    incident_seconds: list[float] = field(default_factory=list)
    questionnaire: dict[str, dict[str, int]] = field(default_factory=dict)

    @property
    def accuracy(self) -> float:
        return self.n_correct / self.n_decisions if self.n_decisions else 0.0

    def to_obj(self) -> dict:
        return {
            "n_sessions": self.n_sessions,
            "n_completed_sessions": self.n_completed_sessions,
            "n_decisions": self.n_decisions,
            "n_correct": self.n_correct,
            "accuracy": self.accuracy,
            "mean_item_seconds": statistics.fmean(self.item_seconds) if self.item_seconds else 0.0,
            "median_item_seconds": statistics.median(self.item_seconds) if self.item_seconds else 0.0,
            "mean_incident_seconds": (
                statistics.fmean(self.incident_seconds) if self.incident_seconds else 0.0
            ),
            "median_incident_seconds": (
                statistics.median(self.incident_seconds) if self.incident_seconds else 0.0
            ),
            "questionnaire": self.questionnaire,
        }


def compute_study_report(
    config: StudyConfig,
    sessions: list,
    events: list,
    questionnaires: list,
    records: Mapping[str, IncidentRecord],
) -> dict:
    """Accuracy, timing (per item and per incident), and questionnaire
    distributions for each arm, plus between-arm time savings."""
    arms = {arm: ArmReport() for arm in ARMS}
    session_arm: dict[str, str] = {}
    for session in sessions:
        arm = session["arm"]
        session_arm[session["session_id"]] = arm
        arms[arm].n_sessions += 1
        if session["completed_at"] is not None:
            arms[arm].n_completed_sessions += 1
    for arm in ARMS:
        if arms[arm].n_completed_sessions == 0:
            raise StudyError(f"no completed {arm} sessions yet")

    per_incident: dict[tuple[str, str], float] = {}
    for event in events:
        arm = event["arm"]
        report = arms[arm]
        report.n_decisions += 1
        gold = records[event["incident_id"]].gold_labels or {}
        if bool(event["decision"]) == bool(gold.get(event["factor_id"])):
            report.n_correct += 1
        elapsed = event["submitted_at"] - event["served_at"]
        report.item_seconds.append(elapsed)
        key = (event["session_id"], event["incident_id"])
        per_incident[key] = per_incident.get(key, 0.0) + elapsed
    for (session_id, _), total in per_incident.items():
        arms[session_arm[session_id]].incident_seconds.append(total)

    for row in questionnaires:
        answers = json.loads(row["answers_json"])
        dist = arms[row["arm"]].questionnaire
        for qid, value in answers.items():
            dist.setdefault(qid, {})
            dist[qid][str(value)] = dist[qid].get(str(value), 0) + 1

    control = arms["control"].to_obj()
    intervention = arms["intervention"].to_obj()
    return {
        "study_id": config.study_id,
        "arms": {"control": control, "intervention": intervention},
        "mean_item_seconds_saving": (
            control["mean_item_seconds"] - intervention["mean_item_seconds"]
        ),
        "mean_incident_seconds_saving": (
            control["mean_incident_seconds"] - intervention["mean_incident_seconds"]
        ),
    }
