"""Per-(incident, factor) extraction in four modes, with full trace capture.

The multistage mode narrows evidence through three calls — retrieve
candidate sentences per report, verify each candidate, then decide on the
verified descriptions — and records every intermediate product so the final
verdict can be audited (and recomputed) from the trace alone. The other
modes are single-prompt baselines sharing the same trace schema.
"""

from __future__ import annotations

import json
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Mapping

from .backends.base import Backend, BackendError, request_cache_key
from .backends.parse import (
    BOOL_ANSWER,
    BOOL_TWO_WEEKS,
    LIST_RELEVANT,
    TWO_FIELD,
    BoolAnswer,
    PayloadError,
    SentenceList,
    TwoField,
    first_json_object,
    parse_payload,
)
from .corpus import IncidentRecord, concat_reports
from .factors import FactorDefinition, FactorRegistry
from .prompts import render, with_tag
from .segmenter import SentenceSpan, normalize, segment

TRACE_VERSION = 1

MODES = ("multistage", "end2end", "cot", "reasoning")

PARSE_ERROR_POLICIES = ("fail", "negative")

_FINAL_TOKEN_RE = re.compile(r"\b(true|false)\b", re.IGNORECASE)

# Keys under which single-prompt modes may report their supporting sentences.
_REPORTED_SENTENCE_KEYS = ("relevant sentences", "relevant", "sentences")


class PipelineConfigError(ValueError):
    """Bad task/backend configuration; raised before any task runs."""


@dataclass(frozen=True)
class TaskSpec:
    """One (incident, factor) extraction task.

    ``model`` names the backend for single-prompt modes and is the fallback
    for any multistage stage without an explicit backend.
    """

    incident_id: str
    factor_id: str
    mode: str = "multistage"
    model: str = "default"
    retriever: str | None = None
    examiner: str | None = None
    extractor: str | None = None

    def stage_backend_ids(self) -> dict[str, str]:
        if self.mode == "multistage":
            return {
                "retrieval": self.retriever or self.model,
                "verification": self.examiner or self.model,
                "extraction": self.extractor or self.model,
            }
        return {self.mode: self.model}


@dataclass(frozen=True)
class SpanRef:
    report: str
    index: int


@dataclass
class ResponseRecord:
    stage: str
    request_tag: str
    request_hash: str
    backend_id: str
    raw_text: str
    latency_ms: int
    attempts: int


@dataclass
class TraceError:
    stage: str
    kind: str
    message: str


@dataclass(frozen=True)
class ExtractionVerdict:
    incident_id: str
    factor_id: str
    mode: str
    value: bool
    trace_ref: str


@dataclass
class StageTrace:
    """The full evidence chain for one task."""

    incident_id: str
    factor_id: str
    mode: str
    sentences: list[SentenceSpan] = field(default_factory=list)
    retrieved: list[SpanRef] = field(default_factory=list)
    unmatched: list[str] = field(default_factory=list)
    verified: list[SpanRef] = field(default_factory=list)
    responses: list[ResponseRecord] = field(default_factory=list)
    verdict: bool | None = None
    error: TraceError | None = None
    warnings: list[TraceError] = field(default_factory=list)

    @property
    def trace_ref(self) -> str:
        return f"{self.incident_id}/{self.factor_id}/{self.mode}"

    @property
    def ok(self) -> bool:
        return self.error is None

    def extraction_verdict(self) -> ExtractionVerdict:
        if self.verdict is None:
            raise ValueError(f"task {self.trace_ref} has no verdict (stage error)")
        return ExtractionVerdict(
            self.incident_id, self.factor_id, self.mode, self.verdict, self.trace_ref
        )

    def stage_timings_ms(self) -> dict[str, int]:
        timings: dict[str, int] = {}
        for record in self.responses:
            timings[record.stage] = timings.get(record.stage, 0) + record.latency_ms
        return timings

    def to_obj(self) -> dict:
        return {
            "trace_version": TRACE_VERSION,
            "incident_id": self.incident_id,
            "factor_id": self.factor_id,
            "mode": self.mode,
            "sentences": [
                {
                    "report": s.report_tag,
                    "index": s.index,
                    "text": s.text,
                    "char_start": s.char_start,
                    "char_end": s.char_end,
                }
                for s in self.sentences
            ],
            "retrieved": [{"report": r.report, "index": r.index} for r in self.retrieved],
            "unmatched": list(self.unmatched),
            "verified": [{"report": r.report, "index": r.index} for r in self.verified],
            "responses": [
                {
                    "stage": r.stage,
                    "request_tag": r.request_tag,
                    "request_hash": r.request_hash,
                    "backend_id": r.backend_id,
                    "raw_text": r.raw_text,
                    "latency_ms": r.latency_ms,
                    "attempts": r.attempts,
                }
                for r in self.responses
            ],
            "verdict": self.verdict,
            "error": (
                None
                if self.error is None
                else {"stage": self.error.stage, "kind": self.error.kind, "message": self.error.message}
            ),
            "warnings": [
                {"stage": w.stage, "kind": w.kind, "message": w.message} for w in self.warnings
            ],
            "timings_ms": self.stage_timings_ms(),
        }

    @classmethod
    def from_obj(cls, obj: dict) -> "StageTrace":
        if obj.get("trace_version") != TRACE_VERSION:
            raise ValueError(f"unsupported trace_version {obj.get('trace_version')!r}")
        trace = cls(
            incident_id=obj["incident_id"], factor_id=obj["factor_id"], mode=obj["mode"]
        )
        trace.sentences = [
            SentenceSpan(s["report"], s["index"], s["text"], s["char_start"], s["char_end"])
            for s in obj["sentences"]
        ]
        trace.retrieved = [SpanRef(r["report"], r["index"]) for r in obj["retrieved"]]
        trace.unmatched = list(obj["unmatched"])
        trace.verified = [SpanRef(r["report"], r["index"]) for r in obj["verified"]]
        trace.responses = [
            ResponseRecord(
                r["stage"],
                r["request_tag"],
                r["request_hash"],
                r["backend_id"],
                r["raw_text"],
                r["latency_ms"],
                r["attempts"],
            )
            for r in obj["responses"]
        ]
        trace.verdict = obj["verdict"]
        if obj.get("error"):
            e = obj["error"]
            trace.error = TraceError(e["stage"], e["kind"], e["message"])
        trace.warnings = [
            TraceError(w["stage"], w["kind"], w["message"]) for w in obj.get("warnings", [])
        ]
        return trace


def match_sentences(
    candidates: Iterable[str], spans: list[SentenceSpan]
) -> tuple[list[SentenceSpan], list[str]]:
    """Reconcile model-returned sentence strings with source spans.

    A candidate matches by normalized equality, else by normalized
    containment when exactly one span qualifies; anything ambiguous or
    ungrounded stays unmatched. Duplicate candidates collapse onto one span
    and the matched list preserves span order.
    """
    normalized = [(span, normalize(span.text)) for span in spans]
    matched: dict[tuple[str, int], SentenceSpan] = {}
    unmatched: list[str] = []
    for candidate in candidates:
        norm = normalize(candidate)
        if not norm:
            unmatched.append(candidate)
            continue
        exact = [span for span, ns in normalized if ns == norm]
        hit: SentenceSpan | None = None
        if len(exact) == 1:
            hit = exact[0]
        elif not exact:
            contained = [
                span for span, ns in normalized if ns and (norm in ns or ns in norm)
            ]
            if len(contained) == 1:
                hit = contained[0]
        if hit is None:
            unmatched.append(candidate)
        else:
            matched.setdefault((hit.report_tag, hit.index), hit)
    ordered = sorted(matched.values(), key=lambda s: (s.report_tag, s.index))
    return ordered, unmatched


def _segment_record(rec: IncidentRecord) -> list[SentenceSpan]:
    return segment("cme", rec.cme_report) + segment("le", rec.le_report)


def _bindings(factor: FactorDefinition, **extra: str) -> dict[str, str]:
    return {
        "TARGET_SOCIAL_FACTOR": factor.name,
        "FACTOR_DEFINITION": factor.definition,
        **extra,
    }


class _StageFailure(Exception):
    def __init__(self, trace_error: TraceError):
        self.trace_error = trace_error


class TaskRunner:
    """Executes tasks against resolved backends with a parse-error policy."""

    def __init__(
        self,
        records: Mapping[str, IncidentRecord],
        registry: FactorRegistry,
        backends: Mapping[str, Backend],
        on_parse_error: str = "fail",
    ):
        if on_parse_error not in PARSE_ERROR_POLICIES:
            raise PipelineConfigError(
                f"on_parse_error must be one of {PARSE_ERROR_POLICIES}, got {on_parse_error!r}"
            )
        self._records = records
        self._registry = registry
        self._backends = backends
        self._on_parse_error = on_parse_error

    def validate(self, task: TaskSpec) -> None:
        if task.mode not in MODES:
            raise PipelineConfigError(f"unknown mode {task.mode!r}")
        if task.incident_id not in self._records:
            raise PipelineConfigError(f"unknown incident_id {task.incident_id!r}")
        if task.factor_id not in self._registry:
            raise PipelineConfigError(f"unknown factor_id {task.factor_id!r}")
        for stage, backend_id in task.stage_backend_ids().items():
            if backend_id not in self._backends:
                raise PipelineConfigError(
                    f"task {task.incident_id}/{task.factor_id}: no backend {backend_id!r} "
                    f"configured for stage {stage!r}"
                )

    def run_task(self, task: TaskSpec) -> StageTrace:
        runners = {
            "multistage": self._run_multistage,
            "end2end": self._run_end2end,
            "cot": self._run_cot,
            "reasoning": self._run_reasoning,
        }
        rec = self._records[task.incident_id]
        factor = self._registry[task.factor_id]
        trace = StageTrace(incident_id=task.incident_id, factor_id=task.factor_id, mode=task.mode)
        try:
            runners[task.mode](task, rec, factor, trace)
        except _StageFailure as failure:
            trace.error = failure.trace_error
            trace.verdict = None
        except Exception as exc:  # isolation: a task never kills the batch
            trace.error = TraceError(stage=task.mode, kind="internal", message=str(exc))
            trace.verdict = None
        return trace

    def _backend(self, task: TaskSpec, stage: str) -> Backend:
        return self._backends[task.stage_backend_ids()[stage]]

    def _call(self, task: TaskSpec, stage: str, req, trace: StageTrace, suffix: str = ""):
        tag = f"{task.incident_id}/{task.factor_id}/{stage}{suffix}"
        req = with_tag(req, tag)
        try:
            response = self._backend(task, stage).complete(req)
        except BackendError as exc:
            raise _StageFailure(TraceError(stage, "transport", str(exc))) from exc
        trace.responses.append(
            ResponseRecord(
                stage=stage,
                request_tag=tag,
                request_hash=request_cache_key(req),
                backend_id=response.backend_id,
                raw_text=response.raw_text,
                latency_ms=response.latency_ms,
                attempts=response.attempts,
            )
        )
        return response

    def _parse(self, stage: str, raw_text: str, expected, trace: StageTrace):
        """Parse a stage answer; under the 'negative' policy a parse failure
        downgrades to a warning and the caller receives None."""
        try:
            return parse_payload(raw_text, expected)
        except PayloadError as exc:
            error = TraceError(stage, "parse", str(exc))
            if self._on_parse_error == "negative":
                error.kind = "parse-defaulted-negative"
                trace.warnings.append(error)
                return None
            raise _StageFailure(error) from exc

    # --- multistage -----------------------------------------------------

    def _run_multistage(
        self, task: TaskSpec, rec: IncidentRecord, factor: FactorDefinition, trace: StageTrace
    ) -> None:
        trace.sentences = _segment_record(rec)
        spans_by_report = {
            "cme": [s for s in trace.sentences if s.report_tag == "cme"],
            "le": [s for s in trace.sentences if s.report_tag == "le"],
        }
        retrieved: list[SentenceSpan] = []
        for tag in ("cme", "le"):
            report_text = rec.report(tag)
            if not report_text:
                continue
            req = render("retrieval", _bindings(factor, INPUT_REPORT=report_text))
            response = self._call(task, "retrieval", req, trace, suffix=f"/{tag}")
            parsed = self._parse("retrieval", response.raw_text, LIST_RELEVANT, trace)
            if parsed is None:
                continue
            assert isinstance(parsed, SentenceList)
            matched, unmatched = match_sentences(parsed.values, spans_by_report[tag])
            retrieved.extend(matched)
            trace.unmatched.extend(unmatched)
        trace.retrieved = [SpanRef(s.report_tag, s.index) for s in retrieved]

        verified: list[SentenceSpan] = []
        for i, span in enumerate(retrieved):
            req = render("verification", _bindings(factor, TARGET_SENTENCE=span.text))
            response = self._call(task, "verification", req, trace, suffix=f"/{i}")
            parsed = self._parse("verification", response.raw_text, BOOL_ANSWER, trace)
            if parsed is None:
                continue
            assert isinstance(parsed, BoolAnswer)
            if parsed.value:
                verified.append(span)
        trace.verified = [SpanRef(s.report_tag, s.index) for s in verified]

        if not verified:
            # Nothing survived verification: negative without a stage-3 call.
            trace.verdict = False
            return
        seen: set[str] = set()
        descriptions = []
        for span in verified:
            if span.text not in seen:
                seen.add(span.text)
                descriptions.append(span.text)
        req = render(
            "extraction", _bindings(factor, RELEVANT_DESCRIPTIONS="\n".join(descriptions))
        )
        response = self._call(task, "extraction", req, trace)
        parsed = self._parse("extraction", response.raw_text, BOOL_TWO_WEEKS, trace)
        if parsed is None:
            trace.verdict = False
            return
        assert isinstance(parsed, BoolAnswer)
        trace.verdict = parsed.value

    # --- single-prompt modes --------------------------------------------

    def _record_reported_sentences(self, raw_text: str, trace: StageTrace) -> None:
        obj = first_json_object(raw_text)
        if obj is None:
            return
        for key, value in obj.items():
            if key.strip().strip("\"'`").lower() in _REPORTED_SENTENCE_KEYS:
                if isinstance(value, list) and all(isinstance(v, str) for v in value):
                    matched, unmatched = match_sentences(value, trace.sentences)
                    trace.retrieved = [SpanRef(s.report_tag, s.index) for s in matched]
                    trace.unmatched.extend(unmatched)
                return

    def _run_end2end(
        self, task: TaskSpec, rec: IncidentRecord, factor: FactorDefinition, trace: StageTrace
    ) -> None:
        trace.sentences = _segment_record(rec)
        req = render("end2end", _bindings(factor, INPUT_REPORT=concat_reports(rec)))
        response = self._call(task, "end2end", req, trace)
        parsed = self._parse("end2end", response.raw_text, BOOL_TWO_WEEKS, trace)
        if parsed is None:
            trace.verdict = False
            return
        assert isinstance(parsed, BoolAnswer)
        trace.verdict = parsed.value

    def _run_cot(
        self, task: TaskSpec, rec: IncidentRecord, factor: FactorDefinition, trace: StageTrace
    ) -> None:
        trace.sentences = _segment_record(rec)
        req = render("cot", _bindings(factor, INPUT_REPORT=concat_reports(rec)))
        response = self._call(task, "cot", req, trace)
        parsed = self._parse("cot", response.raw_text, TWO_FIELD, trace)
        if parsed is None:
            trace.verdict = False
            return
        assert isinstance(parsed, TwoField)
        self._record_reported_sentences(response.raw_text, trace)
        trace.verdict = parsed.mentioned and bool(parsed.within_two_weeks)

    def _run_reasoning(
        self, task: TaskSpec, rec: IncidentRecord, factor: FactorDefinition, trace: StageTrace
    ) -> None:
        trace.sentences = _segment_record(rec)
        req = render("reasoning", _bindings(factor, INPUT_REPORT=concat_reports(rec)))
        response = self._call(task, "reasoning", req, trace)
        tokens = _FINAL_TOKEN_RE.findall(response.raw_text)
        if not tokens:
            error = TraceError("reasoning", "parse", "no final True/False token in response")
            if self._on_parse_error == "negative":
                error.kind = "parse-defaulted-negative"
                trace.warnings.append(error)
                trace.verdict = False
                return
            raise _StageFailure(error)
        trace.verdict = tokens[-1].lower() == "true"


def run_batch(
    tasks: Iterable[TaskSpec],
    records: Iterable[IncidentRecord] | Mapping[str, IncidentRecord],
    registry: FactorRegistry,
    backends: Mapping[str, Backend],
    width: int = 1,
    on_parse_error: str = "fail",
) -> Iterator[StageTrace]:
    """Run tasks with bounded parallelism, yielding traces ordered by
    (incident_id, factor_id) regardless of completion order.

    Configuration problems abort before any task runs; failures inside a
    task are recorded on its trace and never abort the batch.
    """
    if width < 1:
        raise PipelineConfigError(f"width must be >= 1, got {width}")
    if not isinstance(records, Mapping):
        records = {rec.incident_id: rec for rec in records}
    runner = TaskRunner(records, registry, backends, on_parse_error=on_parse_error)
    ordered = sorted(tasks, key=lambda t: (t.incident_id, t.factor_id, t.mode))
    for task in ordered:
        runner.validate(task)
    if not ordered:
        return
    if width == 1:
        for task in ordered:
            yield runner.run_task(task)
        return
    with ThreadPoolExecutor(max_workers=width) as pool:
        futures = [pool.submit(runner.run_task, task) for task in ordered]
        for future in futures:
            yield future.result()


def write_traces(path: str | Path, traces: Iterable[StageTrace]) -> tuple[int, int]:
    """Write line-JSON traces; returns (succeeded, failed) counts."""
    ok = failed = 0
    with open(path, "w", encoding="utf-8") as fh:
        for trace in traces:
            fh.write(json.dumps(trace.to_obj(), ensure_ascii=False))
            fh.write("\n")
            if trace.ok:
                ok += 1
            else:
                failed += 1
    return ok, failed


def read_traces(path: str | Path) -> list[StageTrace]:
    traces = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                traces.append(StageTrace.from_obj(json.loads(line)))
    return traces


def write_verdicts(path: str | Path, traces: Iterable[StageTrace]) -> int:
    """Write the verdict-only line-JSON stream; failed tasks are skipped."""
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for trace in traces:
            if not trace.ok:
                continue
            obj = {
                "incident_id": trace.incident_id,
                "factor_id": trace.factor_id,
                "mode": trace.mode,
                "value": trace.verdict,
            }
            fh.write(json.dumps(obj, ensure_ascii=False))
            fh.write("\n")
            n += 1
    return n


def read_verdicts(path: str | Path) -> list[ExtractionVerdict]:
    verdicts = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)
            verdicts.append(
                ExtractionVerdict(
                    incident_id=obj["incident_id"],
                    factor_id=obj["factor_id"],
                    mode=obj["mode"],
                    value=obj["value"],
                    trace_ref=f"{obj['incident_id']}/{obj['factor_id']}/{obj['mode']}",
                )
            )
    return verdicts


def replay_verdict(trace: StageTrace) -> bool | None:
    """Recompute the verdict from the stored raw responses alone."""
    if trace.mode == "multistage":
        if not trace.verified:
            return False
        final = [r for r in trace.responses if r.stage == "extraction"]
        if not final:
            return False
        parsed = parse_payload(final[-1].raw_text, BOOL_TWO_WEEKS)
        assert isinstance(parsed, BoolAnswer)
        return parsed.value
    if trace.mode == "end2end":
        parsed = parse_payload(trace.responses[-1].raw_text, BOOL_TWO_WEEKS)
        assert isinstance(parsed, BoolAnswer)
        return parsed.value
    if trace.mode == "cot":
        parsed = parse_payload(trace.responses[-1].raw_text, TWO_FIELD)
        assert isinstance(parsed, TwoField)
        return parsed.mentioned and bool(parsed.within_two_weeks)
    if trace.mode == "reasoning":
        tokens = _FINAL_TOKEN_RE.findall(trace.responses[-1].raw_text)
        return tokens[-1].lower() == "true" if tokens else None
    raise ValueError(f"unknown mode {trace.mode!r}")
