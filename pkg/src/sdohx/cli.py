"""Command-line entry point.

Subcommands: ``corpus gen``, ``extract``, ``eval extraction|retrieval|kappa``,
``annotate serve|report``, ``prompts show``, ``segment``. Exit codes: 0
success, 1 task failures, 2 usage or configuration errors.
"""

from __future__ import annotations

import hashlib
import json
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

import click

from . import evaluation, pipeline, prompts, synth
from .backends import (
    Backend,
    NoisyRetrieverBackend,
    RateLimiter,
    RemoteBackend,
    ReplayBackend,
    RuleMockBackend,
)
from .corpus import (
    CorpusError,
    load_corpus,
    load_gold_relevance,
    write_corpus,
    write_gold_relevance,
)
from .backends.remote import ENV_API_BASE
from .factors import FactorRegistry, RegistryError, builtin_registry, load_registry
from .segmenter import ABBREVIATIONS, segment


def _registry_from(path: str | None) -> FactorRegistry:
    try:
        return load_registry(path) if path else builtin_registry()
    except RegistryError as exc:
        raise click.UsageError(str(exc)) from exc


def _load_records(corpus_path: str, registry: FactorRegistry):
    try:
        return load_corpus(corpus_path, registry)
    except (CorpusError, OSError) as exc:
        raise click.UsageError(f"cannot load corpus: {exc}") from exc


@click.group()
def main() -> None:
    """Staged-extraction toolkit: corpus, pipeline, evaluation, study service."""


# --- corpus ------------------------------------------------------------------


@main.group("corpus")
def corpus_group() -> None:
    """Corpus file operations."""


@corpus_group.command("gen")
@click.option("--seed", type=int, required=True, help="Generator seed; output is a pure function of it.")
@click.option("--incidents", "n_incidents", type=int, required=True)
@click.option("--factors", default="", help="Comma-separated factor ids (default: all 18).")
@click.option("--registry", "registry_path", default=None, type=click.Path(exists=True))
@click.option("--positive-rate", type=float, default=0.35, show_default=True)
@click.option("--out-of-window-rate", type=float, default=0.2, show_default=True)
@click.option("--noise-rate", type=float, default=0.5, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--gold-out", "gold_path", default=None, type=click.Path(), help="Sentence-relevance gold file.")
def corpus_gen(
    seed: int,
    n_incidents: int,
    factors: str,
    registry_path: str | None,
    positive_rate: float,
    out_of_window_rate: float,
    noise_rate: float,
    out_path: str,
    gold_path: str | None,
) -> None:
    """Generate a seeded synthetic corpus."""
    registry = _registry_from(registry_path)
    factor_ids = tuple(f for f in factors.split(",") if f) if factors else ()
    spec = synth.GeneratorSpec(
        seed=seed,
        n_incidents=n_incidents,
        factor_ids=factor_ids,
        positive_rate=positive_rate,
        out_of_window_rate=out_of_window_rate,
        noise_rate=noise_rate,
    )
    try:
        records, gold = synth.generate_corpus(spec, registry)
        write_corpus(out_path, records)
        if gold_path:
            write_gold_relevance(gold_path, gold)
    except synth.GeneratorError as exc:
        raise click.UsageError(str(exc)) from exc
    except OSError as exc:
        raise click.UsageError(f"cannot write output: {exc}") from exc
    counts: dict[str, int] = {}
    for rec in records:
        for factor_id, value in (rec.gold_labels or {}).items():
            if value:
                counts[factor_id] = counts.get(factor_id, 0) + 1
    click.echo(f"wrote {len(records)} incidents to {out_path}")
    for factor_id in sorted(counts):
        click.echo(f"  {factor_id}: {counts[factor_id]} positive")


# --- extract -----------------------------------------------------------------


def _build_backend(
    spec: str, seed: int, noisy_drop: float, noisy_inject: float, rpm: float | None
) -> Backend:
    limiter = RateLimiter(rpm) if rpm else None
    try:
        if spec == "rule-mock":
            return RuleMockBackend()
        if spec == "noisy-mock":
            return NoisyRetrieverBackend(seed=seed, drop_rate=noisy_drop, inject_rate=noisy_inject)
        if spec == "remote" or spec.startswith("remote:"):
            model = spec.partition(":")[2] or None
            return RemoteBackend(model=model, rate_limiter=limiter)
        if spec.startswith("replay:"):
            rest = spec.partition(":")[2]
            cache_dir, _, inner_spec = rest.partition("+")
            if not cache_dir:
                raise click.UsageError("replay backend needs a cache dir: replay:DIR[+INNER]")
            if not inner_spec and os.environ.get(ENV_API_BASE):
                inner_spec = "remote"  # bare replay over a configured endpoint
            inner = (
                _build_backend(inner_spec, seed, noisy_drop, noisy_inject, rpm)
                if inner_spec
                else None
            )
            return ReplayBackend(cache_dir, inner=inner)
    except ValueError as exc:
        raise click.UsageError(str(exc)) from exc
    raise click.UsageError(
        f"unknown backend {spec!r} (expected rule-mock, noisy-mock, remote[:MODEL], "
        f"or replay:DIR[+INNER])"
    )


@main.command("extract")
@click.option("--corpus", "corpus_path", required=True, type=click.Path(exists=True))
@click.option("--registry", "registry_path", default=None, type=click.Path(exists=True))
@click.option("--mode", type=click.Choice(pipeline.MODES), default="multistage", show_default=True)
@click.option("--backend", "backend_spec", default="rule-mock", show_default=True,
              help="rule-mock, noisy-mock, remote[:MODEL], or replay:DIR[+INNER].")
@click.option("--retriever-backend", default=None, help="Override the stage-1 backend.")
@click.option("--examiner-backend", default=None, help="Override the stage-2 backend.")
@click.option("--extractor-backend", default=None, help="Override the stage-3 backend.")
@click.option("--factors", default="", help="Comma-separated factor ids (default: factors with gold labels).")
@click.option("--width", type=int, default=1, show_default=True, help="Parallel task width.")
@click.option("--seed", type=int, default=0, show_default=True, help="Seed for seeded backends.")
@click.option("--noisy-drop", type=float, default=0.2, show_default=True)
@click.option("--noisy-inject", type=float, default=0.3, show_default=True)
@click.option("--rpm", type=float, default=None, help="Rate limit for remote backends (requests/minute).")
@click.option("--on-parse-error", type=click.Choice(pipeline.PARSE_ERROR_POLICIES),
              default="fail", show_default=True)
@click.option("--out", "verdicts_path", required=True, type=click.Path())
@click.option("--traces", "traces_path", default=None, type=click.Path())
def extract(
    corpus_path: str,
    registry_path: str | None,
    mode: str,
    backend_spec: str,
    retriever_backend: str | None,
    examiner_backend: str | None,
    extractor_backend: str | None,
    factors: str,
    width: int,
    seed: int,
    noisy_drop: float,
    noisy_inject: float,
    rpm: float | None,
    on_parse_error: str,
    verdicts_path: str,
    traces_path: str | None,
) -> None:
    """Run the extraction pipeline over every (incident, factor) task."""
    registry = _registry_from(registry_path)
    records = _load_records(corpus_path, registry)

    if factors:
        factor_ids = [f for f in factors.split(",") if f]
    else:
        labeled = {f for rec in records for f in (rec.gold_labels or {})}
        factor_ids = sorted(labeled) if labeled else registry.ids()
    specs = {backend_spec, retriever_backend or backend_spec,
             examiner_backend or backend_spec, extractor_backend or backend_spec}
    backends = {
        s: _build_backend(s, seed, noisy_drop, noisy_inject, rpm) for s in specs
    }
    tasks = [
        pipeline.TaskSpec(
            incident_id=rec.incident_id,
            factor_id=factor_id,
            mode=mode,
            model=backend_spec,
            retriever=retriever_backend,
            examiner=examiner_backend,
            extractor=extractor_backend,
        )
        for rec in records
        for factor_id in factor_ids
    ]
    try:
        traces_iter = pipeline.run_batch(
            tasks, records, registry, backends, width=width, on_parse_error=on_parse_error
        )
        ok = failed = 0
        trace_fh = open(traces_path, "w", encoding="utf-8") if traces_path else None
        try:
            with open(verdicts_path, "w", encoding="utf-8") as verdict_fh:
                for trace in traces_iter:
                    if trace_fh is not None:
                        trace_fh.write(json.dumps(trace.to_obj(), ensure_ascii=False))
                        trace_fh.write("\n")
                    if trace.ok:
                        ok += 1
                        verdict = trace.extraction_verdict()
                        verdict_fh.write(
                            json.dumps(
                                {
                                    "incident_id": verdict.incident_id,
                                    "factor_id": verdict.factor_id,
                                    "mode": verdict.mode,
                                    "value": verdict.value,
                                },
                                ensure_ascii=False,
                            )
                        )
                        verdict_fh.write("\n")
                    else:
                        failed += 1
        finally:
            if trace_fh is not None:
                trace_fh.close()
    except pipeline.PipelineConfigError as exc:
        raise click.UsageError(str(exc)) from exc
    click.echo(f"{ok} tasks succeeded, {failed} failed")
    if failed:
        sys.exit(1)


# --- eval --------------------------------------------------------------------


@main.group("eval")
def eval_group() -> None:
    """Score verdicts and traces against gold."""


@eval_group.command("extraction")
@click.option("--verdicts", "verdicts_path", required=True, type=click.Path(exists=True))
@click.option("--corpus", "corpus_path", required=True, type=click.Path(exists=True))
@click.option("--registry", "registry_path", default=None, type=click.Path(exists=True))
@click.option("--traces", "traces_path", default=None, type=click.Path(exists=True),
              help="Include incidents whose every task failed (absent from the verdict file).")
@click.option("--out-json", default="report.json", show_default=True, type=click.Path())
@click.option("--out-text", default="report.txt", show_default=True, type=click.Path())
@click.option("--max-failure-rate", type=float, default=0.0, show_default=True,
              help="Exit nonzero when any factor's missing-task rate exceeds this.")
def eval_extraction(
    verdicts_path: str,
    corpus_path: str,
    registry_path: str | None,
    traces_path: str | None,
    out_json: str,
    out_text: str,
    max_failure_rate: float,
) -> None:
    """Precision/recall/F1/accuracy per factor and mode."""
    registry = _registry_from(registry_path)
    records = _load_records(corpus_path, registry)
    verdicts = pipeline.read_verdicts(verdicts_path)
    covered = {v.incident_id for v in verdicts}
    if traces_path:
        covered |= {t.incident_id for t in pipeline.read_traces(traces_path)}
    predictions = {(v.incident_id, v.factor_id, v.mode): v.value for v in verdicts}
    factor_ids = {v.factor_id for v in verdicts}
    gold = {
        (rec.incident_id, factor_id): bool((rec.gold_labels or {}).get(factor_id))
        for rec in records
        if rec.incident_id in covered and rec.gold_labels
        for factor_id in rec.gold_labels
        if factor_id in factor_ids
    }
    corpus_sha256 = hashlib.sha256(Path(corpus_path).read_bytes()).hexdigest()
    try:
        report = evaluation.build_eval_report(
            predictions,
            gold,
            metadata={
                "verdicts": str(verdicts_path),
                "corpus": str(corpus_path),
                "corpus_sha256": corpus_sha256,
                "generated_at": datetime.now(timezone.utc).isoformat(),
            },
        )
        evaluation.render_report(report, "json", out_json)
        evaluation.render_report(report, "text", out_text)
    except evaluation.EvalError as exc:
        raise click.UsageError(str(exc)) from exc
    click.echo(Path(out_text).read_text(encoding="utf-8"), nl=False)
    for row in report.rows:
        rate = row.n_missing / (row.n_missing + row.counts.total)
        if rate > max_failure_rate:
            click.echo(
                f"factor {row.factor_id} ({row.mode}): failure rate {rate:.3f} exceeds "
                f"{max_failure_rate:.3f}",
                err=True,
            )
            sys.exit(1)


@eval_group.command("retrieval")
@click.option("--traces", "traces_path", required=True, type=click.Path(exists=True))
@click.option("--gold", "gold_path", required=True, type=click.Path(exists=True))
@click.option("--out-json", default="retrieval.json", show_default=True, type=click.Path())
@click.option("--out-text", default="retrieval.txt", show_default=True, type=click.Path())
def eval_retrieval(traces_path: str, gold_path: str, out_json: str, out_text: str) -> None:
    """Stage-wise accuracy of retrieved and verified sentences."""
    traces = pipeline.read_traces(traces_path)
    gold = load_gold_relevance(gold_path)
    try:
        report = evaluation.retrieval_accuracy(traces, gold)
        evaluation.render_report(report, "json", out_json)
        evaluation.render_report(report, "text", out_text)
    except evaluation.EvalError as exc:
        raise click.UsageError(str(exc)) from exc
    click.echo(Path(out_text).read_text(encoding="utf-8"), nl=False)


def _read_labels(path: str) -> list[bool]:
    truthy = {"true", "1", "yes", "relevant"}
    falsy = {"false", "0", "no", "notrelevant"}
    labels = []
    for line_no, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        word = line.strip().lower()
        if not word:
            continue
        if word in truthy:
            labels.append(True)
        elif word in falsy:
            labels.append(False)
        else:
            raise click.UsageError(f"{path}:{line_no}: not a binary label: {line.strip()!r}")
    return labels


@eval_group.command("kappa")
@click.option("--a", "path_a", required=True, type=click.Path(exists=True))
@click.option("--b", "path_b", required=True, type=click.Path(exists=True))
def eval_kappa(path_a: str, path_b: str) -> None:
    """Inter-annotator agreement between two label files (one label per line)."""
    try:
        value = evaluation.cohens_kappa(_read_labels(path_a), _read_labels(path_b))
    except evaluation.EvalError as exc:
        raise click.UsageError(str(exc)) from exc
    click.echo(f"kappa: {value:.4f}")


# --- annotate ----------------------------------------------------------------


def _load_traces_by_pair(traces_path: str) -> dict[tuple[str, str], pipeline.StageTrace]:
    return {
        (t.incident_id, t.factor_id): t for t in pipeline.read_traces(traces_path)
    }


@main.group("annotate")
def annotate_group() -> None:
    """The two-arm annotation study service."""


@annotate_group.command("serve")
@click.option("--corpus", "corpus_path", required=True, type=click.Path(exists=True))
@click.option("--registry", "registry_path", default=None, type=click.Path(exists=True))
@click.option("--traces", "traces_path", default=None, type=click.Path(),
              help="Trace file backing intervention-arm highlights.")
@click.option("--store", "store_path", default="study.db", show_default=True, type=click.Path())
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8400, show_default=True)
@click.option("--ui-dir", default=None, type=click.Path(), help="Static UI bundle to serve at /.")
def annotate_serve(
    corpus_path: str,
    registry_path: str | None,
    traces_path: str | None,
    store_path: str,
    host: str,
    port: int,
    ui_dir: str | None,
) -> None:
    """Serve the annotation study API (and UI bundle, when built)."""
    import uvicorn

    from .annotation import StudyStore, create_app

    registry = _registry_from(registry_path)
    records = {rec.incident_id: rec for rec in _load_records(corpus_path, registry)}
    traces = {}
    if traces_path:
        if not Path(traces_path).exists():
            raise click.UsageError(f"trace file {traces_path!r} does not exist")
        traces = _load_traces_by_pair(traces_path)
    app = create_app(records, registry, traces, StudyStore(store_path), ui_dir=ui_dir)
    uvicorn.run(app, host=host, port=port)


@annotate_group.command("report")
@click.option("--corpus", "corpus_path", required=True, type=click.Path(exists=True))
@click.option("--registry", "registry_path", default=None, type=click.Path(exists=True))
@click.option("--store", "store_path", required=True, type=click.Path(exists=True))
@click.option("--study-id", required=True)
def annotate_report(
    corpus_path: str, registry_path: str | None, store_path: str, study_id: str
) -> None:
    """Print the study report as JSON."""
    from .annotation import StudyStore, StudyConfig, StudyError, compute_study_report

    registry = _registry_from(registry_path)
    records = {rec.incident_id: rec for rec in _load_records(corpus_path, registry)}
    store = StudyStore(store_path)
    config_obj = store.get_study(study_id)
    if config_obj is None:
        raise click.UsageError(f"no study {study_id!r} in {store_path}")
    try:
        report = compute_study_report(
            StudyConfig.from_obj(config_obj),
            store.sessions_for_study(study_id),
            store.events_for_study(study_id),
            store.questionnaires_for_study(study_id),
            records,
        )
    except StudyError as exc:
        raise click.UsageError(str(exc)) from exc
    click.echo(json.dumps(report, indent=2))


# --- prompts / segmenter debug ------------------------------------------------


@main.group("prompts")
def prompts_group() -> None:
    """Prompt template inspection."""


@prompts_group.command("show")
@click.option("--kind", type=click.Choice(prompts.KINDS), required=True)
@click.option("--factor", "factor_id", default="alcohol_problem", show_default=True)
@click.option("--registry", "registry_path", default=None, type=click.Path(exists=True))
@click.option("--context", default="He lost his job two days before his death.", show_default=True)
@click.option("--sentence", default="He lost his job two days before his death.", show_default=True)
def prompts_show(
    kind: str, factor_id: str, registry_path: str | None, context: str, sentence: str
) -> None:
    """Render a prompt with sample bindings and print it."""
    registry = _registry_from(registry_path)
    try:
        factor = registry[factor_id]
    except RegistryError as exc:
        raise click.UsageError(str(exc)) from exc
    bindings = {
        "TARGET_SOCIAL_FACTOR": factor.name,
        "FACTOR_DEFINITION": factor.definition,
        "INPUT_REPORT": context,
        "TARGET_SENTENCE": sentence,
        "RELEVANT_DESCRIPTIONS": context,
    }
    template = prompts.get_template(kind)
    bound = {name: bindings[name] for name in template.placeholders}
    click.echo(prompts.render_text(kind, bound))


@main.command("segment")
@click.option("--text", default=None, help="Text to segment; prints one sentence per line.")
@click.option("--dump-abbreviations", is_flag=True, help="Print the fixed abbreviation list.")
def segment_cmd(text: str | None, dump_abbreviations: bool) -> None:
    """Segmenter debugging helpers."""
    if dump_abbreviations:
        for token in sorted(ABBREVIATIONS):
            click.echo(token)
        return
    if text is None:
        raise click.UsageError("pass --text or --dump-abbreviations")
    for span in segment("cme", text):
        click.echo(f"[{span.index}] ({span.char_start}:{span.char_end}) {span.text}")


if __name__ == "__main__":
    main()
