import json

import pytest
from click.testing import CliRunner

from sdohx.cli import main

from conftest import SIX_FACTORS

FACTORS_FLAG = ",".join(SIX_FACTORS)


@pytest.fixture()
def runner():
    return CliRunner()


def gen_corpus(runner, tmp_path, seed=7, incidents=30):
    corpus = tmp_path / "corpus.jsonl"
    gold = tmp_path / "gold.jsonl"
    result = runner.invoke(
        main,
        [
            "corpus", "gen",
            "--seed", str(seed),
            "--incidents", str(incidents),
            "--factors", FACTORS_FLAG,
            "--out", str(corpus),
            "--gold-out", str(gold),
        ],
    )
    assert result.exit_code == 0, result.output
    return corpus, gold


class TestCorpusGen:
    def test_writes_requested_lines(self, runner, tmp_path):
        corpus, _ = gen_corpus(runner, tmp_path, incidents=30)
        assert len(corpus.read_text().splitlines()) == 30

    def test_prints_positive_counts(self, runner, tmp_path):
        corpus = tmp_path / "c.jsonl"
        result = runner.invoke(
            main,
            ["corpus", "gen", "--seed", "3", "--incidents", "40",
             "--factors", FACTORS_FLAG, "--out", str(corpus)],
        )
        assert result.exit_code == 0
        for factor_id in SIX_FACTORS:
            assert factor_id in result.output

    def test_same_flags_identical_files(self, runner, tmp_path):
        (tmp_path / "a").mkdir()
        (tmp_path / "b").mkdir()
        a, gold_a = gen_corpus(runner, tmp_path / "a", seed=5)
        b, gold_b = gen_corpus(runner, tmp_path / "b", seed=5)
        assert a.read_bytes() == b.read_bytes()
        assert gold_a.read_bytes() == gold_b.read_bytes()

    def test_zero_incidents_is_usage_error(self, runner, tmp_path):
        result = runner.invoke(
            main,
            ["corpus", "gen", "--seed", "1", "--incidents", "0",
             "--out", str(tmp_path / "c.jsonl")],
        )
        assert result.exit_code == 2

    def test_unknown_flag_is_hard_error(self, runner):
        result = runner.invoke(main, ["corpus", "gen", "--frobnicate"])
        assert result.exit_code == 2


@pytest.fixture()
def generated(runner, tmp_path):
    return gen_corpus(runner, tmp_path)


class TestExtract:
    def test_multistage_rule_mock_matches_gold(self, runner, tmp_path, generated, registry):
        corpus, _ = generated
        verdicts = tmp_path / "v.jsonl"
        result = runner.invoke(
            main,
            ["extract", "--corpus", str(corpus), "--mode", "multistage",
             "--backend", "rule-mock", "--out", str(verdicts)],
        )
        assert result.exit_code == 0, result.output
        assert "0 failed" in result.output
        from sdohx.corpus import load_corpus

        records = {r.incident_id: r for r in load_corpus(corpus, registry)}
        for line in verdicts.read_text().splitlines():
            obj = json.loads(line)
            assert obj["value"] == records[obj["incident_id"]].gold_labels[obj["factor_id"]]

    def test_unknown_mode_is_usage_error(self, runner, tmp_path, generated):
        corpus, _ = generated
        result = runner.invoke(
            main,
            ["extract", "--corpus", str(corpus), "--mode", "zigzag",
             "--out", str(tmp_path / "v.jsonl")],
        )
        assert result.exit_code == 2

    def test_remote_without_env_is_config_error(self, runner, tmp_path, generated,
                                                monkeypatch):
        monkeypatch.delenv("MODEL_API_BASE", raising=False)
        monkeypatch.delenv("MODEL_NAME", raising=False)
        corpus, _ = generated
        result = runner.invoke(
            main,
            ["extract", "--corpus", str(corpus), "--backend", "remote",
             "--out", str(tmp_path / "v.jsonl")],
        )
        assert result.exit_code == 2
        assert "MODEL_API_BASE" in result.output

    def test_unknown_backend_is_usage_error(self, runner, tmp_path, generated):
        corpus, _ = generated
        result = runner.invoke(
            main,
            ["extract", "--corpus", str(corpus), "--backend", "psychic",
             "--out", str(tmp_path / "v.jsonl")],
        )
        assert result.exit_code == 2

    def test_replay_cold_warm_identical(self, runner, tmp_path, generated):
        corpus, _ = generated
        cache = tmp_path / "cache"
        outputs = []
        for name in ("cold", "warm"):
            verdicts = tmp_path / f"{name}.jsonl"
            traces = tmp_path / f"{name}-traces.jsonl"
            result = runner.invoke(
                main,
                ["extract", "--corpus", str(corpus), "--mode", "end2end",
                 "--backend", f"replay:{cache}+rule-mock",
                 "--out", str(verdicts), "--traces", str(traces)],
            )
            assert result.exit_code == 0, result.output
            outputs.append((verdicts.read_bytes(), traces.read_bytes()))
        assert outputs[0] == outputs[1]

    def test_width_does_not_change_output(self, runner, tmp_path, generated):
        corpus, _ = generated
        files = []
        for width in ("1", "8"):
            out = tmp_path / f"v{width}.jsonl"
            result = runner.invoke(
                main,
                ["extract", "--corpus", str(corpus), "--backend", "rule-mock",
                 "--width", width, "--out", str(out)],
            )
            assert result.exit_code == 0
            files.append(out.read_bytes())
        assert files[0] == files[1]


class TestEval:
    def _extract(self, runner, corpus, tmp_path, mode="multistage", backend="rule-mock",
                 extra=()):
        verdicts = tmp_path / f"verdicts-{mode}.jsonl"
        traces = tmp_path / f"traces-{mode}.jsonl"
        result = runner.invoke(
            main,
            ["extract", "--corpus", str(corpus), "--mode", mode, "--backend", backend,
             "--out", str(verdicts), "--traces", str(traces), *extra],
        )
        assert result.exit_code == 0, result.output
        return verdicts, traces

    def test_extraction_perfect_f1(self, runner, tmp_path, generated):
        corpus, _ = generated
        verdicts, _ = self._extract(runner, corpus, tmp_path)
        out_json = tmp_path / "report.json"
        result = runner.invoke(
            main,
            ["eval", "extraction", "--verdicts", str(verdicts), "--corpus", str(corpus),
             "--out-json", str(out_json), "--out-text", str(tmp_path / "report.txt")],
        )
        assert result.exit_code == 0, result.output
        report = json.loads(out_json.read_text())
        for row in report["rows"]:
            assert row["f1"] == 1.0

    def test_retrieval_report_stage2_ge_stage1(self, runner, tmp_path, generated):
        corpus, gold = generated
        _, traces = self._extract(
            runner, corpus, tmp_path,
            extra=("--retriever-backend", "noisy-mock", "--seed", "13"),
        )
        out_json = tmp_path / "retrieval.json"
        result = runner.invoke(
            main,
            ["eval", "retrieval", "--traces", str(traces), "--gold", str(gold),
             "--out-json", str(out_json), "--out-text", str(tmp_path / "retrieval.txt")],
        )
        assert result.exit_code == 0, result.output
        report = json.loads(out_json.read_text())
        for row in report["per_factor"]:
            assert row["stage2_accuracy"] >= row["stage1_accuracy"]

    def test_kappa_identical_files(self, runner, tmp_path):
        a = tmp_path / "a.txt"
        b = tmp_path / "b.txt"
        a.write_text("true\nfalse\ntrue\n")
        b.write_text("true\nfalse\ntrue\n")
        result = runner.invoke(main, ["eval", "kappa", "--a", str(a), "--b", str(b)])
        assert result.exit_code == 0
        assert "1.0000" in result.output


class TestPromptsAndSegment:
    def test_prompts_show_renders(self, runner):
        result = runner.invoke(main, ["prompts", "show", "--kind", "verification"])
        assert result.exit_code == 0
        assert "[INST]" in result.output
        assert "[SENTENCE]" in result.output

    def test_segment_text(self, runner):
        result = runner.invoke(main, ["segment", "--text", "One. Two."])
        assert result.exit_code == 0
        assert "[0]" in result.output and "[1]" in result.output

    def test_dump_abbreviations(self, runner):
        result = runner.invoke(main, ["segment", "--dump-abbreviations"])
        assert result.exit_code == 0
        assert "Dr" in result.output.split()

    def test_help_lists_subcommands(self, runner):
        result = runner.invoke(main, ["--help"])
        assert result.exit_code == 0
        for name in ("corpus", "extract", "eval", "annotate", "prompts", "segment"):
            assert name in result.output
