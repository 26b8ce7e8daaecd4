"""Live-server smoke: `annotate serve` binds a port, answers the API, and
shuts down cleanly on SIGINT with the store intact."""

import json
import signal
import socket
import subprocess
import sys
import time

import httpx
import pytest

from sdohx.annotation import StudyStore
from sdohx.backends import RuleMockBackend
from sdohx.corpus import write_corpus
from sdohx.pipeline import TaskSpec, run_batch, write_traces
from sdohx.synth import GeneratorSpec, generate_corpus

FACTORS = ("alcohol_problem", "mental_health_problem")


def free_port() -> int:
    with socket.socket() as sock:
        sock.bind(("127.0.0.1", 0))
        return sock.getsockname()[1]


@pytest.fixture()
def serve_dir(tmp_path, registry):
    records, _ = generate_corpus(
        GeneratorSpec(seed=31, n_incidents=3, factor_ids=FACTORS), registry
    )
    write_corpus(tmp_path / "corpus.jsonl", records)
    by_id = {r.incident_id: r for r in records}
    tasks = [TaskSpec(r.incident_id, f, "multistage") for r in records for f in FACTORS]
    traces = run_batch(
        tasks, by_id, registry, {"default": RuleMockBackend(registry=registry)}
    )
    write_traces(tmp_path / "traces.jsonl", traces)
    return tmp_path


def wait_for_port(port: int, proc, timeout: float = 20.0) -> None:
    deadline = time.time() + timeout
    while time.time() < deadline:
        if proc.poll() is not None:
            raise RuntimeError(f"server exited early: {proc.stderr.read()}")
        try:
            with socket.create_connection(("127.0.0.1", port), timeout=0.2):
                return
        except OSError:
            time.sleep(0.1)
    raise TimeoutError("server never came up")


def test_serve_smoke_and_clean_shutdown(serve_dir):
    port = free_port()
    proc = subprocess.Popen(
        [
            sys.executable, "-m", "sdohx.cli", "annotate", "serve",
            "--corpus", str(serve_dir / "corpus.jsonl"),
            "--traces", str(serve_dir / "traces.jsonl"),
            "--store", str(serve_dir / "study.db"),
            "--port", str(port),
        ],
        stdout=subprocess.PIPE,
        stderr=subprocess.PIPE,
        text=True,
    )
    try:
        wait_for_port(port, proc)
        base = f"http://127.0.0.1:{port}"
        created = httpx.post(
            f"{base}/api/studies",
            json={
                "factors": list(FACTORS),
                "incidents": ["inc-00000", "inc-00001", "inc-00002"],
                "min_arm_gap_seconds": 0,
            },
            timeout=5,
        )
        assert created.status_code == 201, created.text
        study_id = created.json()["study_id"]
        opened = httpx.post(
            f"{base}/api/studies/{study_id}/sessions",
            json={"annotator_id": "smoke", "arm": "control"},
            timeout=5,
        )
        assert opened.status_code == 201
        session_id = opened.json()["session_id"]
        item = httpx.get(f"{base}/api/sessions/{session_id}/next", timeout=5)
        assert item.status_code == 200
        assert item.json()["done"] is False
        assert item.json()["highlights"] == []
    finally:
        proc.send_signal(signal.SIGINT)
        try:
            proc.wait(timeout=10)
        except subprocess.TimeoutExpired:
            proc.kill()
            proc.wait()
            pytest.fail("server did not exit cleanly on SIGINT")
    # store survives the shutdown with the acknowledged rows present
    store = StudyStore(serve_dir / "study.db")
    assert store.get_study(study_id) is not None
    assert len(store.sessions_for_study(study_id)) == 1


def test_serve_missing_trace_file_is_startup_error(serve_dir):
    result = subprocess.run(
        [
            sys.executable, "-m", "sdohx.cli", "annotate", "serve",
            "--corpus", str(serve_dir / "corpus.jsonl"),
            "--traces", str(serve_dir / "nonexistent.jsonl"),
            "--store", str(serve_dir / "s2.db"),
            "--port", str(free_port()),
        ],
        capture_output=True,
        text=True,
        timeout=30,
    )
    assert result.returncode == 2
    assert "does not exist" in result.stderr
