"""Embedded single-file store for the annotation study.

SQLite with one commit per write: every acknowledged event is durable
across restarts. All writes go through one lock; reads are snapshot
queries.
"""

from __future__ import annotations

import json
import sqlite3
import threading
from pathlib import Path

_SCHEMA = """
CREATE TABLE IF NOT EXISTS studies (
    study_id TEXT PRIMARY KEY,
    config_json TEXT NOT NULL,
    created_at REAL NOT NULL
);
CREATE TABLE IF NOT EXISTS sessions (
    session_id TEXT PRIMARY KEY,
    study_id TEXT NOT NULL,
    annotator_id TEXT NOT NULL,
    arm TEXT NOT NULL,
    opened_at REAL NOT NULL,
    completed_at REAL
);
CREATE TABLE IF NOT EXISTS serves (
    session_id TEXT NOT NULL,
    incident_id TEXT NOT NULL,
    factor_id TEXT NOT NULL,
    served_at REAL NOT NULL,
    PRIMARY KEY (session_id, incident_id, factor_id)
);
CREATE TABLE IF NOT EXISTS events (
    session_id TEXT NOT NULL,
    annotator_id TEXT NOT NULL,
    arm TEXT NOT NULL,
    incident_id TEXT NOT NULL,
    factor_id TEXT NOT NULL,
    decision INTEGER NOT NULL,
    served_at REAL NOT NULL,
    submitted_at REAL NOT NULL,
    PRIMARY KEY (session_id, incident_id, factor_id)
);
CREATE TABLE IF NOT EXISTS questionnaires (
    session_id TEXT PRIMARY KEY,
    arm TEXT NOT NULL,
    answers_json TEXT NOT NULL,
    submitted_at REAL NOT NULL
);
"""


class StudyStore:
    def __init__(self, path: str | Path):
        self._conn = sqlite3.connect(str(path), check_same_thread=False)
        self._conn.row_factory = sqlite3.Row
        self._lock = threading.Lock()
        with self._lock:
            self._conn.executescript(_SCHEMA)
            self._conn.commit()

    def close(self) -> None:
        self._conn.close()

    # --- studies ---------------------------------------------------------

    def put_study(self, study_id: str, config: dict, created_at: float) -> None:
        with self._lock:
            self._conn.execute(
                "INSERT INTO studies (study_id, config_json, created_at) VALUES (?, ?, ?)",
                (study_id, json.dumps(config), created_at),
            )
            self._conn.commit()

    def get_study(self, study_id: str) -> dict | None:
        row = self._conn.execute(
            "SELECT config_json FROM studies WHERE study_id = ?", (study_id,)
        ).fetchone()
        return json.loads(row["config_json"]) if row else None

    def has_study(self, study_id: str) -> bool:
        return self.get_study(study_id) is not None

    # --- sessions --------------------------------------------------------

    def put_session(
        self, session_id: str, study_id: str, annotator_id: str, arm: str, opened_at: float
    ) -> None:
        with self._lock:
            self._conn.execute(
                "INSERT INTO sessions (session_id, study_id, annotator_id, arm, opened_at) "
                "VALUES (?, ?, ?, ?, ?)",
                (session_id, study_id, annotator_id, arm, opened_at),
            )
            self._conn.commit()

    def get_session(self, session_id: str) -> sqlite3.Row | None:
        return self._conn.execute(
            "SELECT * FROM sessions WHERE session_id = ?", (session_id,)
        ).fetchone()

    def complete_session(self, session_id: str, completed_at: float) -> None:
        with self._lock:
            self._conn.execute(
                "UPDATE sessions SET completed_at = ? WHERE session_id = ?",
                (completed_at, session_id),
            )
            self._conn.commit()

    def completed_sessions(self, study_id: str, annotator_id: str, arm: str) -> list[sqlite3.Row]:
        return self._conn.execute(
            "SELECT * FROM sessions WHERE study_id = ? AND annotator_id = ? AND arm = ? "
            "AND completed_at IS NOT NULL",
            (study_id, annotator_id, arm),
        ).fetchall()

    def sessions_for_study(self, study_id: str) -> list[sqlite3.Row]:
        return self._conn.execute(
            "SELECT * FROM sessions WHERE study_id = ?", (study_id,)
        ).fetchall()

    # --- serves and events -------------------------------------------------

    def record_serve(
        self, session_id: str, incident_id: str, factor_id: str, served_at: float
    ) -> None:
        """Record first-serve time; repeated serves keep the original stamp."""
        with self._lock:
            self._conn.execute(
                "INSERT OR IGNORE INTO serves (session_id, incident_id, factor_id, served_at) "
                "VALUES (?, ?, ?, ?)",
                (session_id, incident_id, factor_id, served_at),
            )
            self._conn.commit()

    def get_serve(self, session_id: str, incident_id: str, factor_id: str) -> sqlite3.Row | None:
        return self._conn.execute(
            "SELECT * FROM serves WHERE session_id = ? AND incident_id = ? AND factor_id = ?",
            (session_id, incident_id, factor_id),
        ).fetchone()

    def put_event(
        self,
        session_id: str,
        annotator_id: str,
        arm: str,
        incident_id: str,
        factor_id: str,
        decision: bool,
        served_at: float,
        submitted_at: float,
    ) -> None:
        with self._lock:
            self._conn.execute(
                "INSERT INTO events (session_id, annotator_id, arm, incident_id, factor_id, "
                "decision, served_at, submitted_at) VALUES (?, ?, ?, ?, ?, ?, ?, ?)",
                (
                    session_id,
                    annotator_id,
                    arm,
                    incident_id,
                    factor_id,
                    int(decision),
                    served_at,
                    submitted_at,
                ),
            )
            self._conn.commit()

    def get_event(self, session_id: str, incident_id: str, factor_id: str) -> sqlite3.Row | None:
        return self._conn.execute(
            "SELECT * FROM events WHERE session_id = ? AND incident_id = ? AND factor_id = ?",
            (session_id, incident_id, factor_id),
        ).fetchone()

    def events_for_session(self, session_id: str) -> list[sqlite3.Row]:
        return self._conn.execute(
            "SELECT * FROM events WHERE session_id = ? ORDER BY submitted_at",
            (session_id,),
        ).fetchall()

    def events_for_study(self, study_id: str) -> list[sqlite3.Row]:
        return self._conn.execute(
            "SELECT e.* FROM events e JOIN sessions s ON e.session_id = s.session_id "
            "WHERE s.study_id = ? ORDER BY e.submitted_at",
            (study_id,),
        ).fetchall()

    # --- questionnaires ----------------------------------------------------

    def put_questionnaire(
        self, session_id: str, arm: str, answers: dict, submitted_at: float
    ) -> None:
        with self._lock:
            self._conn.execute(
                "INSERT INTO questionnaires (session_id, arm, answers_json, submitted_at) "
                "VALUES (?, ?, ?, ?)",
                (session_id, arm, json.dumps(answers), submitted_at),
            )
            self._conn.commit()

    def get_questionnaire(self, session_id: str) -> dict | None:
        row = self._conn.execute(
            "SELECT answers_json FROM questionnaires WHERE session_id = ?", (session_id,)
        ).fetchone()
        return json.loads(row["answers_json"]) if row else None

    def questionnaires_for_study(self, study_id: str) -> list[sqlite3.Row]:
        return self._conn.execute(
            "SELECT q.* FROM questionnaires q JOIN sessions s ON q.session_id = s.session_id "
            "WHERE s.study_id = ?",
            (study_id,),
        ).fetchall()
