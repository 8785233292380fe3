"""On-disk document store: one directory per run, atomic JSON writes."""
from __future__ import annotations

import json
import os
import tempfile
import threading
from pathlib import Path


class StoreError(Exception):
    pass


def atomic_write(path: Path, data: bytes) -> None:
    """Write via temp file + rename so a crash never leaves a partial file."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-", suffix=path.suffix)
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
            f.flush()
            os.fsync(f.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_json(path: Path, doc: object) -> None:
    atomic_write(path, json.dumps(doc, indent=2, ensure_ascii=False).encode("utf-8"))


class RunStore:
    """Per-run persistence rooted at a directory.

    Layout: <root>/<run_id>/{source.bin, document.json, run.json, report.json,
    events.jsonl, replay.jsonl, sessions/<session_id>.json}
    """

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._event_locks: dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()

    def run_dir(self, run_id: str) -> Path:
        if not run_id or "/" in run_id or run_id.startswith("."):
            raise StoreError(f"invalid run id {run_id!r}")
        return self.root / run_id

    def exists(self, run_id: str) -> bool:
        return (self.run_dir(run_id) / "run.json").exists()

    def list_runs(self) -> list[str]:
        return sorted(
            p.name for p in self.root.iterdir()
            if p.is_dir() and (p / "run.json").exists()
        )

    # -- documents -----------------------------------------------------------

    def save_source(self, run_id: str, data: bytes, filename: str = "source.bin") -> Path:
        path = self.run_dir(run_id) / filename
        atomic_write(path, data)
        return path

    def save_document(self, run_id: str, doc: dict) -> None:
        atomic_write_json(self.run_dir(run_id) / "document.json", doc)

    def load_document(self, run_id: str) -> dict:
        return self._load_json(run_id, "document.json")

    def save_run(self, run_id: str, run: dict) -> None:
        atomic_write_json(self.run_dir(run_id) / "run.json", run)

    def load_run(self, run_id: str) -> dict:
        return self._load_json(run_id, "run.json")

    def save_report(self, run_id: str, report: dict) -> None:
        atomic_write_json(self.run_dir(run_id) / "report.json", report)

    def load_report(self, run_id: str) -> dict:
        return self._load_json(run_id, "report.json")

    def has_report(self, run_id: str) -> bool:
        return (self.run_dir(run_id) / "report.json").exists()

    def _load_json(self, run_id: str, name: str) -> dict:
        path = self.run_dir(run_id) / name
        if not path.exists():
            raise StoreError(f"{name} not found for run {run_id}")
        return json.loads(path.read_text("utf-8"))

    # -- events --------------------------------------------------------------

    def append_event(self, run_id: str, event: dict) -> None:
        with self._locks_guard:
            lock = self._event_locks.setdefault(run_id, threading.Lock())
        path = self.run_dir(run_id) / "events.jsonl"
        path.parent.mkdir(parents=True, exist_ok=True)
        with lock:
            with path.open("a", encoding="utf-8") as f:
                f.write(json.dumps(event, ensure_ascii=False) + "\n")

    def read_events(self, run_id: str, after_seq: int = 0) -> list[dict]:
        path = self.run_dir(run_id) / "events.jsonl"
        if not path.exists():
            return []
        events = [
            json.loads(line)
            for line in path.read_text("utf-8").splitlines()
            if line.strip()
        ]
        # concurrent workers may append out of seq order; present them sorted
        events.sort(key=lambda e: e.get("seq", 0))
        return [e for e in events if e.get("seq", 0) > after_seq]

    # -- sessions ------------------------------------------------------------

    def save_session(self, run_id: str, session_id: str, session: dict) -> None:
        atomic_write_json(self.run_dir(run_id) / "sessions" / f"{session_id}.json", session)

    def load_session(self, run_id: str, session_id: str) -> dict:
        path = self.run_dir(run_id) / "sessions" / f"{session_id}.json"
        if not path.exists():
            raise StoreError(f"session {session_id} not found for run {run_id}")
        return json.loads(path.read_text("utf-8"))

    def replay_path(self, run_id: str) -> Path:
        return self.run_dir(run_id) / "replay.jsonl"
