"""Durable job store: append-only record logs, an in-memory index rebuilt on
startup, the job state machine, and the heavy/light pending queues.

Every mutation appends a full-record snapshot to the entity's log and is
serialized through one lock; replay keeps the last committed record per id,
tolerating a torn trailing line.  Jobs claimed by a worker that died are
reverted to PENDING during the recovery scan (re-execution is idempotent
because embeddings are cached).
"""

from __future__ import annotations

import json
import threading
import time
import uuid
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterator

from .errors import InvalidParams, NotFound, UnknownCollection, UnknownMethod
from .selection import METHODS

PENDING = "PENDING"
ENCODING = "ENCODING"
SELECTING = "SELECTING"
FINISHED = "FINISHED"
FAILED = "FAILED"

STATES = (PENDING, ENCODING, SELECTING, FINISHED, FAILED)
ALLOWED_TRANSITIONS: dict[str, set[str]] = {
    PENDING: {ENCODING, FAILED},
    ENCODING: {SELECTING, FAILED},
    SELECTING: {FINISHED, FAILED},
    FINISHED: set(),
    FAILED: set(),
}
ACTIVE_STATES = (ENCODING, SELECTING)

QUEUE_HEAVY = "heavy"
QUEUE_LIGHT = "light"

STAGE_LABELS = {ENCODING: "Dataset Encoding", SELECTING: "Model Selection"}


@dataclass
class CollectionRecord:
    id: str
    name: str
    n_docs: int
    n_queries: int
    has_qrels: bool
    created_at: float

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Job:
    id: str
    collection_id: str
    method: str
    params: dict
    state: str
    queue_class: str
    created_at: float
    updated_at: float
    stage: str | None = None
    progress: float = 0.0
    error: str | None = None
    result_ref: str | None = None

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SelectionResult:
    job_id: str
    method: str
    ranked: list[tuple[str, float | None, int]]
    direction: str
    completed_at: float
    per_query_diagnostics: dict | None = None

    def to_dict(self) -> dict:
        return {
            "job_id": self.job_id,
            "method": self.method,
            "ranked": [list(row) for row in self.ranked],
            "direction": self.direction,
            "completed_at": self.completed_at,
            "per_query_diagnostics": self.per_query_diagnostics,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SelectionResult":
        return cls(
            job_id=data["job_id"],
            method=data["method"],
            ranked=[(r[0], r[1], r[2]) for r in data["ranked"]],
            direction=data["direction"],
            completed_at=data["completed_at"],
            per_query_diagnostics=data.get("per_query_diagnostics"),
        )


class IllegalTransition(Exception):
    pass


def queue_class_for(method: str, encoding_required: bool) -> str:
    """Heavy queue for encoder-dependent methods or when the collection still
    needs encoding; everything else rides the light queue."""
    info = METHODS.get(method)
    if info is None:
        raise UnknownMethod(f"unknown method {method!r}")
    return QUEUE_HEAVY if (info.heavy or encoding_required) else QUEUE_LIGHT


class Store:
    def __init__(self, data_dir: str | Path):
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self._lock = threading.RLock()
        self._jobs: dict[str, Job] = {}
        self._results: dict[str, SelectionResult] = {}
        self._collections: dict[str, CollectionRecord] = {}
        self._logs = {
            "jobs": self.data_dir / "jobs.jsonl",
            "results": self.data_dir / "results.jsonl",
            "collections": self.data_dir / "collections.jsonl",
        }
        self._recover()

    # --- persistence ---

    def _append(self, log: str, record: dict) -> None:
        with open(self._logs[log], "a", encoding="utf-8") as fh:
            fh.write(json.dumps(record, sort_keys=True) + "\n")
            fh.flush()

    @staticmethod
    def _replay(path: Path) -> Iterator[dict]:
        if not path.exists():
            return
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                try:
                    yield json.loads(line)
                except json.JSONDecodeError:
                    # torn trailing write after a crash; everything before it is committed
                    continue

    def _recover(self) -> None:
        with self._lock:
            for record in self._replay(self._logs["collections"]):
                rec = CollectionRecord(**record)
                self._collections[rec.id] = rec
            for record in self._replay(self._logs["jobs"]):
                self._jobs[record["id"]] = Job(**record)
            for record in self._replay(self._logs["results"]):
                result = SelectionResult.from_dict(record)
                self._results[result.job_id] = result
            # orphan scan: active jobs have no owning worker after a restart
            for job in self._jobs.values():
                if job.state in ACTIVE_STATES:
                    job.state = PENDING
                    job.stage = None
                    job.progress = 0.0
                    job.updated_at = max(job.updated_at, time.time())
                    self._append("jobs", job.to_dict())

    # --- collections ---

    def add_collection(self, record: CollectionRecord) -> None:
        with self._lock:
            self._collections[record.id] = record
            self._append("collections", record.to_dict())

    def get_collection(self, collection_id: str) -> CollectionRecord:
        with self._lock:
            rec = self._collections.get(collection_id)
            if rec is None:
                raise NotFound(f"collection {collection_id!r} not found")
            return rec

    def list_collections(self) -> list[CollectionRecord]:
        with self._lock:
            return sorted(self._collections.values(), key=lambda c: (c.created_at, c.id))

    def collection_dir(self, collection_id: str) -> Path:
        return self.data_dir / "collections" / collection_id

    def embeddings_dir(self, collection_id: str) -> Path:
        return self.data_dir / "embeddings" / collection_id

    # --- jobs ---

    def submit_job(self, collection_id: str, method: str, params: dict, queue_class: str) -> Job:
        if method not in METHODS:
            raise UnknownMethod(f"unknown method {method!r}")
        if not isinstance(params, dict):
            raise InvalidParams("params must be a key/value map")
        with self._lock:
            if collection_id not in self._collections:
                raise UnknownCollection(f"collection {collection_id!r} not found")
            now = time.time()
            job = Job(
                id=uuid.uuid4().hex,
                collection_id=collection_id,
                method=method,
                params=dict(params),
                state=PENDING,
                queue_class=queue_class,
                created_at=now,
                updated_at=now,
            )
            self._jobs[job.id] = job
            self._append("jobs", job.to_dict())
            return job

    def claim_task(self, worker_class: str) -> Job | None:
        """Atomically take the oldest PENDING job of the class and move it to
        ENCODING; a job is handed to at most one worker, ever."""
        with self._lock:
            candidates = [
                j for j in self._jobs.values() if j.state == PENDING and j.queue_class == worker_class
            ]
            if not candidates:
                return None
            job = min(candidates, key=lambda j: (j.created_at, j.id))
            self._transition(job, ENCODING)
            return Job(**job.to_dict())

    def _transition(self, job: Job, new_state: str) -> None:
        if new_state not in ALLOWED_TRANSITIONS[job.state]:
            raise IllegalTransition(f"{job.state} -> {new_state} (job {job.id})")
        job.state = new_state
        job.stage = STAGE_LABELS.get(new_state, job.stage if new_state == FAILED else None)
        if new_state in ACTIVE_STATES:
            job.progress = 0.0
        elif new_state == FINISHED:
            job.progress = 100.0
        job.updated_at = max(job.updated_at, time.time())
        self._append("jobs", job.to_dict())

    def advance(self, job_id: str, new_state: str) -> Job:
        with self._lock:
            job = self._require_job(job_id)
            self._transition(job, new_state)
            return Job(**job.to_dict())

    def fail(self, job_id: str, error: str) -> Job:
        with self._lock:
            job = self._require_job(job_id)
            job.error = error
            self._transition(job, FAILED)
            return Job(**job.to_dict())

    def finish(self, job_id: str, result: SelectionResult) -> Job:
        with self._lock:
            job = self._require_job(job_id)
            self._results[job.id] = result
            self._append("results", result.to_dict())
            job.result_ref = job.id
            self._transition(job, FINISHED)
            return Job(**job.to_dict())

    def update_progress(self, job_id: str, done: int, total: int) -> None:
        with self._lock:
            job = self._require_job(job_id)
            job.progress = round(100.0 * done / max(total, 1), 1)
            job.updated_at = max(job.updated_at, time.time())
            self._append("jobs", job.to_dict())

    def _require_job(self, job_id: str) -> Job:
        job = self._jobs.get(job_id)
        if job is None:
            raise NotFound(f"job {job_id!r} not found")
        return job

    def get_job(self, job_id: str) -> Job:
        with self._lock:
            return Job(**self._require_job(job_id).to_dict())

    def list_jobs(self) -> list[Job]:
        with self._lock:
            ordered = sorted(self._jobs.values(), key=lambda j: (j.created_at, j.id))
            return [Job(**j.to_dict()) for j in ordered]

    def get_result(self, job_id: str) -> SelectionResult:
        with self._lock:
            job = self._jobs.get(job_id)
            if job is None or job.state != FINISHED:
                raise NotFound(f"no result for job {job_id!r}")
            return self._results[job.id]
