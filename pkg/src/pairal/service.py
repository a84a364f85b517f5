"""HTTP facade for live annotation: replaces the simulated annotator with
humans while reusing the exact orchestrator loop.

A session owns the corpus, run config, and current RunState. Each epoch the
pending selection is enqueued as tasks; annotators submit either an existing
text id or a free-text caption with a client-supplied embedding vector
(captions are registered as new corpus text records with no ground-truth
entry); advancing the epoch collects the batch and steps the orchestrator.

Endpoints (JSON): GET /api/state, GET /api/tasks?status=pending,
GET /api/tasks/{id}, POST /api/tasks/{id}/annotation, POST /api/epoch/advance.
Errors: {"error": code, "detail": ...} with 404 UnknownTask, 409
AlreadySubmitted/EpochInProgress, 422 BadVectorDim/EpochIncomplete.
"""

from __future__ import annotations

import enum
import json
import threading
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import numpy as np

from .corpus import Corpus, EmbeddingRecord, Modality
from .errors import (AlreadySubmitted, BadVectorDim, BudgetExhausted,
                     DuplicateCounterpart, EpochIncomplete, EpochInProgress,
                     IoError, PairalError, SchemaError, UnknownTask,
                     VersionMismatch)
from .evaluation import metrics_to_csv
from .hardneg import SelectionResult
from .orchestrator import (ALRunConfig, AnnotationBatch, Direction, RunState,
                           select_for_epoch, state_from_dict, state_to_dict,
                           step_epoch)
from .simkernel import cosine_matrix
from .trainer import encode_matrix

SESSION_FORMAT_VERSION = 1
CANDIDATE_COUNT = 10


class TaskStatus(enum.Enum):
    PENDING = "pending"
    SUBMITTED = "submitted"


@dataclass(frozen=True)
class AnnotationTask:
    """One queued item awaiting a human-provided counterpart."""

    task_id: str
    queried_id: str
    epoch: int
    status: TaskStatus = TaskStatus.PENDING
    payload: dict | None = None       # {"text_id": ...} | {"caption": ..., "vector": [...]}
    display_uri: str | None = None


def _payloads_equal(a: dict, b: dict) -> bool:
    return json.dumps(a, sort_keys=True) == json.dumps(b, sort_keys=True)


@dataclass
class AnnotationSession:
    """Single-run annotation workflow over the orchestrator loop.

    Mutations are serialized by one lock; the HTTP layer is free to call
    concurrently. The corpus may grow text records when captions arrive;
    those extra records ride along in the session checkpoint.
    """

    corpus: Corpus
    config: ALRunConfig
    state: RunState
    tasks: dict[str, AnnotationTask] = field(default_factory=dict)
    task_order: list[str] = field(default_factory=list)
    extra_text_records: list[EmbeddingRecord] = field(default_factory=list)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    # -- queue management -----------------------------------------------------

    def enqueue_selection(self, selection: SelectionResult, epoch: int) -> list[AnnotationTask]:
        with self._lock:
            pending = [t for t in self.tasks.values() if t.status is TaskStatus.PENDING]
            if pending:
                raise EpochInProgress(
                    f"{len(pending)} pending tasks remain from epoch {pending[0].epoch}")
            created = []
            for idx, qid in enumerate(selection.selected):
                task = AnnotationTask(
                    task_id=f"task-e{epoch}-{idx:04d}",
                    queried_id=qid,
                    epoch=epoch,
                )
                self.tasks[task.task_id] = task
                self.task_order.append(task.task_id)
                created.append(task)
            return created

    def enqueue_current_epoch(self) -> list[AnnotationTask]:
        """Select for the current epoch (if not already) and queue the tasks."""
        if self.state.pending_selection is None:
            self.state = select_for_epoch(self.state, self.config, self.corpus)
        return self.enqueue_selection(self.state.pending_selection, self.state.epoch)

    def _epoch_tasks(self, epoch: int) -> list[AnnotationTask]:
        return [self.tasks[tid] for tid in self.task_order
                if self.tasks[tid].epoch == epoch]

    # -- submission -----------------------------------------------------------

    def _counterpart_dim(self) -> int:
        view_dims = (self.corpus.dims if self.config.direction is Direction.IMAGE_POOL
                     else (self.corpus.dims[1], self.corpus.dims[0]))
        return view_dims[1]

    def _counterpart_records(self) -> dict[str, EmbeddingRecord]:
        if self.config.direction is Direction.IMAGE_POOL:
            base = dict(self.corpus.text_records)
        else:
            base = dict(self.corpus.image_records)
        for rec in self.extra_text_records:
            base[rec.id] = rec
        return base

    def submit_annotation(self, task_id: str, payload: dict) -> AnnotationTask:
        with self._lock:
            task = self.tasks.get(task_id)
            if task is None:
                raise UnknownTask(f"no task {task_id!r}")
            if task.status is TaskStatus.SUBMITTED:
                if task.payload is not None and _payloads_equal(task.payload, payload):
                    return task  # idempotent resubmission
                raise AlreadySubmitted(f"task {task_id!r} already submitted differently")
            payload = self._validate_payload(task, payload)
            updated = replace(task, status=TaskStatus.SUBMITTED, payload=payload)
            self.tasks[task_id] = updated
            return updated

    def _validate_payload(self, task: AnnotationTask, payload: dict) -> dict:
        if not isinstance(payload, dict):
            raise SchemaError("payload must be an object")
        if "text_id" in payload:
            text_id = str(payload["text_id"])
            if text_id not in self._counterpart_records():
                raise SchemaError(f"unknown counterpart id {text_id!r}")
            self._reject_duplicate(task, text_id)
            return {"text_id": text_id}
        if "caption" in payload:
            vector = payload.get("vector")
            want = self._counterpart_dim()
            if not isinstance(vector, list) or len(vector) != want or not all(
                    isinstance(x, (int, float)) and np.isfinite(x) for x in vector):
                raise BadVectorDim(
                    f"caption vector must be a finite list of length {want}")
            return {"caption": str(payload["caption"]),
                    "vector": [float(x) for x in vector]}
        raise SchemaError("payload needs 'text_id' or 'caption'+'vector'")

    def _reject_duplicate(self, task: AnnotationTask, text_id: str) -> None:
        if text_id in set(self.state.paired.text_ids()):
            raise DuplicateCounterpart(f"{text_id!r} is already paired")
        for other in self.tasks.values():
            if (other.task_id != task.task_id
                    and other.status is TaskStatus.SUBMITTED
                    and other.payload is not None
                    and other.payload.get("text_id") == text_id):
                raise DuplicateCounterpart(
                    f"{text_id!r} already claimed by {other.task_id}")

    # -- collection / epoch advance --------------------------------------------

    def collect_batch(self, epoch: int) -> AnnotationBatch:
        with self._lock:
            tasks = self._epoch_tasks(epoch)
            pending = [t.task_id for t in tasks if t.status is TaskStatus.PENDING]
            if pending:
                raise EpochIncomplete("pending tasks: " + ", ".join(pending))
            pairs = []
            for task in tasks:
                payload = task.payload or {}
                if "text_id" in payload:
                    pairs.append((task.queried_id, payload["text_id"]))
                else:
                    rec_id = f"cap_{task.task_id}"
                    modality = (Modality.TEXT
                                if self.config.direction is Direction.IMAGE_POOL
                                else Modality.IMAGE)
                    rec = EmbeddingRecord(rec_id, modality,
                                          np.array(payload["vector"], dtype=np.float64))
                    if all(r.id != rec_id for r in self.extra_text_records):
                        self.extra_text_records.append(rec)
                        self._absorb_record(rec)
                    pairs.append((task.queried_id, rec_id))
            return AnnotationBatch(tuple(pairs))

    def _absorb_record(self, rec: EmbeddingRecord) -> None:
        if rec.modality is Modality.TEXT:
            self.corpus = self.corpus.with_text_record(rec)
        else:
            swapped = self.corpus.swapped().with_text_record(
                EmbeddingRecord(rec.id, Modality.TEXT, rec.vector))
            self.corpus = swapped.swapped()

    def advance_epoch(self) -> RunState:
        batch = self.collect_batch(self.state.epoch)
        with self._lock:
            self.state = step_epoch(self.state, self.config, self.corpus, batch)
        if self.state.epoch < self.config.max_epochs and len(self.state.pool):
            self.enqueue_current_epoch()
        return self.state

    # -- candidate suggestions --------------------------------------------------

    def candidates_for(self, task: AnnotationTask, limit: int = CANDIDATE_COUNT) -> list[dict]:
        """Top unpaired counterparts by current-model similarity to the query."""
        view = (self.corpus if self.config.direction is Direction.IMAGE_POOL
                else self.corpus.swapped())
        taken = set(self.state.paired.text_ids())
        claimed = {t.payload.get("text_id") for t in self.tasks.values()
                   if t.status is TaskStatus.SUBMITTED and t.payload}
        pool = [tid for tid in sorted(view.text_records)
                if tid not in taken and tid not in claimed]
        if not pool:
            return []
        q = view.image_records[task.queried_id].vector[None, :]
        q_enc = encode_matrix(self.state.model, q, Modality.IMAGE)
        t_mat = np.stack([view.text_records[t].vector for t in pool])
        t_enc = encode_matrix(self.state.model, t_mat, Modality.TEXT)
        sims = cosine_matrix(q_enc, t_enc)[0]
        order = sorted(range(len(pool)), key=lambda i: (-sims[i], pool[i]))[:limit]
        return [{"text_id": pool[i], "similarity": float(sims[i])} for i in order]

    # -- persistence --------------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "version": SESSION_FORMAT_VERSION,
            "state": state_to_dict(self.state),
            "tasks": [{
                "task_id": t.task_id,
                "queried_id": t.queried_id,
                "epoch": t.epoch,
                "status": t.status.value,
                "payload": t.payload,
                "display_uri": t.display_uri,
            } for t in (self.tasks[tid] for tid in self.task_order)],
            "extra_text_records": [{
                "id": r.id, "modality": r.modality.value,
                "vector": [float(x) for x in r.vector],
            } for r in self.extra_text_records],
        }

    def save(self, path) -> None:
        path = Path(path)
        tmp = path.with_name(path.name + ".tmp")
        try:
            with tmp.open("w", encoding="utf-8") as fh:
                json.dump(self.to_dict(), fh)
            tmp.replace(path)
        except OSError as exc:
            raise IoError(f"cannot write session {path}: {exc}") from exc

    @classmethod
    def load(cls, path, corpus: Corpus, config: ALRunConfig) -> "AnnotationSession":
        path = Path(path)
        try:
            with path.open("r", encoding="utf-8") as fh:
                obj = json.load(fh)
        except OSError as exc:
            raise IoError(f"cannot read session {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise IoError(f"truncated or corrupt session {path}: {exc}") from exc
        if obj.get("version") != SESSION_FORMAT_VERSION:
            raise VersionMismatch(f"unsupported session version {obj.get('version')!r}")
        session = cls(corpus=corpus, config=config, state=state_from_dict(obj["state"]))
        for rec in obj.get("extra_text_records", []):
            record = EmbeddingRecord(rec["id"], Modality(rec["modality"]),
                                     np.array(rec["vector"], dtype=np.float64))
            session.extra_text_records.append(record)
            session._absorb_record(record)
        for t in obj.get("tasks", []):
            task = AnnotationTask(t["task_id"], t["queried_id"], int(t["epoch"]),
                                  TaskStatus(t["status"]), t.get("payload"),
                                  t.get("display_uri"))
            session.tasks[task.task_id] = task
            session.task_order.append(task.task_id)
        return session


# -- HTTP layer -----------------------------------------------------------------

_ERROR_STATUS = {
    UnknownTask: 404,
    AlreadySubmitted: 409,
    EpochInProgress: 409,
    BadVectorDim: 422,
    EpochIncomplete: 422,
    DuplicateCounterpart: 422,
    BudgetExhausted: 409,
}


def _error_payload(exc: PairalError) -> tuple[int, dict]:
    status = _ERROR_STATUS.get(type(exc), 400)
    return status, {"error": type(exc).__name__, "detail": str(exc)}


def _task_view(session: AnnotationSession, task: AnnotationTask,
               with_candidates: bool = False) -> dict:
    view: dict[str, Any] = {
        "task_id": task.task_id,
        "queried_id": task.queried_id,
        "epoch": task.epoch,
        "status": task.status.value,
        "payload": task.payload,
        "display_uri": task.display_uri,
    }
    if with_candidates and task.status is TaskStatus.PENDING:
        view["candidates"] = session.candidates_for(task)
    return view


def create_app(session: AnnotationSession, checkpoint_path: str | None = None,
               static_dir: str | None = None):
    """FastAPI app bound to one annotation session."""
    from fastapi import FastAPI, Request
    from fastapi.responses import JSONResponse

    app = FastAPI(title="pairal annotation service")

    @app.exception_handler(PairalError)
    async def _handle(request: Request, exc: PairalError):
        status, payload = _error_payload(exc)
        return JSONResponse(status_code=status, content=payload)

    @app.get("/api/state")
    def get_state():
        st = session.state
        tasks = session._epoch_tasks(st.epoch)
        return {
            "epoch": st.epoch,
            "max_epochs": session.config.max_epochs,
            "paired_count": len(st.paired),
            "pool_count": len(st.pool),
            "test_count": len(st.test_ids),
            "tasks_total": len(tasks),
            "tasks_submitted": sum(1 for t in tasks
                                   if t.status is TaskStatus.SUBMITTED),
            "history": [{
                "epoch": m.epoch,
                "paired_fraction": m.paired_fraction,
                "r_at_k_text": {str(k): v for k, v in m.r_at_k_text.items()},
                "r_at_k_image": {str(k): v for k, v in m.r_at_k_image.items()},
            } for m in st.history],
            "metrics_csv": metrics_to_csv(st.history),
        }

    @app.get("/api/tasks")
    def list_tasks(status: str | None = None):
        tasks = [session.tasks[tid] for tid in session.task_order
                 if session.tasks[tid].epoch == session.state.epoch]
        if status:
            tasks = [t for t in tasks if t.status.value == status]
        return {"tasks": [_task_view(session, t) for t in tasks]}

    @app.get("/api/tasks/{task_id}")
    def get_task(task_id: str):
        task = session.tasks.get(task_id)
        if task is None:
            raise UnknownTask(f"no task {task_id!r}")
        return _task_view(session, task, with_candidates=True)

    @app.post("/api/tasks/{task_id}/annotation")
    def post_annotation(task_id: str, payload: dict):
        task = session.submit_annotation(task_id, payload)
        if checkpoint_path:
            session.save(checkpoint_path)
        return _task_view(session, task)

    @app.post("/api/epoch/advance")
    def advance():
        state = session.advance_epoch()
        if checkpoint_path:
            session.save(checkpoint_path)
        m = state.history[-1]
        return {
            "epoch": state.epoch,
            "paired_count": len(state.paired),
            "metrics": {
                "epoch": m.epoch,
                "paired_fraction": m.paired_fraction,
                "r_at_k_text": {str(k): v for k, v in m.r_at_k_text.items()},
                "r_at_k_image": {str(k): v for k, v in m.r_at_k_image.items()},
            },
        }

    if static_dir and Path(static_dir).is_dir():
        from fastapi.staticfiles import StaticFiles
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")

    return app
