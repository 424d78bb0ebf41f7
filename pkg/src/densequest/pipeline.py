"""Staged job execution and the worker pool.

A claimed job always traverses both stages: the encoding stage guarantees a
cached embedding matrix per registry model (a pass-through when everything is
already on disk), then the selection stage computes the method's ranked table
and persists it.  Any error fails the job with the error preserved; cached
embeddings written before the failure stay valid.
"""

from __future__ import annotations

import logging
import threading
import time
from dataclasses import dataclass
from pathlib import Path

from .config import ServiceConfig
from .corpus import parse_corpus, parse_qrels, parse_queries
from .models import EncoderClient, GeneratorClient, Registry
from .selection import (
    CollectionData,
    SelectionContext,
    SelectionParams,
    compute_method,
    encode_collection,
)
from .store import QUEUE_HEAVY, QUEUE_LIGHT, SELECTING, SelectionResult, Store

logger = logging.getLogger(__name__)


@dataclass
class Runtime:
    """Everything a worker needs besides the job itself."""

    store: Store
    registry: Registry
    encoder: EncoderClient
    generator: GeneratorClient
    config: ServiceConfig

    def default_params(self) -> SelectionParams:
        return SelectionParams(
            k=self.config.default_k,
            seed=self.config.seed,
            cap=self.config.mask_cap,
            n_docs=self.config.larmor_docs,
            pseudo_queries_per_doc=self.config.pseudo_queries_per_doc,
            fusion_depth=self.config.fusion_depth,
            rrf_c=self.config.rrf_c,
            normalize_before_qpp=self.config.normalize_before_qpp,
            alteration_direction=self.config.alteration_direction,
        )


def load_collection_data(collection_dir: Path) -> CollectionData:
    with open(collection_dir / "corpus.jsonl", "r", encoding="utf-8") as fh:
        documents = parse_corpus(fh)
    queries = []
    queries_path = collection_dir / "queries.jsonl"
    if queries_path.exists():
        with open(queries_path, "r", encoding="utf-8") as fh:
            queries = parse_queries(fh)
    qrels = None
    qrels_path = collection_dir / "qrels.tsv"
    if qrels_path.exists():
        with open(qrels_path, "r", encoding="utf-8") as fh:
            qrels = parse_qrels(fh)
    return CollectionData(documents=documents, queries=queries, qrels=qrels)


def run_pipeline(job_id: str, runtime: Runtime) -> None:
    """Drive one claimed job from ENCODING to FINISHED (or FAILED)."""
    store = runtime.store
    job = store.get_job(job_id)
    try:
        collection = load_collection_data(store.collection_dir(job.collection_id))
        params = runtime.default_params().merged(job.params)
        ctx = SelectionContext(
            collection=collection,
            registry=runtime.registry,
            encoder=runtime.encoder,
            generator=runtime.generator,
            embeddings_dir=store.embeddings_dir(job.collection_id),
            params=params,
            progress=lambda done, total: store.update_progress(job_id, done, total),
        )
        encode_collection(ctx)
        store.advance(job_id, SELECTING)
        outcome = compute_method(job.method, ctx)
        result = SelectionResult(
            job_id=job_id,
            method=outcome.method,
            ranked=outcome.ranked,
            direction=outcome.direction,
            completed_at=time.time(),
            per_query_diagnostics=outcome.diagnostics,
        )
        store.finish(job_id, result)
    except Exception as e:  # noqa: BLE001 - any stage error fails the job
        logger.exception("job %s failed", job_id)
        store.fail(job_id, f"{type(e).__name__}({e})")


class WorkerPool:
    """Heavy and light worker threads polling their queues."""

    def __init__(self, runtime: Runtime, poll_interval: float = 0.05):
        self.runtime = runtime
        self.poll_interval = poll_interval
        self._stop = threading.Event()
        self._threads: list[threading.Thread] = []

    def start(self) -> None:
        spec = [(QUEUE_HEAVY, self.runtime.config.heavy_workers), (QUEUE_LIGHT, self.runtime.config.light_workers)]
        for queue_class, count in spec:
            for i in range(count):
                thread = threading.Thread(
                    target=self._loop, args=(queue_class,), name=f"worker-{queue_class}-{i}", daemon=True
                )
                thread.start()
                self._threads.append(thread)

    def stop(self, timeout: float = 10.0) -> None:
        self._stop.set()
        for thread in self._threads:
            thread.join(timeout=timeout)
        self._threads.clear()

    def _loop(self, queue_class: str) -> None:
        while not self._stop.is_set():
            job = self.runtime.store.claim_task(queue_class)
            if job is None:
                self._stop.wait(self.poll_interval)
                continue
            run_pipeline(job.id, self.runtime)
