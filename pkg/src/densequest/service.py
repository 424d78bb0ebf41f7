"""HTTP surface: collection upload, job submission and monitoring, results,
model bundles, and the method catalog, with the worker pool running in the
app lifespan.

Mutating endpoints are gated by one static bearer token when the config sets
one; reads are open.
"""

from __future__ import annotations

import importlib
import io
import time
import uuid
from contextlib import asynccontextmanager
from pathlib import Path

from fastapi import Depends, FastAPI, File, Form, HTTPException, Request, UploadFile
from fastapi.responses import JSONResponse, Response
from fastapi.staticfiles import StaticFiles

from .config import ServiceConfig
from .corpus import parse_corpus, parse_qrels, parse_queries
from .errors import (
    DenseQuestError,
    InvalidParams,
    NotFound,
    UnknownCollection,
    UnknownMethod,
)
from .models import (
    Registry,
    StubEncoderClient,
    default_registry,
    export_bundle,
    load_registry,
    make_generator,
)
from .pipeline import Runtime, WorkerPool
from .selection import METHODS, all_embeddings_cached
from .store import CollectionRecord, Store, queue_class_for

UPLOAD_CHUNK = 1024 * 1024


def build_encoder_client(config: ServiceConfig):
    """Default stub client, or a factory named `module:function` in the
    config (handed the plugin params table)."""
    if not config.encoder_plugin:
        return StubEncoderClient()
    module_name, _, attr = config.encoder_plugin.partition(":")
    if not attr:
        raise ValueError(f"encoder_plugin must look like 'module:function', got {config.encoder_plugin!r}")
    factory = getattr(importlib.import_module(module_name), attr)
    return factory(dict(config.encoder_plugin_params))


def build_registry(config: ServiceConfig) -> Registry:
    return load_registry(config.registry_path) if config.registry_path else default_registry()


def create_app(
    config: ServiceConfig,
    registry: Registry | None = None,
    encoder=None,
    generator=None,
) -> FastAPI:
    registry = registry if registry is not None else build_registry(config)
    encoder = encoder if encoder is not None else build_encoder_client(config)
    generator = generator if generator is not None else make_generator(config.generator_endpoint)

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        store = Store(config.data_dir)
        runtime = Runtime(store=store, registry=registry, encoder=encoder, generator=generator, config=config)
        pool = WorkerPool(runtime)
        pool.start()
        app.state.runtime = runtime
        app.state.pool = pool
        try:
            yield
        finally:
            pool.stop()

    app = FastAPI(title="densequest", lifespan=lifespan)

    def runtime(request: Request) -> Runtime:
        return request.app.state.runtime

    async def require_token(request: Request) -> None:
        if not config.auth_token:
            return
        header = request.headers.get("authorization", "")
        if header != f"Bearer {config.auth_token}":
            raise HTTPException(status_code=401, detail="missing or invalid bearer token")

    @app.exception_handler(DenseQuestError)
    async def dense_quest_error(request: Request, exc: DenseQuestError):
        status = 404 if isinstance(exc, (NotFound, UnknownCollection)) else 400
        return JSONResponse(
            status_code=status, content={"error": type(exc).__name__, "detail": str(exc)}
        )

    async def read_capped(upload: UploadFile, cap: int) -> bytes:
        chunks: list[bytes] = []
        total = 0
        while True:
            chunk = await upload.read(UPLOAD_CHUNK)
            if not chunk:
                break
            total += len(chunk)
            if total > cap:
                raise HTTPException(status_code=413, detail=f"upload exceeds the {cap} byte cap")
            chunks.append(chunk)
        return b"".join(chunks)

    def decode_text(data: bytes, what: str) -> str:
        try:
            return data.decode("utf-8")
        except UnicodeDecodeError as e:
            raise InvalidParams(f"{what} is not valid UTF-8: {e}") from None

    @app.post("/api/collections", dependencies=[Depends(require_token)])
    async def upload_collection(
        request: Request,
        corpus: UploadFile = File(...),
        queries: UploadFile | None = File(None),
        qrels: UploadFile | None = File(None),
        name: str = Form(""),
    ):
        rt = runtime(request)
        cap = config.upload_cap_bytes
        corpus_bytes = await read_capped(corpus, cap)
        documents = parse_corpus(io.StringIO(decode_text(corpus_bytes, "corpus")))
        parsed_queries = []
        queries_bytes = b""
        if queries is not None:
            queries_bytes = await read_capped(queries, cap)
            parsed_queries = parse_queries(io.StringIO(decode_text(queries_bytes, "queries")))
        qrels_bytes = b""
        has_qrels = False
        if qrels is not None:
            qrels_bytes = await read_capped(qrels, cap)
            parse_qrels(io.StringIO(decode_text(qrels_bytes, "qrels")))
            has_qrels = True

        collection_id = uuid.uuid4().hex[:12]
        target = rt.store.collection_dir(collection_id)
        target.mkdir(parents=True, exist_ok=True)
        (target / "corpus.jsonl").write_bytes(corpus_bytes)
        if queries is not None:
            (target / "queries.jsonl").write_bytes(queries_bytes)
        if has_qrels:
            (target / "qrels.tsv").write_bytes(qrels_bytes)
        record = CollectionRecord(
            id=collection_id,
            name=name or (corpus.filename or collection_id),
            n_docs=len(documents),
            n_queries=len(parsed_queries),
            has_qrels=has_qrels,
            created_at=time.time(),
        )
        rt.store.add_collection(record)
        return {"collection_id": collection_id, "collection": record.to_dict()}

    @app.get("/api/collections")
    async def list_collections(request: Request):
        return {"collections": [c.to_dict() for c in runtime(request).store.list_collections()]}

    @app.post("/api/jobs", dependencies=[Depends(require_token)])
    async def submit_job(request: Request, body: dict):
        rt = runtime(request)
        collection_id = body.get("collection_id", "")
        method = body.get("method", "")
        params = body.get("params", {}) or {}
        if method not in METHODS:
            raise UnknownMethod(f"unknown method {method!r}")
        try:
            record = rt.store.get_collection(collection_id)
        except NotFound:
            raise UnknownCollection(f"collection {collection_id!r} not found") from None
        if not isinstance(params, dict):
            raise InvalidParams("params must be an object")
        rt.default_params().merged(params)  # validate early, before queueing
        if METHODS[method].requires_queries and record.n_queries == 0:
            raise InvalidParams(f"method {method!r} requires a query set")
        encoding_required = not all_embeddings_cached(rt.store.embeddings_dir(collection_id), rt.registry)
        queue_class = queue_class_for(method, encoding_required)
        job = rt.store.submit_job(collection_id, method, params, queue_class)
        return job.to_dict()

    @app.get("/api/jobs")
    async def list_jobs(request: Request):
        return {"jobs": [j.to_dict() for j in runtime(request).store.list_jobs()]}

    @app.get("/api/jobs/{job_id}")
    async def get_job(request: Request, job_id: str):
        return runtime(request).store.get_job(job_id).to_dict()

    @app.get("/api/jobs/{job_id}/result")
    async def get_result(request: Request, job_id: str):
        return runtime(request).store.get_result(job_id).to_dict()

    @app.get("/api/models")
    async def list_models(request: Request):
        rows = []
        for record in runtime(request).registry:
            rows.append(
                {
                    "model_id": record.model_id,
                    "dim": record.dim,
                    "sim": record.sim,
                    "encoder_endpoint": record.encoder_endpoint,
                    "msmarco_ndcg10": record.msmarco_ndcg10,
                    "mteb_avg": record.mteb_avg,
                    "description": record.description,
                }
            )
        return {"models": rows}

    @app.get("/api/models/{model_id}/bundle")
    async def download_bundle(request: Request, model_id: str):
        record = runtime(request).registry.get(model_id)
        payload = export_bundle(record)
        return Response(
            content=payload,
            media_type="application/zip",
            headers={"Content-Disposition": f'attachment; filename="{model_id}_bundle.zip"'},
        )

    @app.get("/api/methods")
    async def list_methods():
        rows = []
        for info in METHODS.values():
            rows.append(
                {
                    "method": info.method,
                    "name": info.name,
                    "description": info.description,
                    "direction": info.direction,
                    "requires_queries": info.requires_queries,
                    "queue_class": "heavy" if info.heavy else "light",
                    "params": list(info.params),
                }
            )
        return {"methods": rows}

    static_dir = Path(config.static_dir) if config.static_dir else None
    if static_dir and static_dir.is_dir():
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")

    return app
