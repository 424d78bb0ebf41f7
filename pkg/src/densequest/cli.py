"""dq: serve the selection service, or run encode/select/eval locally.

`dq select` prints the ranked table deterministically (same config and seed
give byte-identical output), so its output is safe to diff in pipelines.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import ServiceConfig, load_config
from .errors import DenseQuestError
from .fusion import delta_best, kendall_tau, mean_ndcg_at_k
from .models import StubEncoderClient, StubGeneratorClient, default_registry, load_registry
from .pipeline import load_collection_data
from .retrieval import read_trec_run
from .selection import (
    METHODS,
    SelectionContext,
    SelectionParams,
    compute_method,
    encode_collection,
    ensure_embeddings,
)
from .synth import PoolSpec, write_pool


def _registry_for(args):
    return load_registry(args.registry) if args.registry else default_registry()


def _context(args, registry, params: SelectionParams) -> SelectionContext:
    collection_dir = Path(args.collection)
    data = load_collection_data(collection_dir)
    queries_override = getattr(args, "queries", "")
    if queries_override:
        from .corpus import parse_queries

        with open(queries_override, "r", encoding="utf-8") as fh:
            data.queries = parse_queries(fh)
    embeddings_dir = Path(args.data_dir) if args.data_dir else collection_dir / "embeddings"
    encoder = StubEncoderClient()
    if getattr(args, "planted", False):
        from .synth import PlantedEncoderClient

        encoder = PlantedEncoderClient(PoolSpec(seed=args.pool_seed))
    return SelectionContext(
        collection=data,
        registry=registry,
        encoder=encoder,
        generator=StubGeneratorClient(),
        embeddings_dir=embeddings_dir,
        params=params,
    )


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    config = load_config(args.config) if args.config else ServiceConfig()
    app = create_app(config)
    uvicorn.run(app, host=config.host, port=config.port, log_level="info")
    return 0


def cmd_encode(args) -> int:
    registry = _registry_for(args)
    params = SelectionParams(seed=args.seed)
    ctx = _context(args, registry, params)
    if args.model:
        matrix = ensure_embeddings(ctx, registry.get(args.model))
        print(f"{matrix.model_id}: {len(matrix.doc_ids)} docs x dim {matrix.dim}")
    else:
        encode_collection(ctx)
        for record in ctx.sorted_records():
            matrix = ensure_embeddings(ctx, record)
            print(f"{matrix.model_id}: {len(matrix.doc_ids)} docs x dim {matrix.dim}")
    return 0


def cmd_select(args) -> int:
    registry = _registry_for(args)
    params = SelectionParams(k=args.k, seed=args.seed)
    ctx = _context(args, registry, params)
    outcome = compute_method(args.method, ctx)
    print(f"method={outcome.method} direction={outcome.direction} k={args.k} seed={args.seed}")
    print(f"{'rank':<6}{'model':<28}value")
    for model_id, value, rank in outcome.ranked:
        rendered = "n/a" if value is None else f"{value:.6f}"
        print(f"{rank:<6}{model_id:<28}{rendered}")
    return 0


def cmd_eval(args) -> int:
    from .corpus import parse_qrels

    with open(args.qrels, "r", encoding="utf-8") as fh:
        qrels = parse_qrels(fh)
    scores: dict[str, float] = {}
    for i, run_path in enumerate(args.run):
        run = read_trec_run(run_path)
        label = run.model_id or Path(run_path).stem
        if label in scores:
            label = f"{label}#{i}"
        scores[label] = mean_ndcg_at_k(run, qrels, args.k)
    for label, value in scores.items():
        print(f"nDCG@{args.k} {label:<28}{value:.6f}")
    if len(scores) >= 2:
        true_order = sorted(scores, key=lambda m: (-scores[m], m))
        print(f"best {true_order[0]}")
        if args.predicted:
            predicted = [p.strip() for p in args.predicted.split(",") if p.strip()]
            tau = kendall_tau(predicted, true_order)
            drop = delta_best(scores, predicted[0])
            print(f"kendall_tau {tau:.6f}")
            print(f"delta_best_pct {drop:.6f}")
    return 0


def cmd_synth(args) -> int:
    out = write_pool(args.out, PoolSpec(seed=args.seed))
    print(f"planted pool written to {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dq", description="dense retriever selection toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p_serve = sub.add_parser("serve", help="run the HTTP service")
    p_serve.add_argument("--config", default="", help="TOML config file")
    p_serve.set_defaults(func=cmd_serve)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--collection", required=True, help="directory with corpus.jsonl [queries.jsonl qrels.tsv]")
    common.add_argument("--registry", default="", help="models.toml (default: built-in stub pool)")
    common.add_argument("--data-dir", default="", help="embedding cache directory")
    common.add_argument("--seed", type=int, default=7)
    common.add_argument("--planted", action="store_true", help="use the planted synthetic encoder")
    common.add_argument("--pool-seed", type=int, default=0, help="seed of the planted pool (with --planted)")

    p_encode = sub.add_parser("encode", parents=[common], help="encode a collection into the embedding cache")
    p_encode.add_argument("--model", default="", help="only this model (default: all)")
    p_encode.set_defaults(func=cmd_encode)

    p_select = sub.add_parser("select", parents=[common], help="rank the model pool for a collection")
    p_select.add_argument("--method", required=True, choices=sorted(METHODS))
    p_select.add_argument("--k", type=int, default=100)
    p_select.add_argument("--queries", default="", help="query file overriding <collection>/queries.jsonl")
    p_select.set_defaults(func=cmd_select)

    p_eval = sub.add_parser("eval", help="nDCG@k of run files against qrels, plus tau/delta-best")
    p_eval.add_argument("--run", action="append", required=True, help="TREC run file (repeatable)")
    p_eval.add_argument("--qrels", required=True)
    p_eval.add_argument("--k", type=int, default=10)
    p_eval.add_argument("--predicted", default="", help="comma-separated predicted model order for tau/delta-best")
    p_eval.set_defaults(func=cmd_eval)

    p_synth = sub.add_parser("synth", help="write a synthetic planted pool for demos and tests")
    p_synth.add_argument("--out", required=True)
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.set_defaults(func=cmd_synth)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DenseQuestError as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
