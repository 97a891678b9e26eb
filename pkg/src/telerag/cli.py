"""Command-line surface for batch runs.

Subcommands: ingest (txt -> chunk JSONL), embed (chunks -> vector store),
eval (MCQ benchmark, plain or RAG-augmented), usecase-energy (fit the energy
formulas), usecase-assoc (association accuracy curve). Every run writes a
manifest next to its primary output; reruns with the same inputs and seed
produce byte-identical outputs.

Exit codes: 0 ok, 1 usage, 2 data/validation, 3 provider/model failure.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import os
import random
import sys
from datetime import datetime, timezone
from pathlib import Path

from . import corpus as corpus_mod
from . import embed as embed_mod
from . import energymodel, evalharness, rag, userassoc, vstore
from .errors import DataError, FingerprintMismatchError, ModelError, ProviderError, TeleragError
from .modelclient import ModelConfig, build_backend

_ASSOC_MOCK_KINDS = ("mock_oracle", "mock_strongest", "mock_random")


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # exit 1 on usage errors instead of argparse's 2
        raise _UsageError(message)


def _utcnow() -> str:
    return datetime.now(timezone.utc).isoformat()


@contextlib.contextmanager
def _output_lock(primary_out: Path):
    lock_path = Path(str(primary_out) + ".lock")
    try:
        fd = os.open(lock_path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise DataError(
            f"another run appears to be writing {primary_out} (remove {lock_path} if stale)"
        ) from None
    os.close(fd)
    try:
        yield
    finally:
        lock_path.unlink(missing_ok=True)


def _write_manifest(
    primary_out: Path,
    command: str,
    config: dict,
    outputs: list[Path],
    started_at: str,
    seed: int | None = None,
    dataset_fingerprint: str | None = None,
) -> None:
    manifest = {
        "command": command,
        "config": config,
        "dataset_fingerprint": dataset_fingerprint,
        "seed": seed,
        "started_at": started_at,
        "finished_at": _utcnow(),
        "outputs": [str(p) for p in outputs],
    }
    path = Path(str(primary_out) + ".manifest.json")
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(manifest, f, ensure_ascii=False, sort_keys=True, indent=2)
        f.write("\n")


def _load_json_file(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except ValueError as exc:
        raise DataError(f"malformed JSON config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise DataError(f"config {path} must be a JSON object")
    return data


def _provider_from_file(path: str) -> embed_mod.EmbeddingProviderConfig:
    data = _load_json_file(path)
    allowed = {"kind", "dims", "endpoint", "model_name", "seed", "timeout_s"}
    unknown = set(data) - allowed
    if unknown:
        raise DataError(f"unknown provider config key(s): {', '.join(sorted(unknown))}")
    try:
        return embed_mod.EmbeddingProviderConfig(**data)
    except (TypeError, ValueError) as exc:
        raise DataError(f"invalid provider config {path}: {exc}") from exc


def _model_config_from_dict(data: dict, path: str) -> ModelConfig:
    allowed = {
        "kind", "endpoint", "model_name", "temperature", "max_tokens", "api_shape",
        "script_path", "reply", "max_attempts", "backoff_s", "timeout_s", "concurrency",
    }
    unknown = set(data) - allowed
    if unknown:
        raise DataError(f"unknown model config key(s): {', '.join(sorted(unknown))}")
    try:
        return ModelConfig(**data)
    except (TypeError, ValueError) as exc:
        raise DataError(f"invalid model config {path}: {exc}") from exc


def _resolve_seed(arg_seed: int | None) -> int:
    seed = random.randrange(2**32) if arg_seed is None else arg_seed
    print(f"seed: {seed}")
    return seed


def _seq_stats(values: list[int]) -> str:
    if not values:
        return "0 tokens"
    return (
        f"{sum(values)} tokens "
        f"(chunk min {min(values)}, max {max(values)}, mean {sum(values) / len(values):.1f})"
    )


def cmd_ingest(args) -> int:
    input_dir = Path(args.input)
    txt_files = sorted(input_dir.glob("*.txt")) if input_dir.is_dir() else []
    if not txt_files:
        raise DataError(f"no .txt documents found in {input_dir}")
    started = _utcnow()
    out = Path(args.out)
    with _output_lock(out):
        bank = corpus_mod.Corpus()
        for path in txt_files:
            bank.ingest(path.name, path.read_bytes())
        chunks = bank.chunk_all(chunk_size=args.chunk_size, overlap=args.overlap)
        corpus_mod.write_chunks_jsonl(chunks, out)
        _write_manifest(
            out,
            "ingest",
            {"input": str(input_dir), "chunk_size": args.chunk_size, "overlap": args.overlap},
            [out],
            started,
        )
    print(
        f"ingested {len(bank.documents)} documents -> {len(chunks)} chunks, "
        + _seq_stats([c.token_count for c in chunks])
    )
    print(f"corpus written to {out}")
    return 0


def cmd_embed(args) -> int:
    chunks = corpus_mod.read_chunks_jsonl(args.corpus)
    provider = _provider_from_file(args.provider_config)
    out = Path(args.out)
    if out.exists() and not args.force:
        _, _, _, existing_fp = vstore.VectorStore.read_header(out)
        if existing_fp != provider.fingerprint:
            raise FingerprintMismatchError(
                f"{out} was built with provider {existing_fp!r}; refusing to replace it "
                f"with {provider.fingerprint!r} (use --force to override)"
            )
    started = _utcnow()
    with _output_lock(out):
        store = vstore.VectorStore(dims=provider.dims, provider_fingerprint=provider.fingerprint)
        tmp = Path(str(out) + ".tmp")
        try:
            batch = 64
            for i in range(0, len(chunks), batch):
                part = chunks[i : i + batch]
                vectors = embed_mod.embed_texts(provider, [c.text for c in part])
                for chunk, vec in zip(part, vectors):
                    store.insert(vstore.VectorRecord(chunk_id=chunk.chunk_id, embedding=vec))
            store.save(tmp)
            tmp.replace(out)
        finally:
            tmp.unlink(missing_ok=True)
        _write_manifest(
            out,
            "embed",
            {"corpus": args.corpus, "provider_fingerprint": provider.fingerprint},
            [out],
            started,
        )
    print(f"embedded {len(store)} chunks -> {out} (provider {provider.fingerprint})")
    return 0


def cmd_eval(args) -> int:
    items = evalharness.load_dataset(args.dataset)
    model_cfg = _model_config_from_dict(_load_json_file(args.model_config), args.model_config)
    backend = build_backend(model_cfg)

    store = None
    provider = None
    chunks_by_id = None
    cfg = rag.RagConfig(
        k=args.k, max_context_tokens=args.max_context_tokens, query_mode=args.query_mode
    )
    if args.rag:
        if not args.corpus:
            raise DataError("--rag needs --corpus for the chunk texts")
        store = vstore.VectorStore.load(args.rag)
        chunks_by_id = corpus_mod.chunk_map(corpus_mod.read_chunks_jsonl(args.corpus))
        if args.provider_config:
            provider = _provider_from_file(args.provider_config)
        else:
            provider = embed_mod.provider_from_fingerprint(store.provider_fingerprint)

    started = _utcnow()
    report_path = Path(args.report)
    audit_path = Path(args.audit) if args.audit else Path(str(report_path) + ".audit.jsonl")
    with _output_lock(report_path):
        results = rag.run_evaluation(
            backend,
            items,
            store=store,
            provider=provider,
            chunks=chunks_by_id,
            cfg=cfg,
            concurrency=args.concurrency,
            strict_parse=args.strict_parse,
        )
        run_meta = {
            "model": model_cfg.summary(),
            "rag_enabled": args.rag is not None,
            "k": cfg.k if args.rag else None,
        }
        report = evalharness.score(items, [r.answer for r in results], run_meta=run_meta)
        outputs = [report_path, audit_path]
        evalharness.write_report_json(report, report_path)
        rag.write_audit_log(results, audit_path)
        if args.csv:
            Path(args.csv).write_text(evalharness.report_csv(report), encoding="utf-8")
            outputs.append(Path(args.csv))
        _write_manifest(
            report_path,
            "eval",
            {
                "dataset": args.dataset,
                "model_config": args.model_config,
                "rag": args.rag,
                "k": cfg.k,
                "strict_parse": args.strict_parse,
            },
            outputs,
            started,
            dataset_fingerprint=report.dataset_fingerprint,
        )
    for cat, stats in report.categories.items():
        print(f"{cat}: {stats.correct}/{stats.count} = {stats.accuracy_percent:.2f}%"
              + (f" ({stats.errored} errored)" if stats.errored else ""))
    print(f"Overall: {report.overall.correct}/{report.overall.count} "
          f"= {report.overall.accuracy_percent:.2f}%")
    print(f"report written to {report_path}")
    return 0


def cmd_usecase_energy(args) -> int:
    kinds = ["eq1", "eq2"] if args.model == "both" else [args.model]
    out = Path(args.out)
    seed = None
    if args.data:
        records = energymodel.read_records_csv(args.data)
        source = {"data": args.data}
    else:
        seed = _resolve_seed(args.seed)
        records = energymodel.generate_synthetic(args.n_bs, noise_sd=args.noise_sd, seed=seed)
        source = {"synthetic": {"n_bs": args.n_bs, "noise_sd": args.noise_sd}}
    started = _utcnow()
    with _output_lock(out):
        models = [energymodel.fit(records, kind) for kind in kinds]
        fitted = [
            {
                "kind": m.kind,
                "params": {k: round(v, 12) for k, v in m.params.items()},
                "mape_percent": round(m.mape_percent, 6),
                "n_records": m.n_records,
            }
            for m in models
        ]
        payload = fitted[0] if len(fitted) == 1 else {"models": fitted}
        with open(out, "w", encoding="utf-8", newline="\n") as f:
            json.dump(payload, f, ensure_ascii=False, sort_keys=True, indent=2)
            f.write("\n")
        outputs = [out]
        if args.plot_csv:
            energymodel.write_plot_csv(records, models, args.plot_csv)
            outputs.append(Path(args.plot_csv))
        _write_manifest(
            out, "usecase-energy", {"source": source, "models": kinds}, outputs, started, seed=seed
        )
    for m in models:
        print(f"{m.kind}: mape={m.mape_percent:.3f}% params={m.params}")
    print(f"fit written to {out}")
    return 0


def _assoc_backend(args):
    data = _load_json_file(args.model_config)
    kind = data.get("kind")
    if kind in _ASSOC_MOCK_KINDS:
        if kind == "mock_oracle":
            return userassoc.OracleBackend(), {"kind": kind}
        if kind == "mock_strongest":
            return userassoc.StrongestBackend(), {"kind": kind}
        return (
            userassoc.RandomGuessBackend(seed=int(data.get("seed", 0))),
            {"kind": kind, "seed": int(data.get("seed", 0))},
        )
    cfg = _model_config_from_dict(data, args.model_config)
    return build_backend(cfg), cfg.summary()


def cmd_usecase_assoc(args, parser: _Parser) -> int:
    try:
        counts = [int(part) for part in args.bs_counts.split(",") if part.strip()]
    except ValueError:
        parser.error(f"--bs-counts must be comma-separated integers, got {args.bs_counts!r}")
    if not counts or any(c < 2 for c in counts):
        parser.error("--bs-counts values must be >= 2")
    if any(c > userassoc.MAX_STATIONS for c in counts):
        parser.error(f"--bs-counts values must be <= {userassoc.MAX_STATIONS}")
    if args.trials < 1:
        parser.error("--trials must be >= 1")
    backend, model_summary = _assoc_backend(args)
    seed = _resolve_seed(args.seed)
    out = Path(args.out)
    started = _utcnow()
    with _output_lock(out):
        curve = userassoc.run_curve(backend, counts, trials_per_n=args.trials, seed=seed)
        out.write_text(userassoc.curve_csv(curve), encoding="utf-8")
        outputs = [out]
        if args.problems_out:
            userassoc.export_problems_jsonl(counts, args.trials, seed, args.problems_out)
            outputs.append(Path(args.problems_out))
        _write_manifest(
            out,
            "usecase-assoc",
            {"bs_counts": counts, "trials": args.trials, "model": model_summary},
            outputs,
            started,
            seed=seed,
        )
    for p in curve.points:
        print(f"n={p.n_bs}: {p.correct}/{p.trials} = {p.accuracy_percent:.2f}%"
              + (f" ({p.errored} errored)" if p.errored else ""))
    print(f"curve written to {out}")
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="telerag", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="chunk .txt documents into a corpus JSONL")
    p.add_argument("--input", required=True, help="directory of .txt files")
    p.add_argument("--out", required=True, help="output corpus JSONL path")
    p.add_argument("--chunk-size", type=int, default=corpus_mod.DEFAULT_CHUNK_SIZE)
    p.add_argument("--overlap", type=int, default=0)

    p = sub.add_parser("embed", help="embed a corpus into a vector store")
    p.add_argument("--corpus", required=True)
    p.add_argument("--provider-config", required=True, help="embedding provider JSON config")
    p.add_argument("--out", required=True, help="output store path")
    p.add_argument("--force", action="store_true", help="replace a store built by another provider")

    p = sub.add_parser("eval", help="run the MCQ benchmark")
    p.add_argument("--dataset", required=True)
    p.add_argument("--model-config", required=True, help="model backend JSON config")
    p.add_argument("--rag", default=None, help="vector store path; enables retrieval")
    p.add_argument("--corpus", default=None, help="corpus JSONL (required with --rag)")
    p.add_argument("--provider-config", default=None, help="embedding provider JSON config")
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--max-context-tokens", type=int, default=1536)
    p.add_argument("--query-mode", choices=rag.QUERY_MODES, default="question_plus_options")
    p.add_argument("--report", required=True, help="output report JSON path")
    p.add_argument("--csv", default=None, help="output per-category CSV path")
    p.add_argument("--audit", default=None, help="audit JSONL path (default: <report>.audit.jsonl)")
    p.add_argument("--concurrency", type=int, default=4)
    p.add_argument("--strict-parse", action="store_true",
                   help="only accept answers that start with the option number")

    p = sub.add_parser("usecase-energy", help="fit the energy formulas")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--data", default=None, help="CSV with columns bs_id,L,MTX,DSS,E")
    src.add_argument("--synthetic", action="store_true", help="generate seeded synthetic records")
    p.add_argument("--n-bs", type=int, default=90)
    p.add_argument("--noise-sd", type=float, default=0.02)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--model", choices=["eq1", "eq2", "both"], default="both")
    p.add_argument("--out", required=True, help="output fit JSON path")
    p.add_argument("--plot-csv", default=None, help="load/truth/prediction CSV path")

    p = sub.add_parser("usecase-assoc", help="association accuracy curve")
    p.add_argument("--bs-counts", default="2,4,6,8,10")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--model-config", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True, help="output curve CSV path")
    p.add_argument("--problems-out", default=None, help="export the problem set as JSONL")

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # argparse --help
        return int(exc.code or 0)
    try:
        if args.command == "ingest":
            return cmd_ingest(args)
        if args.command == "embed":
            return cmd_embed(args)
        if args.command == "eval":
            return cmd_eval(args)
        if args.command == "usecase-energy":
            return cmd_usecase_energy(args)
        if args.command == "usecase-assoc":
            return cmd_usecase_assoc(args, parser)
        raise AssertionError(f"unhandled command {args.command}")
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (ProviderError, ModelError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (DataError, UnicodeDecodeError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except TeleragError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
