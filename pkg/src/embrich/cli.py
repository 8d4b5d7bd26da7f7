"""Command-line entry points: run, embed, report, validate-config.

Exit codes: 0 success, 1 user error (bad flags, malformed config, missing
files), 2 internal error. All input comes from flags and config files; no
prompts.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import ablation as ab
from .bundle import emit_bundle
from .data import load_dataset, impute_missing, stratified_sample
from .embeddings import EmbeddingCache, HASH_BACKEND, REMOTE_BACKEND, embed_corpus, make_backend
from .errors import EmbrichError
from .figures import render_bundle_figures
from .textualize import build_corpus

log = logging.getLogger(__name__)

CACHE_ENV = "EMBRICH_CACHE_DIR"


class _Parser(argparse.ArgumentParser):
    """argparse that exits 1 (not 2) on usage errors, per the CLI contract."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _build_parser() -> _Parser:
    parser = _Parser(prog="embrich", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute the full ablation from a run config")
    run.add_argument("--config", required=True, help="run config JSON")
    run.add_argument("--out", required=True, help="bundle output directory")
    run.add_argument("--seed", type=int, default=None, help="override the run seed")
    run.add_argument("--fold-safe", action="store_true", help="also evaluate leak-free folds")
    run.add_argument("--backend", choices=["hash", "remote"], default=None)
    run.add_argument("--endpoint", default=None, help="embedding service URL (remote backend)")

    embed = sub.add_parser("embed", help="warm the embedding cache for a run config")
    embed.add_argument("--config", required=True)
    embed.add_argument("--out", default=".", help="directory for the cache (unless env is set)")
    embed.add_argument("--backend", choices=["hash", "remote"], default=None)
    embed.add_argument("--endpoint", default=None)

    report = sub.add_parser("report", help="render SVG figures from an emitted bundle")
    report.add_argument("--out", required=True, help="bundle directory")

    validate = sub.add_parser("validate-config", help="check a run config document")
    validate.add_argument("--config", required=True)

    return parser


def _load_config(path: str) -> ab.AblationConfig:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    return ab.ablation_config_from_json(doc)


def _apply_overrides(config: ab.AblationConfig, args) -> ab.AblationConfig:
    if getattr(args, "seed", None) is not None:
        config = replace(config, seed=args.seed)
    if getattr(args, "fold_safe", False):
        config = replace(config, fold_safe=True)
    backend_choice = getattr(args, "backend", None)
    if backend_choice == "hash":
        config = replace(
            config,
            backends=tuple(
                replace(b, kind=HASH_BACKEND, endpoint=None) for b in config.backends
            ),
        )
    elif backend_choice == "remote":
        endpoint = args.endpoint
        if endpoint is None:
            raise EmbrichError("--backend remote requires --endpoint")
        config = replace(
            config,
            backends=tuple(
                replace(b, kind=REMOTE_BACKEND, endpoint=endpoint) for b in config.backends
            ),
        )
    return config


def _open_cache(out_dir: str) -> EmbeddingCache:
    cache_dir = Path(os.environ.get(CACHE_ENV) or Path(out_dir) / "cache")
    cache_dir.mkdir(parents=True, exist_ok=True)
    return EmbeddingCache(str(cache_dir / "embeddings.jsonl"))


def _cmd_run(args) -> int:
    config = _apply_overrides(_load_config(args.config), args)
    cache = _open_cache(args.out)
    report = ab.run_ablation(config, cache=cache)
    manifest = emit_bundle(report, args.out)
    print(f"bundle written to {args.out} ({len(manifest['artifacts'])} artifacts)")
    if report.failures:
        print(f"warning: {len(report.failures)} cells failed; see manifest.json", file=sys.stderr)
    return 0


def _cmd_embed(args) -> int:
    config = _apply_overrides(_load_config(args.config), args)
    cache = _open_cache(args.out)
    total = 0
    for ds_config in config.datasets:
        ds = load_dataset(ds_config)
        if ds.config.sample_fraction < 1.0:
            ds = stratified_sample(ds, ds.config.sample_fraction, ds.config.seed)
        corpus = build_corpus(impute_missing(ds))
        for descriptor in config.backends:
            backend = make_backend(descriptor)
            matrix = embed_corpus(backend, corpus, cache)
            total += matrix.values.shape[0]
            print(f"{ds_config.name or ds_config.path}: {descriptor.model_id} "
                  f"-> {matrix.values.shape[0]} x {matrix.values.shape[1]}")
    print(f"cache now holds {len(cache)} vectors ({total} rows embedded this run)")
    return 0


def _cmd_report(args) -> int:
    written = render_bundle_figures(args.out)
    print(f"{len(written)} figures written to {Path(args.out) / 'figures'}")
    return 0


def _cmd_validate(args) -> int:
    try:
        with open(args.config, encoding="utf-8") as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        print(f"config not found: {args.config}", file=sys.stderr)
        return 1
    except json.JSONDecodeError as exc:
        print(f"config is not valid JSON: {exc}", file=sys.stderr)
        return 1
    problems = validate_run_config(doc)
    if problems:
        for problem in problems:
            print(f"invalid config: {problem}", file=sys.stderr)
        return 1
    print("config ok")
    return 0


def validate_run_config(doc: dict) -> list[str]:
    """Structural checks on a run config document; returns human-readable
    problems naming the offending field (empty list when valid)."""
    problems: list[str] = []
    for key in ("datasets", "backends", "classifiers"):
        if key not in doc:
            problems.append(f"missing field: {key}")
    for i, ds in enumerate(doc.get("datasets", [])):
        for key in ("path", "target_column", "task", "columns"):
            if key not in ds:
                problems.append(f"datasets[{i}]: missing field: {key}")
        if ds.get("task") == "binary" and not ds.get("positive_label"):
            problems.append(f"datasets[{i}]: missing field: positive_label (binary task)")
        for j, col in enumerate(ds.get("columns", [])):
            for key in ("name", "kind"):
                if key not in col:
                    problems.append(f"datasets[{i}].columns[{j}]: missing field: {key}")
    for i, backend in enumerate(doc.get("backends", [])):
        for key in ("model_id", "dim"):
            if key not in backend:
                problems.append(f"backends[{i}]: missing field: {key}")
        if backend.get("kind") == REMOTE_BACKEND and not backend.get("endpoint"):
            problems.append(f"backends[{i}]: missing field: endpoint (remote backend)")
    for i, clf in enumerate(doc.get("classifiers", [])):
        if "kind" not in clf:
            problems.append(f"classifiers[{i}]: missing field: kind")
    if not problems:
        try:
            ab.ablation_config_from_json(doc)
        except EmbrichError as exc:
            problems.append(str(exc))
    return problems


def cli_main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("EMBRICH_LOG", "WARNING"))
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    handlers = {
        "run": _cmd_run,
        "embed": _cmd_embed,
        "report": _cmd_report,
        "validate-config": _cmd_validate,
    }
    try:
        return handlers[args.command](args)
    except (EmbrichError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # anything unexpected is an internal error
        log.exception("internal error")
        print(f"internal error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(cli_main(sys.argv[1:]))


if __name__ == "__main__":
    main()
