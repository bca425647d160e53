"""Command-line interface: one subcommand per pipeline stage, communicating through files.

Errors are reported as a single ``mednorm: error: <kind>: <message>`` line on
stderr with exit status 2 for usage problems and 1 for everything else.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Sequence

from . import __version__
from .candidates import CandidateList, dump_candidates, load_candidates
from .config import RunConfig, load_config
from .datamodel import load_dataset, save_dataset
from .dense import build_dense_index, load_dense_index, provider_from_spec, save_dense_index
from .evaluation import error_breakdown, evaluate, report_json
from .kb import add_alias_source, build_kb, load_kb, save_kb
from .manifest import RunManifest, describe_input, read_kb_hash, write_sidecar
from .pipeline import (DEFAULT_K, DenseGenerator, FilterStats, KbMismatchError, SparseGenerator,
                       expand_abbreviations, filter_by_semantic_group, generate_candidates, link_candidates)
from .projection import RemoteTranslator, project_dataset
from .reranker import RerankerConfig, collect_items, load_model, rerank_items, save_model, train_reranker
from .sparse import build_sparse_index, load_sparse_index, save_sparse_index

logger = logging.getLogger("mednorm")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _one_line(s: str) -> str:
    return " ".join(str(s).split())


def _check_hash(expected: str, artifact: str | Path, what: str) -> None:
    found = read_kb_hash(artifact)
    if found is not None and found != expected:
        raise KbMismatchError(f"{what} {artifact} was built for kb_hash {found[:12]}, expected {expected[:12]}")


def _maybe_config(path: str | None) -> RunConfig | None:
    return load_config(path) if path else None


# -- stages ---------------------------------------------------------------


def cmd_dict(args) -> None:
    cfg = load_config(args.config)
    kb = build_kb(cfg.kb_config())
    sources = cfg.alias_sources() + [Path(p) for p in args.alias_source]
    reports = []
    for src in sources:
        kb, rep = add_alias_source(kb, src)
        reports.append({"path": src.name, "added": rep.added, "skipped": rep.skipped})
    save_kb(kb, args.out)
    write_sidecar(args.out, RunManifest(
        "dict", kb.kb_hash, cfg.digest,
        params={"name": kb.name, "concepts": len(kb), "alias_sources": reports, **kb.metadata},
        inputs={"config": describe_input(args.config)}).finish())


def cmd_index(args) -> None:
    kb = load_kb(args.kb)
    run = RunManifest("index", kb.kb_hash, params={"kind": args.kind}, inputs={"kb": describe_input(args.kb)})
    if args.kind == "tfidf":
        index = build_sparse_index(kb, n=args.ngram)
        run.params["n"] = args.ngram
        save_sparse_index(index, args.out, {"run": run.finish().to_json()})
    else:
        provider = provider_from_spec(args.provider, dim=args.dim)
        index = build_dense_index(kb, provider)
        run.params.update(provider=args.provider, dim=args.dim)
        save_dense_index(index, args.out, {"provider_spec": args.provider, "run": run.finish().to_json()})


def _generator(path: str, provider_spec: str | None):
    manifest = json.loads((Path(path) / "manifest.json").read_text(encoding="utf-8"))
    if manifest.get("kind") == "dense":
        index = load_dense_index(path)
        spec = provider_spec or manifest.get("provider_spec") or "hash"
        return DenseGenerator(index, provider_from_spec(spec, dim=index.dim))
    return SparseGenerator(load_sparse_index(path))


def cmd_link(args) -> None:
    ds = load_dataset(args.dataset)
    if args.expand_abbreviations:
        ds = expand_abbreviations(ds)
    generators = [_generator(p, args.provider) for p in args.index]
    names = [g.name for g in generators]
    if len(set(names)) != len(names):
        raise ValueError(f"duplicate generator kinds among --index arguments: {names}")
    kb = load_kb(args.kb) if args.kb else None
    run_cfg = _maybe_config(args.config)
    type_to_group = run_cfg.type_filter() if run_cfg else None
    if type_to_group is not None and kb is None:
        raise UsageError("--kb is required when the config defines linker.type_filter")
    per_mention = generate_candidates(ds, generators, args.k, kb=kb)
    stats = FilterStats()
    lists = [link_candidates(per_mention[m.id], args.k, m.entity_type, kb, type_to_group, stats)
             for _, m in ds.mentions() if per_mention[m.id]]
    dump_candidates(lists, args.out)
    params = {"k": args.k, "generators": names, "expand_abbreviations": args.expand_abbreviations}
    if type_to_group is not None:
        params["type_filter"] = {"type_to_group": type_to_group, "order": "after ensemble merge, before truncation",
                                 "removed": stats.removed, "unknown_type": stats.unknown_type}
    write_sidecar(args.out, RunManifest(
        "link", generators[0].kb_hash, run_cfg.digest if run_cfg else None, params=params,
        inputs={"dataset": describe_input(args.dataset), "index": [describe_input(p) for p in args.index]}).finish())


def cmd_filter(args) -> None:
    kb = load_kb(args.kb)
    _check_hash(kb.kb_hash, args.candidates, "candidates")
    cfg = load_config(args.config)
    type_to_group = cfg.type_filter()
    if type_to_group is None:
        raise ValueError(f"{args.config} has no linker.type_filter section")
    ds = load_dataset(args.dataset)
    cands = load_candidates(args.candidates)
    stats = FilterStats()
    out: list[CandidateList] = []
    for _, m in ds.mentions():
        if m.id in cands:
            out.append(filter_by_semantic_group(cands[m.id], m.entity_type, kb, type_to_group, stats))
    dump_candidates(out, args.out)
    write_sidecar(args.out, RunManifest(
        "filter", kb.kb_hash, cfg.digest,
        params={"type_to_group": type_to_group, "order": "applied to an already truncated dump",
                "removed": stats.removed, "unknown_type": stats.unknown_type},
        inputs={"candidates": describe_input(args.candidates), "dataset": describe_input(args.dataset)}).finish())


def cmd_train(args) -> None:
    kb = load_kb(args.kb)
    _check_hash(kb.kb_hash, args.candidates, "candidates")
    run_cfg = _maybe_config(args.config)
    overrides = dict(seed=args.seed, lam=args.lam, epochs=args.epochs, learning_rate=args.lr, k=args.k)
    if run_cfg is not None:
        cfg = run_cfg.reranker_config(**overrides)
    else:
        cfg = RerankerConfig(**{k: v for k, v in overrides.items() if v is not None})
    ds = load_dataset(args.dataset)
    cands = load_candidates(args.candidates)
    if args.train_split not in ds.splits:
        raise ValueError(f"dataset has no split {args.train_split!r}")
    train = collect_items(ds, cands, args.train_split)
    val = collect_items(ds, cands, args.val_split) if args.val_split in ds.splits else []
    params, report = train_reranker(train, val, kb, cfg)
    save_model(args.out, params, cfg, report)
    write_sidecar(args.out, RunManifest(
        "train-reranker", kb.kb_hash, run_cfg.digest if run_cfg else None,
        params={"train_report": report.to_json(), "train_split": args.train_split,
                "val_split": args.val_split if val else None},
        inputs={"candidates": describe_input(args.candidates), "dataset": describe_input(args.dataset)}).finish())


def cmd_rerank(args) -> None:
    kb = load_kb(args.kb)
    _check_hash(kb.kb_hash, args.candidates, "candidates")
    _check_hash(kb.kb_hash, args.model, "model")
    params, cfg = load_model(args.model)
    ds = load_dataset(args.dataset)
    cands = load_candidates(args.candidates)
    items = collect_items(ds, cands, args.split)
    ranked = rerank_items(params, items, kb, cfg)
    dump_candidates([ranked[it.mention.id] for it in items], args.out)
    write_sidecar(args.out, RunManifest(
        "rerank", kb.kb_hash, params={"split": args.split, "k": cfg.k},
        inputs={"model": describe_input(args.model), "candidates": describe_input(args.candidates)}).finish())


def _predictions(pred_path: str):
    if pred_path.endswith(".jsonl"):
        return load_candidates(pred_path)
    return load_dataset(pred_path)


def cmd_evaluate(args) -> None:
    try:
        ks = sorted({int(x) for x in args.k.split(",") if x.strip()})
    except ValueError:
        raise UsageError(f"--k expects comma-separated integers, got {args.k!r}") from None
    if not ks or min(ks) < 1:
        raise UsageError("--k values must be >= 1")
    gold = load_dataset(args.gold)
    if args.split is not None and args.split not in gold.splits:
        raise ValueError(f"gold dataset has no split {args.split!r}")
    pred = _predictions(args.pred)
    report = evaluate(gold, pred, ks, split=args.split)
    if args.kb:
        kb = load_kb(args.kb)
        _check_hash(kb.kb_hash, args.pred, "predictions")
        report = replace(report, breakdowns=error_breakdown(gold, pred, kb, args.split))
    print(report.to_text() if args.format == "text" else report_json(report))


def cmd_project(args) -> None:
    ds = load_dataset(args.dataset)
    if args.translator == "identity":
        def translate(s: str) -> str:
            return s
    else:
        translate = RemoteTranslator(args.endpoint)
    out, report = project_dataset(ds, translate, max_workers=args.workers, salvage=args.salvage)
    save_dataset(out, args.out)
    Path(args.report).write_text(json.dumps(report.to_json(), indent=2) + "\n", encoding="utf-8")
    write_sidecar(args.out, RunManifest(
        "project", params={"translator": args.translator, "salvage": args.salvage, "loss": report.to_json()},
        inputs={"dataset": describe_input(args.dataset)}).finish())


# -- parser ---------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="mednorm", description="Medical entity normalization pipeline.")
    p.add_argument("--version", action="version", version=f"mednorm {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("dict", help="build a knowledge base from a YAML config")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--alias-source", action="append", default=[], help="extra alias TSV (cid, alias, lang)")
    s.set_defaults(func=cmd_dict)

    s = sub.add_parser("index", help="build a candidate-generation index over a KB")
    s.add_argument("--kind", choices=("tfidf", "dense"), required=True)
    s.add_argument("--kb", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--ngram", type=int, default=3)
    s.add_argument("--provider", default="hash", help="hash | precomputed:<path> | remote:<identity>")
    s.add_argument("--dim", type=int, default=256)
    s.set_defaults(func=cmd_index)

    s = sub.add_parser("link", help="generate (and ensemble) candidates for every mention")
    s.add_argument("--index", action="append", required=True)
    s.add_argument("--dataset", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--k", type=int, default=DEFAULT_K)
    s.add_argument("--kb", help="check indices against this KB")
    s.add_argument("--config", help="apply linker.type_filter from this config before truncation")
    s.add_argument("--provider", help="override the dense provider recorded in the index")
    s.add_argument("--expand-abbreviations", action="store_true")
    s.set_defaults(func=cmd_link)

    s = sub.add_parser("filter", help="drop candidates whose semantic group contradicts the entity type "
                                      "(on an existing dump; link --config filters before truncation)")
    s.add_argument("--candidates", required=True)
    s.add_argument("--dataset", required=True)
    s.add_argument("--kb", required=True)
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_filter)

    s = sub.add_parser("train-reranker", help="train the candidate re-ranker")
    s.add_argument("--kb", required=True)
    s.add_argument("--dataset", required=True)
    s.add_argument("--candidates", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--config")
    s.add_argument("--seed", type=int)
    s.add_argument("--lambda", dest="lam", type=float)
    s.add_argument("--epochs", type=int)
    s.add_argument("--lr", type=float)
    s.add_argument("--k", type=int)
    s.add_argument("--train-split", default="train")
    s.add_argument("--val-split", default="validation")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("rerank", help="re-rank candidates with a trained model")
    s.add_argument("--model", required=True)
    s.add_argument("--kb", required=True)
    s.add_argument("--dataset", required=True)
    s.add_argument("--candidates", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--split")
    s.set_defaults(func=cmd_rerank)

    s = sub.add_parser("evaluate", help="strict span-level evaluation; JSON report on stdout")
    s.add_argument("--gold", required=True)
    s.add_argument("--pred", required=True, help="dataset JSON or candidates JSONL")
    s.add_argument("--k", default="1")
    s.add_argument("--split")
    s.add_argument("--kb", help="add error breakdowns computed against this KB")
    s.add_argument("--format", choices=("json", "text"), default="json")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("project", help="project entity spans through translation")
    s.add_argument("--dataset", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--report", required=True)
    s.add_argument("--translator", choices=("identity", "remote"), default="remote")
    s.add_argument("--endpoint")
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--salvage", action="store_true", help="retry failed documents one mention at a time")
    s.set_defaults(func=cmd_project)
    return p


def run(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as e:
        print(f"mednorm: error: usage: {_one_line(e)}", file=sys.stderr)
        return 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except UsageError as e:
        print(f"mednorm: error: usage: {_one_line(e)}", file=sys.stderr)
        return 2
    except KbMismatchError as e:
        print(f"mednorm: error: kb_mismatch: {_one_line(e)}", file=sys.stderr)
        return 1
    except (OSError, ValueError, KeyError, RuntimeError) as e:
        print(f"mednorm: error: {type(e).__name__}: {_one_line(e)}", file=sys.stderr)
        return 1
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
