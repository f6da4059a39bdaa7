"""Command line interface.

Subcommands: answer, benchmark, sample, build-cache, oracle-check.
Tuning options resolve as: built-in defaults, then a JSON --config file,
then explicit flags (flags win).  File paths are always given as flags.

Exit codes: 0 success, 1 failed check (oracle-check out of tolerance),
2 formula or usage errors, 3 data errors (missing or malformed inputs).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .engine import SearchConfig, answer_formula
from .evaluation import (
    evaluate,
    measure_qps,
    read_instances,
    sample_queries,
    write_instances,
)
from .indices import load_global_rankings
from .kg import KnowledgeGraph, load_triples
from .oracle import BudgetExceededError, brute_force_formula
from .parsing import (
    FormulaSyntaxError,
    FreeVariableError,
    UniversalQuantifierError,
    UnknownNameError,
    load_templates,
    parse_formula,
    read_template_catalog,
)
from .providers import (
    SCALING_MODES,
    CalibratedProvider,
    ExactProvider,
    build_cache,
    read_relation_tail_table,
    read_score_file,
)

__all__ = ["main"]

_PARSE_ERRORS = (
    FormulaSyntaxError,
    UnknownNameError,
    FreeVariableError,
    UniversalQuantifierError,
)


def _write_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def _load_graph(args: argparse.Namespace) -> KnowledgeGraph:
    """Load --graph; with --symbols, its triples define the id tables (so a
    subgraph keeps the ids of the graph it was split from)."""
    symbols = getattr(args, "symbols", None)
    if symbols:
        tables = load_triples(symbols)
        return load_triples(args.graph, symbol_mode="strict", symbols=tables)
    return load_triples(args.graph)


def _resolve(args: argparse.Namespace, defaults: dict) -> dict:
    """Layer config-file values over defaults, then flag values over both."""
    resolved = dict(defaults)
    config_path = getattr(args, "config", None)
    if config_path:
        with open(config_path, "r", encoding="utf-8") as fh:
            loaded = json.load(fh)
        if not isinstance(loaded, dict):
            raise ValueError("config file must hold a JSON object")
        unknown = sorted(set(loaded) - set(defaults))
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(unknown)}")
        resolved.update(loaded)
    for key in defaults:
        value = getattr(args, key, None)
        if value is not None:
            resolved[key] = value
    return resolved


def _search_config(opts: dict) -> SearchConfig:
    return SearchConfig(
        tnorm=opts["tnorm"],
        k_existential=opts["k_existential"],
        k_free=opts["k_free"],
        block_size=opts["block_size"],
        record_witnesses=bool(opts.get("witnesses", False)),
    )


def _build_provider(args: argparse.Namespace, opts: dict, graph: KnowledgeGraph):
    scores = getattr(args, "scores", None)
    if scores is None:
        return ExactProvider(graph, opts["epsilon"])
    store = read_score_file(scores, graph)
    table = None
    table_path = getattr(args, "relation_tail_table", None)
    if table_path:
        table = read_relation_tail_table(table_path, graph)
    cache = getattr(args, "cache", None)
    if cache:
        return CalibratedProvider.from_cache(
            store,
            graph,
            cache,
            scaling=opts["scaling"],
            missing_value=opts["missing_value"],
            relation_tail_table=table,
        )
    return build_cache(
        store,
        graph,
        scaling=opts["scaling"],
        missing_value=opts["missing_value"],
        relation_tail_table=table,
    )


def _add_provider_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--scores", help="score file for a calibrated provider")
    sub.add_argument("--cache", help="precomputed normalizer cache (.npz)")
    sub.add_argument("--relation-tail-table", dest="relation_tail_table",
                     help="per-relation tail membership table file")
    sub.add_argument("--scaling", choices=SCALING_MODES)
    sub.add_argument("--missing-value", dest="missing_value", type=float)
    sub.add_argument("--epsilon", type=float,
                     help="graph-lookup truth for unobserved triples (no --scores)")


def _add_search_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--tnorm", choices=("godel", "product", "lukasiewicz"))
    sub.add_argument("--k-existential", dest="k_existential", type=int)
    sub.add_argument("--k-free", dest="k_free", type=int)
    sub.add_argument("--block-size", dest="block_size", type=int)


_PROVIDER_DEFAULTS = {
    "scaling": "log_scale",
    "missing_value": 0.0,
    "epsilon": 0.0,
}
_SEARCH_DEFAULTS = {
    "tnorm": "product",
    "k_existential": None,
    "k_free": None,
    "block_size": 512,
}


# ------------------------------------------------------------------ answer


def _cmd_answer(args: argparse.Namespace) -> int:
    defaults = {**_PROVIDER_DEFAULTS, **_SEARCH_DEFAULTS, "top": 10, "witnesses": False}
    opts = _resolve(args, defaults)
    if (args.formula is None) == (args.formula_file is None):
        print("error: provide exactly one of --formula or --formula-file", file=sys.stderr)
        return 2
    text = args.formula
    if text is None:
        text = Path(args.formula_file).read_text(encoding="utf-8").strip()
    graph = _load_graph(args)
    provider = _build_provider(args, opts, graph)
    f = parse_formula(text, graph)
    ranking = answer_formula(f, provider, _search_config(opts))
    answers = []
    for entity, score in ranking.top(int(opts["top"])):
        row = {"id": entity, "entity": graph.entity_name(entity), "score": score}
        if opts["witnesses"] and ranking.witnesses is not None:
            row["witness"] = {
                name: graph.entity_name(val)
                for name, val in ranking.witness_for(entity).items()
            }
        answers.append(row)
    print(json.dumps({"formula": text, "answers": answers}, sort_keys=True, indent=2))
    return 0


# --------------------------------------------------------------- benchmark


def _cmd_benchmark(args: argparse.Namespace) -> int:
    defaults = {
        **_PROVIDER_DEFAULTS,
        **_SEARCH_DEFAULTS,
        "workers": 1,
        "repetitions": 3,
    }
    opts = _resolve(args, defaults)
    graph = _load_graph(args)
    provider = _build_provider(args, opts, graph)
    instances = read_instances(args.instances, graph)
    if not instances:
        raise ValueError(f"no instances in {args.instances}")
    scorers = None
    if args.global_rankings:
        scorers = load_global_rankings(args.global_rankings, graph.num_entities)
    config = _search_config(opts)
    report = evaluate(
        instances,
        provider,
        config,
        global_scorers=scorers,
        workers=int(opts["workers"]),
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    outputs = ["manifest.json", "metrics.json", "metrics.txt"]
    if args.measure_qps:
        outputs.append("qps.json")
    manifest = {
        "command": "benchmark",
        "config": {k: opts[k] for k in sorted(opts)},
        "inputs": {
            "graph": str(args.graph),
            "instances": str(args.instances),
            "scores": args.scores,
            "global_rankings": args.global_rankings,
        },
        "outputs": sorted(outputs),
    }
    _write_json(out / "manifest.json", manifest)
    (out / "metrics.json").write_text(report.to_json() + "\n", encoding="utf-8")
    (out / "metrics.txt").write_text(report.to_text_table() + "\n", encoding="utf-8")
    if args.measure_qps:
        qps = measure_qps(instances, provider, config, repetitions=int(opts["repetitions"]))
        _write_json(out / "qps.json", qps)
    print(report.to_text_table())
    return 0


# ------------------------------------------------------------------ sample


def _cmd_sample(args: argparse.Namespace) -> int:
    defaults = {"per_template": 10, "seed": 0, "max_attempts": None}
    opts = _resolve(args, defaults)
    g_full = load_triples(args.graph_full)
    g_observed = load_triples(
        args.graph_observed,
        symbol_mode="strict",
        symbols=g_full,
    )
    if args.templates in ("betae", "real_efo1", "all"):
        catalog = load_templates(args.templates)
    else:
        catalog = read_template_catalog(args.templates)
    instances = []
    for name in sorted(catalog.names()):
        instances.extend(
            sample_queries(
                catalog[name],
                g_observed,
                g_full,
                int(opts["per_template"]),
                seed=int(opts["seed"]),
                max_attempts=opts["max_attempts"],
            )
        )
    write_instances(args.out, instances, g_full)
    summary = {
        "instances": len(instances),
        "types": sorted(catalog.names()),
        "skipped": dict(catalog.rejected),
    }
    print(json.dumps(summary, sort_keys=True, indent=2))
    return 0


# -------------------------------------------------------------- build-cache


def _cmd_build_cache(args: argparse.Namespace) -> int:
    defaults = dict(_PROVIDER_DEFAULTS)
    opts = _resolve(args, defaults)
    graph = _load_graph(args)
    store = read_score_file(args.scores, graph)
    provider = build_cache(store, graph, scaling=opts["scaling"],
                           missing_value=opts["missing_value"])
    provider.save_cache(args.out)
    print(json.dumps({"cache": str(args.out),
                      "entities": graph.num_entities,
                      "relations": graph.num_relations}, sort_keys=True))
    return 0


# ------------------------------------------------------------- oracle-check


def _cmd_oracle_check(args: argparse.Namespace) -> int:
    defaults = {**_PROVIDER_DEFAULTS, **_SEARCH_DEFAULTS,
                "tol": 1e-9, "budget": 10_000_000.0}
    opts = _resolve(args, defaults)
    if (args.formula is None) == (args.formula_file is None):
        print("error: provide exactly one of --formula or --formula-file", file=sys.stderr)
        return 2
    text = args.formula
    if text is None:
        text = Path(args.formula_file).read_text(encoding="utf-8").strip()
    graph = _load_graph(args)
    provider = _build_provider(args, opts, graph)
    f = parse_formula(text, graph)
    config = _search_config({**opts, "k_existential": None, "k_free": None})
    ranking = answer_formula(f, provider, config)
    exact = brute_force_formula(f, provider, opts["tnorm"], budget=float(opts["budget"]))
    engine_scores = ranking.dense_scores()
    diff = float(np.max(np.abs(engine_scores - exact))) if exact.size else 0.0
    within = diff <= float(opts["tol"])
    print(json.dumps({"formula": text, "max_abs_diff": diff,
                      "tol": float(opts["tol"]), "within_tol": within},
                     sort_keys=True, indent=2))
    return 0 if within else 1


# ----------------------------------------------------------------- plumbing


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="symquery",
        description="Symbolic search over incomplete knowledge graphs.",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    answer = subs.add_parser("answer", help="answer one formula")
    answer.add_argument("--graph", required=True, help="triple TSV file")
    answer.add_argument("--symbols", help="triple TSV defining the id tables")
    answer.add_argument("--formula", help="formula text")
    answer.add_argument("--formula-file", dest="formula_file", help="file holding the formula")
    answer.add_argument("--top", type=int, help="answers to print (default 10)")
    answer.add_argument("--witnesses", action="store_true", default=None,
                        help="include witness assignments")
    answer.add_argument("--config", help="JSON file with option defaults")
    _add_provider_flags(answer)
    _add_search_flags(answer)
    answer.set_defaults(func=_cmd_answer)

    bench = subs.add_parser("benchmark", help="evaluate ranking metrics on instances")
    bench.add_argument("--graph", required=True, help="observed triple TSV file")
    bench.add_argument("--symbols", help="triple TSV defining the id tables "
                       "(use the full graph the instances were sampled from)")
    bench.add_argument("--instances", required=True, help="query instances (JSON lines)")
    bench.add_argument("--out", required=True, help="run directory for reports")
    bench.add_argument("--global-rankings", dest="global_rankings",
                       help="per-query candidate rankings (JSON lines)")
    bench.add_argument("--workers", type=int, help="parallel instances (default 1)")
    bench.add_argument("--measure-qps", dest="measure_qps", action="store_true",
                       help="also time throughput into qps.json")
    bench.add_argument("--repetitions", type=int, help="timing repetitions (default 3)")
    bench.add_argument("--config", help="JSON file with option defaults")
    _add_provider_flags(bench)
    _add_search_flags(bench)
    bench.set_defaults(func=_cmd_benchmark)

    sample = subs.add_parser("sample", help="sample query instances from a graph pair")
    sample.add_argument("--graph-full", dest="graph_full", required=True)
    sample.add_argument("--graph-observed", dest="graph_observed", required=True)
    sample.add_argument("--out", required=True, help="output instances file")
    sample.add_argument("--templates", default="all",
                        help="betae | real_efo1 | all | template TSV path")
    sample.add_argument("--per-template", dest="per_template", type=int)
    sample.add_argument("--seed", type=int)
    sample.add_argument("--max-attempts", dest="max_attempts", type=int)
    sample.add_argument("--config", help="JSON file with option defaults")
    sample.set_defaults(func=_cmd_sample)

    cache = subs.add_parser("build-cache", help="precompute calibration normalizers")
    cache.add_argument("--graph", required=True)
    cache.add_argument("--symbols", help="triple TSV defining the id tables")
    cache.add_argument("--scores", required=True, help="score file")
    cache.add_argument("--out", required=True, help="output .npz path")
    cache.add_argument("--scaling", choices=SCALING_MODES)
    cache.add_argument("--missing-value", dest="missing_value", type=float)
    cache.add_argument("--config", help="JSON file with option defaults")
    cache.set_defaults(func=_cmd_build_cache)

    check = subs.add_parser("oracle-check", help="compare the engine against brute force")
    check.add_argument("--graph", required=True)
    check.add_argument("--symbols", help="triple TSV defining the id tables")
    check.add_argument("--formula", help="formula text")
    check.add_argument("--formula-file", dest="formula_file")
    check.add_argument("--tol", type=float, help="max allowed difference (default 1e-9)")
    check.add_argument("--budget", type=float, help="assignment enumeration budget")
    check.add_argument("--config", help="JSON file with option defaults")
    _add_provider_flags(check)
    _add_search_flags(check)
    check.set_defaults(func=_cmd_oracle_check)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except _PARSE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except BudgetExceededError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (OSError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
