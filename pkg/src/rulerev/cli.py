"""Config-driven command line: genpool, explore, revise, evaluate, report.

A run directory has a fixed layout (pools/, traces/, kbs/, reports/) so the
report command can find every artifact without extra flags.  Every command
is reproducible from the config and seeds; no artifact embeds wall-clock
state.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

from .engine import NORMAL, ProblemDomain, SearchLimits, run
from .knowledge import (
    DEFAULT_WEIGHT_MAX,
    KnowledgeBase,
    KnowledgeError,
    empty_knowledge_base,
    parse_kb,
    serialize_kb,
)
from .learning import example_set_csv
from .revision import (
    PerfReport,
    ReplayStats,
    RevisionError,
    RevisionResult,
    SearchSchedule,
    perf,
    revise,
)
from .tracing import ProblemSample, TraceError, choose_problems, explore_sample, load_traces
from .domains import (
    MazeDomain,
    SyntheticDomain,
    generate_maze_pool,
    generate_synthetic_pool,
    load_maze_pool,
    load_synthetic_pool,
    maze_expert_kb,
    save_maze_pool,
    save_synthetic_pool,
)


class CliError(Exception):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    domain: str = "maze"
    out_dir: str = "runs/out"
    pool_seed: int = 7
    pool_count: int = 170
    maze_size: int = 7
    branching: int = 3
    tree_depth: int = 5
    train_size: int = 50
    test_size: int = 100
    split_seed: int = 11
    limits: SearchLimits = field(default_factory=SearchLimits)
    schedule: SearchSchedule = field(default_factory=SearchSchedule)
    initial_kb: str = "expert"
    weight_max: int = DEFAULT_WEIGHT_MAX


_POOL_KEYS = {"seed", "count", "size", "branching", "depth"}
_SPLIT_KEYS = {"train", "test", "seed"}
_TOP_KEYS = {"domain", "out", "pool", "split", "limits", "schedule", "initial_kb", "weight_max"}


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise CliError(f"no config file at {path}")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise CliError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise CliError(f"{path}: config must be a JSON object")
    unknown = set(doc) - _TOP_KEYS
    if unknown:
        raise CliError(f"{path}: unknown config keys {sorted(unknown)}")

    def section(name: str, allowed: set[str]) -> dict[str, Any]:
        sec = doc.get(name, {})
        if not isinstance(sec, dict):
            raise CliError(f"{path}: '{name}' must be an object")
        bad = set(sec) - allowed
        if bad:
            raise CliError(f"{path}: unknown keys {sorted(bad)} in '{name}'")
        return sec

    pool = section("pool", _POOL_KEYS)
    split = section("split", _SPLIT_KEYS)
    limits = section("limits", {"max_states", "max_depth"})
    schedule = section("schedule", {f.name for f in SearchSchedule.__dataclass_fields__.values()})
    cfg = ExperimentConfig(
        domain=doc.get("domain", "maze"),
        out_dir=doc.get("out", "runs/out"),
        pool_seed=pool.get("seed", 7),
        pool_count=pool.get("count", 170),
        maze_size=pool.get("size", 7),
        branching=pool.get("branching", 3),
        tree_depth=pool.get("depth", 5),
        train_size=split.get("train", 50),
        test_size=split.get("test", 100),
        split_seed=split.get("seed", 11),
        limits=SearchLimits(limits.get("max_states", 200_000), limits.get("max_depth", 512)),
        schedule=SearchSchedule(**schedule),
        initial_kb=doc.get("initial_kb", "expert"),
        weight_max=doc.get("weight_max", DEFAULT_WEIGHT_MAX),
    )
    if cfg.domain not in ("maze", "synthetic"):
        raise CliError(f"{path}: unknown domain {cfg.domain!r}")
    if cfg.train_size < 1 or cfg.test_size < 1:
        raise CliError(f"{path}: split sizes must be >= 1")
    return cfg


def _domain_for(cfg: ExperimentConfig) -> ProblemDomain:
    if cfg.domain == "maze":
        return MazeDomain()
    return SyntheticDomain(cfg.branching)


def _paths(cfg: ExperimentConfig) -> dict[str, Path]:
    out = Path(cfg.out_dir)
    return {
        "out": out,
        "pools": out / "pools",
        "traces": out / "traces",
        "kbs": out / "kbs",
        "reports": out / "reports",
    }


def _write_json(path: Path, doc: Any) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


def _report_doc(report: PerfReport) -> dict[str, Any]:
    return {
        "mean_satisfaction": report.mean_satisfaction,
        "mean_states": report.mean_states,
        "perf": report.perf,
        "per_problem": [[pid, sat, states] for pid, sat, states in report.per_problem],
    }


def cmd_genpool(cfg: ExperimentConfig) -> int:
    if cfg.pool_count < cfg.train_size + cfg.test_size:
        raise CliError(
            f"pool count {cfg.pool_count} cannot cover train {cfg.train_size} + test {cfg.test_size}"
        )
    paths = _paths(cfg)
    paths["pools"].mkdir(parents=True, exist_ok=True)
    pool_path = paths["pools"] / "pool.jsonl"
    if cfg.domain == "maze":
        pool = generate_maze_pool(cfg.pool_seed, cfg.pool_count, cfg.maze_size)
        save_maze_pool(pool, pool_path)
    else:
        pool = generate_synthetic_pool(cfg.pool_seed, cfg.pool_count, cfg.branching, cfg.tree_depth)
        save_synthetic_pool(pool, pool_path)
    train = choose_problems(pool, cfg.train_size, cfg.split_seed)
    train_ids = set(train.ids())
    rest = ProblemSample(
        seed=cfg.split_seed,
        problems=tuple(p for p in pool.problems if p[0] not in train_ids),
    )
    test = choose_problems(rest, cfg.test_size, cfg.split_seed + 1)
    _write_json(
        paths["pools"] / "split.json",
        {"version": 1, "train": list(train.ids()), "test": list(test.ids())},
    )
    print(f"wrote {cfg.pool_count} problems to {pool_path} "
          f"(train {cfg.train_size}, test {cfg.test_size})")
    return 0


def _load_pool(cfg: ExperimentConfig) -> ProblemSample:
    pool_path = _paths(cfg)["pools"] / "pool.jsonl"
    if cfg.domain == "maze":
        return load_maze_pool(pool_path)
    return load_synthetic_pool(pool_path)


def _load_split(cfg: ExperimentConfig, name: str) -> list[str]:
    split_path = _paths(cfg)["pools"] / "split.json"
    if not split_path.is_file():
        raise CliError(f"no split file at {split_path}; run genpool first")
    doc = json.loads(split_path.read_text(encoding="utf-8"))
    if name not in doc:
        raise CliError(f"{split_path}: no '{name}' split")
    return list(doc[name])


def _problems_for(cfg: ExperimentConfig, split: str) -> ProblemSample:
    pool = _load_pool(cfg)
    ids = _load_split(cfg, split)
    by_id = dict(pool.problems)
    missing = [i for i in ids if i not in by_id]
    if missing:
        raise CliError(f"split references problems missing from the pool: {missing}")
    return ProblemSample(seed=cfg.split_seed, problems=tuple((i, by_id[i]) for i in ids))


def cmd_explore(cfg: ExperimentConfig) -> int:
    domain = _domain_for(cfg)
    sample = _problems_for(cfg, "train")
    paths = _paths(cfg)
    traces, failures = explore_sample(domain, sample, cfg.limits, out_dir=paths["traces"])
    if not traces:
        raise CliError("exploration produced no traces")
    manifest = {
        "version": 1,
        "domain": domain.domain_id,
        "max_states": cfg.limits.max_states,
        "max_depth": cfg.limits.max_depth,
        "problems": [t.problem_id for t in traces],
        "incomplete": [t.problem_id for t in traces if not t.complete],
        "failed": [{"problem": pid, "error": err} for pid, err in failures],
    }
    _write_json(paths["traces"] / "manifest.json", manifest)
    for pid, err in failures:
        print(f"warning: problem {pid} failed: {err}", file=sys.stderr)
    print(f"explored {len(traces)} problems into {paths['traces']}")
    return 0


def _resolve_kb(cfg: ExperimentConfig, domain: ProblemDomain, name: str) -> tuple[str, KnowledgeBase]:
    if name == "noaction":
        return "noaction", empty_knowledge_base(domain, cfg.weight_max)
    if name == "expert":
        if cfg.domain != "maze":
            raise CliError("the builtin 'expert' knowledge base exists only for the maze domain")
        return "expert", maze_expert_kb(cfg.weight_max)
    path = Path(name)
    if not path.is_file():
        raise CliError(f"no knowledge base file at {path}")
    try:
        kb = parse_kb(
            path.read_text(encoding="utf-8"),
            domain.measure_sets,
            actions=[s.action_id for s in domain.actions],
        )
    except KnowledgeError as exc:
        raise CliError(f"{path}: {exc}") from exc
    label = path.name
    for suffix in (".json", ".kb"):
        label = label.removesuffix(suffix)
    return label, kb


def cmd_revise(cfg: ExperimentConfig, kb_name: str | None) -> int:
    domain = _domain_for(cfg)
    paths = _paths(cfg)
    traces = load_traces(paths["traces"])
    if not traces:
        raise CliError(f"no traces in {paths['traces']}; run explore first")
    label, kb = _resolve_kb(cfg, domain, kb_name or cfg.initial_kb)
    result = revise(domain, kb, traces, cfg.schedule)
    _write_revision_artifacts(cfg, label, result)
    print(
        f"revised {label}: training perf {result.initial_report.perf:.4f} -> "
        f"{result.revised_report.perf:.4f}"
    )
    return 0


def _write_revision_artifacts(cfg: ExperimentConfig, label: str, result: RevisionResult) -> None:
    paths = _paths(cfg)
    paths["kbs"].mkdir(parents=True, exist_ok=True)
    kb_path = paths["kbs"] / f"{label}-revised.kb.json"
    kb_path.write_text(serialize_kb(result.revised_kb), encoding="utf-8")

    space = result.space
    areas_doc = {}
    for action_id, index in space.indexes.items():
        off = space.offset(action_id)
        areas_doc[action_id] = [
            {
                "conditions": [str(c) for c in area.conditions],
                "parent_rule": area.parent_rule,
                "initial_weight": result.initial_solution.weights[off + ai],
                "revised_weight": result.best_solution.weights[off + ai],
            }
            for ai, area in enumerate(index.areas)
        ]
    diffs = {
        action_id: {
            "before": [str(r) for r in result.initial_kb.rule_bases[action_id].rules],
            "after": [str(r) for r in result.revised_kb.rule_bases[action_id].rules],
        }
        for action_id in space.indexes
    }
    report = {
        "version": 1,
        "initial_kb": label,
        "before": _report_doc(result.initial_report),
        "after": _report_doc(result.revised_report),
        "cuts": result.cuts,
        "areas": areas_doc,
        "rule_diffs": diffs,
        "example_counts": {a: len(es.examples) for a, es in result.example_sets.items()},
        "iterations": len(result.log),
    }
    _write_json(paths["reports"] / f"revision-{label}.json", report)

    csv_path = paths["reports"] / f"objective-{label}.csv"
    with csv_path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["iteration", "action", "area", "delta", "objective", "best_objective", "tenure", "repeated", "restarted"])
        for e in result.log:
            writer.writerow(
                [e.iteration, e.action_id, e.area_index, e.delta, repr(e.objective), repr(e.best_objective), repr(e.tenure), int(e.repeated), int(e.restarted)]
            )

    examples_dir = paths["reports"] / f"examples-{label}"
    examples_dir.mkdir(parents=True, exist_ok=True)
    for action_id, es in result.example_sets.items():
        (examples_dir / f"{action_id}.csv").write_text(example_set_csv(es), encoding="utf-8")


def cmd_evaluate(cfg: ExperimentConfig, kb_name: str | None, split: str) -> int:
    domain = _domain_for(cfg)
    sample = _problems_for(cfg, split)
    label, kb = _resolve_kb(cfg, domain, kb_name or cfg.initial_kb)
    stats = []
    for _, problem in sample.problems:
        outcome = run(domain, domain.start(problem), kb, cfg.limits, NORMAL)
        stats.append(ReplayStats(outcome.best_satisfaction, outcome.states_evaluated))
    report = perf(stats, list(sample.ids()))
    paths = _paths(cfg)
    doc = {"version": 1, "kb": label, "split": split, **_report_doc(report)}
    _write_json(paths["reports"] / f"eval-{label}-{split}.json", doc)
    print(
        f"{label} on {split}: mean_sat {report.mean_satisfaction:.3f} "
        f"mean_states {report.mean_states:.3f} perf {report.perf:.4f}"
    )
    return 0


def cmd_report(run_dir: str | Path) -> int:
    reports = Path(run_dir) / "reports"
    if not reports.is_dir():
        raise CliError(f"no reports directory at {reports}")
    rows = []
    for path in sorted(reports.glob("eval-*.json")):
        doc = json.loads(path.read_text(encoding="utf-8"))
        rows.append(
            (doc["kb"], doc["split"], doc["mean_satisfaction"], doc["mean_states"], doc["perf"])
        )
    if not rows:
        raise CliError(f"no evaluation reports in {reports}; run evaluate first")
    rows.sort(key=lambda r: (r[0], r[1]))
    header = ("kb", "split", "mean_sat", "mean_states", "perf")
    widths = [max(len(header[i]), *(len(f"{r[i]:.4f}" if i >= 2 else str(r[i])) for r in rows)) for i in range(5)]
    line = "  ".join(h.ljust(widths[i]) for i, h in enumerate(header))
    print(line)
    print("-" * len(line))
    for r in rows:
        cells = [str(r[0]).ljust(widths[0]), str(r[1]).ljust(widths[1])]
        cells += [f"{r[i]:.4f}".rjust(widths[i]) for i in (2, 3, 4)]
        print("  ".join(cells))
    summary = reports / "summary.csv"
    with summary.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["kb", "split", "mean_sat", "mean_states", "perf"])
        for r in rows:
            writer.writerow([r[0], r[1], repr(r[2]), repr(r[3]), repr(r[4])])
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rulerev",
        description="Informed tree search with revisable production-rule weights.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, config_required: bool = True) -> None:
        p.add_argument("--config", required=config_required, help="experiment config (JSON)")
        p.add_argument("--out", help="override the output directory")
        p.add_argument("--seed", type=int, help="override the pool seed")

    common(sub.add_parser("genpool", help="generate the problem pool and train/test split"))
    common(sub.add_parser("explore", help="run minimal-pruning exploration over the train split"))
    p = sub.add_parser("revise", help="revise a knowledge base from the logged traces")
    common(p)
    p.add_argument("--kb", help="initial knowledge base: builtin name or file path")
    p = sub.add_parser("evaluate", help="evaluate a knowledge base with live runs")
    common(p)
    p.add_argument("--kb", help="knowledge base: builtin name or file path")
    p.add_argument("--split", choices=("train", "test"), default="test")
    p = sub.add_parser("report", help="tabulate evaluation reports in a run directory")
    p.add_argument("--config", help="experiment config (JSON)")
    p.add_argument("--out", help="run directory (defaults to the config's)")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "report":
            if args.out:
                run_dir = args.out
            elif args.config:
                run_dir = load_config(args.config).out_dir
            else:
                raise CliError("report needs --out or --config")
            return cmd_report(run_dir)
        cfg = load_config(args.config)
        if args.out:
            cfg = replace(cfg, out_dir=args.out)
        if args.seed is not None:
            cfg = replace(cfg, pool_seed=args.seed)
        if args.command == "genpool":
            return cmd_genpool(cfg)
        if args.command == "explore":
            return cmd_explore(cfg)
        if args.command == "revise":
            return cmd_revise(cfg, args.kb)
        if args.command == "evaluate":
            return cmd_evaluate(cfg, args.kb, args.split)
        raise CliError(f"unknown command {args.command!r}")
    except (CliError, FileNotFoundError, ValueError, KnowledgeError, TraceError, RevisionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # unexpected: still a nonzero exit
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
