"""Command-line entry point: ``dcsynth <command> [flags]``.

Exit codes: 0 on success (an unsolved or unrealizable instance is still a
successful run), 1 on a failure inside the tool, 2 on usage errors such as
bad flags, missing files or incompatible weights.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import shutil
import sys
from pathlib import Path

from . import __version__
from .benchmarks import DOMAINS, BenchmarkSpec, generate_benchmark
from .engine import ContractViolation, DirectorError, run_dcs
from .evaluation import (
    DEFAULT_BUDGET,
    SELECTION_BUDGET,
    VALIDATION_INSTANCES,
    auc,
    eval_grid,
    grid_summary,
    header_line,
    select_snapshot,
    write_eval_csv,
    write_summary,
)
from .lts import ModelError
from .modelio import load_model, serialize_model
from .neural import WeightsError
from .oracle import monolithic_oracle
from .policies import PolicyError, make_policy
from .training import FAMILIES, TrainConfig, TrainingError, train

LOG_ENV = "DCSYNTH_LOG"
VERDICT_FORMAT = "dcsynth-verdict"

log = logging.getLogger("dcsynth")


class UsageError(Exception):
    pass


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _nonnegative(text: str) -> int:
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {text}")
    return value


def _emit(text: str, path: str | None) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def _verdict_doc(verdict, budget: int | None) -> dict:
    doc = verdict.to_json()
    doc.update(format=VERDICT_FORMAT, version=1, tool_version=__version__, budget=budget)
    doc["director_size"] = len(verdict.director) if verdict.director is not None else None
    return doc


def _load_model(args):
    if getattr(args, "model", None):
        path = Path(args.model)
        if not path.is_file():
            raise UsageError(f"model file not found: {path}")
        return load_model(path), path.stem
    if getattr(args, "domain", None):
        spec = BenchmarkSpec(args.domain, args.n, args.k)
        return generate_benchmark(spec), spec.instance
    raise UsageError("give --model or --domain/--n/--k")


# -- commands ----------------------------------------------------------------


def cmd_generate(args) -> int:
    model = generate_benchmark(BenchmarkSpec(args.domain, args.n, args.k))
    _emit(serialize_model(model), args.out)
    return 0


def cmd_synth(args) -> int:
    model, instance = _load_model(args)
    policy = make_policy(args.policy, model)
    verdict = run_dcs(model, policy, budget=args.budget, seed=args.seed, instance=instance)
    text = json.dumps(_verdict_doc(verdict, args.budget), sort_keys=True) + "\n"
    _emit(text, args.json_out)
    if args.json_out and args.json_out != "-":
        sys.stdout.write(text)
    return 0


def cmd_oracle(args) -> int:
    model, instance = _load_model(args)
    verdict = monolithic_oracle(model, max_states=args.max_states)
    verdict.instance = instance
    text = json.dumps(_verdict_doc(verdict, None), sort_keys=True) + "\n"
    _emit(text, args.json_out)
    return 0


def _train_config(args) -> TrainConfig:
    doc = {}
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise UsageError(f"config file not found: {path}")
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise UsageError(f"config {path} is not valid JSON: {exc}") from exc
        if not isinstance(doc, dict):
            raise UsageError("config must be a JSON object")
    for key in ("episodes", "seed", "repeats"):
        value = getattr(args, key)
        if value is not None:
            doc[key] = value
    try:
        return TrainConfig.from_json(doc)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid training config: {exc}") from exc


def cmd_train(args) -> int:
    config = _train_config(args)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(json.dumps(config.to_json(), indent=2, sort_keys=True) + "\n")
    runs = []
    for r in range(config.repeats):
        cfg = TrainConfig.from_json({**config.to_json(), "seed": config.seed + r})
        result = train(args.domain, cfg, args.family, out_dir=out / f"run_{r}")
        runs.append(
            {
                "run": r,
                "seed": cfg.seed,
                "auc": auc(result.log),
                "episodes": len(result.log),
                "snapshots": str(out / f"run_{r}" / "snapshots"),
                "epsilon_decay_steps": result.epsilon_steps,
            }
        )
        print(f"run {r} seed {cfg.seed}: auc {runs[-1]['auc']:.1f}")
    write_summary(
        out / "summary.json",
        {
            "kind": "train",
            "domain": args.domain,
            "family": args.family,
            "seed": config.seed,
            "config_hash": config.digest(),
            "runs": runs,
        },
    )
    return 0


def _snapshot_files(items: list[str]) -> list[Path]:
    files: list[Path] = []
    for item in items:
        p = Path(item)
        if p.is_dir():
            files.extend(sorted(p.glob("*.json")))
        elif p.is_file():
            files.append(p)
        else:
            raise UsageError(f"snapshot path not found: {p}")
    if not files:
        raise UsageError("no snapshot files found")
    return files


def cmd_select(args) -> int:
    files = _snapshot_files(args.snapshots)
    for f in files:
        make_policy(f"gcrl:{f}:{args.k}")  # fail early on unreadable or foreign weights
    result = select_snapshot(
        [str(f) for f in files], args.domain, VALIDATION_INSTANCES, args.budget, args.seed, args.k
    )
    chosen = files[result.index]
    doc = {
        "kind": "select",
        "domain": args.domain,
        "budget": args.budget,
        "seed": args.seed,
        "k": args.k,
        "instances": [list(i) for i in VALIDATION_INSTANCES],
        "chosen": str(chosen),
        "index": result.index,
        "scores": [
            {"snapshot": str(f), "solved": s, "expansions": e}
            for f, (s, e) in zip(files, result.scores)
        ],
    }
    if args.out:
        shutil.copyfile(chosen, args.out)
    if args.summary_json:
        write_summary(args.summary_json, doc)
    print(json.dumps({"chosen": str(chosen), "index": result.index, "scores": result.scores}))
    return 0


def cmd_eval_grid(args) -> int:
    make_policy(args.policy, generate_benchmark(BenchmarkSpec(args.domain, 1, 1)))
    result = eval_grid(
        args.policy, args.domain, args.max_n, args.max_k, args.budget, args.seed, args.workers
    )
    header = header_line(
        "eval-grid", args.seed, domain=args.domain, policy=args.policy, budget=args.budget,
        grid=f"{args.max_n}x{args.max_k}",
    )
    if args.out_csv:
        write_eval_csv(result.records, args.out_csv, header)
    if args.summary_json:
        write_summary(
            args.summary_json,
            {"kind": "eval-grid", **grid_summary(result, args.domain, args.policy, args.budget, args.seed)},
        )
    print(json.dumps({"solved": result.solved, "attempted": result.attempted}))
    return 0


# -- parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dcsynth", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"dcsynth {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def instance_flags(p, required: bool):
        p.add_argument("--domain", choices=DOMAINS, required=required)
        p.add_argument("--n", type=_positive, default=2 if not required else None, required=required)
        p.add_argument("--k", type=_positive, default=2 if not required else None, required=required)

    p = sub.add_parser("generate", help="write a benchmark model file")
    instance_flags(p, True)
    p.add_argument("--out", help="output path (stdout if omitted)")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("synth", help="run directed synthesis with one policy")
    p.add_argument("--model", help="model file")
    instance_flags(p, False)
    p.add_argument("--policy", default="ra", help="random|bfs|dfs|ra|rl:<w>|gcrl:<w>[:k]")
    p.add_argument("--budget", type=_positive, default=DEFAULT_BUDGET)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--json-out", help="verdict JSON path")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("oracle", help="solve the explicit product monolithically")
    p.add_argument("--model", help="model file")
    instance_flags(p, False)
    p.add_argument("--max-states", type=_positive, default=200_000)
    p.add_argument("--json-out", help="verdict JSON path")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("train", help="train a learned policy on the (2,2) instance")
    p.add_argument("--domain", choices=DOMAINS, required=True)
    p.add_argument("--config", help="JSON file with training-config overrides")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--family", choices=FAMILIES, default="gcrl")
    p.add_argument("--episodes", type=_positive)
    p.add_argument("--repeats", type=_positive)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("select", help="pick the best GCRL snapshot on validation instances")
    p.add_argument("--snapshots", nargs="+", required=True, help="weight files or directories")
    p.add_argument("--domain", choices=DOMAINS, required=True)
    p.add_argument("--budget", type=_positive, default=SELECTION_BUDGET)
    p.add_argument("--k", type=_nonnegative, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="copy the chosen weights here")
    p.add_argument("--summary-json")
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("eval-grid", help="zero-shot evaluation over the (n,k) grid")
    p.add_argument("--policy", required=True)
    p.add_argument("--domain", choices=DOMAINS, required=True)
    p.add_argument("--max-n", type=_positive, default=15)
    p.add_argument("--max-k", type=_positive, default=15)
    p.add_argument("--budget", type=_positive, default=DEFAULT_BUDGET)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=_positive, default=1)
    p.add_argument("--out-csv")
    p.add_argument("--summary-json")
    p.set_defaults(func=cmd_eval_grid)
    return parser


def _configure_logging() -> None:
    level = os.environ.get(LOG_ENV, "WARNING").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.WARNING),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


def main(argv: list[str] | None = None) -> int:
    _configure_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, PolicyError, WeightsError, ModelError, FileNotFoundError) as exc:
        print(f"dcsynth: error: {exc}", file=sys.stderr)
        return 2
    except (ContractViolation, DirectorError, TrainingError, RuntimeError) as exc:
        print(f"dcsynth: failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
