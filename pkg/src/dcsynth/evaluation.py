"""Metrics, snapshot selection and zero-shot grid evaluation."""

from __future__ import annotations

import csv
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

from . import __version__
from .benchmarks import BenchmarkSpec, generate_benchmark
from .engine import run_dcs
from .lts import StateSpaceTooLarge
from .policies import GCRLPolicy, make_policy

log = logging.getLogger(__name__)

EVAL_COLUMNS = ["domain", "n", "k", "policy", "solved", "expansions", "millis", "seed"]
VALIDATION_INSTANCES = ((3, 3), (4, 4), (5, 5))
DEFAULT_BUDGET = 5000
SELECTION_BUDGET = 1000


def auc(log_rows) -> float:
    """Signed sum of episode returns, i.e. minus the total expansions.

    Accepts training-log rows (anything with ``expansions``) or plain counts.
    """
    rows = list(log_rows)
    if not rows:
        raise ValueError("empty training log")
    total = 0
    for r in rows:
        total += r if isinstance(r, (int, float)) else r.expansions
    return -float(total)


@dataclass(frozen=True)
class EvalRecord:
    domain: str
    n: int
    k: int
    policy: str
    solved: bool
    expansions: int
    millis: float
    seed: int

    def row(self) -> list:
        return [
            self.domain, self.n, self.k, self.policy, int(self.solved),
            self.expansions, f"{self.millis:.3f}", self.seed,
        ]


PolicySource = str | Callable[[], object]


def _make(source: PolicySource, model):
    if isinstance(source, str):
        return make_policy(source, model)
    return source()


def _policy_id(source: PolicySource) -> str:
    if isinstance(source, str):
        return source
    return getattr(source, "policy_id", None) or getattr(source(), "name", "custom")


def run_instance(
    source: PolicySource,
    domain: str,
    n: int,
    k: int,
    budget: int,
    seed: int,
    policy_id: str | None = None,
) -> EvalRecord:
    """One attempt; resource exhaustion counts as unsolved."""
    t0 = time.perf_counter()
    pid = policy_id or _policy_id(source)
    try:
        model = generate_benchmark(BenchmarkSpec(domain, n, k))
        policy = _make(source, model)
        verdict = run_dcs(model, policy, budget=budget, seed=seed, extract=False)
        solved, expansions = verdict.decided, verdict.expansions
    except (MemoryError, StateSpaceTooLarge) as exc:
        log.warning("%s(%d,%d) aborted: %s", domain, n, k, exc)
        solved, expansions = False, budget
    millis = (time.perf_counter() - t0) * 1000.0
    return EvalRecord(domain, n, k, pid, bool(solved), int(expansions), millis, seed)


def _grid_waves(max_n: int, max_k: int):
    for total in range(2, max_n + max_k + 1):
        wave = [(n, total - n) for n in range(1, max_n + 1) if 1 <= total - n <= max_k]
        if wave:
            yield wave


def eligible(n: int, k: int, solved: set[tuple[int, int]]) -> bool:
    """Neighbourhood rule: lower neighbours that exist must have been solved."""
    if n > 1 and (n - 1, k) not in solved:
        return False
    if k > 1 and (n, k - 1) not in solved:
        return False
    return True


@dataclass
class GridResult:
    records: list[EvalRecord]
    solved: int

    @property
    def attempted(self) -> int:
        return len(self.records)

    @property
    def total_expansions(self) -> int:
        return sum(r.expansions for r in self.records)


def eval_grid(
    source: PolicySource,
    domain: str,
    max_n: int,
    max_k: int,
    budget: int = DEFAULT_BUDGET,
    seed: int = 0,
    workers: int = 1,
    policy_id: str | None = None,
) -> GridResult:
    """Attempt the (n, k) grid in nondecreasing n+k order under the neighbourhood rule.

    With ``workers > 1`` the instances of one anti-diagonal run in parallel;
    this needs a picklable policy source (a spec string).
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    if max_n < 1 or max_k < 1:
        raise ValueError("grid bounds must be >= 1")
    pid = policy_id or _policy_id(source)
    solved: set[tuple[int, int]] = set()
    records: list[EvalRecord] = []
    pool = ProcessPoolExecutor(workers) if workers > 1 and isinstance(source, str) else None
    try:
        for wave in _grid_waves(max_n, max_k):
            todo = [(n, k) for n, k in wave if eligible(n, k, solved)]
            if not todo:
                break
            if pool is not None:
                futures = [
                    pool.submit(run_instance, source, domain, n, k, budget, seed, pid)
                    for n, k in todo
                ]
                got = [f.result() for f in futures]
            else:
                got = [run_instance(source, domain, n, k, budget, seed, pid) for n, k in todo]
            for rec in sorted(got, key=lambda r: (r.n, r.k)):
                records.append(rec)
                if rec.solved:
                    solved.add((rec.n, rec.k))
                log.info("%s(%d,%d) %s: solved=%s expansions=%d",
                         domain, rec.n, rec.k, pid, rec.solved, rec.expansions)
    finally:
        if pool is not None:
            pool.shutdown()
    return GridResult(records, len(solved))


# -- snapshot selection ------------------------------------------------------


def rank_snapshots(results: Sequence[tuple[int, int]]) -> int:
    """Index of the best ``(solved, total_expansions)`` entry.

    More solved wins, then fewer expansions, then the later snapshot.
    """
    if not results:
        raise ValueError("no snapshots to rank")
    best = 0
    for i, (solved, exp) in enumerate(results):
        b_solved, b_exp = results[best]
        if (solved, -exp) >= (b_solved, -b_exp):
            best = i
    return best


@dataclass
class SelectionResult:
    index: int
    snapshot: object
    scores: list[tuple[int, int]]
    records: list[list[EvalRecord]]


def select_snapshot(
    snapshots: Sequence,
    domain: str,
    instances: Iterable[tuple[int, int]] = VALIDATION_INSTANCES,
    budget: int = SELECTION_BUDGET,
    seed: int = 0,
    k: int = 2,
) -> SelectionResult:
    """Evaluate every snapshot on the validation instances and keep the best.

    ``snapshots`` holds weight-file paths or in-memory GNN models (the latter
    need an ``alphabet`` attribute on the sequence items as ``(model, alphabet)``).
    """
    if not snapshots:
        raise ValueError("at least one snapshot is required")
    instances = list(instances)
    scores, all_records = [], []
    for idx, snap in enumerate(snapshots):
        source = _snapshot_source(snap, k)
        recs = [
            run_instance(source, domain, n, kk, budget, seed, policy_id=f"snapshot{idx}")
            for n, kk in instances
        ]
        solved = sum(r.solved for r in recs)
        scores.append((solved, sum(r.expansions for r in recs)))
        all_records.append(recs)
        log.info("snapshot %d: solved %d, expansions %d", idx, *scores[-1])
    best = rank_snapshots(scores)
    return SelectionResult(best, snapshots[best], scores, all_records)


def _snapshot_source(snap, k: int) -> PolicySource:
    if isinstance(snap, (str, Path)):
        return f"gcrl:{snap}:{k}"
    model, alphabet = snap
    return lambda: GCRLPolicy(model, alphabet, k=k)


# -- output files ----------------------------------------------------------


def header_line(kind: str, seed: int, config_hash: str | None = None, **extra) -> str:
    parts = [f"dcsynth {__version__}", f"{kind} v1", f"seed={seed}"]
    if config_hash is not None:
        parts.append(f"config={config_hash}")
    parts += [f"{key}={value}" for key, value in extra.items()]
    return " ".join(parts)


def write_eval_csv(records: Sequence[EvalRecord], path, header: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# {header}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(EVAL_COLUMNS)
        for r in records:
            w.writerow(r.row())


def read_eval_csv(path) -> list[EvalRecord]:
    with open(path, encoding="utf-8") as fh:
        lines = [line for line in fh if not line.startswith("#")]
    reader = csv.DictReader(lines)
    if reader.fieldnames != EVAL_COLUMNS:
        raise ValueError(f"unexpected eval columns {reader.fieldnames}")
    return [
        EvalRecord(
            rec["domain"], int(rec["n"]), int(rec["k"]), rec["policy"],
            rec["solved"] == "1", int(rec["expansions"]), float(rec["millis"]), int(rec["seed"]),
        )
        for rec in reader
    ]


def write_summary(path, doc: dict) -> None:
    body = {"format": "dcsynth-summary", "version": 1, "tool_version": __version__, **doc}
    Path(path).write_text(json.dumps(body, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def grid_summary(result: GridResult, domain: str, policy: str, budget: int, seed: int) -> dict:
    return {
        "domain": domain,
        "policy": policy,
        "budget": budget,
        "seed": seed,
        "solved": result.solved,
        "attempted": result.attempted,
        "total_expansions": result.total_expansions,
        "records": [asdict(r) | {"millis": round(r.millis, 3)} for r in result.records],
    }
