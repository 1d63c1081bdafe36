"""DQN training of exploration policies on a fixed small instance.

Each expansion is one environment step with reward -1; an episode ends when
the initial state is decided. Transitions go to a replay buffer, one
minibatch update follows every step once the buffer holds a batch, and the
bootstrap target comes from a periodically synced copy of the network.
Weights are saved after every episode.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import time
from collections import deque
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import __version__
from .benchmarks import BenchmarkSpec, generate_benchmark
from .engine import ExplorationState, run_dcs
from .features import Featurizer, NODE_DIM, edge_dim, normalized_alphabet, phi_dim
from .graph import GraphBuilder, GraphEncoding, khop_subgraph, frontier_seeds
from .neural import (
    Adam,
    BaselineQNet,
    GnnModel,
    baseline_backward,
    baseline_forward,
    clip_grad_norm,
    gnn_backward,
    gnn_forward,
    init_baseline,
    init_gnn,
    save_weights,
)
from .policies import RandomPolicy, qvalues_from_encoding

log = logging.getLogger(__name__)

TRAIN_LOG_COLUMNS = ["episode", "expansions", "return", "epsilon", "loss_mean"]
FAMILIES = ("gcrl", "rl")


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    episodes: int = 100
    epsilon_start: float = 1.0
    epsilon_end: float = 0.01
    epsilon_decay_steps: int | None = None
    gamma: float = 1.0
    replay_capacity: int = 10_000
    batch_size: int = 32
    target_sync: int = 200
    lr: float = 1e-3
    grad_clip: float = 10.0
    hops: int = 2
    seed: int = 0
    repeats: int = 5
    hidden: int = 32
    mlp_hidden: int = 64
    aggregation: str = "normalized"
    train_n: int = 2
    train_k: int = 2
    episode_budget: int = 5000
    pilot_runs: int = 5

    def __post_init__(self):
        positive = {
            "episodes": self.episodes,
            "replay_capacity": self.replay_capacity,
            "batch_size": self.batch_size,
            "target_sync": self.target_sync,
            "lr": self.lr,
            "grad_clip": self.grad_clip,
            "repeats": self.repeats,
            "hidden": self.hidden,
            "mlp_hidden": self.mlp_hidden,
            "train_n": self.train_n,
            "train_k": self.train_k,
            "episode_budget": self.episode_budget,
        }
        for name, value in positive.items():
            if not value > 0:
                raise ValueError(f"{name} must be positive, got {value}")
        if not 0 <= self.epsilon_end <= self.epsilon_start <= 1:
            raise ValueError("need 0 <= epsilon_end <= epsilon_start <= 1")
        if not 0 < self.gamma <= 1:
            raise ValueError("gamma must lie in (0, 1]")
        if self.hops < 0:
            raise ValueError("hops must be >= 0")
        if self.epsilon_decay_steps is not None and self.epsilon_decay_steps < 1:
            raise ValueError("epsilon_decay_steps must be >= 1")

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, doc: dict) -> "TrainConfig":
        unknown = set(doc) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**doc)

    def digest(self) -> str:
        blob = json.dumps(self.to_json(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:12]


@dataclass
class LinearEpsilon:
    start: float
    end: float
    steps: int

    def __call__(self, step: int) -> float:
        if step >= self.steps:
            return self.end
        return self.start + (self.end - self.start) * step / self.steps


def expected_episode_length(model, runs: int, seed: int, budget: int) -> float:
    """Mean expansions of the uniform random policy on ``model``."""
    lengths = [
        run_dcs(model, RandomPolicy(), budget=budget, seed=seed + 10_000 + r, extract=False).expansions
        for r in range(runs)
    ]
    return float(np.mean(lengths))


# -- replay --------------------------------------------------------------


@dataclass
class GraphSnapshot:
    """Compact decision snapshot for the GNN policy (features are binary except node ratios)."""

    edges: np.ndarray
    edge_feats: np.ndarray
    node_feats: np.ndarray
    frontier: np.ndarray

    @classmethod
    def of(cls, g: GraphEncoding) -> "GraphSnapshot":
        return cls(
            edges=g.edges.astype(np.int32),
            edge_feats=g.edge_feats.astype(np.uint8),
            node_feats=g.node_feats.copy(),
            frontier=g.frontier.astype(np.int32),
        )

    def encoding(self) -> GraphEncoding:
        n = len(self.node_feats)
        return GraphEncoding(
            edges=self.edges.astype(np.int64),
            edge_feats=self.edge_feats.astype(np.float64),
            node_feats=self.node_feats,
            frontier=self.frontier.astype(np.int64),
            frontier_tids=np.arange(len(self.frontier), dtype=np.int64),
            node_ids=np.arange(n, dtype=np.int64),
        )

    @property
    def num_actions(self) -> int:
        return len(self.frontier)


@dataclass
class ReplayItem:
    state: object
    action: int
    reward: float
    next_state: object | None  # None marks a terminal transition


class ReplayBuffer:
    """Fixed capacity, oldest-first eviction."""

    def __init__(self, capacity: int):
        self.capacity = capacity
        self.items: deque[ReplayItem] = deque(maxlen=capacity)

    def __len__(self) -> int:
        return len(self.items)

    def add(self, item: ReplayItem) -> None:
        self.items.append(item)

    def sample(self, rng: np.random.Generator, size: int) -> list[ReplayItem]:
        idx = rng.choice(len(self.items), size=size, replace=False)
        return [self.items[i] for i in idx]


# -- learners ------------------------------------------------------------


def _pruned(snapshot: GraphSnapshot, hops: int) -> GraphEncoding:
    g = snapshot.encoding()
    if len(g.frontier) == 0:
        return g
    sub, _ = khop_subgraph(g, frontier_seeds(g), hops)
    return sub


class _GraphBatch:
    """Several graphs stacked block-diagonally, with selected edge pairs."""

    def __init__(self, graphs: list[GraphEncoding], selections: list[np.ndarray]):
        xs, edges, feats, pairs, seg = [], [], [], [], []
        offset = 0
        for i, (g, sel) in enumerate(zip(graphs, selections)):
            xs.append(g.node_feats)
            edges.append(g.edges + offset)
            pos = g.frontier[sel]
            feats.append(g.edge_feats[pos])
            pairs.append(g.edges[pos] + offset)
            seg.append(np.full(len(pos), i))
            offset += g.num_nodes
        self.X = np.concatenate(xs)
        self.edges = np.concatenate(edges)
        self.feats = np.concatenate(feats)
        self.pairs = np.concatenate(pairs)
        self.segments = np.concatenate(seg)


class GnnLearner:
    family = "gcrl"

    def __init__(self, alphabet, config: TrainConfig, rng: np.random.Generator):
        self.alphabet = tuple(alphabet)
        self.config = config
        self.online = init_gnn(
            NODE_DIM,
            edge_dim(len(self.alphabet)),
            config.hidden,
            config.mlp_hidden,
            rng=rng,
            aggregation=config.aggregation,
        )
        self.target = self.online.copy()
        self.on_target_eval: Callable[[object], None] | None = None
        self._es = None
        self._builder = None

    def observe(self, es: ExplorationState):
        if self._es is not es:
            self._es = es
            self._builder = GraphBuilder(es, self.alphabet)
        return self._builder.encode()

    def greedy(self, g: GraphEncoding) -> int:
        return int(np.argmax(qvalues_from_encoding(self.online, g, self.config.hops)))

    def snapshot(self, g: GraphEncoding) -> GraphSnapshot:
        return GraphSnapshot.of(g)

    def learn(self, batch: list[ReplayItem]) -> tuple[float, dict]:
        hops, gamma = self.config.hops, self.config.gamma
        # bootstrap targets from the frozen network
        y = np.array([it.reward for it in batch], dtype=np.float64)
        live = [i for i, it in enumerate(batch) if it.next_state is not None]
        live = [i for i in live if batch[i].next_state.num_actions > 0]
        if live:
            graphs = [_pruned(batch[i].next_state, hops) for i in live]
            tb = _GraphBatch(graphs, [np.arange(len(g.frontier)) for g in graphs])
            if self.on_target_eval is not None:
                self.on_target_eval(self.target)
            qn, _ = gnn_forward(self.target, tb.X, tb.edges, tb.feats, tb.pairs)
            best = np.full(len(live), -np.inf)
            np.maximum.at(best, tb.segments, qn)
            y[live] += gamma * best
        graphs = [_pruned(it.state, hops) for it in batch]
        ob = _GraphBatch(graphs, [np.array([it.action]) for it in batch])
        q, cache = gnn_forward(self.online, ob.X, ob.edges, ob.feats, ob.pairs)
        err = q - y
        loss = float(np.mean(err**2))
        grads = gnn_backward(self.online, cache, 2.0 * err / len(batch))
        return loss, grads

    def sync(self) -> None:
        self.target = self.online.copy()


class BaselineLearner:
    family = "rl"

    def __init__(self, alphabet, config: TrainConfig, rng: np.random.Generator):
        self.alphabet = tuple(alphabet)
        self.config = config
        self.online = init_baseline(phi_dim(len(self.alphabet)), config.mlp_hidden, rng=rng)
        self.target = self.online.copy()
        self.on_target_eval: Callable[[object], None] | None = None
        self._es = None
        self._fz = None

    def observe(self, es: ExplorationState) -> np.ndarray:
        if self._es is not es:
            self._es = es
            self._fz = Featurizer(es, self.alphabet)
        return self._fz.phi_matrix(list(es.frontier))

    def greedy(self, x: np.ndarray) -> int:
        return int(np.argmax(baseline_forward(self.online, x)[0]))

    def snapshot(self, x: np.ndarray) -> np.ndarray:
        return x

    def learn(self, batch: list[ReplayItem]) -> tuple[float, dict]:
        gamma = self.config.gamma
        y = np.array([it.reward for it in batch], dtype=np.float64)
        live = [i for i, it in enumerate(batch) if it.next_state is not None and len(it.next_state)]
        if live:
            if self.on_target_eval is not None:
                self.on_target_eval(self.target)
            for i in live:
                y[i] += gamma * float(np.max(baseline_forward(self.target, batch[i].next_state)[0]))
        x = np.stack([it.state[it.action] for it in batch])
        q, cache = baseline_forward(self.online, x)
        err = q - y
        loss = float(np.mean(err**2))
        return loss, baseline_backward(self.online, cache, 2.0 * err / len(batch))

    def sync(self) -> None:
        self.target = self.online.copy()


# -- training loop ---------------------------------------------------------


@dataclass
class EpisodeLog:
    episode: int
    expansions: int
    ret: float
    epsilon: float
    loss_mean: float


@dataclass
class TrainResult:
    family: str
    domain: str
    seed: int
    log: list[EpisodeLog]
    snapshots: list[Path] = field(default_factory=list)
    models: list = field(default_factory=list)
    alphabet: tuple[str, ...] = ()
    epsilon_steps: int = 0

    @property
    def expansions(self) -> list[int]:
        return [row.expansions for row in self.log]


class Trainer:
    def __init__(self, domain: str, config: TrainConfig, family: str = "gcrl"):
        if family not in FAMILIES:
            raise ValueError(f"unknown policy family {family!r}")
        self.domain = domain
        self.config = config
        self.family = family
        self.spec = BenchmarkSpec(domain, config.train_n, config.train_k)
        self.model = generate_benchmark(self.spec)
        self.alphabet = normalized_alphabet(self.model)
        self.rng = np.random.default_rng(config.seed)
        learner_cls = GnnLearner if family == "gcrl" else BaselineLearner
        self.learner = learner_cls(self.alphabet, config, self.rng)
        self.optimizer = Adam(lr=config.lr)
        self.buffer = ReplayBuffer(config.replay_capacity)
        self.steps = 0
        self.grad_steps = 0
        steps = config.epsilon_decay_steps
        if steps is None:
            mean = expected_episode_length(
                self.model, config.pilot_runs, config.seed, config.episode_budget
            )
            steps = max(1, int(round(config.episodes * mean)))
        self.epsilon = LinearEpsilon(config.epsilon_start, config.epsilon_end, steps)

    def _update(self) -> float:
        batch = self.buffer.sample(self.rng, self.config.batch_size)
        loss, grads = self.learner.learn(batch)
        if not math.isfinite(loss):
            raise TrainingError(
                f"non-finite loss at gradient step {self.grad_steps} (env step {self.steps})"
            )
        clip_grad_norm(grads, self.config.grad_clip)
        self.optimizer.step(self.learner.online, grads)
        self.grad_steps += 1
        if self.grad_steps % self.config.target_sync == 0:
            self.learner.sync()
        return loss

    def episode(self) -> tuple[int, float, list[float]]:
        cfg = self.config
        es = ExplorationState(self.model)
        es.start()
        losses: list[float] = []
        pending: ReplayItem | None = None
        eps = self.epsilon(self.steps)
        while not es.decided and es.frontier and es.expansions < cfg.episode_budget:
            obs = self.learner.observe(es)
            snap = self.learner.snapshot(obs)
            if pending is not None:
                pending.next_state = snap
                self.buffer.add(pending)
            eps = self.epsilon(self.steps)
            if self.rng.random() < eps:
                action = int(self.rng.integers(len(es.frontier)))
            else:
                action = self.learner.greedy(obs)
            tid = list(es.frontier)[action]
            es.expand(tid)
            self.steps += 1
            pending = ReplayItem(snap, action, -1.0, None)
            if len(self.buffer) >= cfg.batch_size:
                losses.append(self._update())
        if pending is not None:
            if not es.decided:
                # truncated by the episode budget: bootstrap from the last state
                pending.next_state = self.learner.snapshot(self.learner.observe(es))
            self.buffer.add(pending)
        return es.expansions, eps, losses

    def run(self, out_dir: Path | None = None, keep_models: bool = False) -> TrainResult:
        result = TrainResult(
            self.family, self.domain, self.config.seed, [], alphabet=self.alphabet,
            epsilon_steps=self.epsilon.steps,
        )
        if out_dir is not None:
            out_dir = Path(out_dir)
            (out_dir / "snapshots").mkdir(parents=True, exist_ok=True)
        for ep in range(self.config.episodes):
            t0 = time.perf_counter()
            expansions, eps, losses = self.episode()
            loss_mean = float(np.mean(losses)) if losses else float("nan")
            row = EpisodeLog(ep, expansions, -float(expansions), eps, loss_mean)
            result.log.append(row)
            log.info(
                "%s %s seed=%d episode %d: %d expansions, eps=%.3f, loss=%.4g (%.1fs)",
                self.family, self.domain, self.config.seed, ep, expansions, eps, loss_mean,
                time.perf_counter() - t0,
            )
            if keep_models:
                result.models.append(self.learner.online.copy())
            if out_dir is not None:
                path = out_dir / "snapshots" / f"episode_{ep:03d}.json"
                save_weights(
                    self.learner.online, path, alphabet=self.alphabet,
                    meta=self._meta(episode=ep),
                )
                result.snapshots.append(path)
        if out_dir is not None:
            write_train_log(result.log, out_dir / "train_log.csv", self._header())
        return result

    def _meta(self, **extra) -> dict:
        return {
            "tool_version": __version__,
            "seed": self.config.seed,
            "config_hash": self.config.digest(),
            "domain": self.domain,
            "family": self.family,
            "train_instance": [self.config.train_n, self.config.train_k],
            "hops": self.config.hops,
            **extra,
        }

    def _header(self) -> str:
        return (
            f"dcsynth {__version__} train-log v1 seed={self.config.seed} "
            f"config={self.config.digest()} family={self.family} domain={self.domain}"
        )


def train(
    domain: str,
    config: TrainConfig,
    family: str = "gcrl",
    out_dir: Path | None = None,
    keep_models: bool = False,
) -> TrainResult:
    return Trainer(domain, config, family).run(out_dir, keep_models=keep_models)


def _fmt(x: float) -> str:
    return "" if isinstance(x, float) and math.isnan(x) else repr(x)


def write_train_log(rows: list[EpisodeLog], path, header: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# {header}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRAIN_LOG_COLUMNS)
        for r in rows:
            w.writerow([r.episode, r.expansions, _fmt(r.ret), _fmt(r.epsilon), _fmt(r.loss_mean)])


def read_train_log(path) -> list[EpisodeLog]:
    rows = []
    with open(path, encoding="utf-8") as fh:
        lines = [line for line in fh if not line.startswith("#")]
    reader = csv.DictReader(lines)
    if reader.fieldnames != TRAIN_LOG_COLUMNS:
        raise ValueError(f"unexpected training log columns {reader.fieldnames}")
    for rec in reader:
        rows.append(
            EpisodeLog(
                int(rec["episode"]),
                int(rec["expansions"]),
                float(rec["return"]),
                float(rec["epsilon"]),
                float(rec["loss_mean"]) if rec["loss_mean"] else float("nan"),
            )
        )
    return rows
