"""Frontier-selection policies.

Every policy exposes ``select(es, rng) -> transition id``; the returned id
is always a member of ``es.frontier``. Ties break toward the canonical
frontier order (ascending transition id).
"""

from __future__ import annotations

import math
from collections import deque

import numpy as np

from .engine import ContractViolation, ExplorationState
from .features import Featurizer, normalized_alphabet, phi_dim, edge_dim, NODE_DIM
from .graph import GraphBuilder, GraphEncoding, frontier_seeds, khop_subgraph
from .lts import Automaton, CompositeModel
from .neural import BaselineQNet, GnnModel, baseline_forward, gnn_forward, load_weights


class PolicyError(ValueError):
    """Bad policy spec string or incompatible weights."""


def _require_frontier(es: ExplorationState) -> None:
    if not es.frontier:
        raise ContractViolation("empty frontier")


class RandomPolicy:
    name = "random"

    def select(self, es, rng):
        _require_frontier(es)
        i = int(rng.integers(len(es.frontier)))
        for j, tid in enumerate(es.frontier):
            if j == i:
                return tid


class BFSPolicy:
    """Oldest discovered source first."""

    name = "bfs"

    def select(self, es, rng):
        _require_frontier(es)
        return next(iter(es.frontier))


class DFSPolicy:
    """Most recently discovered source first."""

    name = "dfs"

    def select(self, es, rng):
        _require_frontier(es)
        best, best_idx = None, -1
        disc, src = es.disc_index, es.t_src
        for tid in es.frontier:
            d = disc[src[tid]]
            if d > best_idx:
                best, best_idx = tid, d
        return best


def local_goal_distances(comp: Automaton) -> list[float]:
    """Shortest distance from each local state to a marked one (inf if none)."""
    pred: dict[int, list[int]] = {s: [] for s in range(comp.num_states)}
    for src, _, dst in comp.transitions:
        pred[dst].append(src)
    dist = [math.inf] * comp.num_states
    queue = deque()
    for s in comp.marked:
        dist[s] = 0
        queue.append(s)
    while queue:
        s = queue.popleft()
        for p in pred[s]:
            if dist[p] == math.inf:
                dist[p] = dist[s] + 1
                queue.append(p)
    return dist


class RAPolicy:
    """Three-level priority: uncontrollable first, unknown distance next, then nearest goal.

    The goal distance of a transition is the largest per-component distance
    from the target's local states to a marked local state.
    """

    name = "ra"

    def __init__(self):
        self._model = None
        self._local: list[list[float]] = []
        self._dist: dict[int, float] = {}
        self._es = None

    def _prepare(self, es: ExplorationState) -> None:
        if self._model is not es.model:
            self._model = es.model
            self._local = [local_goal_distances(c) for c in es.model.components]
        if self._es is not es:
            self._es = es
            self._dist = {}

    def goal_distance(self, es: ExplorationState, sid: int) -> float:
        self._prepare(es)
        d = self._dist.get(sid)
        if d is None:
            d = max(table[local] for table, local in zip(self._local, es.states[sid]))
            self._dist[sid] = d
        return d

    def key(self, es: ExplorationState, tid: int) -> tuple:
        return ra_key(es.t_ctrl[tid], self.goal_distance(es, es.t_dst[tid]), tid)

    def select(self, es, rng):
        _require_frontier(es)
        self._prepare(es)
        return min(es.frontier, key=lambda t: self.key(es, t))


def ra_key(controllable: bool, distance: float, order: int) -> tuple:
    """Sort key: smaller is explored first."""
    if not controllable:
        if distance == math.inf:
            return (0, 0, 0.0, order)
        return (0, 1, distance, order)
    return (1, 0, distance, order)


class BaselineRLPolicy:
    """Greedy argmax of a flat Q-network over per-action feature vectors."""

    def __init__(self, net: BaselineQNet, alphabet: tuple[str, ...], epsilon: float = 0.0, name="rl"):
        if net.dims["D"] != phi_dim(len(alphabet)):
            raise PolicyError(
                f"network input {net.dims['D']} does not match feature size {phi_dim(len(alphabet))}"
            )
        self.net = net
        self.alphabet = tuple(alphabet)
        self.epsilon = epsilon
        self.name = name
        self._es = None
        self._fz = None

    def featurizer(self, es) -> Featurizer:
        if self._es is not es:
            self._es = es
            self._fz = Featurizer(es, self.alphabet)
        return self._fz

    def qvalues(self, es) -> np.ndarray:
        x = self.featurizer(es).phi_matrix(list(es.frontier))
        return baseline_forward(self.net, x)[0]

    def select(self, es, rng):
        _require_frontier(es)
        if self.epsilon > 0 and rng.random() < self.epsilon:
            return RandomPolicy().select(es, rng)
        q = self.qvalues(es)
        return list(es.frontier)[int(np.argmax(q))]


def qvalues_from_encoding(model: GnnModel, g: GraphEncoding, k: int | None) -> np.ndarray:
    """Q-value per frontier edge of ``g``; ``k=None`` skips pruning."""
    if len(g.frontier) == 0:
        return np.zeros(0)
    if k is not None:
        g, _ = khop_subgraph(g, frontier_seeds(g), k)
    pairs = g.edges[g.frontier]
    q, _ = gnn_forward(model, g.node_feats, g.edges, g.edge_feats[g.frontier], pairs)
    return q


def gcrl_qvalues(es: ExplorationState, model: GnnModel, k: int | None, alphabet, builder=None):
    """Q-values aligned with the frontier order, plus the encoding they came from."""
    _require_frontier(es)
    builder = builder or GraphBuilder(es, alphabet)
    g = builder.encode()
    return qvalues_from_encoding(model, g, k), g


class GCRLPolicy:
    """epsilon-greedy argmax over GNN Q-values of the frontier edges."""

    def __init__(
        self,
        model: GnnModel,
        alphabet: tuple[str, ...],
        k: int = 2,
        epsilon: float = 0.0,
        name: str = "gcrl",
    ):
        dims = model.dims
        if dims["F_n"] != NODE_DIM or dims["F_e"] != edge_dim(len(alphabet)):
            raise PolicyError(
                f"model dims {dims} incompatible with alphabet of size {len(alphabet)}"
            )
        if k < 0:
            raise PolicyError("k must be >= 0")
        self.model = model
        self.alphabet = tuple(alphabet)
        self.k = k
        self.epsilon = epsilon
        self.name = name
        self._es = None
        self._builder = None
        self.last_encoding: GraphEncoding | None = None

    def builder(self, es) -> GraphBuilder:
        if self._es is not es:
            self._es = es
            self._builder = GraphBuilder(es, self.alphabet)
        return self._builder

    def encode(self, es) -> GraphEncoding:
        self.last_encoding = self.builder(es).encode()
        return self.last_encoding

    def select(self, es, rng):
        _require_frontier(es)
        if self.epsilon > 0 and rng.random() < self.epsilon:
            self.last_encoding = None
            return RandomPolicy().select(es, rng)
        g = self.encode(es)
        q = qvalues_from_encoding(self.model, g, self.k)
        return int(g.frontier_tids[int(np.argmax(q))])


def make_policy(spec: str, model: CompositeModel | None = None):
    """Build a policy from a CLI spec string.

    ``random``, ``bfs``, ``dfs``, ``ra``, ``rl:<weights>``, ``gcrl:<weights>[:k]``.
    """
    simple = {"random": RandomPolicy, "bfs": BFSPolicy, "dfs": DFSPolicy, "ra": RAPolicy}
    if spec in simple:
        return simple[spec]()
    kind, _, rest = spec.partition(":")
    if kind not in ("rl", "gcrl") or not rest:
        raise PolicyError(f"invalid policy spec {spec!r}")
    k = 2
    path = rest
    if kind == "gcrl":
        head, _, tail = rest.rpartition(":")
        if head and tail.isdigit():
            path, k = head, int(tail)
    try:
        net, doc = load_weights(path)
    except OSError as exc:
        raise PolicyError(f"cannot read weights {path!r}: {exc}") from exc
    alphabet = doc.get("alphabet")
    if alphabet is None:
        if model is None:
            raise PolicyError("weights carry no alphabet and no model was given")
        alphabet = normalized_alphabet(model)
    alphabet = tuple(alphabet)
    if model is not None:
        missing = set(normalized_alphabet(model)) - set(alphabet)
        if missing:
            raise PolicyError(f"model labels {sorted(missing)} unknown to the trained policy")
    if kind == "rl":
        if not isinstance(net, BaselineQNet):
            raise PolicyError(f"{path} does not hold baseline RL weights")
        return BaselineRLPolicy(net, alphabet, name=f"rl:{path}")
    if not isinstance(net, GnnModel):
        raise PolicyError(f"{path} does not hold GCRL weights")
    return GCRLPolicy(net, alphabet, k=k, name=f"gcrl:{path}:{k}")
