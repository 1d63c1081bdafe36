"""Node and edge features of the explored region.

Node features (7): just explored, explored ratio, has uncontrollable
outgoing, marked, and three global phase bits (marked found, some state
winning, some state losing).

Edge features (2|A| + 12): label one-hot, multi-hot of labels on the
discovery-tree path to the source, controllable, target marked, phase bits,
target classification one-hot (win, loss, undecided, unexplored), target
has uncontrollable outgoing, target has an expanded outgoing transition,
source is the source of the last expansion.

Labels are normalized by stripping trailing index segments (``put_3`` and
``assign_1.2`` become ``put`` and ``assign``) so that one alphabet serves
every size of a benchmark family.
"""

from __future__ import annotations

import re

import numpy as np

from .engine import LOSING, UNDECIDED, WINNING, ContractViolation, ExplorationState
from .lts import CompositeModel

NODE_DIM = 7

_INDEX_SUFFIX = re.compile(r"(?:[_.]\d+)+$")


def normalize_label(label: str) -> str:
    return _INDEX_SUFFIX.sub("", label) or label


def normalized_alphabet(model: CompositeModel) -> tuple[str, ...]:
    return tuple(sorted({normalize_label(label) for label in model.alphabet}))


def edge_dim(alphabet_size: int) -> int:
    return 2 * alphabet_size + 12


def phi_dim(alphabet_size: int) -> int:
    return NODE_DIM + edge_dim(alphabet_size)


def _phase(es: ExplorationState) -> list[float]:
    return [float(es.marked_found), float(es.any_winning), float(es.any_losing)]


def _label_index(alphabet: tuple[str, ...]) -> dict[str, int]:
    return {a: i for i, a in enumerate(alphabet)}


def _lookup(index: dict[str, int], label: str) -> int:
    base = normalize_label(label)
    if base not in index:
        raise ContractViolation(f"label {label!r} ({base!r}) not in the normalized alphabet")
    return index[base]


def node_features(es: ExplorationState, sid: int) -> np.ndarray:
    """Feature row for one node, computed from scratch."""
    phase = _phase(es)
    if not es.discovered[sid]:
        return np.array([0.0, 0.0, 0.0, 0.0] + phase)
    total = len(es.out[sid])
    ratio = (total - es.unexpanded[sid]) / total if total else 0.0
    return np.array(
        [
            float(es.last_discovered == sid),
            ratio,
            float(es.has_unc[sid]),
            float(es.marked[sid]),
        ]
        + phase
    )


def path_labels(es: ExplorationState, sid: int) -> list[str]:
    """Labels on the discovery-tree path from the initial state to ``sid``."""
    labels = []
    while sid in es.parent:
        sid, tid = es.parent[sid]
        labels.append(es.t_label[tid])
    return labels[::-1]


def edge_features(es: ExplorationState, tid: int, alphabet: tuple[str, ...]) -> np.ndarray:
    """Feature row for one transition of ``h`` or the frontier, from scratch."""
    a = len(alphabet)
    index = _label_index(alphabet)
    row = np.zeros(edge_dim(a))
    row[_lookup(index, es.t_label[tid])] = 1.0
    src, dst = es.t_src[tid], es.t_dst[tid]
    for label in path_labels(es, src):
        row[a + _lookup(index, label)] = 1.0
    o = 2 * a
    row[o] = float(es.t_ctrl[tid])
    row[o + 1] = float(es.marked[dst])
    row[o + 2 : o + 5] = _phase(es)
    if not es.discovered[dst]:
        row[o + 8] = 1.0
    else:
        row[o + 5 + {WINNING: 0, LOSING: 1, UNDECIDED: 2}[es.status[dst]]] = 1.0
        row[o + 9] = float(es.has_unc[dst])
        row[o + 10] = float(len(es.out[dst]) > es.unexpanded[dst])
    last = es.last_expanded
    row[o + 11] = float(last is not None and es.t_src[last] == src)
    return row


def phi(es: ExplorationState, tid: int, alphabet: tuple[str, ...]) -> np.ndarray:
    """Flat feature vector of a frontier action for the baseline Q-network."""
    return np.concatenate([node_features(es, es.t_src[tid]), edge_features(es, tid, alphabet)])


class Featurizer:
    """Vectorized feature matrices for one exploration run.

    Label indices and discovery-path masks are cached and extended as the
    run grows; everything else is read fresh from the exploration state.
    """

    def __init__(self, es: ExplorationState, alphabet: tuple[str, ...]):
        self.es = es
        self.alphabet = tuple(alphabet)
        self.a = len(self.alphabet)
        self._index = _label_index(self.alphabet)
        self._label_idx = np.zeros(0, dtype=np.int64)
        self._paths = np.zeros((0, self.a), dtype=bool)
        self._path_done = 0

    def _sync(self) -> None:
        es = self.es
        m = es.num_transitions
        if m > len(self._label_idx):
            new = [_lookup(self._index, lab) for lab in es.t_label[len(self._label_idx) : m]]
            self._label_idx = np.concatenate([self._label_idx, np.array(new, dtype=np.int64)])
        n = es.num_states
        if n > len(self._paths):
            grow = np.zeros((max(n, 2 * len(self._paths)), self.a), dtype=bool)
            grow[: len(self._paths)] = self._paths
            self._paths = grow
        order = es.discovery_order
        for sid in order[self._path_done :]:
            if sid in es.parent:
                p, tid = es.parent[sid]
                self._paths[sid] = self._paths[p]
                self._paths[sid, self._label_idx[tid]] = True
        self._path_done = len(order)

    def node_matrix(self) -> np.ndarray:
        es = self.es
        self._sync()
        n = es.num_states
        x = np.zeros((n, NODE_DIM))
        disc = np.fromiter(es.discovered, dtype=bool, count=n)
        total = np.fromiter((len(o) for o in es.out), dtype=np.float64, count=n)
        unexp = np.fromiter(es.unexpanded, dtype=np.float64, count=n)
        with np.errstate(invalid="ignore", divide="ignore"):
            ratio = np.where(total > 0, (total - unexp) / np.where(total > 0, total, 1.0), 0.0)
        x[:, 1] = np.where(disc, ratio, 0.0)
        x[:, 2] = np.fromiter(es.has_unc, dtype=bool, count=n) & disc
        x[:, 3] = np.fromiter(es.marked, dtype=bool, count=n) & disc
        if es.last_discovered is not None:
            x[es.last_discovered, 0] = 1.0
        x[:, 4:7] = _phase(es)
        return x

    def edge_matrix(self, tids) -> np.ndarray:
        es = self.es
        self._sync()
        tids = np.asarray(tids, dtype=np.int64)
        a = self.a
        e = np.zeros((len(tids), edge_dim(a)))
        if len(tids) == 0:
            return e
        rows = np.arange(len(tids))
        src = np.asarray(es.t_src, dtype=np.int64)[tids]
        dst = np.asarray(es.t_dst, dtype=np.int64)[tids]
        e[rows, self._label_idx[tids]] = 1.0
        e[:, a : 2 * a] = self._paths[src]
        o = 2 * a
        e[:, o] = np.asarray(es.t_ctrl, dtype=bool)[tids]
        n = es.num_states
        e[:, o + 1] = np.fromiter(es.marked, dtype=bool, count=n)[dst]
        e[:, o + 2 : o + 5] = _phase(es)
        disc = np.fromiter(es.discovered, dtype=bool, count=n)[dst]
        status = np.fromiter(es.status, dtype=np.int64, count=n)[dst]
        cls = np.where(disc, np.select([status == WINNING, status == LOSING], [0, 1], 2), 3)
        e[rows, o + 5 + cls] = 1.0
        e[:, o + 9] = np.fromiter(es.has_unc, dtype=bool, count=n)[dst] & disc
        explored = np.fromiter(
            (len(out) > u for out, u in zip(es.out, es.unexpanded)), dtype=bool, count=n
        )
        e[:, o + 10] = explored[dst] & disc
        last = es.last_expanded
        if last is not None:
            e[:, o + 11] = src == es.t_src[last]
        return e

    def phi_matrix(self, tids) -> np.ndarray:
        tids = np.asarray(tids, dtype=np.int64)
        x = self.node_matrix()
        src = np.asarray(self.es.t_src, dtype=np.int64)[tids]
        return np.concatenate([x[src], self.edge_matrix(tids)], axis=1)
