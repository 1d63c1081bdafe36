"""Graph encoding of the explored region plus frontier, and k-hop pruning.

Edges are laid out history first (in expansion order), then frontier
transitions (in canonical order); the positions of the frontier edges are
recorded in ``frontier``. Node ids are the exploration state's interned
ids, so two frontier edges into the same undiscovered plant state share
one placeholder node.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .engine import ExplorationState
from .features import Featurizer, edge_dim, edge_features, node_features, NODE_DIM


@dataclass
class GraphEncoding:
    edges: np.ndarray  # (E, 2) int64 node ids
    edge_feats: np.ndarray  # (E, F_e)
    node_feats: np.ndarray  # (N, F_n)
    frontier: np.ndarray  # positions into edges
    frontier_tids: np.ndarray  # transition ids aligned with ``frontier``
    node_ids: np.ndarray  # exploration-state id of every node

    @property
    def num_nodes(self) -> int:
        return len(self.node_feats)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def to_json(self, es: ExplorationState | None = None) -> dict:
        doc = {
            "num_nodes": self.num_nodes,
            "edges": self.edges.tolist(),
            "node_features": self.node_feats.tolist(),
            "edge_features": self.edge_feats.tolist(),
            "frontier": self.frontier.tolist(),
            "frontier_tids": self.frontier_tids.tolist(),
            "node_ids": self.node_ids.tolist(),
        }
        if es is not None:
            doc["node_states"] = [list(es.states[i]) for i in self.node_ids]
        return doc

    def dump(self, path, es: ExplorationState | None = None) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(es), fh)

    def equals(self, other: "GraphEncoding") -> bool:
        return (
            np.array_equal(self.edges, other.edges)
            and np.array_equal(self.edge_feats, other.edge_feats)
            and np.array_equal(self.node_feats, other.node_feats)
            and np.array_equal(self.frontier, other.frontier)
            and np.array_equal(self.frontier_tids, other.frontier_tids)
            and np.array_equal(self.node_ids, other.node_ids)
        )


def _edges_of(es: ExplorationState, tids) -> np.ndarray:
    if not len(tids):
        return np.zeros((0, 2), dtype=np.int64)
    return np.array([(es.t_src[t], es.t_dst[t]) for t in tids], dtype=np.int64)


def build_graph(es: ExplorationState, alphabet: tuple[str, ...]) -> GraphEncoding:
    """Encode from scratch, row by row."""
    tids = list(es.history) + list(es.frontier)
    n_hist = len(es.history)
    fe = edge_dim(len(alphabet))
    feats = np.array([edge_features(es, t, alphabet) for t in tids]).reshape(len(tids), fe)
    nodes = np.array([node_features(es, s) for s in range(es.num_states)]).reshape(-1, NODE_DIM)
    return GraphEncoding(
        edges=_edges_of(es, tids),
        edge_feats=feats,
        node_feats=nodes,
        frontier=np.arange(n_hist, len(tids), dtype=np.int64),
        frontier_tids=np.array(list(es.frontier), dtype=np.int64),
        node_ids=np.arange(es.num_states, dtype=np.int64),
    )


class GraphBuilder:
    """Maintains the edge list across decisions of one run."""

    def __init__(self, es: ExplorationState, alphabet: tuple[str, ...]):
        self.es = es
        self.featurizer = Featurizer(es, alphabet)
        self._hist_edges = np.zeros((0, 2), dtype=np.int64)
        self._hist_len = 0

    def encode(self) -> GraphEncoding:
        es = self.es
        new = es.history[self._hist_len :]
        if new:
            self._hist_edges = np.concatenate([self._hist_edges, _edges_of(es, new)])
            self._hist_len = len(es.history)
        ftids = np.fromiter(es.frontier, dtype=np.int64, count=len(es.frontier))
        src = np.asarray(es.t_src, dtype=np.int64)
        dst = np.asarray(es.t_dst, dtype=np.int64)
        fedges = np.stack([src[ftids], dst[ftids]], axis=1) if len(ftids) else np.zeros((0, 2), np.int64)
        tids = np.concatenate([np.asarray(es.history, dtype=np.int64), ftids])
        n_hist = self._hist_len
        return GraphEncoding(
            edges=np.concatenate([self._hist_edges, fedges]),
            edge_feats=self.featurizer.edge_matrix(tids),
            node_feats=self.featurizer.node_matrix(),
            frontier=np.arange(n_hist, n_hist + len(ftids), dtype=np.int64),
            frontier_tids=ftids,
            node_ids=np.arange(es.num_states, dtype=np.int64),
        )


def khop_nodes(num_nodes: int, edges: np.ndarray, seeds, k: int) -> np.ndarray:
    """Sorted ids of all nodes within ``k`` undirected hops of ``seeds``."""
    if k < 0:
        raise ValueError("k must be >= 0")
    seen = np.zeros(num_nodes, dtype=bool)
    seen[np.asarray(seeds, dtype=np.int64)] = True
    if k > 0 and len(edges):
        u, v = edges[:, 0], edges[:, 1]
        for _ in range(k):
            reach = seen.copy()
            reach[v[seen[u]]] = True
            reach[u[seen[v]]] = True
            if np.array_equal(reach, seen):
                break
            seen = reach
    return np.flatnonzero(seen)


def khop_subgraph(g: GraphEncoding, seeds, k: int) -> tuple[GraphEncoding, np.ndarray]:
    """Induced subgraph on the k-hop neighbourhood of ``seeds``.

    Returns the sub-encoding and the original node index of each kept node.
    Edge order is preserved, so frontier positions stay history-after.
    """
    seeds = np.asarray(seeds, dtype=np.int64)
    if len(seeds) == 0:
        raise ValueError("seeds must be nonempty")
    keep = khop_nodes(g.num_nodes, g.edges, seeds, k)
    remap = np.full(g.num_nodes, -1, dtype=np.int64)
    remap[keep] = np.arange(len(keep))
    if len(g.edges):
        mask = (remap[g.edges[:, 0]] >= 0) & (remap[g.edges[:, 1]] >= 0)
    else:
        mask = np.zeros(0, dtype=bool)
    new_pos = np.cumsum(mask) - 1
    frontier_mask = mask[g.frontier] if len(g.frontier) else np.zeros(0, dtype=bool)
    sub = GraphEncoding(
        edges=remap[g.edges[mask]].reshape(-1, 2),
        edge_feats=g.edge_feats[mask],
        node_feats=g.node_feats[keep],
        frontier=new_pos[g.frontier[frontier_mask]],
        frontier_tids=g.frontier_tids[frontier_mask],
        node_ids=g.node_ids[keep],
    )
    return sub, keep


def frontier_seeds(g: GraphEncoding) -> np.ndarray:
    """Endpoints of all frontier edges."""
    return np.unique(g.edges[g.frontier].ravel())
