"""Independent slow references used as test oracles.

Nothing here imports the code under test except for data containers and
the pieces a reference deliberately shares (model parameters).
"""

from __future__ import annotations

import math
from collections import deque

import numpy as np


def slow_propagation(num_nodes, edges, aggregation):
    """Dense propagation matrix built node by node."""
    nbrs = [set() for _ in range(num_nodes)]
    for u, v in edges:
        if u != v:
            nbrs[u].add(v)
            nbrs[v].add(u)
    for i in range(num_nodes):
        nbrs[i].add(i)
    P = np.zeros((num_nodes, num_nodes))
    for i in range(num_nodes):
        for j in nbrs[i]:
            if aggregation == "sum":
                P[i, j] = 1.0
            else:
                P[i, j] = 1.0 / math.sqrt(len(nbrs[i]) * len(nbrs[j]))
    return P


def slow_gnn(params, aggregation, X, edges, edge_feats, pairs):
    """Per-node, per-edge loops with no vectorized propagation."""
    P = slow_propagation(len(X), edges, aggregation)
    n = len(X)

    def layer(Hin, W, b):
        out = np.zeros((n, W.shape[1]))
        for v in range(n):
            acc = np.zeros(W.shape[1])
            for u in range(n):
                if P[v, u] != 0.0:
                    acc += P[v, u] * (Hin[u] @ W)
            out[v] = np.maximum(acc + b, 0.0)
        return out

    H1 = layer(X, params["W1"], params["b1"])
    H2 = layer(H1, params["W2"], params["b2"])
    q = []
    for (u, v), f in zip(pairs, edge_feats):
        z = np.concatenate([H2[u], H2[v], f])
        hidden = np.maximum(z @ params["M1"] + params["c1"], 0.0)
        q.append(float(hidden @ params["m2"] + params["c2"]))
    return np.array(q)


def bfs_nodes(num_nodes, edges, seeds, k):
    adj = [set() for _ in range(num_nodes)]
    for u, v in edges:
        adj[u].add(v)
        adj[v].add(u)
    dist = {s: 0 for s in seeds}
    queue = deque(seeds)
    while queue:
        u = queue.popleft()
        if dist[u] < k:
            for v in adj[u]:
                if v not in dist:
                    dist[v] = dist[u] + 1
                    queue.append(v)
    return sorted(dist)


def slow_pruned_qvalues(params, aggregation, g, k):
    """k-hop pruning by BFS plus the slow GNN, on a GraphEncoding-like object."""
    edges = g.edges.tolist()
    frontier = g.frontier.tolist()
    seeds = sorted({x for i in frontier for x in edges[i]})
    keep = bfs_nodes(g.num_nodes, edges, seeds, k)
    remap = {old: new for new, old in enumerate(keep)}
    sub_edges = [(remap[u], remap[v]) for u, v in edges if u in remap and v in remap]
    X = g.node_feats[keep]
    pairs = [(remap[edges[i][0]], remap[edges[i][1]]) for i in frontier]
    feats = g.edge_feats[frontier]
    return slow_gnn(params, aggregation, X, sub_edges, feats, pairs)


def diameter_bound(num_nodes, edges):
    """Largest finite undirected eccentricity (0 for edgeless graphs)."""
    adj = [set() for _ in range(num_nodes)]
    for u, v in edges:
        adj[u].add(v)
        adj[v].add(u)
    best = 0
    for s in range(num_nodes):
        dist = {s: 0}
        queue = deque([s])
        while queue:
            u = queue.popleft()
            for v in adj[u]:
                if v not in dist:
                    dist[v] = dist[u] + 1
                    queue.append(v)
        best = max(best, max(dist.values()))
    return best


def finite_difference(loss, params: dict, eps: float = 1e-5) -> dict:
    """Central differences of ``loss()`` w.r.t. every entry of every array in ``params``."""
    grads = {}
    for name, arr in params.items():
        g = np.zeros_like(arr)
        flat = arr.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + eps
            up = loss()
            flat[i] = old - eps
            down = loss()
            flat[i] = old
            gflat[i] = (up - down) / (2 * eps)
        grads[name] = g
    return grads


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    denom = max(np.linalg.norm(a), np.linalg.norm(b))
    if denom < 1e-10:
        return 0.0
    return float(np.linalg.norm(a - b) / denom)


def random_fixture(rng, f_n=7, f_e=6):
    n = int(rng.integers(2, 9))
    m = int(rng.integers(1, 14))
    edges = rng.integers(0, n, size=(m, 2))
    pairs_idx = rng.choice(m, size=int(rng.integers(1, m + 1)), replace=False)
    X = rng.random((n, f_n))
    feats = (rng.random((len(pairs_idx), f_e)) < 0.5).astype(np.float64)
    return X, edges, feats, edges[pairs_idx]


def before(a, b):
    """Rule-by-rule precedence check written directly from the three-level rule."""
    (ca, da, oa), (cb, db, ob) = a, b
    if ca != cb:
        return not ca  # uncontrollable first
    if not ca and (da == math.inf) != (db == math.inf):
        return da == math.inf  # unknown distance first among uncontrollables
    if da != db:
        return da < db
    return oa < ob


def exhaustive_sort(items):
    """Selection sort that repeatedly takes the element no one precedes."""
    rest, out = list(items), []
    while rest:
        top = [x for x in rest if not any(before(y, x) for y in rest if y is not x)]
        assert len(top) == 1
        out.append(top[0])
        rest.remove(top[0])
    return out
