"""Two-layer graph convolution with an edge-scoring MLP, in plain numpy.

Forward::

    H1 = relu(P X W1 + b1)
    H2 = relu(P H1 W2 + b2)
    q  = relu([H2[u] | H2[v] | phi_uv] M1 + c1) . m2 + c2

``P`` is the propagation matrix over the symmetrized edge set with self
loops: ``D^-1/2 (A + I) D^-1/2`` for ``aggregation="normalized"`` and
``A + I`` for ``aggregation="sum"``. Gradients are derived by hand; the
finite-difference tests in ``tests/test_neural.py`` pin them down.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

WEIGHTS_FORMAT = "dcsynth-weights"
WEIGHTS_VERSION = 1
AGGREGATIONS = ("normalized", "sum")


class WeightsError(ValueError):
    """A weight file is malformed, truncated or incompatible."""


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def propagation_matrix(num_nodes: int, edges: np.ndarray, aggregation: str = "normalized"):
    if aggregation not in AGGREGATIONS:
        raise ValueError(f"unknown aggregation {aggregation!r}")
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    u, v = edges[:, 0], edges[:, 1]
    keep = u != v
    u, v = u[keep], v[keep]
    rows = np.concatenate([u, v, np.arange(num_nodes)])
    cols = np.concatenate([v, u, np.arange(num_nodes)])
    # duplicate edges collapse to a single binary entry
    key = np.unique(rows * num_nodes + cols)
    r, c = key // num_nodes, key % num_nodes
    deg = np.bincount(r, minlength=num_nodes)
    indptr = np.concatenate([[0], np.cumsum(deg)])
    if aggregation == "sum":
        data = np.ones(len(key))
    else:
        inv = 1.0 / np.sqrt(deg.astype(np.float64))
        data = inv[r] * inv[c]
    return sparse.csr_matrix((data, c, indptr), shape=(num_nodes, num_nodes))


@dataclass
class GnnModel:
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    M1: np.ndarray
    c1: np.ndarray
    m2: np.ndarray
    c2: np.ndarray
    aggregation: str = "normalized"

    PARAMS = ("W1", "b1", "W2", "b2", "M1", "c1", "m2", "c2")

    @property
    def dims(self) -> dict[str, int]:
        return {
            "F_n": self.W1.shape[0],
            "H": self.W1.shape[1],
            "F_e": self.M1.shape[0] - 2 * self.W1.shape[1],
            "H_m": self.M1.shape[1],
        }

    def params(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in self.PARAMS}

    def copy(self) -> "GnnModel":
        return GnnModel(**{k: v.copy() for k, v in self.params().items()}, aggregation=self.aggregation)

    def check(self) -> None:
        d = self.dims
        expected = {
            "W1": (d["F_n"], d["H"]),
            "b1": (d["H"],),
            "W2": (d["H"], d["H"]),
            "b2": (d["H"],),
            "M1": (2 * d["H"] + d["F_e"], d["H_m"]),
            "c1": (d["H_m"],),
            "m2": (d["H_m"],),
            "c2": (),
        }
        for name, shape in expected.items():
            if getattr(self, name).shape != shape:
                raise WeightsError(f"{name} has shape {getattr(self, name).shape}, expected {shape}")
        if d["F_e"] < 0:
            raise WeightsError("edge feature dimension is negative")
        if self.aggregation not in AGGREGATIONS:
            raise WeightsError(f"unknown aggregation {self.aggregation!r}")


def init_gnn(
    f_n: int,
    f_e: int,
    hidden: int = 32,
    mlp_hidden: int = 64,
    *,
    rng: np.random.Generator,
    aggregation: str = "normalized",
) -> GnnModel:
    return GnnModel(
        W1=_glorot(rng, f_n, hidden),
        b1=np.zeros(hidden),
        W2=_glorot(rng, hidden, hidden),
        b2=np.zeros(hidden),
        M1=_glorot(rng, 2 * hidden + f_e, mlp_hidden),
        c1=np.zeros(mlp_hidden),
        m2=_glorot(rng, mlp_hidden, 1).ravel(),
        c2=np.array(0.0),
        aggregation=aggregation,
    )


@dataclass
class GcnCache:
    P: sparse.csr_matrix
    PX: np.ndarray
    Z1: np.ndarray
    H1: np.ndarray
    PH1: np.ndarray
    Z2: np.ndarray
    H2: np.ndarray


def gcn_forward(model: GnnModel, X: np.ndarray, P) -> tuple[np.ndarray, GcnCache]:
    """Node embeddings after both graph-convolution layers."""
    if X.shape[1] != model.W1.shape[0]:
        raise ValueError(f"node features have width {X.shape[1]}, model expects {model.W1.shape[0]}")
    if P.shape != (X.shape[0], X.shape[0]):
        raise ValueError("propagation matrix does not match node count")
    PX = P @ X
    Z1 = PX @ model.W1 + model.b1
    H1 = relu(Z1)
    PH1 = P @ H1
    Z2 = PH1 @ model.W2 + model.b2
    H2 = relu(Z2)
    return H2, GcnCache(P, PX, Z1, H1, PH1, Z2, H2)


@dataclass
class ScoreCache:
    pairs: np.ndarray
    Z: np.ndarray
    A: np.ndarray
    R: np.ndarray


def edge_scores(model: GnnModel, H: np.ndarray, edge_feats: np.ndarray, pairs: np.ndarray):
    """One Q-value per (u, v) pair: Lin -> ReLU -> Lin on [h_u | h_v | phi]."""
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    if edge_feats.shape[0] != len(pairs):
        raise ValueError("one feature row per pair is required")
    if 2 * H.shape[1] + edge_feats.shape[1] != model.M1.shape[0]:
        raise ValueError("edge MLP input width mismatch")
    Z = np.concatenate([H[pairs[:, 0]], H[pairs[:, 1]], edge_feats], axis=1)
    A = Z @ model.M1 + model.c1
    R = relu(A)
    q = R @ model.m2 + model.c2
    return q, ScoreCache(pairs, Z, A, R)


def gnn_forward(model: GnnModel, X, edges, edge_feats, pairs):
    """Full pipeline on one (possibly batched) graph."""
    P = propagation_matrix(X.shape[0], edges, model.aggregation)
    H, gc = gcn_forward(model, X, P)
    q, sc = edge_scores(model, H, edge_feats, pairs)
    return q, (gc, sc)


def gnn_backward(model: GnnModel, cache, dq: np.ndarray) -> dict[str, np.ndarray]:
    """Gradients of ``sum(dq * q)`` with respect to every parameter."""
    gc, sc = cache
    h = model.W1.shape[1]
    dq = np.asarray(dq, dtype=np.float64)
    grads = {
        "m2": sc.R.T @ dq,
        "c2": np.array(dq.sum()),
    }
    dA = np.outer(dq, model.m2) * (sc.A > 0)
    grads["M1"] = sc.Z.T @ dA
    grads["c1"] = dA.sum(axis=0)
    dZ = dA @ model.M1.T
    dH2 = np.zeros_like(gc.H2)
    np.add.at(dH2, sc.pairs[:, 0], dZ[:, :h])
    np.add.at(dH2, sc.pairs[:, 1], dZ[:, h : 2 * h])
    dZ2 = dH2 * (gc.Z2 > 0)
    grads["W2"] = gc.PH1.T @ dZ2
    grads["b2"] = dZ2.sum(axis=0)
    dH1 = gc.P.T @ (dZ2 @ model.W2.T)
    dZ1 = dH1 * (gc.Z1 > 0)
    grads["W1"] = gc.PX.T @ dZ1
    grads["b1"] = dZ1.sum(axis=0)
    return grads


@dataclass
class BaselineQNet:
    """Flat MLP over the baseline feature vector: Lin -> ReLU -> Lin."""

    M1: np.ndarray
    c1: np.ndarray
    m2: np.ndarray
    c2: np.ndarray

    PARAMS = ("M1", "c1", "m2", "c2")

    @property
    def dims(self) -> dict[str, int]:
        return {"D": self.M1.shape[0], "H_m": self.M1.shape[1]}

    def params(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in self.PARAMS}

    def copy(self) -> "BaselineQNet":
        return BaselineQNet(**{k: v.copy() for k, v in self.params().items()})

    def check(self) -> None:
        d = self.dims
        expected = {"M1": (d["D"], d["H_m"]), "c1": (d["H_m"],), "m2": (d["H_m"],), "c2": ()}
        for name, shape in expected.items():
            if getattr(self, name).shape != shape:
                raise WeightsError(f"{name} has shape {getattr(self, name).shape}, expected {shape}")


def init_baseline(dim: int, hidden: int = 64, *, rng: np.random.Generator) -> BaselineQNet:
    return BaselineQNet(
        M1=_glorot(rng, dim, hidden),
        c1=np.zeros(hidden),
        m2=_glorot(rng, hidden, 1).ravel(),
        c2=np.array(0.0),
    )


def baseline_forward(net: BaselineQNet, X: np.ndarray):
    if X.shape[1] != net.M1.shape[0]:
        raise ValueError(f"feature width {X.shape[1]} does not match network input {net.M1.shape[0]}")
    A = X @ net.M1 + net.c1
    R = relu(A)
    return R @ net.m2 + net.c2, (X, A, R)


def baseline_backward(net: BaselineQNet, cache, dq: np.ndarray) -> dict[str, np.ndarray]:
    X, A, R = cache
    dA = np.outer(dq, net.m2) * (A > 0)
    return {
        "m2": R.T @ dq,
        "c2": np.array(np.sum(dq)),
        "M1": X.T @ dA,
        "c1": dA.sum(axis=0),
    }


def clip_grad_norm(grads: dict[str, np.ndarray], max_norm: float) -> float:
    """Scale ``grads`` in place so their global L2 norm is at most ``max_norm``."""
    total = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if total > max_norm > 0:
        scale = max_norm / total
        for g in grads.values():
            g *= scale
    return total


@dataclass
class Adam:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def step(self, model, grads: dict[str, np.ndarray]) -> None:
        """Update ``model``'s parameters in place."""
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for name, g in grads.items():
            p = getattr(model, name)
            m = self.m.get(name)
            if m is None:
                m = self.m[name] = np.zeros_like(p)
                self.v[name] = np.zeros_like(p)
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            update = self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            setattr(model, name, p - update)


# -- persistence -------------------------------------------------------


def weights_to_json(model, *, alphabet=None, meta=None) -> dict:
    kind = "gcrl" if isinstance(model, GnnModel) else "baseline"
    params = {}
    for name, arr in model.params().items():
        if not np.all(np.isfinite(arr)):
            raise WeightsError(f"refusing to save non-finite values in {name}")
        params[name] = {"shape": list(arr.shape), "data": [float(x) for x in arr.ravel()]}
    doc = {
        "format": WEIGHTS_FORMAT,
        "version": WEIGHTS_VERSION,
        "kind": kind,
        "dims": model.dims,
        "alphabet": list(alphabet) if alphabet is not None else None,
        "meta": meta or {},
        "params": params,
    }
    if kind == "gcrl":
        doc["aggregation"] = model.aggregation
    return doc


def save_weights(model, path, *, alphabet=None, meta=None) -> None:
    doc = weights_to_json(model, alphabet=alphabet, meta=meta)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True)
        fh.write("\n")


def weights_from_json(doc: dict):
    """Rebuild a model from its JSON document; returns ``(model, doc)``."""
    if not isinstance(doc, dict) or doc.get("format") != WEIGHTS_FORMAT:
        raise WeightsError("not a dcsynth weight file")
    if doc.get("version") != WEIGHTS_VERSION:
        raise WeightsError(f"unsupported weight file version {doc.get('version')!r}")
    kind = doc.get("kind")
    cls = {"gcrl": GnnModel, "baseline": BaselineQNet}.get(kind)
    if cls is None:
        raise WeightsError(f"unknown model kind {kind!r}")
    arrays = {}
    try:
        for name in cls.PARAMS:
            entry = doc["params"][name]
            arr = np.array(entry["data"], dtype=np.float64).reshape(entry["shape"])
            arrays[name] = arr
    except (KeyError, TypeError, ValueError) as exc:
        raise WeightsError(f"malformed parameters: {exc}") from exc
    for name, arr in arrays.items():
        if not np.all(np.isfinite(arr)):
            raise WeightsError(f"non-finite values in {name}")
    if kind == "gcrl":
        model = GnnModel(**arrays, aggregation=doc.get("aggregation", "normalized"))
    else:
        model = BaselineQNet(**arrays)
    model.check()
    if model.dims != doc.get("dims"):
        raise WeightsError(f"declared dims {doc.get('dims')} do not match parameters {model.dims}")
    return model, doc


def load_weights(path):
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise WeightsError(f"{path}: truncated or invalid JSON ({exc})") from exc
    return weights_from_json(doc)
