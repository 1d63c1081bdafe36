"""Fixture builders shared by several test modules."""

import numpy as np

from dcsynth.benchmarks import DOMAINS, generate
from dcsynth.engine import ExplorationState
from dcsynth.features import NODE_DIM, edge_dim, normalized_alphabet
from dcsynth.graph import build_graph
from dcsynth.neural import init_gnn
from dcsynth.policies import RandomPolicy


def random_run(domain, n, k, steps, seed):
    """Exploration state after up to ``steps`` random expansions."""
    m = generate(domain, n, k)
    es = ExplorationState(m)
    es.start()
    rng = np.random.default_rng(seed)
    policy = RandomPolicy()
    for _ in range(steps):
        if es.decided or not es.frontier:
            break
        es.expand(policy.select(es, rng))
    return es


def random_encodings(count, seed):
    """``count`` (model alphabet, encoding) pairs from mid-run snapshots with a nonempty frontier."""
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < count:
        domain = DOMAINS[int(rng.integers(len(DOMAINS)))]
        n, k = int(rng.integers(1, 4)), int(rng.integers(1, 4))
        es = random_run(domain, n, k, int(rng.integers(0, 60)), int(rng.integers(1 << 30)))
        if not es.frontier:
            continue
        alphabet = normalized_alphabet(es.model)
        out.append((alphabet, build_graph(es, alphabet)))
    return out


def gnn_for(alphabet, seed, aggregation="normalized"):
    rng = np.random.default_rng(seed)
    model = init_gnn(NODE_DIM, edge_dim(len(alphabet)), 8, 12, rng=rng, aggregation=aggregation)
    model.b1 = rng.normal(0, 0.1, model.b1.shape)
    model.b2 = rng.normal(0, 0.1, model.b2.shape)
    model.c1 = rng.normal(0, 0.1, model.c1.shape)
    return model


ACCEPTANCE_LINES: list[str] = []


def report(number, title, ok, detail=""):
    """Record and print one acceptance verdict line, then fail the test if needed."""
    line = f"ACCEPTANCE {number:>2} {'PASS' if ok else 'FAIL'}  {title}" + (f"  [{detail}]" if detail else "")
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line
