"""End-to-end acceptance checks, one test per criterion.

Each test records a PASS/FAIL line that is echoed in the pytest terminal
summary. The learning checks (8 and 9) share one set of training runs and
take several minutes on a single core.
"""

import math
import time
from pathlib import Path

import numpy as np
import pytest

from helpers import gnn_for, random_encodings, report
from reference import (
    diameter_bound,
    exhaustive_sort,
    finite_difference,
    random_fixture,
    relative_error,
    slow_pruned_qvalues,
)
from dcsynth.benchmarks import DOMAINS, generate
from dcsynth.engine import DirectorError, ExplorationState, run_dcs, validate_director
from dcsynth.evaluation import auc, eval_grid, read_eval_csv, select_snapshot, write_eval_csv
from dcsynth.features import normalized_alphabet
from dcsynth.graph import GraphBuilder, build_graph
from dcsynth.modelio import load_model, parse_model, serialize_model
from dcsynth.neural import gnn_backward, gnn_forward, init_gnn, load_weights, save_weights
from dcsynth.oracle import monolithic_oracle
from dcsynth.policies import BFSPolicy, DFSPolicy, GCRLPolicy, RAPolicy, RandomPolicy, qvalues_from_encoding, ra_key
from dcsynth.training import LinearEpsilon, TrainConfig, Trainer, read_train_log, train, write_train_log

GOLDEN = Path(__file__).parent / "golden"
UNLIMITED = 10**9
SMALL_GRID = [(n, k) for n in (1, 2) for k in (1, 2)]
POLICIES = {"random": RandomPolicy, "bfs": BFSPolicy, "dfs": DFSPolicy, "ra": RAPolicy}

# learning checks
SEEDS = range(5)
SELECTION_EPISODES = range(9, 100, 10)
GRID_MAX = 6
GRID_BUDGET = 1000


@pytest.fixture(scope="module")
def small_grid_runs():
    t0 = time.perf_counter()
    runs = []
    for domain in DOMAINS:
        for n, k in SMALL_GRID:
            model = generate(domain, n, k)
            truth = monolithic_oracle(model).realizable
            for name, cls in POLICIES.items():
                for seed in range(3):
                    try:
                        v = run_dcs(model, cls(), budget=UNLIMITED, seed=seed)
                        problem = None
                    except DirectorError as exc:  # extraction validates; keep going so 2 can report it
                        v = run_dcs(model, cls(), budget=UNLIMITED, seed=seed, extract=False)
                        problem = str(exc)
                    runs.append((domain, n, k, name, seed, truth, v, model, problem))
    return runs, time.perf_counter() - t0


def test_criterion_1_oracle_equivalence(small_grid_runs):
    runs, elapsed = small_grid_runs
    wrong = [(d, n, k, p, s) for d, n, k, p, s, truth, v, _, _ in runs if not v.decided or v.realizable != truth]
    report(1, "DCS verdicts equal the monolithic oracle", not wrong and elapsed < 60,
           f"{len(runs)} runs, {len(wrong)} mismatches, {elapsed:.1f}s")


def test_criterion_2_director_validity(small_grid_runs):
    runs, _ = small_grid_runs
    checked, bad = 0, []
    for d, n, k, p, s, truth, v, model, problem in runs:
        if v.realizable:
            checked += 1
            problems = [problem] if problem else validate_director(model, v.director)
            if problems:
                bad.append((d, n, k, p, s, problems[:2]))
    report(2, "every realizable run yields a valid director", checked > 0 and not bad,
           f"{checked} directors, {len(bad)} invalid")


def test_criterion_3_gradient_correctness():
    worst = 0.0
    rng = np.random.default_rng(2024)
    for i in range(50):
        for aggregation in ("normalized", "sum"):
            X, edges, feats, pairs = random_fixture(rng, 7, 6)
            model = init_gnn(7, 6, int(rng.integers(2, 7)), int(rng.integers(2, 7)), rng=rng, aggregation=aggregation)
            for name in ("b1", "b2", "c1"):
                setattr(model, name, rng.normal(0, 0.1, getattr(model, name).shape))
            w = rng.normal(size=len(pairs))
            q, cache = gnn_forward(model, X, edges, feats, pairs)
            analytic = gnn_backward(model, cache, w)
            numeric = finite_difference(lambda: float(w @ gnn_forward(model, X, edges, feats, pairs)[0]), model.params())
            worst = max(worst, max(relative_error(analytic[k], numeric[k]) for k in analytic))
    report(3, "analytic GNN gradients match central differences", worst < 1e-4, f"max relative error {worst:.2e}")


def test_criterion_4_khop_exactness():
    exact_fail, ref_fail, worst = 0, 0, 0.0
    for i, (alphabet, g) in enumerate(random_encodings(100, 99)):
        model = gnn_for(alphabet, i, "normalized" if i % 2 else "sum")
        full = qvalues_from_encoding(model, g, None)
        k = diameter_bound(g.num_nodes, g.edges.tolist())
        if not np.array_equal(qvalues_from_encoding(model, g, k), full):
            exact_fail += 1
        q2 = qvalues_from_encoding(model, g, 2)
        ref = slow_pruned_qvalues(model.params(), model.aggregation, g, 2)
        worst = max(worst, float(np.max(np.abs(q2 - ref))))
        if not np.allclose(q2, ref, rtol=1e-10, atol=1e-12):
            ref_fail += 1
    report(4, "k-hop pruning is exact at k >= diameter and matches the slow k=2 pipeline",
           exact_fail == 0 and ref_fail == 0,
           f"{exact_fail} inexact, {ref_fail} reference mismatches, max |dq| {worst:.1e}")


def test_criterion_5_encoding_fidelity():
    model = generate("AT", 1, 1)
    alphabet = normalized_alphabet(model)
    problems, steps = [], 0
    for policy in (RandomPolicy(), BFSPolicy(), DFSPolicy(), RAPolicy()):
        es = ExplorationState(model)
        es.start()
        builder = GraphBuilder(es, alphabet)
        rng = np.random.default_rng(0)
        while True:
            g = builder.encode()
            n_hist = len(es.history)
            if len(g.frontier) != len(es.frontier):
                problems.append("frontier size")
            if g.frontier.tolist() != list(range(n_hist, n_hist + len(es.frontier))):
                problems.append("ordering")
            if not g.equals(build_graph(es, alphabet)):
                problems.append("scratch differs")
            steps += 1
            if es.decided or not es.frontier:
                break
            es.expand(policy.select(es, rng))
    report(5, "graph encodings of a logged AT(1,1) run are consistent", not problems and steps > 4,
           f"{steps} encodings checked")


def test_criterion_6_reward_and_metric_contracts():
    t = Trainer("TL", TrainConfig(episodes=3, batch_size=8, hidden=8, mlp_hidden=8))
    result = t.run()
    returns_ok = all(row.ret == -row.expansions for row in result.log)
    auc_value = auc([10] * 100)
    eps = t.epsilon
    ends = (eps(0), eps(eps.steps))
    plain = LinearEpsilon(1.0, 0.01, 500)
    ok = returns_ok and auc_value == -1000 and ends == (1.0, 0.01) and (plain(0), plain(500)) == (1.0, 0.01)
    report(6, "return = -expansions, synthetic AUC = -1000, epsilon runs 1.0 -> 0.01", ok,
           f"auc {auc_value}, epsilon ends {ends}")


def test_criterion_7_ra_ordering_law():
    rng = np.random.default_rng(7)
    mismatches = 0
    for _ in range(1000):
        size = int(rng.integers(1, 10))
        items = [
            (bool(rng.integers(2)), [0, 1, 2, 3, 4, math.inf][int(rng.integers(6))], order)
            for order in rng.permutation(size).tolist()
        ]
        if sorted(items, key=lambda x: ra_key(*x)) != exhaustive_sort(items):
            mismatches += 1
    report(7, "RA comparator matches the exhaustive rule oracle on 1000 frontiers", mismatches == 0,
           f"{mismatches} mismatches")


@pytest.fixture(scope="module")
def learning_runs():
    """Five seeded 100-episode GCRL trainings on TL(2,2), plus selection and grid evaluation."""
    out = []
    for seed in SEEDS:
        t0 = time.perf_counter()
        res = train("TL", TrainConfig(episodes=100, seed=seed), "gcrl", keep_models=True)
        candidates = [(res.models[i], res.alphabet) for i in SELECTION_EPISODES]
        sel = select_snapshot(candidates, "TL", seed=seed)
        model = sel.snapshot[0]
        gcrl = eval_grid(lambda: GCRLPolicy(model, res.alphabet, k=2), "TL", GRID_MAX, GRID_MAX,
                         GRID_BUDGET, seed, policy_id="gcrl")
        rnd = eval_grid("random", "TL", GRID_MAX, GRID_MAX, GRID_BUDGET, seed)
        out.append(dict(seed=seed, expansions=res.expansions, gcrl=gcrl.solved, random=rnd.solved,
                        chosen=list(SELECTION_EPISODES)[sel.index], seconds=time.perf_counter() - t0))
    return out


@pytest.mark.slow
def test_criterion_8_learning_trend(learning_runs):
    improved, details = 0, []
    for run in learning_runs:
        first, last = np.median(run["expansions"][:10]), np.median(run["expansions"][-10:])
        improved += last < first
        details.append(f"s{run['seed']}:{first:g}->{last:g}")
    report(8, "median expansions fall from the first to the last 10 episodes", improved >= 4,
           f"{improved}/5 seeds; " + " ".join(details))


@pytest.mark.slow
def test_criterion_9_generalization(learning_runs):
    wins, details = 0, []
    for run in learning_runs:
        wins += run["gcrl"] >= run["random"]
        details.append(f"s{run['seed']}:{run['gcrl']}vs{run['random']}")
    report(9, "selected GCRL solves at least as many TL instances as random", wins >= 4,
           f"{wins}/5 seeds; " + " ".join(details))


def test_criterion_10_format_stability(tmp_path):
    problems = []
    for path in sorted((GOLDEN / "models").glob("*.lts")):
        domain, n, k = path.stem.split("_")
        text = serialize_model(generate(domain, int(n), int(k)))
        if text.encode() != path.read_bytes():
            problems.append(f"{path.name} generation")
        if serialize_model(load_model(path)) != text or serialize_model(parse_model(text)) != text:
            problems.append(f"{path.name} round trip")

    model, doc = load_weights(GOLDEN / "gnn_weights.json")
    save_weights(model, tmp_path / "w.json", alphabet=doc["alphabet"], meta=doc["meta"])
    if (tmp_path / "w.json").read_bytes() != (GOLDEN / "gnn_weights.json").read_bytes():
        problems.append("weights round trip")

    golden_eval = GOLDEN / "eval_ra_TL_3x3.csv"
    records = read_eval_csv(golden_eval)
    write_eval_csv(records, tmp_path / "e.csv", golden_eval.read_text().splitlines()[0][2:])
    if (tmp_path / "e.csv").read_bytes() != golden_eval.read_bytes():
        problems.append("eval csv round trip")
    fresh = eval_grid("ra", "TL", 3, 3, budget=1000, seed=0)
    if [(r.n, r.k, r.solved, r.expansions) for r in fresh.records] != [(r.n, r.k, r.solved, r.expansions) for r in records]:
        problems.append("eval csv regeneration")

    golden_log = GOLDEN / "train_log_TL.csv"
    rows = read_train_log(golden_log)
    write_train_log(rows, tmp_path / "t.csv", golden_log.read_text().splitlines()[0][2:])
    if (tmp_path / "t.csv").read_bytes() != golden_log.read_bytes():
        problems.append("train log round trip")
    report(10, "models, weights and CSVs round-trip and match goldens", not problems, ", ".join(problems))
