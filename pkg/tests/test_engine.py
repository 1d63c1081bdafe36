import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import GRID, brute_reachable, composite_models
from dcsynth.benchmarks import DOMAINS, generate
from dcsynth.engine import (
    LOSING,
    UNDECIDED,
    WINNING,
    ContractViolation,
    Director,
    ExplorationState,
    extract_director,
    run_dcs,
    validate_director,
)
from dcsynth.lts import CompositeModel, automaton
from dcsynth.oracle import monolithic_oracle, winning_region
from dcsynth.policies import BFSPolicy, DFSPolicy, RAPolicy, RandomPolicy

POLICIES = [RandomPolicy, BFSPolicy, DFSPolicy, RAPolicy]


def single(*args, **kw):
    return CompositeModel((automaton("A", *args, **kw),))


class Recorder:
    """Checks engine invariants before every expansion."""

    def __init__(self, oracle=None):
        self.oracle = oracle
        self.final: dict[int, int] = {}
        self.steps = 0

    def __call__(self, es, tid):
        self.check(es)
        assert tid in es.frontier
        self.steps += 1

    def check(self, es):
        assert list(es.frontier) == es.recomputed_frontier()
        assert es.expansions == len(es.history)
        for sid, status in enumerate(es.status):
            if sid in self.final:
                assert status == self.final[sid], "classification revoked"
            elif status != UNDECIDED:
                self.final[sid] = status
        for sid, (parent, tid) in es.parent.items():
            assert es.disc_index[parent] < es.disc_index[sid]
            assert es.t_dst[tid] == sid and es.t_src[tid] == parent
        if self.oracle is not None:
            winning = self.oracle
            for sid, status in enumerate(es.status):
                s = es.states[sid]
                if status == WINNING:
                    assert s in winning
                elif status == LOSING:
                    assert s not in winning


def test_start_initializes_frontier():
    es = ExplorationState(generate("AT", 1, 1))
    es.start()
    assert es.frontier and es.expansions == 0
    assert es.discovered[es.initial]


def test_unmarked_deadlock_is_losing():
    es = ExplorationState(single(["s"], []))
    es.start()
    assert es.initial_status == LOSING


def test_single_marked_state_is_winning():
    es = ExplorationState(single(["s"], [], marked=["s"]))
    es.start()
    assert es.initial_status == WINNING
    assert extract_director(es).choices == {(0,): None}


def test_chain_to_marked_sink_wins_after_one_expansion():
    m = single(["a", "b"], [("a", "go", "b")], marked=["b"], controllable=["go"])
    v = run_dcs(m, BFSPolicy())
    assert v.realizable and v.decided and v.expansions == 1
    assert v.director.choices == {(0,): "go", (1,): None}


def test_uncontrollable_edge_into_deadlock_propagates_losing():
    m = single(["s", "bad", "good"], [("s", "u", "bad"), ("s", "c", "good")], marked=["good"], controllable=["c"])
    es = ExplorationState(m)
    es.start()
    (tid,) = [t for t in es.frontier if es.t_label[t] == "u"]
    es.expand(tid)
    assert es.status[es.ids[(1,)]] == LOSING
    assert es.initial_status == LOSING


def test_uncontrollable_loop_without_marked_is_losing():
    m = single(["x", "y"], [("x", "u", "y"), ("y", "u", "x")])
    es = ExplorationState(m)
    es.start()
    while es.frontier:
        es.expand(next(iter(es.frontier)))
    assert es.status[0] == LOSING and es.status[1] == LOSING


def test_marked_initial_with_safe_inaction_maps_to_no_event():
    m = single(["s", "t"], [("s", "c", "t"), ("t", "c", "s")], marked=["s"], controllable=["c"])
    v = run_dcs(m, BFSPolicy())
    assert v.realizable
    assert v.director.choices[(0,)] is None


def test_expand_outside_frontier_is_contract_violation():
    es = ExplorationState(generate("AT", 1, 1))
    es.start()
    tid = next(iter(es.frontier))
    es.expand(tid)
    with pytest.raises(ContractViolation):
        es.expand(tid)


def test_budget_one_leaves_undecided():
    v = run_dcs(generate("TL", 2, 2), BFSPolicy(), budget=1)
    assert (v.decided, v.expansions) == (False, 1)
    assert v.director is None


def test_budget_must_be_positive():
    with pytest.raises(ContractViolation):
        run_dcs(generate("TL", 1, 1), BFSPolicy(), budget=0)


def test_full_discovery_frontier_plus_history_is_product():
    m = generate("DP", 1, 1)
    es = ExplorationState(m)
    es.start()
    # discover everything by expanding in BFS order, ignoring the decision
    while es.frontier:
        es.expand(next(iter(es.frontier)))
    _, edges = brute_reachable(m)
    got = {(es.states[es.t_src[t]], es.t_label[t], es.states[es.t_dst[t]]) for t in es.history}
    assert got == {(s, lab, t) for s, lab, t, _ in edges}


@pytest.mark.parametrize("domain", DOMAINS)
@pytest.mark.parametrize("n, k", GRID)
def test_invariants_and_soundness_along_runs(domain, n, k):
    m = generate(domain, n, k)
    _, winning, _ = winning_region(m)
    oracle = monolithic_oracle(m)
    for policy_cls in POLICIES:
        rec = Recorder(winning)
        v = run_dcs(m, policy_cls(), budget=100_000, seed=3, on_step=rec)
        assert v.realizable == oracle.realizable
        if v.realizable:
            assert validate_director(m, v.director) == []


def test_dp_1_1_random_policy_matches_oracle():
    m = generate("DP", 1, 1)
    for seed in range(10):
        assert run_dcs(m, RandomPolicy(), seed=seed).realizable == monolithic_oracle(m).realizable


@pytest.mark.parametrize("domain", DOMAINS)
def test_incremental_and_full_classification_agree(domain):
    m = generate(domain, 2, 2)
    for seed in range(3):
        trails = []
        for incremental in (True, False):
            statuses = []

            def hook(es, tid, statuses=statuses):
                statuses.append((tid, tuple(es.status), es.initial_status))

            v = run_dcs(m, RandomPolicy(), seed=seed, incremental=incremental, on_step=hook)
            trails.append((statuses, v.expansions, v.realizable, v.director))
        assert trails[0] == trails[1]


@settings(max_examples=120, deadline=None)
@given(composite_models(), st.integers(0, 2**31 - 1))
def test_random_models_agree_with_oracle(model, seed):
    _, winning, _ = winning_region(model)
    rec = Recorder(winning)
    v = run_dcs(model, RandomPolicy(), budget=100_000, seed=seed, on_step=rec)
    assert v.decided
    assert v.realizable == (model.initial in winning)
    if v.realizable:
        assert validate_director(model, v.director) == []


def test_validator_detects_bad_director():
    m = single(["a", "b", "c"], [("a", "go", "b"), ("a", "stop", "c")], marked=["b"], controllable=["go", "stop"])
    good = Director({(0,): "go", (1,): None})
    bad = Director({(0,): "stop", (2,): None})
    assert validate_director(m, good) == []
    assert validate_director(m, bad)
    assert validate_director(m, Director({(0,): "go"}))  # (1,) missing


def test_verdict_json_fields():
    v = run_dcs(generate("TL", 1, 1), RAPolicy(), seed=7, instance="TL(1,1)")
    doc = json.loads(v.dumps())
    assert set(doc) == {"realizable", "decided", "expansions", "seed", "policy", "instance"}
    assert doc["seed"] == 7 and doc["policy"] == "ra" and doc["instance"] == "TL(1,1)"


def test_runs_are_reproducible():
    m = generate("BW", 2, 2)
    a = run_dcs(m, RandomPolicy(), seed=11)
    b = run_dcs(m, RandomPolicy(), seed=11)
    assert a.dumps() == b.dumps() and a.director == b.director


def test_oracle_single_unmarked_deadlock():
    assert not monolithic_oracle(single(["s"], [])).realizable


def test_oracle_expansions_equal_product_transitions():
    m = generate("TL", 2, 1)
    assert monolithic_oracle(m).expansions == 64
