"""On-the-fly directed controller synthesis.

The exploration state tracks the expanded history ``h``, the discovered
states and the frontier of unexpanded transitions leaving them. After each
expansion the explored region is classified:

* Losing (final): a state with an expanded uncontrollable transition into a
  Losing state, or an unmarked state that cannot reach a marked state, an
  unexpanded transition or an undiscovered state through expanded,
  non-Losing transitions. Deadlocks and exhausted choices are special cases.
* Winning (final): the greatest set of states whose uncontrollable
  transitions are all expanded and stay inside the set, and from which a
  marked state of the set is reachable using uncontrollable transitions plus
  fully expanded controllable labels that stay inside the set.

Only expanded transitions count as knowledge. Unexpanded ones are treated
pessimistically for Winning and optimistically for Losing, so every verdict
made on a prefix agrees with the verdict on the full plant.
"""

from __future__ import annotations

import json
import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Protocol

import numpy as np

from .lts import CompositeModel, PlantState, PlantTransition, compose_successors, is_marked

log = logging.getLogger(__name__)

UNDECIDED, WINNING, LOSING = 0, 1, 2


class ContractViolation(RuntimeError):
    """A caller broke an operation's precondition."""


class DirectorError(RuntimeError):
    """An extracted director failed closed-loop validation."""


class Policy(Protocol):
    name: str

    def select(self, es: "ExplorationState", rng: np.random.Generator) -> int: ...


class ExplorationState:
    """Mutable working set of one synthesis run.

    States are interned to dense ids on first sight (including frontier
    targets that are not discovered yet); transitions get dense ids in the
    order they are enumerated, which is also the canonical frontier order.
    """

    def __init__(self, model: CompositeModel, *, incremental: bool = True):
        self.model = model
        self.incremental = incremental
        # states
        self.states: list[PlantState] = []
        self.ids: dict[PlantState, int] = {}
        self.marked: list[bool] = []
        self.discovered: list[bool] = []
        self.disc_index: list[int] = []
        self.discovery_order: list[int] = []
        self.out: list[list[int]] = []
        self.in_expanded: list[list[int]] = []
        self.unexpanded: list[int] = []
        self.unexpanded_unc: list[int] = []
        self.has_unc: list[bool] = []
        self.status: list[int] = []
        self.parent: dict[int, tuple[int, int]] = {}
        self.choice: dict[int, str | None] = {}
        # transitions
        self.t_src: list[int] = []
        self.t_label: list[str] = []
        self.t_dst: list[int] = []
        self.t_ctrl: list[bool] = []
        self.expanded: list[bool] = []
        self.history: list[int] = []
        self.frontier: dict[int, None] = {}
        # global phase flags
        self.marked_found = False
        self.any_winning = False
        self.any_losing = False
        self.last_expanded: int | None = None
        self.last_discovered: int | None = None
        self.initial = self.intern(model.initial)

    # -- bookkeeping ---------------------------------------------------

    def intern(self, s: PlantState) -> int:
        sid = self.ids.get(s)
        if sid is None:
            sid = len(self.states)
            self.ids[s] = sid
            self.states.append(s)
            self.marked.append(is_marked(self.model, s))
            self.discovered.append(False)
            self.disc_index.append(-1)
            self.out.append([])
            self.in_expanded.append([])
            self.unexpanded.append(0)
            self.unexpanded_unc.append(0)
            self.has_unc.append(False)
            self.status.append(UNDECIDED)
        return sid

    @property
    def num_states(self) -> int:
        return len(self.states)

    @property
    def num_transitions(self) -> int:
        return len(self.t_src)

    @property
    def expansions(self) -> int:
        return len(self.history)

    def transition(self, tid: int) -> PlantTransition:
        return PlantTransition(
            self.states[self.t_src[tid]],
            self.t_label[tid],
            self.states[self.t_dst[tid]],
            self.t_ctrl[tid],
        )

    @property
    def initial_status(self) -> int:
        return self.status[self.initial]

    @property
    def decided(self) -> bool:
        return self.status[self.initial] != UNDECIDED

    # -- exploration ---------------------------------------------------

    def start(self) -> None:
        """Discover the initial state and classify."""
        if self.discovered[self.initial]:
            raise ContractViolation("exploration already started")
        self.discover(self.initial)
        self.last_discovered = self.initial
        self.classify_pass()

    def discover(self, sid: int) -> None:
        if self.discovered[sid]:
            raise ContractViolation(f"state {self.states[sid]} already discovered")
        self.discovered[sid] = True
        self.disc_index[sid] = len(self.discovery_order)
        self.discovery_order.append(sid)
        if self.marked[sid]:
            self.marked_found = True
        for t in compose_successors(self.model, self.states[sid]):
            tid = len(self.t_src)
            dst = self.intern(t.target)
            self.t_src.append(sid)
            self.t_label.append(t.label)
            self.t_dst.append(dst)
            self.t_ctrl.append(t.controllable)
            self.expanded.append(False)
            self.out[sid].append(tid)
            self.frontier[tid] = None
            self.unexpanded[sid] += 1
            if not t.controllable:
                self.unexpanded_unc[sid] += 1
                self.has_unc[sid] = True

    def expand(self, tid: int) -> None:
        if tid not in self.frontier:
            raise ContractViolation(f"transition {tid} is not in the frontier")
        del self.frontier[tid]
        self.expanded[tid] = True
        self.history.append(tid)
        src, dst = self.t_src[tid], self.t_dst[tid]
        self.unexpanded[src] -= 1
        if not self.t_ctrl[tid]:
            self.unexpanded_unc[src] -= 1
        self.in_expanded[dst].append(tid)
        self.last_expanded = tid
        new = not self.discovered[dst]
        if new:
            self.parent[dst] = (src, tid)
            self.discover(dst)
            self.last_discovered = dst
        else:
            self.last_discovered = None
        if self.incremental:
            self._classify_after(tid, new)
        else:
            self.classify_pass()

    # -- classification ------------------------------------------------

    def classify_pass(self) -> None:
        """Recompute both fixpoints over the whole explored region."""
        self._losing_fixpoint(list(self.discovery_order))
        self._winning_fixpoint()

    def _classify_after(self, tid: int, new: bool) -> None:
        # Only run the fixpoints that this expansion can possibly change.
        src, dst = self.t_src[tid], self.t_dst[tid]
        losing_possible = (
            self.unexpanded[src] == 0
            or (new and self.unexpanded[dst] == 0 and not self.marked[dst])
            or self.status[dst] == LOSING
        )
        if losing_possible:
            self._losing_fixpoint(list(self.discovery_order))
        winning_possible = self.marked_found and (
            (self.unexpanded_unc[src] == 0 and self.status[src] == UNDECIDED)
            or (new and self.marked[dst] and self.unexpanded_unc[dst] == 0)
        )
        if winning_possible:
            self._winning_fixpoint()

    def _label_safe(self, sid: int, label: str) -> bool:
        """No expanded ``label`` transition of ``sid`` leads into a Losing state."""
        for t in self.out[sid]:
            if self.t_label[t] == label and self.expanded[t] and self.status[self.t_dst[t]] == LOSING:
                return False
        return True

    def _set_losing(self, sid: int) -> None:
        self.status[sid] = LOSING
        self.any_losing = True

    def _losing_fixpoint(self, region: list[int]) -> None:
        status = self.status
        queue = deque(s for s in region if status[s] == LOSING)
        while True:
            # uncontrollable contagion
            while queue:
                s = queue.popleft()
                for t in self.in_expanded[s]:
                    src = self.t_src[t]
                    if not self.t_ctrl[t] and status[src] != LOSING:
                        self._set_losing(src)
                        queue.append(src)
            # dead regions: nothing hopeful is reachable
            alive = [False] * len(self.states)
            work = deque()
            for s in region:
                if status[s] != LOSING and (self.marked[s] or self.unexpanded[s] > 0):
                    alive[s] = True
                    work.append(s)
            while work:
                s = work.popleft()
                for t in self.in_expanded[s]:
                    src = self.t_src[t]
                    if alive[src] or status[src] == LOSING:
                        continue
                    if self.t_ctrl[t] and not self._label_safe(src, self.t_label[t]):
                        continue
                    alive[src] = True
                    work.append(src)
            for s in region:
                if status[s] != LOSING and not alive[s]:
                    self._set_losing(s)
                    queue.append(s)
            if not queue:
                return

    def _winning_fixpoint(self) -> None:
        status = self.status
        t_src, t_dst, t_ctrl, t_label = self.t_src, self.t_dst, self.t_ctrl, self.t_label
        cand = [False] * len(self.states)
        members = []
        for s in self.discovery_order:
            if status[s] != LOSING and self.unexpanded_unc[s] == 0:
                cand[s] = True
                members.append(s)
        while True:
            # uncontrollable transitions must stay inside
            queue = deque()
            for s in members:
                if cand[s] and any(not t_ctrl[t] and not cand[t_dst[t]] for t in self.out[s]):
                    cand[s] = False
                    queue.append(s)
            while queue:
                s = queue.popleft()
                for t in self.in_expanded[s]:
                    src = t_src[t]
                    if cand[src] and not t_ctrl[t]:
                        cand[src] = False
                        queue.append(src)
            members = [s for s in members if cand[s]]
            dist = self._reach_marked(members, cand)
            removed = [s for s in members if s not in dist]
            if not removed:
                break
            for s in removed:
                cand[s] = False
            members = [s for s in members if cand[s]]
        for s in members:
            if status[s] == UNDECIDED:
                status[s] = WINNING
                self.any_winning = True
                self.choice[s] = self._designate(s, dist, cand)

    def _usable_label(self, s: int, label: str, cand: list[bool]) -> bool:
        for t in self.out[s]:
            if self.t_label[t] == label and (not self.expanded[t] or not cand[self.t_dst[t]]):
                return False
        return True

    def _reach_marked(self, members: list[int], cand: list[bool]) -> dict[int, int]:
        dist: dict[int, int] = {}
        work = deque()
        for s in members:
            if self.marked[s]:
                dist[s] = 0
                work.append(s)
        while work:
            s = work.popleft()
            for t in self.in_expanded[s]:
                src = self.t_src[t]
                if not cand[src] or src in dist:
                    continue
                if self.t_ctrl[t] and not self._usable_label(src, self.t_label[t], cand):
                    continue
                dist[src] = dist[s] + 1
                work.append(src)
        return dist

    def _designate(self, s: int, dist: dict[int, int], cand: list[bool]) -> str | None:
        if self.marked[s]:
            return None
        want = dist[s] - 1
        labels = []
        for t in self.out[s]:
            if not self.expanded[t] or dist.get(self.t_dst[t]) != want:
                continue
            if not self.t_ctrl[t]:
                return None
            if self._usable_label(s, self.t_label[t], cand):
                labels.append(self.t_label[t])
        return min(labels)

    # -- consistency checks used by tests ------------------------------

    def recomputed_frontier(self) -> list[int]:
        return [t for s in self.discovery_order for t in self.out[s] if not self.expanded[t]]


@dataclass
class Director:
    """Map from winning plant states to at most one enabled controllable label."""

    choices: dict[PlantState, str | None] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.choices)


@dataclass
class Verdict:
    realizable: bool
    decided: bool
    expansions: int
    director: Director | None = None
    seed: int | None = None
    policy: str | None = None
    instance: str | None = None

    def to_json(self) -> dict:
        return {
            "realizable": self.realizable,
            "decided": self.decided,
            "expansions": self.expansions,
            "seed": self.seed,
            "policy": self.policy,
            "instance": self.instance,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)


def extract_director(es: ExplorationState) -> Director:
    if es.initial_status != WINNING:
        raise ContractViolation("initial state is not winning")
    director = Director({es.states[s]: c for s, c in es.choice.items()})
    problems = validate_director(es.model, director)
    if problems:
        raise DirectorError("; ".join(problems[:5]))
    return director


def validate_director(model: CompositeModel, director: Director, limit: int = 10) -> list[str]:
    """Check the closed loop of ``director`` on the real plant.

    Returns a list of problems: states reached outside the director's
    domain, unmarked deadlocks, and states that cannot reach a marked state.
    """
    init = model.initial
    problems: list[str] = []
    if init not in director.choices:
        return [f"initial state {init} has no director entry"]
    succ: dict[PlantState, list[PlantState]] = {}
    queue = deque([init])
    seen = {init}
    while queue:
        s = queue.popleft()
        choice = director.choices.get(s, ...)
        if choice is ...:
            problems.append(f"closed loop reaches {s} outside the director")
            succ[s] = []
            continue
        enabled = [
            t.target
            for t in compose_successors(model, s)
            if not t.controllable or t.label == choice
        ]
        if choice is not None and not any(
            t.label == choice for t in compose_successors(model, s)
        ):
            problems.append(f"director enables {choice!r} at {s} where it is not enabled")
        succ[s] = enabled
        if not enabled and not is_marked(model, s):
            problems.append(f"unmarked deadlock at {s}")
        for t in enabled:
            if t not in seen:
                seen.add(t)
                queue.append(t)
        if len(problems) >= limit:
            return problems
    pred: dict[PlantState, list[PlantState]] = {s: [] for s in seen}
    for s, targets in succ.items():
        for t in targets:
            pred[t].append(s)
    good = {s for s in seen if is_marked(model, s)}
    work = deque(good)
    while work:
        s = work.popleft()
        for p in pred[s]:
            if p not in good:
                good.add(p)
                work.append(p)
    for s in sorted(seen - good)[: max(0, limit - len(problems))]:
        problems.append(f"no marked state reachable from {s} in closed loop")
    return problems


def run_dcs(
    model: CompositeModel,
    policy: Policy,
    budget: int = 5000,
    seed: int = 0,
    *,
    instance: str | None = None,
    incremental: bool = True,
    on_step: Callable[[ExplorationState, int], None] | None = None,
    extract: bool = True,
) -> Verdict:
    """Explore until the initial state is decided or ``budget`` expansions are spent."""
    if budget < 1:
        raise ContractViolation("budget must be >= 1")
    rng = np.random.default_rng(seed)
    es = ExplorationState(model, incremental=incremental)
    es.start()
    while not es.decided and es.frontier and es.expansions < budget:
        tid = policy.select(es, rng)
        if on_step is not None:
            on_step(es, tid)
        es.expand(tid)
    if not es.decided and not es.frontier:
        raise RuntimeError("exploration exhausted without deciding the initial state")
    realizable = es.initial_status == WINNING
    director = extract_director(es) if realizable and extract else None
    return Verdict(
        realizable=realizable,
        decided=es.decided,
        expansions=es.expansions,
        director=director,
        seed=seed,
        policy=getattr(policy, "name", type(policy).__name__),
        instance=instance,
    )
