"""Component automata and the lazily composed plant.

A plant is the synchronous product of an ordered list of automata. Labels
shared between components synchronize, private labels interleave. Nothing
is materialized up front: :func:`compose_successors` enumerates the enabled
transitions of one product state on demand.
"""

from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

PlantState = tuple[int, ...]


class ModelError(ValueError):
    """Raised for structurally invalid automata or compositions."""


class StateSpaceTooLarge(RuntimeError):
    """Raised when an explicit construction exceeds its state budget."""

    def __init__(self, limit: int):
        super().__init__(f"reachable product exceeds {limit} states (too large)")
        self.limit = limit


@dataclass(frozen=True)
class Automaton:
    """A single discrete-event system with dense integer states.

    ``state_names`` only matters for serialization; identity is by id.
    """

    name: str
    state_names: tuple[str, ...]
    alphabet: frozenset[str]
    controllable: frozenset[str]
    transitions: frozenset[tuple[int, str, int]]
    initial: int
    marked: frozenset[int]
    _out: dict = field(default=None, init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        n = len(self.state_names)
        if n == 0:
            raise ModelError(f"{self.name}: automaton has no states")
        if len(set(self.state_names)) != n:
            raise ModelError(f"{self.name}: duplicate state names")
        if not 0 <= self.initial < n:
            raise ModelError(f"{self.name}: initial state {self.initial} out of range")
        if not self.controllable <= self.alphabet:
            extra = sorted(self.controllable - self.alphabet)
            raise ModelError(f"{self.name}: controllable labels outside alphabet: {extra}")
        for s in self.marked:
            if not 0 <= s < n:
                raise ModelError(f"{self.name}: marked state {s} out of range")
        out: dict[int, dict[str, list[int]]] = {s: {} for s in range(n)}
        for src, label, dst in sorted(self.transitions):
            if label not in self.alphabet:
                raise ModelError(f"{self.name}: label {label!r} not in alphabet")
            if not (0 <= src < n and 0 <= dst < n):
                raise ModelError(f"{self.name}: transition {src}-{label}->{dst} out of range")
            out[src].setdefault(label, []).append(dst)
        object.__setattr__(self, "_out", out)

    @property
    def num_states(self) -> int:
        return len(self.state_names)

    @property
    def uncontrollable(self) -> frozenset[str]:
        return self.alphabet - self.controllable

    def enabled(self, state: int) -> dict[str, list[int]]:
        """Outgoing transitions of ``state`` as ``label -> sorted targets``."""
        return self._out[state]

    def state_id(self, name: str) -> int:
        return self.state_names.index(name)


class PlantTransition(NamedTuple):
    source: PlantState
    label: str
    target: PlantState
    controllable: bool


@dataclass(frozen=True)
class CompositeModel:
    components: tuple[Automaton, ...]
    _participants: dict = field(default=None, init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        if not self.components:
            raise ModelError("composition needs at least one component")
        names = [c.name for c in self.components]
        if len(set(names)) != len(names):
            raise ModelError("duplicate component names in composition")
        ctrl: dict[str, str] = {}
        unctrl: dict[str, str] = {}
        for comp in self.components:
            for label in comp.controllable:
                ctrl.setdefault(label, comp.name)
            for label in comp.uncontrollable:
                unctrl.setdefault(label, comp.name)
        clash = sorted(set(ctrl) & set(unctrl))
        if clash:
            label = clash[0]
            raise ModelError(
                f"inconsistent controllability: {label!r} is controllable in "
                f"{ctrl[label]} but uncontrollable in {unctrl[label]}"
            )
        participants: dict[str, tuple[int, ...]] = {}
        for i, comp in enumerate(self.components):
            for label in comp.alphabet:
                participants.setdefault(label, ())
                participants[label] += (i,)
        object.__setattr__(self, "_participants", participants)

    @property
    def alphabet(self) -> frozenset[str]:
        return frozenset(self._participants)

    @property
    def controllable(self) -> frozenset[str]:
        return frozenset().union(*(c.controllable for c in self.components))

    @property
    def uncontrollable(self) -> frozenset[str]:
        return self.alphabet - self.controllable

    @property
    def initial(self) -> PlantState:
        return tuple(c.initial for c in self.components)

    def participants(self, label: str) -> tuple[int, ...]:
        return self._participants[label]

    def check_state(self, s: PlantState) -> None:
        if len(s) != len(self.components):
            raise ModelError(
                f"plant state arity {len(s)} does not match {len(self.components)} components"
            )
        for comp, local in zip(self.components, s):
            if not 0 <= local < comp.num_states:
                raise ModelError(f"local state {local} invalid for component {comp.name}")


def compose_successors(model: CompositeModel, s: PlantState) -> list[PlantTransition]:
    """Enabled transitions of the synchronous product at ``s``.

    A label fires iff every component that knows it can take it; only those
    components move. Nondeterministic components contribute every target
    combination. The result is sorted by label, then by target tuple.
    """
    model.check_state(s)
    comps = model.components
    candidates: set[str] = set()
    for comp, local in zip(comps, s):
        candidates.update(comp.enabled(local))
    ctrl = model.controllable
    result: list[PlantTransition] = []
    for label in sorted(candidates):
        parts = model.participants(label)
        choices = []
        for i in parts:
            targets = comps[i].enabled(s[i]).get(label)
            if not targets:
                break
            choices.append(targets)
        else:
            is_ctrl = label in ctrl
            targets = []
            for combo in itertools.product(*choices):
                t = list(s)
                for i, local in zip(parts, combo):
                    t[i] = local
                targets.append(tuple(t))
            for t in sorted(set(targets)):
                result.append(PlantTransition(s, label, t, is_ctrl))
    return result


def is_marked(model: CompositeModel, s: PlantState) -> bool:
    model.check_state(s)
    return all(local in comp.marked for comp, local in zip(model.components, s))


def explicit_product(model: CompositeModel, max_states: int = 200_000) -> Automaton:
    """Materialize the reachable product as one automaton.

    States are numbered in breadth-first discovery order from the initial
    state; names encode the component tuple as ``p<i>_<j>_...``.
    """
    init = model.initial
    ids: dict[PlantState, int] = {init: 0}
    order: list[PlantState] = [init]
    transitions: set[tuple[int, str, int]] = set()
    queue = deque([init])
    while queue:
        s = queue.popleft()
        for t in compose_successors(model, s):
            if t.target not in ids:
                if len(ids) >= max_states:
                    raise StateSpaceTooLarge(max_states)
                ids[t.target] = len(order)
                order.append(t.target)
                queue.append(t.target)
            transitions.add((ids[s], t.label, ids[t.target]))
    names = tuple("p" + "_".join(map(str, s)) for s in order)
    marked = frozenset(i for i, s in enumerate(order) if is_marked(model, s))
    return Automaton(
        name="product",
        state_names=names,
        alphabet=model.alphabet,
        controllable=model.controllable,
        transitions=frozenset(transitions),
        initial=0,
        marked=marked,
    )


def product_states(model: CompositeModel, max_states: int = 200_000) -> list[PlantState]:
    """Reachable plant states in the same order :func:`explicit_product` numbers them."""
    init = model.initial
    seen = {init}
    order = [init]
    queue = deque([init])
    while queue:
        s = queue.popleft()
        for t in compose_successors(model, s):
            if t.target not in seen:
                if len(seen) >= max_states:
                    raise StateSpaceTooLarge(max_states)
                seen.add(t.target)
                order.append(t.target)
                queue.append(t.target)
    return order


def automaton(
    name: str,
    states: Iterable[str],
    transitions: Iterable[tuple[str, str, str]],
    *,
    initial: str | None = None,
    marked: Iterable[str] = (),
    controllable: Iterable[str] = (),
    alphabet: Iterable[str] | None = None,
) -> Automaton:
    """Build an :class:`Automaton` from state names; handy in tests and generators."""
    names = tuple(states)
    index = {s: i for i, s in enumerate(names)}
    trans = []
    for src, label, dst in transitions:
        for s in (src, dst):
            if s not in index:
                raise ModelError(f"{name}: unknown state {s!r}")
        trans.append((index[src], label, index[dst]))
    labels = {label for _, label, _ in trans}
    if alphabet is not None:
        labels |= set(alphabet)
    init = names[0] if initial is None else initial
    if init not in index:
        raise ModelError(f"{name}: unknown initial state {init!r}")
    for m in marked:
        if m not in index:
            raise ModelError(f"{name}: unknown marked state {m!r}")
    return Automaton(
        name=name,
        state_names=names,
        alphabet=frozenset(labels),
        controllable=frozenset(controllable) & frozenset(labels),
        transitions=frozenset(trans),
        initial=index[init],
        marked=frozenset(index[m] for m in marked),
    )
