"""Monolithic synthesis on the fully materialized product.

This is the reference the on-the-fly engine is checked against. It shares
no code with :mod:`dcsynth.engine` beyond successor enumeration.
"""

from __future__ import annotations

from collections import deque

from .engine import Director, Verdict
from .lts import CompositeModel, PlantState, compose_successors, is_marked, product_states


def winning_region(model: CompositeModel, max_states: int = 200_000):
    """Return ``(states, winning, choices)`` for the whole reachable product.

    ``winning`` is the set of plant states from which a nonblocking director
    exists; ``choices`` maps each of them to its designated label (or None).
    """
    states = product_states(model, max_states)
    succ: dict[PlantState, list[tuple[str, PlantState, bool]]] = {
        s: [(t.label, t.target, t.controllable) for t in compose_successors(model, s)]
        for s in states
    }
    marked = {s for s in states if is_marked(model, s)}
    alive = set(states)

    def usable(s: PlantState, label: str) -> bool:
        return all(t in alive for lab, t, _ in succ[s] if lab == label)

    while True:
        # (a) safety: every uncontrollable successor must survive
        changed = True
        while changed:
            changed = False
            for s in list(alive):
                if any(not c and t not in alive for _, t, c in succ[s]):
                    alive.discard(s)
                    changed = True
        # (b) nonblocking: a marked state must stay reachable
        dist = {s: 0 for s in states if s in alive and s in marked}
        frontier = list(dist)
        d = 0
        while frontier:
            d += 1
            nxt = []
            for s in states:
                if s not in alive or s in dist:
                    continue
                for lab, t, c in succ[s]:
                    if dist.get(t) == d - 1 and (not c or usable(s, lab)):
                        dist[s] = d
                        nxt.append(s)
                        break
            frontier = nxt
        dropped = alive - set(dist)
        if not dropped:
            break
        alive -= dropped

    choices: dict[PlantState, str | None] = {}
    for s in alive:
        if s in marked:
            choices[s] = None
            continue
        best = [
            (c, lab)
            for lab, t, c in succ[s]
            if dist.get(t) == dist[s] - 1 and (not c or usable(s, lab))
        ]
        choices[s] = None if any(not c for c, _ in best) else min(lab for _, lab in best)
    return states, alive, choices


def monolithic_oracle(model: CompositeModel, max_states: int = 200_000) -> Verdict:
    states, winning, choices = winning_region(model, max_states)
    realizable = model.initial in winning
    expansions = sum(len(compose_successors(model, s)) for s in states)
    return Verdict(
        realizable=realizable,
        decided=True,
        expansions=expansions,
        director=Director(choices) if realizable else None,
        policy="monolithic",
    )
