"""Parameterized benchmark families AT, BW, DP, TA and TL.

Every family is deterministic in ``(n, k)`` and uses the same base labels
for every size, so the normalized alphabet never changes within a family.
Error states that model a broken safety condition block every label of the
plant, which makes them true deadlocks of the composition.
"""

from __future__ import annotations

from dataclasses import dataclass

from .lts import Automaton, CompositeModel, automaton

DOMAINS = ("AT", "BW", "DP", "TA", "TL")


@dataclass(frozen=True)
class BenchmarkSpec:
    domain: str
    n: int
    k: int

    def __post_init__(self):
        if self.domain not in DOMAINS:
            raise ValueError(f"unknown domain {self.domain!r}; expected one of {DOMAINS}")
        if self.n < 1 or self.k < 1:
            raise ValueError(f"n and k must be >= 1, got ({self.n}, {self.k})")

    @property
    def instance(self) -> str:
        return f"{self.domain}({self.n},{self.k})"


class _Comp:
    """Mutable component under construction."""

    def __init__(self, name: str, initial: str, error: str | None = None):
        self.name = name
        self.states: list[str] = []
        self.trans: list[tuple[str, str, str]] = []
        self.marked: list[str] = []
        self.initial = initial
        self.error = error
        self.add_state(initial)
        if error is not None:
            self.add_state(error)

    def add_state(self, s: str) -> None:
        if s not in self.states:
            self.states.append(s)

    def t(self, src: str, label: str, dst: str) -> None:
        self.add_state(src)
        self.add_state(dst)
        self.trans.append((src, label, dst))

    def mark(self, *states: str) -> None:
        for s in states:
            self.add_state(s)
            self.marked.append(s)


def _finish(comps: list[_Comp], controllable: set[str]) -> CompositeModel:
    labels = {label for c in comps for _, label, _ in c.trans}
    autos: list[Automaton] = []
    for c in comps:
        trans = list(c.trans)
        if c.error is not None:
            # outside its own labels the component is transparent, except in
            # the error state where it blocks everything
            own = {label for _, label, _ in c.trans}
            for s in c.states:
                if s != c.error:
                    trans.extend((s, label, s) for label in sorted(labels - own))
        autos.append(
            automaton(
                c.name,
                c.states,
                trans,
                initial=c.initial,
                marked=c.marked,
                controllable=controllable,
            )
        )
    return CompositeModel(tuple(autos))


def transfer_line(n: int, k: int) -> CompositeModel:
    """n machines feeding n buffers of capacity k; k products must be shipped.

    Machine i takes a part from buffer i-1 (buffer 0 is an endless source) and
    later deposits it, uncontrollably, into buffer i. Overflowing a buffer is
    an error. ``ship`` drains the last buffer and advances the goal counter.
    """
    comps, ctrl = [], {"ship"}
    for i in range(1, n + 1):
        m = _Comp(f"M{i}", "idle")
        m.t("idle", f"take_{i}", "busy")
        m.t("busy", f"put_{i}", "idle")
        m.mark("idle")
        comps.append(m)
        ctrl.add(f"take_{i}")
    for i in range(1, n + 1):
        b = _Comp(f"B{i}", "b0", error="overflow")
        out = f"take_{i + 1}" if i < n else "ship"
        for j in range(k + 1):
            b.add_state(f"b{j}")
        for j in range(k + 1):
            b.t(f"b{j}", f"put_{i}", f"b{j + 1}" if j < k else "overflow")
            if j > 0:
                b.t(f"b{j}", out, f"b{j - 1}")
        b.mark("b0")
        comps.append(b)
    g = _Comp("G", "c0")
    for j in range(k):
        g.t(f"c{j}", "ship", f"c{j + 1}")
    g.mark(f"c{k}")
    comps.append(g)
    return _finish(comps, ctrl)


def dining_philosophers(n: int, k: int) -> CompositeModel:
    """n philosophers must each eat once, after k etiquette steps.

    Forks are exclusive; taking left forks all around the table deadlocks.
    A lone philosopher gets two forks of their own.
    """
    forks = max(n, 2)

    def right(i: int) -> int:
        return i % forks + 1 if n > 1 else 2

    comps, ctrl = [], set()
    for i in range(1, n + 1):
        p = _Comp(f"P{i}", "think")
        p.t("think", f"take_left_{i}", "left")
        p.t("left", f"take_right_{i}", "both0")
        for j in range(k):
            p.t(f"both{j}", f"step_{i}", f"both{j + 1}")
        p.t(f"both{k}", f"eat_{i}", "ate")
        p.t("ate", f"release_{i}", "done")
        p.mark("done")
        comps.append(p)
        ctrl |= {f"take_left_{i}", f"take_right_{i}", f"step_{i}", f"release_{i}"}
    for j in range(1, forks + 1):
        f = _Comp(f"F{j}", "free")
        if j <= n:
            f.t("free", f"take_left_{j}", "held_left")
            f.t("held_left", f"release_{j}", "free")
        for i in range(1, n + 1):
            if right(i) == j:
                f.t("free", f"take_right_{i}", "held_right")
                f.t("held_right", f"release_{i}", "free")
        f.mark("free")
        comps.append(f)
    return _finish(comps, ctrl)


def air_traffic(n: int, k: int) -> CompositeModel:
    """n planes request landing and are stacked over k altitude levels.

    A plane is assigned a level, descends level by level onto the runway and
    lands. Two planes on the same level (or runway) is an error.
    """
    comps, ctrl = [], set()
    for i in range(1, n + 1):
        p = _Comp(f"A{i}", "idle")
        p.t("idle", f"request_{i}", "wait")
        for h in range(1, k + 1):
            p.t("wait", f"assign_{i}.{h}", f"hold{h}")
            ctrl.add(f"assign_{i}.{h}")
        for h in range(k, 0, -1):
            p.t(f"hold{h}", f"descend_{i}.{h}", f"hold{h - 1}" if h > 1 else "runway")
            ctrl.add(f"descend_{i}.{h}")
        p.t("runway", f"land_{i}", "landed")
        p.mark("idle", "landed")
        comps.append(p)

    def monitor(name: str, enter: list[str], leave: list[str]) -> _Comp:
        m = _Comp(name, "free", error="collision")
        for label in enter:
            m.t("free", label, "occupied")
            m.t("occupied", label, "collision")
        for label in leave:
            m.t("occupied", label, "free")
        m.mark("free", "occupied")
        return m

    for h in range(1, k + 1):
        enter = [f"assign_{i}.{h}" for i in range(1, n + 1)]
        if h < k:
            enter += [f"descend_{i}.{h + 1}" for i in range(1, n + 1)]
        leave = [f"descend_{i}.{h}" for i in range(1, n + 1)]
        comps.append(monitor(f"L{h}", enter, leave))
    comps.append(
        monitor(
            "R",
            [f"descend_{i}.1" for i in range(1, n + 1)],
            [f"land_{i}" for i in range(1, n + 1)],
        )
    )
    return _finish(comps, ctrl)


def bidding_workflow(n: int, k: int) -> CompositeModel:
    """n documents pass k approval steps; each step has one reviewer.

    Routing a document to a busy reviewer is an error. A rejected document
    must be returned to its author.
    """
    comps, ctrl = [], set()
    for i in range(1, n + 1):
        d = _Comp(f"D{i}", "pending1")
        for j in range(1, k + 1):
            d.t(f"pending{j}", f"route_{i}.{j}", f"review{j}")
            d.t(f"review{j}", f"accept_{i}.{j}", f"pending{j + 1}" if j < k else "accepted")
            d.t(f"review{j}", f"reject_{i}.{j}", "rejected")
            ctrl.add(f"route_{i}.{j}")
        d.t("rejected", f"return_{i}", "returned")
        ctrl.add(f"return_{i}")
        d.mark("accepted", "returned")
        comps.append(d)
    for j in range(1, k + 1):
        v = _Comp(f"V{j}", "free", error="conflict")
        for i in range(1, n + 1):
            v.t("free", f"route_{i}.{j}", "busy")
            v.t("busy", f"route_{i}.{j}", "conflict")
            v.t("busy", f"accept_{i}.{j}", "free")
            v.t("busy", f"reject_{i}.{j}", "free")
        v.mark("free", "busy")
        comps.append(v)
    return _finish(comps, ctrl)


def travel_agency(n: int, k: int) -> CompositeModel:
    """A trip booked across n services, each queried k times, then reserved.

    Any query or reservation may come back unavailable. ``commit`` and
    ``cancel`` synchronize all services; committing while a service failed is
    an error, and the coordinator only allows cancelling after a failure.
    """
    comps, ctrl = [], {"commit", "cancel"}
    for i in range(1, n + 1):
        s = _Comp(f"S{i}", "query0", error="broken")
        for j in range(k):
            s.t(f"query{j}", f"query_{i}", f"wait{j}")
            s.t(f"wait{j}", f"avail_{i}", f"query{j + 1}")
            s.t(f"wait{j}", f"unavail_{i}", "failed")
        s.t(f"query{k}", f"reserve_{i}", "pending")
        s.t("pending", f"avail_{i}", "reserved")
        s.t("pending", f"unavail_{i}", "failed")
        s.t("reserved", "commit", "committed")
        s.t("failed", "commit", "broken")
        for j in range(k + 1):
            s.t(f"query{j}", "cancel", "cancelled")
        s.t("reserved", "cancel", "cancelled")
        s.t("failed", "cancel", "cancelled")
        s.mark("committed", "cancelled")
        comps.append(s)
        ctrl |= {f"query_{i}", f"reserve_{i}"}
    c = _Comp("C", "ok")
    for i in range(1, n + 1):
        c.t("ok", f"unavail_{i}", "failed")
        c.t("failed", f"unavail_{i}", "failed")
    c.t("ok", "commit", "closed")
    c.t("failed", "commit", "closed")
    c.t("failed", "cancel", "closed")
    c.mark("closed")
    comps.append(c)
    return _finish(comps, ctrl)


_GENERATORS = {
    "AT": air_traffic,
    "BW": bidding_workflow,
    "DP": dining_philosophers,
    "TA": travel_agency,
    "TL": transfer_line,
}


def generate_benchmark(spec: BenchmarkSpec) -> CompositeModel:
    return _GENERATORS[spec.domain](spec.n, spec.k)


def generate(domain: str, n: int, k: int) -> CompositeModel:
    return generate_benchmark(BenchmarkSpec(domain, n, k))
