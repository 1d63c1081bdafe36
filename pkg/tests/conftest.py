import itertools

import pytest
from hypothesis import strategies as st

from dcsynth.lts import CompositeModel, automaton

LABELS = ("a", "b", "c", "d", "u", "v")
CONTROLLABLE = frozenset({"a", "b", "c", "d"})

GRID = [(n, k) for n in (1, 2) for k in (1, 2)]


@st.composite
def components(draw, name):
    n = draw(st.integers(1, 4))
    states = [f"s{i}" for i in range(n)]
    labels = draw(st.lists(st.sampled_from(LABELS), min_size=1, max_size=4, unique=True))
    cells = [(s, lab, t) for s in range(n) for lab in labels for t in range(n)]
    trans = draw(st.lists(st.sampled_from(cells), max_size=8, unique=True))
    marked = draw(st.lists(st.integers(0, n - 1), max_size=n, unique=True))
    return automaton(
        name,
        states,
        [(states[s], lab, states[t]) for s, lab, t in trans],
        initial=states[0],
        marked=[states[m] for m in marked],
        controllable=CONTROLLABLE,
        alphabet=labels,
    )


@st.composite
def composite_models(draw, max_components=3):
    count = draw(st.integers(1, max_components))
    return CompositeModel(tuple(draw(components(f"C{i}")) for i in range(count)))


def brute_successors(model, s):
    """Synchronous product step straight from the definition."""
    out = []
    for label in sorted(model.alphabet):
        choices = []
        for comp, local in zip(model.components, s):
            if label in comp.alphabet:
                targets = sorted(t for (src, lab, t) in comp.transitions if src == local and lab == label)
                choices.append(targets)
            else:
                choices.append([local])
        for target in itertools.product(*choices):
            out.append((s, label, tuple(target), label in model.controllable))
    return sorted(out, key=lambda t: (t[1], t[2]))


def brute_reachable(model):
    seen = {model.initial}
    stack = [model.initial]
    edges = []
    while stack:
        s = stack.pop()
        for t in brute_successors(model, s):
            edges.append(t)
            if t[2] not in seen:
                seen.add(t[2])
                stack.append(t[2])
    return seen, edges


@pytest.fixture
def rng():
    import numpy as np

    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    from helpers import ACCEPTANCE_LINES

    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
