"""Text format for composite models.

The grammar is documented in ``docs/model-format.md``. Example::

    controllable: take_1;
    component M1 {
      states: idle busy;
      init: idle;
      marked: idle;
      trans: idle -take_1-> busy; busy -put_1-> idle;
    }
    compose: M1;
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .lts import Automaton, CompositeModel, ModelError

FORMAT_HEADER = "# dcsynth model v1"

_TOKEN = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<nl>\n)
  | (?P<comment>\#[^\n]*)
  | (?P<arrow>-(?P<label>[A-Za-z0-9_.]+)->)
  | (?P<bar>\|\|)
  | (?P<punct>[{};:])
  | (?P<name>[A-Za-z0-9_.]+)
    """,
    re.VERBOSE,
)

_CLAUSES = {"states", "marked", "init", "trans", "controllable", "alphabet"}


class ParseError(ModelError):
    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"line {line}, column {col}: {message}")
        self.line = line
        self.col = col


@dataclass
class _Tok:
    kind: str
    text: str
    line: int
    col: int


def _tokenize(text: str) -> list[_Tok]:
    toks: list[_Tok] = []
    line, line_start, pos = 1, 0, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        col = pos - line_start + 1
        if kind == "label":
            kind = "arrow"
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind == "arrow":
            toks.append(_Tok("arrow", m.group("label"), line, col))
        elif kind not in ("ws", "comment"):
            toks.append(_Tok(kind, m.group(kind), line, col))
        pos = m.end()
    toks.append(_Tok("eof", "", line, pos - line_start + 1))
    return toks


@dataclass
class _ComponentDecl:
    name: str
    line: int
    col: int
    states: list[str] | None = None
    marked: list[str] | None = None
    init: str | None = None
    trans: list[tuple[str, str, str, int, int]] | None = None
    controllable: list[str] | None = None
    alphabet: list[str] | None = None


class _Parser:
    def __init__(self, text: str):
        self.toks = _tokenize(text)
        self.i = 0

    def peek(self) -> _Tok:
        return self.toks[self.i]

    def next(self) -> _Tok:
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def expect(self, kind: str, text: str | None = None) -> _Tok:
        tok = self.next()
        if tok.kind != kind or (text is not None and tok.text != text):
            want = text or kind
            got = tok.text or tok.kind
            raise ParseError(f"expected {want!r}, found {got!r}", tok.line, tok.col)
        return tok

    def names_until_semicolon(self) -> list[str]:
        out = []
        while self.peek().kind == "name":
            out.append(self.next().text)
        self.expect("punct", ";")
        return out

    def parse(self):
        components: dict[str, _ComponentDecl] = {}
        controllable: list[tuple[str, _Tok]] = []
        compose: list[tuple[str, _Tok]] | None = None
        while self.peek().kind != "eof":
            tok = self.expect("name")
            if tok.text == "component":
                decl = self.component()
                if decl.name in components:
                    raise ParseError(f"duplicate component {decl.name!r}", decl.line, decl.col)
                components[decl.name] = decl
            elif tok.text == "controllable":
                self.expect("punct", ":")
                while self.peek().kind == "name":
                    t = self.next()
                    controllable.append((t.text, t))
                self.expect("punct", ";")
            elif tok.text == "compose":
                if compose is not None:
                    raise ParseError("duplicate compose directive", tok.line, tok.col)
                self.expect("punct", ":")
                compose = [(self.expect("name").text, self.toks[self.i - 1])]
                while self.peek().kind == "bar":
                    self.next()
                    t = self.expect("name")
                    compose.append((t.text, t))
                self.expect("punct", ";")
            else:
                raise ParseError(f"unexpected {tok.text!r}", tok.line, tok.col)
        if compose is None:
            tok = self.peek()
            raise ParseError("missing compose directive", tok.line, tok.col)
        return components, controllable, compose

    def component(self) -> _ComponentDecl:
        name = self.expect("name")
        decl = _ComponentDecl(name.text, name.line, name.col)
        self.expect("punct", "{")
        while not (self.peek().kind == "punct" and self.peek().text == "}"):
            key = self.expect("name")
            if key.text not in _CLAUSES:
                raise ParseError(f"unknown clause {key.text!r}", key.line, key.col)
            if getattr(decl, key.text) is not None:
                raise ParseError(f"duplicate clause {key.text!r}", key.line, key.col)
            self.expect("punct", ":")
            if key.text == "init":
                decl.init = self.expect("name").text
                self.expect("punct", ";")
            elif key.text == "trans":
                decl.trans = self.transitions()
            else:
                setattr(decl, key.text, self.names_until_semicolon())
        self.expect("punct", "}")
        return decl

    def transitions(self) -> list[tuple[str, str, str, int, int]]:
        out = []
        # a transition list ends at the next clause keyword or the closing brace
        while self.peek().kind == "name" and not (
            self.peek().text in _CLAUSES and self.toks[self.i + 1].text == ":"
        ):
            src = self.next()
            arrow = self.expect("arrow")
            dst = self.expect("name")
            self.expect("punct", ";")
            out.append((src.text, arrow.text, dst.text, src.line, src.col))
        return out


def _build_component(decl: _ComponentDecl, global_ctrl: set[str]) -> Automaton:
    if decl.states is None:
        raise ParseError(f"component {decl.name!r} has no states clause", decl.line, decl.col)
    index: dict[str, int] = {}
    for s in decl.states:
        if s in index:
            raise ParseError(f"duplicate state {s!r} in {decl.name!r}", decl.line, decl.col)
        index[s] = len(index)
    if not index:
        raise ParseError(f"component {decl.name!r} has no states", decl.line, decl.col)

    def resolve(s: str, line: int, col: int) -> int:
        if s not in index:
            raise ParseError(f"dangling state reference {s!r} in {decl.name!r}", line, col)
        return index[s]

    init = resolve(decl.init, decl.line, decl.col) if decl.init is not None else 0
    marked = frozenset(resolve(s, decl.line, decl.col) for s in decl.marked or ())
    trans = set()
    labels = set()
    for src, label, dst, line, col in decl.trans or ():
        trans.add((resolve(src, line, col), label, resolve(dst, line, col)))
        labels.add(label)
    labels |= set(decl.alphabet or ())
    ctrl = labels & global_ctrl
    if decl.controllable is not None:
        declared = set(decl.controllable)
        unknown = declared - labels
        if unknown:
            raise ParseError(
                f"unknown label {sorted(unknown)[0]!r} in controllable clause of {decl.name!r}",
                decl.line,
                decl.col,
            )
        if declared != ctrl:
            bad = sorted(declared ^ ctrl)[0]
            raise ParseError(
                f"inconsistent controllability of {bad!r} in {decl.name!r}", decl.line, decl.col
            )
    return Automaton(
        name=decl.name,
        state_names=tuple(decl.states),
        alphabet=frozenset(labels),
        controllable=frozenset(ctrl),
        transitions=frozenset(trans),
        initial=init,
        marked=marked,
    )


def parse_model(text: str) -> CompositeModel:
    """Parse a model document into a :class:`CompositeModel`."""
    components, controllable, compose = _Parser(text).parse()
    global_ctrl = {label for label, _ in controllable}
    autos = []
    for name, tok in compose:
        if name not in components:
            raise ParseError(f"unknown component {name!r} in compose", tok.line, tok.col)
        autos.append(_build_component(components[name], global_ctrl))
    alphabet = set().union(*(a.alphabet for a in autos))
    for label, tok in controllable:
        if label not in alphabet:
            raise ParseError(f"unknown label {label!r} declared controllable", tok.line, tok.col)
    return CompositeModel(tuple(autos))


def serialize_model(model: CompositeModel) -> str:
    """Canonical text: states in id order, transitions sorted, labels sorted."""
    lines = [FORMAT_HEADER]
    ctrl = sorted(model.controllable)
    lines.append("controllable: " + " ".join(ctrl) + ";" if ctrl else "controllable: ;")
    for comp in model.components:
        names = comp.state_names
        lines.append("")
        lines.append(f"component {comp.name} {{")
        lines.append("  states: " + " ".join(names) + ";")
        lines.append(f"  init: {names[comp.initial]};")
        marked = " ".join(names[s] for s in sorted(comp.marked))
        lines.append(f"  marked: {marked};" if marked else "  marked: ;")
        used = {label for _, label, _ in comp.transitions}
        extra = sorted(comp.alphabet - used)
        if extra:
            lines.append("  alphabet: " + " ".join(extra) + ";")
        lines.append("  trans:")
        for src, label, dst in sorted(comp.transitions):
            lines.append(f"    {names[src]} -{label}-> {names[dst]};")
        lines.append("}")
    lines.append("")
    lines.append("compose: " + " || ".join(c.name for c in model.components) + ";")
    return "\n".join(lines) + "\n"


def load_model(path) -> CompositeModel:
    with open(path, encoding="utf-8") as fh:
        return parse_model(fh.read())


def save_model(model: CompositeModel, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(serialize_model(model))
