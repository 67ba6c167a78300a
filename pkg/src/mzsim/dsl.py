"""Plain-text experiment description language.

One directive per line, `#` starts a comment, blank lines are ignored:

    source A [excited]            initial direction (A = x, B = y)
    beamsplitter                  50/50 beam splitter
    mirrors                       the mirror pair
    phase <A|B> <number|param>    extra phase on one arm (e.g. 0.5pi, phi)
    wwreadout                     projective which-way readout
    entangler                     which-way entangler (adds photon + atom)
    eraser <open|closed> [eta=v]  quantum eraser channel (adds eraser atom)
    detect                        terminal detectors (must be last)

Numbers are decimals with an optional exponent and an optional `pi` suffix
meaning multiplication by pi.  An identifier in a number position names a
parameter that must be bound at compile time; a file may use at most one.

Validation rules: the file starts with exactly one source directive;
detect is required, once, as the final stage; entangler appears at most
once; eraser requires an entangler earlier in the file; wwreadout and
entangler are mutually exclusive.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Mapping

from . import components, experiment, hilbert
from .hilbert import space_of

DIRECTIVE_KEYWORDS = ("source", "beamsplitter", "mirrors", "phase",
                      "wwreadout", "entangler", "eraser", "detect")
KEYWORDS = DIRECTIVE_KEYWORDS + ("open", "closed", "excited")

_NUMBER_RE = re.compile(r"-?\d+(?:\.\d+)?(?:[eE][+-]?\d+)?")
_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")


class ParseError(Exception):
    """Lexical, syntactic, or semantic problem at a source position."""

    def __init__(self, line: int, col: int, message: str, category: str):
        super().__init__(f"{line}:{col}: {category} error: {message}")
        self.line = line
        self.col = col
        self.message = message
        self.category = category


def _lexical(line, col, msg):
    return ParseError(line, col, msg, "lexical")


def _syntactic(line, col, msg):
    return ParseError(line, col, msg, "syntactic")


def _semantic(line, col, msg):
    return ParseError(line, col, msg, "semantic")


@dataclass(frozen=True)
class Token:
    kind: str            # "keyword" | "ident" | "number" | "symbol"
    text: str
    line: int
    col: int
    value: float | None = field(default=None)


def tokenize(src: str) -> list[Token]:
    """Lex the full source; comments and blank lines produce no tokens."""
    tokens: list[Token] = []
    for line_no, line in enumerate(src.splitlines(), start=1):
        pos = 0
        while pos < len(line):
            ch = line[pos]
            if ch == "#":
                break
            if ch in " \t\r":
                pos += 1
                continue
            col = pos + 1
            if ch == "=":
                tokens.append(Token("symbol", "=", line_no, col))
                pos += 1
                continue
            m = _NUMBER_RE.match(line, pos)
            if m and (ch.isdigit() or (ch == "-" and m.end() > pos + 1)):
                pos = m.end()
                text = m.group()
                value = float(text)
                if line.startswith("pi", pos):
                    value *= math.pi
                    text += "pi"
                    pos += 2
                if pos < len(line) and (line[pos].isalnum() or line[pos] == "_"):
                    raise _lexical(line_no, pos + 1, f"invalid number {text + line[pos]!r}...")
                if not math.isfinite(value):
                    raise _lexical(line_no, col, f"number {text!r} out of range")
                tokens.append(Token("number", text, line_no, col, value))
                continue
            m = _IDENT_RE.match(line, pos)
            if m:
                text = m.group()
                kind = "keyword" if text in KEYWORDS else "ident"
                tokens.append(Token(kind, text, line_no, col))
                pos = m.end()
                continue
            raise _lexical(line_no, col, f"stray character {ch!r}")
    return tokens


# --- AST -------------------------------------------------------------------

@dataclass(frozen=True)
class SourceDecl:
    label: str           # "A" | "B"
    excited: bool
    line: int = field(compare=False, default=0)


@dataclass(frozen=True)
class BeamSplitterStage:
    line: int = field(compare=False, default=0)


@dataclass(frozen=True)
class MirrorsStage:
    line: int = field(compare=False, default=0)


@dataclass(frozen=True)
class PhaseStage:
    path: str            # "A" | "B"
    value: float | None
    param: str | None
    line: int = field(compare=False, default=0)


@dataclass(frozen=True)
class WwReadoutStage:
    line: int = field(compare=False, default=0)


@dataclass(frozen=True)
class EntanglerStage:
    line: int = field(compare=False, default=0)


@dataclass(frozen=True)
class EraserStage:
    open: bool
    eta_value: float | None = None
    eta_param: str | None = None
    line: int = field(compare=False, default=0)


@dataclass(frozen=True)
class DetectStage:
    line: int = field(compare=False, default=0)


Directive = (SourceDecl | BeamSplitterStage | MirrorsStage | PhaseStage |
             WwReadoutStage | EntanglerStage | EraserStage | DetectStage)


@dataclass(frozen=True)
class ExperimentAst:
    directives: tuple[Directive, ...]
    end_line: int = field(compare=False, default=1)

    @property
    def free_parameters(self) -> tuple[str, ...]:
        names: list[str] = []
        for d in self.directives:
            cand = d.param if isinstance(d, PhaseStage) else \
                d.eta_param if isinstance(d, EraserStage) else None
            if cand is not None and cand not in names:
                names.append(cand)
        return tuple(names)

    @property
    def uses_entangler(self) -> bool:
        return any(isinstance(d, EntanglerStage) for d in self.directives)

    @property
    def uses_eraser(self) -> bool:
        return any(isinstance(d, EraserStage) for d in self.directives)


def _group_lines(tokens: list[Token]) -> list[list[Token]]:
    lines: list[list[Token]] = []
    for tok in tokens:
        if lines and lines[-1][0].line == tok.line:
            lines[-1].append(tok)
        else:
            lines.append([tok])
    return lines


class _LineParser:
    def __init__(self, toks: list[Token]):
        self.toks = toks
        self.pos = 0

    def peek(self) -> Token | None:
        return self.toks[self.pos] if self.pos < len(self.toks) else None

    def take(self, what: str) -> Token:
        tok = self.peek()
        if tok is None:
            last = self.toks[-1]
            raise _syntactic(last.line, last.col + len(last.text), f"expected {what}")
        self.pos += 1
        return tok

    def done(self):
        tok = self.peek()
        if tok is not None:
            raise _syntactic(tok.line, tok.col, f"unexpected {tok.text!r} at end of directive")

    def dirlabel(self) -> Token:
        tok = self.take("path label A or B")
        if tok.text not in ("A", "B"):
            raise _syntactic(tok.line, tok.col, f"expected path label A or B, got {tok.text!r}")
        return tok

    def number_or_param(self, what: str) -> Token:
        tok = self.take(what)
        if tok.kind not in ("number", "ident"):
            raise _syntactic(tok.line, tok.col, f"expected {what}, got {tok.text!r}")
        return tok


def parse(tokens: list[Token]) -> ExperimentAst:
    """Token list to AST; raises on the first syntactic error."""
    directives: list[Directive] = []
    end_line = 1
    for toks in _group_lines(tokens):
        head = toks[0]
        end_line = head.line
        p = _LineParser(toks)
        p.take("directive")
        if head.kind != "keyword" or head.text not in DIRECTIVE_KEYWORDS:
            raise _syntactic(head.line, head.col, f"unknown directive {head.text!r}")

        if head.text == "source":
            label = p.dirlabel()
            excited = False
            nxt = p.peek()
            if nxt is not None and nxt.text == "excited":
                p.take("excited")
                excited = True
            p.done()
            directives.append(SourceDecl(label.text, excited, line=head.line))
        elif head.text == "phase":
            label = p.dirlabel()
            arg = p.number_or_param("phase value or parameter name")
            p.done()
            if arg.kind == "number":
                directives.append(PhaseStage(label.text, arg.value, None, line=head.line))
            else:
                directives.append(PhaseStage(label.text, None, arg.text, line=head.line))
        elif head.text == "eraser":
            mode = p.take("open or closed")
            if mode.text not in ("open", "closed"):
                raise _syntactic(mode.line, mode.col,
                                 f"expected open or closed, got {mode.text!r}")
            eta_value, eta_param = None, None
            if p.peek() is not None:
                name = p.take("eta setting")
                if name.text != "eta":
                    raise _syntactic(name.line, name.col,
                                     f"expected eta=..., got {name.text!r}")
                eq = p.take("'='")
                if eq.text != "=":
                    raise _syntactic(eq.line, eq.col, "expected '=' after eta")
                arg = p.number_or_param("eta value or parameter name")
                if arg.kind == "number":
                    eta_value = arg.value
                else:
                    eta_param = arg.text
            p.done()
            directives.append(EraserStage(mode.text == "open", eta_value,
                                          eta_param, line=head.line))
        else:
            p.done()
            simple = {"beamsplitter": BeamSplitterStage, "mirrors": MirrorsStage,
                      "wwreadout": WwReadoutStage, "entangler": EntanglerStage,
                      "detect": DetectStage}
            directives.append(simple[head.text](line=head.line))
    return ExperimentAst(tuple(directives), end_line=max(end_line, 1))


def validate(ast: ExperimentAst) -> list[ParseError]:
    """All semantic rule violations, in file order where possible."""
    problems: list[ParseError] = []
    directives = ast.directives

    sources = [d for d in directives if isinstance(d, SourceDecl)]
    if not sources:
        problems.append(_semantic(1, 1, "source directive required"))
    else:
        if not isinstance(directives[0], SourceDecl):
            problems.append(_semantic(directives[0].line, 1,
                                      "file must start with the source directive"))
        for extra in sources[1:]:
            problems.append(_semantic(extra.line, 1, "duplicate source directive"))

    detects = [i for i, d in enumerate(directives) if isinstance(d, DetectStage)]
    if not detects:
        problems.append(_semantic(ast.end_line, 1, "detect required as final stage"))
    else:
        for d in directives[detects[0] + 1:]:
            problems.append(_semantic(d.line, 1, "no directives allowed after detect"))

    entangler_lines = [d.line for d in directives if isinstance(d, EntanglerStage)]
    for line in entangler_lines[1:]:
        problems.append(_semantic(line, 1, "entangler may appear at most once"))

    ww = [d for d in directives if isinstance(d, WwReadoutStage)]
    if ww and entangler_lines:
        line = max(ww[0].line, entangler_lines[0])
        problems.append(_semantic(line, 1, "wwreadout and entangler are mutually exclusive"))

    seen_entangler = False
    for d in directives:
        if isinstance(d, EntanglerStage):
            seen_entangler = True
        if isinstance(d, EraserStage) and not seen_entangler:
            problems.append(_semantic(d.line, 1,
                                      "eraser requires photon register (add entangler first)"))
        if isinstance(d, EraserStage) and d.eta_value is not None \
                and not 0.0 < d.eta_value <= 1.0:
            problems.append(_semantic(d.line, 1,
                                      f"eta must lie in (0, 1], got {d.eta_value!r}"))

    seen_params: set[str] = set()
    for d in directives:
        cand = d.param if isinstance(d, PhaseStage) else \
            d.eta_param if isinstance(d, EraserStage) else None
        if cand is None:
            continue
        if cand == "pi":
            problems.append(_semantic(d.line, 1, "'pi' cannot be used as a parameter name"))
        if cand not in seen_params and seen_params:
            problems.append(_semantic(d.line, 1,
                                      "at most one free parameter allowed "
                                      f"(already have {sorted(seen_params)[0]!r})"))
        seen_params.add(cand)
    return problems


def parse_text(src: str) -> ExperimentAst:
    """Tokenize, parse, and validate; raises the first error found."""
    ast = parse(tokenize(src))
    problems = validate(ast)
    if problems:
        raise problems[0]
    return ast


def _fmt_number(value: float) -> str:
    return repr(value)


def pretty_print(ast: ExperimentAst) -> str:
    """Canonical text form; reparsing it yields a structurally equal AST."""
    lines = []
    for d in ast.directives:
        if isinstance(d, SourceDecl):
            lines.append(f"source {d.label} excited" if d.excited else f"source {d.label}")
        elif isinstance(d, BeamSplitterStage):
            lines.append("beamsplitter")
        elif isinstance(d, MirrorsStage):
            lines.append("mirrors")
        elif isinstance(d, PhaseStage):
            arg = d.param if d.param is not None else _fmt_number(d.value)
            lines.append(f"phase {d.path} {arg}")
        elif isinstance(d, WwReadoutStage):
            lines.append("wwreadout")
        elif isinstance(d, EntanglerStage):
            lines.append("entangler")
        elif isinstance(d, EraserStage):
            text = "eraser open" if d.open else "eraser closed"
            if d.eta_param is not None:
                text += f" eta={d.eta_param}"
            elif d.eta_value is not None:
                text += f" eta={_fmt_number(d.eta_value)}"
            lines.append(text)
        elif isinstance(d, DetectStage):
            lines.append("detect")
    return "\n".join(lines) + "\n"


_PATH_TO_DIRECTION = {"A": "x", "B": "y"}


def compile(ast: ExperimentAst, bindings: Mapping[str, float] | None = None
            ) -> experiment.Pipeline:
    """Build the pipeline an AST describes.

    `bindings` must assign a finite value to every free parameter; unknown
    binding names are rejected.
    """
    bindings = dict(bindings or {})
    problems = validate(ast)
    if problems:
        raise problems[0]
    unknown = set(bindings) - set(ast.free_parameters)
    if unknown:
        raise _semantic(1, 1, f"unknown parameter binding(s) {sorted(unknown)}")

    def resolve(value, param, line, what) -> float:
        if param is not None:
            if param not in bindings:
                raise _semantic(line, 1, f"unbound parameter {param!r}")
            value = bindings[param]
        if not math.isfinite(value):
            raise _semantic(line, 1, f"{what} must be finite, got {value!r}")
        return float(value)

    subsystems = [hilbert.direction()]
    if ast.uses_entangler:
        subsystems += [hilbert.photon(), hilbert.atom()]
    if ast.uses_eraser:
        subsystems.append(hilbert.eraser())
    space = space_of(*subsystems)

    source = next(d for d in ast.directives if isinstance(d, SourceDecl))
    labels = {"direction": _PATH_TO_DIRECTION[source.label]}
    if ast.uses_entangler:
        labels["photon"] = "vac"
        labels["atom"] = "e"
    if ast.uses_eraser:
        labels["eraser"] = "gamma"
    initial = space.basis_state(labels)

    stages: list[experiment.Stage] = []
    ww_count = abs_count = 0
    for d in ast.directives:
        if isinstance(d, SourceDecl):
            continue
        if isinstance(d, BeamSplitterStage):
            stages.append(experiment.unitary_on(components.beam_splitter()))
        elif isinstance(d, MirrorsStage):
            stages.append(experiment.unitary_on(components.mirror_pair()))
        elif isinstance(d, PhaseStage):
            phi = resolve(d.value, d.param, d.line, "phase")
            path = _PATH_TO_DIRECTION[d.path]
            stages.append(experiment.unitary_on(components.phase_shifter(phi, path)))
        elif isinstance(d, WwReadoutStage):
            ww_count += 1
            key = "ww" if ww_count == 1 else f"ww{ww_count}"
            stages.append(experiment.ProjectiveMeasure(
                "direction", key, {"x": "A", "y": "B"}))
        elif isinstance(d, EntanglerStage):
            stages.append(experiment.unitary_on(components.which_way_entangler()))
        elif isinstance(d, EraserStage):
            if not d.open:
                continue  # closed channel: the eraser atom idles in gamma
            eta = resolve(d.eta_value if d.eta_value is not None else 1.0,
                          d.eta_param, d.line, "eta")
            try:
                kraus = components.eraser_kraus(eta)
            except ValueError as exc:
                raise _semantic(d.line, 1, str(exc)) from None
            abs_count += 1
            key = "abs" if abs_count == 1 else f"abs{abs_count}"
            stages.append(experiment.GeneralizedMeasure(
                kraus, ("photon", "eraser"), key))
        elif isinstance(d, DetectStage):
            stages.append(experiment.Detect())
    return experiment.Pipeline(space, initial, tuple(stages))


def sweep_template(ast: ExperimentAst, parameter: str):
    """Pipeline builder binding the AST's single free parameter."""
    free = ast.free_parameters
    if parameter not in free:
        raise _semantic(1, 1, f"parameter {parameter!r} is not a free parameter "
                              f"of this file (free: {list(free) or 'none'})")
    return lambda value: compile(ast, {parameter: value})
