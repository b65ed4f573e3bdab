"""Text format for membrane systems (``.psys``).

Example::

    system comparator
    mode maximal
    structure [h0 [h1] [h2]]
    contents h0: a^5 b^3
    rule R1 @h0: a b -> a@h1 b@h1
    rule R2 @h0 if not (has b): a -> b@h2

Line kinds: ``system``, ``mode``, ``seed``, ``structure``, ``contents``,
``rule``.  ``#`` starts a comment.  Symbols are a letter followed by
optional digits, so ``abbbac`` reads as six objects and ``c0a`` as two.
Every error is a :class:`DslError` carrying a 1-based line and column.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .core import (LABEL_RE, MAX_MULTIPLICITY, SYMBOL_RE, Membrane, Multiset,
                   MultisetError, StructureError, format_structure, parse_structure)
from .engine import MAXIMAL, Configuration, Mode
from .rules import (ALWAYS, HERE, IN, OUT, Always, And, CloneKind, CloneRule, Guard,
                    HasSymbol, InChild, Not, NotWrapped, Rule, RuleError, RewriteRule,
                    SlotEmpty, SlotNonempty, Target)


class DslError(ValueError):
    def __init__(self, message: str, line: int, col: int, hint: str | None = None):
        self.message = message
        self.line = line
        self.col = col
        self.hint = hint
        text = f"line {line}, col {col}: {message}"
        if hint:
            text += f" (hint: {hint})"
        super().__init__(text)


@dataclass
class SystemSpec:
    name: str
    mode: Mode
    structure: Membrane
    contents: dict[str, Multiset] = field(default_factory=dict)
    rules: tuple[Rule, ...] = ()
    seed: int | None = None

    def labels(self) -> list[str]:
        return [n.label for n in self.structure.walk()]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SystemSpec):
            return NotImplemented
        mine = {k: v for k, v in self.contents.items() if v}
        theirs = {k: v for k, v in other.contents.items() if v}
        return (self.name == other.name and self.mode == other.mode
                and format_structure(self.structure) == format_structure(other.structure)
                and mine == theirs and tuple(self.rules) == tuple(other.rules)
                and self.seed == other.seed)

    def build(self, seed: int | None = None, check_maximal: bool = False) -> Configuration:
        """Fresh configuration; ``seed`` overrides the spec's own seed."""
        def copy(node: Membrane) -> Membrane:
            out = Membrane(node.label, self.contents.get(node.label))
            for c in node.children:
                out.add_child(copy(c))
            return out

        if seed is None:
            seed = self.seed if self.seed is not None else 0
        return Configuration(copy(self.structure), self.rules, seed=seed,
                             check_maximal=check_maximal)


# ------------------------------------------------------------------ lexer

_TOKEN_RE = re.compile(r"""
    (?P<ws>[ \t]+)
  | (?P<arrow>->)
  | (?P<int>-?[0-9]+)
  | (?P<word>[A-Za-z_][A-Za-z0-9_]*(?:-[A-Za-z_][A-Za-z0-9_]*)*)
  | (?P<punct>[@:^()\[\]])
""", re.X)

MAX_PRODUCTS = 4096

_NAME_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_.\-]*")
_SYMBOLS_RE = re.compile(r"(?:[A-Za-z][0-9]*)+")
_CLONE_WORDS = {k.value: k for k in CloneKind}
_GUARD_WORDS = "not-wrapped, slot-empty, slot-nonempty, has, not (...), and"
_RESERVED_TARGETS = {"here": HERE, "out": OUT, "in": IN}


@dataclass
class _Tok:
    kind: str
    text: str
    col: int


class _Line:
    def __init__(self, text: str, lineno: int):
        self.text = text
        self.lineno = lineno
        self.toks: list[_Tok] = []
        self.refs: list[tuple[str, _Tok]] = []
        pos = 0
        while pos < len(text):
            m = _TOKEN_RE.match(text, pos)
            if m is None:
                if text[pos] in "=<>-":
                    raise DslError(f"malformed arrow at {text[pos]!r}", lineno, pos + 1,
                                   "rules are written lhs -> rhs")
                raise DslError(f"unexpected character {text[pos]!r}", lineno, pos + 1)
            if m.lastgroup != "ws":
                self.toks.append(_Tok(m.lastgroup, m.group(), pos + 1))
            pos = m.end()
        self.i = 0

    def error(self, message: str, tok: _Tok | None = None, hint: str | None = None) -> DslError:
        col = tok.col if tok is not None else len(self.text.rstrip()) + 1
        return DslError(message, self.lineno, col, hint)

    def peek(self) -> _Tok | None:
        return self.toks[self.i] if self.i < len(self.toks) else None

    def next(self, what: str) -> _Tok:
        tok = self.peek()
        if tok is None:
            raise self.error(f"unexpected end of line, expected {what}")
        self.i += 1
        return tok

    def at(self, kind: str, text: str | None = None) -> bool:
        tok = self.peek()
        return tok is not None and tok.kind == kind and (text is None or tok.text == text)

    def expect(self, kind: str, text: str | None = None, what: str | None = None,
               hint: str | None = None) -> _Tok:
        tok = self.next(what or repr(text or kind))
        if tok.kind != kind or (text is not None and tok.text != text):
            raise self.error(f"expected {what or repr(text or kind)}, found {tok.text!r}", tok, hint)
        return tok

    def done(self) -> bool:
        return self.i >= len(self.toks)

    def end(self) -> None:
        tok = self.peek()
        if tok is not None:
            raise self.error(f"unexpected {tok.text!r}", tok)

    def label(self, what: str = "label") -> _Tok:
        tok = self.expect("word", what=what)
        if LABEL_RE.fullmatch(tok.text) is None:
            raise self.error(f"invalid {what} {tok.text!r}", tok,
                             "labels are letters, digits and underscores")
        return tok


# -------------------------------------------------------------- multisets

def _symbols_of(line: _Line, tok: _Tok) -> list[str]:
    if tok.kind != "word" or _SYMBOLS_RE.fullmatch(tok.text) is None:
        raise line.error(f"invalid symbol {tok.text!r}", tok,
                         "a symbol is one letter followed by optional digits")
    return SYMBOL_RE.findall(tok.text)


def _exponent(line: _Line, syms: list[str], word: _Tok) -> int:
    if not line.at("punct", "^"):
        return 1
    caret = line.next("'^'")
    if len(syms) != 1:
        raise line.error(f"exponent after a multi-symbol word {word.text!r}", caret,
                         f"write {' '.join(syms[:-1])} {syms[-1]}^n")
    tok = line.expect("int", what="multiplicity")
    n = int(tok.text)
    if n < 1:
        raise line.error(f"multiplicity must be at least 1, got {n}", tok,
                         "omit symbols with multiplicity zero")
    if n > MAX_MULTIPLICITY:
        raise line.error(f"multiplicity {n} exceeds {MAX_MULTIPLICITY}", tok)
    return n


def _multiset_until(line: _Line, stop: str | None = None) -> Multiset:
    counts: dict[str, int] = {}
    while not line.done() and not (stop and line.at("arrow", stop)):
        word = line.next("symbol")
        syms = _symbols_of(line, word)
        n = _exponent(line, syms, word)
        for s in syms:
            counts[s] = counts.get(s, 0) + n
            if counts[s] > MAX_MULTIPLICITY:
                raise line.error(f"multiplicity of {s} exceeds {MAX_MULTIPLICITY}", word)
    return Multiset(counts)


def parse_multiset(text: str) -> Multiset:
    """``"a^2 b^3"`` or ``"abbbac"``; repeated symbols add up."""
    line = _Line(text, 1)
    return _multiset_until(line)


# ----------------------------------------------------------------- guards

def _guard(line: _Line) -> Guard:
    parts = [_guard_atom(line)]
    while line.at("word", "and"):
        line.next("and")
        parts.append(_guard_atom(line))
    return parts[0] if len(parts) == 1 else And(tuple(parts))


def _guard_atom(line: _Line) -> Guard:
    tok = line.next("guard")
    if tok.kind == "punct" and tok.text == "(":
        inner = _guard(line)
        line.expect("punct", ")", "')'")
        return inner
    if tok.kind != "word":
        raise line.error(f"expected a guard, found {tok.text!r}", tok, f"guards: {_GUARD_WORDS}")
    word = tok.text
    if word == "not":
        line.expect("punct", "(", "'(' after not", hint="write not (<guard>)")
        inner = _guard(line)
        line.expect("punct", ")", "')'")
        return Not(inner)
    if word == "has":
        sym = line.expect("word", what="symbol")
        if SYMBOL_RE.fullmatch(sym.text) is None:
            raise line.error(f"invalid symbol {sym.text!r}", sym)
        return HasSymbol(sym.text)
    if word in ("slot-empty", "slot-nonempty"):
        lab = line.label()
        line.refs.append((lab.text, lab))
        return SlotEmpty(lab.text) if word == "slot-empty" else SlotNonempty(lab.text)
    if word == "not-wrapped":
        if line.at("word") and LABEL_RE.fullmatch(line.peek().text) and line.peek().text != "and":
            lab = line.label()
            return NotWrapped(lab.text)
        # label filled in from the rule body
        return NotWrapped("")
    if word == "always":
        return ALWAYS
    raise line.error(f"unknown guard {word!r}", tok, f"guards: {_GUARD_WORDS}")


def _fill_wrapper(guard: Guard, wrapper: str | None, line: _Line, tok: _Tok) -> Guard:
    if isinstance(guard, NotWrapped) and guard.wrapper == "":
        if wrapper is None:
            raise line.error("not-wrapped needs a label here", tok,
                             "write not-wrapped <label>, or use it on a wrap/clone-out rule")
        return NotWrapped(wrapper)
    if isinstance(guard, Not):
        return Not(_fill_wrapper(guard.inner, wrapper, line, tok))
    if isinstance(guard, And):
        return And(tuple(_fill_wrapper(g, wrapper, line, tok) for g in guard.parts))
    return guard


# ------------------------------------------------------------------ rules

def _target(line: _Line) -> Target:
    tok = line.expect("word", what="target after '@'",
                      hint="targets are @here, @out, @in or @<label>")
    if tok.text in _RESERVED_TARGETS:
        return _RESERVED_TARGETS[tok.text]
    if LABEL_RE.fullmatch(tok.text) is None:
        raise line.error(f"invalid target {tok.text!r}", tok)
    line.refs.append((tok.text, tok))
    return InChild(tok.text)


def _rule(line: _Line) -> Rule:
    rid = line.expect("word", what="rule id")
    if LABEL_RE.fullmatch(rid.text) is None:
        raise line.error(f"invalid rule id {rid.text!r}", rid)
    line.expect("punct", "@", "'@' before the rule's membrane label",
                hint="rule <id> @<label>: ...")
    scope = line.label()
    line.refs.append((scope.text, scope))
    guard: Guard = ALWAYS
    guard_tok = None
    if line.at("word", "if"):
        guard_tok = line.next("if")
        guard = _guard(line)
    line.expect("punct", ":", "':' before the rule body")
    body_start = line.i
    has_arrow = any(t.kind == "arrow" for t in line.toks[line.i:])
    if not has_arrow:
        head = line.peek()
        if head is None or head.kind != "word" or head.text not in _CLONE_WORDS:
            bad = next((t for t in line.toks[body_start:] if t.text in ("-", "=", ">", "=>")), head)
            raise line.error("malformed rule body: missing '->'", bad,
                             "write <lhs> -> <products>, or a clone-out/clone-side/clone-in/wrap body")
        return _clone_rule(line, rid.text, scope.text, guard, guard_tok)

    lhs = _multiset_until(line, stop="->")
    arrow = line.expect("arrow", what="'->'")
    if not lhs:
        raise line.error("empty left-hand side", arrow)
    rhs: list[tuple[str, Target]] = []
    while not line.done():
        word = line.next("product")
        if word.kind == "arrow":
            raise line.error("malformed arrow: second '->'", word)
        syms = _symbols_of(line, word)
        n = _exponent(line, syms, word)
        target: Target = HERE
        if line.at("punct", "@"):
            line.next("@")
            target = _target(line)
        if len(rhs) + n * len(syms) > MAX_PRODUCTS:
            raise line.error(f"more than {MAX_PRODUCTS} products in one rule", word)
        for s in syms:
            rhs.extend([(s, target)] * n)
    if guard_tok is not None:
        guard = _fill_wrapper(guard, None, line, guard_tok)
    return RewriteRule(rid.text, scope.text, lhs, tuple(rhs), guard)


def _clone_rule(line: _Line, rid: str, scope: str, guard: Guard, guard_tok) -> CloneRule:
    kw = line.next("clone kind")
    kind = _CLONE_WORDS[kw.text]
    new = line.label("new label")
    line.refs.append((new.text, new))
    slot = None
    if kind is CloneKind.WRAP:
        slot_tok = line.label("slot label")
        line.refs.append((slot_tok.text, slot_tok))
        slot = slot_tok.text
    trigger = Multiset()
    if line.at("word", "using"):
        line.next("using")
        trigger = _multiset_until(line)
        if not trigger:
            raise line.error("'using' needs at least one symbol")
    line.end()
    if guard_tok is not None:
        wrapper = new.text if kind in (CloneKind.WRAP, CloneKind.OUT) else None
        guard = _fill_wrapper(guard, wrapper, line, guard_tok)
    return CloneRule(rid, scope, kind, new.text, slot, guard, trigger)


# ----------------------------------------------------------------- system

def parse_system(text: str) -> SystemSpec:
    name = None
    mode = None
    seed = None
    structure = None
    structure_line = 0
    contents: dict[str, Multiset] = {}
    content_refs: list[tuple[str, _Tok, int]] = []
    rules: list[Rule] = []
    rule_ids: dict[str, int] = {}
    refs: list[tuple[str, _Tok, int]] = []
    created: set[str] = set()

    for lineno, raw in enumerate(text.replace("\r\n", "\n").replace("\r", "\n").split("\n"), 1):
        body = raw.split("#", 1)[0].rstrip()
        if not body.strip():
            continue
        try:
            line = _Line(body, lineno)
            key = line.next("keyword")
            if key.kind != "word":
                raise line.error(f"expected a keyword, found {key.text!r}", key,
                                 "lines start with system, mode, seed, structure, contents or rule")
            kw = key.text
            if kw == "system":
                if name is not None:
                    raise line.error("duplicate system line", key)
                tok = line.next("system name")
                rest = body[tok.col - 1:].strip()
                if _NAME_RE.fullmatch(rest) is None:
                    raise line.error(f"invalid system name {rest!r}", tok)
                name = rest
            elif kw == "mode":
                if mode is not None:
                    raise line.error("duplicate mode line", key)
                first = line.next("mode")
                try:
                    mode = Mode.parse(body[first.col - 1:])
                except ValueError as exc:
                    raise line.error(str(exc), first,
                                     "sequential, minimal, bounded <k> or maximal") from None
            elif kw == "seed":
                if seed is not None:
                    raise line.error("duplicate seed line", key)
                tok = line.expect("int", what="seed")
                seed = int(tok.text)
                if seed < 0:
                    raise line.error("seed must be non-negative", tok)
                line.end()
            elif kw == "structure":
                if structure is not None:
                    raise line.error("duplicate structure line", key)
                start = key.col + len(kw) - 1
                try:
                    structure = parse_structure(body[start:], offset=start)
                except StructureError as exc:
                    col = (exc.position or 0) + 1
                    raise DslError(str(exc), lineno, col,
                                   "structure looks like [h0 [h1] [h2]]") from None
                structure_line = lineno
                seen: dict[str, int] = {}
                for node in structure.walk():
                    if node.label in seen:
                        raise DslError(f"duplicate label {node.label!r} in structure",
                                       lineno, start + 1, "labels must be unique at parse time")
                    seen[node.label] = 1
            elif kw == "contents":
                lab = line.label()
                line.expect("punct", ":", "':' after the label", hint="contents <label>: a^2 b")
                ms = _multiset_until(line)
                content_refs.append((lab.text, lab, lineno))
                try:
                    contents[lab.text] = contents.get(lab.text, Multiset()) + ms
                except MultisetError as exc:
                    raise line.error(str(exc), lab) from None
            elif kw == "rule":
                rule = _rule(line)
                if rule.id in rule_ids:
                    raise DslError(f"duplicate rule id {rule.id!r}", lineno, key.col + 5,
                                   f"first defined on line {rule_ids[rule.id]}")
                rule_ids[rule.id] = lineno
                rules.append(rule)
                if isinstance(rule, CloneRule):
                    created.add(rule.new_label)
                    if rule.slot_label:
                        created.add(rule.slot_label)
                refs.extend((lab, tok, lineno) for lab, tok in line.refs)
            else:
                raise line.error(f"unknown keyword {kw!r}", key,
                                 "lines start with system, mode, seed, structure, contents or rule")
        except DslError:
            raise
        except (MultisetError, RuleError, StructureError, ValueError) as exc:
            raise DslError(str(exc), lineno, 1) from None
        except RecursionError:
            raise DslError("nesting too deep", lineno, 1) from None

    if structure is None:
        last = text.count("\n") + 1
        raise DslError("missing structure line", last, 1, "add: structure [h0 [h1] [h2]]")
    known = {n.label for n in structure.walk()}
    for lab, tok, lineno in content_refs:
        if lab not in known:
            raise DslError(f"unknown label {lab!r}", lineno, tok.col,
                           f"contents can only go in membranes of the structure (line {structure_line})")
    known |= created
    for lab, tok, lineno in refs:
        if lab not in known:
            raise DslError(f"unknown label {lab!r}", lineno, tok.col,
                           "declare it in the structure or create it with a clone rule")
    return SystemSpec(name or "system", mode or MAXIMAL, structure, contents, tuple(rules), seed)


# ----------------------------------------------------------- serialisation

def format_guard(guard: Guard) -> str:
    return str(guard)


def format_products(rhs: tuple[tuple[str, Target], ...]) -> str:
    out = []
    i = 0
    while i < len(rhs):
        j = i
        while j < len(rhs) and rhs[j] == rhs[i]:
            j += 1
        sym, target = rhs[i]
        n = j - i
        text = sym if n == 1 else f"{sym}^{n}"
        if target != HERE:
            text += str(target)
        out.append(text)
        i = j
    return " ".join(out)


def format_rule(rule: Rule) -> str:
    head = f"rule {rule.id} @{rule.scope}"
    if not isinstance(rule.guard, Always):
        head += f" if {format_guard(rule.guard)}"
    if isinstance(rule, RewriteRule):
        rhs = format_products(rule.rhs)
        return f"{head}: {rule.lhs} ->" + (f" {rhs}" if rhs else "")
    body = f"{rule.kind.value} {rule.new_label}"
    if rule.slot_label is not None:
        body += f" {rule.slot_label}"
    if rule.trigger:
        body += f" using {rule.trigger}"
    return f"{head}: {body}"


def serialize_system(spec: SystemSpec) -> str:
    lines = [f"system {spec.name}", f"mode {spec.mode}"]
    if spec.seed is not None:
        lines.append(f"seed {spec.seed}")
    lines.append(f"structure {format_structure(spec.structure)}")
    for node in spec.structure.walk():
        ms = spec.contents.get(node.label)
        if ms:
            lines.append(f"contents {node.label}: {ms}")
    lines.extend(format_rule(r) for r in spec.rules)
    return "\n".join(lines) + "\n"
