"""Multisets and membrane trees.

A multiset is the only value carrier in a P system: an integer ``n`` is the
multiplicity of a homogeneous multiset such as ``a^n``.  Membranes form a
rooted tree; every node carries a label (reusable after cloning), a unique
integer id and a multiset of objects.
"""

from __future__ import annotations

import enum
import itertools
import re
from typing import Iterable, Iterator, Mapping

MAX_MULTIPLICITY = 2**31 - 1

SYMBOL_RE = re.compile(r"[A-Za-z][0-9]*")
LABEL_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")


class MultisetError(ValueError):
    pass


class MultisetUnderflow(MultisetError):
    pass


class MultiplicityOverflow(MultisetError, OverflowError):
    pass


class SymbolError(MultisetError):
    def __init__(self, message: str, position: int | None = None):
        super().__init__(message)
        self.position = position


class StructureError(ValueError):
    def __init__(self, message: str, position: int | None = None):
        super().__init__(message)
        self.position = position


def is_symbol(name: str) -> bool:
    return isinstance(name, str) and SYMBOL_RE.fullmatch(name) is not None


def is_label(name: str) -> bool:
    return isinstance(name, str) and LABEL_RE.fullmatch(name) is not None


def _check_count(sym: str, n: int) -> int:
    if not isinstance(n, int) or isinstance(n, bool):
        raise MultisetError(f"multiplicity of {sym!r} must be an integer, got {n!r}")
    if n < 0:
        raise MultisetUnderflow(f"negative multiplicity {n} for {sym!r}")
    if n > MAX_MULTIPLICITY:
        raise MultiplicityOverflow(
            f"multiplicity {n} of {sym!r} exceeds the cap {MAX_MULTIPLICITY}")
    return n


class Multiset:
    """Immutable bag of symbols.

    ``len(m)`` is the total number of objects (``|S|``), not the number of
    distinct symbols.  Missing symbols have multiplicity 0.
    """

    __slots__ = ("_counts", "_hash")

    def __init__(self, counts: Mapping[str, int] | Iterable[str] | None = None):
        clean: dict[str, int] = {}
        if counts is None:
            pass
        elif isinstance(counts, Mapping):
            for sym, n in counts.items():
                if not is_symbol(sym):
                    raise SymbolError(f"invalid symbol {sym!r}")
                if _check_count(sym, n):
                    clean[sym] = n
        else:
            for sym in counts:
                if not is_symbol(sym):
                    raise SymbolError(f"invalid symbol {sym!r}")
                clean[sym] = _check_count(sym, clean.get(sym, 0) + 1)
        self._counts = clean
        self._hash = None

    @classmethod
    def _raw(cls, counts: dict[str, int]) -> Multiset:
        # trusted constructor: no zero entries, valid symbols, capped counts
        m = cls.__new__(cls)
        m._counts = counts
        m._hash = None
        return m

    @classmethod
    def from_string(cls, s: str) -> Multiset:
        """Read ``"abbbac"`` style strings; a symbol is a letter plus optional digits."""
        counts: dict[str, int] = {}
        pos = 0
        while pos < len(s):
            match = SYMBOL_RE.match(s, pos)
            if match is None:
                raise SymbolError(
                    f"invalid symbol character {s[pos]!r} at position {pos}", pos)
            sym = match.group()
            counts[sym] = _check_count(sym, counts.get(sym, 0) + 1)
            pos = match.end()
        return cls._raw(counts)

    def __getitem__(self, sym: str) -> int:
        return self._counts.get(sym, 0)

    def __contains__(self, sym: object) -> bool:
        return sym in self._counts

    def __iter__(self) -> Iterator[str]:
        return iter(sorted(self._counts))

    def __len__(self) -> int:
        return sum(self._counts.values())

    def __bool__(self) -> bool:
        return bool(self._counts)

    def items(self) -> list[tuple[str, int]]:
        return sorted(self._counts.items())

    def symbols(self) -> frozenset[str]:
        return frozenset(self._counts)

    def as_dict(self) -> dict[str, int]:
        return dict(sorted(self._counts.items()))

    def is_homogeneous(self) -> bool:
        return len(self._counts) <= 1

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Multiset):
            return NotImplemented
        return self._counts == other._counts

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash(frozenset(self._counts.items()))
        return self._hash

    def __add__(self, other: Multiset) -> Multiset:
        if not isinstance(other, Multiset):
            return NotImplemented
        out = dict(self._counts)
        for sym, n in other._counts.items():
            total = out.get(sym, 0) + n
            if total > MAX_MULTIPLICITY:
                _check_count(sym, total)
            out[sym] = total
        return Multiset._raw(out)

    def __sub__(self, other: Multiset) -> Multiset:
        if not isinstance(other, Multiset):
            return NotImplemented
        if not self.contains(other):
            raise MultisetUnderflow(f"cannot remove {other} from {self}")
        return self.saturating_sub(other)

    def saturating_sub(self, other: Multiset) -> Multiset:
        out = dict(self._counts)
        for sym, n in other._counts.items():
            left = out.get(sym, 0) - n
            if left > 0:
                out[sym] = left
            else:
                out.pop(sym, None)
        return Multiset._raw(out)

    def __mul__(self, k: int) -> Multiset:
        if not isinstance(k, int) or k < 0:
            return NotImplemented
        if k == 0:
            return Multiset._raw({})
        out = {s: n * k for s, n in self._counts.items()}
        for s, n in out.items():
            if n > MAX_MULTIPLICITY:
                _check_count(s, n)
        return Multiset._raw(out)

    __rmul__ = __mul__

    def contains(self, other: Multiset) -> bool:
        """True when ``other`` is a sub-multiset of ``self``."""
        counts = self._counts
        return all(counts.get(s, 0) >= n for s, n in other._counts.items())

    def __le__(self, other: Multiset) -> bool:
        return other.contains(self)

    def __ge__(self, other: Multiset) -> bool:
        return self.contains(other)

    def fits(self, lhs: Multiset) -> int:
        """How many disjoint copies of ``lhs`` can be taken out of ``self``."""
        if not lhs._counts:
            return 0
        counts = self._counts
        return min(counts.get(s, 0) // n for s, n in lhs._counts.items())

    def __str__(self) -> str:
        return " ".join(s if n == 1 else f"{s}^{n}" for s, n in self.items())

    def __repr__(self) -> str:
        return f"Multiset({str(self)!r})"


EMPTY = Multiset()


def multiset_from_string(s: str) -> Multiset:
    return Multiset.from_string(s)


def multiset_equal(m1: Multiset, m2: Multiset) -> bool:
    return m1 == m2


_provisional_ids = itertools.count(1_000_000_000)


class Membrane:
    """A compartment in the membrane tree."""

    __slots__ = ("id", "label", "contents", "children", "parent")

    def __init__(self, label: str, contents: Multiset | None = None,
                 children: Iterable[Membrane] = (), id: int | None = None):
        if not is_label(label):
            raise StructureError(f"invalid label {label!r}")
        self.id = next(_provisional_ids) if id is None else id
        self.label = label
        self.contents = EMPTY if contents is None else contents
        self.children: list[Membrane] = []
        self.parent: Membrane | None = None
        for child in children:
            self.add_child(child)

    def add_child(self, child: Membrane, index: int | None = None) -> None:
        if child.parent is not None:
            raise StructureError(f"membrane {child.label}#{child.id} already has a parent")
        node = self
        while node is not None:
            if node is child:
                raise StructureError("membrane cannot contain itself")
            node = node.parent
        child.parent = self
        if index is None:
            self.children.append(child)
        else:
            self.children.insert(index, child)

    def walk(self) -> Iterator[Membrane]:
        """Preorder traversal."""
        stack = [self]
        while stack:
            node = stack.pop()
            yield node
            stack.extend(reversed(node.children))

    def depth(self) -> int:
        d = 0
        node = self.parent
        while node is not None:
            d += 1
            node = node.parent
        return d

    def children_labeled(self, label: str) -> list[Membrane]:
        return [c for c in self.children if c.label == label]

    def child(self, label: str) -> Membrane | None:
        """The unique child carrying ``label``; None if absent or ambiguous."""
        found = None
        for c in self.children:
            if c.label == label:
                if found is not None:
                    return None
                found = c
        return found

    def __repr__(self) -> str:
        return f"<Membrane {self.label}#{self.id} {format_structure(self)} {{{self.contents}}}>"


def build_membrane(label: str, contents: Multiset | None = None,
                   children: Iterable[Membrane] = ()) -> Membrane:
    return Membrane(label, contents, children)


def root_of(node: Membrane) -> Membrane:
    while node.parent is not None:
        node = node.parent
    return node


def root_structure(node: Membrane) -> Membrane:
    """``root([1 mu]1) = [1]1``: the node itself with its inner structure stripped."""
    return Membrane(node.label, node.contents)


class StructureKind(str, enum.Enum):
    LEAF = "leaf"
    FLAT = "flat"
    DEEP = "deep"
    MIXED = "mixed"


def classify_structure(node: Membrane) -> StructureKind:
    if not node.children:
        return StructureKind.LEAF
    if all(len(n.children) <= 1 for n in node.walk()):
        # a single leaf child is both flat and deep; report deep
        return StructureKind.DEEP
    if all(not c.children for c in node.children):
        return StructureKind.FLAT
    return StructureKind.MIXED


def format_structure(node: Membrane) -> str:
    if not node.children:
        return f"[{node.label}]"
    inner = " ".join(format_structure(c) for c in node.children)
    return f"[{node.label} {inner}]"


_STRUCT_TOKEN = re.compile(r"\s*(?:(\[)|(\])|([A-Za-z_][A-Za-z0-9_]*))")


def parse_structure(text: str, offset: int = 0) -> Membrane:
    """Parse ``[h0 [h1] [h2]]`` into a tree of empty membranes.

    ``offset`` is added to reported positions (for callers embedding the
    bracket expression in a longer line).
    """
    tokens: list[tuple[str, str, int]] = []
    pos = 0
    while pos < len(text):
        if text[pos].isspace():
            pos += 1
            continue
        m = _STRUCT_TOKEN.match(text, pos)
        if m is None:
            raise StructureError(f"unexpected character {text[pos]!r}", pos + offset)
        start = m.start(m.lastindex)
        if m.group(1):
            tokens.append(("open", "[", start))
        elif m.group(2):
            tokens.append(("close", "]", start))
        else:
            tokens.append(("label", m.group(3), start))
        pos = m.end()

    index = 0

    def expect(kind: str) -> tuple[str, str, int]:
        nonlocal index
        if index >= len(tokens):
            raise StructureError(f"unexpected end of structure, expected {kind}",
                                 len(text) + offset)
        tok = tokens[index]
        if tok[0] != kind:
            raise StructureError(f"expected {kind}, found {tok[1]!r}", tok[2] + offset)
        index += 1
        return tok

    def node() -> Membrane:
        nonlocal index
        expect("open")
        label = expect("label")[1]
        children = []
        while index < len(tokens) and tokens[index][0] == "open":
            children.append(node())
        expect("close")
        return Membrane(label, children=children)

    tree = node()
    if index != len(tokens):
        tok = tokens[index]
        raise StructureError(f"trailing input {tok[1]!r}", tok[2] + offset)
    return tree
