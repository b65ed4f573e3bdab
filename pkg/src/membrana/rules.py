"""Rule objects and their local semantics.

Two rule families live here.  A :class:`RewriteRule` consumes a left-hand
multiset in its host membrane and emits products to the host, its parent or
one of its children; with every target ``Here`` it is a plain transmutation.
A :class:`CloneRule` restructures the tree around its host (clone out, beside,
inside, or the conditional wrap used by the sorter).

Everything in this module works on a single host node.  Scheduling,
reservation of objects across rules and step synchronisation belong to
:mod:`membrana.engine`.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Union

from .core import EMPTY, Membrane, Multiset, is_label, is_symbol


class RuleError(ValueError):
    pass


# ---------------------------------------------------------------- targets

@dataclass(frozen=True)
class Here:
    def __str__(self) -> str:
        return "@here"


@dataclass(frozen=True)
class Out:
    def __str__(self) -> str:
        return "@out"


@dataclass(frozen=True)
class InUnique:
    def __str__(self) -> str:
        return "@in"


@dataclass(frozen=True)
class InChild:
    label: str

    def __str__(self) -> str:
        return f"@{self.label}"


Target = Union[Here, Out, InUnique, InChild]
HERE, OUT, IN = Here(), Out(), InUnique()


def resolve_target(target: Target, host: Membrane) -> Membrane | None:
    """Membrane receiving a product sent to ``target`` from ``host``, or None."""
    if isinstance(target, Here):
        return host
    if isinstance(target, Out):
        return host.parent
    if isinstance(target, InUnique):
        return host.children[0] if len(host.children) == 1 else None
    return host.child(target.label)


def target_diagnostic(target: Target, host: Membrane) -> str | None:
    """Why ``target`` does not resolve from ``host``; None when it does."""
    if resolve_target(target, host) is not None:
        return None
    if isinstance(target, Out):
        return f"{host.label}#{host.id} is the outermost membrane"
    if isinstance(target, InUnique):
        return f"{host.label}#{host.id} has {len(host.children)} children, @in needs exactly one"
    n = len(host.children_labeled(target.label))
    if n == 0:
        return f"{host.label}#{host.id} has no child labelled {target.label}"
    return f"{host.label}#{host.id} has {n} children labelled {target.label}"


# ----------------------------------------------------------------- guards

class Guard:
    """Predicate on the host membrane, evaluated on the start-of-step snapshot."""

    def holds(self, host: Membrane) -> bool:
        raise NotImplementedError

    def symbols(self) -> frozenset[str]:
        return frozenset()

    def child_labels(self) -> frozenset[str]:
        return frozenset()

    def reads_parent(self) -> bool:
        return False


@dataclass(frozen=True)
class Always(Guard):
    def holds(self, host: Membrane) -> bool:
        return True

    def __str__(self) -> str:
        return "always"


@dataclass(frozen=True)
class NotWrapped(Guard):
    """Host's parent does not carry ``wrapper``."""
    wrapper: str

    def holds(self, host: Membrane) -> bool:
        return host.parent is None or host.parent.label != self.wrapper

    def reads_parent(self) -> bool:
        return True

    def __str__(self) -> str:
        return f"not-wrapped {self.wrapper}"


@dataclass(frozen=True)
class SlotEmpty(Guard):
    label: str

    def holds(self, host: Membrane) -> bool:
        slot = host.child(self.label)
        return slot is not None and not slot.contents

    def child_labels(self) -> frozenset[str]:
        return frozenset((self.label,))

    def __str__(self) -> str:
        return f"slot-empty {self.label}"


@dataclass(frozen=True)
class SlotNonempty(Guard):
    label: str

    def holds(self, host: Membrane) -> bool:
        slot = host.child(self.label)
        return slot is not None and bool(slot.contents)

    def child_labels(self) -> frozenset[str]:
        return frozenset((self.label,))

    def __str__(self) -> str:
        return f"slot-nonempty {self.label}"


@dataclass(frozen=True)
class HasSymbol(Guard):
    symbol: str

    def holds(self, host: Membrane) -> bool:
        return self.symbol in host.contents

    def symbols(self) -> frozenset[str]:
        return frozenset((self.symbol,))

    def __str__(self) -> str:
        return f"has {self.symbol}"


@dataclass(frozen=True)
class Not(Guard):
    inner: Guard

    def holds(self, host: Membrane) -> bool:
        return not self.inner.holds(host)

    def symbols(self) -> frozenset[str]:
        return self.inner.symbols()

    def child_labels(self) -> frozenset[str]:
        return self.inner.child_labels()

    def reads_parent(self) -> bool:
        return self.inner.reads_parent()

    def __str__(self) -> str:
        return f"not ({self.inner})"


@dataclass(frozen=True)
class And(Guard):
    parts: tuple[Guard, ...]

    def holds(self, host: Membrane) -> bool:
        for g in self.parts:
            if not g.holds(host):
                return False
        return True

    def symbols(self) -> frozenset[str]:
        return frozenset().union(*(g.symbols() for g in self.parts))

    def child_labels(self) -> frozenset[str]:
        return frozenset().union(*(g.child_labels() for g in self.parts))

    def reads_parent(self) -> bool:
        return any(g.reads_parent() for g in self.parts)

    def __str__(self) -> str:
        return " and ".join(f"({g})" if isinstance(g, And) else str(g) for g in self.parts)


ALWAYS = Always()


def all_of(*guards: Guard) -> Guard:
    parts = tuple(g for g in guards if not isinstance(g, Always))
    if not parts:
        return ALWAYS
    return parts[0] if len(parts) == 1 else And(parts)


# ------------------------------------------------------------------ rules

@dataclass(frozen=True)
class RewriteRule:
    """``lhs -> rhs`` inside membranes labelled ``scope``.

    ``rhs`` is an ordered tuple of ``(symbol, target)`` productions; repeated
    entries mean repeated products.
    """
    id: str
    scope: str
    lhs: Multiset
    rhs: tuple[tuple[str, Target], ...] = ()
    guard: Guard = ALWAYS

    def __post_init__(self):
        if not is_label(self.scope):
            raise RuleError(f"rule {self.id}: invalid scope {self.scope!r}")
        if not self.lhs:
            raise RuleError(f"rule {self.id}: empty left-hand side")
        for sym, target in self.rhs:
            if not is_symbol(sym):
                raise RuleError(f"rule {self.id}: invalid product symbol {sym!r}")
            if not isinstance(target, (Here, Out, InUnique, InChild)):
                raise RuleError(f"rule {self.id}: invalid target {target!r}")

    @cached_property
    def targets(self) -> tuple[Target, ...]:
        seen: dict[Target, None] = {}
        for _, t in self.rhs:
            seen.setdefault(t)
        return tuple(seen)

    def products(self) -> dict[Target, Multiset]:
        """Right-hand side grouped per target, in first-appearance order."""
        return dict(self._products)

    @cached_property
    def _products(self) -> tuple[tuple[Target, Multiset], ...]:
        grouped: dict[Target, dict[str, int]] = {}
        for sym, t in self.rhs:
            bucket = grouped.setdefault(t, {})
            bucket[sym] = bucket.get(sym, 0) + 1
        return tuple((t, Multiset(c)) for t, c in grouped.items())

    def rhs_size(self) -> int:
        return len(self.rhs)

    def is_transmutation(self) -> bool:
        return all(isinstance(t, Here) for _, t in self.rhs)


class CloneKind(str, enum.Enum):
    OUT = "clone-out"
    SIDE = "clone-side"
    IN = "clone-in"
    WRAP = "wrap"


@dataclass(frozen=True)
class CloneRule:
    """Membrane reproduction.

    ``CloneKind.WRAP`` uses ``new_label`` for the outer shell and
    ``slot_label`` for the empty sibling slot.  ``trigger`` objects, when
    given, are consumed by the firing, which keeps a reproduction from
    re-firing on the next step.
    """
    id: str
    scope: str
    kind: CloneKind
    new_label: str
    slot_label: str | None = None
    guard: Guard = ALWAYS
    trigger: Multiset = field(default=EMPTY)

    def __post_init__(self):
        if not is_label(self.scope) or not is_label(self.new_label):
            raise RuleError(f"rule {self.id}: invalid label")
        if (self.kind is CloneKind.WRAP) != (self.slot_label is not None):
            raise RuleError(f"rule {self.id}: wrap needs exactly an outer and a slot label")
        if self.slot_label is not None and not is_label(self.slot_label):
            raise RuleError(f"rule {self.id}: invalid slot label {self.slot_label!r}")


Rule = Union[RewriteRule, CloneRule]


def clone_possible(rule: CloneRule, host: Membrane) -> bool:
    """Structural precondition: clone-side needs a parent to put the copy in."""
    return rule.kind is not CloneKind.SIDE or host.parent is not None


def instances(rule: Rule, host: Membrane) -> int:
    """Number of instances of ``rule`` applicable in ``host`` on its own."""
    if host.label != rule.scope or not rule.guard.holds(host):
        return 0
    if isinstance(rule, CloneRule):
        if not clone_possible(rule, host):
            return 0
        if rule.trigger and not host.contents.contains(rule.trigger):
            return 0
        return 1
    for t in rule.targets:
        if resolve_target(t, host) is None:
            return 0
    return host.contents.fits(rule.lhs)


@dataclass
class RewriteDelta:
    """Effect of ``k`` instances of a rewrite: what leaves the host and where products go."""
    host: Membrane
    consumed: Multiset
    produced: list[tuple[Membrane, Multiset]]

    def moves(self) -> list[tuple[str, int, int, int]]:
        """Translocations as ``(symbol, from_id, to_id, count)``."""
        return [(sym, self.host.id, node.id, n)
                for node, ms in self.produced if node is not self.host
                for sym, n in ms.items()]


def apply_rewrite(rule: RewriteRule, host: Membrane, k: int) -> RewriteDelta:
    """Compute the delta of ``k`` instances; nothing is mutated.

    The engine subtracts ``consumed`` when the step starts and adds products at
    step end, so products are never visible to rules in the same step.
    """
    if k < 0:
        raise RuleError("negative instance count")
    produced = []
    if k:
        for target, ms in rule._products:
            node = resolve_target(target, host)
            if node is None:
                raise RuleError(f"rule {rule.id}: {target_diagnostic(target, host)}")
            produced.append((node, ms * k))
    return RewriteDelta(host, rule.lhs * k, produced)


def _copy_subtree(node: Membrane, new_id: Callable[[], int], label: str | None = None) -> Membrane:
    copy = Membrane(label or node.label, node.contents, id=new_id())
    for child in node.children:
        copy.add_child(_copy_subtree(child, new_id))
    return copy


@dataclass
class CloneDelta:
    """Membranes created by a clone, with the op recorded for traces."""
    created: list[tuple[str, Membrane]]
    new_root: Membrane | None = None


def _replace_in_parent(host: Membrane, replacement: Membrane) -> None:
    parent = host.parent
    if parent is not None:
        idx = parent.children.index(host)
        parent.children[idx] = replacement
        replacement.parent = parent
    host.parent = None


def apply_clone(rule: CloneRule, host: Membrane, new_id: Callable[[], int]) -> CloneDelta:
    """Restructure the tree around ``host`` in place.

    Copies get fresh ids from ``new_id``.  Object contents are copied with
    the membranes for clone-out/side/in; the wrap shells start empty.
    Trigger objects are not handled here (the engine consumes them).
    """
    if not clone_possible(rule, host):
        raise RuleError(f"rule {rule.id}: {rule.kind.value} needs a parent membrane")
    kind = rule.kind
    created: list[tuple[str, Membrane]] = []
    was_root = host.parent is None

    if kind is CloneKind.OUT:
        outer = Membrane(rule.new_label, id=new_id())
        _replace_in_parent(host, outer)
        outer.add_child(host)
        created.append(("wrap", outer))
        for child in host.children:
            copy = _copy_subtree(child, new_id)
            outer.add_child(copy)
            created.extend(("create", n) for n in copy.walk())
        return CloneDelta(created, outer if was_root else None)

    if kind is CloneKind.SIDE:
        parent = host.parent
        copy = _copy_subtree(host, new_id, label=rule.new_label)
        parent.add_child(copy, parent.children.index(host) + 1)
        created.extend(("create", n) for n in copy.walk())
        return CloneDelta(created)

    if kind is CloneKind.IN:
        inner = Membrane(rule.new_label, id=new_id())
        for child in host.children:
            inner.add_child(_copy_subtree(child, new_id))
        host.add_child(inner, 0)
        created.extend(("create", n) for n in inner.walk())
        return CloneDelta(created)

    outer = Membrane(rule.new_label, id=new_id())
    slot = Membrane(rule.slot_label, id=new_id())
    _replace_in_parent(host, outer)
    outer.add_child(slot)
    outer.add_child(host)
    created.append(("wrap", outer))
    created.append(("create", slot))
    return CloneDelta(created, outer if was_root else None)
