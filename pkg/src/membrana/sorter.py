"""Comparator chain that reproduces as it fills: online insertion sort in membranes.

The chain lives inside the environment ``e``::

    [e [h0 [h1] [h0 [h1] [h0 [h1] [h2]]]]]
        cell 1      cell 2     cell 3 (innermost) + terminal

Each cell is a comparator whose slot ``h1`` keeps one sorted value as
``a``'s; the innermost cell's slot is empty and the terminal ``h2`` holds
the running maximum as ``b``'s.  An inserted value enters cell 1 and at
every cell:

1. the partner is mobilised into ``h0`` as ``b``'s: the slot resident
   (rule R9), or in the innermost cell the terminal's contents (rule R5);
2. the comparator pairs ``ab`` into the slot, so the smaller value stays;
3. the larger value travels inward as ``a``'s.  Leaving the innermost
   cell it triggers reproduction: the emptied terminal is wrapped into a
   fresh cell ``[h0 [h1] [h2]]`` (rule R6), and the value settles in the
   new terminal.

Phase markers keep the cascade correct under every execution mode:

====  ===========================================================
t     end of the incoming value; follows the last ``a``
s     innermost cell: slot is empty, look at the terminal
u, w  mobilise the slot resident / the terminal contents
m     partner fully mobilised, comparison may start
y     reproduction trigger left in the terminal
z     virgin cell: the value drops straight into the terminal
p, q  probe: the slot has released every paired ``b``
c     paired ``b`` on its way back out of the slot
====  ===========================================================

Every insertion visits all cells (the cascade does not stop early), so
``n`` insertions cost ``n(n-1)/2`` comparator settlements and ``n - 1``
reproductions.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable

from .core import Membrane, Multiset
from .dsl import parse_system
from .engine import (DEFAULT_MAX_STEPS, MAXIMAL, Configuration, EngineError,
                     Mode, TraceEvent)

SORTER_TEXT = """\
system membrane-sorter
mode maximal
structure [e [h0 [h1] [h2]]]
# environment: feed the value, then its end token
rule R10 @e: a -> a@in
rule R10t @e if not (has a): t -> t@in
# arrival: choose the partner
rule M1 @h0 if slot-nonempty h1: t -> u@h1
rule M2 @h0 if slot-empty h1: t -> s
rule M3 @h0 if slot-nonempty h2: s -> w@h2
rule M4 @h0 if slot-empty h2: s -> z
# virgin cell: the value rests in the terminal
rule V @h0 if has z: a -> b@h2
rule V0 @h0 if has z and not (has a): z ->
# mobilisation
rule R9 @h1 if has u: a -> b@out
rule U @h1 if not (has a): u -> m@out
rule R5 @h2 if has w: b -> b@out
rule W @h2 if not (has b): w -> m@out y
# reproduction: the emptied terminal becomes the next cell's terminal
rule R6 @h2: wrap h0 h1 using y
# comparison: min stays in the slot, max moves inward as a's
rule R1 @h0 if has m: a b -> a@h1 b@h1
rule R2 @h0 if has m and not (has b): a -> a@h0
rule R3 @h0 if has m and not (has a): b -> a@h0
rule R4 @h1: b -> c@out
rule R4f @h0: c -> a@h0
# settlement: wait for the slot to release every paired b, then pass the token on
rule S @h0 if not (has a) and not (has b): m -> p@h1
rule P @h1 if not (has b): p -> q@out
rule E @h0 if not (has c): q -> t@h0
"""

SORTER_SPEC = parse_system(SORTER_TEXT)
SETTLE_RULE = "S"
REPRODUCE_RULE = "R6"
MARKERS = frozenset("tsuwmyzpqc")


class SorterError(EngineError):
    pass


@dataclass
class InsertionTrace:
    value: int
    comparisons: list[tuple[int, tuple[int, int]]] = field(default_factory=list)
    reproduced: bool = False
    steps: int = 0


@dataclass
class SortStats:
    settlements: int = 0
    reproductions: int = 0
    steps: int = 0
    insertions: int = 0


@dataclass
class SorterState:
    config: Configuration
    mode: Mode = MAXIMAL
    max_steps: int = DEFAULT_MAX_STEPS
    stats: SortStats = field(default_factory=SortStats)
    history: list[InsertionTrace] = field(default_factory=list)
    events: list[TraceEvent] | None = None

    @property
    def env(self) -> Membrane:
        return self.config.root


def new_sorter(mode: Mode = MAXIMAL, seed: int = 0, check_maximal: bool = False,
               record: bool = False, max_steps: int = DEFAULT_MAX_STEPS) -> SorterState:
    """Environment holding one empty bootstrap cell."""
    config = SORTER_SPEC.build(seed=seed, check_maximal=check_maximal)
    return SorterState(config, mode, max_steps, events=[] if record else None)


def _cells(state: SorterState) -> list[Membrane]:
    cells = []
    node = state.env.child("h0")
    while node is not None:
        cells.append(node)
        node = node.child("h0")
    return cells


def depth(state: SorterState) -> int:
    return len(_cells(state))


def _cell_index(cell: Membrane) -> int:
    i = 1
    node = cell.parent
    while node is not None and node.label == "h0":
        i += 1
        node = node.parent
    return i


def _check_value(v) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise ValueError(f"value must be an integer, got {v!r}")
    if v < 1:
        raise ValueError(f"value must be >= 1, got {v}; "
                         "an empty multiset is indistinguishable from absence")
    return v


def insert(state: SorterState, v: int) -> InsertionTrace:
    """Feed ``a^v`` into the environment and run the chain to quiescence."""
    _check_value(v)
    config = state.config
    if not config.is_halted():
        raise SorterError("previous insertion has not settled")
    record = InsertionTrace(v)
    injection = config.inject(state.env, Multiset({"a": v, "t": 1}))
    if state.events is not None:
        state.events.append(injection)

    arrived: Counter[int] = Counter()
    partner: Counter[int] = Counter()
    nodes = config._nodes
    steps = 0
    while not config.is_halted():
        if steps >= state.max_steps:
            raise SorterError(f"insertion of {v} did not settle within {state.max_steps} steps")
        report = config.step(state.mode)
        steps += 1
        if state.events is not None:
            state.events.append(report)
        for sym, _src, dst, n in report.moves:
            if sym == "a":
                arrived[dst] += n
            elif sym == "b" and nodes[dst].label == "h0":
                partner[dst] += n
        for f in report.firings:
            if f.rule == SETTLE_RULE:
                cell = nodes[f.host_id]
                record.comparisons.append(
                    (_cell_index(cell), (arrived[cell.id], partner[cell.id])))
                state.stats.settlements += 1
            elif f.rule == REPRODUCE_RULE:
                record.reproduced = True
                state.stats.reproductions += 1
    record.steps = steps
    state.stats.steps += steps
    state.stats.insertions += 1
    state.history.append(record)
    return record


def check_chain(state: SorterState) -> None:
    """Raise SorterError unless the settled chain has the expected shape."""
    env = state.env
    if env.contents:
        raise SorterError(f"environment not empty: {env.contents}")
    cells = _cells(state)
    if not cells or len(env.children) != 1:
        raise SorterError("environment must hold exactly one cell")
    for i, cell in enumerate(cells):
        inner = cells[i + 1] if i + 1 < len(cells) else cell.child("h2")
        slot = cell.child("h1")
        if slot is None or inner is None or len(cell.children) != 2:
            raise SorterError(f"cell {i + 1} is malformed")
        if cell.contents:
            raise SorterError(f"cell {i + 1} h0 not empty: {cell.contents}")
        if slot.children or set(slot.contents.symbols()) - {"a"}:
            raise SorterError(f"cell {i + 1} slot holds {slot.contents}")
    terminal = cells[-1].child("h2")
    if terminal.children or set(terminal.contents.symbols()) - {"b"}:
        raise SorterError(f"terminal holds {terminal.contents}")


def read_sorted(state: SorterState) -> list[int]:
    """Slot values outermost to innermost, then the terminal."""
    if not state.config.is_halted():
        raise SorterError("sorter has not settled")
    check_chain(state)
    out = []
    cells = _cells(state)
    for cell in cells:
        n = cell.child("h1").contents["a"]
        if n:
            out.append(n)
    n = cells[-1].child("h2").contents["b"]
    if n:
        out.append(n)
    return out


def sort_stream(values: Iterable[int], mode: Mode = MAXIMAL, seed: int = 0,
                check_maximal: bool = False) -> tuple[list[int], SortStats]:
    state = new_sorter(mode, seed, check_maximal)
    for v in values:
        insert(state, v)
    return read_sorted(state), state.stats
