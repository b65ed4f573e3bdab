"""Two-integer comparator membranes.

``x`` and ``y`` enter ``h0`` as ``a^x b^y``.  Pairs ``ab`` move into ``h1``
together; what cannot be paired goes to ``h2`` as ``b``'s; the paired
``b``'s leave ``h1`` again and follow.  At halt ``h1`` holds ``a^min`` and
``h2`` holds ``b^max`` (maximizing variant).

The bare four-rule set misplaces values whenever the scheduler lets a
leftover move before pairing is finished, or lets a returning ``b`` pair a
second time.  The default rulesets therefore guard the leftover moves and
relay returning ``b``'s through ``h0`` as ``c``, which makes the result
independent of the execution mode and the seed.  Steps are counted per
synchronised step: 3 for ``x, y >= 1`` under maximal parallelism.
"""

from __future__ import annotations

from dataclasses import dataclass

from .core import Membrane, Multiset
from .dsl import SystemSpec, parse_system
from .engine import (DEFAULT_MAX_STEPS, MAXIMAL, Configuration, EngineError, Mode,
                     run_to_halt)

MAX_RULES = parse_system("""
structure [h0 [h1] [h2]]
rule R1 @h0: a b -> a@h1 b@h1
rule R2 @h0 if not (has b): a -> b@h2
rule R3 @h0 if not (has a): b -> b@h2
rule R4 @h1: b -> c@out
rule R4r @h0: c -> b@h2
""").rules

# max ends in h1 (as a's), min in h2 (as b's)
MIN_RULES = parse_system("""
structure [h0 [h1] [h2]]
rule R1 @h0: a b -> a@h1 b@h1
rule R2m @h0 if not (has b): a -> a@h1
rule R3m @h0 if not (has a): b -> a@h1
rule R4m @h1: b -> c@out
rule R5m @h0: c -> b@h2
""").rules

# the four rules exactly as printed, unguarded; kept for comparison only
LITERAL_RULES = parse_system("""
structure [h0 [h1] [h2]]
rule R1 @h0: a b -> a@h1 b@h1
rule R2 @h0: a -> b@h2
rule R3 @h0: b -> b@h2
rule R4 @h1: b -> b@h0
""").rules


class ComparatorError(EngineError):
    pass


@dataclass(frozen=True)
class ComparatorResult:
    h1_value: int
    h2_value: int
    steps: int
    minimizing: bool = False

    @property
    def min_value(self) -> int:
        return self.h2_value if self.minimizing else self.h1_value

    @property
    def max_value(self) -> int:
        return self.h1_value if self.minimizing else self.h2_value


def _check_inputs(x: int, y: int) -> None:
    for v in (x, y):
        if not isinstance(v, int) or isinstance(v, bool) or v < 0:
            raise ValueError(f"comparator inputs must be non-negative integers, got {v!r}")


def _build(x: int, y: int, rules, seed: int, check_maximal: bool) -> Configuration:
    _check_inputs(x, y)
    h0 = Membrane("h0", Multiset({"a": x, "b": y}), [Membrane("h1"), Membrane("h2")])
    return Configuration(h0, rules, seed=seed, check_maximal=check_maximal)


def comparator_spec(x: int, y: int, minimizing: bool = False, mode: Mode = MAXIMAL,
                    seed: int | None = None) -> SystemSpec:
    """The comparator as a system description, e.g. for trace headers."""
    _check_inputs(x, y)
    structure = Membrane("h0", children=[Membrane("h1"), Membrane("h2")])
    return SystemSpec("min-comparator" if minimizing else "max-comparator", mode, structure,
                      {"h0": Multiset({"a": x, "b": y})},
                      MIN_RULES if minimizing else MAX_RULES, seed)


def build_max_comparator(x: int, y: int, seed: int = 0, check_maximal: bool = False,
                         literal: bool = False) -> Configuration:
    """``[h0 [h1] [h2]]`` with ``a^x b^y`` in ``h0``.

    ``literal=True`` attaches the unguarded four-rule set instead; it is
    only correct under lucky schedules.
    """
    return _build(x, y, LITERAL_RULES if literal else MAX_RULES, seed, check_maximal)


def build_min_comparator(x: int, y: int, seed: int = 0,
                         check_maximal: bool = False) -> Configuration:
    return _build(x, y, MIN_RULES, seed, check_maximal)


def run_comparator(config: Configuration, mode: Mode = MAXIMAL, seed: int | None = None,
                   max_steps: int = DEFAULT_MAX_STEPS) -> ComparatorResult:
    result = run_to_halt(config, mode, seed=seed, max_steps=max_steps, record=False)
    if not result.halted:
        raise ComparatorError(f"comparator did not halt within {max_steps} steps")
    h0 = config.root
    h1, h2 = h0.child("h1"), h0.child("h2")
    if h0.contents:
        raise ComparatorError(f"h0 not empty at halt: {h0.contents}")
    if set(h1.contents.symbols()) - {"a"} or set(h2.contents.symbols()) - {"b"}:
        raise ComparatorError(f"unexpected objects at halt: h1={h1.contents} h2={h2.contents}")
    minimizing = config.rules is MIN_RULES
    return ComparatorResult(h1.contents["a"], h2.contents["b"], result.steps, minimizing)


def compare(x: int, y: int, mode: Mode = MAXIMAL, seed: int = 0,
            minimizing: bool = False) -> ComparatorResult:
    config = build_min_comparator(x, y, seed) if minimizing else build_max_comparator(x, y, seed)
    return run_comparator(config, mode)


def settle_steps(x: int, y: int, mode: Mode = MAXIMAL, seed: int = 0) -> int:
    """Synchronised steps until the maximizing comparator halts."""
    return compare(x, y, mode, seed).steps
