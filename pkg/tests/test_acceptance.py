"""Acceptance suite: one test per criterion, exact unless stated otherwise.

The long sweeps are computed once and shared: the comparator sweep feeds the
step-bound and maximality checks, the sorter sweep feeds the maximality check.
"""

import io
import random
from functools import cache

from membrana.comparator import build_max_comparator
from membrana.core import Membrane, Multiset, format_structure
from membrana.dsl import DslError, parse_system, serialize_system
from membrana.engine import (MAXIMAL, MINIMAL, SEQUENTIAL, Configuration, EngineError,
                             StepReport, bounded, read_trace, replay, run_to_halt,
                             write_trace)
from membrana.rules import HERE, IN, OUT, RewriteRule
from membrana.sorter import SORTER_SPEC, depth, insert, new_sorter, read_sorted

from oracles import extension
from specgen import mutate, random_spec

MODES = (SEQUENTIAL, MINIMAL, bounded(2), MAXIMAL)
SEEDS = range(5)
GRID = range(51)
SORT_LISTS = 1000
SORT_MAX_N = 64
ORACLE_SORT_LISTS = 25


def _maximality_failure(exc: EngineError) -> bool:
    return "extendable" in str(exc)


@cache
def comparator_sweep():
    """Every (x, y, mode, seed) run; maximal runs are checked step by step.

    Returns (wrong results, maximal step counts, engine maximality failures,
    oracle maximality failures, maximal steps checked).
    """
    wrong = []
    max_steps = {}
    engine_flags = []
    oracle_flags = []
    checked = 0
    for mode in MODES:
        maximal = mode is MAXIMAL
        for seed in SEEDS:
            for x in GRID:
                for y in GRID:
                    cfg = build_max_comparator(x, y, seed)
                    cfg.check_maximal = maximal
                    steps = 0
                    try:
                        while not cfg.is_halted() and steps < 10_000:
                            before = cfg.snapshot() if maximal else None
                            report = cfg.step(mode)
                            steps += 1
                            if maximal:
                                checked += 1
                                if extension(before, report) is not None:
                                    oracle_flags.append((x, y, seed, steps))
                    except EngineError as exc:
                        if _maximality_failure(exc):
                            engine_flags.append((x, y, seed, str(exc)))
                        wrong.append((str(mode), seed, x, y, str(exc)))
                        continue
                    h0 = cfg.root
                    got = (cfg.is_halted(), h0.child("h1").contents, h0.child("h2").contents,
                           h0.contents)
                    want = (True, Multiset({"a": min(x, y)}), Multiset({"b": max(x, y)}),
                            Multiset())
                    if got != want:
                        wrong.append((str(mode), seed, x, y, got))
                    if maximal:
                        max_steps[(x, y, seed)] = steps
    return wrong, max_steps, engine_flags, oracle_flags, checked


@cache
def sorter_sweep():
    """Seeded random lists sorted online in every mode.

    Returns (prefix mismatches, engine maximality failures, lists run).
    """
    rng = random.Random(2024)
    mismatches = []
    engine_flags = []
    for i in range(SORT_LISTS):
        n = rng.randint(0, SORT_MAX_N)
        values = [rng.randint(1, 100) for _ in range(n)]
        for mode in MODES:
            state = new_sorter(mode, seed=i, check_maximal=mode is MAXIMAL)
            try:
                for j, v in enumerate(values):
                    insert(state, v)
                    if read_sorted(state) != sorted(values[:j + 1]):
                        mismatches.append((i, str(mode), j))
                        break
            except EngineError as exc:
                if _maximality_failure(exc):
                    engine_flags.append((i, str(exc)))
                mismatches.append((i, str(mode), str(exc)))
    return mismatches, engine_flags, SORT_LISTS


@cache
def sorter_oracle_sweep():
    """Replay recorded maximal sorter runs, checking every step independently."""
    rng = random.Random(77)
    flags = []
    checked = 0
    for i in range(ORACLE_SORT_LISTS):
        values = [rng.randint(1, 100) for _ in range(rng.randint(1, 24))]
        state = new_sorter(MAXIMAL, seed=i, record=True)
        for v in values:
            insert(state, v)
        cfg = SORTER_SPEC.build(seed=i)
        for event in state.events:
            if not isinstance(event, StepReport):
                cfg.inject(cfg.node(event.host_id), event.contents)
                continue
            before = cfg.snapshot()
            cfg.apply_firings(event.firings)
            checked += 1
            if extension(before, event) is not None:
                flags.append((i, event.step))
        assert cfg.state_hash() == state.config.state_hash()
    return flags, checked


@cache
def counting_sweep():
    """Settlements, reproductions and depth after n insertions, n in 0..32."""
    rng = random.Random(31)
    rows = []
    for n in range(33):
        shuffled = [rng.randint(1, 100) for _ in range(n)]
        for kind, values in (("random", shuffled), ("sorted", sorted(shuffled))):
            for mode in MODES:
                state = new_sorter(mode, seed=n)
                for v in values:
                    insert(state, v)
                rows.append((n, kind, str(mode), state.stats.settlements,
                             state.stats.reproductions, depth(state)))
    return rows


def test_comparator_exhaustive_grid_every_mode_and_seed():
    wrong, *_ = comparator_sweep()
    assert wrong == []


def test_comparator_maximal_steps_bounded_by_three():
    _, steps, *_ = comparator_sweep()
    assert len(steps) == len(GRID) ** 2 * len(SEEDS)
    assert all(s <= 3 for s in steps.values())
    assert all(s == 3 for (x, y, _), s in steps.items() if x >= 1 and y >= 1)


def _engine_step(root: Membrane, rules) -> Configuration:
    cfg = Configuration(root, rules, seed=0)
    cfg.step(MAXIMAL)
    return cfg


def test_worked_micro_examples():
    # one multiset written three ways
    m1, m2, m3 = (Multiset.from_string(s) for s in ("abbbac", "bacabb", "cbbaab"))
    assert m1 == m2 == m3
    assert (m1["a"], m1["b"], m1["c"]) == (2, 3, 1)

    # transmutation ca -> d applied once to aabbbc
    m = Membrane("m", Multiset.from_string("aabbbc"))
    cfg = _engine_step(m, [RewriteRule("R1", "m", Multiset("ca"), (("d", HERE),))])
    assert cfg.root.contents == Multiset.from_string("abbbd")
    assert cfg.is_halted()

    # translocation a -> e@in and d -> f@out g from abbbd in focus
    out = Membrane("out", children=[
        Membrane("focus", Multiset.from_string("abbbd"), [Membrane("in")])])
    rules = [RewriteRule("R2", "focus", Multiset("a"), (("e", IN),)),
             RewriteRule("R3", "focus", Multiset("d"), (("f", OUT), ("g", HERE)))]
    cfg = _engine_step(out, rules)
    focus = cfg.root.child("focus")
    assert focus.contents == Multiset.from_string("bbbg")
    assert focus.child("in").contents == Multiset("e")
    assert cfg.root.contents == Multiset("f")

    # the three reproductions and the conditional wrap, through the engine
    spec = parse_system(
        "structure [top [m1 [z1]] [s1 [z2]] [n1 [z3]] [h0 [h1] [h2]]]\n"
        "contents m1: x\ncontents s1: x\ncontents n1: x\ncontents h0: y\n"
        "contents z1: q\ncontents z2: q\ncontents z3: q\ncontents h1: a^3\n"
        "rule O @m1: clone-out m2 using x\n"
        "rule S @s1: clone-side s2 using x\n"
        "rule I @n1: clone-in n2 using x\n"
        "rule W @h0 if not-wrapped c0: wrap c0 c1 using y\n")
    cfg = spec.build()
    report = cfg.step(MAXIMAL)
    assert sorted(f.rule for f in report.firings) == ["I", "O", "S", "W"]
    assert format_structure(cfg.root) == (
        "[top [m2 [m1 [z1]] [z1]] [s1 [z2]] [s2 [z2]] [n1 [n2 [z3]] [z3]] "
        "[c0 [c1] [h0 [h1] [h2]]]]")
    for node in cfg.nodes():
        if node.label.startswith("z"):
            assert node.contents == Multiset("q")
    assert cfg.root.child("c0").child("h0").child("h1").contents == Multiset("aaa")
    assert cfg.is_halted()


def test_sorter_matches_reference_sort_after_every_prefix():
    mismatches, _, lists = sorter_sweep()
    assert lists == SORT_LISTS
    assert mismatches == []


def test_settlements_are_quadratic():
    rows = counting_sweep()
    bad = [r for r in rows if r[0] >= 1 and r[3] != r[0] * (r[0] - 1) // 2]
    assert bad == []
    assert {r[1] for r in rows} == {"random", "sorted"}


def test_reproductions_and_depth():
    rows = counting_sweep()
    bad = [r for r in rows if (r[4], r[5]) != (max(0, r[0] - 1), max(1, r[0]))]
    assert bad == []
    assert {r[0] for r in rows} == set(range(33))


def _trace_text(text: str, mode, seed: int) -> tuple[str, Configuration]:
    spec = parse_system(text)
    cfg = spec.build(seed=seed)
    res = run_to_halt(cfg, mode, max_steps=200)
    buf = io.StringIO()
    write_trace(buf, {"spec": serialize_system(spec), "mode": str(mode), "seed": seed},
                res.trace, cfg, res.halted)
    return buf.getvalue(), cfg


def test_traces_are_deterministic_and_replay():
    rng = random.Random(99)
    for i in range(100):
        text = random_spec(rng)
        mode = MODES[i % len(MODES)]
        first, final = _trace_text(text, mode, i)
        second, _ = _trace_text(text, mode, i)
        assert first == second
        trace = read_trace(io.StringIO(first))
        again = replay(parse_system(trace.header["spec"]).build(seed=i), trace.events)
        assert again.state_hash() == final.state_hash() == trace.end["hash"]


def test_maximal_steps_are_never_extendable():
    _, _, c_engine, c_oracle, c_checked = comparator_sweep()
    _, s_engine, _ = sorter_sweep()
    s_oracle, s_checked = sorter_oracle_sweep()
    assert c_engine == [] and s_engine == []
    assert c_oracle == [] and s_oracle == []
    assert c_checked > 0 and s_checked > 0


def test_dsl_round_trip_and_fuzz():
    rng = random.Random(123)
    for _ in range(200):
        spec = parse_system(random_spec(rng))
        text = serialize_system(spec)
        assert parse_system(text) == spec
        assert serialize_system(parse_system(text)) == text
    rejected = 0
    for _ in range(10_000):
        text = mutate(rng, random_spec(rng))
        try:
            spec = parse_system(text)
        except DslError as exc:
            assert exc.line >= 1 and exc.col >= 1
            rejected += 1
            continue
        assert parse_system(serialize_system(spec)) == spec
    assert rejected > 0
