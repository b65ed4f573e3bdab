import pytest

from membrana.comparator import (LITERAL_RULES, build_max_comparator, build_min_comparator,
                                 compare, comparator_spec, run_comparator, settle_steps)
from membrana.core import Membrane, Multiset, MultiplicityOverflow
from membrana.engine import MAXIMAL, MINIMAL, SEQUENTIAL, Configuration, bounded, run_to_halt

MODES = (SEQUENTIAL, MINIMAL, bounded(2), MAXIMAL)


def test_build_places_inputs():
    cfg = build_max_comparator(5, 3)
    assert cfg.root.contents == Multiset({"a": 5, "b": 3})
    assert not cfg.root.child("h1").contents and not cfg.root.child("h2").contents
    assert build_max_comparator(0, 0).is_halted()
    assert build_max_comparator(7, 7).root.contents == Multiset({"a": 7, "b": 7})


def test_build_rejects_bad_inputs():
    with pytest.raises(ValueError):
        build_max_comparator(-1, 2)
    with pytest.raises(ValueError):
        build_max_comparator(1.5, 2)
    with pytest.raises(MultiplicityOverflow):
        build_max_comparator(2**31, 1)


def test_five_three_maximal():
    cfg = build_max_comparator(5, 3)
    res = run_to_halt(cfg, MAXIMAL)
    per_step = [sorted((f.rule, f.count) for f in r.firings) for r in res.trace]
    assert per_step == [[("R1", 3)], [("R2", 2), ("R4", 3)], [("R4r", 3)]]
    h0 = cfg.root
    assert h0.child("h1").contents == Multiset({"a": 3})
    assert h0.child("h2").contents == Multiset({"b": 5})


@pytest.mark.parametrize("x,y", [(5, 3), (3, 5), (4, 4), (1, 1), (6, 0), (0, 6), (0, 0)])
@pytest.mark.parametrize("mode", MODES, ids=str)
def test_min_max_in_every_mode(x, y, mode):
    for seed in range(3):
        res = compare(x, y, mode, seed)
        assert (res.min_value, res.max_value) == (min(x, y), max(x, y))
        assert res.min_value + res.max_value == x + y


def test_degenerate_inputs():
    cfg = build_max_comparator(4, 0)
    res = run_to_halt(cfg, MAXIMAL)
    assert {f.rule for r in res.trace for f in r.firings} == {"R2"}
    assert res.steps == 1
    assert settle_steps(0, 4) == 1
    assert settle_steps(0, 0) == 0


def test_step_counts():
    assert settle_steps(5, 3) == 3
    assert settle_steps(1, 1, SEQUENTIAL) == 3


@pytest.mark.parametrize("x,y", [(5, 3), (3, 5), (4, 4), (0, 2)])
def test_min_comparator(x, y):
    for mode in MODES:
        res = run_comparator(build_min_comparator(x, y, seed=2), mode)
        assert res.minimizing
        assert (res.h1_value, res.h2_value) == (max(x, y), min(x, y))
        assert (res.min_value, res.max_value) == (min(x, y), max(x, y))


def test_spec_builds_same_system():
    spec = comparator_spec(5, 3)
    res = run_comparator(spec.build())
    assert (res.min_value, res.max_value, res.steps) == (3, 5, 3)
    assert comparator_spec(5, 3, minimizing=True).name == "min-comparator"


def test_unguarded_rules_misplace_values_under_some_schedules():
    # documents why the default ruleset carries guards and a relay
    wrong = 0
    for seed in range(20):
        h0 = Membrane("h0", Multiset({"a": 3, "b": 2}), [Membrane("h1"), Membrane("h2")])
        cfg = Configuration(h0, LITERAL_RULES, seed=seed)
        run_to_halt(cfg, SEQUENTIAL)
        if cfg.root.child("h2").contents["b"] != 3:
            wrong += 1
    assert wrong > 0
