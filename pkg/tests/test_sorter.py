import random

import pytest

from membrana.core import Multiset, format_structure
from membrana.engine import MAXIMAL, MINIMAL, SEQUENTIAL, bounded, replay
from membrana.sorter import (MARKERS, SORTER_SPEC, SorterError, depth, insert, new_sorter,
                             read_sorted, sort_stream)

MODES = (SEQUENTIAL, MINIMAL, bounded(2), MAXIMAL)


def test_new_sorter():
    state = new_sorter()
    assert depth(state) == 1
    assert read_sorted(state) == []
    assert state.config.is_halted()
    assert format_structure(state.env) == "[e [h0 [h1] [h2]]]"


def test_three_five_four():
    state = new_sorter()
    seen = []
    traces = []
    for v in (3, 5, 4):
        traces.append(insert(state, v))
        seen.append(read_sorted(state))
    assert seen == [[3], [3, 5], [3, 4, 5]]
    assert traces[2].comparisons == [(1, (4, 3)), (2, (4, 5))]
    assert [t.reproduced for t in traces] == [False, True, True]
    assert depth(state) == 3


def test_first_value_goes_to_terminal():
    state = new_sorter()
    t = insert(state, 7)
    assert t.comparisons == [] and not t.reproduced
    assert state.env.child("h0").child("h2").contents["b"] == 7
    assert state.stats.reproductions == 0


def test_duplicates():
    state = new_sorter()
    insert(state, 3)
    insert(state, 3)
    assert read_sorted(state) == [3, 3]
    assert sort_stream([2, 2, 2])[0] == [2, 2, 2]


@pytest.mark.parametrize("bad", [0, -4, 2.5, True, "3"])
def test_rejects_non_positive_values(bad):
    with pytest.raises(ValueError):
        insert(new_sorter(), bad)


def test_insert_while_unsettled():
    state = new_sorter()
    insert(state, 2)
    state.config.inject(state.env, Multiset({"a": 1, "t": 1}))
    with pytest.raises(SorterError):
        insert(state, 3)
    with pytest.raises(SorterError):
        read_sorted(state)


def test_sort_stream_examples():
    out, stats = sort_stream([5, 3, 4, 1, 2])
    assert out == [1, 2, 3, 4, 5] and stats.settlements == 10 and stats.reproductions == 4
    out, stats = sort_stream([])
    assert out == [] and stats.settlements == 0
    out, stats = sort_stream([1, 2, 3])
    assert out == [1, 2, 3] and stats.settlements == 3


def test_markers_leave_no_residue():
    state = new_sorter(SEQUENTIAL, seed=3)
    for v in (4, 1, 9, 4):
        insert(state, v)
        for node in state.config.nodes():
            assert not set(node.contents.symbols()) & MARKERS


def test_outcome_independent_of_mode_and_seed():
    rng = random.Random(8)
    values = [rng.randint(1, 30) for _ in range(10)]
    results = {tuple(sort_stream(values, mode, seed)[0]) for mode in MODES for seed in range(3)}
    assert results == {tuple(sorted(values))}


def test_comparisons_bounded_by_depth():
    state = new_sorter(MINIMAL, seed=1)
    for i, v in enumerate((6, 2, 8, 5, 1)):
        before = depth(state)
        t = insert(state, v)
        assert len(t.comparisons) <= depth(state)
        assert len(t.comparisons) == (before if i else 0)


def test_trace_shows_each_rule_pattern_and_replays():
    state = new_sorter(MAXIMAL, seed=2, record=True)
    for v in (3, 5, 4):
        insert(state, v)
    fired = {f.rule for ev in state.events if hasattr(ev, "firings") for f in ev.firings}
    assert {"R9", "R5", "R1", "R4", "R6", "R10"} <= fired
    again = replay(SORTER_SPEC.build(seed=2), state.events)
    assert again.state_hash() == state.config.state_hash()


def test_maximality_holds_in_sorter_runs():
    out, _ = sort_stream([9, 1, 5, 5, 2], MAXIMAL, seed=4, check_maximal=True)
    assert out == [1, 2, 5, 5, 9]
