"""Synchronised-step scheduler.

A step picks a multiset of rule instances against the start-of-step
snapshot, reserves the objects they consume, applies membrane clones, and
only then delivers products.  Guards and target resolution see the snapshot,
so products never enable anything within the step that made them.

Nondeterminism is resolved by a Mersenne Twister (``random.Random``) seeded
with a 64-bit integer.  Options are enumerated in a canonical order:
ascending membrane id, then rule declaration order.  Membrane ids are
assigned in preorder when a configuration is built and sequentially for
membranes created later, so the order is identical across runs.
"""

from __future__ import annotations

import enum
import hashlib
import json
import random
from collections import Counter
from dataclasses import dataclass, field
from typing import IO, Iterable, Iterator, NamedTuple, Union

from .core import Membrane, Multiset
from .rules import (CloneKind, CloneRule, Rule, RewriteRule, apply_clone,
                    clone_possible, instances, resolve_target, target_diagnostic)

SEED_MASK = (1 << 64) - 1
DEFAULT_MAX_STEPS = 10**6
MAX_MEMBRANES = 100_000
TRACE_VERSION = 1


class EngineError(RuntimeError):
    pass


class HaltedError(EngineError):
    pass


class ReplayError(EngineError):
    pass


class TraceFormatError(ValueError):
    pass


class ModeKind(str, enum.Enum):
    SEQUENTIAL = "sequential"
    MINIMAL = "minimal"
    BOUNDED = "bounded"
    MAXIMAL = "maximal"


@dataclass(frozen=True)
class Mode:
    kind: ModeKind
    limit: int | None = None

    def __post_init__(self):
        if self.kind is ModeKind.BOUNDED:
            if not isinstance(self.limit, int) or self.limit < 1:
                raise ValueError("bounded parallel mode needs a limit >= 1")
        elif self.limit is not None:
            raise ValueError(f"{self.kind.value} mode takes no limit")

    @classmethod
    def parse(cls, text: str) -> Mode:
        """Accepts ``maximal``, ``bounded 2``, ``bounded:2`` and ``bounded(2)``."""
        words = text.strip().lower().replace(":", " ").replace("(", " ").replace(")", " ").split()
        if not words:
            raise ValueError("empty mode")
        try:
            kind = ModeKind(words[0])
        except ValueError:
            raise ValueError(f"unknown mode {words[0]!r}") from None
        if kind is ModeKind.BOUNDED:
            if len(words) != 2 or not words[1].isdigit():
                raise ValueError("bounded mode needs a positive integer limit")
            return cls(kind, int(words[1]))
        if len(words) != 1:
            raise ValueError(f"unexpected text after mode {kind.value!r}")
        return cls(kind)

    def __str__(self) -> str:
        return f"bounded {self.limit}" if self.kind is ModeKind.BOUNDED else self.kind.value


SEQUENTIAL = Mode(ModeKind.SEQUENTIAL)
MINIMAL = Mode(ModeKind.MINIMAL)
MAXIMAL = Mode(ModeKind.MAXIMAL)


def bounded(limit: int) -> Mode:
    return Mode(ModeKind.BOUNDED, limit)


class Firing(NamedTuple):
    rule: str
    host_id: int
    count: int


@dataclass
class StepReport:
    step: int
    firings: list[Firing]
    moves: list[tuple[str, int, int, int]]
    membranes: list[dict] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "step": self.step,
            "firings": [{"rule": f.rule, "host_id": f.host_id, "count": f.count}
                        for f in self.firings],
            "moves": [{"sym": s, "from": a, "to": b, "n": n} for s, a, b, n in self.moves],
            "membranes": list(self.membranes),
        }

    @classmethod
    def from_json(cls, obj: dict) -> StepReport:
        try:
            return cls(
                step=int(obj["step"]),
                firings=[Firing(str(f["rule"]), int(f["host_id"]), int(f["count"]))
                         for f in obj["firings"]],
                moves=[(str(m["sym"]), int(m["from"]), int(m["to"]), int(m["n"]))
                       for m in obj["moves"]],
                membranes=list(obj.get("membranes", [])),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise TraceFormatError(f"malformed step record: {exc}") from None


@dataclass
class Injection:
    """Objects added from outside the system (the sorter's input stream)."""
    before_step: int
    host_id: int
    contents: Multiset

    def to_json(self) -> dict:
        return {"inject": {"host_id": self.host_id, "contents": self.contents.as_dict()},
                "before_step": self.before_step}

    @classmethod
    def from_json(cls, obj: dict) -> Injection:
        try:
            inj = obj["inject"]
            return cls(int(obj["before_step"]), int(inj["host_id"]), Multiset(inj["contents"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise TraceFormatError(f"malformed inject record: {exc}") from None


TraceEvent = Union[StepReport, Injection]


class RunResult(NamedTuple):
    config: Configuration
    trace: list[TraceEvent]
    halted: bool
    steps: int


class Configuration:
    """A membrane tree, the global ruleset and the scheduler state.

    Rules are addressed to labels, so a membrane created by cloning obeys
    the same rules as the membrane it copies.
    """

    def __init__(self, root: Membrane, rules: Iterable[Rule] = (), seed: int = 0,
                 check_maximal: bool = False):
        if root.parent is not None:
            raise EngineError("configuration root must not have a parent")
        self.rules: tuple[Rule, ...] = tuple(rules)
        self._rule_index: dict[str, int] = {}
        for i, r in enumerate(self.rules):
            if r.id in self._rule_index:
                raise EngineError(f"duplicate rule id {r.id!r}")
            self._rule_index[r.id] = i
        self.root = root
        self._nodes: dict[int, Membrane] = {}
        for i, node in enumerate(root.walk()):
            node.id = i
            self._nodes[i] = node
        self._next_id = len(self._nodes)
        self.step_counter = 0
        self.seed = seed
        self.rng = random.Random(seed & SEED_MASK)
        self.check_maximal = check_maximal
        self.fire_counts: Counter[str] = Counter()
        self._index_rules()
        self._opts: dict[int, dict[int, int]] = {}
        for node in root.walk():
            self._refresh_all(node)

    # -------------------------------------------------------- indexing

    def _index_rules(self) -> None:
        self._has_clones = any(isinstance(r, CloneRule) for r in self.rules)
        self._by_label: dict[str, list[int]] = {}
        self._sym_deps: dict[str, dict[str, list[int]]] = {}
        self._child_deps: dict[str, dict[str, list[int]]] = {}
        for i, r in enumerate(self.rules):
            self._by_label.setdefault(r.scope, []).append(i)
            syms = set(r.guard.symbols())
            syms.update(r.lhs.symbols() if isinstance(r, RewriteRule) else r.trigger.symbols())
            per_sym = self._sym_deps.setdefault(r.scope, {})
            for s in syms:
                per_sym.setdefault(s, []).append(i)
            per_child = self._child_deps.setdefault(r.scope, {})
            for lab in r.guard.child_labels():
                per_child.setdefault(lab, []).append(i)

    def _set_opts(self, node: Membrane, indices: Iterable[int]) -> None:
        opts = self._opts.get(node.id)
        if opts is None:
            opts = {}
        rules = self.rules
        for i in indices:
            n = instances(rules[i], node)
            if n:
                opts[i] = n
            else:
                opts.pop(i, None)
        if opts:
            self._opts[node.id] = opts
        else:
            self._opts.pop(node.id, None)

    def _refresh_all(self, node: Membrane) -> None:
        self._opts.pop(node.id, None)
        self._set_opts(node, self._by_label.get(node.label, ()))

    # ---------------------------------------------------------- access

    def node(self, node_id: int) -> Membrane:
        try:
            return self._nodes[node_id]
        except KeyError:
            raise EngineError(f"no membrane with id {node_id}") from None

    def nodes(self) -> Iterator[Membrane]:
        return self.root.walk()

    def rule(self, rule_id: str) -> Rule:
        return self.rules[self.rule_position(rule_id)]

    def rule_position(self, rule_id: str) -> int:
        try:
            return self._rule_index[rule_id]
        except KeyError:
            raise EngineError(f"unknown rule {rule_id!r}") from None

    def reseed(self, seed: int) -> None:
        self.seed = seed
        self.rng = random.Random(seed & SEED_MASK)

    def options(self) -> list[tuple[Membrane, int, int]]:
        """Applicable ``(host, rule position, instances)`` in canonical order."""
        out = []
        for nid in sorted(self._opts):
            node = self._nodes[nid]
            for ri, n in sorted(self._opts[nid].items()):
                out.append((node, ri, n))
        return out

    def is_halted(self) -> bool:
        return not self._opts

    def inject(self, node: Membrane, contents: Multiset) -> Injection:
        if self._nodes.get(node.id) is not node:
            raise EngineError("membrane does not belong to this configuration")
        before = node.contents
        node.contents = before + contents
        self._after_content_change(node, before, contents.symbols())
        return Injection(self.step_counter, node.id, contents)

    def snapshot(self) -> Configuration:
        """Deep copy keeping ids, rules, counters and generator state."""
        clone = Configuration.__new__(Configuration)
        clone.rules = self.rules
        clone._rule_index = self._rule_index
        clone._has_clones = self._has_clones
        clone._by_label, clone._sym_deps, clone._child_deps = (
            self._by_label, self._sym_deps, self._child_deps)

        def copy(node: Membrane) -> Membrane:
            c = Membrane(node.label, node.contents, id=node.id)
            for ch in node.children:
                c.add_child(copy(ch))
            return c

        clone.root = copy(self.root)
        clone._nodes = {n.id: n for n in clone.root.walk()}
        clone._next_id = self._next_id
        clone.step_counter = self.step_counter
        clone.seed = self.seed
        clone.rng = random.Random()
        clone.rng.setstate(self.rng.getstate())
        clone.check_maximal = self.check_maximal
        clone.fire_counts = Counter(self.fire_counts)
        clone._opts = {k: dict(v) for k, v in self._opts.items()}
        return clone

    def state_hash(self) -> str:
        h = hashlib.sha256()
        h.update(f"step {self.step_counter}\n".encode())
        for node in self.root.walk():
            parent = -1 if node.parent is None else node.parent.id
            h.update(f"{node.id} {node.label} {parent} {node.contents}\n".encode())
        return h.hexdigest()

    # ------------------------------------------------------- selection

    def _new_id(self) -> int:
        i = self._next_id
        self._next_id += 1
        return i

    def _region(self, node: Membrane, rule: CloneRule) -> set[int]:
        if rule.kind is CloneKind.WRAP:
            return {node.id}
        return {n.id for n in node.walk()}

    def _saturate(self, opts: list[tuple[Membrane, int, int]]) -> list[tuple[Membrane, int, int]]:
        """Greedy saturation in random order: a non-extendable instance multiset."""
        order = list(range(len(opts)))
        self.rng.shuffle(order)
        rules = self.rules
        remaining: dict[int, dict[str, int]] = {}
        used: set[int] = set()
        locked: set[int] = set()
        chosen: list[tuple[int, int]] = []
        for pos in order:
            node, ri, _ = opts[pos]
            rule = rules[ri]
            nid = node.id
            rem = remaining.get(nid)
            if rem is None:
                rem = remaining[nid] = dict(node.contents._counts)
            if rule.__class__ is CloneRule:
                region = self._region(node, rule)
                if region & used or region & locked:
                    continue
                need = rule.trigger._counts
                if any(rem.get(s, 0) < n for s, n in need.items()):
                    continue
                for s, n in need.items():
                    rem[s] -= n
                locked |= region
                chosen.append((pos, 1))
                continue
            if nid in locked:
                continue
            if locked:
                target_ids = [resolve_target(t, node).id for t in rule.targets]
                if any(t in locked for t in target_ids):
                    continue
            need = rule.lhs._counts
            k = min(rem.get(s, 0) // n for s, n in need.items())
            if k <= 0:
                continue
            for s, n in need.items():
                rem[s] -= n * k
            if self._has_clones:
                used.add(nid)
                used.update(resolve_target(t, node).id for t in rule.targets)
            chosen.append((pos, k))
        chosen.sort()
        return [(opts[pos][0], opts[pos][1], k) for pos, k in chosen]

    def _extension(self, opts, selection) -> tuple[Membrane, int] | None:
        """An option still admissible on top of ``selection``, if any."""
        remaining: dict[int, dict[str, int]] = {}
        used: set[int] = set()
        locked: set[int] = set()

        def rem_of(node):
            if node.id not in remaining:
                remaining[node.id] = dict(node.contents._counts)
            return remaining[node.id]

        for node, ri, k in selection:
            rule = self.rules[ri]
            rem = rem_of(node)
            if isinstance(rule, CloneRule):
                for s, n in rule.trigger.items():
                    rem[s] -= n
                locked |= self._region(node, rule)
            else:
                for s, n in rule.lhs.items():
                    rem[s] -= n * k
                used.add(node.id)
                used.update(resolve_target(t, node).id for t in rule.targets)
        for node, ri, _ in opts:
            rule = self.rules[ri]
            rem = rem_of(node)
            if isinstance(rule, CloneRule):
                region = self._region(node, rule)
                if not (region & used or region & locked) and \
                        all(rem.get(s, 0) >= n for s, n in rule.trigger.items()):
                    return node, ri
            elif node.id not in locked and \
                    not any(resolve_target(t, node).id in locked for t in rule.targets) and \
                    all(rem.get(s, 0) >= n for s, n in rule.lhs.items()):
                return node, ri
        return None

    def _choose(self, mode: Mode, opts) -> list[tuple[Membrane, int, int]]:
        rng = self.rng
        if mode.kind is ModeKind.SEQUENTIAL:
            total = sum(n for _, _, n in opts)
            r = rng.randrange(total)
            for node, ri, n in opts:
                if r < n:
                    return [(node, ri, 1)]
                r -= n
            raise AssertionError("unreachable")

        selection = self._saturate(opts)
        if mode.kind is ModeKind.MAXIMAL:
            if self.check_maximal:
                extra = self._extension(opts, selection)
                if extra is not None:
                    node, ri = extra
                    raise EngineError(
                        f"step {self.step_counter + 1}: selection extendable by "
                        f"{self.rules[ri].id} in {node.label}#{node.id}")
            return selection

        if mode.kind is ModeKind.MINIMAL:
            kept = [(node, ri, rng.randint(0, k)) for node, ri, k in selection]
            kept = [entry for entry in kept if entry[2]]
            if kept:
                return kept
            total = sum(k for _, _, k in selection)
            r = rng.randrange(total)
            for node, ri, k in selection:
                if r < k:
                    return [(node, ri, 1)]
                r -= k
            raise AssertionError("unreachable")

        total = sum(k for _, _, k in selection)
        if total <= mode.limit:
            return selection
        picks = sorted(rng.sample(range(total), mode.limit))
        out = []
        base = 0
        j = 0
        for node, ri, k in selection:
            take = 0
            while j < len(picks) and picks[j] < base + k:
                take += 1
                j += 1
            if take:
                out.append((node, ri, take))
            base += k
        return out

    # ---------------------------------------------------------- commit

    def _after_content_change(self, node: Membrane, before: Multiset,
                              syms: Iterable[str]) -> None:
        deps = self._sym_deps.get(node.label)
        if deps:
            touched: set[int] = set()
            for s in syms:
                touched.update(deps.get(s, ()))
            if touched:
                self._set_opts(node, touched)
        parent = node.parent
        if parent is not None and bool(before) != bool(node.contents):
            cdeps = self._child_deps.get(parent.label)
            if cdeps and node.label in cdeps:
                self._set_opts(parent, cdeps[node.label])

    def _commit(self, selection: list[tuple[Membrane, int, int]]) -> StepReport:
        rules = self.rules
        # a clone adds at most its host subtree plus two shells
        if self._has_clones:
            growth = sum(sum(1 for _ in node.walk()) + 2 for node, ri, _ in selection
                         if isinstance(rules[ri], CloneRule))
            if len(self._nodes) + growth > MAX_MEMBRANES:
                raise EngineError(f"step {self.step_counter + 1}: the tree would exceed "
                                  f"{MAX_MEMBRANES} membranes")
        firings: list[Firing] = []
        moves: list[tuple[str, int, int, int]] = []
        membranes: list[dict] = []
        # node id -> (node, contents at step start, symbols touched)
        before: dict[int, tuple[Membrane, Multiset, set[str]]] = {}
        deliveries: list[tuple[Membrane, Multiset]] = []
        clones: list[tuple[Membrane, CloneRule]] = []

        for node, ri, k in selection:
            rule = rules[ri]
            firings.append(Firing(rule.id, node.id, k))
            entry = before.get(node.id)
            if entry is None:
                entry = before[node.id] = (node, node.contents, set())
            if isinstance(rule, CloneRule):
                if rule.trigger:
                    entry[2].update(rule.trigger._counts)
                    node.contents = node.contents - rule.trigger
                clones.append((node, rule))
                continue
            consumed = rule.lhs if k == 1 else rule.lhs * k
            entry[2].update(consumed._counts)
            node.contents = node.contents - consumed
            for target, ms in rule._products:
                dest = resolve_target(target, node)
                if dest is None:
                    raise EngineError(f"rule {rule.id}: {target_diagnostic(target, node)}")
                if k != 1:
                    ms = ms * k
                deliveries.append((dest, ms))
                if dest is not node:
                    moves.extend((sym, node.id, dest.id, n) for sym, n in ms.items())

        structural: set[int] = set()
        for node, rule in clones:
            old_parent = node.parent
            delta = apply_clone(rule, node, self._new_id)
            if delta.new_root is not None:
                self.root = delta.new_root
            for op, made in delta.created:
                self._nodes[made.id] = made
                structural.add(made.id)
                membranes.append({"op": op, "id": made.id, "label": made.label,
                                  "parent": None if made.parent is None else made.parent.id})
            structural.add(node.id)
            for n in (old_parent, node.parent):
                if n is not None:
                    structural.add(n.id)

        for node, ms in deliveries:
            entry = before.get(node.id)
            if entry is None:
                entry = before[node.id] = (node, node.contents, set())
            entry[2].update(ms._counts)
            node.contents = node.contents + ms

        for nid in sorted(structural):
            self._refresh_all(self._nodes[nid])
        for nid, (node, old, syms) in before.items():
            if node.contents != old or nid in structural:
                self._after_content_change(node, old, syms)

        for f in firings:
            self.fire_counts[f.rule] += f.count
        self.step_counter += 1
        return StepReport(self.step_counter, firings, moves, membranes)

    def step(self, mode: Mode) -> StepReport:
        opts = self.options()
        if not opts:
            raise HaltedError("configuration is halted: no rule can be applied")
        return self._commit(self._choose(mode, opts))

    def apply_firings(self, firings: Iterable[Firing]) -> StepReport:
        """Re-execute recorded firings as one step (trace replay)."""
        selection = []
        for f in firings:
            node = self.node(f.host_id)
            ri = self.rule_position(f.rule)
            rule = self.rules[ri]
            if f.count < 1:
                raise ReplayError(f"non-positive count for {f.rule}")
            if isinstance(rule, CloneRule):
                if f.count != 1 or not clone_possible(rule, node):
                    raise ReplayError(f"clone {f.rule} cannot fire in {node.label}#{node.id}")
            elif instances(rule, node) < f.count:
                raise ReplayError(f"{f.rule} cannot fire {f.count} times in {node.label}#{node.id}")
            selection.append((node, ri, f.count))
        try:
            return self._commit(selection)
        except (ValueError, EngineError) as exc:
            raise ReplayError(str(exc)) from None


def step(config: Configuration, mode: Mode) -> StepReport:
    return config.step(mode)


def is_halted(config: Configuration) -> bool:
    return config.is_halted()


def run_to_halt(config: Configuration, mode: Mode, seed: int | None = None,
                max_steps: int = DEFAULT_MAX_STEPS, record: bool = True) -> RunResult:
    """Step until no rule applies or ``max_steps`` steps have been taken.

    Non-halting is reported through the ``halted`` flag, never raised.
    """
    if max_steps < 1:
        raise ValueError("max_steps must be >= 1")
    if seed is not None:
        config.reseed(seed)
    trace: list[TraceEvent] = []
    steps = 0
    while steps < max_steps and not config.is_halted():
        report = config.step(mode)
        steps += 1
        if record:
            trace.append(report)
    return RunResult(config, trace, config.is_halted(), steps)


def replay(initial: Configuration, events: Iterable[TraceEvent]) -> Configuration:
    """Rebuild the final configuration from a copy of ``initial`` and a trace."""
    config = initial.snapshot()
    for ev in events:
        if isinstance(ev, Injection):
            if ev.before_step != config.step_counter:
                raise ReplayError(f"injection recorded before step {ev.before_step}, "
                                  f"replay is at {config.step_counter}")
            config.inject(config.node(ev.host_id), ev.contents)
            continue
        if ev.step != config.step_counter + 1:
            raise ReplayError(f"expected step {config.step_counter + 1}, trace has {ev.step}")
        config.apply_firings(ev.firings)
    return config


# ------------------------------------------------------------ trace files

def _dump(obj: dict) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def write_trace(fp: IO[str], header: dict, events: Iterable[TraceEvent],
                final: Configuration, halted: bool) -> None:
    """Line-delimited JSON: a header, one record per event, an end record."""
    fp.write(_dump({"v": TRACE_VERSION, "kind": "header", **header}) + "\n")
    count = 0
    for ev in events:
        fp.write(_dump(ev.to_json()) + "\n")
        count += 1
    fp.write(_dump({"kind": "end", "records": count, "steps": final.step_counter,
                    "halted": halted, "hash": final.state_hash()}) + "\n")


@dataclass
class TraceFile:
    header: dict
    events: list[TraceEvent]
    end: dict


def read_trace(fp: IO[str]) -> TraceFile:
    lines = [ln for ln in fp.read().splitlines() if ln.strip()]
    if not lines:
        raise TraceFormatError("unexpected end of trace: empty file")
    records = []
    for i, ln in enumerate(lines, 1):
        try:
            obj = json.loads(ln)
        except json.JSONDecodeError:
            if i == len(lines):
                raise TraceFormatError(f"unexpected end of trace: line {i} is cut off") from None
            raise TraceFormatError(f"line {i}: not valid JSON") from None
        if not isinstance(obj, dict):
            raise TraceFormatError(f"line {i}: expected an object")
        records.append(obj)
    header = records[0]
    if header.get("kind") != "header":
        raise TraceFormatError("first record is not a trace header")
    if header.get("v") != TRACE_VERSION:
        raise TraceFormatError(f"unsupported trace version {header.get('v')!r}")
    end = records[-1]
    if len(records) < 2 or end.get("kind") != "end":
        raise TraceFormatError("unexpected end of trace: no end record")
    events: list[TraceEvent] = []
    for obj in records[1:-1]:
        if "inject" in obj:
            events.append(Injection.from_json(obj))
        elif "step" in obj:
            events.append(StepReport.from_json(obj))
        else:
            raise TraceFormatError(f"unknown record {sorted(obj)}")
    if end.get("records") != len(events):
        raise TraceFormatError("unexpected end of trace: record count mismatch")
    return TraceFile(header, events, end)
