"""Reference checks written independently of the engine internals."""

from __future__ import annotations

from membrana.core import Membrane
from membrana.engine import Configuration, StepReport
from membrana.rules import CloneKind, CloneRule, instances, resolve_target


def _subtree_ids(node: Membrane) -> set[int]:
    return {n.id for n in node.walk()}


def _touched(rule, host: Membrane) -> set[int]:
    if isinstance(rule, CloneRule):
        return {host.id} if rule.kind is CloneKind.WRAP else _subtree_ids(host)
    return {host.id} | {resolve_target(t, host).id for t in rule.targets}


def extension(before: Configuration, report: StepReport):
    """A rule instance still applicable after ``report``'s firings, or None.

    ``before`` is the configuration at the start of the step.  Objects the
    firings consumed are removed from the snapshot; membranes restructured
    by a clone (and, for the other clone kinds, their subtrees) are taken
    by that clone and unavailable to anything else.
    """
    left = {n.id: dict(n.contents.as_dict()) for n in before.nodes()}
    busy: set[int] = set()
    cloned: set[int] = set()
    for f in report.firings:
        host = before.node(f.host_id)
        rule = before.rule(f.rule)
        need = rule.trigger if isinstance(rule, CloneRule) else rule.lhs * f.count
        for sym, n in need.items():
            left[host.id][sym] = left[host.id].get(sym, 0) - n
            assert left[host.id][sym] >= 0, f"{f.rule} overdraws {sym}"
        if isinstance(rule, CloneRule):
            cloned |= _touched(rule, host)
        else:
            busy |= _touched(rule, host)
    for host in before.nodes():
        for rule in before.rules:
            if instances(rule, host) == 0:
                continue
            need = rule.trigger if isinstance(rule, CloneRule) else rule.lhs
            if any(left[host.id].get(s, 0) < n for s, n in need.items()):
                continue
            region = _touched(rule, host)
            if isinstance(rule, CloneRule):
                if region & (busy | cloned):
                    continue
            elif region & cloned:
                continue
            return rule.id, host.id
    return None
