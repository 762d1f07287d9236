"""Composable chart transformations encoding learning strategies.

A strategy is a named, parameterized total mapping from one sequencing
chart to another; pipelines compose left to right (the first listed is
applied first). Strategies operate on the compiled chart, using the
compilation map for semantic anchors (which states are entry choices,
exit points, item finals).

Built-ins:

  identity            no change
  linear_lock         re-asserts the compiler default: strips Back
                      transitions and entry-side skip shortcuts
  mastery_threshold   overrides every per-unit mastery score in the
                      submit guards with one threshold
  max_attempts        caps failed attempts per item; afterwards skips
                      forward or remediates to the item start
  skip_ahead          lets a learner holding a pass jump from an item's
                      entry straight to its exit point
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace
from typing import Callable

from .compiler import CompilationMap, RETRY_PRIORITY
from .errors import IllFormedChart, InapplicableStrategy, InvalidStrategy
from .statechart import (
    BACK,
    ENTER,
    NEXT,
    SUBMIT,
    AllOf,
    AnyOf,
    Attempts,
    EventSpec,
    Failed,
    Guard,
    Not,
    Passed,
    Score,
    Statechart,
    Transition,
    check_chart,
)

SKIP = "skip"
REMEDIATE = "remediate-to-item-start"


@dataclass(frozen=True)
class Strategy:
    name: str
    params: dict
    transform: Callable[[Statechart, CompilationMap], Statechart]


def apply(strategy: Strategy, chart: Statechart, cmap: CompilationMap, strict: bool = True) -> Statechart:
    """Apply one strategy; the input chart is never modified.

    With strict=True an inapplicable strategy raises; otherwise it warns
    and returns the chart unchanged. Output well-formedness is enforced.
    """
    problems = check_chart(chart)
    if problems:
        raise IllFormedChart(f"refusing to transform an ill-formed chart: {problems[0]}")
    try:
        result = strategy.transform(chart, cmap)
    except InapplicableStrategy:
        if strict:
            raise
        warnings.warn(f"strategy {strategy.name} not applicable, chart unchanged", stacklevel=2)
        return chart
    problems = check_chart(result)
    if problems:
        raise IllFormedChart(f"strategy {strategy.name} produced an ill-formed chart: {problems[0]}")
    return result


def compose(pipeline: list[Strategy]) -> Strategy:
    """One strategy equal to applying the pipeline members left to right."""
    members = tuple(pipeline)

    def transform(chart: Statechart, cmap: CompilationMap) -> Statechart:
        for member in members:
            chart = apply(member, chart, cmap)
        return chart

    name = "composed(" + ",".join(m.name for m in members) + ")"
    return Strategy(name=name, params={"members": [m.name for m in members]}, transform=transform)


# --------------------------------------------------------------------------
# built-ins


def identity() -> Strategy:
    return Strategy(name="identity", params={}, transform=lambda chart, cmap: chart)


def _item_ids(cmap: CompilationMap) -> list[str]:
    return [nid for nid, exit_state in cmap.exit_of.items() if exit_state.endswith("#exit")]


def linear_lock() -> Strategy:
    """Strip navigation shortcuts so only the compiled linear flow remains."""

    def transform(chart: Statechart, cmap: CompilationMap) -> Statechart:
        entry_states = {cmap.entry_of[i] for i in _item_ids(cmap)}
        kept = tuple(
            tr
            for tr in chart.transitions
            if tr.event.kind != BACK and not (tr.event.kind == NEXT and tr.source in entry_states)
        )
        if len(kept) == len(chart.transitions):
            return chart
        return replace(chart, transitions=kept)

    return Strategy(name="linear_lock", params={}, transform=transform)


def mastery_threshold(threshold: float) -> Strategy:
    """Replace every submit-guard score constant with one shared threshold."""
    if not isinstance(threshold, (int, float)) or not 0.0 <= threshold <= 1.0:
        raise InvalidStrategy(f"mastery threshold {threshold!r} outside [0, 1]")
    threshold = float(threshold)

    def rewrite(guard: Guard) -> Guard:
        if isinstance(guard, Score):
            return Score(cmp=guard.cmp, value=threshold)
        if isinstance(guard, Not):
            return Not(rewrite(guard.inner))
        if isinstance(guard, AllOf):
            return AllOf(tuple(rewrite(p) for p in guard.parts))
        if isinstance(guard, AnyOf):
            return AnyOf(tuple(rewrite(p) for p in guard.parts))
        return guard

    def transform(chart: Statechart, cmap: CompilationMap) -> Statechart:
        touched = 0
        out = []
        for tr in chart.transitions:
            if tr.event.kind == SUBMIT:
                new_guard = rewrite(tr.guard)
                if new_guard != tr.guard:
                    touched += 1
                out.append(replace(tr, guard=new_guard))
            else:
                out.append(tr)
        if touched == 0:
            raise InapplicableStrategy("no submit transitions with score guards to rewrite")
        return replace(chart, transitions=tuple(out))

    return Strategy(name="mastery_threshold", params={"threshold": threshold}, transform=transform)


def max_attempts(limit: int, action: str = SKIP) -> Strategy:
    """Bound failed attempts per item.

    The retry rule gains an attempts-below-limit guard; a new priority-0
    exit rule handles the exhausted case, either skipping to the item's
    final state or sending the learner back to the item start.
    """
    if not isinstance(limit, int) or limit < 1:
        raise InvalidStrategy(f"attempt limit {limit!r} must be a positive integer")
    if action not in (SKIP, REMEDIATE):
        raise InvalidStrategy(f"unknown max_attempts action {action!r}")

    def transform(chart: Statechart, cmap: CompilationMap) -> Statechart:
        items = _item_ids(cmap)
        if not items:
            raise InapplicableStrategy("chart has no item exit points")
        exit_to_item = {cmap.exit_of[i]: i for i in items}
        out: list[Transition] = []
        added: list[Transition] = []
        for tr in chart.transitions:
            item_id = exit_to_item.get(tr.source)
            if (
                item_id is not None
                and tr.event.kind == ENTER
                and tr.priority == RETRY_PRIORITY
                and isinstance(tr.guard, Failed)
            ):
                counter = cmap.node_state[item_id]
                out.append(
                    replace(tr, guard=AllOf((Failed(), Attempts(counter, "<", limit))))
                )
                target = cmap.final_of[item_id] if action == SKIP else cmap.entry_of[item_id]
                added.append(
                    Transition(
                        source=tr.source,
                        event=EventSpec(ENTER),
                        guard=AllOf((Failed(), Attempts(counter, ">=", limit))),
                        target=target,
                        priority=0,
                    )
                )
            else:
                out.append(tr)
        if not added:
            raise InapplicableStrategy("no retry rules found to bound")
        return replace(chart, transitions=tuple(out) + tuple(added))

    return Strategy(name="max_attempts", params={"limit": limit, "action": action}, transform=transform)


def skip_ahead() -> Strategy:
    """Offer a Next shortcut from entry to exit point, guarded on a pass."""

    def transform(chart: Statechart, cmap: CompilationMap) -> Statechart:
        items = _item_ids(cmap)
        if not items:
            raise InapplicableStrategy("chart has no item entry points")
        existing = set(chart.transitions)
        added = []
        for item_id in items:
            shortcut = Transition(
                source=cmap.entry_of[item_id],
                event=EventSpec(NEXT),
                guard=Passed(),
                target=cmap.exit_of[item_id],
                priority=0,
            )
            if shortcut not in existing:
                added.append(shortcut)
        if not added:
            return chart
        return replace(chart, transitions=chart.transitions + tuple(added))

    return Strategy(name="skip_ahead", params={}, transform=transform)


# --------------------------------------------------------------------------
# pipeline documents


_BUILDERS: dict[str, Callable[..., Strategy]] = {
    "identity": identity,
    "linear_lock": linear_lock,
    "mastery_threshold": mastery_threshold,
    "max_attempts": max_attempts,
    "skip_ahead": skip_ahead,
}


def make_strategy(name: str, params: dict | None = None) -> Strategy:
    params = dict(params or {})
    builder = _BUILDERS.get(name)
    if builder is None:
        raise InvalidStrategy(f"unknown strategy {name!r}")
    try:
        return builder(**params)
    except TypeError as exc:
        raise InvalidStrategy(f"bad params for strategy {name!r}: {exc}") from exc


def parse_pipeline(doc: object) -> list[Strategy]:
    """Read an ordered pipeline document: [{"name": ..., "params": {...}}, ...]."""
    if not isinstance(doc, list):
        raise InvalidStrategy("strategy pipeline must be a list")
    out = []
    for i, entry in enumerate(doc):
        if not isinstance(entry, dict) or "name" not in entry:
            raise InvalidStrategy(f"pipeline entry {i} must be an object with a 'name'")
        unknown = set(entry) - {"name", "params"}
        if unknown:
            raise InvalidStrategy(f"pipeline entry {i} has unknown field {sorted(unknown)[0]!r}")
        out.append(make_strategy(entry["name"], entry.get("params")))
    return out
