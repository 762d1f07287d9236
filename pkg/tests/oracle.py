"""Brute-force enumeration oracle, independent of the explorer.

Enumerates event sequences depth-first over concrete engine steps,
memoizing on the same finite context classes guards can distinguish:
attempt counters matter only up to the largest guard constant plus one,
and has-next latches only while their state is active. Submitted scores
range over every guard threshold and the gaps between them, derived here
from scratch so the two implementations share nothing but the engine.
"""

from __future__ import annotations

from seqchart.simulate import at_global_final
from seqchart.statechart import (
    BACK,
    ENTER,
    NEXT,
    SUBMIT,
    TIMEOUT,
    Attempts,
    Configuration,
    EvalContext,
    Event,
    HasNext,
    Score,
    apply_effects,
    initial_configuration,
    iter_atoms,
    step,
)


class OracleBudgetExceeded(RuntimeError):
    pass


def _score_points(chart) -> list[float]:
    consts = set()
    for tr in chart.transitions:
        for atom in iter_atoms(tr.guard):
            if isinstance(atom, Score):
                consts.add(atom.value)
    pts = sorted(consts | {0.0, 1.0})
    out = list(pts)
    for lo, hi in zip(pts, pts[1:]):
        out.append(lo + (hi - lo) / 2)
    return sorted(set(p for p in out if 0.0 <= p <= 1.0))


def _attempt_meta(chart) -> tuple[frozenset, int]:
    states = set()
    cap = 0
    for tr in chart.transitions:
        for atom in iter_atoms(tr.guard):
            if isinstance(atom, Attempts):
                states.add(atom.state)
                cap = max(cap, atom.value)
    return frozenset(states), cap + 1


def _latch_states(chart) -> frozenset:
    states = set()
    for tr in chart.transitions:
        for atom in iter_atoms(tr.guard):
            if isinstance(atom, HasNext):
                states.add(atom.state)
    return frozenset(states)


def enumerate_space(chart, alphabet, max_expansions: int = 500_000):
    """All states visitable under any event sequence whose recorded
    assessment outcomes stay within the alphabet.

    Returns (visited state ids, completion reachable).
    """
    alphabet = frozenset(alphabet)
    points = _score_points(chart)
    attempt_states, attempt_cap = _attempt_meta(chart)
    latch_states = _latch_states(chart)
    init = initial_configuration(chart)

    def classify(active, ctx: EvalContext):
        attempts = tuple(
            sorted(
                (s, min(ctx.attempt_count.get(s, 0), attempt_cap))
                for s in attempt_states
                if ctx.attempt_count.get(s, 0)
            )
        )
        latches = tuple(
            sorted((s, ctx.has_next[s]) for s in latch_states if s in active and s in ctx.has_next)
        )
        return attempts, latches

    def candidate_events(active):
        kinds = set()
        for tr in chart.transitions:
            if tr.source in active:
                kinds.add(tr.event.kind)
        events = []
        for kind in (ENTER, NEXT, BACK):
            if kind in kinds:
                events.append(Event(kind))
        if SUBMIT in kinds:
            events.extend(Event.submit(p) for p in points)
        if TIMEOUT in kinds:
            for sid in sorted(active):
                node = chart.states.get(sid)
                if node is not None and node.deadline is not None:
                    events.append(Event.timeout(sid))
        return events

    seen = set()
    visited_states = set()
    completed = False
    expansions = 0
    stack = [(init.active, EvalContext(), ())]

    while stack:
        active, ctx, pending = stack.pop()
        attempts, latches = classify(active, ctx)
        key = (active, ctx.last_outcome, attempts, latches, pending)
        if key in seen:
            continue
        seen.add(key)
        expansions += 1
        if expansions > max_expansions:
            raise OracleBudgetExceeded(f"exceeded {max_expansions} expansions")
        visited_states.update(active)
        config = Configuration(active=active, entered_at={s: 0 for s in active})
        if at_global_final(chart, config):
            completed = True
            continue

        def push(event: Event, ctx_in: EvalContext, rest: tuple, allow_noop: bool):
            result = step(chart, config, event, ctx_in)
            if not result.fired and not allow_noop:
                return
            for tr in result.fired:
                if tr.effects.outcome is not None and tr.effects.outcome not in alphabet:
                    return
            ctx_out = apply_effects(ctx_in, result.fired)
            stack.append(
                (result.config.active, ctx_out, rest + tuple((e.kind, e.state) for e in result.emitted))
            )

        if pending:
            # internal events are consumed even when nothing matches
            kind, state = pending[0]
            push(Event(kind, state=state), ctx, pending[1:], allow_noop=True)
            continue
        for event in candidate_events(active):
            if event.kind == SUBMIT:
                push(event, ctx.with_score(event.score), (), allow_noop=False)
            else:
                push(event, ctx, (), allow_noop=False)

    return visited_states, completed
