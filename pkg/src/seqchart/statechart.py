"""Minimal Harel-statechart interpreter.

Hierarchical OR-states, orthogonal AND-regions, guarded event transitions,
logical-time deadlines, and a deterministic single-microstep ``step``
function over immutable configurations.

Guards form a closed declarative atom set so charts stay serializable and
transformations can rewrite them structurally. Transitions carry optional
declarative context effects (record an outcome, bump an attempt counter,
latch a has-next flag, reset the outcome); the engine itself never mutates
an EvalContext - drivers apply effects with ``apply_effects`` after each
step.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, field, replace
from typing import Iterator

from .errors import (
    ClockRegression,
    IllFormedChart,
    InvalidConfiguration,
    InvalidEvent,
    Violation,
)

# state kinds
ATOMIC = "atomic"
OR = "or"
AND = "and"
FINAL = "final"

# event kinds
ENTER = "enter"
NEXT = "next"
BACK = "back"
SUBMIT = "submit"
ASSESSMENT_RESULT = "assessment_result"
TIMEOUT = "timeout"
EXIT_REACHED = "exit_reached"

EVENT_KINDS = (ENTER, NEXT, BACK, SUBMIT, ASSESSMENT_RESULT, TIMEOUT, EXIT_REACHED)
# kinds a learner (or policy) may inject; timeout/exit_reached are driver-internal
EXTERNAL_EVENT_KINDS = (ENTER, NEXT, BACK, SUBMIT, ASSESSMENT_RESULT)

# assessment outcomes
PASSED = "passed"
FAILED = "failed"

CMP_OPS = ("<", "<=", "=", ">=", ">")


def _cmp(op: str, left: float, right: float) -> bool:
    if op == "<":
        return left < right
    if op == "<=":
        return left <= right
    if op == "=":
        return left == right
    if op == ">=":
        return left >= right
    if op == ">":
        return left > right
    raise InvalidEvent(f"unknown comparison operator {op!r}")


# --------------------------------------------------------------------------
# guards


@dataclass(frozen=True)
class Guard:
    """Base guard node. Subclasses are the closed atom/combinator set."""

    def eval(self, ctx: "EvalContext") -> bool:
        raise NotImplementedError


@dataclass(frozen=True)
class Always(Guard):
    def eval(self, ctx: "EvalContext") -> bool:
        return True


@dataclass(frozen=True)
class Passed(Guard):
    """True when no failure is recorded. A missing outcome counts as a pass:
    content-only items must never trap the learner at their exit point."""

    def eval(self, ctx: "EvalContext") -> bool:
        return ctx.last_outcome != FAILED


@dataclass(frozen=True)
class Failed(Guard):
    def eval(self, ctx: "EvalContext") -> bool:
        return ctx.last_outcome == FAILED


@dataclass(frozen=True)
class HasNext(Guard):
    """Reads the has-next flag latched for ``state`` (default False)."""

    state: str

    def eval(self, ctx: "EvalContext") -> bool:
        return bool(ctx.has_next.get(self.state, False))


@dataclass(frozen=True)
class Attempts(Guard):
    state: str
    cmp: str
    value: int

    def eval(self, ctx: "EvalContext") -> bool:
        return _cmp(self.cmp, ctx.attempt_count.get(self.state, 0), self.value)


@dataclass(frozen=True)
class Score(Guard):
    """Compare the most recent submitted score; no score yet means False."""

    cmp: str
    value: float

    def eval(self, ctx: "EvalContext") -> bool:
        if ctx.last_score is None:
            return False
        return _cmp(self.cmp, ctx.last_score, self.value)


@dataclass(frozen=True)
class Not(Guard):
    inner: Guard

    def eval(self, ctx: "EvalContext") -> bool:
        return not self.inner.eval(ctx)


@dataclass(frozen=True)
class AllOf(Guard):
    parts: tuple[Guard, ...]

    def eval(self, ctx: "EvalContext") -> bool:
        return all(p.eval(ctx) for p in self.parts)


@dataclass(frozen=True)
class AnyOf(Guard):
    parts: tuple[Guard, ...]

    def eval(self, ctx: "EvalContext") -> bool:
        return any(p.eval(ctx) for p in self.parts)


def iter_atoms(guard: Guard) -> Iterator[Guard]:
    """Yield every atom in a guard tree (combinators are traversed)."""
    if isinstance(guard, Not):
        yield from iter_atoms(guard.inner)
    elif isinstance(guard, (AllOf, AnyOf)):
        for part in guard.parts:
            yield from iter_atoms(part)
    else:
        yield guard


def guard_to_doc(guard: Guard) -> dict:
    if isinstance(guard, Always):
        return {"op": "always"}
    if isinstance(guard, Passed):
        return {"op": "passed"}
    if isinstance(guard, Failed):
        return {"op": "failed"}
    if isinstance(guard, HasNext):
        return {"op": "has_next", "state": guard.state}
    if isinstance(guard, Attempts):
        return {"op": "attempts", "state": guard.state, "cmp": guard.cmp, "value": guard.value}
    if isinstance(guard, Score):
        return {"op": "score", "cmp": guard.cmp, "value": guard.value}
    if isinstance(guard, Not):
        return {"op": "not", "args": [guard_to_doc(guard.inner)]}
    if isinstance(guard, AllOf):
        return {"op": "and", "args": [guard_to_doc(p) for p in guard.parts]}
    if isinstance(guard, AnyOf):
        return {"op": "or", "args": [guard_to_doc(p) for p in guard.parts]}
    raise ValueError(f"unknown guard node {guard!r}")


def guard_from_doc(doc: dict) -> Guard:
    op = doc.get("op")
    if op == "always":
        return Always()
    if op == "passed":
        return Passed()
    if op == "failed":
        return Failed()
    if op == "has_next":
        return HasNext(state=doc["state"])
    if op == "attempts":
        return Attempts(state=doc["state"], cmp=doc["cmp"], value=int(doc["value"]))
    if op == "score":
        return Score(cmp=doc["cmp"], value=float(doc["value"]))
    if op == "not":
        return Not(guard_from_doc(doc["args"][0]))
    if op == "and":
        return AllOf(tuple(guard_from_doc(a) for a in doc["args"]))
    if op == "or":
        return AnyOf(tuple(guard_from_doc(a) for a in doc["args"]))
    raise ValueError(f"unknown guard op {op!r}")


# --------------------------------------------------------------------------
# events, states, transitions


@dataclass(frozen=True)
class Event:
    kind: str
    score: float | None = None
    outcome: str | None = None
    state: str | None = None

    @staticmethod
    def enter() -> "Event":
        return Event(ENTER)

    @staticmethod
    def next() -> "Event":
        return Event(NEXT)

    @staticmethod
    def back() -> "Event":
        return Event(BACK)

    @staticmethod
    def submit(score: float) -> "Event":
        return Event(SUBMIT, score=score)

    @staticmethod
    def assessment_result(outcome: str, score: float) -> "Event":
        return Event(ASSESSMENT_RESULT, score=score, outcome=outcome)

    @staticmethod
    def timeout(state: str) -> "Event":
        return Event(TIMEOUT, state=state)

    @staticmethod
    def exit_reached(state: str) -> "Event":
        return Event(EXIT_REACHED, state=state)

    def to_doc(self) -> dict:
        doc: dict = {"kind": self.kind}
        if self.score is not None:
            doc["score"] = self.score
        if self.outcome is not None:
            doc["outcome"] = self.outcome
        if self.state is not None:
            doc["state"] = self.state
        return doc


@dataclass(frozen=True)
class EventSpec:
    """What a transition listens for: an event kind, optionally pinned to
    one state payload (timeout/exit-reached of a specific state)."""

    kind: str
    state: str | None = None

    def matches(self, event: Event) -> bool:
        if self.kind != event.kind:
            return False
        return self.state is None or self.state == event.state


@dataclass(frozen=True)
class Effects:
    """Declarative context updates attached to a transition."""

    outcome: str | None = None
    count_attempt: str | None = None
    reset_outcome: bool = False
    set_has_next: tuple[str, bool] | None = None

    def is_empty(self) -> bool:
        return self == _NO_EFFECTS


_NO_EFFECTS = Effects()


@dataclass(frozen=True)
class StateNode:
    id: str
    kind: str
    children: tuple[str, ...] = ()
    initial: str | None = None
    deadline: int | None = None


@dataclass(frozen=True)
class Transition:
    source: str
    event: EventSpec
    guard: Guard
    target: str
    priority: int = 0
    effects: Effects = _NO_EFFECTS


@dataclass(frozen=True)
class Statechart:
    root: str
    states: dict[str, StateNode]
    transitions: tuple[Transition, ...]


@dataclass(frozen=True)
class Configuration:
    """The set of simultaneously active states plus entry ticks."""

    active: frozenset[str]
    entered_at: dict[str, int] = field(default_factory=dict)


@dataclass(frozen=True)
class EvalContext:
    """Everything guards may read. Values are never mutated in place;
    helpers return updated copies."""

    attempt_count: dict[str, int] = field(default_factory=dict)
    last_score: float | None = None
    last_outcome: str | None = None
    has_next: dict[str, bool] = field(default_factory=dict)
    now: int = 0
    timeouts_emitted: frozenset = frozenset()

    def with_score(self, score: float) -> "EvalContext":
        return replace(self, last_score=score)

    def with_outcome(self, outcome: str | None, score: float | None = None) -> "EvalContext":
        return replace(self, last_outcome=outcome, last_score=score)

    def with_now(self, now: int) -> "EvalContext":
        return replace(self, now=now)

    def with_timeouts_recorded(self, pairs) -> "EvalContext":
        return replace(self, timeouts_emitted=self.timeouts_emitted | frozenset(pairs))


@dataclass(frozen=True)
class StepResult:
    config: Configuration
    fired: tuple[Transition, ...]
    emitted: tuple[Event, ...]
    exited: tuple[str, ...] = ()   # innermost first
    entered: tuple[str, ...] = ()  # outermost first


# --------------------------------------------------------------------------
# per-chart derived structure (memoized; charts are immutable)


class ChartIndex:
    def __init__(self, chart: Statechart):
        self.chart = chart
        self.parent: dict[str, str] = {}
        self.depth: dict[str, int] = {chart.root: 0}
        order: list[str] = [chart.root]
        seen = {chart.root}
        i = 0
        while i < len(order):
            sid = order[i]
            i += 1
            node = chart.states.get(sid)
            if node is None:
                continue
            for child in node.children:
                if child in seen:
                    continue  # check_chart reports duplicates
                seen.add(child)
                self.parent[child] = sid
                self.depth[child] = self.depth[sid] + 1
                order.append(child)
        self.order = order
        self.leaves = frozenset(
            sid for sid in order if chart.states[sid].kind in (ATOMIC, FINAL)
        )
        self.by_source: dict[str, list[tuple[int, Transition]]] = {}
        for idx, tr in enumerate(chart.transitions):
            self.by_source.setdefault(tr.source, []).append((idx, tr))
        self.deadline_states = tuple(
            sid for sid in order if chart.states[sid].deadline is not None
        )

    def ancestors(self, sid: str) -> list[str]:
        """Proper ancestors, innermost first."""
        out = []
        cur = self.parent.get(sid)
        while cur is not None:
            out.append(cur)
            cur = self.parent.get(cur)
        return out

    def is_ancestor(self, anc: str, sid: str) -> bool:
        cur = self.parent.get(sid)
        while cur is not None:
            if cur == anc:
                return True
            cur = self.parent.get(cur)
        return False

    def domain(self, source: str, target: str) -> str:
        """Least common compound-OR proper ancestor of source and target."""
        source_chain = set(self.ancestors(source))
        for anc in self.ancestors(target):
            if anc in source_chain and self.chart.states[anc].kind == OR:
                return anc
        raise InvalidConfiguration(
            f"no common OR ancestor for transition {source!r} -> {target!r}"
        )


_INDEX_CACHE: "OrderedDict[int, tuple[Statechart, ChartIndex]]" = OrderedDict()
_INDEX_CACHE_CAP = 256


def index_for(chart: Statechart) -> ChartIndex:
    key = id(chart)
    hit = _INDEX_CACHE.get(key)
    if hit is not None and hit[0] is chart:
        _INDEX_CACHE.move_to_end(key)
        return hit[1]
    index = ChartIndex(chart)
    _INDEX_CACHE[key] = (chart, index)
    if len(_INDEX_CACHE) > _INDEX_CACHE_CAP:
        _INDEX_CACHE.popitem(last=False)
    return index


# --------------------------------------------------------------------------
# structural checking


def check_chart(chart: Statechart) -> list[Violation]:
    """Empty iff the chart is structurally sound."""
    v: list[Violation] = []
    states = chart.states
    if chart.root not in states:
        v.append(Violation(chart.root, "missing-root", "root state is not defined"))
        return v
    if states[chart.root].kind != OR:
        v.append(Violation(chart.root, "root-kind", "root must be a compound OR state"))

    claimed: dict[str, str] = {}
    for sid, node in states.items():
        if sid != node.id:
            v.append(Violation(sid, "id-mismatch", f"state keyed {sid!r} carries id {node.id!r}"))
        if node.kind not in (ATOMIC, OR, AND, FINAL):
            v.append(Violation(sid, "unknown-kind", f"state kind {node.kind!r} is not recognized"))
            continue
        if node.kind in (ATOMIC, FINAL):
            if node.children:
                v.append(Violation(sid, "leaf-children", f"{node.kind} state {sid!r} lists children"))
            if node.initial is not None:
                v.append(Violation(sid, "leaf-initial", f"{node.kind} state {sid!r} has an initial"))
        if node.kind == OR:
            if not node.children:
                v.append(Violation(sid, "empty-or", f"OR state {sid!r} has no children"))
            if node.initial is None:
                v.append(Violation(sid, "missing-initial", f"OR state {sid!r} has no initial child"))
            elif node.initial not in node.children:
                v.append(Violation(sid, "bad-initial", f"initial {node.initial!r} is not a child of {sid!r}"))
        if node.kind == AND:
            if len(node.children) < 2:
                v.append(Violation(sid, "thin-and", f"AND state {sid!r} needs at least two regions"))
            if node.initial is not None:
                v.append(Violation(sid, "and-initial", f"AND state {sid!r} must not declare an initial"))
            for region in node.children:
                if region in states and states[region].kind != OR:
                    v.append(Violation(region, "region-kind", f"region {region!r} of {sid!r} must be an OR state"))
        if node.deadline is not None and node.deadline <= 0:
            v.append(Violation(sid, "bad-deadline", f"deadline {node.deadline} must be positive"))
        for child in node.children:
            if child not in states:
                v.append(Violation(sid, "unknown-child", f"state {sid!r} lists unknown child {child!r}"))
            elif child in claimed:
                v.append(Violation(child, "multi-parent", f"state {child!r} claimed by {claimed[child]!r} and {sid!r}"))
            elif child == chart.root:
                v.append(Violation(child, "root-child", "root may not appear as a child"))
            else:
                claimed[child] = sid

    for sid in states:
        if sid != chart.root and sid not in claimed:
            v.append(Violation(sid, "orphan-state", f"state {sid!r} is not reachable from the root"))

    region_roots = {
        child
        for sid, node in states.items()
        if node.kind == AND
        for child in node.children
    }
    for idx, tr in enumerate(chart.transitions):
        tid = f"t{idx}"
        if tr.source not in states:
            v.append(Violation(tid, "unknown-source", f"transition {tid} sources unknown state {tr.source!r}"))
        if tr.target not in states:
            v.append(Violation(tid, "unknown-target", f"transition {tid} targets unknown state {tr.target!r}"))
            continue
        if tr.target in region_roots:
            v.append(Violation(tid, "region-target", f"transition {tid} targets region root {tr.target!r}"))
        if tr.target == chart.root or tr.source == chart.root:
            v.append(Violation(tid, "root-transition", f"transition {tid} may not source or target the root"))
        if tr.event.kind not in EVENT_KINDS:
            v.append(Violation(tid, "unknown-event", f"transition {tid} listens for unknown kind {tr.event.kind!r}"))
        for atom in iter_atoms(tr.guard):
            if isinstance(atom, (Attempts,)) and atom.cmp not in CMP_OPS:
                v.append(Violation(tid, "bad-cmp", f"guard comparison {atom.cmp!r} is not recognized"))
            if isinstance(atom, Score) and atom.cmp not in CMP_OPS:
                v.append(Violation(tid, "bad-cmp", f"guard comparison {atom.cmp!r} is not recognized"))
    return v


# --------------------------------------------------------------------------
# configurations


def _complete_default(chart: Statechart, sid: str, entered: list[str]) -> None:
    entered.append(sid)
    node = chart.states[sid]
    if node.kind == OR:
        _complete_default(chart, node.initial, entered)
    elif node.kind == AND:
        for region in node.children:
            _complete_default(chart, region, entered)


def initial_configuration(chart: Statechart) -> Configuration:
    """Cascade default entry from the root; entry ticks start at 0."""
    problems = check_chart(chart)
    if problems:
        raise IllFormedChart(f"chart fails {len(problems)} structural check(s): {problems[0]}")
    entered: list[str] = []
    _complete_default(chart, chart.root, entered)
    return Configuration(active=frozenset(entered), entered_at={sid: 0 for sid in entered})


def validate_configuration(chart: Statechart, config: Configuration) -> list[Violation]:
    v: list[Violation] = []
    index = index_for(chart)
    for sid in config.active:
        if sid not in chart.states:
            v.append(Violation(sid, "unknown-state", f"active state {sid!r} is not in the chart"))
    active = {sid for sid in config.active if sid in chart.states}
    if chart.root not in active:
        v.append(Violation(chart.root, "root-inactive", "root is not active"))
    for sid in active:
        node = chart.states[sid]
        parent = index.parent.get(sid)
        if parent is not None and parent not in active:
            v.append(Violation(sid, "detached", f"active state {sid!r} has inactive parent {parent!r}"))
        if node.kind == OR:
            live = [c for c in node.children if c in active]
            if len(live) != 1:
                v.append(Violation(sid, "or-children", f"OR state {sid!r} has {len(live)} active children, wants 1"))
        elif node.kind == AND:
            dead = [c for c in node.children if c not in active]
            if dead:
                v.append(Violation(sid, "and-children", f"AND state {sid!r} has inactive regions {dead}"))
    if set(config.entered_at) != active:
        v.append(Violation(chart.root, "entered-at", "entered_at keys do not match the active set"))
    return v


def active_leaves(chart: Statechart, config: Configuration) -> list[str]:
    index = index_for(chart)
    return sorted(config.active & index.leaves)


def leaf_path(chart: Statechart, config: Configuration) -> list[str]:
    """Root-to-leaf path for an AND-free configuration, ordered by depth."""
    index = index_for(chart)
    return sorted(config.active, key=lambda s: (index.depth.get(s, 0), s))


# --------------------------------------------------------------------------
# stepping


def _validate_event(event: Event) -> None:
    if event.kind not in EVENT_KINDS:
        raise InvalidEvent(f"unknown event kind {event.kind!r}")
    if event.kind in (SUBMIT, ASSESSMENT_RESULT):
        if event.score is None or not 0.0 <= event.score <= 1.0:
            raise InvalidEvent(f"{event.kind} score {event.score!r} outside [0, 1]")
    if event.kind == ASSESSMENT_RESULT and event.outcome not in (PASSED, FAILED):
        raise InvalidEvent(f"assessment_result outcome {event.outcome!r} invalid")
    if event.kind in (TIMEOUT, EXIT_REACHED) and not event.state:
        raise InvalidEvent(f"{event.kind} event needs a state payload")


def _exit_set(chart: Statechart, index: ChartIndex, active: frozenset, domain: str) -> set[str]:
    return {sid for sid in active if index.is_ancestor(domain, sid)}


def enabled_transitions(
    chart: Statechart, config: Configuration, event: Event, ctx: EvalContext
) -> list[Transition]:
    """Transitions that would fire for this event, in firing order.

    Ordered innermost-source-first, then by priority, then declaration
    order; transitions whose exit sets overlap an earlier pick are pruned.
    """
    index = index_for(chart)
    candidates: list[tuple[int, int, int, Transition]] = []
    for sid in config.active:
        for decl_idx, tr in index.by_source.get(sid, ()):
            if not tr.event.matches(event):
                continue
            if not tr.guard.eval(ctx):
                continue
            candidates.append((-index.depth[sid], tr.priority, decl_idx, tr))
    candidates.sort(key=lambda c: (c[0], c[1], c[2]))
    picked: list[Transition] = []
    claimed_exits: set[str] = set()
    for _, _, _, tr in candidates:
        exits = _exit_set(chart, index, config.active, index.domain(tr.source, tr.target))
        if exits & claimed_exits:
            continue
        claimed_exits |= exits
        picked.append(tr)
    return picked


def step(chart: Statechart, config: Configuration, event: Event, ctx: EvalContext) -> StepResult:
    """Fire every enabled (non-conflicting) transition once, deterministically.

    Exits run children-before-parents, entries parents-before-children with
    default completion below each target. Entering a Final child of a
    compound emits ExitReached(compound). With nothing enabled the
    configuration is returned unchanged.
    """
    _validate_event(event)
    problems = validate_configuration(chart, config)
    if problems:
        raise InvalidConfiguration(str(problems[0]))
    fired = enabled_transitions(chart, config, event, ctx)
    if not fired:
        return StepResult(config=config, fired=(), emitted=())

    index = index_for(chart)
    active = set(config.active)
    entered_at = dict(config.entered_at)
    emitted: list[Event] = []
    all_exited: list[str] = []
    all_entered: list[str] = []

    for tr in fired:
        domain = index.domain(tr.source, tr.target)
        exits = sorted(
            _exit_set(chart, index, frozenset(active), domain),
            key=lambda s: (-index.depth[s], s),
        )
        for sid in exits:
            active.discard(sid)
            entered_at.pop(sid, None)
        all_exited.extend(exits)

        path: list[str] = []
        cur = tr.target
        while cur != domain:
            path.append(cur)
            parent = index.parent.get(cur)
            if parent is None:
                raise InvalidConfiguration(f"target {tr.target!r} detached from domain {domain!r}")
            cur = parent
        path.reverse()

        entered: list[str] = []
        _enter_along(chart, path, 0, entered)
        for sid in entered:
            active.add(sid)
            entered_at[sid] = ctx.now
            node = chart.states[sid]
            if node.kind == FINAL:
                parent = index.parent.get(sid)
                if parent is not None:
                    emitted.append(Event.exit_reached(parent))
        all_entered.extend(entered)

    new_config = Configuration(active=frozenset(active), entered_at=entered_at)
    return StepResult(
        config=new_config,
        fired=tuple(fired),
        emitted=tuple(emitted),
        exited=tuple(all_exited),
        entered=tuple(all_entered),
    )


def _enter_along(chart: Statechart, path: list[str], i: int, entered: list[str]) -> None:
    sid = path[i]
    entered.append(sid)
    node = chart.states[sid]
    nxt = path[i + 1] if i + 1 < len(path) else None
    if nxt is None:
        if node.kind == OR:
            _complete_default(chart, node.initial, entered)
        elif node.kind == AND:
            for region in node.children:
                _complete_default(chart, region, entered)
        return
    if node.kind == AND:
        for region in node.children:
            if region == nxt:
                _enter_along(chart, path, i + 1, entered)
            else:
                _complete_default(chart, region, entered)
    else:
        _enter_along(chart, path, i + 1, entered)


def apply_effects(ctx: EvalContext, fired: tuple[Transition, ...]) -> EvalContext:
    """Apply the fired transitions' declarative context effects, in order."""
    attempt_count = ctx.attempt_count
    has_next = ctx.has_next
    last_score = ctx.last_score
    last_outcome = ctx.last_outcome
    for tr in fired:
        eff = tr.effects
        if eff.reset_outcome:
            last_outcome = None
            last_score = None
        if eff.outcome is not None:
            last_outcome = eff.outcome
        if eff.count_attempt is not None:
            attempt_count = dict(attempt_count)
            attempt_count[eff.count_attempt] = attempt_count.get(eff.count_attempt, 0) + 1
        if eff.set_has_next is not None:
            has_next = dict(has_next)
            has_next[eff.set_has_next[0]] = eff.set_has_next[1]
    return replace(
        ctx,
        attempt_count=attempt_count,
        has_next=has_next,
        last_score=last_score,
        last_outcome=last_outcome,
    )


def advance_clock(chart: Statechart, config: Configuration, ctx: EvalContext, new_now: int) -> list[Event]:
    """Timeouts due by new_now for active deadline states, at most one per
    entry; ordered by due tick then state id. Pure: the caller records the
    emissions with ``ctx.with_timeouts_recorded``."""
    if new_now < ctx.now:
        raise ClockRegression(f"clock moved from {ctx.now} back to {new_now}")
    due: list[tuple[int, str]] = []
    for sid in config.active:
        node = chart.states.get(sid)
        if node is None or node.deadline is None:
            continue
        entered = config.entered_at.get(sid, 0)
        if (sid, entered) in ctx.timeouts_emitted:
            continue
        if entered + node.deadline <= new_now:
            due.append((entered + node.deadline, sid))
    due.sort()
    return [Event.timeout(sid) for _, sid in due]


def timeout_record_pairs(config: Configuration, events: list[Event]):
    """(state, entered_at) pairs to mark the given timeouts as emitted."""
    return [(e.state, config.entered_at.get(e.state, 0)) for e in events]


def available_events(chart: Statechart, config: Configuration, ctx: EvalContext) -> list[str]:
    """External event kinds a learner could inject right now.

    Score-carrying kinds count as available when any matching transition
    exists, because their guards depend on the submitted payload; the rest
    need a guard that is true under the current context.
    """
    index = index_for(chart)
    found: set[str] = set()
    for sid in config.active:
        for _, tr in index.by_source.get(sid, ()):
            kind = tr.event.kind
            if kind not in EXTERNAL_EVENT_KINDS or kind in found:
                continue
            if kind in (SUBMIT, ASSESSMENT_RESULT) or tr.guard.eval(ctx):
                found.add(kind)
    return [k for k in EXTERNAL_EVENT_KINDS if k in found]


def max_attempt_constant(chart: Statechart) -> int:
    """Largest constant any attempt-count guard compares against (0 if none).

    Guards cannot distinguish counts above this bound, so abstractions cap
    attempt counters at this value plus one.
    """
    best = 0
    for tr in chart.transitions:
        for atom in iter_atoms(tr.guard):
            if isinstance(atom, Attempts):
                best = max(best, atom.value)
    return best


def score_constants(chart: Statechart) -> list[float]:
    """Distinct score thresholds appearing in guards, ascending."""
    vals = set()
    for tr in chart.transitions:
        for atom in iter_atoms(tr.guard):
            if isinstance(atom, Score):
                vals.add(atom.value)
    return sorted(vals)


# --------------------------------------------------------------------------
# serialization


def chart_to_doc(chart: Statechart) -> dict:
    states = []
    for sid, node in chart.states.items():
        sdoc: dict = {"id": sid, "kind": node.kind}
        if node.children:
            sdoc["children"] = list(node.children)
        if node.initial is not None:
            sdoc["initial"] = node.initial
        if node.deadline is not None:
            sdoc["deadline"] = node.deadline
        states.append(sdoc)
    transitions = []
    for tr in chart.transitions:
        edoc: dict = {"kind": tr.event.kind}
        if tr.event.state is not None:
            edoc["state"] = tr.event.state
        tdoc: dict = {
            "source": tr.source,
            "event": edoc,
            "guard": guard_to_doc(tr.guard),
            "target": tr.target,
            "priority": tr.priority,
        }
        eff = tr.effects
        if not eff.is_empty():
            effdoc: dict = {}
            if eff.outcome is not None:
                effdoc["outcome"] = eff.outcome
            if eff.count_attempt is not None:
                effdoc["count_attempt"] = eff.count_attempt
            if eff.reset_outcome:
                effdoc["reset_outcome"] = True
            if eff.set_has_next is not None:
                effdoc["set_has_next"] = {"state": eff.set_has_next[0], "value": eff.set_has_next[1]}
            tdoc["effects"] = effdoc
        transitions.append(tdoc)
    return {"root": chart.root, "states": states, "transitions": transitions}


def chart_from_doc(doc: dict) -> Statechart:
    states: dict[str, StateNode] = {}
    for sdoc in doc["states"]:
        states[sdoc["id"]] = StateNode(
            id=sdoc["id"],
            kind=sdoc["kind"],
            children=tuple(sdoc.get("children", ())),
            initial=sdoc.get("initial"),
            deadline=sdoc.get("deadline"),
        )
    transitions = []
    for tdoc in doc["transitions"]:
        effdoc = tdoc.get("effects", {})
        latch = effdoc.get("set_has_next")
        transitions.append(
            Transition(
                source=tdoc["source"],
                event=EventSpec(kind=tdoc["event"]["kind"], state=tdoc["event"].get("state")),
                guard=guard_from_doc(tdoc["guard"]),
                target=tdoc["target"],
                priority=tdoc.get("priority", 0),
                effects=Effects(
                    outcome=effdoc.get("outcome"),
                    count_attempt=effdoc.get("count_attempt"),
                    reset_outcome=effdoc.get("reset_outcome", False),
                    set_has_next=(latch["state"], latch["value"]) if latch else None,
                ),
            )
        )
    return Statechart(root=doc["root"], states=states, transitions=tuple(transitions))
