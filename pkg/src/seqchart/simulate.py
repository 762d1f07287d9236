"""Learner simulation and state-space analysis over compiled charts.

``run_session`` drives a chart with a scripted learner policy, one logical
tick per engine step, injecting due timeouts ahead of learner choices and
pumping engine-emitted propagation events before asking the policy again.

``explore`` walks the whole (configuration, abstract context) product
space under a chosen outcome alphabet: attempt counters are capped just
above the largest constant any guard compares against (guards cannot tell
higher counts apart), submitted scores are sampled at every guard
threshold and between them, and logical time is abstracted so a timeout
may fire whenever an armed state is active.
"""

from __future__ import annotations

import json
import math
import random
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Iterable

from .errors import PolicyError
from .statechart import (
    ASSESSMENT_RESULT,
    BACK,
    ENTER,
    FAILED,
    FINAL,
    NEXT,
    PASSED,
    SUBMIT,
    TIMEOUT,
    Attempts,
    Configuration,
    EvalContext,
    Event,
    HasNext,
    Statechart,
    advance_clock,
    apply_effects,
    available_events,
    check_chart,
    index_for,
    initial_configuration,
    iter_atoms,
    leaf_path,
    max_attempt_constant,
    score_constants,
    step,
    timeout_record_pairs,
)

COMPLETED = "completed"
BUDGET_EXHAUSTED = "step_budget_exhausted"
LIVELOCK = "livelock_detected"


# --------------------------------------------------------------------------
# score models and policies


@dataclass(frozen=True)
class Constant:
    score: float

    deterministic = True

    def draw(self, rng: random.Random, attempt: int) -> float:
        return self.score

    def fingerprint(self, attempt: int):
        return None


@dataclass(frozen=True)
class Bernoulli:
    p: float
    pass_score: float = 1.0
    fail_score: float = 0.0

    @property
    def deterministic(self) -> bool:
        return self.p in (0.0, 1.0)

    def draw(self, rng: random.Random, attempt: int) -> float:
        return self.pass_score if rng.random() < self.p else self.fail_score

    def fingerprint(self, attempt: int):
        return None


@dataclass(frozen=True)
class Improving:
    """Score grows with each attempt at the current item, up to a cap."""

    start: float
    gain: float
    cap: float = 1.0

    deterministic = True

    def draw(self, rng: random.Random, attempt: int) -> float:
        return min(self.cap, self.start + self.gain * (max(1, attempt) - 1))

    def fingerprint(self, attempt: int):
        if self.gain <= 0:
            return 1
        saturation = math.ceil((self.cap - self.start) / self.gain) + 1
        return min(max(1, attempt), saturation)


@dataclass(frozen=True)
class LearnerPolicy:
    """Deterministic event choice plus a score model for submissions.

    The policy takes the first available kind in its preference order;
    in compiled charts at most the entry shortcut ever offers a real
    choice, so preference order is the whole decision procedure.
    """

    name: str
    score_model: object
    params: dict = field(default_factory=dict)
    preference: tuple[str, ...] = (ENTER, NEXT, SUBMIT, BACK)
    rng_seed: int = 0

    @property
    def deterministic(self) -> bool:
        return self.score_model.deterministic

    def decide(self, config: Configuration, ctx: EvalContext, available: list[str], rng: random.Random) -> Event:
        attempt = _active_attempt(config, ctx)
        for kind in self.preference:
            if kind in available:
                if kind == SUBMIT:
                    return Event.submit(self.score_model.draw(rng, attempt))
                return Event(kind)
        raise PolicyError(f"policy {self.name} found none of {available} acceptable")

    def fingerprint(self, config: Configuration, ctx: EvalContext):
        return self.score_model.fingerprint(_active_attempt(config, ctx))


def _active_attempt(config: Configuration, ctx: EvalContext) -> int:
    best = 0
    for sid in config.active:
        count = ctx.attempt_count.get(sid, 0)
        if count > best:
            best = count
    return best


def always_pass(seed: int = 0) -> LearnerPolicy:
    return LearnerPolicy(name="always-pass", score_model=Constant(1.0), rng_seed=seed)


def always_fail(seed: int = 0) -> LearnerPolicy:
    return LearnerPolicy(name="always-fail", score_model=Constant(0.0), rng_seed=seed)


def bernoulli(p: float, pass_score: float = 1.0, fail_score: float = 0.0, seed: int = 0) -> LearnerPolicy:
    return LearnerPolicy(
        name="bernoulli",
        score_model=Bernoulli(p, pass_score, fail_score),
        params={"p": p, "pass_score": pass_score, "fail_score": fail_score},
        rng_seed=seed,
    )


def improving(start: float, gain: float, cap: float = 1.0, seed: int = 0) -> LearnerPolicy:
    return LearnerPolicy(
        name="improving",
        score_model=Improving(start, gain, cap),
        params={"start": start, "gain": gain, "cap": cap},
        rng_seed=seed,
    )


def constant(score: float, seed: int = 0) -> LearnerPolicy:
    return LearnerPolicy(name="constant", score_model=Constant(score), params={"score": score}, rng_seed=seed)


def parse_policy(spec: str, seed: int = 0) -> LearnerPolicy:
    """Parse a CLI policy spec: "always-pass", "bernoulli:p=0.5", etc."""
    name, _, argpart = spec.partition(":")
    kwargs: dict[str, float] = {}
    if argpart:
        for piece in argpart.split(","):
            key, _, value = piece.partition("=")
            if not value:
                raise PolicyError(f"bad policy argument {piece!r} in {spec!r}")
            kwargs[key.strip()] = float(value)
    try:
        if name == "always-pass":
            return always_pass(seed)
        if name == "always-fail":
            return always_fail(seed)
        if name == "constant":
            return constant(kwargs["score"], seed)
        if name == "bernoulli":
            return bernoulli(
                kwargs["p"], kwargs.get("pass_score", 1.0), kwargs.get("fail_score", 0.0), seed
            )
        if name == "improving":
            return improving(kwargs["start"], kwargs["gain"], kwargs.get("cap", 1.0), seed)
    except KeyError as exc:
        raise PolicyError(f"policy {name!r} missing argument {exc}") from exc
    raise PolicyError(f"unknown policy {name!r}")


# --------------------------------------------------------------------------
# session traces


@dataclass(frozen=True)
class TraceRecord:
    tick: int
    path: tuple[str, ...]
    event: Event | None
    fired: tuple[str, ...]
    score: float | None = None
    outcome: str | None = None

    def to_doc(self) -> dict:
        doc: dict = {
            "tick": self.tick,
            "path": list(self.path),
            "event": self.event.to_doc() if self.event is not None else None,
            "fired": list(self.fired),
        }
        if self.score is not None:
            doc["score"] = self.score
        if self.outcome is not None:
            doc["outcome"] = self.outcome
        return doc


@dataclass(frozen=True)
class SessionTrace:
    records: tuple[TraceRecord, ...]
    status: str
    steps: int
    livelock_witness: tuple[TraceRecord, ...] = ()

    def leaf_paths(self) -> list[tuple[str, ...]]:
        return [r.path for r in self.records]


def serialize_trace(trace: SessionTrace) -> str:
    """Line-delimited records with stable key order, then a status line."""
    lines = [json.dumps(r.to_doc(), separators=(",", ":")) for r in trace.records]
    terminal: dict = {"status": trace.status, "steps": trace.steps}
    if trace.livelock_witness:
        terminal["witness"] = [list(r.path) for r in trace.livelock_witness]
    lines.append(json.dumps(terminal, separators=(",", ":")))
    return "\n".join(lines) + "\n"


def _global_final_states(chart: Statechart) -> frozenset[str]:
    root = chart.states[chart.root]
    return frozenset(c for c in root.children if chart.states[c].kind == FINAL)


def at_global_final(chart: Statechart, config: Configuration) -> bool:
    return bool(config.active & _global_final_states(chart))


# --------------------------------------------------------------------------
# context-class abstraction (shared by livelock detection and explore)


def _guard_attempt_states(chart: Statechart) -> frozenset[str]:
    out = set()
    for tr in chart.transitions:
        for atom in iter_atoms(tr.guard):
            if isinstance(atom, Attempts):
                out.add(atom.state)
    return frozenset(out)


def _guard_has_next_states(chart: Statechart) -> frozenset[str]:
    out = set()
    for tr in chart.transitions:
        for atom in iter_atoms(tr.guard):
            if isinstance(atom, HasNext):
                out.add(atom.state)
    return frozenset(out)


@dataclass(frozen=True)
class _Abstraction:
    attempt_states: frozenset[str]
    has_next_states: frozenset[str]
    attempt_cap: int

    @staticmethod
    def for_chart(chart: Statechart) -> "_Abstraction":
        return _Abstraction(
            attempt_states=_guard_attempt_states(chart),
            has_next_states=_guard_has_next_states(chart),
            attempt_cap=max_attempt_constant(chart) + 1,
        )

    def attempts_key(self, ctx: EvalContext):
        items = []
        for sid in self.attempt_states:
            count = ctx.attempt_count.get(sid, 0)
            if count:
                items.append((sid, min(count, self.attempt_cap)))
        return tuple(sorted(items))

    def has_next_key(self, ctx: EvalContext, active: frozenset[str]):
        items = []
        for sid in self.has_next_states:
            if sid in active and sid in ctx.has_next:
                items.append((sid, ctx.has_next[sid]))
        return tuple(sorted(items))


def _deadline_ages(chart: Statechart, config: Configuration, now: int):
    ages = []
    for sid in config.active:
        node = chart.states.get(sid)
        if node is not None and node.deadline is not None:
            ages.append((sid, min(now - config.entered_at.get(sid, 0), node.deadline + 1)))
    return tuple(sorted(ages))


# --------------------------------------------------------------------------
# run_session


def run_session(chart: Statechart, policy: LearnerPolicy, max_steps: int) -> SessionTrace:
    """Drive one learner session to completion, budget, or livelock."""
    trace, _ctx = run_session_with_context(chart, policy, max_steps)
    return trace


def run_session_with_context(
    chart: Statechart, policy: LearnerPolicy, max_steps: int
) -> tuple[SessionTrace, EvalContext]:
    if max_steps <= 0:
        raise ValueError("max_steps must be positive")
    problems = check_chart(chart)
    if problems:
        raise ValueError(f"chart fails check: {problems[0]}")

    abstraction = _Abstraction.for_chart(chart)
    rng = random.Random(policy.rng_seed)
    config = initial_configuration(chart)
    ctx = EvalContext()
    pending: deque[Event] = deque()
    records: list[TraceRecord] = [
        TraceRecord(tick=0, path=tuple(leaf_path(chart, config)), event=None, fired=())
    ]
    seen: dict[tuple, int] = {}
    steps = 0
    tid_of = {id(tr): f"t{i}" for i, tr in enumerate(chart.transitions)}

    while True:
        if at_global_final(chart, config):
            return SessionTrace(tuple(records), COMPLETED, steps), ctx
        if steps >= max_steps:
            return SessionTrace(tuple(records), BUDGET_EXHAUSTED, steps), ctx

        if policy.deterministic:
            key = (
                config.active,
                ctx.last_outcome,
                ctx.last_score,
                abstraction.attempts_key(ctx),
                abstraction.has_next_key(ctx, config.active),
                tuple((e.kind, e.state) for e in pending),
                _deadline_ages(chart, config, ctx.now),
                policy.fingerprint(config, ctx),
            )
            first = seen.get(key)
            if first is not None:
                witness = tuple(records[first:])
                return SessionTrace(tuple(records), LIVELOCK, steps, livelock_witness=witness), ctx
            seen[key] = len(records) - 1

        new_now = ctx.now + 1
        timeouts = advance_clock(chart, config, ctx, new_now)
        if timeouts:
            ctx = ctx.with_timeouts_recorded(timeout_record_pairs(config, timeouts))
            pending.extend(timeouts)
        ctx = ctx.with_now(new_now)

        if pending:
            event = pending.popleft()
        else:
            available = available_events(chart, config, ctx)
            if not available:
                # nothing the learner can do and nothing queued: stuck for good
                witness = (records[-1],)
                return SessionTrace(tuple(records), LIVELOCK, steps, livelock_witness=witness), ctx
            event = policy.decide(config, ctx, available, rng)
            if event.kind not in available:
                raise PolicyError(f"policy returned {event.kind!r}, available {available}")

        if event.kind in (SUBMIT, ASSESSMENT_RESULT):
            ctx = ctx.with_score(event.score)
            if event.kind == ASSESSMENT_RESULT:
                ctx = replace(ctx, last_outcome=event.outcome)

        result = step(chart, config, event, ctx)
        ctx = apply_effects(ctx, result.fired)
        pending.extend(result.emitted)
        config = result.config
        steps += 1
        recorded_outcome = None
        for tr in result.fired:
            if tr.effects.outcome is not None:
                recorded_outcome = tr.effects.outcome
        records.append(
            TraceRecord(
                tick=ctx.now,
                path=tuple(leaf_path(chart, config)),
                event=event,
                fired=tuple(tid_of[id(tr)] for tr in result.fired),
                score=event.score,
                outcome=recorded_outcome,
            )
        )


# --------------------------------------------------------------------------
# exhaustive exploration


@dataclass(frozen=True)
class ReachabilityReport:
    reachable_states: frozenset[str]
    unreachable_items: frozenset[str]
    completion_reachable: bool
    livelock_witness: tuple | None
    partial: bool = False
    nodes_explored: int = 0

    def to_doc(self) -> dict:
        return {
            "reachable_states": sorted(self.reachable_states),
            "unreachable_items": sorted(self.unreachable_items),
            "completion_reachable": self.completion_reachable,
            "livelock_witness": [list(entry) for entry in self.livelock_witness]
            if self.livelock_witness is not None
            else None,
            "partial": self.partial,
            "nodes_explored": self.nodes_explored,
        }


def representative_scores(chart: Statechart) -> list[float]:
    """Scores that exercise every guard-threshold region and boundary."""
    points = sorted(set(score_constants(chart)) | {0.0, 1.0})
    reps = set(points)
    for a, b in zip(points, points[1:]):
        reps.add((a + b) / 2.0)
    return sorted(r for r in reps if 0.0 <= r <= 1.0)


def _class_ctx(abstraction: _Abstraction, outcome, attempts, has_next, score=None) -> EvalContext:
    return EvalContext(
        attempt_count=dict(attempts),
        last_score=score,
        last_outcome=outcome,
        has_next=dict(has_next),
        now=0,
    )


def explore(
    chart: Statechart,
    outcome_alphabet: Iterable[str] = (PASSED, FAILED),
    cmap=None,
    node_budget: int = 100_000,
) -> ReachabilityReport:
    """Breadth-first search of every reachable (configuration, context
    class) pair under the given outcome alphabet.

    Submit branches over representative scores; branches whose fired
    transitions record an outcome outside the alphabet are pruned, which
    is how a context class like all-fail is expressed. Exceeding the node
    budget yields a partial report rather than an error.
    """
    problems = check_chart(chart)
    if problems:
        raise ValueError(f"chart fails check: {problems[0]}")
    alphabet = frozenset(outcome_alphabet)
    abstraction = _Abstraction.for_chart(chart)
    reps = representative_scores(chart)
    finals = _global_final_states(chart)
    index = index_for(chart)

    initial = initial_configuration(chart)
    init_node = (initial.active, None, (), (), ())
    visited: dict[tuple, int] = {init_node: 0}
    node_list: list[tuple] = [init_node]
    edges: dict[int, list[int]] = {}
    queue = deque([0])
    reachable: set[str] = set(initial.active)
    completion_nodes: set[int] = set()
    partial = False

    def node_successors(node: tuple) -> list[tuple]:
        active, outcome, attempts, has_next, pend = node
        config = Configuration(active=active, entered_at={s: 0 for s in active})
        out: list[tuple] = []

        def try_event(event: Event, score: float | None = None) -> None:
            ctx = _class_ctx(abstraction, outcome, attempts, has_next, score)
            result = step(chart, config, event, ctx)
            if not result.fired:
                return
            for tr in result.fired:
                if tr.effects.outcome is not None and tr.effects.outcome not in alphabet:
                    return
            new_ctx = apply_effects(ctx, result.fired)
            new_pend = tuple(pend) + tuple((e.kind, e.state) for e in result.emitted)
            out.append(
                (
                    result.config.active,
                    new_ctx.last_outcome,
                    abstraction.attempts_key(new_ctx),
                    abstraction.has_next_key(new_ctx, result.config.active),
                    new_pend,
                )
            )

        if pend:
            kind, state = pend[0]
            remainder = pend[1:]
            ctx = _class_ctx(abstraction, outcome, attempts, has_next)
            result = step(chart, config, Event(kind, state=state), ctx)
            blocked = any(
                tr.effects.outcome is not None and tr.effects.outcome not in alphabet
                for tr in result.fired
            )
            if blocked:
                return []
            new_ctx = apply_effects(ctx, result.fired)
            new_pend = remainder + tuple((e.kind, e.state) for e in result.emitted)
            return [
                (
                    result.config.active,
                    new_ctx.last_outcome,
                    abstraction.attempts_key(new_ctx),
                    abstraction.has_next_key(new_ctx, result.config.active),
                    new_pend,
                )
            ]

        kinds = set()
        for sid in active:
            for _, tr in index.by_source.get(sid, ()):
                kinds.add(tr.event.kind)
        for kind in (ENTER, NEXT, BACK):
            if kind in kinds:
                try_event(Event(kind))
        if SUBMIT in kinds:
            for score in reps:
                try_event(Event.submit(score), score=score)
        if TIMEOUT in kinds:
            for sid in sorted(active):
                node_def = chart.states.get(sid)
                if node_def is not None and node_def.deadline is not None:
                    try_event(Event.timeout(sid))
        return out

    while queue:
        node_id = queue.popleft()
        node = node_list[node_id]
        if node[0] & finals:
            completion_nodes.add(node_id)
            edges[node_id] = []
            continue
        successors = []
        for succ in node_successors(node):
            succ_id = visited.get(succ)
            if succ_id is None:
                if len(node_list) >= node_budget:
                    partial = True
                    continue
                succ_id = len(node_list)
                visited[succ] = succ_id
                node_list.append(succ)
                reachable.update(succ[0])
                queue.append(succ_id)
            successors.append(succ_id)
        edges[node_id] = successors

    completion_reachable = bool(completion_nodes)

    # backward reachability: which nodes can still reach completion
    reverse: dict[int, list[int]] = {i: [] for i in range(len(node_list))}
    for src, succs in edges.items():
        for dst in succs:
            reverse[dst].append(src)
    can_finish: set[int] = set()
    rqueue = deque(completion_nodes)
    while rqueue:
        nid = rqueue.popleft()
        if nid in can_finish:
            continue
        can_finish.add(nid)
        rqueue.extend(reverse[nid])

    witness = None
    dead = set(range(len(node_list))) - can_finish
    if dead and not partial:
        witness = _livelock_cycle(node_list, edges, dead, chart)

    # an item counts as reached once its content is: some unit state, or
    # its exit point (which empty items route to straight from entry)
    unreachable_items: set[str] = set()
    if cmap is not None:
        for node_id_, exit_state in cmap.exit_of.items():
            if not cmap.is_exit(exit_state):
                continue
            compound = chart.states[cmap.node_state[node_id_]]
            units = [c for c in compound.children if "#" not in c]
            touched = exit_state in reachable or any(u in reachable for u in units)
            if not touched:
                unreachable_items.add(node_id_)

    return ReachabilityReport(
        reachable_states=frozenset(reachable),
        unreachable_items=frozenset(unreachable_items),
        completion_reachable=completion_reachable,
        livelock_witness=witness,
        partial=partial,
        nodes_explored=len(node_list),
    )


def _livelock_cycle(node_list, edges, dead, chart: Statechart):
    """A cycle (or terminal node) within the cannot-finish region,
    entered as early in the BFS order as possible."""
    entry = min(dead)
    seen_at: dict[int, int] = {}
    path: list[int] = []
    cur = entry
    while cur not in seen_at:
        seen_at[cur] = len(path)
        path.append(cur)
        nxt = [s for s in edges.get(cur, []) if s in dead]
        if not nxt:
            break  # deadlock: degenerate single-node witness
        cur = nxt[0]
    start = seen_at.get(cur, len(path) - 1)
    cycle = path[start:]
    out = []
    for nid in cycle:
        active, outcome, attempts, has_next, pend = node_list[nid]
        config = Configuration(active=active, entered_at={s: 0 for s in active})
        out.append((tuple(leaf_path(chart, config)), outcome or "none"))
    return tuple(out)


# --------------------------------------------------------------------------
# population statistics


@dataclass(frozen=True)
class StatsSummary:
    n: int
    completion_rate: float
    mean_steps: float
    median_steps: float
    mean_attempts_per_item: float

    def to_doc(self) -> dict:
        return {
            "n": self.n,
            "completion_rate": self.completion_rate,
            "mean_steps": self.mean_steps,
            "median_steps": self.median_steps,
            "mean_attempts_per_item": self.mean_attempts_per_item,
        }


def population_stats(
    chart: Statechart,
    policy_template: LearnerPolicy,
    n_learners: int,
    seeds: list[int],
    max_steps: int = 10_000,
) -> StatsSummary:
    """Aggregate run_session over a seeded learner population."""
    if n_learners != len(seeds):
        raise ValueError(f"n_learners={n_learners} but {len(seeds)} seeds given")
    item_counters = {
        tr.effects.count_attempt for tr in chart.transitions if tr.effects.count_attempt is not None
    }
    completions = 0
    step_counts: list[int] = []
    attempt_means: list[float] = []
    for seed in seeds:
        policy = replace(policy_template, rng_seed=seed)
        trace, ctx = run_session_with_context(chart, policy, max_steps)
        if trace.status == COMPLETED:
            completions += 1
        step_counts.append(trace.steps)
        total_attempts = sum(ctx.attempt_count.get(s, 0) for s in item_counters)
        attempt_means.append(total_attempts / max(1, len(item_counters)))
    step_counts.sort()
    n = len(seeds)
    mid = n // 2
    median = float(step_counts[mid]) if n % 2 == 1 else (step_counts[mid - 1] + step_counts[mid]) / 2.0
    return StatsSummary(
        n=n,
        completion_rate=completions / n,
        mean_steps=sum(step_counts) / n,
        median_steps=median,
        mean_attempts_per_item=sum(attempt_means) / n,
    )
