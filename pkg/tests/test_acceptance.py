"""Release gate: one test per acceptance criterion.

Each test prints a PASS/FAIL line (visible with ``pytest -s``) and asserts
its criterion at the stated tolerance. Random inputs are fully seeded.
"""

import json
import random
import time

from gen import random_tree
from oracle import enumerate_space
from seqchart.compiler import compile_tree, course_length
from seqchart.content import parse_manifest, serialize_tree
from seqchart.service import CourseLibrary, SessionStore
from seqchart.simulate import (
    COMPLETED,
    LIVELOCK,
    always_fail,
    always_pass,
    explore,
    improving,
    run_session,
    serialize_trace,
)
from seqchart.statechart import (
    ATOMIC,
    FAILED,
    FINAL,
    PASSED,
    EvalContext,
    Event,
    apply_effects,
    check_chart,
    index_for,
    initial_configuration,
    step,
)
from seqchart.strategy import (
    apply,
    compose,
    identity,
    make_strategy,
)

from conftest import EMPTY_ITEM, TWO_UNIT, manifest_doc
from test_compiler import assert_trichotomy


def report(number: int, label: str, ok: bool, detail: str = "") -> None:
    status = "PASS" if ok else "FAIL"
    suffix = f" ({detail})" if detail else ""
    print(f"{status} criterion {number}: {label}{suffix}")
    assert ok, f"criterion {number} failed: {label} {suffix}"


def _single_root_to_leaf_path(chart, config) -> bool:
    index = index_for(chart)
    leaves = index.leaves
    if len(config.active & leaves) != 1:
        return False
    # the active set must be exactly the ancestor chain of that leaf
    (leaf,) = config.active & leaves
    chain = {leaf}
    cur = leaf
    while cur != chart.root:
        cur = index.parent[cur]
        chain.add(cur)
    return chain == config.active


def _random_driver_steps(chart, seed: int, n_steps: int):
    """Yield configurations along n_steps random engine steps, timeouts and
    propagation events injected the way real drivers inject them."""
    rng = random.Random(seed)
    config = initial_configuration(chart)
    ctx = EvalContext()
    pending = []
    from seqchart.statechart import advance_clock, timeout_record_pairs

    for _ in range(n_steps):
        new_now = ctx.now + 1
        timeouts = advance_clock(chart, config, ctx, new_now)
        if timeouts:
            ctx = ctx.with_timeouts_recorded(timeout_record_pairs(config, timeouts))
            pending.extend(timeouts)
        ctx = ctx.with_now(new_now)
        if pending:
            event = pending.pop(0)
        else:
            kind = rng.choice(["enter", "next", "back", "submit"])
            event = Event.submit(rng.random()) if kind == "submit" else Event(kind)
            if event.kind == "submit":
                ctx = ctx.with_score(event.score)
        result = step(chart, config, event, ctx)
        ctx = apply_effects(ctx, result.fired)
        pending.extend(result.emitted)
        config = result.config
        yield config


def _criterion_trees(count: int, seed_base: int, **kwargs):
    for i in range(count):
        yield random_tree(random.Random(seed_base + i), **kwargs)


N_TREES = 500


def test_criterion_1_single_configuration_theorem():
    started = time.monotonic()
    violations = 0
    for i, tree in enumerate(_criterion_trees(N_TREES, 1000, max_depth=4, max_items=8, max_units=4)):
        chart, _ = compile_tree(tree)
        for config in _random_driver_steps(chart, seed=i, n_steps=200):
            if not _single_root_to_leaf_path(chart, config):
                violations += 1
    elapsed = time.monotonic() - started
    report(
        1,
        "single-configuration theorem",
        violations == 0 and elapsed < 60.0,
        f"{N_TREES} trees x 200 steps, {violations} violations, {elapsed:.1f}s",
    )


def test_criterion_2_exit_rule_trichotomy():
    checked = 0
    for tree in _criterion_trees(N_TREES, 1000, max_depth=4, max_items=8, max_units=4):
        chart, cmap = compile_tree(tree)
        assert_trichotomy(chart, cmap)
        checked += sum(1 for s in cmap.exit_of.values() if cmap.is_exit(s))
    report(2, "exit-rule trichotomy", True, f"{checked} exit points, all 6 context classes each")


GOLDEN_EMPTY = [
    ("cur", "it-empty", "it-empty#entry"),
    ("cur", "it-empty", "it-empty#exit"),
    ("cur", "it-empty", "it-empty#final"),
    ("cur", "cur#final"),
]

GOLDEN_PASS = [
    ("cur", "it1", "it1#entry"),
    ("cur", "it1", "a1"),
    ("cur", "it1", "q1"),
    ("cur", "it1", "it1#exit"),
    ("cur", "it1", "it1#final"),
    ("cur", "cur#final"),
]

GOLDEN_RETRY = [
    ("cur", "it1", "it1#entry"),
    ("cur", "it1", "a1"),
    ("cur", "it1", "q1"),
    ("cur", "it1", "it1#exit"),
    ("cur", "it1", "it1#entry"),
    ("cur", "it1", "a1"),
    ("cur", "it1", "q1"),
    ("cur", "it1", "it1#exit"),
    ("cur", "it1", "it1#final"),
    ("cur", "cur#final"),
]


def test_criterion_3_golden_traces(tmp_path):
    cases = [
        ("empty item", EMPTY_ITEM, always_pass(), GOLDEN_EMPTY),
        ("two-unit pass", TWO_UNIT, always_pass(), GOLDEN_PASS),
        ("fail then retry", TWO_UNIT, improving(0.2, 0.8), GOLDEN_RETRY),
    ]
    ok = True
    for name, doc, policy, golden in cases:
        chart, _ = compile_tree(parse_manifest(doc))
        first = run_session(chart, policy, 100)
        second = run_session(chart, policy, 100)
        text1 = serialize_trace(first)
        text2 = serialize_trace(second)
        f1 = tmp_path / f"{name.replace(' ', '_')}_1.ndjson"
        f2 = tmp_path / f"{name.replace(' ', '_')}_2.ndjson"
        f1.write_text(text1, encoding="utf-8")
        f2.write_text(text2, encoding="utf-8")
        if f1.read_bytes() != f2.read_bytes():
            ok = False
        if [tuple(r.path) for r in first.records] != golden:
            ok = False
        if first.status != COMPLETED:
            ok = False
    report(3, "golden traces reproduce hand-traced configurations", ok, "3 fixtures, 2 runs each")


def test_criterion_4_brute_force_oracle_parity():
    started = time.monotonic()
    mismatches = 0
    checked = 0
    for tree in _criterion_trees(120, 4000, max_depth=3, max_items=6, max_units=3):
        chart, cmap = compile_tree(tree)
        rep = explore(chart, {PASSED, FAILED}, cmap=cmap)
        oracle_states, oracle_completes = enumerate_space(chart, {PASSED, FAILED})
        leaves = {s for s, n in chart.states.items() if n.kind in (ATOMIC, FINAL)}
        if rep.reachable_states & leaves != oracle_states & leaves:
            mismatches += 1
        if not (rep.completion_reachable and oracle_completes):
            mismatches += 1
        if rep.unreachable_items:
            mismatches += 1
        checked += 1
    elapsed = time.monotonic() - started
    report(
        4,
        "explorer matches brute-force enumeration",
        mismatches == 0 and elapsed < 300.0,
        f"{checked} trees, {mismatches} mismatches, {elapsed:.1f}s",
    )


def test_criterion_5_always_pass_completion_budget():
    # hand-verified fixtures first: step counts worked out state by state
    hand_cases = [(EMPTY_ITEM, 3), (TWO_UNIT, 5)]
    two_items = manifest_doc(
        [
            {
                "id": "top",
                "level": "topic",
                "children": [
                    {"id": "it1", "units": [{"id": "a1", "kind": "asset", "payload_ref": "t"}]},
                    {
                        "id": "it2",
                        "units": [
                            {"id": "q2", "kind": "assessment", "payload_ref": "q", "mastery_score": 0.5}
                        ],
                    },
                ],
            }
        ]
    )
    hand_cases.append((two_items, 9))
    deviations = 0
    for doc, expected in hand_cases:
        tree = parse_manifest(doc)
        if course_length(tree) != expected:
            deviations += 1
        chart, _ = compile_tree(tree)
        trace = run_session(chart, always_pass(), 50)
        if trace.status != COMPLETED or trace.steps != expected:
            deviations += 1
    checked = 0
    for tree in _criterion_trees(N_TREES, 1000, max_depth=4, max_items=8, max_units=4):
        chart, _ = compile_tree(tree)
        budget = course_length(tree)
        trace = run_session(chart, always_pass(), 4 * budget + 20)
        if trace.status != COMPLETED or trace.steps != budget:
            deviations += 1
        checked += 1
    report(
        5,
        "always-pass completes in exactly course_length steps",
        deviations == 0,
        f"3 hand fixtures + {checked} generated courses",
    )


_POOL = [
    ("identity", {}),
    ("linear_lock", {}),
    ("mastery_threshold", {"threshold": 0.3}),
    ("mastery_threshold", {"threshold": 0.6}),
    ("mastery_threshold", {"threshold": 0.9}),
    ("max_attempts", {"limit": 2, "action": "skip"}),
    ("max_attempts", {"limit": 3, "action": "remediate-to-item-start"}),
    ("skip_ahead", {}),
]


def test_criterion_6_strategy_algebra():
    from seqchart.errors import InapplicableStrategy

    rng = random.Random(6000)
    violations = 0
    checked = 0
    while checked < 200:
        tree = random_tree(rng, max_depth=3, max_items=5, max_units=3)
        chart, cmap = compile_tree(tree)
        specs = [rng.choice(_POOL) for _ in range(rng.randint(1, 3))]
        pipeline = [make_strategy(name, params) for name, params in specs]
        try:
            composed = apply(compose(pipeline), chart, cmap)
        except InapplicableStrategy:
            continue
        checked += 1
        stepwise = chart
        try:
            for member in pipeline:
                stepwise = apply(member, stepwise, cmap)
        except InapplicableStrategy:
            violations += 1
            continue
        if composed != stepwise:
            violations += 1
        if check_chart(composed):
            violations += 1
        # identity laws
        if apply(compose([identity(), pipeline[0]]), chart, cmap) != apply(pipeline[0], chart, cmap):
            violations += 1
        if apply(compose([pipeline[0], identity()]), chart, cmap) != apply(pipeline[0], chart, cmap):
            violations += 1
        # associativity on three-member pipelines
        if len(pipeline) == 3:
            p, q, r = pipeline
            if apply(compose([compose([p, q]), r]), chart, cmap) != composed:
                violations += 1
    report(6, "strategy algebra holds", violations == 0, f"{checked} pipeline/tree pairs")


def test_criterion_7_livelock_detection_and_explorer_agreement():
    rng = random.Random(7000)
    failures = 0
    for i in range(60):
        tree = random_tree(rng, max_depth=3, max_items=4, max_units=3, require_assessment=True)
        chart, cmap = compile_tree(tree)
        trace = run_session(chart, always_fail(), 5_000)
        if trace.status != LIVELOCK or not trace.livelock_witness:
            failures += 1
            continue
        rep = explore(chart, {FAILED}, cmap=cmap)
        if rep.completion_reachable:
            failures += 1
    report(
        7,
        "always-fail livelocks and the explorer agrees",
        failures == 0,
        "60 assessed trees",
    )


def test_criterion_8_event_sourcing_recovery(tmp_path):
    rng = random.Random(8000)
    content = tmp_path / "content"
    content.mkdir()
    for i in range(10):
        tree = random_tree(rng, max_depth=3, max_items=4, max_units=3)
        (content / f"course{i}.json").write_text(serialize_tree(tree), encoding="utf-8")
    snaps = tmp_path / "snaps"
    store = SessionStore(CourseLibrary(content), snaps)

    expected: dict[str, dict] = {}
    for i in range(50):
        course = f"course{rng.randrange(10)}"
        view = store.create(course)
        sid = view["session_id"]
        for _ in range(rng.randrange(0, 15)):
            current = store.get(sid)
            if current["status"] == "completed":
                break
            choice = rng.random()
            try:
                if choice < 0.5:
                    store.post(sid, "next")
                elif choice < 0.9:
                    store.post(sid, "submit", rng.random())
                else:
                    store.post(sid, "back")
            except Exception:
                pass  # 409s are part of the exercise
        expected[sid] = store.snapshot_doc(sid)

    # corrupt one extra session's log with an impossible event
    view = store.create("course0")
    corrupt_sid = view["session_id"]
    log = snaps / f"{corrupt_sid}.log"
    log.write_text(log.read_text() + json.dumps({"seq": 99, "type": "back"}) + "\n", encoding="utf-8")

    fresh = SessionStore(CourseLibrary(content), snaps)
    outcome = fresh.recover()
    mismatches = 0
    for sid, before in expected.items():
        if sid not in outcome.recovered:
            mismatches += 1
            continue
        after = fresh.snapshot_doc(sid)
        if after["config"] != before["config"] or after["ctx"] != before["ctx"]:
            mismatches += 1
    quarantine_ok = corrupt_sid in outcome.quarantined
    report(
        8,
        "kill-and-replay reconstructs sessions; corrupt log quarantined",
        mismatches == 0 and quarantine_ok,
        f"50 sessions, {mismatches} mismatches",
    )
