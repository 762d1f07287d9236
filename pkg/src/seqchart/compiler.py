"""Compile an activity tree into a sequencing statechart.

Each item becomes a compound OR state holding an entry-choice pseudo-state,
one atomic state per content unit (assessments carry their time limit as a
deadline), an exit-point pseudo-state and a final state. Entry routes to
the first unit, or straight to the exit point when the item is empty.
Plain units chain forward on Next; assessments branch on the submitted
score against their mastery threshold: a pass continues to the next unit
(or the exit point after the last), a fail or a timeout goes to the exit
point with a failure recorded.

Every exit point carries the same rule triple, resolved on the Enter pump
in priority order:

  1. failed                -> back to the item's entry (retry)
  2. passed and has-next   -> re-enter the item (continue); unreachable in
                              compiled charts because mid-item passes chain
                              at unit level, kept so the triple is explicit
  3. no next content       -> the item's final state

Entering a final state makes the engine emit ExitReached for its parent;
cluster compounds chain their children on those events and route the last
child's into their own final, which propagates completion upward until the
curriculum's final state, the global completion state.
"""

from __future__ import annotations

from dataclasses import dataclass

from .content import ActivityTree, Cluster, Item, validate_tree
from .errors import InvalidTree
from .statechart import (
    ATOMIC,
    ENTER,
    EXIT_REACHED,
    FAILED,
    FINAL,
    NEXT,
    OR,
    PASSED,
    SUBMIT,
    TIMEOUT,
    AllOf,
    Always,
    Effects,
    EventSpec,
    Failed,
    HasNext,
    Not,
    Passed,
    Score,
    StateNode,
    Statechart,
    Transition,
)

DEFAULT_MASTERY = 0.5

# exit-rule priorities; lower fires first
RETRY_PRIORITY = 1
CONTINUE_PRIORITY = 2
LEAVE_PRIORITY = 3


@dataclass(frozen=True)
class CompilationMap:
    """Traceability between tree nodes and chart states."""

    node_state: dict[str, str]
    unit_state: dict[str, str]
    entry_of: dict[str, str]
    exit_of: dict[str, str]
    final_of: dict[str, str]
    global_final: str

    def is_entry(self, state_id: str) -> bool:
        return state_id.endswith("#entry")

    def is_exit(self, state_id: str) -> bool:
        return state_id.endswith("#exit")


def compile_tree(tree: ActivityTree) -> tuple[Statechart, CompilationMap]:
    """Build the sequencing chart plus its traceability map.

    Raises InvalidTree when the tree fails validation. Compilation is
    deterministic: the same tree yields a structurally identical chart.
    """
    problems = validate_tree(tree)
    if problems:
        raise InvalidTree(f"tree fails validation: {problems[0]}")

    states: dict[str, StateNode] = {}
    transitions: list[Transition] = []
    node_state: dict[str, str] = {}
    unit_state: dict[str, str] = {}
    entry_of: dict[str, str] = {}
    exit_of: dict[str, str] = {}
    final_of: dict[str, str] = {}

    def emit_item(item: Item) -> str:
        compound = item.id
        entry = f"{item.id}#entry"
        exit_point = f"{item.id}#exit"
        final = f"{item.id}#final"
        node_state[item.id] = compound
        entry_of[item.id] = entry
        exit_of[item.id] = exit_point
        final_of[item.id] = final

        unit_ids = [u.id for u in item.units]
        children = (entry, *unit_ids, exit_point, final)
        states[compound] = StateNode(id=compound, kind=OR, children=children, initial=entry)
        states[entry] = StateNode(id=entry, kind=ATOMIC)
        for unit in item.units:
            unit_state[unit.id] = unit.id
            deadline = unit.time_limit if unit.is_assessment else None
            states[unit.id] = StateNode(id=unit.id, kind=ATOMIC, deadline=deadline)
        states[exit_point] = StateNode(id=exit_point, kind=ATOMIC)
        states[final] = StateNode(id=final, kind=FINAL)

        enter_effects = Effects(count_attempt=compound, reset_outcome=True)
        if unit_ids:
            transitions.append(
                Transition(source=entry, event=EventSpec(ENTER), guard=Always(), target=unit_ids[0], effects=enter_effects)
            )
        else:
            transitions.append(
                Transition(
                    source=entry,
                    event=EventSpec(ENTER),
                    guard=Always(),
                    target=exit_point,
                    effects=Effects(count_attempt=compound, reset_outcome=True, set_has_next=(exit_point, False)),
                )
            )

        for i, unit in enumerate(item.units):
            last = i == len(unit_ids) - 1
            forward = exit_point if last else unit_ids[i + 1]
            if not unit.is_assessment:
                effects = Effects(set_has_next=(exit_point, False)) if last else Effects()
                transitions.append(
                    Transition(source=unit.id, event=EventSpec(NEXT), guard=Always(), target=forward, effects=effects)
                )
                continue
            threshold = unit.mastery_score if unit.mastery_score is not None else DEFAULT_MASTERY
            pass_effects = Effects(outcome=PASSED, set_has_next=(exit_point, False)) if last else Effects(outcome=PASSED)
            transitions.append(
                Transition(
                    source=unit.id,
                    event=EventSpec(SUBMIT),
                    guard=Score(cmp=">=", value=threshold),
                    target=forward,
                    effects=pass_effects,
                )
            )
            fail_effects = Effects(outcome=FAILED, set_has_next=(exit_point, not last))
            transitions.append(
                Transition(
                    source=unit.id,
                    event=EventSpec(SUBMIT),
                    guard=Score(cmp="<", value=threshold),
                    target=exit_point,
                    effects=fail_effects,
                )
            )
            if unit.time_limit is not None:
                transitions.append(
                    Transition(
                        source=unit.id,
                        event=EventSpec(TIMEOUT, state=unit.id),
                        guard=Always(),
                        target=exit_point,
                        effects=fail_effects,
                    )
                )

        transitions.append(
            Transition(
                source=exit_point,
                event=EventSpec(ENTER),
                guard=Failed(),
                target=entry,
                priority=RETRY_PRIORITY,
            )
        )
        transitions.append(
            Transition(
                source=exit_point,
                event=EventSpec(ENTER),
                guard=AllOf((Passed(), HasNext(exit_point))),
                target=entry,
                priority=CONTINUE_PRIORITY,
            )
        )
        transitions.append(
            Transition(
                source=exit_point,
                event=EventSpec(ENTER),
                guard=Not(HasNext(exit_point)),
                target=final,
                priority=LEAVE_PRIORITY,
            )
        )
        return compound

    def emit_cluster(cluster: Cluster) -> str:
        compound = cluster.id
        final = f"{cluster.id}#final"
        node_state[cluster.id] = compound
        entry_of[cluster.id] = compound
        exit_of[cluster.id] = final
        final_of[cluster.id] = final

        child_states = []
        for child in cluster.children:
            if isinstance(child, Item):
                child_states.append(emit_item(child))
            else:
                child_states.append(emit_cluster(child))
        states[compound] = StateNode(
            id=compound, kind=OR, children=(*child_states, final), initial=child_states[0]
        )
        states[final] = StateNode(id=final, kind=FINAL)
        for j, child_compound in enumerate(child_states):
            target = child_states[j + 1] if j + 1 < len(child_states) else final
            transitions.append(
                Transition(
                    source=child_compound,
                    event=EventSpec(EXIT_REACHED, state=child_compound),
                    guard=Always(),
                    target=target,
                )
            )
        return compound

    root = emit_cluster(tree.root)

    # states were inserted children-first; rebuild top-down for readability
    ordered: dict[str, StateNode] = {}

    def reorder(sid: str) -> None:
        ordered[sid] = states[sid]
        for child in states[sid].children:
            reorder(child)

    reorder(root)

    chart = Statechart(root=root, states=ordered, transitions=tuple(transitions))
    cmap = CompilationMap(
        node_state=node_state,
        unit_state=unit_state,
        entry_of=entry_of,
        exit_of=exit_of,
        final_of=final_of,
        global_final=final_of[tree.root.id],
    )
    return chart, cmap


def course_length(tree: ActivityTree) -> int:
    """Step count for an always-pass learner to reach global completion.

    Structural: each item costs one Enter, one step per unit, and one
    exit-rule step; each cluster costs one propagation step per child.
    """
    total = 0
    for item in tree.items():
        total += 2 + len(item.units)
    for cluster in tree.clusters():
        total += len(cluster.children)
    return total
