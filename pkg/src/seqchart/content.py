"""Activity-tree content model: types, manifest parsing, validation.

The manifest is a single JSON document::

    {"curriculum": {"id": ..., "level": "curriculum", "children": [...]}}

Cluster nodes carry ``id``, ``level`` and an order-significant ``children``
array; item nodes carry ``id`` and an order-significant ``units`` array.
Unit objects are ``{"id", "kind": "asset"|"assessment", "payload_ref"}``
plus optional ``mastery_score`` / ``time_limit`` on assessments.

All values are immutable after construction and safe to share across
threads.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterator, Union

from .errors import ManifestSyntaxError, ModelError, SchemaError, Violation

ASSET = "asset"
ASSESSMENT = "assessment"

LEVELS = ("curriculum", "course", "section", "lesson", "topic")
_LEVEL_RANK = {name: rank for rank, name in enumerate(LEVELS)}
_ITEM_RANK = len(LEVELS)

DEFAULT_MASTERY = 0.5

# "#" is reserved: the compiler derives pseudo-state ids as "<id>#entry" etc.
_RESERVED_ID_CHAR = "#"


@dataclass(frozen=True)
class ContentUnit:
    """One digital resource inside an item, plain or assessed."""

    id: str
    kind: str
    payload_ref: str
    mastery_score: float | None = None
    time_limit: int | None = None

    @property
    def is_assessment(self) -> bool:
        return self.kind == ASSESSMENT


@dataclass(frozen=True)
class Item:
    """Leaf activity: an ordered (possibly empty) run of content units."""

    id: str
    units: tuple[ContentUnit, ...] = ()


@dataclass(frozen=True)
class Cluster:
    """Non-leaf activity holding child activities in document order."""

    id: str
    level: str
    children: tuple[Union["Cluster", Item], ...] = ()


TreeNode = Union[Cluster, Item]


@dataclass(frozen=True)
class ActivityTree:
    """A validated curriculum: root cluster plus an id index over nodes."""

    root: Cluster
    index: dict[str, TreeNode] = field(default_factory=dict)

    def node(self, node_id: str) -> TreeNode:
        return self.index[node_id]

    def items(self) -> Iterator[Item]:
        """Items in document order."""
        for node in _walk(self.root):
            if isinstance(node, Item):
                yield node

    def clusters(self) -> Iterator[Cluster]:
        for node in _walk(self.root):
            if isinstance(node, Cluster):
                yield node


def _walk(node: TreeNode) -> Iterator[TreeNode]:
    yield node
    if isinstance(node, Cluster):
        for child in node.children:
            yield from _walk(child)


def build_tree(root: Cluster) -> ActivityTree:
    """Index a hand-built root cluster without validating it.

    Callers that want the invariants enforced should run validate_tree on
    the result; parse_manifest does both.
    """
    index: dict[str, TreeNode] = {}
    for node in _walk(root):
        index.setdefault(node.id, node)
    return ActivityTree(root=root, index=index)


# --------------------------------------------------------------------------
# parsing


def parse_manifest(document: str) -> ActivityTree:
    """Parse a manifest document into a validated ActivityTree.

    Raises ManifestSyntaxError on malformed JSON, SchemaError on unknown or
    missing fields, ModelError on invariant breaches (duplicate ids,
    childless clusters, inverted levels). The returned tree always passes
    validate_tree.
    """
    try:
        doc = json.loads(document)
    except json.JSONDecodeError as exc:
        raise ManifestSyntaxError(exc.msg, line=exc.lineno, column=exc.colno) from exc
    if not isinstance(doc, dict):
        raise SchemaError("manifest top level must be an object")
    unknown = set(doc) - {"curriculum"}
    if unknown:
        raise SchemaError(f"unknown top-level field {sorted(unknown)[0]!r}")
    if "curriculum" not in doc:
        raise SchemaError("missing top-level field 'curriculum'")
    root = _parse_node(doc["curriculum"], path="curriculum")
    if isinstance(root, Item):
        raise ModelError("top-level node must be a cluster, got an item", root.id)
    if root.level != "curriculum":
        raise ModelError(f"root cluster {root.id!r} has level {root.level!r}, expected 'curriculum'", root.id)
    tree = build_tree(root)
    violations = validate_tree(tree)
    if violations:
        first = violations[0]
        raise ModelError(f"{first.message} ({first.rule})", first.subject_id)
    return tree


def _require_id(raw: dict, path: str) -> str:
    node_id = raw.get("id")
    if node_id is None:
        raise SchemaError(f"missing required field 'id' at {path}")
    if not isinstance(node_id, str) or not node_id:
        raise SchemaError(f"field 'id' at {path} must be a nonempty string")
    if _RESERVED_ID_CHAR in node_id:
        raise SchemaError(f"id {node_id!r} contains reserved character '#'", node_id)
    return node_id


def _parse_node(raw: object, path: str) -> TreeNode:
    if not isinstance(raw, dict):
        raise SchemaError(f"node at {path} must be an object")
    node_id = _require_id(raw, path)
    is_cluster = "children" in raw
    is_item = "units" in raw
    if is_cluster and is_item:
        raise SchemaError(f"node {node_id!r} mixes 'children' and 'units'", node_id)
    if is_cluster:
        unknown = set(raw) - {"id", "level", "children"}
        if unknown:
            raise SchemaError(f"unknown field {sorted(unknown)[0]!r} on cluster {node_id!r}", node_id)
        level = raw.get("level")
        if level is None:
            raise SchemaError(f"missing required field 'level' on cluster {node_id!r}", node_id)
        if level not in _LEVEL_RANK:
            raise SchemaError(f"cluster {node_id!r} has unknown level {level!r}", node_id)
        children_raw = raw["children"]
        if not isinstance(children_raw, list):
            raise SchemaError(f"field 'children' on cluster {node_id!r} must be an array", node_id)
        children = tuple(
            _parse_node(child, path=f"{path}.children[{i}]") for i, child in enumerate(children_raw)
        )
        return Cluster(id=node_id, level=level, children=children)
    if is_item:
        unknown = set(raw) - {"id", "units"}
        if unknown:
            raise SchemaError(f"unknown field {sorted(unknown)[0]!r} on item {node_id!r}", node_id)
        units_raw = raw["units"]
        if not isinstance(units_raw, list):
            raise SchemaError(f"field 'units' on item {node_id!r} must be an array", node_id)
        units = tuple(_parse_unit(u, item_id=node_id, pos=i) for i, u in enumerate(units_raw))
        return Item(id=node_id, units=units)
    raise SchemaError(f"node {node_id!r} has neither 'children' nor 'units'", node_id)


def _parse_unit(raw: object, item_id: str, pos: int) -> ContentUnit:
    if not isinstance(raw, dict):
        raise SchemaError(f"unit {pos} of item {item_id!r} must be an object", item_id)
    unit_id = _require_id(raw, f"{item_id}.units[{pos}]")
    allowed = {"id", "kind", "payload_ref", "mastery_score", "time_limit"}
    unknown = set(raw) - allowed
    if unknown:
        raise SchemaError(f"unknown field {sorted(unknown)[0]!r} on unit {unit_id!r}", unit_id)
    kind = raw.get("kind")
    if kind not in (ASSET, ASSESSMENT):
        raise SchemaError(f"unit {unit_id!r} has unknown kind {kind!r}", unit_id)
    payload_ref = raw.get("payload_ref")
    if not isinstance(payload_ref, str):
        raise SchemaError(f"unit {unit_id!r} needs a string 'payload_ref'", unit_id)
    mastery = raw.get("mastery_score")
    if mastery is not None and not isinstance(mastery, (int, float)):
        raise SchemaError(f"unit {unit_id!r} mastery_score must be a number", unit_id)
    time_limit = raw.get("time_limit")
    if time_limit is not None and (isinstance(time_limit, bool) or not isinstance(time_limit, int)):
        raise SchemaError(f"unit {unit_id!r} time_limit must be an integer", unit_id)
    if kind == ASSESSMENT and mastery is None:
        mastery = DEFAULT_MASTERY
    return ContentUnit(
        id=unit_id,
        kind=kind,
        payload_ref=payload_ref,
        mastery_score=float(mastery) if mastery is not None else None,
        time_limit=time_limit,
    )


# --------------------------------------------------------------------------
# validation


def validate_tree(tree: ActivityTree) -> list[Violation]:
    """Check every content-model invariant; violations are data, not errors."""
    violations: list[Violation] = []
    seen: set[str] = set()

    def check_id(node_id: str) -> None:
        if not node_id:
            violations.append(Violation(node_id, "empty-id", "node has an empty id"))
        if node_id in seen:
            violations.append(Violation(node_id, "duplicate-id", f"id {node_id!r} used more than once"))
        seen.add(node_id)

    if tree.root.level != "curriculum":
        violations.append(
            Violation(tree.root.id, "root-level", f"root cluster has level {tree.root.level!r}, expected 'curriculum'")
        )

    def visit(node: TreeNode, parent_rank: int) -> None:
        check_id(node.id)
        if isinstance(node, Item):
            for unit in node.units:
                check_id(unit.id)
                _check_unit(unit, violations)
            return
        rank = _LEVEL_RANK.get(node.level)
        if rank is None:
            violations.append(Violation(node.id, "unknown-level", f"cluster level {node.level!r} is not recognized"))
            rank = parent_rank  # keep descending to report more
        elif rank <= parent_rank:
            violations.append(
                Violation(
                    node.id,
                    "level-inversion",
                    f"cluster {node.id!r} at level {node.level!r} does not descend below its parent",
                )
            )
        if not node.children:
            violations.append(Violation(node.id, "childless-cluster", f"cluster {node.id!r} has no children"))
        for child in node.children:
            visit(child, rank)

    visit(tree.root, parent_rank=-1)

    indexed = set(tree.index)
    reachable = {node.id for node in _walk(tree.root)}
    for missing in sorted(reachable - indexed):
        violations.append(Violation(missing, "index-gap", f"node {missing!r} missing from the index"))
    for stale in sorted(indexed - reachable):
        violations.append(Violation(stale, "index-stale", f"index entry {stale!r} is not reachable from the root"))
    return violations


def _check_unit(unit: ContentUnit, violations: list[Violation]) -> None:
    if unit.kind not in (ASSET, ASSESSMENT):
        violations.append(Violation(unit.id, "unknown-kind", f"unit kind {unit.kind!r} is not recognized"))
        return
    if unit.kind == ASSET:
        if unit.mastery_score is not None:
            violations.append(
                Violation(unit.id, "mastery-on-asset", f"plain asset {unit.id!r} carries a mastery_score")
            )
        if unit.time_limit is not None:
            violations.append(
                Violation(unit.id, "time-limit-on-asset", f"plain asset {unit.id!r} carries a time_limit")
            )
        return
    if unit.mastery_score is not None and not 0.0 <= unit.mastery_score <= 1.0:
        violations.append(
            Violation(unit.id, "mastery-range", f"mastery_score {unit.mastery_score} outside [0, 1]")
        )
    if unit.time_limit is not None and unit.time_limit <= 0:
        violations.append(Violation(unit.id, "time-limit-range", f"time_limit {unit.time_limit} must be positive"))


# --------------------------------------------------------------------------
# serialization


def serialize_tree(tree: ActivityTree, indent: int | None = 2) -> str:
    """Render the tree back to manifest text; inverse of parse_manifest."""
    return json.dumps({"curriculum": _node_to_doc(tree.root)}, indent=indent, ensure_ascii=False)


def _node_to_doc(node: TreeNode) -> dict:
    if isinstance(node, Item):
        return {"id": node.id, "units": [_unit_to_doc(u) for u in node.units]}
    return {
        "id": node.id,
        "level": node.level,
        "children": [_node_to_doc(c) for c in node.children],
    }


def _unit_to_doc(unit: ContentUnit) -> dict:
    doc: dict = {"id": unit.id, "kind": unit.kind, "payload_ref": unit.payload_ref}
    if unit.mastery_score is not None:
        doc["mastery_score"] = unit.mastery_score
    if unit.time_limit is not None:
        doc["time_limit"] = unit.time_limit
    return doc
