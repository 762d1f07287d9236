import json

import pytest
from hypothesis import given, settings

from gen import manifest_text_strategy, tree_strategy
from seqchart.content import (
    ActivityTree,
    Cluster,
    ContentUnit,
    Item,
    build_tree,
    parse_manifest,
    serialize_tree,
    validate_tree,
)
from seqchart.errors import ManifestSyntaxError, ModelError, SchemaError

from conftest import MINIMAL, manifest_doc


def test_parse_minimal_path():
    tree = parse_manifest(MINIMAL)
    assert tree.root.id == "cur"
    assert tree.root.level == "curriculum"
    path = []
    node = tree.root
    while isinstance(node, Cluster):
        path.append(node.id)
        assert len(node.children) == 1
        node = node.children[0]
    path.append(node.id)
    assert path == ["cur", "crs", "top", "it1"]
    assert [u.id for u in node.units] == ["a1"]


def test_childless_cluster_rejected():
    doc = manifest_doc([{"id": "T1", "level": "topic", "children": []}])
    with pytest.raises(ModelError) as exc:
        parse_manifest(doc)
    assert exc.value.subject_id == "T1"
    assert "children" in str(exc.value) or "childless" in str(exc.value)


def test_duplicate_id_rejected():
    doc = manifest_doc(
        [
            {"id": "I1", "units": []},
            {"id": "I1", "units": []},
        ]
    )
    with pytest.raises(ModelError) as exc:
        parse_manifest(doc)
    assert exc.value.subject_id == "I1"


def test_malformed_json_carries_position():
    with pytest.raises(ManifestSyntaxError) as exc:
        parse_manifest('{"curriculum": ')
    assert exc.value.line is not None


def test_unknown_field_rejected():
    doc = json.dumps(
        {"curriculum": {"id": "c", "level": "curriculum", "children": [], "color": "red"}}
    )
    with pytest.raises(SchemaError) as exc:
        parse_manifest(doc)
    assert "color" in str(exc.value)


def test_missing_required_field_rejected():
    doc = json.dumps({"curriculum": {"id": "c", "children": [{"id": "i", "units": []}]}})
    with pytest.raises(SchemaError) as exc:
        parse_manifest(doc)
    assert "level" in str(exc.value)


def test_reserved_hash_in_id_rejected():
    doc = manifest_doc([{"id": "it#1", "units": []}])
    with pytest.raises(SchemaError):
        parse_manifest(doc)


def test_unknown_kind_rejected():
    doc = manifest_doc([{"id": "i", "units": [{"id": "u", "kind": "video", "payload_ref": "x"}]}])
    with pytest.raises(SchemaError):
        parse_manifest(doc)


def test_root_must_be_curriculum():
    doc = json.dumps(
        {"curriculum": {"id": "c", "level": "course", "children": [{"id": "i", "units": []}]}}
    )
    with pytest.raises(ModelError):
        parse_manifest(doc)


def test_assessment_default_mastery_materialized():
    doc = manifest_doc([{"id": "i", "units": [{"id": "q", "kind": "assessment", "payload_ref": "x"}]}])
    tree = parse_manifest(doc)
    unit = next(tree.items()).units[0]
    assert unit.mastery_score == 0.5


def test_validate_mastery_on_plain_asset():
    tree = build_tree(
        Cluster(
            id="cur",
            level="curriculum",
            children=(
                Item(id="i", units=(ContentUnit(id="u", kind="asset", payload_ref="x", mastery_score=0.5),)),
            ),
        )
    )
    rules = {(v.subject_id, v.rule) for v in validate_tree(tree)}
    assert ("u", "mastery-on-asset") in rules


def test_validate_level_inversion():
    tree = build_tree(
        Cluster(
            id="cur",
            level="curriculum",
            children=(
                Cluster(
                    id="top",
                    level="topic",
                    children=(
                        Cluster(id="crs", level="course", children=(Item(id="i", units=()),)),
                    ),
                ),
            ),
        )
    )
    rules = {v.rule for v in validate_tree(tree)}
    assert "level-inversion" in rules


def test_validate_time_limit_range():
    tree = build_tree(
        Cluster(
            id="cur",
            level="curriculum",
            children=(
                Item(
                    id="i",
                    units=(
                        ContentUnit(
                            id="q", kind="assessment", payload_ref="x", mastery_score=0.5, time_limit=0
                        ),
                    ),
                ),
            ),
        )
    )
    rules = {v.rule for v in validate_tree(tree)}
    assert "time-limit-range" in rules


@settings(max_examples=60, deadline=None)
@given(manifest_text_strategy())
def test_round_trip(manifest_text):
    tree = parse_manifest(manifest_text)
    again = parse_manifest(serialize_tree(tree))
    assert again.root == tree.root


@settings(max_examples=60, deadline=None)
@given(tree_strategy())
def test_parse_output_always_validates(tree: ActivityTree):
    assert validate_tree(tree) == []


@settings(max_examples=60, deadline=None)
@given(tree_strategy())
def test_child_order_preserved(tree: ActivityTree):
    reparsed = parse_manifest(serialize_tree(tree))

    def order(node):
        if isinstance(node, Item):
            return [node.id] + [u.id for u in node.units]
        out = [node.id]
        for child in node.children:
            out.extend(order(child))
        return out

    assert order(reparsed.root) == order(tree.root)
