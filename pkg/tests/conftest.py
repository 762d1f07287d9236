import json
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from seqchart.compiler import compile_tree
from seqchart.content import parse_manifest


def manifest_doc(children) -> str:
    return json.dumps({"curriculum": {"id": "cur", "level": "curriculum", "children": children}})


MINIMAL = manifest_doc(
    [
        {
            "id": "crs",
            "level": "course",
            "children": [
                {
                    "id": "top",
                    "level": "topic",
                    "children": [
                        {"id": "it1", "units": [{"id": "a1", "kind": "asset", "payload_ref": "text:hi"}]}
                    ],
                }
            ],
        }
    ]
)

EMPTY_ITEM = manifest_doc([{"id": "it-empty", "units": []}])

TWO_UNIT = manifest_doc(
    [
        {
            "id": "it1",
            "units": [
                {"id": "a1", "kind": "asset", "payload_ref": "text:intro"},
                {"id": "q1", "kind": "assessment", "payload_ref": "quiz:1", "mastery_score": 0.5},
            ],
        }
    ]
)

TWO_ITEMS = manifest_doc(
    [
        {
            "id": "top",
            "level": "topic",
            "children": [
                {"id": "it1", "units": [{"id": "a1", "kind": "asset", "payload_ref": "t:1"}]},
                {
                    "id": "it2",
                    "units": [
                        {"id": "q2", "kind": "assessment", "payload_ref": "q:2", "mastery_score": 0.5}
                    ],
                },
            ],
        }
    ]
)


@pytest.fixture
def minimal_tree():
    return parse_manifest(MINIMAL)


@pytest.fixture
def empty_item_tree():
    return parse_manifest(EMPTY_ITEM)


@pytest.fixture
def two_unit_tree():
    return parse_manifest(TWO_UNIT)


@pytest.fixture
def two_items_tree():
    return parse_manifest(TWO_ITEMS)


@pytest.fixture
def two_unit_chart(two_unit_tree):
    return compile_tree(two_unit_tree)
