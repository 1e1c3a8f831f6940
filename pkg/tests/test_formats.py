from __future__ import annotations

import json
from fractions import Fraction

import pytest

from coarse_trees.bass_serre import LocalType
from coarse_trees.errors import NonPositiveIndex, SchemaError
from coarse_trees.formats import (
    dump_graph,
    graph_from_json,
    load_graph,
    load_local_type,
    local_type_from_json,
    matrix_from_json,
    parse_json_text,
)
from coarse_trees.graph_core import bs_graph
from coarse_trees.heights import HeightValue


def test_graph_round_trip(tmp_path):
    path = tmp_path / "g.json"
    path.write_text(dump_graph(bs_graph(2, 3)))
    assert load_graph(path) == bs_graph(2, 3)


def test_malformed_json_reports_line_and_column(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{\n  "vertices": ["x"],\n  "edges": [\n')
    with pytest.raises(SchemaError, match=r"line \d+, column \d+"):
        load_graph(path)


def test_schema_errors_name_source_and_field():
    with pytest.raises(SchemaError, match=r"g\.json: edges\[1\]"):
        graph_from_json({"vertices": ["a"], "edges": [[ "a", "a", 1, 2], {"u": "a"}]}, "g.json")
    with pytest.raises(NonPositiveIndex):
        graph_from_json({"vertices": ["a"], "edges": [["a", "a", 0, 2]]})


def test_local_type_documents(tmp_path):
    assert local_type_from_json({"bs": [2, 3]}) == LocalType.of_bs(2, 3)
    assert local_type_from_json({"oriented": [2, 2]}) == LocalType.oriented(2, 2)
    lt = LocalType.from_counts({HeightValue.unit(1): 2, HeightValue.unit(-1): 3})
    assert local_type_from_json({"local_type": lt.to_json()}) == lt
    path = tmp_path / "t.json"
    path.write_text(json.dumps({"bs": [3, 5]}))
    assert load_local_type(str(path)) == LocalType.of_bs(3, 5)
    assert load_local_type("oriented:3,2") == LocalType.oriented(3, 2)


@pytest.mark.parametrize(
    "doc,match",
    [
        ({}, "exactly one"),
        ({"bs": [2]}, "'bs'"),
        ({"bs": [0, 2]}, "positive"),
        ({"local_type": []}, "nonempty"),
        ({"local_type": [{"value": {"2": 1}}]}, r"local_type\[0\]"),
        ({"local_type": [{"value": {"2": 1}, "multiplicity": 0}]}, "multiplicity"),
    ],
)
def test_local_type_errors(doc, match):
    with pytest.raises(SchemaError, match=match):
        local_type_from_json(doc)


def test_matrix_documents():
    m = matrix_from_json({"matrix": [[2, "1/3"], ["-4", 0]]})
    assert m == [[Fraction(2), Fraction(1, 3)], [Fraction(-4), Fraction(0)]]
    with pytest.raises(SchemaError, match=r"matrix\[0\]\[1\]"):
        matrix_from_json({"matrix": [[1, 0.5], [0, 1]]})
    with pytest.raises(SchemaError, match=r"matrix\[1\]"):
        matrix_from_json({"matrix": [[1, 0], [0]]})
    with pytest.raises(SchemaError, match="'matrix'"):
        matrix_from_json({"rows": []})


def test_parse_json_text_passes_values():
    assert parse_json_text("[1, 2]") == [1, 2]
