"""File formats: graphs, local types and rational matrices as JSON.

Graph documents::

    {"vertices": ["x"], "edges": [{"u": "x", "v": "x", "iu": 2, "iv": 3}]}

Local type documents are one of::

    {"bs": [2, 3]}
    {"oriented": [2, 2]}                       # up, down
    {"local_type": [{"value": {"2": -1, "3": 1}, "multiplicity": 2}, ...]}

where ``value`` maps primes to exponents of ``ln p`` and the key ``"1"``
stands for the real number 1.  Matrix documents are
``{"matrix": [[2, 0], [0, "1/3"]]}`` with integer or ``"p/q"`` entries.

Malformed JSON is reported with its line and column; schema problems name
the offending field.
"""

from __future__ import annotations

import json
import re
from fractions import Fraction
from pathlib import Path
from typing import Any

from .bass_serre import LocalType
from .errors import SchemaError
from .graph_core import GraphOfZs, validate_graph

_SHORTHAND = re.compile(r"^(bs|oriented):(\d+),(\d+)$")


def parse_json_text(text: str, source: str = "<input>") -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{source}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None


def read_json(path: str | Path) -> Any:
    path = Path(path)
    return parse_json_text(path.read_text(encoding="utf-8"), str(path))


def graph_from_json(data: Any, source: str = "<input>") -> GraphOfZs:
    try:
        return validate_graph(data)
    except SchemaError as exc:
        raise SchemaError(f"{source}: {exc}") from None


def load_graph(path: str | Path) -> GraphOfZs:
    return graph_from_json(read_json(path), str(path))


def dump_graph(g: GraphOfZs) -> str:
    return json.dumps(g.to_json(), indent=2, sort_keys=True) + "\n"


def _pair(value: Any, field: str) -> tuple[int, int]:
    if (
        not isinstance(value, list)
        or len(value) != 2
        or not all(isinstance(x, int) and not isinstance(x, bool) for x in value)
    ):
        raise SchemaError(f"field '{field}': expected two integers, got {value!r}")
    a, b = value
    if a < 0 or b < 0 or (field == "bs" and (a < 1 or b < 1)):
        raise SchemaError(f"field '{field}': entries must be positive, got {value!r}")
    return a, b


def local_type_from_json(data: Any, source: str = "<input>") -> LocalType:
    if not isinstance(data, dict):
        raise SchemaError(f"{source}: local type document must be an object")
    keys = [k for k in ("bs", "oriented", "local_type") if k in data]
    if len(keys) != 1:
        raise SchemaError(f"{source}: expected exactly one of 'bs', 'oriented', 'local_type'")
    key = keys[0]
    try:
        if key == "bs":
            return LocalType.of_bs(*_pair(data["bs"], "bs"))
        if key == "oriented":
            return LocalType.oriented(*_pair(data["oriented"], "oriented"))
        items = data["local_type"]
        if not isinstance(items, list) or not items:
            raise SchemaError("field 'local_type': expected a nonempty list")
        for pos, item in enumerate(items):
            if not isinstance(item, dict) or "value" not in item or "multiplicity" not in item:
                raise SchemaError(f"local_type[{pos}]: expected an object with value, multiplicity")
            m = item["multiplicity"]
            if isinstance(m, bool) or not isinstance(m, int) or m < 1:
                raise SchemaError(f"local_type[{pos}].multiplicity: must be a positive integer")
            if not isinstance(item["value"], dict):
                raise SchemaError(f"local_type[{pos}].value: expected an object prime -> exponent")
        return LocalType.from_json(items)
    except SchemaError as exc:
        raise SchemaError(f"{source}: {exc}") from None
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"{source}: field '{key}': {exc}") from None


def load_local_type(spec: str) -> LocalType:
    """A local type from a file path or a ``bs:m,n`` / ``oriented:up,down`` shorthand."""
    m = _SHORTHAND.match(spec.strip())
    if m:
        kind, a, b = m.group(1), int(m.group(2)), int(m.group(3))
        return local_type_from_json({kind: [a, b]}, spec)
    return local_type_from_json(read_json(spec), spec)


def parse_rational(x: Any, where: str) -> Fraction:
    if isinstance(x, bool):
        raise SchemaError(f"{where}: expected a rational, got {x!r}")
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, str):
        try:
            return Fraction(x.strip())
        except (ValueError, ZeroDivisionError):
            pass
    raise SchemaError(f"{where}: expected an integer or a 'p/q' string, got {x!r}")


def matrix_from_json(data: Any, source: str = "<input>") -> list[list[Fraction]]:
    rows = data.get("matrix") if isinstance(data, dict) else None
    if not isinstance(rows, list) or not rows:
        raise SchemaError(f"{source}: missing field 'matrix' (a nonempty list of rows)")
    out = []
    for i, row in enumerate(rows):
        if not isinstance(row, list) or len(row) != len(rows):
            raise SchemaError(f"{source}: matrix[{i}]: expected a row of length {len(rows)}")
        out.append([parse_rational(x, f"{source}: matrix[{i}][{j}]") for j, x in enumerate(row)])
    return out


def load_matrix(path: str | Path) -> list[list[Fraction]]:
    return matrix_from_json(read_json(path), str(path))


def dumps(obj: Any) -> str:
    """Canonical JSON text: sorted keys, two-space indent, trailing newline."""
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"
