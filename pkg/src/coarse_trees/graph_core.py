"""Graphs of Z's: validation, reduction, heights and the coarse classification.

A graph of Z's is recorded purely through its inclusion indices: every edge
``(u, v, iu, iv)`` says the edge group sits with index ``iu`` in the vertex
group at ``u`` and with index ``iv`` at ``v``.

Sign convention for heights: crossing an edge from its ``u`` end to its ``v``
end changes height by ``ln(iv) - ln(iu)``, i.e. height goes up towards the end
where the edge group has the larger index.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Any, Hashable, Iterable, Mapping, Sequence

from .errors import Disconnected, EmptyGraph, NonPositiveIndex, SchemaError
from .heights import HeightValue


@dataclass(frozen=True)
class Edge:
    u: int
    v: int
    iu: int
    iv: int

    @property
    def is_loop(self) -> bool:
        return self.u == self.v

    def index_at(self, end: int) -> int:
        """Index at end 0 (the ``u`` end) or end 1 (the ``v`` end)."""
        return self.iu if end == 0 else self.iv

    def vertex_at(self, end: int) -> int:
        return self.u if end == 0 else self.v


@dataclass(frozen=True)
class GraphOfZs:
    vertices: tuple[Hashable, ...]
    edges: tuple[Edge, ...]

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    def label(self, vid: int) -> Hashable:
        return self.vertices[vid]

    def vertex_id(self, label: Hashable) -> int:
        try:
            return self.vertices.index(label)
        except ValueError:
            raise KeyError(f"no vertex labelled {label!r}") from None

    def incident_ends(self, vid: int) -> list[tuple[int, int]]:
        """(edge id, end) pairs at ``vid`` in edge-id order; loops give both ends."""
        out = []
        for eid, e in enumerate(self.edges):
            if e.u == vid:
                out.append((eid, 0))
            if e.v == vid:
                out.append((eid, 1))
        return out

    def valence(self, vid: int) -> int:
        return sum(self.edges[eid].index_at(end) for eid, end in self.incident_ends(vid))

    def to_json(self) -> dict[str, Any]:
        return {
            "vertices": list(self.vertices),
            "edges": [
                {"u": self.vertices[e.u], "v": self.vertices[e.v], "iu": e.iu, "iv": e.iv}
                for e in self.edges
            ],
        }


# ---------------------------------------------------------------------------
# classification labels


@dataclass(frozen=True)
class ClassLabel:
    kind: str
    n: int | None = None

    def __str__(self) -> str:
        return f"SolvableBS({self.n})" if self.kind == "SolvableBS" else self.kind


def VirtuallyFnTimesZ() -> ClassLabel:  # noqa: N802 - variant constructor
    return ClassLabel("VirtuallyFnTimesZ")


def SolvableBS(n: int) -> ClassLabel:  # noqa: N802
    if n <= 1:
        raise ValueError("SolvableBS needs n > 1")
    return ClassLabel("SolvableBS", n)


def QiBs23() -> ClassLabel:  # noqa: N802
    return ClassLabel("QiBs23")


# ---------------------------------------------------------------------------
# construction and validation


def _edge_fields(raw: Any, pos: int) -> tuple[Any, Any, Any, Any]:
    if isinstance(raw, Mapping):
        missing = [k for k in ("u", "v", "iu", "iv") if k not in raw]
        if missing:
            raise SchemaError(f"edges[{pos}]: missing field(s) {', '.join(missing)}")
        return raw["u"], raw["v"], raw["iu"], raw["iv"]
    if isinstance(raw, Sequence) and not isinstance(raw, str) and len(raw) == 4:
        return tuple(raw)  # type: ignore[return-value]
    raise SchemaError(f"edges[{pos}]: expected an object with u, v, iu, iv")


def validate_graph(raw: Any) -> GraphOfZs:
    """Check a raw description and return a graph with dense vertex ids.

    ``raw`` is a mapping with ``vertices`` (labels) and ``edges`` (objects
    ``{u, v, iu, iv}`` or 4-sequences), or an existing :class:`GraphOfZs`.
    """
    if isinstance(raw, GraphOfZs):
        raw = raw.to_json()
    if not isinstance(raw, Mapping):
        raise SchemaError("graph description must be an object")
    labels = raw.get("vertices")
    if labels is None:
        raise SchemaError("missing field 'vertices'")
    if not isinstance(labels, Sequence) or isinstance(labels, str):
        raise SchemaError("'vertices' must be a list")
    labels = tuple(labels)
    if not labels:
        raise EmptyGraph("graph has no vertices")
    index: dict[Hashable, int] = {}
    for pos, lab in enumerate(labels):
        try:
            hash(lab)
        except TypeError:
            raise SchemaError(f"vertices[{pos}]: label must be a string or number") from None
        if lab in index:
            raise SchemaError(f"vertices[{pos}]: duplicate label {lab!r}")
        index[lab] = pos

    raw_edges = raw.get("edges", [])
    if not isinstance(raw_edges, Sequence) or isinstance(raw_edges, str):
        raise SchemaError("'edges' must be a list")
    edges = []
    for pos, item in enumerate(raw_edges):
        u, v, iu, iv = _edge_fields(item, pos)
        for name, lab in (("u", u), ("v", v)):
            if lab not in index:
                raise SchemaError(f"edges[{pos}].{name}: unknown vertex {lab!r}")
        for name, val in (("iu", iu), ("iv", iv)):
            if isinstance(val, bool) or not isinstance(val, int):
                raise SchemaError(f"edges[{pos}].{name}: index must be an integer, got {val!r}")
            if val < 1:
                raise NonPositiveIndex(
                    f"edges[{pos}] ({u!r}-{v!r}): {name} = {val}; indices must be >= 1"
                )
        edges.append(Edge(index[u], index[v], iu, iv))

    g = GraphOfZs(labels, tuple(edges))
    seen = _reachable(g, 0)
    if len(seen) != len(labels):
        lost = next(i for i in range(len(labels)) if i not in seen)
        raise Disconnected(
            f"vertex {labels[lost]!r} is not connected to {labels[0]!r}"
        )
    return g


def _reachable(g: GraphOfZs, start: int) -> set[int]:
    adj: dict[int, list[int]] = {i: [] for i in range(g.n_vertices)}
    for e in g.edges:
        adj[e.u].append(e.v)
        adj[e.v].append(e.u)
    seen = {start}
    todo = deque([start])
    while todo:
        x = todo.popleft()
        for y in adj[x]:
            if y not in seen:
                seen.add(y)
                todo.append(y)
    return seen


def make_graph(vertices: Iterable[Hashable], edges: Iterable[tuple]) -> GraphOfZs:
    return validate_graph({"vertices": list(vertices), "edges": [list(e) for e in edges]})


def bs_graph(m: int, n: int) -> GraphOfZs:
    """The one-vertex, one-loop graph of BS(m, n)."""
    return make_graph(["x"], [("x", "x", m, n)])


def trefoil_graph() -> GraphOfZs:
    """Z *_Z Z with indices 2 and 3 (the trefoil knot group)."""
    return make_graph(["a", "b"], [("a", "b", 2, 3)])


# ---------------------------------------------------------------------------
# reduction


@dataclass(frozen=True)
class ReductionStep:
    edge: Edge
    absorbed: Hashable
    survivor: Hashable
    factor: int


def reduce_graph_with_trace(g: GraphOfZs) -> tuple[GraphOfZs, list[ReductionStep]]:
    """Collapse every non-loop edge that includes isomorphically at one end.

    The edge group of such an edge equals the vertex group at its index-1 end,
    so that vertex group becomes an index ``k`` subgroup of the other end's
    group (``k`` = the other index).  Edge ends that were attached to the
    absorbed vertex are re-attached to the survivor with their index
    multiplied by ``k``.
    """
    alive = list(range(g.n_vertices))
    edges: list[list[int] | None] = [[e.u, e.v, e.iu, e.iv] for e in g.edges]
    trace = []
    while True:
        pick = next(
            (
                i
                for i, e in enumerate(edges)
                if e is not None and e[0] != e[1] and (e[2] == 1 or e[3] == 1)
            ),
            None,
        )
        if pick is None:
            break
        u, v, iu, iv = edges[pick]
        if iu == 1:
            absorbed, survivor, factor = u, v, iv
        else:
            absorbed, survivor, factor = v, u, iu
        trace.append(
            ReductionStep(
                Edge(u, v, iu, iv), g.vertices[absorbed], g.vertices[survivor], factor
            )
        )
        edges[pick] = None
        for e in edges:
            if e is None:
                continue
            if e[0] == absorbed:
                e[0] = survivor
                e[2] *= factor
            if e[1] == absorbed:
                e[1] = survivor
                e[3] *= factor
        alive.remove(absorbed)

    new_id = {old: i for i, old in enumerate(alive)}
    reduced = GraphOfZs(
        tuple(g.vertices[i] for i in alive),
        tuple(Edge(new_id[e[0]], new_id[e[1]], e[2], e[3]) for e in edges if e is not None),
    )
    return reduced, trace


def reduce_graph(g: GraphOfZs) -> GraphOfZs:
    return reduce_graph_with_trace(g)[0]


def is_reduced(g: GraphOfZs) -> bool:
    return all(e.is_loop or (e.iu >= 2 and e.iv >= 2) for e in g.edges)


# ---------------------------------------------------------------------------
# heights


def edge_height_change(g: GraphOfZs, e: int | Edge, direction: str = "uv") -> HeightValue:
    """Height change when crossing ``e``; ``direction`` is ``"uv"`` or ``"vu"``."""
    edge = g.edges[e] if isinstance(e, int) else e
    if direction == "uv":
        return HeightValue.log_ratio(edge.iv, edge.iu)
    if direction == "vu":
        return HeightValue.log_ratio(edge.iu, edge.iv)
    raise ValueError(f"direction must be 'uv' or 'vu', not {direction!r}")


def crossing_change(edge: Edge, from_end: int) -> HeightValue:
    """Change when leaving through ``from_end`` and arriving at the other end."""
    return HeightValue.log_ratio(edge.index_at(1 - from_end), edge.index_at(from_end))


def spanning_tree(g: GraphOfZs, root: int = 0) -> frozenset[int]:
    """Edge ids of the BFS spanning tree (lowest edge id first)."""
    seen = {root}
    tree = []
    todo = deque([root])
    while todo:
        x = todo.popleft()
        for eid, end in g.incident_ends(x):
            e = g.edges[eid]
            if e.is_loop:
                continue
            y = e.vertex_at(1 - end)
            if y not in seen:
                seen.add(y)
                tree.append(eid)
                todo.append(y)
    return frozenset(tree)


def potentials(g: GraphOfZs, tree: Iterable[int] | None = None, root: int = 0) -> list[HeightValue]:
    """Height of every vertex measured along ``tree`` from ``root``."""
    tree = spanning_tree(g, root) if tree is None else frozenset(tree)
    pot: list[HeightValue | None] = [None] * g.n_vertices
    pot[root] = HeightValue.zero()
    todo = deque([root])
    while todo:
        x = todo.popleft()
        for eid, end in g.incident_ends(x):
            if eid not in tree:
                continue
            e = g.edges[eid]
            y = e.vertex_at(1 - end)
            if pot[y] is None:
                pot[y] = pot[x] + crossing_change(e, end)
                todo.append(y)
    if any(p is None for p in pot):
        raise ValueError("edge set is not a spanning tree of the graph")
    return pot  # type: ignore[return-value]


def is_height_bounded(g: GraphOfZs, tree: Iterable[int] | None = None) -> bool:
    """True iff every cycle has zero net height change."""
    tree = spanning_tree(g) if tree is None else frozenset(tree)
    pot = potentials(g, tree)
    for eid, e in enumerate(g.edges):
        if eid in tree:
            continue
        if pot[e.u] + edge_height_change(g, e, "uv") != pot[e.v]:
            return False
    return True


def classify_with_trace(g: GraphOfZs) -> tuple[ClassLabel, GraphOfZs, list[ReductionStep]]:
    reduced, trace = reduce_graph_with_trace(g)
    if is_height_bounded(reduced):
        return VirtuallyFnTimesZ(), reduced, trace
    if reduced.n_vertices == 1 and len(reduced.edges) == 1:
        e = reduced.edges[0]
        lo, hi = sorted((e.iu, e.iv))
        if lo == 1 and hi > 1:
            return SolvableBS(hi), reduced, trace
    return QiBs23(), reduced, trace


def classify(g: GraphOfZs) -> ClassLabel:
    """Which of the three coarse classes the fundamental group falls in."""
    return classify_with_trace(g)[0]
