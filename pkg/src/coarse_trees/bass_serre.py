"""Finite balls in Bass-Serre trees, spanning-tree lifts and homogenization."""

from __future__ import annotations

import os
from collections import Counter, deque
from dataclasses import dataclass
from functools import cached_property
from typing import Hashable, Iterable, Mapping, NamedTuple

import numpy as np

from .errors import BallTooLarge, NotReduced
from .graph_core import (
    GraphOfZs,
    crossing_change,
    is_height_bounded,
    potentials,
    spanning_tree,
)
from .heights import HeightValue

DEFAULT_MAX_VERTICES = 3_000_000


def max_vertices_cap() -> int:
    raw = os.environ.get("COARSE_TREES_MAX_VERTICES")
    return int(raw) if raw else DEFAULT_MAX_VERTICES


# ---------------------------------------------------------------------------
# local types


@dataclass(frozen=True)
class LocalType:
    """Multiset of height changes at a vertex, sorted by value."""

    entries: tuple[tuple[HeightValue, int], ...]

    def __post_init__(self):
        for h, m in self.entries:
            if m < 1:
                raise ValueError(f"multiplicity of {h!r} must be >= 1")

    @classmethod
    def from_changes(cls, changes: Iterable[HeightValue]) -> "LocalType":
        return cls.from_counts(Counter(changes))

    @classmethod
    def from_counts(cls, counts: Mapping[HeightValue, int]) -> "LocalType":
        items = sorted(((h, m) for h, m in counts.items() if m), key=lambda hm: hm[0].sort_key())
        return cls(tuple(items))

    @classmethod
    def oriented(cls, up: int, down: int) -> "LocalType":
        """Type of the oriented tree with ``up`` outgoing and ``down`` incoming edges."""
        return cls.from_counts({HeightValue.unit(1): up, HeightValue.unit(-1): down})

    @classmethod
    def of_bs(cls, m: int, n: int) -> "LocalType":
        d = HeightValue.log_ratio(n, m)
        return cls.from_counts({d: m, -d: n}) if m != n else cls.from_counts({d: m + n})

    @property
    def valence(self) -> int:
        return sum(m for _, m in self.entries)

    def values(self) -> list[HeightValue]:
        return [h for h, _ in self.entries]

    def multiplicity(self, h: HeightValue) -> int:
        return dict(self.entries).get(h, 0)

    def elements(self) -> list[HeightValue]:
        return [h for h, m in self.entries for _ in range(m)]

    def max_abs(self) -> float:
        return max((abs(h.approx) for h, _ in self.entries), default=0.0)

    def is_symmetric(self) -> bool:
        """Every change has its negation present (needed to build a tree)."""
        vals = set(self.values())
        return all(-h in vals for h in vals)

    def to_json(self) -> list[dict]:
        return [
            {"value": h.to_json(), "approx": h.approx, "multiplicity": m}
            for h, m in self.entries
        ]

    @classmethod
    def from_json(cls, data: Iterable[Mapping]) -> "LocalType":
        return cls.from_counts(
            {HeightValue.from_json(item["value"]): int(item["multiplicity"]) for item in data}
        )

    def __str__(self) -> str:
        parts = [f"{h.approx:+.4g}x{m}" for h, m in self.entries]
        return "{" + ", ".join(parts) + "}"


# ---------------------------------------------------------------------------
# balls


class TreeVertex(NamedTuple):
    id: int
    orbit: int
    height: HeightValue
    parent: tuple[int, int, int] | None  # (parent id, edge orbit, end of that edge at this vertex)
    depth: int


class TreeBall:
    """A breadth-first ball in a tree with exact heights.

    Vertex ids are BFS positions.  ``parent_edge``/``parent_end`` record the
    edge orbit and the end of it sitting at the child; they are ``-1`` for the
    root and for balls of trees without an underlying graph.
    """

    def __init__(
        self,
        orbit: list[int],
        heights: list[HeightValue],
        parent: list[int],
        parent_edge: list[int],
        parent_end: list[int],
        depth: list[int],
        radius: int,
        height_bounded: bool | None = None,
        graph: GraphOfZs | None = None,
    ):
        self.orbit = orbit
        self.heights = heights
        self.parent = np.asarray(parent, dtype=np.int64)
        self.parent_edge = parent_edge
        self.parent_end = parent_end
        self.depth = np.asarray(depth, dtype=np.int64)
        self.radius = radius
        self.height_bounded = height_bounded
        self.graph = graph
        self.hf = np.array([h.approx for h in heights], dtype=float)

    root = 0

    def __len__(self) -> int:
        return len(self.heights)

    def vertex(self, vid: int) -> TreeVertex:
        p = int(self.parent[vid])
        link = None if p < 0 else (p, self.parent_edge[vid], self.parent_end[vid])
        return TreeVertex(vid, self.orbit[vid], self.heights[vid], link, int(self.depth[vid]))

    def height(self, vid: int) -> HeightValue:
        return self.heights[vid]

    def height_float(self, vid: int) -> float:
        return float(self.hf[vid])

    def contains(self, vid: int) -> bool:
        return 0 <= vid < len(self)

    def is_boundary(self, vid: int) -> bool:
        return int(self.depth[vid]) == self.radius

    @cached_property
    def children(self) -> list[list[int]]:
        kids: list[list[int]] = [[] for _ in range(len(self))]
        for v in range(1, len(self)):
            kids[int(self.parent[v])].append(v)
        return kids

    def neighbors(self, vid: int) -> list[int]:
        out = list(self.children[vid])
        if vid:
            out.insert(0, int(self.parent[vid]))
        return out

    def path(self, a: int, b: int) -> list[int]:
        """Vertices of the geodesic from ``a`` to ``b``."""
        up_a, up_b = [a], [b]
        while self.depth[up_a[-1]] > self.depth[up_b[-1]]:
            up_a.append(int(self.parent[up_a[-1]]))
        while self.depth[up_b[-1]] > self.depth[up_a[-1]]:
            up_b.append(int(self.parent[up_b[-1]]))
        while up_a[-1] != up_b[-1]:
            up_a.append(int(self.parent[up_a[-1]]))
            up_b.append(int(self.parent[up_b[-1]]))
        return up_a + up_b[-2::-1]

    def distance(self, a: int, b: int) -> int:
        return len(self.path(a, b)) - 1

    @cached_property
    def preorder(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(order, tin, tout): subtree of v is ``order[tin[v]:tout[v]]``."""
        n = len(self)
        order = np.empty(n, dtype=np.int64)
        tin = np.empty(n, dtype=np.int64)
        tout = np.empty(n, dtype=np.int64)
        kids = self.children
        pos = 0
        stack = [(0, False)]
        while stack:
            v, done = stack.pop()
            if done:
                tout[v] = pos
                continue
            tin[v] = pos
            order[pos] = v
            pos += 1
            stack.append((v, True))
            for c in reversed(kids[v]):
                stack.append((c, False))
        return order, tin, tout

    def distances_from(self, a: int) -> np.ndarray:
        """Tree distance from ``a`` to every vertex (indexed by vertex id)."""
        order, tin, tout = self.preorder
        dep = self.depth
        da = int(dep[a])
        dist_pre = dep[order] + da
        chain = []
        v = a
        while v != 0:
            chain.append(v)
            v = int(self.parent[v])
        for anc in reversed(chain):
            lo, hi = tin[anc], tout[anc]
            dist_pre[lo:hi] = dep[order[lo:hi]] + da - 2 * int(dep[anc])
        out = np.empty_like(dist_pre)
        out[order] = dist_pre
        return out

    def to_json(self) -> dict:
        return {
            "radius": self.radius,
            "vertices": [
                {
                    "id": v,
                    "orbit": self.orbit[v] if self.graph is None else self.graph.label(self.orbit[v]),
                    "parent": int(self.parent[v]),
                    "depth": int(self.depth[v]),
                    "height": self.heights[v].to_json(),
                    "height_approx": self.heights[v].approx,
                }
                for v in range(len(self))
            ],
        }

    def to_dot(self, name: str = "ball") -> str:
        lines = [f"graph {name} {{", "  node [shape=circle, fontsize=9];"]
        for v in range(len(self)):
            lab = f"{v}\\nh={self.hf[v]:.3f}"
            lines.append(f'  v{v} [label="{lab}"];')
        for v in range(1, len(self)):
            lines.append(f"  v{int(self.parent[v])} -- v{v};")
        lines.append("}")
        return "\n".join(lines) + "\n"


def _child_slots(g: GraphOfZs) -> dict[int, list[tuple[int, int, int, int, HeightValue]]]:
    """Per Γ-vertex: (edge id, end, index, far vertex, change) for each incident end."""
    out = {}
    for x in range(g.n_vertices):
        slots = []
        for eid, end in g.incident_ends(x):
            e = g.edges[eid]
            slots.append((eid, end, e.index_at(end), e.vertex_at(1 - end), crossing_change(e, end)))
        out[x] = slots
    return out


def ball_size(g: GraphOfZs, root: int, radius: int) -> int:
    """Number of vertices in the ball, counted without building it."""
    slots = _child_slots(g)
    level: Counter = Counter({(root, None): 1})
    total = 1
    for _ in range(radius):
        nxt: Counter = Counter()
        for (x, arrival), count in level.items():
            for eid, end, k, y, _ in slots[x]:
                k_eff = k - 1 if arrival == (eid, end) else k
                if k_eff:
                    nxt[(y, (eid, 1 - end))] += count * k_eff
        level = nxt
        total += sum(level.values())
    return total


def build_ball(
    g: GraphOfZs, root_orbit: Hashable, radius: int, max_vertices: int | None = None
) -> TreeBall:
    """Breadth-first ball of the Bass-Serre tree around a lift of ``root_orbit``.

    Children are enumerated by incident edge end (edge id order, ``u`` end
    before ``v`` end for loops) and then by coset slot.
    """
    if radius < 0:
        raise ValueError("radius must be >= 0")
    root = g.vertex_id(root_orbit)
    cap = max_vertices_cap() if max_vertices is None else max_vertices
    size = ball_size(g, root, radius)
    if size > cap:
        raise BallTooLarge(f"ball of radius {radius} has {size} vertices (cap {cap})")
    slots = _child_slots(g)

    orbit = [root]
    heights = [HeightValue.zero()]
    parent = [-1]
    p_edge = [-1]
    p_end = [-1]
    depth = [0]
    frontier = [0]
    for d in range(1, radius + 1):
        nxt = []
        for v in frontier:
            arrival = (p_edge[v], p_end[v])
            hv = heights[v]
            for eid, end, k, y, change in slots[orbit[v]]:
                k_eff = k - 1 if arrival == (eid, end) else k
                hc = hv + change
                for _ in range(k_eff):
                    orbit.append(y)
                    heights.append(hc)
                    parent.append(v)
                    p_edge.append(eid)
                    p_end.append(1 - end)
                    depth.append(d)
                    nxt.append(len(orbit) - 1)
        frontier = nxt
    return TreeBall(
        orbit, heights, parent, p_edge, p_end, depth, radius, is_height_bounded(g), g
    )


# ---------------------------------------------------------------------------
# spanning-tree lifts


@dataclass(frozen=True)
class Lift:
    vertices: tuple[int, ...]
    base: int | None  # ball vertex lifting the basepoint, if inside the ball
    complete: bool


@dataclass(frozen=True)
class LiftPartition:
    lifts: tuple[Lift, ...]
    membership: tuple[int, ...]  # ball vertex -> lift index


def _check_tree_reduced(g: GraphOfZs, tree: frozenset[int]) -> None:
    for eid in sorted(tree):
        e = g.edges[eid]
        if e.is_loop:
            raise ValueError(f"edge {eid} is a loop and cannot be in a spanning tree")
        if e.iu < 2 or e.iv < 2:
            raise NotReduced(
                f"spanning-tree edge {eid} ({g.label(e.u)!r}-{g.label(e.v)!r}) has index 1"
            )


def lift_spanning_tree(
    g: GraphOfZs, tree: Iterable[int] | None, ball: TreeBall, basepoint: int = 0
) -> LiftPartition:
    """Partition the ball into connected lifts of the spanning tree ``tree``.

    Lifts are grown greedily in BFS order: an uncovered vertex always has a
    covered parent, and since every tree edge has index >= 2 at both ends the
    new lift can be threaded through the vertex's children.  Lifts cut by the
    ball boundary are marked incomplete.
    """
    tree = spanning_tree(g) if tree is None else frozenset(tree)
    _check_tree_reduced(g, tree)
    f_ends = {x: [(eid, end) for eid, end in g.incident_ends(x) if eid in tree] for x in range(g.n_vertices)}

    kids_by_end: dict[int, dict[tuple[int, int], list[int]]] = {}

    def children_via(v: int, eid: int, end: int) -> list[int]:
        table = kids_by_end.get(v)
        if table is None:
            table = {}
            for c in ball.children[v]:
                key = (ball.parent_edge[c], 1 - ball.parent_end[c])
                table.setdefault(key, []).append(c)
            kids_by_end[v] = table
        return table.get((eid, end), [])

    member = [-1] * len(ball)
    lifts = []
    for start in range(len(ball)):
        if member[start] >= 0:
            continue
        lid = len(lifts)
        verts = [start]
        member[start] = lid
        complete = True
        # at ``start`` every tree edge needs a fresh lift; the parent is
        # already covered, so candidates are children only
        todo: deque = deque([(start, None)])
        while todo:
            v, came = todo.popleft()
            for eid, end in f_ends[ball.orbit[v]]:
                if (eid, end) == came:
                    continue
                options = [c for c in children_via(v, eid, end) if member[c] < 0]
                if not options:
                    complete = False
                    continue
                c = options[0]
                member[c] = lid
                verts.append(c)
                todo.append((c, (eid, 1 - end)))
        base = next((v for v in verts if ball.orbit[v] == basepoint), None)
        lifts.append(Lift(tuple(verts), base, complete and len(verts) == g.n_vertices))
    return LiftPartition(tuple(lifts), tuple(member))


def collapsed_local_types(ball: TreeBall, partition: LiftPartition) -> dict[int, LocalType]:
    """Observed height-change multiset at every interior collapsed vertex.

    A lift is interior when it is complete, lies off the boundary sphere and
    every neighbouring lift is complete.  The collapsed change across a ball
    edge from lift P to lift Q is ``h(base Q) - h(base P)``.
    """
    out = {}
    member = partition.membership
    for lid, lift in enumerate(partition.lifts):
        if not lift.complete or any(ball.is_boundary(v) for v in lift.vertices):
            continue
        inside = set(lift.vertices)
        changes = []
        ok = True
        for v in lift.vertices:
            for w in ball.neighbors(v):
                if w in inside:
                    continue
                other = partition.lifts[member[w]]
                if not other.complete or other.base is None:
                    ok = False
                    break
                changes.append(ball.heights[other.base] - ball.heights[lift.base])
            if not ok:
                break
        if ok:
            out[lid] = LocalType.from_changes(changes)
    return out


def homogenize(g: GraphOfZs, tree: Iterable[int] | None = None, basepoint: int = 0) -> LocalType:
    """Local type of the tree obtained by collapsing lifts of ``tree``."""
    tree = spanning_tree(g, basepoint) if tree is None else frozenset(tree)
    _check_tree_reduced(g, tree)
    pot = potentials(g, tree, basepoint)
    counts: Counter = Counter()
    zero = HeightValue.zero()
    for eid, e in enumerate(g.edges):
        if eid in tree:
            counts[zero] += (e.iu - 1) + (e.iv - 1)
            continue
        delta = pot[e.u] + crossing_change(e, 0) - pot[e.v]
        counts[delta] += e.iu
        counts[-delta] += e.iv
    return LocalType.from_counts(counts)
