"""Homogeneous coarsely oriented trees, zero-edge selection and laminations.

A :class:`LazyTree` realizes the homogeneous tree of a :class:`LocalType`
with implicit breadth-first vertex ids: the root is 0, its ``n`` children are
``1..n`` and every later vertex has ``n - 1`` children stored contiguously.
Parents, children and depths are therefore pure arithmetic; only heights
(and lamination state) need memoizing.  Whole levels can also be
materialized as numpy arrays, which is what large laminations use.

Laminations follow the greedy ray construction: through a vertex ``v`` an
upward ray starts with an edge of change >= beta0, and at step ``n`` it
takes an edge of change >= beta if ``beta * (n + 1) >= h(r(n)) - h(v)`` and
an edge of change <= -beta otherwise; the downward ray is the mirror image.
Because every new line is threaded through a vertex whose parent is already
covered, each vertex either continues its parent's ray or is the apex of a
new line, and the state of a child depends only on the state of its parent.
"""

from __future__ import annotations

import enum
import threading
from bisect import bisect_right
from collections import deque
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .bass_serre import LocalType, TreeBall, max_vertices_cap
from .errors import (
    BallTooLarge,
    Degenerate,
    NotATreeType,
    NotTypeTwoTwo,
    SlopeTooLarge,
    ValenceOneInterior,
)
from .heights import HeightValue

TOL = 1e-9

APEX, UP, DOWN = 0, 1, 2


class TreeKind(enum.Enum):
    ConstantHeight = "ConstantHeight"
    UniDirectional = "UniDirectional"
    TypeTwoTwo = "TypeTwoTwo"


def classify_local_type(t: LocalType) -> TreeKind:
    """Which case of the homogeneous-tree trichotomy a local type is in.

    Zero changes, when mixed with non-zero ones, are collapsed away (a
    one-edge-per-vertex subset of the zero forest always exists), and the
    collapsed vertex sees every non-zero change twice, which lands in the
    two-up/two-down case.
    """
    if not t.entries:
        raise ValueError("empty local type")
    pos = sum(m for h, m in t.entries if h.approx > 0)
    neg = sum(m for h, m in t.entries if h.approx < 0)
    zero = t.valence - pos - neg
    if pos == 0 and neg == 0:
        return TreeKind.ConstantHeight
    if t.valence < 3:
        raise Degenerate(f"local type {t} describes a line or a finite tree")
    if pos == 0 or neg == 0:
        raise NotATreeType(f"local type {t} has changes of one sign only")
    if zero == 0 and (pos == 1 or neg == 1):
        return TreeKind.UniDirectional
    return TreeKind.TypeTwoTwo


def beta_max(t: LocalType) -> float:
    """Largest beta0 with two changes >= beta0 and two changes <= -beta0."""
    ups = sorted((h.approx for h in t.elements() if h.approx > 0), reverse=True)
    downs = sorted(h.approx for h in t.elements() if h.approx < 0)
    if len(ups) < 2 or len(downs) < 2:
        raise NotTypeTwoTwo(f"local type {t} lacks two strict increases and two strict decreases")
    return min(ups[1], -downs[1])


# ---------------------------------------------------------------------------
# the lazy tree


class LazyTree:
    """Homogeneous tree of a local type, materialized on demand.

    Memo access is guarded by a lock so concurrent readers see a consistent
    table; bulk level arrays are immutable once built.
    """

    def __init__(self, local_type: LocalType):
        if local_type.valence < 2:
            raise Degenerate(f"valence {local_type.valence} < 2")
        if not local_type.is_symmetric():
            raise NotATreeType(f"{local_type} is not closed under negation")
        self.local_type = local_type
        self.values: list[HeightValue] = local_type.values()
        self.n = local_type.valence
        vidx = {h: i for i, h in enumerate(self.values)}
        self.neg = [vidx[-h] for h in self.values]
        self.cf = np.array([h.approx for h in self.values])
        self.primes = sorted({p for h in self.values for p, _ in h.coeffs})
        pidx = {p: i for i, p in enumerate(self.primes)}
        vec = np.zeros((len(self.values), len(self.primes)), dtype=np.int16)
        for i, h in enumerate(self.values):
            for p, c in h.coeffs:
                vec[i, pidx[p]] = c
        self.vec = vec
        self._vec_t = [tuple(int(x) for x in row) for row in vec]

        full = [vidx[h] for h in local_type.elements()]
        self.root_slots = full
        table = []
        for j in range(len(self.values)):
            rest = list(full)
            rest.remove(self.neg[j])
            table.append(rest)
        self.child_slots = table
        self._child_table = np.array(table, dtype=np.int16).reshape(len(self.values), self.n - 1)

        self._starts = [0, 1]
        self._memo: dict[int, tuple[int, float, tuple[int, ...]]] = {
            0: (-1, 0.0, (0,) * len(self.primes))
        }
        self._levels: list[dict] = []
        self._lock = threading.RLock()

    # ids ----------------------------------------------------------------

    def level_start(self, d: int) -> int:
        """First vertex id at depth ``d``."""
        while len(self._starts) <= d + 1:
            k = len(self._starts) - 1
            size = 1 if k == 0 else self.n * (self.n - 1) ** (k - 1)
            self._starts.append(self._starts[-1] + size)
        return self._starts[d]

    def level_size(self, d: int) -> int:
        return 1 if d == 0 else self.n * (self.n - 1) ** (d - 1)

    def ball_size(self, radius: int) -> int:
        return self.level_start(radius + 1)

    def depth(self, v: int) -> int:
        while self._starts[-1] <= v:
            self.level_start(len(self._starts))
        return bisect_right(self._starts, v) - 1

    def parent(self, v: int) -> int:
        d = self.depth(v)
        if d == 0:
            return -1
        if d == 1:
            return 0
        i = v - self._starts[d]
        return self._starts[d - 1] + i // (self.n - 1)

    def slot(self, v: int) -> int:
        d = self.depth(v)
        if d == 1:
            return v - 1
        return (v - self._starts[d]) % (self.n - 1)

    def n_children(self, v: int) -> int:
        return self.n if v == 0 else self.n - 1

    def child(self, v: int, s: int) -> int:
        if v == 0:
            return 1 + s
        d = self.depth(v)
        return self.level_start(d + 1) + (v - self._starts[d]) * (self.n - 1) + s

    def children(self, v: int) -> range:
        first = self.child(v, 0)
        return range(first, first + self.n_children(v))

    def neighbors(self, v: int) -> list[int]:
        out = list(self.children(v))
        if v:
            out.insert(0, self.parent(v))
        return out

    def slot_changes(self, v: int) -> list[int]:
        """Value indices of the changes towards each child slot of ``v``."""
        return self.root_slots if v == 0 else self.child_slots[self.change_index(v)]

    # heights ------------------------------------------------------------

    def _state(self, v: int) -> tuple[int, float, tuple[int, ...]]:
        hit = self._memo.get(v)
        if hit is not None:
            return hit
        with self._lock:
            lvl = self._level_of_arrays(v)
            if lvl is not None:
                arr, i = lvl
                st = (int(arr["chg"][i]), float(arr["hf"][i]), tuple(int(x) for x in arr["hexp"][i]))
                self._memo[v] = st
                return st
            chain = []
            x = v
            while x not in self._memo:
                chain.append(x)
                x = self.parent(x)
            chg, hf, hv = self._memo[x]
            for y in reversed(chain):
                p = self.parent(y)
                slots = self.root_slots if p == 0 else self.child_slots[self._memo[p][0]]
                c = slots[self.slot(y)]
                st = (c, hf + float(self.cf[c]), tuple(a + b for a, b in zip(hv, self._vec_t[c])))
                self._memo[y] = st
                chg, hf, hv = st
            return self._memo[v]

    def change_index(self, v: int) -> int:
        """Value index of the change crossing from ``parent(v)`` to ``v``."""
        return self._state(v)[0]

    def edge_change(self, v: int) -> HeightValue:
        return self.values[self.change_index(v)]

    def height_float(self, v: int) -> float:
        return self._state(v)[1]

    def height(self, v: int) -> HeightValue:
        hv = self._state(v)[2]
        return HeightValue.from_mapping(dict(zip(self.primes, hv)))

    def path(self, a: int, b: int) -> list[int]:
        up_a, up_b = [a], [b]
        da, db = self.depth(a), self.depth(b)
        while da > db:
            up_a.append(self.parent(up_a[-1]))
            da -= 1
        while db > da:
            up_b.append(self.parent(up_b[-1]))
            db -= 1
        while up_a[-1] != up_b[-1]:
            up_a.append(self.parent(up_a[-1]))
            up_b.append(self.parent(up_b[-1]))
        return up_a + up_b[-2::-1]

    def distance(self, a: int, b: int) -> int:
        da, db = self.depth(a), self.depth(b)
        total = 0
        while da > db:
            a = self.parent(a)
            da -= 1
            total += 1
        while db > da:
            b = self.parent(b)
            db -= 1
            total += 1
        while a != b:
            a, b = self.parent(a), self.parent(b)
            total += 2
        return total

    # bulk levels ----------------------------------------------------------

    def _level_of_arrays(self, v: int):
        if not self._levels:
            return None
        d = self.depth(v)
        if d >= len(self._levels):
            return None
        return self._levels[d], v - self._starts[d]

    def materialize(self, depth: int) -> list[dict]:
        """Build (or reuse) level arrays ``chg``, ``hexp``, ``hf`` up to ``depth``."""
        total = self.ball_size(depth)
        if total > max_vertices_cap() and depth >= len(self._levels):
            raise BallTooLarge(f"ball of radius {depth} has {total} vertices (cap {max_vertices_cap()})")
        with self._lock:
            if not self._levels:
                self._levels.append(
                    {
                        "chg": np.array([-1], dtype=np.int16),
                        "hexp": np.zeros((1, len(self.primes)), dtype=np.int16),
                        "hf": np.zeros(1),
                    }
                )
            while len(self._levels) <= depth:
                d = len(self._levels)
                prev = self._levels[-1]
                if d == 1:
                    chg = np.array(self.root_slots, dtype=np.int16)
                    par = np.zeros(self.n, dtype=np.int64)
                    hexp = self.vec[chg]
                    hf = self.cf[chg]
                else:
                    chg = self._child_table[prev["chg"]].ravel()
                    k = self.n - 1
                    hexp = (prev["hexp"][:, None, :] + self.vec[chg].reshape(-1, k, len(self.primes))).reshape(
                        -1, len(self.primes)
                    )
                    hf = (prev["hf"][:, None] + self.cf[chg].reshape(-1, k)).ravel()
                    par = None
                self._levels.append({"chg": chg, "hexp": hexp, "hf": hf})
                del par
            self.level_start(depth + 1)
        return self._levels[: depth + 1]

    def ball(self, radius: int) -> TreeBall:
        """The radius-``radius`` ball as a :class:`TreeBall` with the same ids."""
        levels = self.materialize(radius)
        heights: list[HeightValue] = []
        parent = [-1]
        depth = [0]
        cache: dict[tuple[int, ...], HeightValue] = {}
        for d, lvl in enumerate(levels):
            for row in lvl["hexp"]:
                key = tuple(int(x) for x in row)
                h = cache.get(key)
                if h is None:
                    h = cache[key] = HeightValue.from_mapping(dict(zip(self.primes, key)))
                heights.append(h)
            if d == 0:
                continue
            size = self.level_size(d)
            if d == 1:
                parent.extend([0] * size)
            else:
                base = self._starts[d - 1]
                parent.extend((base + np.arange(size) // (self.n - 1)).tolist())
            depth.extend([d] * size)
        n = len(heights)
        bounded = all(h.is_zero() for h in self.values)
        return TreeBall([0] * n, heights, parent, [-1] * n, [-1] * n, depth, radius, bounded)


# ---------------------------------------------------------------------------
# zero-edge selection


def select_one_edge_per_vertex(
    edges: Iterable[tuple[int, int]], interior: Iterable[int]
) -> set[tuple[int, int]]:
    """Edges of a forest such that every interior vertex meets exactly one.

    Follows the maximal-subtree argument: grow a covered subtree, and when a
    new vertex ``v`` hangs off it, select some other edge at ``v``.  Single
    edge components are taken whole.  Raises :class:`ValenceOneInterior` when
    an interior vertex of a larger component has only one edge.
    """
    adj: dict[int, list[int]] = {}
    for a, b in edges:
        adj.setdefault(a, []).append(b)
        adj.setdefault(b, []).append(a)
    for nb in adj.values():
        nb.sort()
    interior = set(interior)

    def key(a, b):
        return (a, b) if a < b else (b, a)

    chosen: set[tuple[int, int]] = set()
    seen: set[int] = set()
    for start in sorted(adj):
        if start in seen:
            continue
        comp = [start]
        seen.add(start)
        todo = deque([start])
        while todo:
            x = todo.popleft()
            for y in adj[x]:
                if y not in seen:
                    seen.add(y)
                    comp.append(y)
                    todo.append(y)
        if len(comp) == 2:
            chosen.add(key(comp[0], comp[1]))
            continue
        for x in comp:
            if x in interior and len(adj[x]) == 1:
                raise ValenceOneInterior(f"interior vertex {x} has a single zero-change edge")
        r = start
        w = adj[r][0]
        chosen.add(key(r, w))
        tree_set = {r, w}
        frontier = deque((y, x) for x in (r, w) for y in adj[x] if y not in tree_set)
        while frontier:
            v, u = frontier.popleft()
            if v in tree_set:
                continue
            tree_set.add(v)
            other = [y for y in adj[v] if y != u and y not in tree_set]
            if not other:
                continue
            w = other[0]
            chosen.add(key(v, w))
            tree_set.add(w)
            frontier.extend((y, v) for y in adj[v] if y not in tree_set)
            frontier.extend((y, w) for y in adj[w] if y not in tree_set)
    return chosen


def select_zero_edges(tree: LazyTree, region: Iterable[int]) -> set[tuple[int, int]]:
    """Zero-change edges inside ``region`` meeting every interior vertex once.

    A vertex is interior when all of its neighbours lie in ``region``.
    Edges are returned as ``(parent, child)`` pairs.
    """
    region = set(region)
    zero_edges = []
    for v in region:
        if v and tree.parent(v) in region and tree.edge_change(v).is_zero():
            zero_edges.append((tree.parent(v), v))
    interior = [v for v in region if all(w in region for w in tree.neighbors(v))]
    return select_one_edge_per_vertex(zero_edges, interior)


# ---------------------------------------------------------------------------
# lines and laminations


@dataclass(frozen=True)
class Line:
    id: int
    vertices: tuple[int, ...]  # ordered by parameter
    params: tuple[int, ...]
    heights: tuple[float, ...]
    beta: float
    C: float

    def exact_heights(self, tree: LazyTree) -> list[HeightValue]:
        return [tree.height(v) for v in self.vertices]


def verify_slope(line: Line, beta: float, C: float) -> tuple[bool, float]:
    """Check ``|h(g(n)) - h(g(m)) - beta (n - m)| <= C`` over all pairs.

    The worst pair deviation equals the spread of ``h(g(n)) - beta n``.
    """
    if not line.vertices:
        return True, 0.0
    g = np.asarray(line.heights) - beta * np.asarray(line.params, dtype=float)
    worst = float(g.max() - g.min())
    return worst <= C + TOL, worst


class Lamination:
    """Lamination of a :class:`LazyTree` by lines of slope ``beta``.

    Line ids are the ids of their apex vertex (the vertex closest to the
    root).  State is available lazily for any vertex; ``region_depth`` levels
    are additionally held as arrays when built through
    :func:`build_lamination`.
    """

    def __init__(self, tree: LazyTree, beta: float, beta0: float | None = None):
        self.tree = tree
        self.beta = float(beta)
        t = tree.local_type
        self.beta0 = beta_max(t) if beta0 is None else beta0
        self.M = t.max_abs()
        self.C = 2 * self.M
        if self.beta < 0:
            raise ValueError("beta must be >= 0")
        if self.beta > self.beta0 + TOL:
            raise SlopeTooLarge(f"beta {self.beta} exceeds beta0 {self.beta0}")
        b, b0 = self.beta, self.beta0

        def first(slots, pred):
            for s, c in enumerate(slots):
                if pred(tree.cf[c]):
                    return s
            return -1

        rows = [tree.root_slots] + tree.child_slots
        self._fub0 = np.array([first(r, lambda x: x >= b0 - TOL) for r in rows], dtype=np.int16)
        self._fdb0 = np.array([first(r, lambda x: x <= -b0 + TOL) for r in rows], dtype=np.int16)
        self._fub = np.array([first(r, lambda x: x >= b - TOL) for r in rows], dtype=np.int16)
        self._fdb = np.array([first(r, lambda x: x <= -b + TOL) for r in rows], dtype=np.int16)
        # row 0 is the root; row j + 1 is "arrived through change j"
        if min(self._fub0.min(), self._fdb0.min(), self._fub.min(), self._fdb.min()) < 0:
            raise SlopeTooLarge("some vertex lacks an edge steep enough for the ray construction")
        # vertex -> (line id, role, dev, steps from apex)
        self._memo: dict[int, tuple[int, int, float, int]] = {0: (0, APEX, 0.0, 0)}
        self._arrays: list[dict] = []
        self.region_depth: int | None = None
        self._lock = threading.RLock()
        self._rays: dict[tuple[int, int], list[int]] = {}

    # local rule -----------------------------------------------------------

    def continuation_slots(self, v: int) -> tuple[int, ...]:
        """Child slots of ``v`` that stay on ``v``'s line (two at an apex)."""
        _, role, dev, _ = self.state(v)
        row = 0 if v == 0 else self.tree.change_index(v) + 1
        return self._continuations(row, role, dev)

    def _continuations(self, row: int, role: int, dev: float) -> tuple[int, ...]:
        if role == APEX:
            return (int(self._fub0[row]), int(self._fdb0[row]))
        go_primary = dev <= self.beta + TOL
        if role == UP:
            return (int(self._fub[row] if go_primary else self._fdb[row]),)
        return (int(self._fdb[row] if go_primary else self._fub[row]),)

    def state(self, v: int) -> tuple[int, int, float, int]:
        """(line id, role, deviation, steps from apex) of vertex ``v``."""
        hit = self._memo.get(v)
        if hit is not None:
            return hit
        with self._lock:
            arr = self._array_state(v)
            if arr is not None:
                return arr
            chain = []
            x = v
            while x not in self._memo:
                chain.append(x)
                x = self.tree.parent(x)
            for y in reversed(chain):
                p = self.tree.parent(y)
                line, role, dev, k = self._memo[p]
                row = 0 if p == 0 else self.tree.change_index(p) + 1
                cont = self._continuations(row, role, dev)
                s = self.tree.slot(y)
                c = float(self.tree.cf[self.tree.change_index(y)])
                if role == APEX and s == cont[0]:
                    st = (line, UP, (dev + c) - self.beta, k + 1)
                elif role == APEX and s == cont[1]:
                    st = (line, DOWN, (dev - c) - self.beta, k + 1)
                elif role == UP and s == cont[0]:
                    st = (line, UP, (dev + c) - self.beta, k + 1)
                elif role == DOWN and s == cont[0]:
                    st = (line, DOWN, (dev - c) - self.beta, k + 1)
                else:
                    st = (y, APEX, 0.0, 0)
                self._memo[y] = st
            return self._memo[v]

    def _array_state(self, v: int):
        if not self._arrays:
            return None
        d = self.tree.depth(v)
        if d >= len(self._arrays):
            return None
        a = self._arrays[d]
        i = v - self.tree.level_start(d)
        st = (int(a["line"][i]), int(a["role"][i]), float(a["dev"][i]), int(a["k"][i]))
        self._memo[v] = st
        return st

    def line_of(self, v: int) -> int:
        return self.state(v)[0]

    def param(self, v: int) -> int:
        _, role, _, k = self.state(v)
        return -k if role == DOWN else k

    # rays and lines -------------------------------------------------------

    def ray(self, apex: int, direction: int, length: int) -> list[int]:
        """First ``length`` vertices after ``apex`` on its up (+1) or down (-1) ray."""
        key = (apex, direction)
        with self._lock:
            got = self._rays.setdefault(key, [])
            cur = got[-1] if got else apex
            while len(got) < length:
                cont = self.continuation_slots(cur)
                s = cont[0] if (len(got) > 0 or direction > 0) else cont[1]
                cur = self.tree.child(cur, s)
                got.append(cur)
            return got[:length]

    def line(self, line_id: int, up: int, down: int | None = None) -> Line:
        """Line ``line_id`` with ``up`` vertices above and ``down`` below the apex."""
        if self.state(line_id)[1] != APEX:
            raise KeyError(f"{line_id} is not the apex of a line")
        down = up if down is None else down
        ups = self.ray(line_id, +1, up)
        downs = self.ray(line_id, -1, down)
        verts = downs[::-1] + [line_id] + ups
        params = list(range(-len(downs), len(ups) + 1))
        heights = tuple(self.tree.height_float(v) for v in verts)
        return Line(line_id, tuple(verts), tuple(params), heights, self.beta, self.C)

    def line_in_region(self, line_id: int, depth: int) -> Line:
        """The part of a line inside the ball of radius ``depth``."""
        extent = max(depth - self.tree.depth(line_id), 0)
        return self.line(line_id, extent, extent)

    # bulk ------------------------------------------------------------------

    def _build_arrays(self, depth: int, track_slopes: bool = False):
        """Level-by-level vectorized version of :meth:`state`."""
        tree = self.tree
        levels = tree.materialize(depth)
        n = tree.n
        b = self.beta
        idt = np.int64 if tree.ball_size(depth) >= 2**31 else np.int32
        out = [
            {
                "line": np.zeros(1, dtype=idt),
                "role": np.zeros(1, dtype=np.int8),
                "dev": np.zeros(1),
                "k": np.zeros(1, dtype=np.int32),
            }
        ]
        slope = None
        if track_slopes:
            gmax = np.zeros(1)
            gmin = np.zeros(1)
        for d in range(1, depth + 1):
            prev = out[-1]
            lvl = levels[d]
            k = n if d == 1 else n - 1
            rows = np.zeros(1, dtype=np.int64) if d == 1 else levels[d - 1]["chg"].astype(np.int64) + 1
            role_p = prev["role"]
            dev_p = prev["dev"]
            primary = dev_p <= b + TOL
            cont_a = np.where(
                role_p == APEX,
                self._fub0[rows],
                np.where(
                    role_p == UP,
                    np.where(primary, self._fub[rows], self._fdb[rows]),
                    np.where(primary, self._fdb[rows], self._fub[rows]),
                ),
            )
            cont_b = np.where(role_p == APEX, self._fdb0[rows], -1)
            # children form a (parents, k) block; only the one or two
            # continuing children per parent carry non-trivial state
            P = role_p.size
            r = np.arange(P)
            ap = np.flatnonzero(role_p == APEX)
            cb = cont_b[ap]
            role_a = np.where(role_p == APEX, UP, role_p).astype(np.int8)
            chg = lvl["chg"].reshape(P, k)
            sign_a = np.where(role_a == DOWN, -1.0, 1.0)
            dev_a = (dev_p + sign_a * tree.cf[chg[r, cont_a]]) - b
            dev_b = (dev_p[ap] - tree.cf[chg[ap, cb]]) - b
            k_p = prev["k"] + np.int32(1)

            start = tree.level_start(d)
            line = np.arange(start, start + P * k, dtype=idt).reshape(P, k)
            line[r, cont_a] = prev["line"]
            line[ap, cb] = prev["line"][ap]
            child_role = np.zeros((P, k), dtype=np.int8)  # APEX is 0
            child_role[r, cont_a] = role_a
            child_role[ap, cb] = DOWN
            dev = np.zeros((P, k))
            dev[r, cont_a] = dev_a
            dev[ap, cb] = dev_b
            kk = np.zeros((P, k), dtype=np.int32)
            kk[r, cont_a] = k_p
            kk[ap, cb] = k_p[ap]
            if track_slopes:
                # dev is h - h(apex) - beta * param on up rays and its negative on down rays
                g_a = sign_a * dev_a
                hi_a, lo_a = np.maximum(gmax, g_a), np.minimum(gmin, g_a)
                hi_b, lo_b = np.maximum(gmax[ap], -dev_b), np.minimum(gmin[ap], -dev_b)
                if d == depth:
                    ends = (prev["line"], role_a, hi_a, lo_a, prev["line"][ap], hi_b, lo_b)
                else:
                    gmax = np.zeros((P, k))
                    gmin = np.zeros((P, k))
                    gmax[r, cont_a], gmin[r, cont_a] = hi_a, lo_a
                    gmax[ap, cb], gmin[ap, cb] = hi_b, lo_b
                    gmax, gmin = gmax.ravel(), gmin.ravel()
            out.append(
                {"line": line.ravel(), "role": child_role.ravel(), "dev": dev.ravel(), "k": kk.ravel()}
            )
        if track_slopes:
            if depth == 0:
                slope = np.zeros(1)
            else:
                slope = self._combine_rays(ends, tree.level_start(depth))
        return out, slope

    @staticmethod
    def _combine_rays(ends, n_lines_bound: int):
        """Per-line spread from the two ray ends on the last level.

        Each line has at most one up end and one down end there, so the
        scattered ids are distinct within each pass.
        """
        line_a, role_a, hi_a, lo_a, line_b, hi_b, lo_b = ends
        hi = np.zeros(n_lines_bound)
        lo = np.zeros(n_lines_bound)
        for sel_ids, h, l in (
            (line_a[role_a == UP], hi_a[role_a == UP], lo_a[role_a == UP]),
            (line_a[role_a == DOWN], hi_a[role_a == DOWN], lo_a[role_a == DOWN]),
            (line_b, hi_b, lo_b),
        ):
            ids = sel_ids.astype(np.int64)
            hi[ids] = np.maximum(hi[ids], h)
            lo[ids] = np.minimum(lo[ids], l)
        return hi - lo

    def adopt_arrays(self, arrays: list[dict], depth: int) -> None:
        self._arrays = arrays
        self.region_depth = depth

    def region_lines(self) -> np.ndarray:
        """Ids of the lines meeting the materialized region."""
        return np.unique(np.concatenate([a["line"] for a in self._arrays]))

    def assignment(self) -> np.ndarray:
        """Line id of every vertex in the region, indexed by vertex id."""
        return np.concatenate([a["line"] for a in self._arrays])


def build_lamination(
    tree: LazyTree, beta: float, region_depth: int, *, track_slopes: bool = False
):
    """Lamination covering every vertex up to ``region_depth``.

    With ``track_slopes`` the per-line worst slope deviation over the region
    is measured from the tree heights and returned alongside.
    """
    lam = Lamination(tree, beta)
    arrays, slope = lam._build_arrays(region_depth, track_slopes)
    lam.adopt_arrays(arrays, region_depth)
    return (lam, slope) if track_slopes else lam


def check_partition(lam: Lamination) -> dict:
    """Exhaustively check that the region's line classes are geodesic paths.

    Each vertex carries exactly one line id; a non-apex vertex shares its
    line with its parent; an apex keeps two children on its line and any
    other vertex one (except on the boundary sphere).  Together these make
    every class a path through its apex.
    """
    tree = lam.tree
    arrays = lam._arrays
    depth = len(arrays) - 1
    problems = 0
    for d in range(depth):
        parent_lines = arrays[d]["line"]
        kids = arrays[d + 1]["line"]
        k = tree.n if d == 0 else tree.n - 1
        same = (kids.reshape(-1, k) == parent_lines[:, None])
        count = same.sum(axis=1)
        role = arrays[d]["role"]
        want = np.where(role == APEX, 2, 1)
        problems += int(np.count_nonzero(count != want))
        child_role = arrays[d + 1]["role"].reshape(-1, k)
        start = tree.level_start(d + 1)
        own = np.arange(start, start + kids.size).reshape(-1, k)
        is_apex = kids.reshape(-1, k) == own
        problems += int(np.count_nonzero(is_apex != (child_role == APEX)))
        problems += int(np.count_nonzero(~same & ~is_apex))
    n_vertices = sum(a["line"].size for a in arrays)
    return {"vertices": n_vertices, "problems": problems, "ok": problems == 0}


# ---------------------------------------------------------------------------
# collapsing


@dataclass
class CollapsedTree:
    """Quotient of a laminated region with one node per line."""

    nodes: np.ndarray
    parent_line: dict[int, int]
    attach_vertex: dict[int, int]  # child line -> vertex on the parent line
    attach_height: dict[int, HeightValue]

    def is_tree(self) -> bool:
        node_set = set(int(x) for x in self.nodes)
        if len(self.parent_line) != len(node_set) - 1:
            return False
        roots = node_set - set(self.parent_line)
        if len(roots) != 1:
            return False
        root = roots.pop()
        for start in self.parent_line:
            seen = set()
            x = start
            while x != root:
                if x in seen or x not in self.parent_line:
                    return False
                seen.add(x)
                x = self.parent_line[x]
        return True

    def edge_heights_at(self, line_id: int) -> list[float]:
        return sorted(
            self.attach_height[c].approx for c, p in self.parent_line.items() if p == line_id
        )


def collapse_lamination(tree: LazyTree, lam: Lamination) -> CollapsedTree:
    """Collapse every line of the region to a point.

    The quotient edge for a non-root line is the edge from its apex to the
    apex's parent; it carries the height of that parent vertex.
    """
    nodes = lam.region_lines()
    parent_line = {}
    attach_v = {}
    attach_h = {}
    for lid in nodes.tolist():
        if lid == 0:
            continue
        p = tree.parent(lid)
        parent_line[lid] = lam.line_of(p)
        attach_v[lid] = p
        attach_h[lid] = tree.height(p)
    return CollapsedTree(nodes, parent_line, attach_v, attach_h)


# ---------------------------------------------------------------------------
# exports


_PALETTE = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
]


def lamination_to_dot(lam: Lamination, name: str = "lamination") -> str:
    tree = lam.tree
    assign = lam.assignment()
    colors = {}
    lines = [f"graph {name} {{", "  node [shape=circle, fontsize=9];"]
    for v in range(assign.size):
        lid = int(assign[v])
        col = colors.setdefault(lid, _PALETTE[len(colors) % len(_PALETTE)])
        lines.append(f'  v{v} [label="{v}\\nh={tree.height_float(v):.3f}", color="{col}"];')
    for v in range(1, assign.size):
        p = tree.parent(v)
        if assign[v] == assign[p]:
            lines.append(f'  v{p} -- v{v} [color="{colors[int(assign[v])]}", penwidth=2];')
        else:
            lines.append(f'  v{p} -- v{v} [color="#cccccc", style=dashed];')
    lines.append("}")
    return "\n".join(lines) + "\n"


def lamination_to_json(lam: Lamination) -> dict:
    tree = lam.tree
    depth = lam.region_depth or 0
    assign = lam.assignment()
    out_lines = []
    for lid in lam.region_lines().tolist():
        line = lam.line_in_region(lid, depth)
        out_lines.append(
            {
                "id": lid,
                "vertices": list(line.vertices),
                "params": list(line.params),
                "heights": list(line.heights),
                "exact": [tree.height(v).to_json() for v in line.vertices],
            }
        )
    return {
        "beta": lam.beta,
        "beta0": lam.beta0,
        "C": lam.C,
        "region_depth": depth,
        "local_type": tree.local_type.to_json(),
        "assignment": [int(x) for x in assign],
        "lines": out_lines,
    }
