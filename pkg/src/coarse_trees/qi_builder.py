"""Line-by-line coarsely orientation preserving maps between laminated trees.

Collapsing the lines of a lamination leaves a tree whose edges carry
heights.  At each collapsed node the off-line edges form a *ladder*, a
bi-infinite sequence sorted by height whose counts per unit height are
``(valence - 2) / beta`` up to a bounded error.  When two ladders have the
same density the edges can be paired with bounded height discrepancy; here
that pairing is made constructive by anchoring both ladders near a fixed
reference height and matching equal rank offsets.  Mapping each line to its
partner by a dilation of parameters then gives a vertex map of the trees.

Everything is lazy: ladders grow their height window on demand and the
collapsed isomorphism is computed only for the lines that are asked about,
so the same map can be queried on regions far larger than could be
materialized.
"""

from __future__ import annotations

import csv
import io
import math
from bisect import bisect_left, bisect_right
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable, Protocol, Sequence

import numpy as np

from .errors import DensityMismatch, LadderExhausted, MatchFailure, ZeroSlope
from .oriented_tree import APEX, LazyTree, Lamination, Line

DEFAULT_MAX_RAY = 20_000


@dataclass(frozen=True, order=True)
class LadderEntry:
    height: float
    edge: int


class Ladder:
    """Sorted ladder entries with a window of heights known to be complete."""

    def __init__(self):
        self._keys: list[tuple[float, int]] = []
        self._lo = math.inf
        self._hi = -math.inf

    # subclasses widen the complete window
    def _grow(self, lo: float, hi: float) -> None:
        raise NotImplementedError

    def _ensure(self, lo: float, hi: float) -> None:
        if lo < self._lo or hi > self._hi:
            self._grow(min(lo, self._lo), max(hi, self._hi))

    def _complete_span(self) -> tuple[int, int]:
        i = bisect_left(self._keys, (self._lo, -math.inf))
        j = bisect_right(self._keys, (self._hi, math.inf))
        return i, j

    def entries_in(self, lo: float, hi: float) -> list[LadderEntry]:
        self._ensure(lo, hi)
        i = bisect_left(self._keys, (lo, -math.inf))
        j = bisect_right(self._keys, (hi, math.inf))
        return [LadderEntry(h, e) for h, e in self._keys[i:j]]

    def count(self, lo: float, hi: float) -> int:
        return len(self.entries_in(lo, hi))

    def anchor(self, ref: float = 0.0) -> LadderEntry | None:
        """Entry nearest ``ref``; ties go to the lower height, then smaller edge id."""
        w = 1.0
        while True:
            got = self.entries_in(ref - w, ref + w)
            if got:
                return min(got, key=lambda e: (abs(e.height - ref), e.height, e.edge))
            if self._exhausted():
                return None
            w *= 2

    def _exhausted(self) -> bool:
        return False

    def _index(self, e: LadderEntry) -> int:
        self._ensure(e.height, e.height)
        i = bisect_left(self._keys, (e.height, e.edge))
        if i >= len(self._keys) or self._keys[i] != (e.height, e.edge):
            raise KeyError(f"{e} is not on this ladder")
        return i

    def rank(self, e: LadderEntry, base: LadderEntry) -> int:
        """Signed number of steps from ``base`` to ``e``."""
        self._ensure(min(e.height, base.height), max(e.height, base.height))
        return self._index(e) - self._index(base)

    def offset(self, base: LadderEntry, k: int) -> LadderEntry | None:
        """Entry ``k`` ranks away from ``base`` (``None`` past a finite end)."""
        step = 1.0
        while True:
            i = self._index(base) + k
            lo, hi = self._complete_span()
            if lo <= i < hi:
                h, e = self._keys[i]
                return LadderEntry(h, e)
            if self._exhausted():
                return None
            if i >= hi:
                self._grow(self._lo, self._hi + step)
            else:
                self._grow(self._lo - step, self._hi)
            step *= 2

    def max_gap(self) -> float:
        hs = [h for h, _ in self._keys]
        return max((b - a for a, b in zip(hs, hs[1:])), default=0.0)


class StaticLadder(Ladder):
    """A finite ladder given explicitly, e.g. a truncated one."""

    def __init__(self, heights: Iterable[float], edges: Iterable[int] | None = None):
        super().__init__()
        heights = [float(h) for h in heights]
        edges = list(range(len(heights))) if edges is None else list(edges)
        self._keys = sorted(zip(heights, edges))
        self._lo, self._hi = -math.inf, math.inf

    def _grow(self, lo, hi):
        pass

    def _exhausted(self) -> bool:
        return True

    def __len__(self) -> int:
        return len(self._keys)

    def entries(self) -> list[LadderEntry]:
        return [LadderEntry(h, e) for h, e in self._keys]


class EdgeLadder(Ladder):
    """Off-line edges of one lamination line, keyed by the height of their
    endpoint on the line.  Edge ids are the apex ids of the child lines."""

    def __init__(self, lam: Lamination, line_id: int, max_ray: int = DEFAULT_MAX_RAY):
        super().__init__()
        if lam.beta <= 0:
            raise ZeroSlope("ladders need a positive slope")
        self.lam = lam
        self.tree = lam.tree
        self.line_id = line_id
        self.max_ray = max_ray
        self._ha = self.tree.height_float(line_id)
        self._nu = -1  # ray lengths already scanned (-1: apex not yet scanned)
        self._nd = 0

    def _scan(self, v: int) -> None:
        cont = set(self.lam.continuation_slots(v))
        h = self.tree.height_float(v)
        for s, c in enumerate(self.tree.children(v)):
            if s not in cont:
                self._keys.append((h, c))

    def _grow(self, lo: float, hi: float) -> None:
        lam = self.lam
        b, C = lam.beta, lam.C
        # an up-ray vertex at parameter n has height >= h(apex) + b n - C
        nu = max(0, math.ceil((hi - self._ha + C) / b))
        nd = max(0, math.ceil((self._ha - lo + C) / b))
        if nu > self.max_ray or nd > self.max_ray:
            raise LadderExhausted(
                f"line {self.line_id} would need a ray of length {max(nu, nd)} (cap {self.max_ray})"
            )
        if self._nu < 0:
            self._scan(self.line_id)
            self._nu = 0
        if nu > self._nu:
            for v in lam.ray(self.line_id, +1, nu)[self._nu:]:
                self._scan(v)
            self._nu = nu
        if nd > self._nd:
            for v in lam.ray(self.line_id, -1, nd)[self._nd:]:
                self._scan(v)
            self._nd = nd
        self._keys.sort()
        self._lo = self._ha - b * (self._nd + 1) + C
        self._hi = self._ha + b * (self._nu + 1) - C


def ladder_count_error(ladder: Ladder, density: float, windows: Iterable[tuple[float, float]]) -> float:
    """Worst ``|count[a,b] - density (b - a)|`` over the given windows."""
    return max(abs(ladder.count(a, b) - density * (b - a)) for a, b in windows)


# ---------------------------------------------------------------------------
# matching


def hall_feasible(ladder_a: Ladder, ladder_b: Ladder, K: float, window: tuple[float, float]) -> bool:
    """Hall's interval condition in both directions on ``window``.

    For every ``[x, y]`` inside the window, the entries of one ladder in
    ``[x, y]`` must not outnumber those of the other in ``[x - K, y + K]``.
    Only intervals whose endpoints are ladder heights need checking.
    """
    a, b = window
    for src, dst in ((ladder_a, ladder_b), (ladder_b, ladder_a)):
        hs = [e.height for e in src.entries_in(a, b)]
        other = [e.height for e in dst.entries_in(a - K, b + K)]
        for i in range(len(hs)):
            for j in range(i, len(hs)):
                lo = bisect_left(other, hs[i] - K)
                hi = bisect_right(other, hs[j] + K)
                if j - i + 1 > hi - lo:
                    return False
    return True


@dataclass
class RankMatch:
    pairs: list[tuple[LadderEntry, LadderEntry]]
    discrepancy: float
    unmatched: int = 0


def rank_match(
    ladder_a: Ladder,
    ladder_b: Ladder,
    window: tuple[float, float] | None = None,
    *,
    ref: float = 0.0,
    K: float | None = None,
    anchor: str = "auto",
) -> RankMatch:
    """Pair the entries of ``ladder_a`` in ``window`` with ``ladder_b`` by rank.

    With ``anchor="nearest"`` both ladders are anchored at their entry
    nearest ``ref`` and the entry ``k`` steps from one anchor is paired with
    the entry ``k`` steps from the other.  ``anchor="lowest"`` counts from the
    lowest entry instead, which for two complete finite ladders is the
    order-preserving matching (bottleneck optimal on a line).  ``"auto"``
    uses ``lowest`` when both ladders are finite and ``nearest`` otherwise.

    Entries that fall off the end of a finite ladder are counted as
    unmatched.  With ``K`` given, a realized discrepancy above ``K`` raises
    :class:`DensityMismatch`.
    """
    if window is None:
        if not isinstance(ladder_a, StaticLadder):
            raise ValueError("an explicit window is needed for lazy ladders")
        entries = ladder_a.entries()
    else:
        entries = ladder_a.entries_in(*window)
    if anchor == "auto":
        finite = isinstance(ladder_a, StaticLadder) and isinstance(ladder_b, StaticLadder)
        anchor = "lowest" if finite else "nearest"
    if anchor == "lowest":
        if not (isinstance(ladder_a, StaticLadder) and isinstance(ladder_b, StaticLadder)):
            raise ValueError("lowest-entry anchoring needs finite ladders")
        anchor_a = ladder_a.entries()[0] if len(ladder_a) else None
        anchor_b = ladder_b.entries()[0] if len(ladder_b) else None
    elif anchor == "nearest":
        anchor_a = ladder_a.anchor(ref)
        anchor_b = ladder_b.anchor(ref)
    else:
        raise ValueError(f"unknown anchor rule {anchor!r}")
    if anchor_a is None or anchor_b is None:
        return RankMatch([], 0.0, len(entries))
    pairs = []
    worst = 0.0
    missing = 0
    for e in entries:
        f = ladder_b.offset(anchor_b, ladder_a.rank(e, anchor_a))
        if f is None:
            missing += 1
            continue
        pairs.append((e, f))
        worst = max(worst, abs(e.height - f.height))
    if K is not None and worst > K:
        raise DensityMismatch(f"rank matching discrepancy {worst:.4g} exceeds K = {K}")
    return RankMatch(pairs, worst, missing)


def brute_force_matchable(a: Sequence[float], b: Sequence[float], K: float) -> bool:
    """Perfect matching with ``|a_i - b_j| <= K``, by maximum bipartite matching."""
    from scipy.sparse import csr_matrix
    from scipy.sparse.csgraph import maximum_bipartite_matching

    if len(a) != len(b):
        return False
    if not a:
        return True
    adj = np.abs(np.subtract.outer(np.asarray(a), np.asarray(b))) <= K
    match = maximum_bipartite_matching(csr_matrix(adj.astype(np.int8)), perm_type="column")
    return bool(np.all(match >= 0))


# ---------------------------------------------------------------------------
# collapsed isomorphism


class CollapsedIso:
    """Lazy isomorphism between the collapsed trees of two laminations.

    The root lines correspond.  If line ``L1`` corresponds to ``L2``, the
    child line at rank ``k`` of ``L1``'s ladder corresponds to the child line
    at rank ``k`` of ``L2``'s ladder, both ranks counted from the entry nearest
    ``ref``.  The rule is symmetric, so the inverse is computed the same way.
    """

    def __init__(
        self,
        lam1: Lamination,
        lam2: Lamination,
        K: float,
        *,
        ref: float = 0.0,
        max_ray: int = DEFAULT_MAX_RAY,
    ):
        if lam1.beta <= 0 or lam2.beta <= 0:
            raise ZeroSlope("line matching needs positive slopes")
        self.lams = (lam1, lam2)
        self.K = K
        self.ref = ref
        self.max_ray = max_ray
        self._maps: tuple[dict[int, int], dict[int, int]] = ({0: 0}, {0: 0})
        self._ladders: tuple[dict, dict] = ({}, {})
        self._anchors: tuple[dict, dict] = ({}, {})
        self.realized_K = 0.0

    def ladder(self, side: int, line_id: int) -> EdgeLadder:
        got = self._ladders[side].get(line_id)
        if got is None:
            got = self._ladders[side][line_id] = EdgeLadder(self.lams[side], line_id, self.max_ray)
        return got

    def _anchor(self, side: int, line_id: int) -> LadderEntry:
        got = self._anchors[side].get(line_id)
        if got is None:
            got = self._anchors[side][line_id] = self.ladder(side, line_id).anchor(self.ref)
        return got

    def _map(self, side: int, line_id: int) -> int:
        fwd = self._maps[side]
        if line_id in fwd:
            return fwd[line_id]
        lam = self.lams[side]
        chain = []
        x = line_id
        while x not in fwd:
            chain.append(x)
            x = lam.line_of(lam.tree.parent(x))
        other = 1 - side
        for line in reversed(chain):
            attach = lam.tree.parent(line)
            p_src = lam.line_of(attach)
            p_dst = fwd[p_src]
            e = LadderEntry(lam.tree.height_float(attach), line)
            k = self.ladder(side, p_src).rank(e, self._anchor(side, p_src))
            f = self.ladder(other, p_dst).offset(self._anchor(other, p_dst), k)
            gap = abs(e.height - f.height)
            if gap > self.K:
                pair = (p_src, p_dst) if side == 0 else (p_dst, p_src)
                raise MatchFailure(
                    f"ladder discrepancy {gap:.4g} > K = {self.K} at node pair {pair}", node_pair=pair
                )
            self.realized_K = max(self.realized_K, gap)
            fwd[line] = f.edge
            self._maps[other][f.edge] = line
        return fwd[line_id]

    def image(self, line1: int) -> int:
        return self._map(0, line1)

    def preimage(self, line2: int) -> int:
        return self._map(1, line2)

    def materialize(self, depth: int) -> dict[int, int]:
        """Map every source line with apex depth <= ``depth``, breadth first."""
        lam1 = self.lams[0]
        tree = lam1.tree
        for v in range(tree.ball_size(depth)):
            if lam1.state(v)[1] == APEX:
                self.image(v)
        return {k: v for k, v in self._maps[0].items() if tree.depth(k) <= depth}


def build_collapsed_iso(
    lam1: Lamination, lam2: Lamination, K: float, depth: int | None = None, **kw
) -> CollapsedIso:
    """Collapsed isomorphism, eagerly built on source lines up to ``depth``."""
    iso = CollapsedIso(lam1, lam2, K, **kw)
    if depth is not None:
        iso.materialize(depth)
    return iso


# ---------------------------------------------------------------------------
# line maps and assembly


def _vertex_at(lam: Lamination, line_id: int, p: int) -> int:
    if p == 0:
        return line_id
    if p > 0:
        return lam.ray(line_id, +1, p)[p - 1]
    return lam.ray(line_id, -1, -p)[-p - 1]


def zero_param(lam: Lamination, line_id: int, ref: float = 0.0) -> int:
    """Parameter of the vertex of a line whose height is nearest ``ref``."""
    if lam.beta <= 0:
        raise ZeroSlope("a zero-slope line has no preferred point")
    tree = lam.tree
    ha = tree.height_float(line_id)
    slack = lam.C + tree.local_type.max_abs()
    lo = math.floor((ref - ha - slack) / lam.beta)
    hi = math.ceil((ref - ha + slack) / lam.beta)
    best = min(
        range(lo, hi + 1),
        key=lambda p: (abs(tree.height_float(_vertex_at(lam, line_id, p)) - ref), p),
    )
    return best


@dataclass(frozen=True)
class LineMap:
    """``gamma_A(pA + k) -> gamma_B(pB + round(k * ratio))``."""

    p_a: int
    p_b: int
    ratio: float

    def __call__(self, p: int) -> int:
        return self.p_b + math.floor((p - self.p_a) * self.ratio + 0.5)


def line_map(line_a: Line, line_b: Line) -> LineMap:
    """Dilate parameters by ``beta_A / beta_B`` after aligning height-0 points."""
    if line_a.beta <= 0 or line_b.beta <= 0:
        raise ZeroSlope("line_map needs positive slopes")

    def nearest(line: Line) -> int:
        i = min(range(len(line.vertices)), key=lambda i: (abs(line.heights[i]), line.params[i]))
        return line.params[i]

    return LineMap(nearest(line_a), nearest(line_b), line_a.beta / line_b.beta)


class VertexMap(Protocol):
    source: LazyTree
    target: LazyTree

    def __call__(self, v: int) -> int: ...


@dataclass
class FunctionMap:
    """A vertex map given by a plain function; handy for reference maps."""

    source: LazyTree
    target: LazyTree
    fn: Callable[[int], int]

    def __call__(self, v: int) -> int:
        return self.fn(v)


class QiMap:
    """Vertex map ``T1 -> T2`` assembled line by line along a collapsed iso."""

    def __init__(self, lam1: Lamination, lam2: Lamination, iso: CollapsedIso, side: int = 0):
        self.lams = (lam1, lam2)
        self.iso = iso
        self.side = side
        self.source = lam1.tree
        self.target = lam2.tree
        self._line_maps: dict[int, LineMap] = {}
        self._cache: dict[int, int] = {}

    def line_pair(self, line: int) -> int:
        return self.iso._map(self.side, line)

    def _line_map(self, line1: int) -> LineMap:
        got = self._line_maps.get(line1)
        if got is None:
            lam1, lam2 = self.lams
            line2 = self.line_pair(line1)
            got = LineMap(
                zero_param(lam1, line1, self.iso.ref),
                zero_param(lam2, line2, self.iso.ref),
                lam1.beta / lam2.beta,
            )
            self._line_maps[line1] = got
        return got

    def provenance(self, v: int) -> dict:
        lam1, lam2 = self.lams
        line1 = lam1.line_of(v)
        p1 = lam1.param(v)
        p2 = self._line_map(line1)(p1)
        return {"line": line1, "param": p1, "image_line": self.line_pair(line1), "image_param": p2}

    def __call__(self, v: int) -> int:
        got = self._cache.get(v)
        if got is None:
            pv = self.provenance(v)
            got = self._cache[v] = _vertex_at(self.lams[1], pv["image_line"], pv["image_param"])
        return got

    def reverse(self) -> "QiMap":
        return QiMap(self.lams[1], self.lams[0], self.iso, 1 - self.side)

    def pairs(self, depth: int) -> list[tuple[int, int]]:
        return [(v, self(v)) for v in range(self.source.ball_size(depth))]


def assemble_qi(
    T1: LazyTree, T2: LazyTree, lam1: Lamination, lam2: Lamination, iso: CollapsedIso
) -> QiMap:
    if lam1.tree is not T1 or lam2.tree is not T2:
        raise ValueError("laminations must belong to the given trees")
    return QiMap(lam1, lam2, iso)


# ---------------------------------------------------------------------------
# measurement


@dataclass
class QiReport:
    A: float
    B: float
    C: float
    K: float | None
    samples: int
    seed: int
    depth: int
    excluded: int = 0
    max_roundtrip: float | None = None
    tail_A: float | None = None
    tail_B: float | None = None
    rows: list[tuple[int, int, int, int, float, float]] = field(default_factory=list, repr=False)

    def to_json(self) -> dict:
        out = asdict(self)
        out.pop("rows")
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["u", "v", "d1", "d2", "dh1", "dh2"])
        for row in self.rows:
            w.writerow([row[0], row[1], row[2], row[3], f"{row[4]:.12g}", f"{row[5]:.12g}"])
        return buf.getvalue()


def fit_envelope(pairs: Sequence[tuple[float, float]]) -> float:
    """Least ``lam`` with ``y <= lam * x + lam`` for every pair.

    Sampled tree distances cluster around twice the ball radius, so a free
    two-parameter envelope is poorly determined; tying the constants gives
    a single well-defined number per sample set.
    """
    if not pairs:
        return 1.0
    return max(max(y / (x + 1.0) for x, y in pairs), 0.0)


def fit_tail_envelope(pairs: Sequence[tuple[float, float]]) -> tuple[float, float]:
    """Slope from the farther half of the pairs, plus the slack it leaves."""
    if not pairs:
        return 1.0, 0.0
    xs = np.array([p[0] for p in pairs], dtype=float)
    ys = np.array([p[1] for p in pairs], dtype=float)
    far = (xs >= np.median(xs)) & (xs > 0)
    A = float((ys[far] / xs[far]).max()) if far.any() else 0.0
    B = max(0.0, float((ys - A * xs).max()))
    return A, B


def measure_qi_report(
    qmap: VertexMap,
    samples: int,
    seed: int,
    depth: int,
    *,
    reverse: VertexMap | None = None,
) -> QiReport:
    """Sample vertex pairs of the source ball and measure (A, B, C).

    ``A`` and ``B`` are reported as one constant (see :func:`fit_envelope`);
    the slope of the far half of the samples and its slack are reported as
    ``tail_A`` and ``tail_B``.  Vertices are drawn uniformly from the radius-``depth`` ball.  Pairs whose
    images need ladder data beyond the cap are excluded and counted.
    """
    rng = np.random.default_rng(seed)
    T1, T2 = qmap.source, qmap.target
    n = T1.ball_size(depth)
    draws = rng.integers(0, n, size=(samples, 2))
    rows = []
    excluded = 0
    worst_c = 0.0
    trip = 0
    for u, v in draws.tolist():
        try:
            fu, fv = qmap(u), qmap(v)
        except LadderExhausted:
            excluded += 1
            continue
        d1 = T1.distance(u, v)
        d2 = T2.distance(fu, fv)
        dh1 = T1.height_float(v) - T1.height_float(u)
        dh2 = T2.height_float(fv) - T2.height_float(fu)
        worst_c = max(worst_c, abs(dh1 - dh2))
        rows.append((u, v, d1, d2, dh1, dh2))
        if reverse is not None:
            trip = max(trip, T1.distance(u, reverse(fu)), T1.distance(v, reverse(fv)))
    fwd = [(r[2], r[3]) for r in rows]
    back = [(r[3], r[2]) for r in rows]
    lam = fit_envelope(fwd + back)
    tails = [fit_tail_envelope(fwd), fit_tail_envelope(back)]
    tail_a = max(t[0] for t in tails)
    tail_b = max(0.0, max((y - tail_a * x for x, y in fwd + back), default=0.0))
    K = getattr(getattr(qmap, "iso", None), "realized_K", None)
    return QiReport(
        A=lam,
        B=lam,
        C=worst_c,
        K=K,
        samples=len(rows),
        seed=seed,
        depth=depth,
        excluded=excluded,
        max_roundtrip=float(trip) if reverse is not None else None,
        tail_A=tail_a,
        tail_B=tail_b,
        rows=rows,
    )
