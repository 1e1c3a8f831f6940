"""The warped product T x R with fibre metric e^{-h(t)} |dx|.

``approx_distance`` is the closed formula
``d_T(t1, t2) + max(0, ln|x1 - x2| - max height on the geodesic)``;
``oracle_distance`` minimizes over the paths that go horizontally to some
vertex ``t``, vertically at ``t`` and horizontally back, exhaustively over a
ball.  The oracle is a metric: moving the whole vertical leg of a two-leg
path to the leg with the larger height never costs more.
"""

from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from .bass_serre import TreeBall
from .errors import BoundedHeightWarning, OrientationNotPreserved, OutsideBall
from .heights import HeightValue


@dataclass(frozen=True)
class WarpedPoint:
    t: int
    x: float

    def __post_init__(self):
        if not math.isfinite(self.x):
            raise ValueError(f"fibre coordinate must be finite, got {self.x}")


def _check(ball: TreeBall, *ts: int) -> None:
    for t in ts:
        if not ball.contains(t):
            raise OutsideBall(f"vertex {t} is not in the ball of radius {ball.radius}")


def max_height_on_geodesic(ball: TreeBall, t1: int, t2: int) -> HeightValue:
    _check(ball, t1, t2)
    return max(ball.height(v) for v in ball.path(t1, t2))


def approx_distance(p: WarpedPoint, q: WarpedPoint, ball: TreeBall) -> float:
    """Closed-form estimate of the warped distance."""
    _check(ball, p.t, q.t)
    if ball.height_bounded:
        warnings.warn(
            "height function is bounded; the space is bilipschitz to a product and the formula does not apply",
            BoundedHeightWarning,
            stacklevel=2,
        )
    dx = abs(p.x - q.x)
    d_t = ball.distance(p.t, q.t)
    if dx == 0:
        return float(d_t)
    top = max_height_on_geodesic(ball, p.t, q.t).approx
    return d_t + max(0.0, math.log(dx) - top)


class _DistanceCache:
    """Per-ball memo of ``distances_from`` rows (a small LRU)."""

    def __init__(self, ball: TreeBall, size: int = 256):
        self.ball = ball
        self.size = size
        self.rows: dict[int, np.ndarray] = {}

    def __call__(self, v: int) -> np.ndarray:
        row = self.rows.pop(v, None)
        if row is None:
            row = self.ball.distances_from(v)
            if len(self.rows) >= self.size:
                self.rows.pop(next(iter(self.rows)))
        self.rows[v] = row
        return row


_caches: dict[int, _DistanceCache] = {}


def _rows(ball: TreeBall) -> _DistanceCache:
    got = _caches.get(id(ball))
    if got is None or got.ball is not ball:
        got = _caches[id(ball)] = _DistanceCache(ball)
    return got


def _max_step(ball: TreeBall) -> float:
    if len(ball) < 2:
        return 0.0
    return float(np.abs(ball.hf[1:] - ball.hf[ball.parent[1:]]).max())


def _escape_bound(cost_to_b: np.ndarray, h_b: np.ndarray, dx: float, M: float) -> float:
    """Lower bound for turning at a vertex ``k >= 1`` steps beyond the ball.

    Past a boundary vertex ``b`` heights grow by at most ``M`` per step, so
    turning ``k`` steps out costs at least ``cost_to_b + 2k + e^{-h(b) - Mk} dx``.
    """
    if cost_to_b.size == 0:
        return math.inf
    if M <= 0 or dx == 0:
        return float((cost_to_b + 2.0 + np.exp(-h_b) * dx * math.exp(-M)).min())
    # the k-term is convex; its real minimizer is ln(M c / 2) / M with c = e^{-h} dx
    c = np.exp(-h_b) * dx
    k_star = np.log(np.maximum(M * c / 2.0, 1e-300)) / M
    best = np.full(c.shape, np.inf)
    for k in (np.floor(k_star), np.ceil(k_star)):
        k = np.maximum(k, 1.0)
        best = np.minimum(best, 2 * k + c * np.exp(-M * k))
    return float((cost_to_b + best).min())


def oracle_profile(p: WarpedPoint, q: WarpedPoint, ball: TreeBall) -> tuple[float, int, bool]:
    """Oracle value, minimizing vertex (smallest id on ties) and a certificate.

    The certificate is true when no vertex outside the ball could do better,
    i.e. the value is exact for the whole tree.
    """
    _check(ball, p.t, q.t)
    rows = _rows(ball)
    dx = abs(p.x - q.x)
    horiz = rows(p.t) + rows(q.t)
    cost = horiz + np.exp(-ball.hf) * dx
    i = int(np.argmin(cost))
    best = float(cost[i])
    rim = ball.depth == ball.radius
    bound = _escape_bound(horiz[rim], ball.hf[rim], dx, _max_step(ball))
    return best, i, best <= bound + 1e-12


def oracle_distance(p: WarpedPoint, q: WarpedPoint, ball: TreeBall) -> float:
    """Exhaustive minimum over the horizontal-vertical-horizontal path family."""
    return oracle_profile(p, q, ball)[0]


# ---------------------------------------------------------------------------
# extending tree maps


@dataclass(frozen=True)
class ProductMap:
    """``(t, x) -> (f(t), x * scale)``."""

    f: Callable[[int], int]
    scale: float
    mode: str
    height_change: float

    def __call__(self, p: WarpedPoint) -> WarpedPoint:
        return WarpedPoint(self.f(p.t), p.x * self.scale)


def extend_product_map(
    f: Callable[[int], int],
    mode: str = "identity",
    *,
    source_height: Callable[[int], float] | None = None,
    target_height: Callable[[int], float] | None = None,
    root: int = 0,
    height_change: float | None = None,
    measured_C: float | None = None,
    threshold: float | None = None,
) -> ProductMap:
    """Extend a tree map to the warped products.

    ``identity`` keeps the fibre coordinate; ``height-corrected`` multiplies
    it by ``e^{-h(f)}`` where ``h(f) = h2(f(root)) - h1(root)`` unless given.
    """
    if measured_C is not None and threshold is not None and measured_C > threshold:
        raise OrientationNotPreserved(f"orientation constant {measured_C:.4g} exceeds {threshold}")
    if mode == "identity":
        return ProductMap(f, 1.0, mode, 0.0)
    if mode != "height-corrected":
        raise ValueError(f"unknown mode {mode!r}")
    if height_change is None:
        if source_height is None or target_height is None:
            raise ValueError("height-corrected mode needs height_change or both height functions")
        height_change = target_height(f(root)) - source_height(root)
    return ProductMap(f, math.exp(-height_change), mode, float(height_change))


# ---------------------------------------------------------------------------
# comparison harness


@dataclass
class MetricComparison:
    lam: float
    samples: int
    excluded_uncertified: int
    attempts: int
    seed: int
    depth: int
    inner_radius: int
    max_log_dx: float
    kept_max_log_dx: float
    rows: list[tuple[int, float, int, float, float, float]] = field(default_factory=list, repr=False)

    def to_json(self) -> dict:
        out = asdict(self)
        out.pop("rows")
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t1", "x1", "t2", "x2", "approx", "oracle", "ratio"])
        for t1, x1, t2, x2, a, o in self.rows:
            w.writerow([t1, f"{x1:.12g}", t2, f"{x2:.12g}", f"{a:.12g}", f"{o:.12g}", f"{(o + 1) / (a + 1):.12g}"])
        return buf.getvalue()


def compare_metrics(
    ball: TreeBall,
    attempts: int,
    seed: int,
    *,
    max_log_dx: float = 10.0,
    inner_radius: int | None = None,
) -> MetricComparison:
    """Sample point pairs and compare the formula with the oracle.

    Both tree coordinates are drawn uniformly from the ball of radius
    ``inner_radius`` (default: the whole ball) and ``ln|dx|`` uniformly from
    ``[0, max_log_dx]``.  Fixing ``inner_radius`` lets balls of different
    radii be compared on identical draws; the outer radius then only decides
    which oracle values are certified exact.  Uncertified pairs (a vertex
    beyond the ball might be cheaper) are excluded and counted.
    """
    rng = np.random.default_rng(seed)
    r_in = ball.radius if inner_radius is None else min(inner_radius, ball.radius)
    n = int(np.count_nonzero(ball.depth <= r_in))
    rows = []
    excluded = 0
    worst = 1.0
    kept_top = 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", BoundedHeightWarning)
        for _ in range(attempts):
            t1, t2 = (int(x) for x in rng.integers(0, n, size=2))
            log_dx = float(rng.uniform(0.0, max_log_dx))
            x1 = float(rng.uniform(-1.0, 1.0))
            x2 = x1 + math.exp(log_dx) * (1 if rng.random() < 0.5 else -1)
            p, q = WarpedPoint(t1, x1), WarpedPoint(t2, x2)
            o, _, exact = oracle_profile(p, q, ball)
            if not exact:
                excluded += 1
                continue
            a = approx_distance(p, q, ball)
            r = (o + 1.0) / (a + 1.0)
            worst = max(worst, r, 1.0 / r)
            kept_top = max(kept_top, log_dx)
            rows.append((t1, x1, t2, x2, a, o))
    return MetricComparison(
        lam=worst,
        samples=len(rows),
        excluded_uncertified=excluded,
        attempts=attempts,
        seed=seed,
        depth=ball.radius,
        inner_radius=r_in,
        max_log_dx=max_log_dx,
        kept_max_log_dx=kept_top,
        rows=rows,
    )
