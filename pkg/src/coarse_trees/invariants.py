"""Commensurability obstruction for BS(m, n) and HNN quasi-isometry invariants.

Absolute Jordan forms are computed from an exact factorization of the
characteristic polynomial over Q: each irreducible factor ``p`` with
multiplicity ``m`` contributes ``deg p`` eigenvalues sharing the same Jordan
structure, read off from the ranks of ``p(M)^k``.  Only the root norms are
numerical.  When every norm squared is rational (roots of degree-one
factors, or complex roots of degree-two factors) log-norms become exact
prime-exponent vectors and the rational-power question is decided exactly.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Sequence

import sympy

from .errors import DimensionMismatch, IllConditioned, NotCoprime, SingularMatrix
from .heights import HeightValue

MAX_DIM = 12
CF_MAX_DENOMINATOR = 10**6


def bs_not_commensurable(a: int, b: int, c: int, d: int) -> bool:
    """True when BS(a, b) and BS(c, d) are provably not commensurable.

    For coprime ``1 < a < b`` the ratio ``b / a`` is a commensurability
    invariant, so distinct normalized pairs are separated.
    """
    for x in (a, b, c, d):
        if not isinstance(x, int) or x < 1:
            raise ValueError(f"indices must be positive integers, got {x!r}")
    if math.gcd(a, b) != 1 or math.gcd(c, d) != 1:
        raise NotCoprime(f"need gcd(a, b) = gcd(c, d) = 1, got ({a}, {b}) and ({c}, {d})")
    a, b = sorted((a, b))
    c, d = sorted((c, d))
    return Fraction(b, a) != Fraction(d, c)


def to_rational_matrix(M: Any) -> sympy.Matrix:
    """Accept nested sequences of ints, Fractions, ``"p/q"`` strings or sympy numbers."""
    if isinstance(M, sympy.MatrixBase):
        rows = M.tolist()
    else:
        rows = [list(r) for r in M]
    out = []
    for r in rows:
        row = []
        for x in r:
            if isinstance(x, Fraction):
                row.append(sympy.Rational(x.numerator, x.denominator))
            elif isinstance(x, float):
                row.append(sympy.Rational(x))
            else:
                row.append(sympy.Rational(x))
        out.append(row)
    m = sympy.Matrix(out)
    if m.rows != m.cols:
        raise DimensionMismatch(f"matrix is {m.rows}x{m.cols}, not square")
    return m


@dataclass(frozen=True)
class JordanPiece:
    """One irreducible factor of the characteristic polynomial."""

    factor: sympy.Poly
    blocks: tuple[int, ...]  # Jordan block sizes of each root of the factor
    roots: tuple[complex, ...]
    norm_sq: Fraction | None  # exact |root|^2 when rational and shared by all roots


@dataclass(frozen=True)
class AbsJordanForm:
    """Sorted ``(norm, block sizes)`` entries, one per distinct norm."""

    entries: tuple[tuple[float, tuple[int, ...]], ...]
    exact_log_norms: tuple[HeightValue | None, ...] = field(default=(), compare=False)
    # twice the log-norm of each entry as a prime-exponent vector, if rational

    @property
    def dimension(self) -> int:
        return sum(sum(b) for _, b in self.entries)

    def norms(self) -> list[float]:
        return [n for n, _ in self.entries]

    def to_json(self) -> list[dict]:
        return [{"norm": n, "blocks": list(b)} for n, b in self.entries]


def jordan_pieces(M: Any) -> list[JordanPiece]:
    m = to_rational_matrix(M)
    n = m.rows
    if n > MAX_DIM:
        raise ValueError(f"dimension {n} exceeds {MAX_DIM}")
    if m.det() == 0:
        raise SingularMatrix("matrix is not invertible")
    x = sympy.Symbol("x")
    charpoly = m.charpoly(x)
    _, factors = sympy.factor_list(charpoly.as_expr(), x)
    pieces = []
    eye = sympy.eye(n)
    for f, mult in factors:
        p = sympy.Poly(f, x)
        deg = p.degree()
        # p(M) by Horner
        pm = sympy.zeros(n, n)
        for c in p.all_coeffs():
            pm = pm * m + c * eye
        ranks = [n]
        power = eye
        while True:
            power = power * pm
            ranks.append(power.rank())
            if ranks[-1] == ranks[-2] or len(ranks) > mult + 1:
                break
        at_least = [(ranks[k - 1] - ranks[k]) // deg for k in range(1, len(ranks))]
        blocks = []
        for k, cnt in enumerate(at_least, start=1):
            nxt = at_least[k] if k < len(at_least) else 0
            blocks += [k] * (cnt - nxt)
        if sum(blocks) != mult:
            raise IllConditioned(f"block sizes {blocks} do not account for multiplicity {mult} of {f}")
        roots = tuple(complex(r) for r in sympy.Poly(f, x).nroots(n=30))
        lead = p.LC()
        const = p.all_coeffs()[-1]
        q = sympy.Rational(const, lead)
        norm_sq = None
        if deg == 1:
            norm_sq = Fraction(int(q.p), int(q.q)) ** 2
        elif deg == 2 and all(abs(r.imag) > 1e-12 for r in roots):
            # complex conjugate pair: |root|^2 is the product of the roots
            norm_sq = Fraction(int(q.p), int(q.q))
        pieces.append(JordanPiece(p, tuple(sorted(blocks)), roots, norm_sq))
    return pieces


def _log_fraction(q: Fraction) -> HeightValue:
    return HeightValue.log_ratio(q.numerator, q.denominator)


def abs_jordan_form(M: Any, tol: float = 1e-9) -> AbsJordanForm:
    """Absolute Jordan form: eigenvalue norms with their Jordan block sizes.

    Norms of different factors that agree within ``tol`` (relative) are
    merged; norms closer than ``1000 * tol`` without merging raise
    :class:`IllConditioned`.
    """
    items: list[tuple[float, tuple[int, ...], Fraction | None]] = []
    for piece in jordan_pieces(M):
        if piece.norm_sq is not None:
            norm = math.sqrt(piece.norm_sq)
            items.append((norm, piece.blocks * len(piece.roots), piece.norm_sq))
            continue
        for r in piece.roots:
            items.append((abs(r), piece.blocks, None))
    items.sort(key=lambda t: t[0])
    groups: list[list] = []
    for norm, blocks, exact in items:
        if groups:
            last = groups[-1][0]
            gap = abs(norm - last) / max(1.0, last)
            if gap <= tol:
                groups[-1][1].extend(blocks)
                if groups[-1][2] != exact:
                    groups[-1][2] = None
                continue
            if gap <= 1000 * tol:
                raise IllConditioned(f"norms {last!r} and {norm!r} are too close to separate at tol={tol}")
        groups.append([norm, list(blocks), exact])
    entries = tuple((g[0], tuple(sorted(g[1]))) for g in groups)
    exact_logs = tuple(_log_fraction(g[2]) if g[2] is not None else None for g in groups)
    return AbsJordanForm(entries, exact_logs)


@dataclass
class QiVerdict:
    equivalent: bool
    alpha: float | None
    mode: str  # "real", "exact" or "advisory"
    alpha_exact: Fraction | None = None
    reason: str = ""

    def to_json(self) -> dict:
        return {
            "equivalent": self.equivalent,
            "alpha": self.alpha,
            "alpha_exact": None if self.alpha_exact is None else str(self.alpha_exact),
            "mode": self.mode,
            "reason": self.reason,
        }


def _pair(f1: AbsJordanForm, f2: AbsJordanForm) -> tuple[list[tuple[int, int]], str]:
    if len(f1.entries) != len(f2.entries):
        return [], "different numbers of distinct norms"
    pairs = []
    for i, ((n1, b1), (n2, b2)) in enumerate(zip(f1.entries, f2.entries)):
        if b1 != b2:
            return [], f"block structures differ at entry {i}: {list(b1)} vs {list(b2)}"
        pairs.append((i, i))
    return pairs, ""


def _exact_ratio(h1: HeightValue, h2: HeightValue) -> Fraction | None:
    """``q`` with ``h2 = q * h1`` when the exponent vectors are proportional."""
    c1, c2 = h1.as_dict(), h2.as_dict()
    if set(c1) != set(c2):
        return None
    ratio = None
    for p, a in c1.items():
        r = Fraction(c2[p], a)
        if ratio is None:
            ratio = r
        elif r != ratio:
            return None
    return ratio


def hnn_qi_equivalent(T: Any, T2: Any, solvable: bool = False, tol: float = 1e-9) -> QiVerdict:
    """Is there ``alpha > 0`` with ``AJF(T^alpha) = AJF(T2)``?

    Raising to a positive power keeps norms in order and block structure
    fixed, so entries are paired in norm order; norm-one entries only need
    matching blocks.  In the solvable case ``alpha`` must also be rational.
    """
    m1, m2 = to_rational_matrix(T), to_rational_matrix(T2)
    if m1.shape != m2.shape:
        raise DimensionMismatch(f"{m1.shape} vs {m2.shape}")
    f1, f2 = abs_jordan_form(m1, tol), abs_jordan_form(m2, tol)
    pairs, why = _pair(f1, f2)
    if why:
        return QiVerdict(False, None, "exact" if solvable else "real", reason=why)
    logs = [(math.log(f1.entries[i][0]), math.log(f2.entries[j][0]), i, j) for i, j in pairs]
    ratios = []
    for l1, l2, i, j in logs:
        unit1, unit2 = abs(l1) <= tol, abs(l2) <= tol
        if unit1 != unit2:
            return QiVerdict(False, None, "real", reason=f"norm-one entry {i} paired with a non-unit norm")
        if not unit1:
            ratios.append((l2 / l1, i, j))
    if any(r <= 0 for r, _, _ in ratios):
        return QiVerdict(False, None, "real", reason="log-norms change sign")
    if ratios:
        alpha = sum(r for r, _, _ in ratios) / len(ratios)
        if any(abs(r - alpha) > tol * max(1.0, abs(alpha)) for r, _, _ in ratios):
            return QiVerdict(False, None, "real", reason="log-norm vectors are not proportional")
    else:
        alpha = 1.0
    if not solvable:
        return QiVerdict(True, alpha, "real", reason="log-norms proportional")

    exact_pairs = [(f1.exact_log_norms[i], f2.exact_log_norms[j]) for _, i, j in ratios]
    if all(a is not None and b is not None for a, b in exact_pairs):
        q = None
        for a, b in exact_pairs:
            r = _exact_ratio(a, b)
            if r is None or (q is not None and r != q):
                return QiVerdict(False, None, "exact", reason="no common rational power of the norms")
            q = r
        q = Fraction(1) if q is None else q
        return QiVerdict(True, float(q), "exact", alpha_exact=q, reason="exponent vectors proportional")

    # numeric detection: smallest denominator rational within tolerance
    guess = Fraction(alpha).limit_denominator(CF_MAX_DENOMINATOR)
    close = abs(float(guess) - alpha) <= 1e3 * tol * max(1.0, alpha)
    return QiVerdict(
        close,
        alpha,
        "advisory",
        alpha_exact=guess if close else None,
        reason=(
            f"alpha {alpha!r} is within tolerance of {guess} (denominator <= {CF_MAX_DENOMINATOR}); "
            "rationality cannot be certified numerically"
            if close
            else f"no rational with denominator <= {CF_MAX_DENOMINATOR} within tolerance"
        ),
    )


def diag(*values: Any) -> sympy.Matrix:
    return sympy.diag(*[sympy.Rational(v) for v in values])


def jordan_block(value: Any, size: int) -> sympy.Matrix:
    m = sympy.eye(size) * sympy.Rational(value)
    for i in range(size - 1):
        m[i, i + 1] = 1
    return m


def matrix_power(M: Any, k: int) -> sympy.Matrix:
    return to_rational_matrix(M) ** k


def block_counts(form: AbsJordanForm) -> Counter:
    return Counter(b for _, blocks in form.entries for b in blocks)


__all__: Sequence[str] = [
    "AbsJordanForm",
    "QiVerdict",
    "abs_jordan_form",
    "bs_not_commensurable",
    "hnn_qi_equivalent",
    "diag",
    "jordan_block",
]
