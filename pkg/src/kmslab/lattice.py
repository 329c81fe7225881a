"""Hereditary subsets of Z^2 as staircase profiles, the (x, t) parametrization, lifted
measures on Omega x Z and SL2(Z) reparametrizations of the cocycle.

A profile over a column window stores heights a_m in Z or +-inf.  In the default basis
``"v"`` (v1 = e1, v2 = e1 + e2) the set is ``{m v1 + n v2 : n <= a_m}``; in the
``"standard"`` basis it is ``{(m, n) : n <= a_m}``.
"""

from __future__ import annotations

import csv
import io
import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

from .formal import FormalWeight, LogReal, parse_theta
from .symbolic import (
    Cylinder,
    CylinderMeasure,
    check_conformal,
    enumerate_cylinders,
    shift_cylinder,
)

INF = math.inf


class WindowTooSmall(ValueError):
    pass


class NotConformal(ValueError):
    pass


class NotCoprime(ValueError):
    pass


class NotHereditary(ValueError):
    pass


# ---------------------------------------------------------------------------
# lattice vectors


@dataclass(frozen=True)
class LatticeVector:
    """A point of Z^2 in standard coordinates (m, n)."""

    m: int
    n: int

    @classmethod
    def from_v(cls, alpha: int, gamma: int) -> "LatticeVector":
        """alpha v1 + gamma v2 = (alpha + gamma, gamma)."""
        return cls(alpha + gamma, gamma)

    def to_v(self) -> tuple:
        return (self.m - self.n, self.n)

    def __add__(self, other: "LatticeVector") -> "LatticeVector":
        return LatticeVector(self.m + other.m, self.n + other.n)

    def __neg__(self):
        return LatticeVector(-self.m, -self.n)


E1 = LatticeVector(1, 0)
E2 = LatticeVector(0, 1)
V1 = LatticeVector.from_v(1, 0)
V2 = LatticeVector.from_v(0, 1)
GENERATORS = {"v1": V1, "v2": V2}


def cocycle(s: LatticeVector, theta=1):
    """c(m, n) = m + n theta."""
    return s.m + s.n * parse_theta(theta)


# ---------------------------------------------------------------------------
# profiles


def _height(h):
    if isinstance(h, str):
        h = float(h)
    if isinstance(h, float):
        if math.isinf(h):
            return h
        if h.is_integer():
            return int(h)
        raise ValueError(f"height {h!r} is not an integer")
    return int(h)


@dataclass(frozen=True)
class StaircaseProfile:
    """Heights a_m for m in [lo, hi]; ``tails`` optionally fixes the constant value of
    a_m to the left of lo and to the right of hi (None = undetermined there)."""

    lo: int
    heights: tuple
    basis: str = "v"
    left_tail: float | int | None = None
    right_tail: float | int | None = None

    def __post_init__(self):
        if self.basis not in ("v", "standard"):
            raise ValueError("basis must be 'v' or 'standard'")
        object.__setattr__(self, "heights", tuple(_height(h) for h in self.heights))
        ext = self._extended()
        if any(b > a for a, b in zip(ext, ext[1:])):
            raise NotHereditary("heights must be non-increasing in the column index")

    def _extended(self) -> list:
        ext = list(self.heights)
        if self.left_tail is not None:
            ext.insert(0, self.left_tail)
        if self.right_tail is not None:
            ext.append(self.right_tail)
        return ext

    @property
    def hi(self) -> int:
        return self.lo + len(self.heights) - 1

    @property
    def window(self) -> tuple:
        return (self.lo, self.hi)

    def columns(self) -> range:
        return range(self.lo, self.hi + 1)

    def __getitem__(self, m: int):
        if self.lo <= m <= self.hi:
            return self.heights[m - self.lo]
        if m < self.lo and self.left_tail is not None:
            return self.left_tail
        if m > self.hi and self.right_tail is not None:
            return self.right_tail
        raise WindowTooSmall(f"column {m} outside window {self.window}")

    def restrict(self, lo: int, hi: int) -> "StaircaseProfile":
        if lo < self.lo or hi > self.hi or lo > hi:
            raise WindowTooSmall(f"[{lo},{hi}] not inside {self.window}")
        return StaircaseProfile(lo, self.heights[lo - self.lo:hi - self.lo + 1], self.basis,
                                self.left_tail, self.right_tail)

    def decrements(self) -> list:
        return [a - b for a, b in zip(self.heights, self.heights[1:])]

    def is_hereditary(self) -> bool:
        """-N^2 + A inside A.  Standard basis: non-increasing.  v basis: in addition
        a_m - a_{m+1} <= 1, since -e2 = v1 - v2."""
        d = self.decrements()
        if any(x < 0 for x in d):
            return False
        if self.basis == "v":
            return all(x <= 1 or math.isnan(x) or math.isinf(x) for x in d)
        return True

    def same_on_common_window(self, other: "StaircaseProfile") -> bool:
        lo, hi = max(self.lo, other.lo), min(self.hi, other.hi)
        if lo > hi or self.basis != other.basis:
            return False
        return all(self[m] == other[m] for m in range(lo, hi + 1))

    def to_record(self) -> dict:
        return {"window": [self.lo, self.hi], "basis": self.basis,
                "heights": [h if not isinstance(h, float) else str(h) for h in self.heights]}

    @classmethod
    def from_record(cls, rec) -> "StaircaseProfile":
        lo, hi = rec["window"]
        hs = rec["heights"]
        if len(hs) != hi - lo + 1:
            raise ValueError("window length does not match heights")
        return cls(lo, tuple(hs), rec.get("basis", "v"))


def profile_from_word(word: Cylinder, t: int, columns: Sequence[int] | None = None) -> StaircaseProfile:
    """a(x, t)_m = t - sum_{0<=j<m} x_j (m > 0), t (m = 0), t + sum_{m<=j<=-1} x_j (m < 0).

    ``word`` must have a contiguous window [a, b]; column m < 0 needs x_m..x_{-1} and column
    m > 0 needs x_0..x_{m-1}, so the determined columns run from min(a, 0) (or 0 if b < -1)
    to max(b + 1, 0) (or 0 if a > 0).
    """
    if word.is_full:
        raise WindowTooSmall("empty word determines only column 0")
    a, b = word.window
    x = word.as_dict()
    if len(x) != b - a + 1:
        raise ValueError("word must have a contiguous window")
    if columns is None:
        columns = range(min(a, 0) if b >= -1 else 0, (max(b + 1, 0) if a <= 0 else 0) + 1)
    cols = list(columns)
    if not cols:
        raise WindowTooSmall(f"word window {word.window} determines no columns")
    if cols != list(range(cols[0], cols[-1] + 1)):
        raise ValueError("columns must be contiguous")
    heights = []
    for m in cols:
        if m > 0:
            idx = range(0, m)
        else:
            idx = range(m, 0)
        if any(j not in x for j in idx):
            raise WindowTooSmall(f"column {m} needs letters {idx.start}..{idx.stop - 1}")
        s = sum(x[j] for j in idx)
        heights.append(t - s if m > 0 else t + s)
    return StaircaseProfile(cols[0], tuple(heights), "v")


def translate_profile(A: StaircaseProfile, s: LatticeVector) -> StaircaseProfile:
    """A + s.  In the v basis, +v1 moves every column one step right and +v2 raises
    every height by one; in the standard basis +e1 / +e2 do the same."""
    if A.basis == "v":
        dm, dn = s.to_v()
    else:
        dm, dn = s.m, s.n

    def lift(h):
        return h + dn if h is not None else None

    return StaircaseProfile(A.lo + dm, tuple(h + dn for h in A.heights), A.basis,
                            lift(A.left_tail), lift(A.right_tail))


def check_equivariance(word: Cylinder, t: int, generator: str) -> bool:
    """A(x, t) + v1 = A(tau x, x_{-1} + t) and A(x, t) + v2 = A(x, t + 1) on the common window."""
    if generator not in GENERATORS:
        raise ValueError("generator must be 'v1' or 'v2'")
    lhs = translate_profile(profile_from_word(word, t), GENERATORS[generator])
    if generator == "v1":
        x_m1 = word.get(-1)
        if x_m1 is None:
            raise WindowTooSmall("the v1 action reads x_{-1}")
        rhs = profile_from_word(shift_cylinder(word), x_m1 + t)
    else:
        rhs = profile_from_word(word, t + 1)
    if max(lhs.lo, rhs.lo) > min(lhs.hi, rhs.hi):
        raise WindowTooSmall("no common column window")
    return lhs.same_on_common_window(rhs)


def equivariance_sweep(window: tuple = (-4, 4), ts: Iterable[int] = range(-2, 3),
                       generators: Sequence[str] = ("v1", "v2")) -> list:
    """check_equivariance over every word on every contiguous sub-window containing -1.

    Returns rows (word_start, word, t, generator, passed).
    """
    lo, hi = window
    rows = []
    ts = list(ts)
    for a in range(lo, 0):
        for b in range(max(a, -1), hi + 1):
            for syms in itertools.product((0, 1), repeat=b - a + 1):
                w = Cylinder.word(a, syms)
                for t in ts:
                    for g in generators:
                        rows.append((a, "".join(map(str, syms)), t, g, check_equivariance(w, t, g)))
    return rows


def sweep_to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["start", "word", "t", "generator", "pass"])
    for a, word, t, g, ok in rows:
        w.writerow([a, word, t, g, int(ok)])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# lifted measure on Omega x Z


@dataclass
class LiftedMeasure:
    """m-bar(E x {n}) = exp(-n beta (1 + theta)) m(E) = (uv)^n m(E)."""

    base: CylinderMeasure
    beta: LogReal
    theta: Fraction | float

    def weight(self, E: Cylinder, n: int) -> FormalWeight:
        return FormalWeight.monomial(u=n, v=n) * self.base.weight(E)

    def image_weight(self, E: Cylinder, n: int, generator: str) -> FormalWeight:
        """m-bar((E x {n}) + g), computed from the action on points."""
        if generator == "v2":
            return self.weight(E, n + 1)
        if generator != "v1":
            raise ValueError("generator must be 'v1' or 'v2'")
        # (x, n) + v1 = (tau x, x_{-1} + n): split E over x_{-1}
        s = E.get(-1)
        parts = [s] if s is not None else [0, 1]
        total = FormalWeight()
        for sym in parts:
            piece = E if s is not None else E.extend(-1, sym)
            total = total + self.weight(shift_cylinder(piece), n + sym)
        return total

    def expected_factor(self, generator: str) -> FormalWeight:
        """exp(-beta c(g)): u for v1 (c = 1) and uv for v2 (c = 1 + theta)."""
        return FormalWeight.monomial(u=1) if generator == "v1" else FormalWeight.monomial(u=1, v=1)

    def evaluate(self, E: Cylinder, n: int):
        u, v = self.base.binding()
        return self.weight(E, n).evaluate(u, v)


def lift_measure(m: CylinderMeasure, beta=None, theta=None, check_depth: int = 3) -> LiftedMeasure:
    b = m.beta if beta is None else LogReal.parse(beta)
    th = m.theta if theta is None else parse_theta(theta)
    if b.value != m.beta.value or th != m.theta:
        raise NotConformal("measure is bound to different (beta, theta)")
    if not check_conformal(m, check_depth, keep_rows=False).verdict:
        raise NotConformal(f"base measure fails the conformality check at depth {check_depth}")
    return LiftedMeasure(m, b, th)


def check_lift(lm: LiftedMeasure, depth: int = 5, slices: int = 5) -> list:
    """(cylinder, n, generator, passed) for every cylinder of the given depth and |n| <= slices."""
    rows = []
    for E in enumerate_cylinders(depth):
        for n in range(-slices, slices + 1):
            for g in ("v1", "v2"):
                ok = lm.image_weight(E, n, g) == lm.expected_factor(g) * lm.weight(E, n)
                rows.append((E, n, g, ok))
    return rows


# ---------------------------------------------------------------------------
# SL2(Z) reparametrizations


@dataclass(frozen=True)
class Sl2Reparam:
    """phi = [[x, y], [z, w]] acting on column vectors (m, n)."""

    x: int
    y: int
    z: int
    w: int

    @property
    def det(self) -> int:
        return self.x * self.w - self.y * self.z

    def apply(self, s: LatticeVector) -> LatticeVector:
        return LatticeVector(self.x * s.m + self.y * s.n, self.z * s.m + self.w * s.n)

    def as_matrix(self) -> list:
        return [[self.x, self.y], [self.z, self.w]]


def make_phi(p: int, q: int) -> Sl2Reparam:
    """Nonnegative [[x, y], [z, w]] with det 1, x + z = q, y + w = p.

    Then c(phi(e1)) = q and c(phi(e2)) = p for c(m, n) = m + n, so (1/q) c o phi is the
    cocycle with theta = p/q.  x is the representative of p^{-1} mod q in [1, q]; it is the
    only admissible first entry, so this is also the lexicographically smallest solution.
    """
    if p < 1 or q < 1:
        raise ValueError("p and q must be positive")
    if math.gcd(p, q) != 1:
        raise NotCoprime(f"gcd({p}, {q}) != 1")
    x = q if q == 1 else pow(p, -1, q)
    y = (x * p - 1) // q
    return Sl2Reparam(x, y, q - x, p - y)


def check_phi(phi: Sl2Reparam, p: int, q: int) -> dict:
    theta = Fraction(p, q)
    c1 = Fraction(phi.apply(E1).m + phi.apply(E1).n, q)
    c2 = Fraction(phi.apply(E2).m + phi.apply(E2).n, q)
    return {
        "det": phi.det == 1,
        "nonnegative": min(phi.x, phi.y, phi.z, phi.w) >= 0,
        "x+z=q": phi.x + phi.z == q,
        "y+w=p": phi.y + phi.w == p,
        "c(e1)": c1 == cocycle(E1, theta),
        "c(e2)": c2 == cocycle(E2, theta),
    }


SWAP = Sl2Reparam(0, 1, 1, 0)  # the coordinate swap psi (det -1, an involution)


def apply_psi(A: StaircaseProfile, columns: Sequence[int] | None = None) -> StaircaseProfile:
    """psi^{-1}(A) = {(n, m) : (m, n) in A} for a standard-basis profile.

    The swapped set has heights b_i = sup{j : a_j >= i}.  Columns whose value depends on
    heights outside the window (and not fixed by a tail) are dropped from the default
    column range and raise WindowTooSmall when requested explicitly.
    """
    if A.basis != "standard":
        raise ValueError("apply_psi works on standard-basis profiles")

    def b(i):
        # a is non-increasing, so {j : a_j >= i} is a down-set of column indices
        if A.right_tail is not None and A.right_tail >= i:
            return INF
        if A.heights[-1] >= i:
            return A.hi if A.right_tail is not None else None
        hits = [j for j, h in zip(A.columns(), A.heights) if h >= i]
        if hits:
            return hits[-1]
        if A.left_tail is None:
            return None
        return A.lo - 1 if A.left_tail >= i else -INF

    if columns is None:
        vals = {i: b(i) for i in A.columns()}
        known = [i for i, h in vals.items() if h is not None]
        if not known:
            raise WindowTooSmall("no column of the swapped profile is determined")
        # longest contiguous run of determined columns
        runs, cur = [], [known[0]]
        for i in known[1:]:
            if i == cur[-1] + 1:
                cur.append(i)
            else:
                runs.append(cur)
                cur = [i]
        runs.append(cur)
        cols = max(runs, key=len)
        heights = [vals[i] for i in cols]
    else:
        cols = list(columns)
        heights = [b(i) for i in cols]
        if any(h is None for h in heights):
            raise WindowTooSmall("requested columns depend on heights outside the window")

    # b is constant below every finite height and above every finite height, so the
    # output tails are known once the columns reach those ranges
    finite = [h for h in A._extended() if not math.isinf(h)]
    left = right = None
    if A.left_tail is not None and A.right_tail is not None:
        span_lo = min(finite) - 1 if finite else 0
        span_hi = max(finite) + 1 if finite else 0
        if cols[0] - 1 <= span_lo:
            left = b(span_lo)
        if cols[-1] + 1 >= span_hi:
            right = b(span_hi)
    return StaircaseProfile(cols[0], tuple(heights), "standard", left, right)
