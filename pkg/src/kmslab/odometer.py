"""Dyadic odometer, Kakutani tower with heights from a gap sequence, and frequency
selection from continued fractions.

Base words are LSB-first tuples in {0,1}^K with the cyclic truncation: the all-ones word
steps to the all-zeros word (flagged as overflow) and carries the extra height
h_{K+1} = 3 n_K + 1 - sum_{j<=K} n_j.
"""

from __future__ import annotations

import contextlib
import csv
import io
import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterator, Sequence

import mpmath
import sympy

CANONICAL_HEIGHTS = (1, 4, 13, 40, 121, 364)


class GapViolation(ValueError):
    pass


class InvalidLevel(ValueError):
    pass


class RationalAlpha(ValueError):
    pass


class PrecisionExhausted(ArithmeticError):
    pass


class ToleranceNotReached(PrecisionExhausted):
    """The requested number of frequencies was found but the last certificate is not below tol."""


@dataclass(frozen=True)
class TowerSystem:
    heights: tuple
    K: int | None = None

    def __post_init__(self):
        hs = tuple(int(n) for n in self.heights)
        object.__setattr__(self, "heights", hs)
        K = len(hs) if self.K is None else self.K
        object.__setattr__(self, "K", K)
        if not 1 <= K <= len(hs):
            raise ValueError("K must lie between 1 and the number of heights")
        if any(n < 1 for n in hs):
            raise ValueError("heights must be positive")
        for a, b in zip(hs, hs[1:]):
            if not b > 3 * a:
                raise GapViolation(f"n_(k+1) = {b} is not > 3 * {a}")
        if any(h < 1 for h in self.level_heights):
            raise GapViolation("a level height is not positive")

    @property
    def n(self) -> tuple:
        return self.heights[:self.K]

    @property
    def level_heights(self) -> tuple:
        """(h_1, ..., h_K, h_{K+1}); h_k = n_k - sum_{j<k} n_j, the last one for all-ones."""
        n = self.n
        hs = [n[k] - sum(n[:k]) for k in range(self.K)]
        hs.append(3 * n[-1] + 1 - sum(n))
        return tuple(hs)

    def base(self) -> Iterator[tuple]:
        """Base words in odometer order starting from all zeros."""
        x = (0,) * self.K
        for _ in range(2 ** self.K):
            yield x
            x, _ = odometer_step(x)

    def points(self) -> Iterator[tuple]:
        for x in self.base():
            for lev in range(1, height(x, self) + 1):
                yield (x, lev)

    def to_record(self) -> dict:
        return {"heights": list(self.heights), "K": self.K}

    @classmethod
    def from_record(cls, rec) -> "TowerSystem":
        return cls(tuple(rec["heights"]), rec.get("K"))


def odometer_step(x: Sequence[int]) -> tuple:
    """Add one with carry (LSB first); returns (word, overflow)."""
    out = list(x)
    for i, d in enumerate(out):
        if d == 0:
            out[i] = 1
            return tuple(out), False
        out[i] = 0
    return tuple(out), True


def first_zero(x: Sequence[int]) -> int | None:
    """1-based index of the first zero digit, None for the all-ones word."""
    for i, d in enumerate(x):
        if d == 0:
            return i + 1
    return None


def height(x: Sequence[int], T: TowerSystem) -> int:
    if len(x) != T.K:
        raise ValueError(f"base word must have length {T.K}")
    k = first_zero(x)
    hs = T.level_heights
    return hs[-1] if k is None else hs[k - 1]


def tower_step(p: tuple, T: TowerSystem) -> tuple:
    """(x, n+1) below the top of the column, (Sx, 1) from the top."""
    x, lev = p
    h = height(x, T)
    if not 1 <= lev <= h:
        raise InvalidLevel(f"level {lev} outside 1..{h}")
    if lev < h:
        return (tuple(x), lev + 1)
    return (odometer_step(x)[0], 1)


def cycle_length(T: TowerSystem) -> int:
    return sum(height(x, T) for x in T.base())


def orbit(T: TowerSystem, step: Callable = tower_step, start=None, limit: int | None = None) -> list:
    """Iterates of ``step`` from start (default the bottom of the all-zeros column) until it
    returns to start or ``limit`` steps are made."""
    p = start if start is not None else ((0,) * T.K, 1)
    limit = cycle_length(T) + 1 if limit is None else limit
    out = [p]
    q = step(p, T)
    while q != p and len(out) < limit:
        out.append(q)
        q = step(q, T)
    return out


def tower_mass(T: TowerSystem, include_overflow: bool = True) -> Fraction:
    """sum_k 2^{-k} h_k (+ 2^{-K} h_{K+1} for the all-ones cell)."""
    hs = T.level_heights
    mass = sum(Fraction(h, 2 ** (k + 1)) for k, h in enumerate(hs[:-1]))
    if include_overflow:
        mass += Fraction(hs[-1], 2 ** T.K)
    return mass


def kac_check(T: TowerSystem, step: Callable = tower_step) -> bool:
    """``step`` is a single cycle through every tower point, of length sum_x h(x)."""
    pts = list(T.points())
    total = sum(height(x, T) for x in T.base())
    if len(pts) != total:
        return False
    try:
        orb = orbit(T, step, limit=total + 1)
    except (InvalidLevel, ValueError):
        return False
    if len(orb) != total or set(orb) != set(pts):
        return False
    return step(orb[-1], T) == orb[0]


def is_permutation(T: TowerSystem, step: Callable = tower_step) -> bool:
    pts = list(T.points())
    try:
        images = [step(p, T) for p in pts]
    except InvalidLevel:
        return False
    return set(images) == set(pts) and len(set(images)) == len(pts)


def orbit_csv(T: TowerSystem) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["step", "base", "level"])
    for i, (x, lev) in enumerate(orbit(T)):
        w.writerow([i, "".join(map(str, x)), lev])
    return buf.getvalue()


def eigen_partial_sum(s, T: TowerSystem, upto: int | None = None) -> float:
    """sum_{k<=upto} |1 - exp(2 pi i n_k s)|^2 = sum 4 sin^2(pi n_k s).

    Rational s is reduced exactly mod 1 first, so integer multiples give exact zeros.
    """
    upto = T.K if upto is None else upto
    if not 0 <= upto <= T.K:
        raise ValueError("upto must lie in [0, K]")
    total = 0.0
    for n in T.n[:upto]:
        if isinstance(s, (int, Fraction)):
            r = (n * Fraction(s)) % 1
            if r == 0:
                continue
            total += 4 * math.sin(math.pi * r) ** 2
        else:
            total += 4 * math.sin(math.pi * ((n * s) % 1.0)) ** 2
    return total


# ---------------------------------------------------------------------------
# frequency selection


@dataclass(frozen=True)
class FrequencyPlan:
    alpha: str
    n: tuple
    certificates: tuple
    denominators: tuple

    def to_record(self) -> dict:
        return {"alpha": self.alpha, "n": list(self.n),
                "certificates": [float(c) for c in self.certificates]}


@contextlib.contextmanager
def _iv_precision(dps: int):
    old = mpmath.iv.dps
    mpmath.iv.dps = dps
    try:
        yield
    finally:
        mpmath.iv.dps = old


def _alpha_interval(alpha, dps: int):
    """An mpmath interval containing alpha, plus a display string."""
    if isinstance(alpha, Fraction) or isinstance(alpha, int):
        raise RationalAlpha(f"{alpha} is rational")
    if isinstance(alpha, float):
        if not math.isfinite(alpha):
            raise ValueError("alpha must be finite")
        # a float stands for the reals within one part in 2^52 of it
        eps = abs(alpha) * 2.0 ** -52 + 2.0 ** -1074
        return mpmath.iv.mpf([alpha - eps, alpha + eps]), repr(alpha)
    expr = sympy.sympify(alpha) if isinstance(alpha, str) else alpha
    if isinstance(expr, sympy.Basic):
        if expr.is_rational:
            raise RationalAlpha(f"{expr} is rational")
        if not expr.is_real:
            raise ValueError(f"{expr} is not a real number")
        approx = expr.evalf(dps + 10)
        eps = mpmath.mpf(10) ** (-dps)
        with mpmath.workdps(dps + 10):
            c = mpmath.mpf(str(approx))
            return mpmath.iv.mpf([c - eps, c + eps]), str(expr)
    raise TypeError(f"cannot interpret alpha = {alpha!r}")


def iter_denominators(alpha, dps: int = 60) -> Iterator[int]:
    """Convergent denominators q_0 = 1, q_1, q_2, ... of alpha, as far as precision certifies.

    Interval arithmetic: a partial quotient is accepted only when both ends of the current
    interval agree on it; after that the generator raises PrecisionExhausted.
    """
    with _iv_precision(dps + 10):
        x, _ = _alpha_interval(alpha, dps)
        a0 = mpmath.floor(x.a)
        if mpmath.floor(x.b) != a0:
            raise PrecisionExhausted("integer part of alpha is not determined")
        x = x - int(a0)
        q_prev, q = 0, 1
        j = 0
        yield q
        while True:
            if x.a <= 0:
                raise PrecisionExhausted(f"only {j + 1} denominators certified at this precision")
            y = 1 / x
            a = mpmath.floor(y.a)
            if mpmath.floor(y.b) != a:
                raise PrecisionExhausted(f"only {j + 1} denominators certified at this precision")
            a = int(a)
            q_prev, q = q, a * q + q_prev
            j += 1
            yield q
            x = y - a


def continued_fraction_denominators(alpha, terms: int, dps: int = 60) -> list:
    return list(itertools.islice(iter_denominators(alpha, dps), terms))


def certificate(q: int, alpha, dps: int = 60) -> float:
    """|exp(2 pi i (q+1) alpha) - exp(2 pi i alpha)| = 2 |sin(pi q alpha)|."""
    with mpmath.workdps(dps + 10):
        x, _ = _alpha_interval(alpha, dps)
        mid = (mpmath.mpf(x.a) + mpmath.mpf(x.b)) / 2
        return float(2 * abs(mpmath.sin(mpmath.pi * q * mid)))


def choose_frequencies(alpha, count: int, tol: float | None = None, dps: int = 60) -> FrequencyPlan:
    """n_k = q_{j_k} + 1 over convergent denominators q_j (j >= 1), taken greedily so that
    n_{k+1} > 3 n_k and the certificates decrease."""
    if not 1 <= count <= 64:
        raise ValueError("count must lie in [1, 64]")
    _, label = _alpha_interval(alpha, dps)
    chosen, certs, dens = [], [], []
    qs = iter_denominators(alpha, dps)
    next(qs)  # q_0 = 1 would give n = 2 regardless of alpha
    while len(chosen) < count:
        q = next(qs)
        n = q + 1
        if chosen and not n > 3 * chosen[-1]:
            continue
        c = certificate(q, alpha, dps)
        if certs and not c < certs[-1]:
            continue
        chosen.append(n)
        certs.append(c)
        dens.append(q)
    if tol is not None and not certs[-1] < tol:
        raise ToleranceNotReached(f"certificate {certs[-1]:.3e} after {count} frequencies is not below {tol}")
    return FrequencyPlan(label, tuple(chosen), tuple(certs), tuple(dens))
