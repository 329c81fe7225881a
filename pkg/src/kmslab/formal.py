"""Exact weights in the formal variables u = exp(-beta), v = exp(-beta*theta).

A :class:`FormalWeight` is a finite sum of terms ``c * u^a v^b (1-u)^p (1-v)^q (1-uv)^r``
with rational ``c`` and integer (possibly negative) exponents.  The five factors are
pairwise non-associate primes of Q[u, v] (u and v being units of the Laurent ring), so a
single term has a unique normal form and a sum is zero exactly when its expansion over a
common denominator vanishes.  Every weight produced by the cylinder measures in this
package lives in this ring, which keeps conformality checks exact without a general
rational-function engine.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Iterable, Mapping, Union

Number = Union[int, Fraction, float]

ATOMS = ("u", "v", "1-u", "1-v", "1-uv")
_NATOMS = len(ATOMS)
_ZERO_EXP = (0,) * _NATOMS

# polynomial expansions of the atoms, as {(deg_u, deg_v): coeff}
_ATOM_POLY = (
    {(1, 0): 1},
    {(0, 1): 1},
    {(0, 0): 1, (1, 0): -1},
    {(0, 0): 1, (0, 1): -1},
    {(0, 0): 1, (1, 1): -1},
)


def _poly_mul(a: Mapping, b: Mapping) -> dict:
    out: dict = {}
    for (i, j), c in a.items():
        for (k, l), d in b.items():
            key = (i + k, j + l)
            out[key] = out.get(key, 0) + c * d
    return {k: c for k, c in out.items() if c != 0}


@lru_cache(maxsize=4096)
def _atom_power(atom: int, e: int) -> tuple:
    poly: dict = {(0, 0): 1}
    base = _ATOM_POLY[atom]
    for _ in range(e):
        poly = _poly_mul(poly, base)
    return tuple(sorted(poly.items()))


class FormalWeight:
    """Sparse sum of atom monomials with exact rational coefficients."""

    __slots__ = ("terms",)

    def __init__(self, terms: Mapping[tuple, Number] | None = None):
        clean: dict = {}
        if terms:
            for exps, c in terms.items():
                if c == 0:
                    continue
                if len(exps) != _NATOMS:
                    raise ValueError(f"exponent vector must have length {_NATOMS}")
                clean[tuple(exps)] = clean.get(tuple(exps), 0) + _as_exact(c)
            clean = {k: c for k, c in clean.items() if c != 0}
        self.terms = clean

    @classmethod
    def _trusted(cls, terms: dict) -> "FormalWeight":
        # terms already normalized: tuple keys, exact nonzero coefficients
        w = cls.__new__(cls)
        w.terms = terms
        return w

    # construction helpers
    @classmethod
    def const(cls, c: Number) -> "FormalWeight":
        return cls({_ZERO_EXP: c})

    @classmethod
    def monomial(cls, c: Number = 1, **exps: int) -> "FormalWeight":
        """``monomial(2, u=1, one_minus_uv=-1)`` is ``2u/(1-uv)``."""
        names = {"u": 0, "v": 1, "one_minus_u": 2, "one_minus_v": 3, "one_minus_uv": 4}
        vec = [0] * _NATOMS
        for name, e in exps.items():
            vec[names[name]] = e
        return cls({tuple(vec): c})

    # arithmetic
    def __add__(self, other):
        other = _coerce(other)
        out = dict(self.terms)
        for k, c in other.terms.items():
            out[k] = out.get(k, 0) + c
        return FormalWeight(out)

    __radd__ = __add__

    def __neg__(self):
        return FormalWeight({k: -c for k, c in self.terms.items()})

    def __sub__(self, other):
        return self + (-_coerce(other))

    def __rsub__(self, other):
        return _coerce(other) - self

    def __mul__(self, other):
        other = _coerce(other)
        if len(self.terms) == 1 and len(other.terms) == 1:
            (k1, c1), = self.terms.items()
            (k2, c2), = other.terms.items()
            return FormalWeight._trusted({tuple(a + b for a, b in zip(k1, k2)): c1 * c2})
        out: dict = {}
        for k1, c1 in self.terms.items():
            for k2, c2 in other.terms.items():
                key = tuple(a + b for a, b in zip(k1, k2))
                out[key] = out.get(key, 0) + c1 * c2
        return FormalWeight(out)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = _coerce(other)
        if len(other.terms) != 1:
            raise ZeroDivisionError("only division by a single term is supported")
        (k2, c2), = other.terms.items()
        return FormalWeight({tuple(a - b for a, b in zip(k1, k2)): Fraction(c1) / c2
                             for k1, c1 in self.terms.items()})

    def __pow__(self, n: int):
        if n < 0:
            return FormalWeight.const(1) / self ** (-n)
        out = FormalWeight.const(1)
        for _ in range(n):
            out = out * self
        return out

    # identity testing
    def is_zero(self) -> bool:
        if not self.terms:
            return True
        if len(self.terms) == 1:
            return False
        return _is_zero_cached(frozenset(self.terms.items()))

    def __eq__(self, other):
        try:
            other = _coerce(other)
        except TypeError:
            return NotImplemented
        if len(self.terms) <= 1 and len(other.terms) <= 1:
            return self.terms == other.terms
        return (self - other).is_zero()

    __hash__ = None  # equality is semantic; no canonical hash for sums

    def __repr__(self):
        if not self.terms:
            return "0"
        parts = []
        for exps, c in sorted(self.terms.items()):
            fac = [f"({ATOMS[i]})^{e}" if i >= 2 else f"{ATOMS[i]}^{e}"
                   for i, e in enumerate(exps) if e]
            parts.append("*".join([str(c)] + fac))
        return " + ".join(parts)

    # substitutions
    def invert_variables(self) -> "FormalWeight":
        """Substitute u -> 1/u and v -> 1/v (the passage beta -> -beta)."""
        out: dict = {}
        for (a, b, p, q, r), c in self.terms.items():
            # 1-1/u = -(1-u)/u, 1-1/v = -(1-v)/v, 1-1/(uv) = -(1-uv)/(uv)
            key = (-a - p - r, -b - q - r, p, q, r)
            sign = -1 if (p + q + r) % 2 else 1
            out[key] = out.get(key, 0) + sign * c
        return FormalWeight(out)

    def evaluate(self, u: Number, v: Number):
        """Value at the given (u, v); exact when u, v are rationals."""
        vals = (u, v, 1 - u, 1 - v, 1 - u * v)
        total = 0
        for exps, c in self.terms.items():
            t = c if not isinstance(u, float) and not isinstance(v, float) else float(c)
            for val, e in zip(vals, exps):
                if e:
                    t = t * val ** e
            total = total + t
        return total


def _as_exact(c):
    if isinstance(c, float):
        raise TypeError("FormalWeight coefficients must be exact (int or Fraction)")
    return Fraction(c) if not isinstance(c, int) else c


def _coerce(x) -> FormalWeight:
    if isinstance(x, FormalWeight):
        return x
    if isinstance(x, (int, Fraction)):
        return FormalWeight.const(x)
    raise TypeError(f"cannot combine FormalWeight with {type(x).__name__}")


@lru_cache(maxsize=65536)
def _is_zero_cached(items: frozenset) -> bool:
    terms = list(items)
    lows = [min(exps[i] for exps, _ in terms) for i in range(_NATOMS)]
    poly: dict = {}
    for exps, c in terms:
        term: dict = {(0, 0): c}
        for i, e in enumerate(exps):
            e -= lows[i]
            if e:
                term = _poly_mul(term, dict(_atom_power(i, e)))
        for k, d in term.items():
            poly[k] = poly.get(k, 0) + d
    return all(d == 0 for d in poly.values())


def weights_equal(a: FormalWeight, b: FormalWeight) -> bool:
    return a == b


# ---------------------------------------------------------------------------
# Inverse temperature values with optional exact logarithmic form


@dataclass(frozen=True)
class LogReal:
    """A real number, optionally known exactly as ``coef * ln(base)``.

    ``exp_neg(s)`` returns ``exp(-s * value)`` as a Fraction whenever the exact form
    makes that possible (``base ** (coef * s)`` with integral exponent), else a float.
    """

    value: float
    coef: Fraction | None = None
    base: Fraction | None = None

    @classmethod
    def parse(cls, x) -> "LogReal":
        if isinstance(x, LogReal):
            return x
        if isinstance(x, (int, float, Fraction)) and not isinstance(x, bool):
            return cls(float(x)) if x != 0 else cls(0.0, Fraction(0), Fraction(1))
        if isinstance(x, str):
            s = x.replace(" ", "")
            m = re.fullmatch(r"([+-]?(?:\d+(?:/\d+)?)?)\*?(?:ln|log)\(?(\d+(?:/\d+)?)\)?", s)
            if m:
                c = m.group(1)
                coef = Fraction(1) if c in ("", "+") else Fraction(-1) if c == "-" else Fraction(c)
                base = Fraction(m.group(2))
                if base <= 0:
                    raise ValueError(f"logarithm of non-positive number in {x!r}")
                return cls(float(coef) * math.log(base), coef, base)
            return cls.parse(float(Fraction(s)) if "/" in s else float(s))
        raise TypeError(f"cannot interpret {x!r} as a real parameter")

    @property
    def exact(self) -> bool:
        return self.coef is not None

    def __neg__(self):
        if self.exact:
            return LogReal(-self.value, -self.coef, self.base)
        return LogReal(-self.value)

    def scaled(self, s) -> "LogReal":
        s = Fraction(s) if not isinstance(s, float) else s
        if self.exact and not isinstance(s, float):
            return LogReal(self.value * float(s), self.coef * s, self.base)
        return LogReal(self.value * float(s))

    def exp_neg(self, s=1):
        """exp(-s * self)."""
        if self.exact and not isinstance(s, float):
            e = -self.coef * Fraction(s)
            root = _exact_power(self.base, e)
            if root is not None:
                return root
        return math.exp(-float(s) * self.value)

    def __str__(self):
        if self.exact:
            if self.coef == 0:
                return "0"
            c = "" if self.coef == 1 else "-" if self.coef == -1 else f"{self.coef}*"
            return f"{c}ln{self.base}"
        return repr(self.value)


def _exact_power(base: Fraction, e: Fraction):
    """base**e as a Fraction when it is rational, else None."""
    if e.denominator == 1:
        return base ** int(e)
    num = _int_root(base.numerator, e.denominator)
    den = _int_root(base.denominator, e.denominator)
    if num is None or den is None:
        return None
    return Fraction(num, den) ** e.numerator


def _int_root(n: int, k: int):
    r = round(n ** (1.0 / k))
    for cand in (r - 1, r, r + 1):
        if cand >= 0 and cand ** k == n:
            return cand
    return None


def parse_theta(x) -> Union[Fraction, float]:
    """theta as an exact Fraction when given as int/Fraction/'p/q', else a float."""
    if isinstance(x, Fraction):
        th = x
    elif isinstance(x, int) and not isinstance(x, bool):
        th = Fraction(x)
    elif isinstance(x, str):
        try:
            th = Fraction(x)
        except ValueError:
            th = float(x)
    elif isinstance(x, float):
        th = Fraction(x) if x.is_integer() else x
    else:
        raise TypeError(f"cannot interpret {x!r} as theta")
    if th <= 0:
        raise ValueError("theta must be positive")
    return th


def bind(beta, theta) -> tuple:
    """(u, v) = (exp(-beta), exp(-beta*theta)), exact where possible."""
    b = LogReal.parse(beta)
    th = parse_theta(theta)
    return b.exp_neg(1), b.exp_neg(th)


def sum_weights(ws: Iterable[FormalWeight]) -> FormalWeight:
    out = FormalWeight()
    for w in ws:
        out = out + w
    return out
