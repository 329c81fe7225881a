"""Cylinder sets of {0,1}^Z, the shift, the flip and e^{-beta chi}-conformal measures.

Measures are weight oracles on cylinders with values in :class:`FormalWeight`, so the
conformality identity ``m(tau C) = int_C exp(-beta chi) dm`` is checked as an identity in
the formal variables u = exp(-beta), v = exp(-beta theta).  A numeric mode evaluates both
sides at the bound parameter values instead.
"""

from __future__ import annotations

import contextlib
import csv
import gc
import io
import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterator, Mapping, Sequence

from .formal import FormalWeight, LogReal, parse_theta

DEFAULT_MAX_DEPTH = 10
NUMERIC_TOL = 1e-12

U = FormalWeight.monomial(u=1)
V_INV = FormalWeight.monomial(v=-1)
ONE = FormalWeight.const(1)
ZERO = FormalWeight()


class AdditivityViolation(ValueError):
    pass


class InvalidBeta(ValueError):
    pass


class DivergentOrbitWeights(ValueError):
    pass


# ---------------------------------------------------------------------------
# cylinders


@dataclass(frozen=True)
class Cylinder:
    """Finitely many fixed coordinates ``x_k = s``; no fixed coordinate means all of Omega.

    ``fixed`` is a sorted tuple of ``(index, symbol)`` pairs.  Cylinders produced by
    :meth:`word` have contiguous windows; conjunctions may leave gaps.
    """

    fixed: tuple = ()

    def __post_init__(self):
        idx = [k for k, _ in self.fixed]
        if idx != sorted(set(idx)):
            raise ValueError("cylinder indices must be strictly increasing")
        if any(s not in (0, 1) for _, s in self.fixed):
            raise ValueError("cylinder symbols must be 0 or 1")

    @classmethod
    def _trusted(cls, fixed: tuple) -> "Cylinder":
        c = cls.__new__(cls)
        object.__setattr__(c, "fixed", fixed)
        return c

    @classmethod
    def full(cls) -> "Cylinder":
        return cls(())

    @classmethod
    def word(cls, start: int, symbols: Sequence[int]) -> "Cylinder":
        return cls(tuple((start + i, int(s)) for i, s in enumerate(symbols)))

    @classmethod
    def from_mapping(cls, assignment: Mapping[int, int]) -> "Cylinder":
        return cls(tuple(sorted((int(k), int(s)) for k, s in assignment.items())))

    @property
    def is_full(self) -> bool:
        return not self.fixed

    @property
    def window(self):
        if not self.fixed:
            return None
        return (self.fixed[0][0], self.fixed[-1][0])

    @property
    def symbols(self) -> tuple:
        return tuple(s for _, s in self.fixed)

    def as_dict(self) -> dict:
        return dict(self.fixed)

    def get(self, k: int):
        for j, s in self.fixed:
            if j == k:
                return s
        return None

    def extend(self, k: int, s: int) -> "Cylinder":
        cur = self.get(k)
        if cur is not None:
            if cur != s:
                raise ValueError(f"coordinate {k} already fixed to {cur}")
            return self
        d = self.as_dict()
        d[k] = s
        return Cylinder.from_mapping(d)

    def meet(self, other: "Cylinder"):
        """Intersection, or None when the cylinders are disjoint."""
        d = self.as_dict()
        for k, s in other.fixed:
            if d.get(k, s) != s:
                return None
            d[k] = s
        return Cylinder.from_mapping(d)

    def __str__(self):
        if not self.fixed:
            return "Omega"
        return "{" + ", ".join(f"x_{k}={s}" for k, s in self.fixed) + "}"


def shift_cylinder(c: Cylinder) -> Cylinder:
    """tau(C) for tau(x)_k = x_{k-1}: every fixed index moves up by one."""
    return Cylinder._trusted(tuple((k + 1, s) for k, s in c.fixed))


def flip_cylinder(c: Cylinder) -> Cylinder:
    """kappa(C) for kappa(x)_k = x_{-k-1}."""
    return Cylinder._trusted(tuple((-k - 1, s) for k, s in reversed(c.fixed)))


def chi(x: Mapping[int, int], theta) -> float | Fraction:
    """The potential: 1 if x_{-1} = 0, -theta if x_{-1} = 1."""
    return 1 if x[-1] == 0 else -parse_theta(theta)


def enumerate_cylinders(depth: int) -> Iterator[Cylinder]:
    """All cylinders with a contiguous window inside [-depth, depth]."""
    for a in range(-depth, depth + 1):
        for b in range(a, depth + 1):
            idx = range(a, b + 1)
            for syms in itertools.product((0, 1), repeat=b - a + 1):
                yield Cylinder._trusted(tuple(zip(idx, syms)))


# ---------------------------------------------------------------------------
# measures


@dataclass
class CylinderMeasure:
    """A Borel probability on Omega given by exact weights on cylinders.

    ``kind`` is ``"product"``, ``"orbit-atomic"`` or ``"custom"``.  ``beta`` and ``theta``
    bind the formal variables; ``parameters`` holds the defining data (formal weights for
    the product and orbit kinds).
    """

    kind: str
    beta: LogReal
    theta: Fraction | float
    parameters: dict = field(default_factory=dict)
    oracle: Callable[[Cylinder], FormalWeight] | None = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def weight(self, c: Cylinder) -> FormalWeight:
        if self.kind == "product":
            return _product_weight(self, c)
        if self.oracle is None:
            raise ValueError(f"measure of kind {self.kind!r} has no weight oracle")
        return self.oracle(c)

    def binding(self) -> tuple:
        """(u, v) for this measure's (beta, theta); Fractions when exact."""
        return self.beta.exp_neg(1), self.beta.exp_neg(self.theta)

    def evaluate(self, c: Cylinder, numeric: bool = False):
        u, v = self.binding()
        if numeric:
            u, v = float(u), float(v)
        return self.weight(c).evaluate(u, v)

    def to_record(self) -> dict:
        return {
            "kind": self.kind,
            "beta": str(self.beta),
            "theta": str(self.theta),
            "parameters": {k: _serialize_param(p) for k, p in self.parameters.items()},
        }

    @classmethod
    def from_record(cls, rec: Mapping) -> "CylinderMeasure":
        kind = rec["kind"]
        beta = LogReal.parse(rec["beta"])
        theta = parse_theta(rec["theta"])
        params = {k: _deserialize_param(p) for k, p in rec.get("parameters", {}).items()}
        if kind == "product":
            return product_measure(params["p_minus"], params["p_plus"], beta, theta,
                                   params.get("q_minus"), params.get("q_plus"))
        if kind == "orbit-atomic":
            return make_orbit_measure(beta, theta)
        raise ValueError(f"cannot rebuild a {kind!r} measure from a record")


def _serialize_param(p):
    if isinstance(p, FormalWeight):
        return {"formal": [[list(k), str(c)] for k, c in sorted(p.terms.items())]}
    return str(p)


def _deserialize_param(p):
    if isinstance(p, dict) and "formal" in p:
        return FormalWeight({tuple(k): Fraction(c) for k, c in p["formal"]})
    return p


def product_measure(p_minus, p_plus, beta=0, theta=1, q_minus=None, q_plus=None) -> CylinderMeasure:
    """Independent coordinates: P(x_k = 0) is p_minus for k < 0 and p_plus for k >= 0.

    ``q_minus``/``q_plus`` may supply 1 - p in a compact form (a single atom monomial keeps
    every cylinder weight a single term); they default to ``1 - p``.
    """
    pm, pp = _as_weight(p_minus), _as_weight(p_plus)
    qm = ONE - pm if q_minus is None else _as_weight(q_minus)
    qp = ONE - pp if q_plus is None else _as_weight(q_plus)
    if not (pm + qm == ONE and pp + qp == ONE):
        raise AdditivityViolation("complementary probabilities must sum to one")
    return CylinderMeasure("product", LogReal.parse(beta), parse_theta(theta),
                           {"p_minus": pm, "q_minus": qm, "p_plus": pp, "q_plus": qp})


def _as_weight(p) -> FormalWeight:
    return p if isinstance(p, FormalWeight) else FormalWeight.const(Fraction(p))


def bernoulli_half(beta=0, theta=1) -> CylinderMeasure:
    return product_measure(Fraction(1, 2), Fraction(1, 2), beta, theta)


def product_signature(c: Cylinder) -> tuple:
    """(#zeros at k<0, #ones at k<0, #zeros at k>=0, #ones at k>=0); a product weight depends on nothing else."""
    z_neg = o_neg = z_pos = o_pos = 0
    for k, s in c.fixed:
        if k < 0:
            if s == 0:
                z_neg += 1
            else:
                o_neg += 1
        elif s == 0:
            z_pos += 1
        else:
            o_pos += 1
    return (z_neg, o_neg, z_pos, o_pos)


def _product_weight(m: CylinderMeasure, c: Cylinder) -> FormalWeight:
    key = product_signature(c)
    w = m._cache.get(key)
    if w is None:
        p = m.parameters
        w = ONE
        for name, e in zip(("p_minus", "q_minus", "p_plus", "q_plus"), key):
            if e:
                w = w * p[name] ** e
        m._cache[key] = w
    return w


def make_product_conformal(beta, theta) -> CylinderMeasure:
    """The product measure with P(x_k=0) = (1-v)/(1-uv) for k < 0 and u(1-v)/(1-uv) for k >= 0.

    These are the unique constant marginals on each half-line making the product
    e^{-beta chi}-conformal: the shift moves x_{-1} to x_0 and the density of the new law
    against the old one must be u on {x_{-1}=0} and 1/v on {x_{-1}=1}.
    """
    b = LogReal.parse(beta)
    if b.value == 0:
        raise InvalidBeta("beta = 0 makes the marginal formula 0/0")
    p_minus = FormalWeight.monomial(one_minus_v=1, one_minus_uv=-1)
    q_minus = FormalWeight.monomial(v=1, one_minus_u=1, one_minus_uv=-1)
    p_plus = U * p_minus
    q_plus = FormalWeight.monomial(one_minus_u=1, one_minus_uv=-1)
    return product_measure(p_minus, p_plus, b, theta, q_minus, q_plus)


def marginals(m: CylinderMeasure) -> tuple:
    """Evaluated (p_minus, p_plus) of a product measure."""
    if m.kind != "product":
        raise ValueError("marginals are defined for product measures only")
    u, v = m.binding()
    return (m.parameters["p_minus"].evaluate(u, v), m.parameters["p_plus"].evaluate(u, v))


def make_orbit_measure(beta, theta) -> CylinderMeasure:
    """Atomic measure on the orbit of x* = (...000.111...) (x*_k = 1 iff k >= 0).

    Atom weights: w_k = w_0 u^k for k >= 0 and w_{-j} = w_0 v^j, with
    w_0 = (1-u)(1-v)/(1-uv) so that the total mass is one.
    """
    b = LogReal.parse(beta)
    th = parse_theta(theta)
    if not b.value > 0:
        raise DivergentOrbitWeights("orbit weights are summable only for beta > 0")
    w0 = FormalWeight.monomial(one_minus_u=1, one_minus_v=1, one_minus_uv=-1)

    def oracle(c: Cylinder) -> FormalWeight:
        # tau^k x* has x_j = 1 exactly for j >= k
        zeros = [k for k, s in c.fixed if s == 0]
        ones = [k for k, s in c.fixed if s == 1]
        lo = max(zeros) + 1 if zeros else None
        hi = min(ones) if ones else None
        if lo is not None and hi is not None and lo > hi:
            return ZERO
        return w0 * _orbit_interval_sum(lo, hi)

    m = CylinderMeasure("orbit-atomic", b, th, {"w0": w0}, oracle)
    return m


def orbit_atom(k: int) -> FormalWeight:
    """Weight of the atom tau^k x*."""
    w0 = FormalWeight.monomial(one_minus_u=1, one_minus_v=1, one_minus_uv=-1)
    if k >= 0:
        return w0 * FormalWeight.monomial(u=k)
    return w0 * FormalWeight.monomial(v=-k)


def _orbit_interval_sum(lo, hi) -> FormalWeight:
    """sum of w_k / w_0 over lo <= k <= hi (None = unbounded)."""
    total = ZERO
    # k < 0 part: w_k/w_0 = v^{-k}, j = -k runs over [max(1, -hi), -lo]
    neg_hi = -1 if hi is None else min(hi, -1)
    if lo is None or lo <= neg_hi:
        j1 = -neg_hi
        total = total + FormalWeight.monomial(v=j1, one_minus_v=-1)
        if lo is not None:
            total = total - FormalWeight.monomial(v=-lo + 1, one_minus_v=-1)
    # k >= 0 part: u^k over [max(lo, 0), hi]
    pos_lo = 0 if lo is None else max(lo, 0)
    if hi is None or pos_lo <= hi:
        total = total + FormalWeight.monomial(u=pos_lo, one_minus_u=-1)
        if hi is not None:
            total = total - FormalWeight.monomial(u=hi + 1, one_minus_u=-1)
    return total


def pushforward_kappa(m: CylinderMeasure) -> CylinderMeasure:
    """m o kappa, expressed in the variables of -beta (u -> 1/u, v -> 1/v)."""
    if m.kind == "product":
        p = {k: w.invert_variables() for k, w in m.parameters.items() }
        # kappa exchanges the half-lines k < 0 and k >= 0
        return product_measure(p["p_plus"], p["p_minus"], -m.beta, m.theta,
                               p["q_plus"], p["q_minus"])

    def oracle(c: Cylinder) -> FormalWeight:
        return m.weight(flip_cylinder(c)).invert_variables()

    params = {"source_kind": m.kind}
    return CylinderMeasure("custom", -m.beta, m.theta, params, oracle)


# ---------------------------------------------------------------------------
# conformality


def conformal_rhs(c: Cylinder, m: CylinderMeasure) -> FormalWeight:
    """int_C exp(-beta chi) dm, split over the value of x_{-1} when C leaves it free."""
    s = c.get(-1)
    if s == 0:
        return U * m.weight(c)
    if s == 1:
        return V_INV * m.weight(c)
    return U * m.weight(c.extend(-1, 0)) + V_INV * m.weight(c.extend(-1, 1))


@dataclass
class ConformalityRow:
    cylinder: Cylinder
    lhs: object
    rhs: object
    passed: bool


@dataclass
class ConformalityReport:
    depth: int
    mode: str
    rows: list
    verdict: bool
    beta: str = ""
    theta: str = ""

    @property
    def failures(self) -> list:
        return [r for r in self.rows if not r.passed]

    @property
    def max_residual(self) -> float:
        worst = 0.0
        for r in self.rows:
            if self.mode == "numeric":
                worst = max(worst, abs(r.lhs - r.rhs))
            elif not r.passed:
                worst = math.inf
        return worst

    def to_csv(self, fh=None) -> str:
        buf = fh if fh is not None else io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["window", "symbols", "lhs", "rhs", "pass"])
        for r in self.rows:
            win = r.cylinder.window
            w.writerow([
                "Omega" if win is None else f"[{win[0]},{win[1]}]",
                "".join(map(str, r.cylinder.symbols)),
                _fmt(r.lhs), _fmt(r.rhs), int(r.passed),
            ])
        return buf.getvalue() if fh is None else ""


def _fmt(x):
    if isinstance(x, float):
        return repr(x)
    return str(x)


def check_additivity(m: CylinderMeasure, depth: int, span: int | None = None) -> list:
    """Cylinders (window in [-depth, depth]) violating weight(C) = weight(C,x_j=0)+weight(C,x_j=1).

    ``j`` ranges over [-span, span] outside the window (default span = depth).  Also
    checks that Omega has mass one.  Returns the offending (cylinder, j) pairs.
    """
    span = depth if span is None else span
    bad = []
    if not (m.weight(Cylinder.full()) == ONE):
        bad.append((Cylinder.full(), None))
    for c in enumerate_cylinders(depth):
        a, b = c.window
        w = m.weight(c)
        for j in range(-span, span + 1):
            if a <= j <= b:
                continue
            if not (w == m.weight(c.extend(j, 0)) + m.weight(c.extend(j, 1))):
                bad.append((c, j))
    return bad


def check_conformal(m: CylinderMeasure, depth: int, mode: str = "exact",
                    tol: float = NUMERIC_TOL, max_depth: int = DEFAULT_MAX_DEPTH,
                    keep_rows: bool = True) -> ConformalityReport:
    """Test weight(tau C) = conformal_rhs(C) for every cylinder with window in [-depth, depth].

    ``mode="exact"`` compares formal weights; ``mode="numeric"`` compares values at the
    measure's (u, v) within ``tol`` (relative to max(1, |lhs|, |rhs|)).
    """
    if depth < 1 or depth > max_depth:
        raise ValueError(f"depth must lie in [1, {max_depth}]")
    if mode not in ("exact", "numeric"):
        raise ValueError("mode must be 'exact' or 'numeric'")
    bad = check_additivity(m, min(depth, 2))
    if bad:
        c, j = bad[0]
        raise AdditivityViolation(f"measure is not additive at {c} split on x_{j}")
    if mode == "numeric":
        u, v = (float(x) for x in m.binding())
    else:
        u, v = m.binding()
    # product weights depend only on symbol counts, and the row outcome only on those
    # counts plus the value of x_{-1}, so rows sharing that key are compared once
    memo: dict | None = {} if m.kind == "product" else None
    rows = []
    verdict = True
    with _gc_paused():
        verdict = _run_rows(m, depth, mode, tol, u, v, memo, rows, keep_rows)
    return ConformalityReport(depth, mode, rows, verdict, str(m.beta), str(m.theta))


@contextlib.contextmanager
def _gc_paused():
    # hundreds of thousands of acyclic row objects make the cyclic collector dominate
    enabled = gc.isenabled()
    gc.disable()
    try:
        yield
    finally:
        if enabled:
            gc.enable()


def _run_rows(m, depth, mode, tol, u, v, memo, rows, keep_rows) -> bool:
    verdict = True
    for c in enumerate_cylinders(depth):
        if memo is not None:
            key = (product_signature(c), c.get(-1))
            hit = memo.get(key)
            if hit is None:
                hit = memo[key] = _conformal_row(m, c, mode, tol, u, v)
            lhs, rhs, ok = hit
        else:
            lhs, rhs, ok = _conformal_row(m, c, mode, tol, u, v)
        verdict = verdict and ok
        if keep_rows or not ok:
            rows.append(ConformalityRow(c, lhs, rhs, ok))
    return verdict


def _conformal_row(m, c, mode, tol, u, v):
    lhs = m.weight(shift_cylinder(c))
    rhs = conformal_rhs(c, m)
    if mode == "exact":
        ok = lhs == rhs
        if not ok and not isinstance(u, float) and not isinstance(v, float):
            # not a formal identity; conformality is still exact at the bound parameters
            try:
                ok = lhs.evaluate(u, v) == rhs.evaluate(u, v)
            except ZeroDivisionError:
                ok = False
        return lhs, rhs, ok
    lhs, rhs = lhs.evaluate(u, v), rhs.evaluate(u, v)
    return lhs, rhs, abs(lhs - rhs) <= tol * max(1.0, abs(lhs), abs(rhs))


def cylinder_count(depth: int) -> int:
    """Number of cylinders enumerated by check_conformal at this depth."""
    n = 2 * depth + 1
    return sum((n - length + 1) * 2 ** length for length in range(1, n + 1))
