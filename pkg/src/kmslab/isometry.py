"""Finite truncations of N^2-isometric representations with commuting range projections.

Two models come from a Z^2-action on cells and give 0/1 matrices (exact):

* the theta = 1 model on X-bar = {(i, n) : n >= -f_i} over a T-orbit segment (T i = i + 1),
  with (i, n) + e1 = (i, n + 1) and (i, n) + e2 = (i + 1, n + 1);
* the staircase model on F x N with W1 = 1 (x) S and W2 = sum_k S Q_k (x) S^k.

A third builder takes an arbitrary finite unitary U and projections P_k and returns the
complex matrices V1 = 1 (x) S, V2 = sum_k U P_k (x) S^k.

Each cell carries a fiber offset r in [0, N).  An operator identity is asserted on the
interior of the grid: the cells p for which the translates involved stay inside the grid.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .formal import LogReal, parse_theta
from .odometer import TowerSystem, orbit

OUTSIDE = "outside"  # the translate leaves the space itself (not a truncation effect)
NUMERIC_TOL = 1e-12


class SlopeViolation(ValueError):
    pass


class PartitionInvalid(ValueError):
    pass


class NotDecreasing(ValueError):
    pass


class CoherenceViolation(ValueError):
    pass


class NegativeWeight(ValueError):
    pass


# ---------------------------------------------------------------------------
# cell models


class Theta1Model:
    """Cells (i, n) with n = -f_i + r, 0 <= r < N, over base points 0..B-1."""

    kind = "theta1"

    def __init__(self, f: Sequence[int], N: int, cyclic: bool = False):
        self.f = tuple(int(v) for v in f)
        self.N = int(N)
        self.cyclic = cyclic
        B = len(self.f)
        if B < 1 or self.N < 1:
            raise ValueError("need at least one base point and one fiber level")
        pairs = range(B) if cyclic else range(B - 1)
        for i in pairs:
            j = (i + 1) % B
            if self.f[j] - self.f[i] < -1:
                raise SlopeViolation(f"f({j}) - f({i}) = {self.f[j] - self.f[i]} < -1")
        self.cells = [(i, -self.f[i] + r) for i in range(B) for r in range(self.N)]

    def level(self, p) -> int:
        return p[1]

    def shift(self, p, a):
        """p + a for a = (m, k) in Z^2: (i + k, n + m + k); None when it leaves the window."""
        i, n = p
        m, k = a
        B = len(self.f)
        j = i + k
        if self.cyclic:
            j %= B
        elif not 0 <= j < B:
            return None
        n2 = n + m + k
        r = n2 + self.f[j]
        if r < 0:
            return OUTSIDE
        if r >= self.N:
            return None
        return (j, n2)

    def exponent(self, p) -> int:
        """c of the lattice point of p; the fiber coordinate n for theta = 1."""
        return p[1]

    def bottoms(self) -> list:
        return [-v for v in self.f]

    def metadata(self) -> dict:
        return {"model": self.kind, "f": list(self.f), "N": self.N, "cyclic": self.cyclic}


class StaircaseModel:
    """Cells (r, s), r in the window F, 0 <= s < N, identified with (s + a_r, r) in B."""

    kind = "staircase"

    def __init__(self, a: Sequence[int], N: int, start: int = 0):
        self.a = tuple(int(v) for v in a)
        self.start = int(start)
        self.N = int(N)
        if any(y > x for x, y in zip(self.a, self.a[1:])):
            raise NotDecreasing("profile must be non-increasing")
        self.cells = [(self.start + i, s) for i in range(len(self.a)) for s in range(self.N)]

    @property
    def decrements(self) -> dict:
        """r -> a_r - a_{r+1} for the rows where both are in the window."""
        return {self.start + i: x - y for i, (x, y) in enumerate(zip(self.a, self.a[1:]))}

    def level(self, p) -> int:
        return p[1]

    def shift(self, p, a):
        r, s = p
        m, n = a
        r2 = r + n
        if not self.start <= r2 < self.start + len(self.a):
            return None
        s2 = s + self.a[r - self.start] + m - self.a[r2 - self.start]
        if s2 < 0:
            return OUTSIDE
        if s2 >= self.N:
            return None
        return (r2, s2)

    def exponent(self, p) -> int:
        """c(x, y) = x + y at the lattice point (s + a_r, r)."""
        r, s = p
        return s + self.a[r - self.start] + r

    def bottoms(self) -> list:
        return [self.a[i] + self.start + i for i in range(len(self.a))]

    def metadata(self) -> dict:
        return {"model": self.kind, "a": list(self.a), "start": self.start, "N": self.N}


# ---------------------------------------------------------------------------
# operators


@dataclass
class TruncatedOperator:
    """A matrix on the grid; ``margin`` is how far (in generator steps) it moves support."""

    matrix: np.ndarray
    margin: int = 1
    label: str = ""

    @property
    def H(self) -> np.ndarray:
        return self.matrix.conj().T

    def triplets(self) -> list:
        rows, cols = np.nonzero(self.matrix)
        return [[int(i), int(j), _jsonable(self.matrix[i, j])] for i, j in zip(rows, cols)]


def _jsonable(x):
    if isinstance(x, (complex, np.complexfloating)):
        return [float(x.real), float(x.imag)]
    if isinstance(x, (np.integer, int)):
        return int(x)
    return float(x)


@dataclass
class IsoRep:
    V1: TruncatedOperator
    V2: TruncatedOperator
    beta: LogReal
    theta: Fraction | float = Fraction(1)
    model: object = None
    weight: Fraction = Fraction(1)
    fiber_n: int = 0
    kmax: int = 1
    extra: dict = field(default_factory=dict)

    @property
    def exact(self) -> bool:
        return self.V1.matrix.dtype.kind in "iu"

    @property
    def dim(self) -> int:
        return self.V1.matrix.shape[0]

    @property
    def cells(self) -> list:
        if self.model is not None:
            return self.model.cells
        d = self.extra["blocks"]
        return [(b, s) for b in range(d) for s in range(self.fiber_n)]

    def V(self, a) -> np.ndarray:
        m, n = a
        out = np.eye(self.dim, dtype=self.V1.matrix.dtype)
        for _ in range(m):
            out = self.V1.matrix @ out
        for _ in range(n):
            out = self.V2.matrix @ out
        return out

    def E(self, a) -> np.ndarray:
        Va = self.V(a)
        return Va @ Va.conj().T

    def interior(self, a) -> np.ndarray:
        """Mask of cells p for which p + b stays in the grid for every b <= a."""
        m, n = a
        if self.model is not None:
            idx = _index(self.model)
            return np.array([_in_grid(self.model.shift(p, (m, n)), idx) for p in self.model.cells])
        levels = np.array([s for _, s in self.cells])
        return levels <= self.fiber_n - 1 - (m + n * self.kmax)

    def cocycle(self, a):
        return a[0] + a[1] * self.theta

    def to_record(self) -> dict:
        meta = self.model.metadata() if self.model is not None else dict(self.extra)
        return {"beta": str(self.beta), "theta": str(self.theta), "grid": meta,
                "dim": self.dim, "V1": self.V1.triplets(), "V2": self.V2.triplets()}


def _index(model) -> dict:
    idx = getattr(model, "_idx", None)
    if idx is None:
        idx = {p: i for i, p in enumerate(model.cells)}
        model._idx = idx
    return idx


def _in_grid(q, idx) -> bool:
    return q is not None and q != OUTSIDE and q in idx


def _translation_matrix(model, a) -> np.ndarray:
    idx = _index(model)
    M = np.zeros((len(model.cells), len(model.cells)), dtype=np.int64)
    for j, p in enumerate(model.cells):
        q = model.shift(p, a)
        if _in_grid(q, idx):
            M[idx[q], j] = 1
    return M


def _rep_from_model(model, beta, weight, theta=1) -> IsoRep:
    V1 = TruncatedOperator(_translation_matrix(model, (1, 0)), 1, "V(1,0)")
    V2 = TruncatedOperator(_translation_matrix(model, (0, 1)), 1, "V(0,1)")
    return IsoRep(V1, V2, LogReal.parse(beta), parse_theta(theta), model, Fraction(weight), model.N)


def build_theta1_rep(f_values: Sequence[int], fiber_n: int, beta, weight=1, cyclic: bool = False) -> IsoRep:
    """V1 f(x, n) = f(x, n-1), V2 f(x, n) = f(T^{-1}x, n-1) on X-bar, zero off X-bar.

    ``f_values`` lists f along consecutive points x, Tx, T^2 x, ...; ``cyclic`` closes the
    segment into a periodic orbit.  Every base point carries mass ``weight``.
    """
    return _rep_from_model(Theta1Model(f_values, fiber_n, cyclic), beta, weight)


def build_staircase_rep(a: Sequence[int], fiber_n: int, start: int = 0, beta="2ln2") -> IsoRep:
    """W1 = 1 (x) S and W2 = sum_k S Q_k (x) S^k on l^2(F x [0, N)), with
    Q_k the projection onto the rows r with a_r - a_{r+1} = k."""
    return _rep_from_model(StaircaseModel(a, fiber_n, start), beta, 1)


def decrement_classes(rep: IsoRep) -> dict:
    """k -> rows r with a_r - a_{r+1} = k (staircase builds)."""
    out: dict = {}
    for r, k in rep.model.decrements.items():
        out.setdefault(k, []).append(r)
    return out


def shift_matrix(N: int, power: int = 1) -> np.ndarray:
    S = np.zeros((N, N))
    for j in range(N - power):
        S[j + power, j] = 1
    return S


def build_operator2_rep(U: np.ndarray, P: Sequence[np.ndarray], fiber_n: int, beta="2ln2",
                        tol: float = NUMERIC_TOL) -> IsoRep:
    """V1 = 1 (x) S and V2 = sum_k U P_k (x) S^k with P[k] the k-th projection."""
    U = np.asarray(U, dtype=complex)
    d = U.shape[0]
    if U.shape != (d, d) or np.abs(U.conj().T @ U - np.eye(d)).max() > tol:
        raise ValueError("U must be a square unitary matrix")
    Ps = [np.asarray(p, dtype=complex) for p in P]
    for k, p in enumerate(Ps):
        if p.shape != (d, d) or np.abs(p @ p - p).max() > tol or np.abs(p - p.conj().T).max() > tol:
            raise PartitionInvalid(f"P[{k}] is not an orthogonal projection")
    for j in range(len(Ps)):
        for k in range(j + 1, len(Ps)):
            if np.abs(Ps[j] @ Ps[k]).max() > tol:
                raise PartitionInvalid(f"P[{j}] and P[{k}] are not orthogonal")
    if np.abs(sum(Ps) - np.eye(d)).max() > tol:
        raise PartitionInvalid("the projections do not sum to the identity")
    N = int(fiber_n)
    V1 = np.kron(np.eye(d), shift_matrix(N))
    V2 = sum(np.kron(U @ p, shift_matrix(N, k)) for k, p in enumerate(Ps))
    kmax = max((k for k, p in enumerate(Ps) if np.abs(p).max() > 0), default=0)
    return IsoRep(TruncatedOperator(V1.astype(complex), 1, "V(1,0)"),
                  TruncatedOperator(np.asarray(V2, dtype=complex), max(kmax, 1), "V(0,1)"),
                  LogReal.parse(beta), Fraction(1), None, Fraction(1), N, max(kmax, 1),
                  {"model": "operator2", "blocks": d, "N": N,
                   "partition": [int(round(np.trace(p).real)) for p in Ps]})


# ---------------------------------------------------------------------------
# eigenvector, gauge, coherent family, layer measure


@dataclass
class Eigenvector:
    values: np.ndarray
    norm_sq: object
    closed_form: object
    defect: object


def _exp_neg(beta: LogReal, s):
    return beta.exp_neg(Fraction(s))


def eigenvector_xi(rep: IsoRep) -> Eigenvector:
    """xi(p) = exp(-beta c(p) / 2) on the grid, c(p) the cocycle of the lattice point of p,
    with ||xi||^2 and its untruncated value (N -> infinity)."""
    if rep.model is None:
        raise ValueError("the eigenvector needs a cell model (theta = 1 or staircase build)")
    heights = [rep.model.exponent(p) for p in rep.model.cells]
    vals = [_exp_neg(rep.beta, Fraction(h) / 2) for h in heights]
    exact = all(isinstance(v, (int, Fraction)) for v in vals)
    xi = np.array(vals, dtype=object if exact else float)
    norm_sq = rep.weight * sum(v * v for v in vals)
    if rep.beta.value <= 0:
        return Eigenvector(xi, norm_sq, math.inf, math.inf)
    u = _exp_neg(rep.beta, 1)
    closed = rep.weight * sum(_exp_neg(rep.beta, b) for b in rep.model.bottoms()) / (1 - u)
    return Eigenvector(xi, norm_sq, closed, closed - norm_sq)


def gauge_unitary(rep: IsoRep, t: float) -> np.ndarray:
    """U_t = multiplication by exp(i t beta c(p)), c(p) the cocycle at the lattice point of p
    (the fiber coordinate when there is no cell model)."""
    levels = np.array([rep.model.exponent(p) if rep.model is not None else p[1] for p in rep.cells], dtype=float)
    return np.diag(np.exp(1j * t * rep.beta.value * levels))


@dataclass
class CoherentFamily:
    grid: list
    vectors: dict


def p_grid(size: int) -> list:
    return [(m, n) for m in range(size + 1) for n in range(size + 1)]


def coherent_from_vector(rep: IsoRep, xi: np.ndarray, grid: Iterable) -> CoherentFamily:
    """xi_a = (1 - E_a) xi, the component of xi in Ker(V_a^*)."""
    grid = list(grid)
    out = {}
    for a in grid:
        Ea = rep.E(a)
        out[a] = xi - Ea.astype(xi.dtype) @ xi if xi.dtype == object else xi - Ea @ xi
    return CoherentFamily(grid, out)


def _leq(a, b) -> bool:
    return a[0] <= b[0] and a[1] <= b[1]


def _residual(x) -> float:
    if len(x) == 0:
        return 0.0
    return float(max(abs(v) for v in x))


@dataclass
class CheckRow:
    identity: str
    margin: str
    residual: float
    passed: bool


def _row(identity, margin, residual, exact, tol=NUMERIC_TOL) -> CheckRow:
    ok = residual == 0 if exact else residual <= tol
    return CheckRow(identity, str(margin), float(residual), bool(ok))


def check_coherence(rep: IsoRep, fam: CoherentFamily) -> list:
    rows = []
    exact = fam.vectors[fam.grid[0]].dtype == object if fam.grid else True
    for a in fam.grid:
        Ea = rep.E(a)
        for b in fam.grid:
            if not _leq(a, b) or a == b:
                continue
            xb = fam.vectors[b]
            lhs = xb - (Ea.astype(object) @ xb if exact else Ea @ xb)
            rows.append(_row(f"E_{a}^perp xi_{b} = xi_{a}", "all cells",
                             _residual(lhs - fam.vectors[a]), exact))
    return rows


def check_conformality_relation(rep: IsoRep, fam: CoherentFamily) -> list:
    """E_b^perp V_a^* xi_{a+b} = exp(-beta c(a)/2) xi_b on the cells p with p + a in the grid."""
    rows = []
    exact = fam.grid and fam.vectors[fam.grid[0]].dtype == object
    grid = set(fam.grid)
    for a in fam.grid:
        for b in fam.grid:
            ab = (a[0] + b[0], a[1] + b[1])
            if ab not in grid:
                continue
            Va = rep.V(a)
            Eb = rep.E(b)
            x = fam.vectors[ab]
            if exact:
                y = Va.T.astype(object) @ x
                y = y - Eb.astype(object) @ y
            else:
                y = Va.conj().T @ x
                y = y - Eb @ y
            factor = _exp_neg(rep.beta, Fraction(rep.cocycle(a)) / 2) if exact else \
                math.exp(-rep.beta.value * float(rep.cocycle(a)) / 2)
            mask = rep.interior(a)
            diff = (y - factor * fam.vectors[b])[mask]
            rows.append(_row(f"E_{b}^perp V_{a}^* xi_{ab} = e^(-beta c(a)/2) xi_{b}", f"interior{a}",
                             _residual(diff), bool(exact)))
    return rows


@dataclass
class LayerMeasure:
    """mu_a(p) = w |xi_a(p)|^2 for the cells p of the layer X-bar minus (X-bar + a)."""

    weights: dict
    beta: LogReal
    theta: Fraction | float
    cells: list
    checks: list = field(default_factory=list)

    def layer(self, a) -> list:
        return sorted(self.weights[a])

    def mass(self, a):
        return sum(self.weights[a].values(), Fraction(0))

    def measure(self, a, E: Iterable) -> object:
        w = self.weights[a]
        return sum((w[p] for p in E if p in w), Fraction(0))

    @property
    def verdict(self) -> bool:
        return all(r.passed for r in self.checks)


def measure_from_eigenvector(rep: IsoRep, fam: CoherentFamily, strict: bool = True) -> LayerMeasure:
    """Layer measures from a coherent family, with the consistency check across layers
    and the conformality check mu(p + a) = exp(-beta c(a)) mu(p)."""
    cells = rep.cells
    exact = bool(fam.grid) and fam.vectors[fam.grid[0]].dtype == object
    weights = {}
    for a in fam.grid:
        Ea = np.diag(rep.E(a))
        layer = {}
        for i, p in enumerate(cells):
            if Ea[i] == 0:
                v = fam.vectors[a][i]
                mu = rep.weight * (v * v if exact else abs(v) ** 2)
                if mu < 0:
                    raise NegativeWeight(f"negative weight at {p}")
                layer[p] = mu
        weights[a] = layer
    lm = LayerMeasure(weights, rep.beta, rep.theta, cells)
    # step (2): layers agree where they overlap
    for a in fam.grid:
        for b in fam.grid:
            if not _leq(a, b) or a == b:
                continue
            common = set(weights[a]) & set(weights[b])
            diff = [weights[a][p] - weights[b][p] for p in common]
            lm.checks.append(_row(f"mu_{a} = mu_{b} on common cells", f"{len(common)} cells",
                                  _residual(diff), exact))
    # step (4): conformality on single cells inside the largest layer
    top = max(fam.grid, key=lambda a: (a[0] + a[1], a))
    idx = {p: i for i, p in enumerate(cells)}
    big = weights[top]
    for a in fam.grid:
        if a == (0, 0):
            continue
        factor = _exp_neg(rep.beta, rep.cocycle(a)) if exact else math.exp(-rep.beta.value * float(rep.cocycle(a)))
        diffs = []
        for p in big:
            q = rep.model.shift(p, a) if rep.model is not None else None
            if _in_grid(q, idx) and q in big:
                diffs.append(big[q] - factor * big[p])
        lm.checks.append(_row(f"mu(p+{a}) = e^(-beta c{a}) mu(p)", f"{len(diffs)} cell pairs",
                              _residual(diffs), exact))
    # step (3): total layer mass is ||xi_a||^2
    for a in fam.grid:
        v = fam.vectors[a]
        nsq = rep.weight * (sum(x * x for x in v) if exact else float(np.sum(np.abs(v) ** 2)))
        lm.checks.append(_row(f"mu(layer {a}) = ||xi_{a}||^2", "all cells",
                              _residual([lm.mass(a) - nsq]), exact))
    if strict:
        bad = [r for r in lm.checks if not r.passed]
        if bad:
            raise CoherenceViolation(bad[0].identity)
    return lm


# ---------------------------------------------------------------------------
# structural checks


def check_isometry(rep: IsoRep) -> list:
    rows = []
    for name, a in (("V1", (1, 0)), ("V2", (0, 1)), ("V(1,1)", (1, 1))):
        Va = rep.V(a)
        G = Va.conj().T @ Va - np.eye(rep.dim)
        mask = rep.interior(a)
        rows.append(_row(f"{name}^* {name} = 1", f"interior{a}", _residual(np.abs(G[:, mask]).ravel()),
                         rep.exact))
    return rows


def check_commutation(rep: IsoRep, grid_size: int = 2) -> list:
    V1, V2 = rep.V1.matrix, rep.V2.matrix
    mask = rep.interior((1, 1))
    rows = [_row("V1 V2 = V2 V1", "interior(1, 1)", _residual(np.abs((V1 @ V2 - V2 @ V1)[:, mask]).ravel()),
                 rep.exact)]
    grid = p_grid(grid_size)
    Es = {a: rep.E(a) for a in grid}
    worst = 0.0
    for a in grid:
        for b in grid:
            mask = rep.interior((a[0] + b[0], a[1] + b[1]))
            C = Es[a] @ Es[b] - Es[b] @ Es[a]
            worst = max(worst, _residual(np.abs(C[:, mask]).ravel()))
    rows.append(_row(f"E_a E_b = E_b E_a, a, b in {{0..{grid_size}}}^2", "interior(a+b)", worst, rep.exact))
    return rows


def check_covariance(rep: IsoRep, grid_size: int = 2) -> list:
    """V_a^* M(1_E) V_a = M(1_{(E-a) cap X}) and V_a M(1_E) V_a^* = M(1_{E+a}) for singletons E."""
    model = rep.model
    idx = _index(model)
    cells = model.cells
    worst1 = worst2 = 0
    for a in p_grid(grid_size):
        Va = rep.V(a)
        interior = rep.interior(a)
        # the pre-image of q under +a is decided inside the grid, or leaves the space
        for j, p in enumerate(cells):
            # for E = {p}: V_a^* R(E) V_a and V_a R(E) V_a^* are outer products
            lhs1 = np.outer(Va[j, :], Va[j, :])
            rhs1 = np.zeros(len(cells), dtype=np.int64)
            for i, x in enumerate(cells):
                if model.shift(x, a) == p:
                    rhs1[i] = 1
            diff1 = (lhs1 - np.diag(rhs1))[:, interior]
            worst1 = max(worst1, int(np.abs(diff1).max()) if diff1.size else 0)
            lhs2 = np.outer(Va[:, j], Va[:, j])
            q = model.shift(p, a)
            rhs2 = np.zeros(len(cells), dtype=np.int64)
            if _in_grid(q, idx):
                rhs2[idx[q]] = 1
            # E + a is computed in the grid; rows whose preimage left the window are boundary
            keep = np.array([_preimage_known(model, x, a, idx) for x in cells])
            diff2 = (lhs2 - np.diag(rhs2))[np.ix_(keep, keep)]
            worst2 = max(worst2, int(np.abs(diff2).max()) if diff2.size else 0)
    return [_row("V_a^* R(E) V_a = R((E-a) cap X)", "interior(a)", worst1, True),
            _row("V_a R(E) V_a^* = R(E+a)", "preimage in grid or outside X", worst2, True)]


def _preimage_known(model, x, a, idx) -> bool:
    q = model.shift(x, (-a[0], -a[1]))
    return q == OUTSIDE or _in_grid(q, idx)


def check_eigen_relation(rep: IsoRep, xi: np.ndarray,
                         elements: Sequence = ((1, 0), (0, 1), (1, 1))) -> list:
    rows = []
    exact = xi.dtype == object
    for a in elements:
        Va = rep.V(a)
        lhs = Va.T.astype(object) @ xi if exact else Va.conj().T @ xi
        factor = _exp_neg(rep.beta, Fraction(rep.cocycle(a)) / 2) if exact else \
            math.exp(-rep.beta.value * float(rep.cocycle(a)) / 2)
        mask = rep.interior(a)
        rows.append(_row(f"V_{a}^* xi = e^(-beta c(a)/2) xi", f"interior{a}",
                         _residual((lhs - factor * xi)[mask]), exact))
    return rows


def check_gauge(rep: IsoRep, ts: Sequence[float] = (0.0, 0.37, 1.0, -2.5)) -> list:
    worst_conj = worst_group = 0.0
    for t in ts:
        Ut = gauge_unitary(rep, t)
        for a in ((1, 0), (0, 1)):
            Va = rep.V(a).astype(complex)
            phase = np.exp(1j * t * rep.beta.value * float(rep.cocycle(a)))
            worst_conj = max(worst_conj, float(np.abs(Ut @ Va @ Ut.conj().T - phase * Va).max()))
        for s in ts:
            worst_group = max(worst_group, float(np.abs(gauge_unitary(rep, s) @ Ut - gauge_unitary(rep, s + t)).max()))
    worst_id = float(np.abs(gauge_unitary(rep, 0.0) - np.eye(rep.dim)).max())
    return [_row("U_t V_a U_t^* = e^(it beta c(a)) V_a", "all cells", worst_conj, False),
            _row("U_s U_t = U_(s+t)", "all cells", worst_group, False),
            _row("U_0 = 1", "all cells", worst_id, False)]


def purity_defect(rep: IsoRep, steps: int) -> float:
    """Normalized Hilbert-Schmidt norm of the projection onto Ran V_(steps, steps):
    sqrt(rank / dim).  It is 1 at steps = 0 and vanishes once everything is shifted out."""
    Va = rep.V((steps, steps))
    E = Va @ Va.conj().T
    return math.sqrt(float(np.real(np.trace(E.conj().T @ E))) / rep.dim)


def dilation_span_rank(rep: IsoRep, seeds: Sequence[int] | None = None) -> int:
    """Rank of {V_a^* e : e a seed basis vector, a <= (N, rows)}; seeds default to the top
    fiber row.  Equals the grid size when the adjoints reach every cell."""
    cells = rep.cells
    if seeds is None:
        top = max(rep.model.level(p) - _base_level(rep, p) for p in cells)
        seeds = [i for i, p in enumerate(cells) if rep.model.level(p) - _base_level(rep, p) == top]
    span = set()
    reach = max(rep.fiber_n, len({p[0] for p in cells}))
    for m in range(reach + 1):
        for n in range(reach + 1):
            Vt = rep.V((m, n)).T
            for j in seeds:
                col = np.nonzero(Vt[:, j])[0]
                span.update(int(i) for i in col)
    return len(span)


def _base_level(rep: IsoRep, p) -> int:
    if rep.model.kind == "theta1":
        return -rep.model.f[p[0]]
    return 0


# ---------------------------------------------------------------------------
# tower-derived f and the 1-conformality probe


def tower_f(T: TowerSystem) -> tuple:
    """f = -(level - 1) along the full tower cycle, starting at the bottom of the all-zeros column."""
    return tuple(-(lev - 1) for _, lev in orbit(T))


def build_tower_rep(T: TowerSystem, fiber_n: int, beta) -> IsoRep:
    return build_theta1_rep(tower_f(T), fiber_n, beta, Fraction(1, 2 ** T.K), cyclic=True)


def invariant_layers(rep: IsoRep, grid: Iterable) -> LayerMeasure:
    """Layer measure of the invariant measure (xi = 1, i.e. beta = 0)."""
    ones = np.array([Fraction(1)] * rep.dim, dtype=object)
    flat = IsoRep(rep.V1, rep.V2, LogReal.parse(0), rep.theta, rep.model, rep.weight, rep.fiber_n)
    return measure_from_eigenvector(flat, coherent_from_vector(flat, ones, grid), strict=False)


def one_conformality_probe(layers: Sequence[LayerMeasure], a=(1, 0)) -> dict:
    """mu(X-bar minus (X-bar + a)) across truncations and whether it stays put or grows."""
    a = tuple(a)
    if a == (0, 0):
        return {"masses": [Fraction(0)] * len(layers), "trend": "finite"}
    masses = [lm.mass(a) for lm in layers]
    if len(masses) < 2:
        raise ValueError("need layer measures at two or more truncation levels")
    if all(x == masses[0] for x in masses):
        trend = "finite"
    elif all(y > x for x, y in zip(masses, masses[1:])):
        trend = "growing"
    else:
        trend = "mixed"
    return {"masses": masses, "trend": trend}


def rows_to_csv(rows: Sequence[CheckRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["identity", "margin", "max_residual", "pass"])
    for r in rows:
        w.writerow([r.identity, r.margin, repr(r.residual), int(r.passed)])
    return buf.getvalue()


def haar_unitary(d: int, seed: int) -> np.ndarray:
    from scipy.stats import unitary_group
    return unitary_group.rvs(d, random_state=seed)


def koopman_unitary(d: int, seed: int) -> np.ndarray:
    """Random phase-times-permutation unitary: the Koopman operator of a bijection of d
    points twisted by a unimodular cocycle.  Conjugation by it maps diagonal projections to
    diagonal projections, as U_{T x R_alpha} does for multiplication operators."""
    rng = np.random.default_rng(seed)
    perm = rng.permutation(d)
    phases = np.exp(2j * np.pi * rng.random(d))
    U = np.zeros((d, d), dtype=complex)
    U[perm, np.arange(d)] = phases
    return U


def diagonal_partition(classes: Sequence[int]) -> list:
    """Diagonal projections P_k onto the basis vectors whose class is k."""
    kmax = max(classes)
    return [np.diag([1.0 if c == k else 0.0 for c in classes]) for k in range(kmax + 1)]
