"""Fourier coefficients of the Riesz product prod_k (1 + cos 2 pi n_k t) and their
comparison with base-level autocorrelations of a finite odometer tower."""

from __future__ import annotations

import csv
import io
import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Sequence

import numpy as np

from .odometer import GapViolation, TowerSystem, orbit

PROBE = "indicator of the tower base (level-1 cells)"


@dataclass(frozen=True)
class RieszSpec:
    frequencies: tuple

    def __post_init__(self):
        fs = tuple(int(n) for n in self.frequencies)
        object.__setattr__(self, "frequencies", fs)
        if any(n < 1 for n in fs):
            raise ValueError("frequencies must be positive")
        for a, b in zip(fs, fs[1:]):
            if not b > 3 * a:
                raise GapViolation(f"{b} is not > 3 * {a}")

    @property
    def K(self) -> int:
        return len(self.frequencies)

    @property
    def support_radius(self) -> int:
        return sum(self.frequencies)


def signed_decomposition(m: int, R: RieszSpec) -> tuple | None:
    """The eps in {-1,0,1}^K with m = sum eps_k n_k, or None.

    Greedy from the top: after choosing eps_K the remainder must be reachable by the lower
    frequencies, i.e. at most S_{K-1} = n_1 + ... + n_{K-1} in size.  Since n_K > 2 S_{K-1}
    at most one choice qualifies, which is also why the decomposition is unique.
    """
    ns = R.frequencies
    if abs(m) > sum(ns):
        return None
    eps = [0] * len(ns)
    r = m
    for k in range(len(ns) - 1, -1, -1):
        below = sum(ns[:k])
        for e in (0, 1, -1):
            if abs(r - e * ns[k]) <= below:
                eps[k] = e
                r -= e * ns[k]
                break
        else:
            return None
    return tuple(eps) if r == 0 else None


def all_signed_decompositions(m: int, R: RieszSpec) -> list:
    """Exhaustive search over {-1,0,1}^K."""
    ns = R.frequencies
    return [eps for eps in itertools.product((-1, 0, 1), repeat=len(ns))
            if sum(e * n for e, n in zip(eps, ns)) == m]


def riesz_coefficient(m: int, R: RieszSpec) -> Fraction:
    """Fourier coefficient at m of the K-term partial product: prod 2^{-|eps_k|} or 0."""
    eps = signed_decomposition(m, R)
    if eps is None:
        return Fraction(0)
    return Fraction(1, 2 ** sum(abs(e) for e in eps))


def partial_product(t, R: RieszSpec):
    t = np.asarray(t, dtype=float)
    out = np.ones_like(t)
    for n in R.frequencies:
        out = out * (1.0 + np.cos(2 * np.pi * n * t))
    return out


def riesz_coefficients_fft(R: RieszSpec, points: int | None = None) -> np.ndarray:
    """All Fourier coefficients by an N-point Riemann sum (exact for N > 2 sum n_k up to
    rounding); entry m mod N holds the coefficient at m."""
    N = points if points is not None else 2 * R.support_radius + 2
    if N <= 2 * R.support_radius:
        raise ValueError("need more than 2 * sum(n_k) sample points")
    vals = partial_product(np.arange(N) / N, R)
    return np.fft.fft(vals) / N


def riesz_coefficient_numeric(m: int, R: RieszSpec) -> float:
    """Riemann-sum value of int_0^1 prod(1 + cos 2 pi n_k t) e^{-2 pi i m t} dt, with
    enough points that no other frequency aliases onto m."""
    N = 2 * max(R.support_radius, abs(m)) + 2
    c = riesz_coefficients_fft(R, N)[m % N]
    return float(c.real)


# ---------------------------------------------------------------------------
# Koopman autocorrelation of the base indicator


@lru_cache(maxsize=64)
def _level_sequence(heights: tuple, K: int) -> tuple:
    T = TowerSystem(heights, K)
    return tuple(lev for _, lev in orbit(T))


def koopman_autocorrelation(T: TowerSystem, lag: int) -> Fraction:
    """<U^lag 1_B, 1_B> / nu(B) for the base B; every cell has mass 2^{-K} and nu(B) = 1,
    so this is 2^{-K} #{base cells p : T^lag p in B}."""
    levels = _level_sequence(T.heights, T.K)
    L = len(levels)
    if abs(lag) > L:
        raise ValueError(f"|lag| must not exceed the cycle length {L}")
    hits = sum(1 for i, lev in enumerate(levels) if lev == 1 and levels[(i + lag) % L] == 1)
    return Fraction(hits, 2 ** T.K)


def autocorrelation_sequence(T: TowerSystem) -> list:
    L = len(_level_sequence(T.heights, T.K))
    return [koopman_autocorrelation(T, lag) for lag in range(L + 1)]


def spectral_weights(T: TowerSystem) -> np.ndarray:
    """DFT of the cyclic autocorrelation: the spectral measure of the probe on the L-th
    roots of unity, which must be nonnegative."""
    seq = autocorrelation_sequence(T)[:-1]
    w = np.fft.fft(np.array([float(x) for x in seq])) / len(seq)
    return w.real


# ---------------------------------------------------------------------------
# comparison


@dataclass
class SpectralReport:
    lags: list
    koopman: list
    riesz: list
    deviations: list
    passed: list
    thresholds: dict = field(default_factory=dict)
    probe: str = PROBE
    oracle_key: str | None = None

    @property
    def verdict(self) -> bool:
        return all(self.passed)

    @property
    def max_deviation(self) -> Fraction:
        return max(self.deviations) if self.deviations else Fraction(0)

    def rows(self):
        return list(zip(self.lags, self.koopman, self.riesz, self.deviations, self.passed))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["lag", "koopman", "riesz", "deviation", "pass"])
        for lag, k, r, d, ok in self.rows():
            w.writerow([lag, k, r, d, int(ok)])
        return buf.getvalue()


def band_of(lag: int, R: RieszSpec) -> str:
    """'support' inside the Riesz support |lag| <= sum n_k, else 'wrap'."""
    return "support" if abs(lag) <= R.support_radius else "wrap"


def compare_spectra(T: TowerSystem, lags: Sequence[int], thresholds: dict | None = None,
                    oracle_key: str | None = None) -> SpectralReport:
    """Tabulate autocorrelation against Riesz coefficient per lag.

    ``thresholds`` maps a band name (see :func:`band_of`) to the largest admissible
    deviation; without thresholds every row passes (pure tabulation).
    """
    R = RieszSpec(T.n)
    rep = SpectralReport([], [], [], [], [], dict(thresholds or {}), oracle_key=oracle_key)
    for lag in lags:
        k = koopman_autocorrelation(T, lag)
        r = riesz_coefficient(lag, R)
        d = abs(k - r)
        limit = rep.thresholds.get(band_of(lag, R))
        rep.lags.append(lag)
        rep.koopman.append(k)
        rep.riesz.append(r)
        rep.deviations.append(d)
        rep.passed.append(True if limit is None else d <= Fraction(limit))
    return rep
