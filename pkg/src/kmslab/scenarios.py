"""Scenario configuration, pipelines and report emission behind the ``lab`` command."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Mapping

from . import isometry as iso
from . import plotting
from .formal import LogReal, parse_theta
from .lattice import check_lift, lift_measure, NotConformal
from .odometer import (CANONICAL_HEIGHTS, GapViolation, TowerSystem, cycle_length, is_permutation,
                       kac_check, orbit, orbit_csv, tower_mass)
from .oracle import ConfigInvalid, KeyExists, OracleStore, make_key
from .riesz import RieszSpec, band_of, compare_spectra, koopman_autocorrelation
from .symbolic import (AdditivityViolation, DivergentOrbitWeights, InvalidBeta, bernoulli_half,
                       check_conformal, make_orbit_measure, make_product_conformal, pushforward_kappa)

SCENARIOS = ("conformal-check", "lift-check", "tower", "riesz-compare", "isometry-verify", "full-report")


class CheckFailed(RuntimeError):
    pass


DEFAULTS: dict = {
    "conformal-check": {"beta": "ln2", "theta": 1, "depth": 6, "measure": "product", "kappa": False},
    "lift-check": {"beta": "ln2", "theta": 1, "depth": 5, "slices": 5, "measure": "product"},
    "tower": {"heights": list(CANONICAL_HEIGHTS), "Ks": [1, 2, 3, 4, 5, 6]},
    "riesz-compare": {"heights": [1, 4, 13], "K": 3, "lags": None},
    "isometry-verify": {
        "beta": "2ln2",
        "grid": 2,
        "builds": [
            {"name": "flat", "kind": "theta1", "f": [0, 0, 0, 0], "N": 12},
            {"name": "one-descent", "kind": "theta1", "f": [1, 1, 1, 0, 0, 0], "N": 8},
            {"name": "operator2", "kind": "operator2", "unitary": "koopman", "seed": 2024,
             "classes": [0, 0, 1, 2], "N": 8},
            {"name": "staircase", "kind": "staircase", "a": [-1, -1, -3, -4], "N": 10},
        ],
        "purity": {"a": [0, -1, -2, -3, -4, -5, -6, -7, -8, -9], "N": 10, "steps": 3},
        "probe": {"heights": [1, 4, 13, 40, 121], "Ks": [3, 4, 5], "N": 2},
    },
}


@dataclass
class ScenarioConfig:
    scenario: str
    params: dict
    out: Path
    mode: str = "exact"
    tol: float = 1e-12
    oracle: bool = False
    store: OracleStore | None = None

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ConfigInvalid(f"unknown scenario {self.scenario!r}; choose from {', '.join(SCENARIOS)}")
        if self.mode not in ("exact", "numeric"):
            raise ConfigInvalid("mode must be 'exact' or 'numeric'")
        if not (isinstance(self.tol, (int, float)) and math.isfinite(self.tol) and self.tol > 0):
            raise ConfigInvalid("tolerance must be a positive number")
        self.out = Path(self.out)


@dataclass
class ScenarioResult:
    scenario: str
    params: dict
    passed: bool
    counts: dict
    max_residual: float
    files: list = field(default_factory=list)
    children: list = field(default_factory=list)

    def summary(self) -> dict:
        out = {"scenario": self.scenario, "params": _jsonable(self.params), "pass": self.passed,
               "counts": self.counts, "maxResidual": _num(self.max_residual)}
        if self.children:
            out["scenarios"] = [{"scenario": c.scenario, "pass": c.passed} for c in self.children]
        return out


def _num(x):
    x = float(x)
    return x if math.isfinite(x) else "inf"


def _jsonable(x):
    if isinstance(x, Fraction):
        return str(x)
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    return x


def load_config(path: str | Path | None) -> dict:
    if path is None:
        return {}
    try:
        data = json.loads(Path(path).read_text())
    except FileNotFoundError as e:
        raise ConfigInvalid(f"config file {path} not found") from e
    except json.JSONDecodeError as e:
        raise ConfigInvalid(f"config file {path} is not valid JSON: {e}") from e
    if not isinstance(data, dict):
        raise ConfigInvalid("config must be a JSON object")
    return data


def resolve_params(scenario: str, raw: Mapping) -> dict:
    """Defaults overlaid with the config; unknown keys are an error."""
    base = dict(DEFAULTS[scenario])
    unknown = set(raw) - set(base)
    if unknown:
        raise ConfigInvalid(f"unknown parameter(s) for {scenario}: {', '.join(sorted(unknown))}")
    base.update(raw)
    return base


def _int(params, key, lo=None, hi=None) -> int:
    v = params[key]
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigInvalid(f"{key} must be an integer")
    if (lo is not None and v < lo) or (hi is not None and v > hi):
        raise ConfigInvalid(f"{key} must lie in [{lo}, {hi}]")
    return v


def _int_list(params, key) -> list:
    v = params[key]
    if not isinstance(v, list) or not v or any(isinstance(x, bool) or not isinstance(x, int) for x in v):
        raise ConfigInvalid(f"{key} must be a nonempty list of integers")
    return v


def _beta_theta(params):
    try:
        return LogReal.parse(params["beta"]), parse_theta(params["theta"])
    except (ValueError, TypeError) as e:
        raise ConfigInvalid(f"bad beta/theta: {e}") from e


def _measure(params):
    beta, theta = _beta_theta(params)
    kind = params["measure"]
    try:
        if kind == "product":
            return make_product_conformal(beta, theta)
        if kind == "orbit":
            return make_orbit_measure(beta, theta)
        if kind == "bernoulli":
            return bernoulli_half(beta, theta)
    except (InvalidBeta, DivergentOrbitWeights, ValueError) as e:
        raise ConfigInvalid(str(e)) from e
    raise ConfigInvalid("measure must be 'product', 'orbit' or 'bernoulli'")


def _write(path: Path, text: str) -> Path:
    path.write_text(text)
    return path


# ---------------------------------------------------------------------------
# pipelines


def run_conformal(cfg: ScenarioConfig, params: dict) -> ScenarioResult:
    depth = _int(params, "depth", 1, 10)
    m = _measure(params)
    if params["kappa"]:
        m = pushforward_kappa(m)
    try:
        rep = check_conformal(m, depth, mode=cfg.mode, tol=cfg.tol)
    except AdditivityViolation as e:
        raise ConfigInvalid(str(e)) from e
    out = cfg.out
    files = [_write(out / "conformal-check.csv", rep.to_csv())]
    u, v = (float(x) for x in m.binding())
    lhs = [float(r.lhs) if cfg.mode == "numeric" else r.lhs.evaluate(u, v) for r in rep.rows]
    rhs = [float(r.rhs) if cfg.mode == "numeric" else r.rhs.evaluate(u, v) for r in rep.rows]
    files.append(plotting.lhs_rhs_scatter([float(x) for x in lhs], [float(x) for x in rhs],
                                          out / "conformal-check.png",
                                          f"m(tau C) vs e^(-beta chi) m, depth {depth}"))
    fails = len(rep.failures)
    return ScenarioResult("conformal-check", {**params, "mode": cfg.mode, "tol": cfg.tol}, rep.verdict,
                          {"rows": len(rep.rows), "failures": fails}, rep.max_residual, files)


def run_lift(cfg: ScenarioConfig, params: dict) -> ScenarioResult:
    depth = _int(params, "depth", 1, 8)
    slices = _int(params, "slices", 0, 50)
    try:
        lm = lift_measure(_measure(params))
    except NotConformal as e:
        raise ConfigInvalid(str(e)) from e
    rows = check_lift(lm, depth, slices)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["window", "symbols", "n", "generator", "pass"])
    per_slice: dict = {}
    for E, n, g, ok in rows:
        win = E.window
        w.writerow(["Omega" if win is None else f"[{win[0]},{win[1]}]", "".join(map(str, E.symbols)),
                    n, g, int(ok)])
        tally = per_slice.setdefault(n, [0, 0])
        tally[0 if ok else 1] += 1
    files = [_write(cfg.out / "lift-check.csv", buf.getvalue())]
    ns = sorted(per_slice)
    files.append(plotting.pass_counts([str(n) for n in ns], [per_slice[n][0] for n in ns],
                                      [per_slice[n][1] for n in ns], cfg.out / "lift-check.png",
                                      "lifted conformality rows per slice n"))
    fails = sum(1 for r in rows if not r[3])
    return ScenarioResult("lift-check", params, fails == 0, {"rows": len(rows), "failures": fails},
                          0.0 if fails == 0 else math.inf, files)


def run_tower(cfg: ScenarioConfig, params: dict) -> ScenarioResult:
    heights = _int_list(params, "heights")
    Ks = _int_list(params, "Ks")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["K", "cycle_length", "mass", "mass_without_overflow", "permutation", "kac", "increasing"])
    masses, ok_all, prev = [], True, None
    try:
        systems = [TowerSystem(tuple(heights), K) for K in Ks]
    except (GapViolation, ValueError) as e:
        raise ConfigInvalid(str(e)) from e
    for T in systems:
        mass = tower_mass(T)
        perm, kac = is_permutation(T), kac_check(T)
        inc = prev is None or mass > prev
        ok_all &= perm and kac and inc
        w.writerow([T.K, cycle_length(T), mass, tower_mass(T, include_overflow=False), int(perm), int(kac), int(inc)])
        masses.append(mass)
        prev = mass
    files = [_write(cfg.out / "tower.csv", buf.getvalue())]
    largest = systems[-1]
    files.append(_write(cfg.out / "tower-orbit.csv", orbit_csv(largest)))
    files.append(plotting.mass_by_K([T.K for T in systems], [float(m) for m in masses],
                                    cfg.out / "tower-mass.png", "tower mass by truncation K"))
    files.append(plotting.tower_levels([lev for _, lev in orbit(largest)], cfg.out / "tower-levels.png",
                                       f"levels along the cycle, K = {largest.K}"))
    return ScenarioResult("tower", params, ok_all, {"truncations": len(systems)}, 0.0, files)


def riesz_key(params: dict) -> str:
    return make_key("riesz-compare", {"heights": params["heights"], "K": params["K"]})


def riesz_oracle_values(T: TowerSystem) -> dict:
    """Autocorrelations for lags 0..L by orbit enumeration, and per-band deviation maxima."""
    L = cycle_length(T)
    R = RieszSpec(T.n)
    from .riesz import riesz_coefficient
    values = [koopman_autocorrelation(T, lag) for lag in range(L + 1)]
    bands: dict = {}
    for lag, k in enumerate(values):
        b = band_of(lag, R)
        bands[b] = max(bands.get(b, Fraction(0)), abs(k - riesz_coefficient(lag, R)))
    return {"values": values, "cycle_length": L, "thresholds": bands}


def run_riesz(cfg: ScenarioConfig, params: dict) -> ScenarioResult:
    heights = _int_list(params, "heights")
    K = _int(params, "K", 1, len(heights))
    try:
        T = TowerSystem(tuple(heights), K)
    except (GapViolation, ValueError) as e:
        raise ConfigInvalid(str(e)) from e
    store = cfg.store or OracleStore()
    key = riesz_key(params)
    if cfg.oracle:
        ov = riesz_oracle_values(T)
        try:
            store.record(key, ov["values"], params={"heights": heights, "K": K},
                         cycle_length=ov["cycle_length"], thresholds=ov["thresholds"],
                         probe="indicator of the tower base")
        except KeyExists as e:
            raise ConfigInvalid(f"oracle key {key!r} already recorded; records are immutable") from e
    rec = store.get(key)
    L = int(rec["cycle_length"])
    lags = params["lags"] if params["lags"] is not None else list(range(L + 1))
    if not isinstance(lags, list) or any(not isinstance(x, int) or abs(x) > L for x in lags):
        raise ConfigInvalid(f"lags must be integers with |lag| <= {L}")
    thresholds = {b: Fraction(t) for b, t in rec["thresholds"].items()}
    rep = compare_spectra(T, lags, thresholds, oracle_key=key)
    stored = [Fraction(x) for x in rec["values"]]
    reproduced = [k == stored[abs(lag)] for lag, k in zip(rep.lags, rep.koopman)]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["lag", "band", "koopman", "oracle", "riesz", "deviation", "threshold", "pass"])
    R = RieszSpec(T.n)
    for (lag, k, r, d, ok), same in zip(rep.rows(), reproduced):
        b = band_of(lag, R)
        w.writerow([lag, b, k, stored[abs(lag)], r, d, thresholds.get(b, ""), int(ok and same)])
    files = [_write(cfg.out / "riesz-compare.csv", buf.getvalue())]
    files.append(plotting.spectra(rep.lags, [float(x) for x in rep.koopman], [float(x) for x in rep.riesz],
                                  cfg.out / "riesz-compare.png",
                                  f"base autocorrelation vs Riesz coefficients, n = {T.n}",
                                  support=R.support_radius))
    passed = rep.verdict and all(reproduced)
    counts = {"lags": len(lags), "threshold_failures": sum(not p for p in rep.passed),
              "oracle_mismatches": sum(not s for s in reproduced)}
    return ScenarioResult("riesz-compare", {**params, "oracle_key": key}, passed, counts,
                          float(rep.max_deviation), files)


def _build(spec: dict, beta) -> iso.IsoRep:
    kind = spec.get("kind")
    try:
        if kind == "theta1":
            return iso.build_theta1_rep(spec["f"], spec["N"], beta, spec.get("weight", 1),
                                        spec.get("cyclic", False))
        if kind == "staircase":
            return iso.build_staircase_rep(spec["a"], spec["N"], spec.get("start", 0), beta)
        if kind == "operator2":
            d = len(spec["classes"])
            maker = {"koopman": iso.koopman_unitary, "haar": iso.haar_unitary}.get(spec.get("unitary", "koopman"))
            if maker is None:
                raise ConfigInvalid("unitary must be 'koopman' or 'haar'")
            if "seed" not in spec:
                raise ConfigInvalid("operator2 builds need an explicit seed")
            U = maker(d, int(spec["seed"]))
            return iso.build_operator2_rep(U, iso.diagonal_partition(spec["classes"]), spec["N"], beta)
    except (KeyError, TypeError) as e:
        raise ConfigInvalid(f"incomplete build description {spec!r}: {e}") from e
    except (iso.SlopeViolation, iso.NotDecreasing, iso.PartitionInvalid, ValueError) as e:
        raise ConfigInvalid(str(e)) from e
    raise ConfigInvalid(f"unknown build kind {kind!r}")


def verify_build(rep: iso.IsoRep, grid: int) -> list:
    """All identities that apply to the build, as CheckRows."""
    rows = iso.check_isometry(rep) + iso.check_commutation(rep, grid)
    if rep.model is None:
        return rows
    rows += iso.check_covariance(rep, grid)
    ev = iso.eigenvector_xi(rep)
    rows += iso.check_eigen_relation(rep, ev.values)
    rows += iso.check_gauge(rep)
    if rep.model.kind == "theta1":
        fam = iso.coherent_from_vector(rep, ev.values, iso.p_grid(grid))
        rows += iso.check_coherence(rep, fam)
        rows += iso.check_conformality_relation(rep, fam)
        rows += iso.measure_from_eigenvector(rep, fam, strict=False).checks
    return rows


FAMILIES = ("isometry", "commutation", "ranges", "covariance", "eigen", "gauge", "coherence",
            "conformality", "layers")


def identity_family(identity: str) -> str:
    """Coarse grouping of check identities for the residual figure."""
    if identity.startswith("E_a E_b"):
        return "ranges"
    if "V1 V2" in identity:
        return "commutation"
    if "^* V" in identity and "= 1" in identity:
        return "isometry"
    if "R(E" in identity:
        return "covariance"
    if identity.startswith("V_") and "xi" in identity:
        return "eigen"
    if identity.startswith("U_"):
        return "gauge"
    if identity.startswith("mu"):
        return "layers"
    if "^perp V_" in identity:
        return "conformality"
    return "coherence"


def purity_key(spec: dict) -> str:
    return make_key("isometry-verify/purity", {"a": spec["a"], "N": spec["N"], "steps": spec["steps"]})


def run_isometry(cfg: ScenarioConfig, params: dict) -> ScenarioResult:
    beta = params["beta"]
    grid = _int(params, "grid", 1, 4)
    builds = params["builds"]
    if not isinstance(builds, list) or not builds:
        raise ConfigInvalid("builds must be a nonempty list")
    lines = []
    worst: dict = {}
    passed = True
    for spec in builds:
        name = spec.get("name", spec.get("kind", "build"))
        rep = _build(spec, beta)
        for r in verify_build(rep, grid):
            ok = r.passed if cfg.mode == "exact" or r.residual == 0 else r.residual <= cfg.tol
            lines.append([name, r.identity, r.margin, repr(r.residual), int(ok)])
            key = (name, identity_family(r.identity))
            worst[key] = max(worst.get(key, 0.0), r.residual)
            passed &= ok
    counts = {"builds": len(builds), "rows": len(lines), "failures": sum(1 for x in lines if not x[4])}
    store = cfg.store or OracleStore()
    pur = params.get("purity")
    if pur:
        rep = iso.build_staircase_rep(pur["a"], pur["N"], 0, beta)
        value = iso.purity_defect(rep, pur["steps"])
        key = purity_key(pur)
        if cfg.oracle:
            try:
                store.record(key, [value], params=pur)
            except KeyExists as e:
                raise ConfigInvalid(f"oracle key {key!r} already recorded; records are immutable") from e
        ref = float(store.get(key)["values"][0])
        ok = abs(value - ref) <= cfg.tol
        lines.append(["purity", f"normalized HS norm of E_({pur['steps']},{pur['steps']}) vs oracle",
                      key, repr(abs(value - ref)), int(ok)])
        passed &= ok
        counts["purity_defect"] = value
    probe = params.get("probe")
    if probe:
        layers = []
        for K in probe["Ks"]:
            T = TowerSystem(tuple(probe["heights"]), K)
            trep = iso.build_tower_rep(T, probe["N"], 0)
            layers.append((T, iso.invariant_layers(trep, [(0, 0), (1, 0)])))
        res = iso.one_conformality_probe([lm for _, lm in layers])
        for (T, _), mass in zip(layers, res["masses"]):
            same = mass == tower_mass(T)
            lines.append(["probe", f"mu(X-bar minus (X-bar + e1)) at K = {T.K} equals tower mass",
                          str(mass), repr(float(abs(mass - tower_mass(T)))), int(same)])
            passed &= same
        grow = res["trend"] == "growing"
        lines.append(["probe", "layer mass strictly increasing in K", res["trend"], "0.0", int(grow)])
        passed &= grow
        counts["probe_masses"] = [str(m) for m in res["masses"]]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["build", "identity", "margin", "max_residual", "pass"])
    w.writerows(lines)
    files = [_write(cfg.out / "isometry-verify.csv", buf.getvalue())]
    names = list(dict.fromkeys(k[0] for k in worst))
    fams = [f for f in FAMILIES if any(k[1] == f for k in worst)]
    cells = {(names.index(b), fams.index(f)): v for (b, f), v in worst.items()}
    files.append(plotting.residual_grid(names, fams, cells, cfg.out / "isometry-verify.png",
                                        "operator identity residuals"))
    return ScenarioResult("isometry-verify", {**params, "mode": cfg.mode, "tol": cfg.tol}, passed, counts,
                          max(worst.values(), default=0.0), files)


PIPELINES: dict = {
    "conformal-check": run_conformal,
    "lift-check": run_lift,
    "tower": run_tower,
    "riesz-compare": run_riesz,
    "isometry-verify": run_isometry,
}


def _emit(res: ScenarioResult, out: Path) -> ScenarioResult:
    path = out / f"{res.scenario}.json"
    path.write_text(json.dumps(res.summary(), indent=1, sort_keys=True) + "\n")
    res.files.append(path)
    return res


def run_scenario(cfg: ScenarioConfig, raw: Mapping | None = None) -> ScenarioResult:
    """Run one scenario (or all of them for full-report) and write CSV, JSON and PNG reports."""
    raw = dict(raw or {})
    cfg.out.mkdir(parents=True, exist_ok=True)
    if cfg.scenario != "full-report":
        params = resolve_params(cfg.scenario, raw)
        return _emit(PIPELINES[cfg.scenario](cfg, params), cfg.out)
    unknown = set(raw) - set(PIPELINES)
    if unknown:
        raise ConfigInvalid(f"full-report sections must be scenario names, got {', '.join(sorted(unknown))}")
    children = []
    for name, fn in PIPELINES.items():
        sub = ScenarioConfig(name, {}, cfg.out / name, cfg.mode, cfg.tol, cfg.oracle, cfg.store)
        sub.out.mkdir(parents=True, exist_ok=True)
        section = raw.get(name, {})
        if not isinstance(section, dict):
            raise ConfigInvalid(f"section {name} must be an object")
        children.append(_emit(fn(sub, resolve_params(name, section)), sub.out))
    res = ScenarioResult("full-report", {c.scenario: c.params for c in children},
                         all(c.passed for c in children),
                         {"scenarios": len(children), "failed": sum(not c.passed for c in children)},
                         max((c.max_residual for c in children), default=0.0), children=children)
    return _emit(res, cfg.out)


def exit_code(res: ScenarioResult) -> int:
    return 0 if res.passed else 1
