import csv
import json
from fractions import Fraction
from pathlib import Path

import pytest

from kmslab.cli import main
from kmslab.odometer import TowerSystem
from kmslab.oracle import DEFAULT_STORE, ConfigInvalid, KeyExists, OracleStore, make_key, record_oracle
from kmslab.riesz import autocorrelation_sequence
from kmslab.symbolic import cylinder_count


def write_config(tmp_path, data, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(data))
    return str(p)


def summary(out, scenario):
    return json.loads((Path(out) / f"{scenario}.json").read_text())


# oracle store


def test_record_and_reload(tmp_path):
    store = OracleStore(tmp_path / "o.json")
    T = TowerSystem((1, 4, 13), 3)
    key = make_key("riesz-compare", {"heights": [1, 4, 13], "K": 3})
    rec = store.record(key, autocorrelation_sequence(T), params={"heights": [1, 4, 13], "K": 3},
                       cycle_length=40, command="test", date="2026-01-01")
    assert rec["values"][1] == "1/2" and rec["cycle_length"] == 40
    again = OracleStore(tmp_path / "o.json").get(key)
    assert [Fraction(x) for x in again["values"]] == autocorrelation_sequence(T)
    assert again["provenance"] == {"command": "test", "date": "2026-01-01"}


def test_duplicate_key(tmp_path):
    store = OracleStore(tmp_path / "o.json")
    store.record("k", [1], command="c", date="d")
    with pytest.raises(KeyExists):
        store.record("k", [2])
    with pytest.raises(KeyExists):
        record_oracle("k", [3], store=OracleStore(tmp_path / "o.json"))


def test_empty_values(tmp_path):
    with pytest.raises(ConfigInvalid):
        OracleStore(tmp_path / "o.json").record("k", [])


def test_missing_key(tmp_path):
    with pytest.raises(ConfigInvalid):
        OracleStore(tmp_path / "o.json").get("absent")


def test_committed_store_has_acceptance_keys():
    keys = OracleStore().keys()
    assert "riesz-compare/K=3;heights=1,4,13" in keys
    assert any(k.startswith("isometry-verify/purity/") for k in keys)
    for k in keys:
        prov = OracleStore().get(k)["provenance"]
        assert prov["command"].startswith("lab ") and "--oracle" in prov["command"]


# command line


def test_conformal_check_depth6(tmp_path):
    out = tmp_path / "r"
    cfg = write_config(tmp_path, {"beta": "ln2", "theta": 1, "depth": 6})
    assert main(["conformal-check", "--config", cfg, "--out", str(out)]) == 0
    s = summary(out, "conformal-check")
    assert s["pass"] is True and s["counts"]["rows"] == cylinder_count(6) == 32738
    assert set(s) >= {"scenario", "params", "pass", "counts", "maxResidual"}
    with open(out / "conformal-check.csv") as fh:
        assert sum(1 for _ in csv.reader(fh)) == 32738 + 1
    assert (out / "conformal-check.png").stat().st_size > 0


def test_failing_check_exits_one(tmp_path):
    cfg = write_config(tmp_path, {"measure": "bernoulli", "depth": 2})
    assert main(["conformal-check", "--config", cfg, "--out", str(tmp_path / "r")]) == 1
    assert summary(tmp_path / "r", "conformal-check")["pass"] is False


def test_numeric_mode(tmp_path):
    cfg = write_config(tmp_path, {"beta": "ln3", "theta": "1/2", "depth": 4})
    assert main(["conformal-check", "--config", cfg, "--mode", "numeric", "--tol", "1e-12",
                 "--out", str(tmp_path / "r")]) == 0


@pytest.mark.parametrize("args, config", [
    (["conformal-check", "--mode", "numeric", "--tol", "0"], None),
    (["conformal-check"], {"depth": 6, "colour": "red"}),
    (["conformal-check"], {"beta": 0}),
    (["tower"], {"heights": [1, 3]}),
    (["lift-check"], {"measure": "bernoulli"}),
])
def test_invalid_configs_exit_two(tmp_path, args, config):
    extra = ["--config", write_config(tmp_path, config)] if config is not None else []
    assert main(args + extra + ["--out", str(tmp_path / "r")]) == 2


def test_missing_config_file(tmp_path):
    assert main(["tower", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path / "r")]) == 2


def test_riesz_compare_missing_oracle_key(tmp_path):
    cfg = write_config(tmp_path, {"heights": [1, 4, 13, 40], "K": 4})
    assert main(["riesz-compare", "--config", cfg, "--out", str(tmp_path / "r")]) == 2


def test_oracle_pass_into_fresh_store(tmp_path):
    store = tmp_path / "o.json"
    cfg = write_config(tmp_path, {"heights": [1, 4, 13, 40], "K": 4})
    base = ["riesz-compare", "--config", cfg, "--store", str(store), "--out", str(tmp_path / "r")]
    assert main(base + ["--oracle"]) == 0
    assert main(base) == 0
    assert main(base + ["--oracle"]) == 2  # records are immutable
    rec = OracleStore(store).get("riesz-compare/K=4;heights=1,4,13,40")
    assert rec["cycle_length"] == 121


def test_riesz_compare_against_committed_record(tmp_path):
    assert main(["riesz-compare", "--out", str(tmp_path / "r")]) == 0
    s = summary(tmp_path / "r", "riesz-compare")
    assert s["counts"] == {"lags": 41, "threshold_failures": 0, "oracle_mismatches": 0}


def test_committed_store_untouched_by_runs(tmp_path):
    before = DEFAULT_STORE.read_bytes()
    main(["riesz-compare", "--out", str(tmp_path / "r")])
    assert DEFAULT_STORE.read_bytes() == before


def test_reports_are_byte_identical(tmp_path):
    for scenario in ("tower", "riesz-compare", "lift-check"):
        a, b = tmp_path / f"{scenario}-a", tmp_path / f"{scenario}-b"
        cfg = write_config(tmp_path, {"depth": 3, "slices": 2} if scenario == "lift-check" else {})
        assert main([scenario, "--config", cfg, "--out", str(a)]) == 0
        assert main([scenario, "--config", cfg, "--out", str(b)]) == 0
        names = sorted(p.name for p in a.iterdir())
        assert names == sorted(p.name for p in b.iterdir())
        for n in names:
            assert (a / n).read_bytes() == (b / n).read_bytes(), n


def test_full_report_default(tmp_path):
    out = tmp_path / "full"
    assert main(["full-report", "--out", str(out)]) == 0
    s = summary(out, "full-report")
    assert s["pass"] is True
    assert [c["scenario"] for c in s["scenarios"]] == [
        "conformal-check", "lift-check", "tower", "riesz-compare", "isometry-verify"]
    for c in s["scenarios"]:
        sub = out / c["scenario"]
        assert (sub / f"{c['scenario']}.json").exists()
        assert any(p.suffix == ".png" for p in sub.iterdir())


def test_full_report_rejects_unknown_section(tmp_path):
    cfg = write_config(tmp_path, {"nonsense": {}})
    assert main(["full-report", "--config", cfg, "--out", str(tmp_path / "r")]) == 2
