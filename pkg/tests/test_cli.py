import csv
import json

import pytest

from wienercap.capacity import clear_cache
from wienercap.cli import main
from wienercap.runs import config_hash, load_config


def only_run(root):
    dirs = [p for p in root.iterdir() if p.is_dir()]
    assert len(dirs) == 1
    return dirs[0]


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def run(tmp_path, *argv):
    code = main([*argv, "--out", str(tmp_path)])
    return code, only_run(tmp_path)


# -- entropy ---------------------------------------------------------------------------


def test_entropy_counts(tmp_path):
    code, d = run(tmp_path, "entropy", "--set", "interval:0:1", "--eps", "0.25")
    assert code == 0
    assert read_csv(d / "profile.csv") == [{"eps": "0.25", "K": "5"}]
    assert not (d / "dimension.json").exists()
    assert (d / "profile.csv").read_bytes().endswith(b"\r\n")


def test_entropy_cantor_slope(tmp_path):
    code, d = run(tmp_path, "entropy", "--set", "cantor:2:0.3333333333333333:10", "--eps-geom", "0.1:1e-4:0.5")
    assert code == 0
    dim = json.loads((d / "dimension.json").read_text())
    assert abs(dim["slope"] - 0.6309) < 0.05 and dim["exact"] is True


def test_entropy_needs_eps(tmp_path):
    assert main(["entropy", "--out", str(tmp_path)]) == 2


# -- manifests and directories -----------------------------------------------------------


def test_fresh_directory_and_manifest(tmp_path):
    a = main(["entropy", "--set", "point:0.5", "--eps", "0.1", "--out", str(tmp_path)])
    b = main(["entropy", "--set", "point:0.5", "--eps", "0.1", "--out", str(tmp_path)])
    assert a == b == 0
    dirs = sorted(p for p in tmp_path.iterdir())
    assert len(dirs) == 2 and dirs[0].name.endswith("-001") and dirs[1].name.endswith("-002")
    m = json.loads((dirs[0] / "manifest.json").read_text())
    assert m["schema_version"] == 1 and m["status"] == "ok"
    assert m["config_hash"] == config_hash(m["config"])
    assert m["outputs"] == ["profile.csv"]
    assert "entropy_profile" in m["timings"]
    assert load_config(dirs[0] / "manifest.json") == m["config"]


def test_env_var_sets_default_root(tmp_path, monkeypatch):
    monkeypatch.setenv("WIENERCAP_OUT", str(tmp_path / "env"))
    assert main(["entropy", "--set", "point:0", "--eps", "0.1"]) == 0
    assert len(list((tmp_path / "env").iterdir())) == 1


def test_tampered_manifest_rejected(tmp_path):
    _, d = run(tmp_path, "entropy", "--set", "point:0", "--eps", "0.1")
    m = json.loads((d / "manifest.json").read_text())
    m["config"]["eps"] = [0.2]
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(m))
    assert main(["entropy", "--config", str(bad), "--out", str(tmp_path / "x")]) == 2


def test_config_for_other_command_rejected(tmp_path):
    _, d = run(tmp_path, "entropy", "--set", "point:0", "--eps", "0.1")
    assert main(["audit", "--config", str(d / "manifest.json"), "--out", str(tmp_path / "x")]) == 2


@pytest.mark.parametrize(
    "argv",
    [
        ["entropy", "--set", "interval:1:0", "--eps", "0.1"],
        ["entropy", "--set", "blob:3", "--eps", "0.1"],
        ["entropy", "--eps", "-1"],
        ["capacity", "--r", "1.5"],
        ["liltest", "--H", "bessel:1", "--mode", "qs"],
        ["liltest", "--H", "hnu:3"],
        ["audit", "--n", "100"],
        ["simulate", "--workers", "0"],
    ],
)
def test_invalid_config_exit_2(tmp_path, argv):
    assert main([*argv, "--out", str(tmp_path)]) == 2


# -- liltest -------------------------------------------------------------------------------


@pytest.mark.parametrize(
    "argv, verdict",
    [
        (["--H", "hnu:5.5", "--mode", "qs"], "converges"),
        (["--H", "hnu:3", "--mode", "qs"], "diverges"),
        (["--H", "hnu:3", "--mode", "as"], "converges"),
        (["--H", "hnu:6", "--set", "interval:0:1"], "converges"),
        (["--H", "hnu:4", "--set", "cantor:2:0.3333:8"], "converges"),
    ],
)
def test_liltest_verdicts(tmp_path, argv, verdict):
    code, d = run(tmp_path, "liltest", *argv)
    assert code == 0
    v = json.loads((d / "verdict.json").read_text())
    assert v["verdict"] == verdict
    assert read_csv(d / "partials.csv")


def test_liltest_cantor_checkpoints_respect_resolution(tmp_path):
    code, d = run(tmp_path, "liltest", "--H", "hnu:4", "--set", "cantor:2:0.3333:8", "--loglog", "1,2,30")
    assert code == 0
    assert [r["loglog_T"] for r in read_csv(d / "partials.csv")] == ["1.0", "2.0"]


def test_liltest_tabulated_is_undetermined(tmp_path):
    code, d = run(tmp_path, "liltest", "--H", "tabulated:1:1.2,1000:0.6,1e8:0.5", "--mode", "as")
    assert code == 3
    assert json.loads((d / "verdict.json").read_text())["verdict"] == "undetermined"
    assert json.loads((d / "manifest.json").read_text())["status"] == "undetermined"


# -- audit and smallball -----------------------------------------------------------------------


def test_audit_key_ee(tmp_path):
    code, d = run(tmp_path, "audit", "--ineq", "key-ee", "--n", "100:10000")
    assert code == 0
    s = json.loads((d / "summary.json").read_text())
    assert s["violations"] == 0 and s["fitted_a"] == pytest.approx(2.5657, abs=1e-4)
    assert {r["inequality"] for r in read_csv(d / "audit.csv")} <= {"key-ee-lower", "key-ee-upper"}


def test_smallball_table(tmp_path):
    code, d = run(tmp_path, "smallball", "--r", "0.5,1.0")
    assert code == 0
    rows = read_csv(d / "sigma.csv")
    assert float(rows[1]["sigma"]) == pytest.approx(0.3708, abs=1e-4)


def test_smallball_compare_mc(tmp_path):
    argv = ["smallball", "--r", "1.0", "--compare-mc", "--reps", "20000", "--k", "9", "--seed", "3"]
    code, d = run(tmp_path, *argv)
    assert code == 0
    row = read_csv(d / "mc_compare.csv")[0]
    assert row["agrees"] == "true"
    assert "continuity" in json.loads((d / "mc_note.json").read_text())["bias_note"]


# -- capacity and simulate ---------------------------------------------------------------------


def test_capacity_mc_cap_exit_4(tmp_path):
    code, d = run(tmp_path, "capacity", "--set", "interval:0:1", "--r", "0.5", "--eps-s", "1e-5", "--reps", "200")
    assert code == 4
    assert json.loads((d / "manifest.json").read_text())["status"] == "mc_cap"


def test_capacity_replay_is_byte_identical_across_workers(tmp_path):
    argv = ["capacity", "--set", "cantor:2:0.3333333333333333:6", "--r", "0.7,0.8"]
    argv += ["--reps", "2000", "--k", "7", "--block-size", "500", "--seed", "9"]
    code, first = run(tmp_path / "a", *argv)
    assert code == 0
    clear_cache()
    again = main(["capacity", "--config", str(first / "manifest.json"), "--workers", "3", "--out", str(tmp_path / "b")])
    assert again == 0
    second = only_run(tmp_path / "b")
    for name in ("capacity.csv", "band.json"):
        assert (first / name).read_bytes() == (second / name).read_bytes()
    m1 = json.loads((first / "manifest.json").read_text())
    m2 = json.loads((second / "manifest.json").read_text())
    assert m1["config_hash"] == m2["config_hash"] and m2["runtime"] == {"workers": 3}


def test_simulate(tmp_path):
    code, d = run(tmp_path, "simulate", "--s", "0,0.5", "--k", "5", "--seed", "4")
    assert code == 0
    lines = (d / "paths.csv").read_text().splitlines()
    assert len(lines) == 1 + 2 * 33
    sups = read_csv(d / "sup_norms.csv")
    assert [r["s"] for r in sups] == ["0.0", "0.5"] and all(float(r["sup_norm"]) > 0 for r in sups)
    assert "paths.csv" in json.loads((d / "manifest.json").read_text())["outputs"]
