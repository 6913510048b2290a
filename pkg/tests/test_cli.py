import csv
import json
import math

import numpy as np
import pytest

from test_geo import TARGET
from xfpt.cli import run
from xfpt.geo import Disc, GeodesicScene
from xfpt.scenario import ScenarioSpec, load_spec

PURE = {"kind": "interval_pure", "l": 1.0, "x0": 0.45, "N_ladder": [1, 10, 100, 1000],
        "trials": 200_000, "seed": 3}


def _write(tmp_path, data, name="cfg.json"):
    path = tmp_path / name
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data))
    return path


def _read(path):
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# provenance: config_sha256=")
    return list(csv.DictReader(lines[1:]))


def _run(tmp_path, sub, data, *extra):
    out = tmp_path / sub
    cfg = _write(tmp_path, data, f"{sub}.json")
    code = run([sub, "--config", str(cfg), "--out", str(out), *extra])
    return code, out


def test_dist(tmp_path):
    code, out = _run(tmp_path, "dist", PURE)
    assert code == 0
    rows = _read(out / "dist.csv")
    assert set(rows[0]) == {"t", "F", "log_F", "F_0", "log_F_0", "F_1", "log_F_1"}
    assert float(rows[-1]["F"]) == pytest.approx(1.0, abs=1e-12)
    assert "tail_mass=" in (out / "dist.csv").read_text().splitlines()[0]


def test_mc_then_extreme_agree(tmp_path):
    code, out = _run(tmp_path, "extreme", PURE)
    assert code == 0
    quad = {(r["k"], float(r["N"])): float(r["p"]) for r in _read(out / "extreme.csv")}
    assert set(_read(out / "extreme.csv")[0]) == {"kind", "k", "N", "p", "log_p", "method"}
    code, out = _run(tmp_path, "mc", PURE)
    assert code == 0
    mc = _read(out / "mc.csv")
    misses = set()
    for r in mc:
        if r["k"] == "inf":
            assert float(r["p"]) == 0.0
            continue
        if not float(r["ci_low"]) <= quad[(r["k"], float(r["N"]))] <= float(r["ci_high"]):
            misses.add(r["N"])
    # with two targets the k = 0 and k = 1 cells of one N are the same
    # Bernoulli count, so there are four independent 95% intervals; one miss
    # is within statistical slack
    assert len(misses) <= 1


def test_output_determinism(tmp_path, monkeypatch):
    _, a = _run(tmp_path / "a", "mc", PURE)
    _, b = _run(tmp_path / "b", "mc", PURE, "--threads", "2")
    monkeypatch.setenv("XFPT_THREADS", "3")
    _, c = _run(tmp_path / "c", "mc", PURE)
    assert (a / "mc.csv").read_bytes() == (b / "mc.csv").read_bytes() == (c / "mc.csv").read_bytes()
    _, d = _run(tmp_path / "d", "mc", PURE, "--seed", "4")
    assert (a / "mc.csv").read_bytes() != (d / "mc.csv").read_bytes()
    assert "seed=4" in (d / "mc.csv").read_text().splitlines()[0]


@pytest.mark.parametrize("x0", [0.40, 0.45])
def test_figure_columns_and_relative_error(tmp_path, x0):
    data = dict(PURE, x0=x0, N_ladder=[10**j for j in range(1, 9)])
    code, out = _run(tmp_path, "figure", data)
    assert code == 0
    rows = _read(out / "figure.csv")
    assert list(rows[0])[:4] == ["N", "p_quad", "p_asym", "rel_err"]
    for r in rows:
        pq, pa = float(r["p_quad"]), float(r["p_asym"])
        assert float(r["rel_err"]) == pytest.approx(abs(pq - pa) / pq, rel=1e-9)
    assert float(rows[-1]["rel_err"]) < float(rows[2]["rel_err"])


def test_asymptotic(tmp_path):
    code, out = _run(tmp_path, "asymptotic", PURE)
    assert code == 0
    rows = _read(out / "asymptotic.csv")
    assert [float(r["N"]) for r in rows] == [10, 100, 1000]
    assert float(rows[0]["beta"]) == pytest.approx((11 / 9) ** 2)
    assert rows[0]["proven"] == "true"


def test_bound_without_obstacles_is_euclidean(tmp_path):
    scene = GeodesicScene(start=((0.0, 0.0),), targets=(TARGET, Disc((0.0, -5.0), 1.0)))
    code, out = _run(tmp_path, "bound", {"kind": "geodesic_scene", "scene": scene.to_dict()})
    assert code == 0
    rows = _read(out / "bound.csv")
    assert [float(r["L_k"]) for r in rows] == [2.5, 4.0]
    assert float(rows[1]["exponent"]) == pytest.approx(1 - (4 / 2.5) ** 2)
    assert float(rows[1]["C_k"]) == pytest.approx(4.0)


def test_fit(tmp_path):
    code, out = _run(tmp_path, "fit", {"kind": "interval_pure", "l": 1.0, "x0": 0.45})
    assert code == 0
    rows = _read(out / "fit.csv")
    assert {"target", "A_fit", "p_fit", "C_fit", "A_cat", "p_cat", "C_cat", "residual"} <= set(rows[0])
    assert float(rows[0]["C_fit"]) == pytest.approx(float(rows[0]["C_cat"]), rel=0.02)


def test_verify_p1_defaults(tmp_path):
    out = tmp_path / "p1"
    assert run(["verify-p1", "--out", str(out)]) == 0
    rows = _read(out / "p1.csv")
    assert 0.85 <= float(rows[-1]["ratio"]) <= 1.15
    cfg = _write(tmp_path, {"N_list": [1000, 10000], "delta": 0.25})
    assert run(["verify-p1", "--config", str(cfg), "--out", str(out)]) == 0
    assert len(_read(out / "p1.csv")) == 2


def test_dump_config_round_trip(tmp_path, capsys):
    cfg = _write(tmp_path, {"kind": "interval_robin", "l": 1.0, "x0": 0.45, "gamma0": 2})
    assert run(["dist", "--config", str(cfg), "--dump-config"]) == 0
    dumped = capsys.readouterr().out
    again = _write(tmp_path, json.loads(dumped), "again.json")
    assert load_spec(again) == load_spec(cfg)
    assert run(["dist", "--config", str(again), "--dump-config"]) == 0
    assert capsys.readouterr().out == dumped


@pytest.mark.parametrize("data,needle", [
    ({"kind": "interval_pure", "l": 1.0}, "x0"),
    ({"kind": "interval_pure", "l": 1.0, "x0": 0.5, "colour": 1}, "colour"),
    ({"kind": "interval_robin", "l": 1.0, "x0": 0.5, "gamma0": "x"}, "gamma0"),
])
def test_config_errors_exit_2(tmp_path, capsys, data, needle):
    code, _ = _run(tmp_path, "extreme", data)
    assert code == 2
    assert needle in capsys.readouterr().err


def test_missing_and_malformed_files(tmp_path):
    assert run(["dist", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path)]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    assert run(["dist", "--config", str(bad), "--out", str(tmp_path)]) == 2
    assert run(["dist", "--config", str(bad), "--threads", "0"]) == 2


def test_fit_resolution_error_exit_3(tmp_path, capsys):
    data = {"kind": "interval_pure", "l": 1.0, "x0": 0.45, "grid": {"t_min": 0.02}}
    code, _ = _run(tmp_path, "fit", data)
    assert code == 3
    assert "hint" in capsys.readouterr().err


def test_probability_columns_in_log_form(tmp_path):
    data = dict(PURE, N_ladder=[10**8])
    code, out = _run(tmp_path, "extreme", data)
    rows = _read(out / "extreme.csv")
    far = [r for r in rows if r["k"] == "1"][0]
    assert math.log(float(far["p"])) == pytest.approx(float(far["log_p"]), rel=1e-12)
