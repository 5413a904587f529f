import hashlib
import json
import math
import os
import re

import numpy as np
import pytest
import yaml

import hypflow.diagnostics as diag
from hypflow.cli import main
from hypflow.config import VERSION, parse_config, serialize_config
from hypflow.errors import ConfigurationError

MINIMAL = f"""
version: {VERSION}
n: 2
initial: {{family: sphere, r0: 1.0}}
step: {{t_end: 10.0}}
"""


def write_config(tmp_path, name="c.yaml", **sections):
    doc = {
        "version": VERSION,
        "n": 2,
        "model": "polar",
        "curvature": {"kind": "mean"},
        "grid": {"layout": "axisym", "N": 41},
        "initial": {"family": "sphere", "r0": 1.0},
        "step": {"t_end": 1.0},
    }
    doc.update(sections)
    path = tmp_path / name
    path.write_text(yaml.safe_dump(doc))
    return str(path)


def sha(path):
    return hashlib.sha256(open(path, "rb").read()).hexdigest()


# parsing


def test_minimal_config_is_valid():
    cfg = parse_config(MINIMAL)
    assert cfg.n == 2 and cfg.r0 == 1.0 and cfg.t_end == 10.0
    assert cfg.model == "polar" and cfg.layout == "axisym" and cfg.N == 201


def test_n_one_rejected():
    with pytest.raises(ConfigurationError, match="n must be >= 2"):
        parse_config(MINIMAL.replace("n: 2", "n: 1"))


def test_ball_radius_out_of_range():
    with pytest.raises(ConfigurationError, match=r"\(0, 2\)"):
        parse_config(MINIMAL.replace("r0: 1.0", "r0: 2.5") + "model: ball\n")


def test_all_violations_reported():
    text = MINIMAL.replace("n: 2", "n: 1").replace("r0: 1.0", "r0: -1.0").replace("t_end: 10.0", "t_end: -3")
    with pytest.raises(ConfigurationError) as info:
        parse_config(text + "grid: {layout: hex}\n")
    assert len(info.value.violations) >= 4


def test_unknown_keys_strict_and_lenient(caplog):
    text = MINIMAL + "colour: blue\nstep2: {}\n"
    with pytest.raises(ConfigurationError, match="colour"):
        parse_config(text, strict=True)
    cfg = parse_config(text, strict=False)
    assert cfg.n == 2
    assert "colour" in caplog.text


def test_missing_version_and_file():
    with pytest.raises(ConfigurationError, match="version"):
        parse_config(MINIMAL.replace(f"version: {VERSION}", "version: 0"))
    with pytest.raises(ConfigurationError, match="not found"):
        parse_config("/no/such/config.yaml")


def test_sigma_k_needs_k():
    with pytest.raises(ConfigurationError, match="curvature.k"):
        parse_config(MINIMAL + "curvature: {kind: sigma_k}\n")
    assert parse_config(MINIMAL + "curvature: {kind: sigma_k, k: 2}\n").curvature_function().k == 2


def test_latlong_constraints():
    text = MINIMAL.replace("family: sphere", "family: latlong_perturbed") + "grid: {layout: latlong, ntheta: 16, nlambda: 32}\n"
    text = text.replace("r0: 1.0}", "r0: 1.0, coefficients: {'2,1': 0.01}}")
    cfg = parse_config(text)
    assert cfg.coefficients == {(2, 1): 0.01}
    with pytest.raises(ConfigurationError):
        parse_config(text.replace("n: 2", "n: 3"))
    with pytest.raises(ConfigurationError):
        parse_config(text.replace("'2,1'", "'5,1'"))


@pytest.mark.parametrize(
    "extra",
    [
        "",
        "model: ball\ncurvature: {kind: geometric}\ndiagnostics: {rates: [{quantity: umbil_deficit, window: [4, 10], expect: [-1.1, -0.45]}]}\n",
        "grid: {layout: latlong, ntheta: 16, nlambda: 32}\n",
    ],
)
def test_round_trip(extra):
    cfg = parse_config(MINIMAL + extra)
    again = parse_config(serialize_config(cfg))
    assert again == cfg
    assert serialize_config(again) == serialize_config(cfg)


def test_round_trip_with_coefficients():
    text = MINIMAL.replace("family: sphere", "family: axisym_perturbed").replace("r0: 1.0}", "r0: 1.0, coefficients: {2: 0.05, 3: 0.01}}")
    cfg = parse_config(text)
    assert parse_config(serialize_config(cfg)) == cfg


# run


def test_run_sphere_writes_exactly_the_expected_files(tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["run", "--config", write_config(tmp_path), "--out", str(out)]) == 0
    assert sorted(os.listdir(out)) == ["config.yaml", "rates.json", "series.csv"]
    s = diag.DiagnosticsSeries.from_csv(out / "series.csv")
    assert np.all(np.diff(s.t) > 0) and s.t[-1] == 1.0
    assert json.loads((out / "rates.json").read_text()) == []
    assert parse_config(str(out / "config.yaml")) == parse_config(write_config(tmp_path))
    assert "PASS F_positive" in capsys.readouterr().out


def test_run_with_snapshots(tmp_path):
    out = tmp_path / "out"
    cfg = write_config(tmp_path, output={"snapshots": True, "snapshot_every": 5})
    assert main(["run", "--config", cfg, "--out", str(out)]) == 0
    assert sorted(os.listdir(out)) == ["config.yaml", "rates.json", "series.csv", "snapshots"]
    assert len(os.listdir(out / "snapshots")) == 3


def test_run_inadmissible_initial_data(tmp_path, capsys):
    out = tmp_path / "out"
    cfg = write_config(
        tmp_path,
        curvature={"kind": "geometric"},
        grid={"layout": "axisym", "N": 101},
        initial={"family": "axisym_perturbed", "r0": 1.0, "coefficients": {2: 0.9}},
    )
    assert main(["run", "--config", cfg, "--out", str(out)]) == 2
    assert (out / "series.csv").read_text() == diag.DiagnosticsSeries.header_line()
    assert "ERROR at t=0" in capsys.readouterr().out


def test_run_is_byte_identical(tmp_path):
    cfg = write_config(tmp_path, initial={"family": "axisym_perturbed", "r0": 1.0, "coefficients": {2: 0.05}})
    for d in ("a", "b"):
        assert main(["run", "--config", cfg, "--out", str(tmp_path / d)]) == 0
    assert sha(tmp_path / "a" / "series.csv") == sha(tmp_path / "b" / "series.csv")


def test_run_rate_expectation(tmp_path):
    cfg = write_config(
        tmp_path,
        grid={"layout": "axisym", "N": 65},
        initial={"family": "axisym_perturbed", "r0": 1.0, "coefficients": {2: 0.05}},
        step={"t_end": 10.0},
        diagnostics={"rates": [{"quantity": "umbil_deficit", "expect": [-1.1, -0.45]}]},
    )
    assert main(["run", "--config", cfg, "--out", str(tmp_path / "ok")]) == 0
    report = json.loads((tmp_path / "ok" / "rates.json").read_text())
    assert report[0]["window"] == [4.0, 10.0] and report[0]["passed"] is True
    bad = cfg.replace("c.yaml", "bad.yaml")
    open(bad, "w").write(open(cfg).read().replace("-0.45", "-1.05"))
    assert main(["run", "--config", bad, "--out", str(tmp_path / "bad")]) == 1


def test_run_config_error_exit(tmp_path, capsys):
    cfg = write_config(tmp_path, n=1)
    assert main(["run", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
    assert "n must be >= 2" in capsys.readouterr().err


# sphere-test


def test_sphere_test_passes(capsys):
    assert main(["sphere-test", "--n", "2", "--r0", "0.5", "--t-end", "4"]) == 0
    line = capsys.readouterr().out
    err = float(line.split("max relative error ")[1].split()[0])
    assert err <= 1e-8


def test_sphere_test_zero_horizon(capsys):
    assert main(["sphere-test", "--t-end", "0", "--N", "33"]) == 0
    err = float(capsys.readouterr().out.split("max relative error ")[1].split()[0])
    assert err <= 1e-15


def test_sphere_test_coarse_dt_order(capsys):
    assert main(["sphere-test", "--t-end", "4", "--dt", "0.5", "--order", "--N", "33"]) == 1
    out = capsys.readouterr().out
    err = float(out.split("max relative error ")[1].split()[0])
    assert 1e-8 < err < 1e-2
    orders = [float(x) for x in re.findall(r"[\d.]+", out.split("dt/4: ")[1].splitlines()[0])]
    assert len(orders) == 2
    assert all(3.7 <= o <= 4.5 for o in orders)


# compare


def test_compare_nested(tmp_path, capsys):
    paths = [
        write_config(tmp_path, f"c{i}.yaml", initial=ini, step={"t_end": 2.0})
        for i, ini in enumerate(
            [
                {"family": "sphere", "r0": 0.8},
                {"family": "axisym_perturbed", "r0": 1.0, "coefficients": {2: 0.05}},
                {"family": "sphere", "r0": 1.2},
            ]
        )
    ]
    assert main(["compare", "--config", *paths, "--out", str(tmp_path / "cmp"), "--workers", "2"]) == 0
    report = json.loads((tmp_path / "cmp" / "nesting.json").read_text())
    assert report == {"ok": True, "checked": 21, "first_violation": None}
    assert main(["compare", "--config", paths[1], paths[0], paths[2]]) == 2
    assert "not strictly nested" in capsys.readouterr().err


# rates and plotdata


def test_rates_on_synthetic_csv(tmp_path, capsys):
    t = np.linspace(0.0, 10.0, 101)
    s = diag.DiagnosticsSeries(n=2)
    for ti in t:
        row = {c: 1.0 for c in diag.COLUMNS}
        row.update(t=float(ti), umbil_deficit=3.0 * math.exp(-ti / 2))
        s.append(row)
    s.to_csv(tmp_path / "series.csv")
    out = tmp_path / "r.json"
    assert main(["rates", str(tmp_path / "series.csv"), "--n", "2", "--out", str(out)]) == 0
    report = json.loads(out.read_text())
    assert abs(report["slope"] + 0.5) <= 1e-12
    assert report["window"] == [4.0, 10.0]


def test_rates_missing_column(tmp_path, capsys):
    p = tmp_path / "s.csv"
    p.write_text("t,u_sup\n0,1\n")
    assert main(["rates", str(p), "--n", "2"]) == 2
    assert "umbil_deficit" in capsys.readouterr().err


def test_rates_reads_n_from_run_directory(tmp_path, capsys):
    cfg = write_config(
        tmp_path,
        grid={"layout": "axisym", "N": 65},
        initial={"family": "axisym_perturbed", "r0": 1.0, "coefficients": {2: 0.05}},
        step={"t_end": 10.0},
    )
    main(["run", "--config", cfg, "--out", str(tmp_path / "o")])
    capsys.readouterr()
    assert main(["rates", str(tmp_path / "o" / "series.csv")]) == 0
    report = json.loads(capsys.readouterr().out)
    assert -2.2 / 2 <= report["slope"] <= -0.9 / 2


def test_plotdata(tmp_path):
    out = tmp_path / "o"
    main(["run", "--config", write_config(tmp_path), "--out", str(out)])
    assert main(["plotdata", str(out / "series.csv"), "--out", str(tmp_path / "p")]) == 0
    files = sorted(os.listdir(tmp_path / "p"))
    assert files == sorted(f"{c}.dat" for c in diag.COLUMNS if c != "t")
    rows = np.loadtxt(tmp_path / "p" / "u_sup.dat")
    np.testing.assert_allclose(rows[:, 2], np.log(rows[:, 1]), rtol=1e-15)
    # the sphere's rescaled radius is negative: an explicit log request fails
    assert main(["plotdata", str(out / "series.csv"), "--out", str(tmp_path / "q"), "--quantity", "resc_sup"]) == 2
    assert main(["plotdata", str(out / "series.csv"), "--out", str(tmp_path / "q"), "--quantity", "resc_sup", "--no-log"]) == 0
    assert np.loadtxt(tmp_path / "q" / "resc_sup.dat").shape[1] == 2


# refine


def test_refine_reports_order(tmp_path, capsys):
    cfg = write_config(
        tmp_path,
        grid={"layout": "axisym", "N": 41},
        initial={"family": "axisym_perturbed", "r0": 1.0, "coefficients": {2: 0.05}},
        step={"t_end": 1.0},
    )
    assert main(["refine", "--config", cfg]) == 0
    out = capsys.readouterr().out
    order = float(out.split("observed order ")[1].split()[0])
    assert order >= 3.5


def test_refine_constant_data_is_exact(tmp_path, capsys):
    assert main(["refine", "--config", write_config(tmp_path), "--probe", "grad_sup"]) == 0
    assert "(exact)" in capsys.readouterr().out
