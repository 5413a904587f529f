import math
from types import SimpleNamespace

import numpy as np
import pytest

import hypflow.diagnostics as diag
from hypflow.curvature import make_function
from hypflow.errors import ConfigurationError, FitError
from hypflow.flow import StepControl, init, init_from_u, run, sphere_exact
from hypflow.geometry import convert_radius
from hypflow.sphere import AxisymGrid


def _series(t, **cols):
    s = diag.DiagnosticsSeries(n=2)
    for i, ti in enumerate(t):
        row = {c: 1.0 for c in diag.COLUMNS}
        row["t"] = float(ti)
        for k, v in cols.items():
            row[k] = float(v[i])
        s.append(row)
    return s


@pytest.fixture(scope="module")
def sphere_run():
    n, r0 = 2, 0.7
    st = init(AxisymGrid(n, 65), "polar", make_function("mean", n=n), "sphere", r0)
    rec = diag.DiagnosticsRecorder(n)
    # small steps so time-stepping error stays below the 1e-9 identity tolerance
    run(st, StepControl(t_end=5.0 * n, dt_max=0.01), [rec])
    return st, rec.series, r0


@pytest.fixture(scope="module")
def perturbed_run():
    n = 2
    st = init(AxisymGrid(n, 65), "polar", make_function("mean", n=n), "axisym_perturbed", 1.0, {2: 0.05})
    rec = diag.DiagnosticsRecorder(n)
    run(st, StepControl(t_end=5.0 * n), [rec])
    return st, rec.series


# rate fits


def test_fit_recovers_exact_exponential():
    t = np.linspace(0.0, 10.0, 101)
    fit = diag.fit_rate((t, 3.0 * np.exp(-t / 2)), "q", (2.0, 10.0), n=2)
    assert abs(fit.slope + 0.5) <= 1e-12
    assert fit.intercept == pytest.approx(math.log(3.0), abs=1e-12)
    assert fit.rms < 1e-13
    assert fit.samples == 81


def test_fit_window_shorter_than_n():
    t = np.linspace(0.0, 10.0, 1001)
    with pytest.raises(FitError, match="shorter"):
        diag.fit_rate((t, np.exp(-t)), "q", (2.0, 3.0), n=2)


def test_fit_needs_enough_samples():
    t = np.linspace(0.0, 10.0, 11)
    with pytest.raises(FitError, match="samples"):
        diag.fit_rate((t, np.exp(-t)), "q", (2.0, 8.0), n=2)


def test_fit_rejects_non_positive_and_lists_times():
    t = np.linspace(0.0, 10.0, 101)
    q = np.exp(-t)
    q[50] = 0.0
    with pytest.raises(FitError, match=r"5\.0"):
        diag.fit_rate((t, q), "q", (2.0, 10.0), n=2)


def test_fit_from_series_and_json():
    t = np.linspace(0.0, 10.0, 101)
    s = _series(t, umbil_deficit=np.exp(-t))
    fit = diag.fit_rate(s, "umbil_deficit", diag.default_window(2))
    assert fit.window == (4.0, 10.0)
    assert set(fit.to_json()) == {"quantity", "window", "slope", "rms"}


# series container


def test_series_requires_increasing_time():
    s = _series([0.0, 0.1])
    row = dict(s.rows[-1])
    with pytest.raises(ValueError):
        s.append(row)


def test_series_csv_round_trip(tmp_path):
    t = np.linspace(0.0, 1.0, 11)
    s = _series(t, u_sup=np.sqrt(2.0) + t)
    path = tmp_path / "series.csv"
    s.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == ",".join(diag.COLUMNS)
    back = diag.DiagnosticsSeries.from_csv(path)
    np.testing.assert_array_equal(back.column("u_sup"), s.column("u_sup"))
    assert back.at(0.5)["u_sup"] == pytest.approx(math.sqrt(2.0) + 0.5, abs=0)


def test_series_missing_column(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("t,u_sup\n0.0,1.0\n")
    with pytest.raises(ConfigurationError) as info:
        diag.DiagnosticsSeries.from_csv(path)
    assert len(info.value.violations) == len(diag.COLUMNS) - 2


# sphere identities


def test_sphere_chi_tilde_constant(sphere_run):
    _, s, r0 = sphere_run
    for col in ("chi_tilde_sup", "chi_tilde_inf"):
        assert np.max(np.abs(s.column(col) - 1 / math.sinh(r0))) <= 1e-9


def test_sphere_F_and_deficit(sphere_run):
    st, s, r0 = sphere_run
    n = st.n
    r = sphere_exact(r0, n, s.t)
    np.testing.assert_allclose(s.column("F_sup"), n / np.tanh(r), rtol=1e-8)
    np.testing.assert_allclose(s.column("umbil_deficit"), 1 / np.tanh(r) - 1, rtol=1e-6)
    f_end = s.column("F_sup")[-1]
    assert 0 < f_end - n < 10 * math.exp(-5) * n


def test_sphere_gradient_and_oscillation_vanish(sphere_run):
    _, s, r0 = sphere_run
    assert np.all(s.column("grad_scaled_sup") == 0.0)
    assert np.all(s.column("resc_osc") == 0.0)


def test_sphere_rescaled_radius(sphere_run):
    st, s, r0 = sphere_run
    tau = sphere_exact(r0, st.n, s.t)
    expected = (2 * np.tanh(tau / 2) - 2) * np.exp(s.t / st.n)
    np.testing.assert_allclose(s.column("resc_sup"), expected, rtol=1e-7)
    assert s.column("resc_sup")[-1] == pytest.approx(-2 / math.sinh(r0), rel=0.01)


def test_sphere_deficit_slope_is_twice_the_generic_rate(sphere_run):
    st, s, _ = sphere_run
    fit = diag.fit_rate(s, "umbil_deficit", (2.0 * st.n, 5.0 * st.n))
    assert -2.1 / st.n <= fit.slope <= -1.9 / st.n


def test_chi_tilde_at_time_zero():
    g = AxisymGrid(2, 65)
    st = init(g, "polar", make_function("mean", n=2), "axisym_perturbed", 1.0, {1: 0.02, 2: 0.05})
    sup, inf = diag.chi_tilde(st)
    chi = st.geometry.v / np.sinh(st.geometry.u)
    assert sup == pytest.approx(chi.max(), rel=1e-14)
    assert inf == pytest.approx(chi.min(), rel=1e-14)


def test_initial_gradient_of_first_mode():
    g = AxisymGrid(2, 401)
    a1, r0 = 0.01, 1.0
    st = init(g, "polar", make_function("mean", n=2), "axisym_perturbed", r0, {1: a1})
    u = r0 + a1 * np.cos(g.theta)
    expected = np.max(a1 * np.sin(g.theta) / np.sinh(u))
    assert diag.gradient_decay(st) == pytest.approx(expected, rel=1e-8)


def test_ball_state_diagnostics_match_polar():
    g = AxisymGrid(2, 101)
    F = make_function("mean", n=2)
    u0 = 1.0 + 0.05 * 0.5 * (3 * np.cos(g.theta) ** 2 - 1)
    rp = diag.record(0.0, init_from_u(g, "polar", F, u0))
    rb = diag.record(0.0, init_from_u(g, "ball", F, convert_radius("polar_to_ball", u0)))
    for col in ("u_sup", "u_inf", "chi_tilde_sup", "resc_sup", "resc_osc"):
        assert rb[col] == pytest.approx(rp[col], rel=1e-12), col
    for col in ("grad_sup", "umbil_deficit", "F_inf"):
        assert rb[col] == pytest.approx(rp[col], rel=1e-6), col


def test_perturbed_deficit_decreases(perturbed_run):
    st, s = perturbed_run
    n = st.n
    assert s.at(3 * n)["umbil_deficit"] < s.at(n)["umbil_deficit"]
    fit = diag.fit_rate(s, "grad_sup", diag.default_window(n))
    assert fit.slope <= -0.9 / n


def test_monitors_pass_on_runs(sphere_run, perturbed_run):
    for st, s in (sphere_run[:2], perturbed_run):
        checks = diag.check_monitors(s, diag.MonitorEnvelope.from_state(st))
        assert [c.name for c in checks] == ["F_positive", "chi_tilde_envelope", "utilde_bounds"]
        assert all(c.passed for c in checks), [c.detail for c in checks]


def test_monitors_detect_violation(perturbed_run):
    st, s = perturbed_run
    bad = diag.DiagnosticsSeries(n=s.n, rows=[dict(r) for r in s.rows])
    bad.rows[5]["chi_tilde_sup"] *= 1.5
    bad.rows[7]["F_inf"] = -1.0
    checks = {c.name: c.passed for c in diag.check_monitors(bad, diag.MonitorEnvelope.from_state(st))}
    assert checks == {"F_positive": False, "chi_tilde_envelope": False, "utilde_bounds": True}


# nesting and refinement


def _sphere_rec(r0, times):
    return SimpleNamespace(times=list(times), fields=[np.full(9, sphere_exact(r0, 2, t)) for t in times])


def test_nesting_of_closed_form_spheres():
    times = np.linspace(0.0, 6.0, 31)
    report = diag.nesting_check(*(_sphere_rec(r, times) for r in (0.5, 1.0, 1.5)))
    assert report.ok and report.checked == 31


def test_identical_runs_are_not_strictly_nested():
    times = np.linspace(0.0, 1.0, 5)
    a = _sphere_rec(1.0, times)
    report = diag.nesting_check(_sphere_rec(0.5, times), a, a)
    assert not report.ok
    assert report.first_violation == {"t": 0.0, "node": 0, "side": "upper"}


def test_nesting_mismatch_errors():
    times = np.linspace(0.0, 1.0, 5)
    lo, mid = _sphere_rec(0.5, times), _sphere_rec(1.0, times)
    with pytest.raises(ConfigurationError):
        diag.nesting_check(lo, mid, _sphere_rec(1.5, times[:-1]))
    other = SimpleNamespace(times=list(times), fields=[np.full(7, 9.0) for _ in times])
    with pytest.raises(ConfigurationError):
        diag.nesting_check(lo, mid, other)


def test_refinement_flags():
    h = 0.1
    res = diag.refinement_order(1 + h**4, 1 + (h / 2) ** 4, 1 + (h / 4) ** 4)
    assert res.flag == "ok" and res.order == pytest.approx(4.0, abs=1e-6)
    assert diag.refinement_order(np.ones(3), np.ones(3), np.ones(3)).flag == "exact"
    assert diag.refinement_order(1.0, 1.1, 1.3).flag == "inconclusive"


# plot data


def test_plot_columns():
    t = np.linspace(0.0, 1.0, 3)
    s = _series(t, umbil_deficit=np.exp(-t), resc_sup=-np.ones(3))
    text = diag.plot_columns(s, "umbil_deficit").splitlines()
    assert text[0] == "# t umbil_deficit log_umbil_deficit"
    vals = np.array([[float(x) for x in line.split()] for line in text[1:]])
    np.testing.assert_allclose(vals[:, 2], -t, atol=1e-15)
    plain = diag.plot_columns(s, "resc_sup", with_log=False).splitlines()
    assert len(plain[1].split()) == 2
    with pytest.raises(FitError):
        diag.plot_columns(s, "resc_sup")


def test_displaced_sphere_rescaled_limit_profile():
    # a geodesic sphere centred off the origin keeps a non-constant rescaled radius:
    # (u_ball - 2) e^{t/n} -> -2 (cosh d - sinh d cos theta) / sinh R0
    n, d, R0 = 2, 0.1, 1.0
    g = AxisymGrid(n, 101)
    A, B = math.cosh(d), math.sinh(d) * np.cos(g.theta)
    u0 = np.arctanh(B / A) + np.arccosh(math.cosh(R0) / np.sqrt(A * A - B * B))
    st = init_from_u(g, "polar", make_function("mean", n=n), u0)
    final = run(st, StepControl(t_end=5.0 * n))
    resc = diag.ball_radius_minus_two("polar", final.phi) * math.exp(final.t / n)
    limit = -2.0 * (A - B) / math.sinh(R0)
    np.testing.assert_allclose(resc, limit, rtol=0.01)
    assert diag.rescaled_radius(final)[2] == pytest.approx(4 * math.sinh(d) / math.sinh(R0), rel=0.01)
