"""Monitored quantities, exponential rate fits and comparison studies.

Every radius-based quantity is evaluated on the hyperbolic distance from
the centre.  Ball-model states are converted first, using the identity
``log u_ball = log 2 + phi_polar`` between the two graph functions.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigurationError, FitError
from .geometry import Model, ball_radius_minus_two, u_from_phi

COLUMNS = (
    "t",
    "dt",
    "u_sup",
    "u_inf",
    "utilde_sup",
    "utilde_inf",
    "grad_sup",
    "grad_scaled_sup",
    "umbil_deficit",
    "chi_tilde_sup",
    "chi_tilde_inf",
    "F_sup",
    "F_inf",
    "resc_sup",
    "resc_inf",
    "resc_osc",
)


def polar_phi(state):
    """The polar-model graph function of a state in either model."""
    if state.model is Model.POLAR:
        return state.phi
    return state.phi - math.log(2.0)


def umbilicity_deficit(state) -> float:
    """``max |kappa_hyp_i - 1|`` over nodes and directions."""
    return float(np.max(np.abs(state.geometry.kappa_hyp - 1.0)))


def chi_tilde(state):
    """``(sup, inf)`` of ``v exp(t/n) / sinh(u)`` with ``u`` the hyperbolic radius."""
    phi = polar_phi(state)
    q = np.exp(phi)
    inv_sinh = -np.expm1(2.0 * phi) / (2.0 * q)
    chi = state.geometry.v * inv_sinh * math.exp(state.t / state.n)
    return float(chi.max()), float(chi.min())


def gradient_decay(state) -> float:
    """``sup |Du| exp(t/n)``; ``|Du|`` is the same in both models."""
    grad = math.sqrt(float(np.max(state.geometry.grad_norm2)))
    return grad * math.exp(state.t / state.n)


def rescaled_radius(state):
    """``(sup, inf, oscillation)`` of ``(u_ball - 2) exp(t/n)``."""
    r = ball_radius_minus_two(state.model, state.phi) * math.exp(state.t / state.n)
    hi, lo = float(r.max()), float(r.min())
    return hi, lo, hi - lo


def F_bounds(state):
    """``(sup, inf)`` of F evaluated on the hyperbolic principal curvatures."""
    vals = state.F.evaluate(state.geometry.kappa_hyp)
    return float(vals.max()), float(vals.min())


def record(t, state) -> dict:
    """One row of the diagnostics series."""
    n = state.n
    geo = state.geometry
    u = u_from_phi(Model.POLAR, polar_phi(state))
    utilde = u - t / n
    grad = math.sqrt(float(np.max(geo.grad_norm2)))
    chi_sup, chi_inf = chi_tilde(state)
    f_sup, f_inf = F_bounds(state)
    r_sup, r_inf, r_osc = rescaled_radius(state)
    return {
        "t": float(t),
        "dt": float(state.last_dt),
        "u_sup": float(u.max()),
        "u_inf": float(u.min()),
        "utilde_sup": float(utilde.max()),
        "utilde_inf": float(utilde.min()),
        "grad_sup": grad,
        "grad_scaled_sup": grad * math.exp(t / n),
        "umbil_deficit": umbilicity_deficit(state),
        "chi_tilde_sup": chi_sup,
        "chi_tilde_inf": chi_inf,
        "F_sup": f_sup,
        "F_inf": f_inf,
        "resc_sup": r_sup,
        "resc_inf": r_inf,
        "resc_osc": r_osc,
    }


def _fmt(x):
    return repr(float(x))


@dataclass
class DiagnosticsSeries:
    """Time-indexed diagnostics records with the fixed column order."""

    n: Optional[int] = None
    rows: list = field(default_factory=list)

    def __len__(self):
        return len(self.rows)

    def append(self, row: dict):
        if self.rows and not row["t"] > self.rows[-1]["t"]:
            raise ValueError(f"series times must increase strictly: {row['t']} after {self.rows[-1]['t']}")
        self.rows.append(row)

    def column(self, name) -> np.ndarray:
        if name not in COLUMNS:
            raise KeyError(f"unknown series column {name!r}")
        return np.array([r[name] for r in self.rows], dtype=float)

    @property
    def t(self):
        return self.column("t")

    def at(self, t, tol=1e-9) -> dict:
        for r in self.rows:
            if abs(r["t"] - t) <= tol:
                return r
        raise KeyError(f"no record at t={t}")

    @staticmethod
    def header_line() -> str:
        return ",".join(COLUMNS) + "\n"

    @staticmethod
    def row_line(row) -> str:
        return ",".join(_fmt(row[c]) for c in COLUMNS) + "\n"

    def to_csv(self, path):
        with open(path, "w", newline="\n") as fh:
            fh.write(self.header_line())
            for row in self.rows:
                fh.write(self.row_line(row))

    @classmethod
    def from_csv(cls, path, n=None, columns=COLUMNS):
        """Read a series CSV.

        Raises
        ------
        ConfigurationError
            If a required column is missing.
        """
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            present = reader.fieldnames or []
            missing = [c for c in columns if c not in present]
            if missing:
                raise ConfigurationError([f"{path}: missing series column {c!r}" for c in missing])
            rows = [{k: float(v) for k, v in r.items() if k in COLUMNS} for r in reader]
        series = cls(n=n)
        series.rows = rows
        return series


class DiagnosticsRecorder:
    """Flow observer that appends a diagnostics row per output time.

    If ``stream`` is given, each row is also written to it as soon as it is
    computed, preceded by the header line.
    """

    def __init__(self, n, stream=None):
        self.series = DiagnosticsSeries(n=n)
        self.stream = stream
        if stream is not None:
            stream.write(DiagnosticsSeries.header_line())

    def __call__(self, t, state):
        row = record(t, state)
        self.series.append(row)
        if self.stream is not None:
            self.stream.write(DiagnosticsSeries.row_line(row))
            self.stream.flush()


@dataclass(frozen=True)
class RateFit:
    quantity: str
    window: tuple
    slope: float
    intercept: float
    rms: float
    samples: int

    def to_json(self) -> dict:
        return {"quantity": self.quantity, "window": list(self.window), "slope": self.slope, "rms": self.rms}


MIN_FIT_SAMPLES = 20


def fit_rate(series, quantity, window, n=None, min_samples=MIN_FIT_SAMPLES) -> RateFit:
    """Least-squares line through ``(t, log q)`` on ``window = (t_a, t_b)``.

    ``series`` is a :class:`DiagnosticsSeries` or a pair ``(t, q)`` of arrays.
    When ``n`` is known (from the series or the argument) the window must be
    at least ``n`` long.

    Raises
    ------
    FitError
        Window too short, too few samples, or non-positive values.
    """
    if isinstance(series, DiagnosticsSeries):
        t, q = series.t, series.column(quantity)
        n = series.n if n is None else n
    else:
        t, q = (np.asarray(a, dtype=float) for a in series)
    ta, tb = (float(w) for w in window)
    if not tb > ta:
        raise FitError(f"empty fit window [{ta}, {tb}]")
    if n is not None and tb - ta < n - 1e-12:
        raise FitError(f"fit window [{ta}, {tb}] is shorter than n={n}")
    sel = (t >= ta - 1e-9) & (t <= tb + 1e-9)
    ts, qs = t[sel], q[sel]
    if len(ts) < min_samples:
        raise FitError(f"only {len(ts)} samples in [{ta}, {tb}], need {min_samples}")
    bad = ~(qs > 0)
    if np.any(bad):
        raise FitError(f"{quantity} is not positive at t = {ts[bad][:10].tolist()}")
    y = np.log(qs)
    A = np.column_stack((ts, np.ones_like(ts)))
    (slope, intercept), *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - (slope * ts + intercept)
    rms = float(np.sqrt(np.mean(resid * resid)))
    return RateFit(quantity, (ta, tb), float(slope), float(intercept), rms, int(len(ts)))


def default_window(n):
    return (2.0 * n, 5.0 * n)


def rates_json(fits) -> str:
    return json.dumps([f.to_json() if isinstance(f, RateFit) else f for f in fits], indent=2) + "\n"


@dataclass
class NestingReport:
    ok: bool
    checked: int
    first_violation: Optional[dict] = None

    def __bool__(self):
        return self.ok


def nesting_check(run_lo, run_mid, run_hi) -> NestingReport:
    """Strict pointwise ordering ``lo < mid < hi`` at every recorded time.

    Each run is a :class:`hypflow.flow.FieldRecorder` (or anything with
    ``times`` and ``fields``) holding hyperbolic radius fields.
    """
    runs = (run_lo, run_mid, run_hi)
    times = [np.asarray(r.times, dtype=float) for r in runs]
    if not (len(times[0]) == len(times[1]) == len(times[2])) or not (
        np.array_equal(times[0], times[1]) and np.array_equal(times[0], times[2])
    ):
        raise ConfigurationError("runs were not recorded at identical times")
    shapes = {np.shape(f) for r in runs for f in r.fields}
    if len(shapes) != 1:
        raise ConfigurationError(f"runs use different grids: field shapes {sorted(shapes)}")
    for i, t in enumerate(times[0]):
        lo, mid, hi = (np.asarray(r.fields[i]) for r in runs)
        for name, bad in (("lower", ~(lo < mid)), ("upper", ~(mid < hi))):
            if np.any(bad):
                node = int(np.flatnonzero(bad)[0])
                return NestingReport(False, i, {"t": float(t), "node": node, "side": name})
    return NestingReport(True, len(times[0]))


@dataclass(frozen=True)
class RefinementResult:
    order: float
    flag: str  # "ok", "exact" or "inconclusive"
    differences: tuple


def refinement_order(q_h, q_h2, q_h4) -> RefinementResult:
    """Observed order ``log2(|q_h - q_h2| / |q_h2 - q_h4|)`` in the max norm.

    Array probes must already be sampled on common nodes.
    """
    d1 = float(np.max(np.abs(np.asarray(q_h, dtype=float) - np.asarray(q_h2, dtype=float))))
    d2 = float(np.max(np.abs(np.asarray(q_h2, dtype=float) - np.asarray(q_h4, dtype=float))))
    if d1 == 0.0 and d2 == 0.0:
        return RefinementResult(math.inf, "exact", (d1, d2))
    if d2 == 0.0 or d1 <= d2:
        return RefinementResult(math.nan if d2 == 0.0 else math.log2(d1 / d2), "inconclusive", (d1, d2))
    return RefinementResult(math.log2(d1 / d2), "ok", (d1, d2))


@dataclass(frozen=True)
class MonitorEnvelope:
    """Bounds implied by the initial data for the bounded monitors.

    ``r1``/``r2`` are the extreme initial hyperbolic radii and ``v_max`` the
    largest initial gradient factor.
    """

    n: int
    r1: float
    r2: float
    v_max: float

    @classmethod
    def from_state(cls, state):
        u = u_from_phi(Model.POLAR, polar_phi(state))
        return cls(state.n, float(u.min()), float(u.max()), float(state.geometry.v.max()))

    @property
    def chi_bounds(self):
        return 1.0 / math.sinh(self.r2), self.v_max / math.sinh(self.r1)

    @property
    def utilde_bounds(self):
        c1 = math.log(2.0 * math.sinh(self.r1))
        c2 = math.log(2.0 * math.sinh(self.r2)) - math.log(-math.expm1(-2.0 * self.r1))
        return c1, c2


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def check_monitors(series: DiagnosticsSeries, env: MonitorEnvelope, slack=1e-6):
    """Positivity of F, the chi-tilde envelope and the u-tilde bounds.

    Both envelopes are attained at t=0 by spheres, so they are checked
    with a relative ``slack``.
    """
    out = []
    f_inf = series.column("F_inf")
    out.append(CheckResult("F_positive", bool(np.all(f_inf > 0)), f"min F_inf = {f_inf.min():.6g}"))
    lo, hi = env.chi_bounds
    c_inf, c_sup = series.column("chi_tilde_inf"), series.column("chi_tilde_sup")
    ok = bool(np.all(c_inf >= lo * (1 - slack)) and np.all(c_sup <= hi * (1 + slack)))
    out.append(
        CheckResult(
            "chi_tilde_envelope",
            ok,
            f"chi in [{c_inf.min():.9g}, {c_sup.max():.9g}], envelope [{lo:.9g}, {hi:.9g}]",
        )
    )
    c1, c2 = env.utilde_bounds
    u_inf, u_sup = series.column("utilde_inf"), series.column("utilde_sup")
    ok = bool(np.all(u_inf >= c1 - slack * abs(c1)) and np.all(u_sup <= c2 + slack * abs(c2)))
    out.append(
        CheckResult(
            "utilde_bounds",
            ok,
            f"utilde in [{u_inf.min():.9g}, {u_sup.max():.9g}], bounds ({c1:.9g}, {c2:.9g})",
        )
    )
    return out


def plot_columns(series: DiagnosticsSeries, quantity, with_log=True) -> str:
    """Whitespace-delimited ``t q [log q]`` text for one column."""
    t, q = series.t, series.column(quantity)
    if with_log and np.any(~(q > 0)):
        raise FitError(f"cannot take log of non-positive {quantity}")
    buf = io.StringIO()
    buf.write(f"# t {quantity}" + (f" log_{quantity}\n" if with_log else "\n"))
    for i in range(len(t)):
        parts = [_fmt(t[i]), _fmt(q[i])]
        if with_log:
            parts.append(_fmt(math.log(q[i])))
        buf.write(" ".join(parts) + "\n")
    return buf.getvalue()
