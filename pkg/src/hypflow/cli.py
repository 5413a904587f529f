"""Command line interface: ``hypflow <subcommand> ...``.

Subcommands: run, sphere-test, compare, rates, refine, plotdata.

Exit status is 0 when every enabled check passed, 1 when a check failed,
and 2 for configuration, admissibility or numerical errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np
import yaml

from . import diagnostics as diag
from . import flow
from .config import RunConfig, parse_config, serialize_config
from .curvature import make_function
from .errors import AdmissibilityError, ConfigurationError, FitError, HypflowError, NumericsError
from .sphere import AxisymGrid

log = logging.getLogger("hypflow")

CONFIG_NAME = "config.yaml"
SERIES_NAME = "series.csv"
RATES_NAME = "rates.json"
SNAPSHOT_DIR = "snapshots"

EXIT_OK, EXIT_CHECK_FAILED, EXIT_ERROR = 0, 1, 2


def _initial_state(cfg: RunConfig):
    grid = cfg.grid()
    F = cfg.curvature_function()
    return flow.init(grid, cfg.model, F, cfg.family, cfg.r0, cfg.coefficients)


def cmd_run(cfg: RunConfig, out_dir, echo=print) -> int:
    """Run one flow and write config copy, series CSV and rate report into ``out_dir``."""
    out_dir = out_dir or cfg.out_dir
    if not out_dir:
        raise ConfigurationError("no output directory given (use --out or output.dir)")
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, CONFIG_NAME), "w") as fh:
        fh.write(serialize_config(cfg))
    series_path = os.path.join(out_dir, SERIES_NAME)
    rates_path = os.path.join(out_dir, RATES_NAME)
    fits = []
    status = EXIT_OK
    with open(series_path, "w", newline="\n") as stream:
        recorder = diag.DiagnosticsRecorder(cfg.n, stream=stream)
        try:
            state = _initial_state(cfg)
            observers = [recorder]
            if cfg.snapshots:
                observers.append(flow.SnapshotWriter(os.path.join(out_dir, SNAPSHOT_DIR), cfg.snapshot_every))
            envelope = diag.MonitorEnvelope.from_state(state)
            final = flow.run(state, cfg.step_control(), observers)
        except (AdmissibilityError, NumericsError) as err:
            t = getattr(err, "t", None)
            echo(f"ERROR at t={t if t is not None else 0.0}: {err}")
            with open(rates_path, "w") as fh:
                fh.write(diag.rates_json([]))
            return EXIT_ERROR
    series = recorder.series
    for spec in cfg.rate_specs():
        try:
            fit = diag.fit_rate(series, spec.quantity, spec.window, n=cfg.n)
            entry = fit.to_json()
            if spec.expect is not None:
                ok = spec.expect[0] <= fit.slope <= spec.expect[1]
                entry["expect"] = list(spec.expect)
                entry["passed"] = ok
                if not ok:
                    status = EXIT_CHECK_FAILED
            echo(f"rate {spec.quantity} on [{spec.window[0]:g}, {spec.window[1]:g}]: "
                 f"slope={fit.slope:.6g} rms={fit.rms:.3g}")
        except FitError as err:
            entry = {"quantity": spec.quantity, "window": list(spec.window), "error": str(err)}
            if spec.expect is not None:
                entry["passed"] = False
                status = EXIT_CHECK_FAILED
            echo(f"rate {spec.quantity}: {err}")
        fits.append(entry)
    with open(rates_path, "w") as fh:
        fh.write(diag.rates_json(fits))
    if cfg.checks:
        for check in diag.check_monitors(series, envelope):
            echo(f"{'PASS' if check.passed else 'FAIL'} {check.name}: {check.detail}")
            if not check.passed:
                status = EXIT_CHECK_FAILED
    echo(f"finished t={final.t:g} after {final.steps} steps; wrote {out_dir}")
    return status


def sphere_errors(n, r0, t_end, dt=None, N=201, cadence=0.1, cfl=0.2):
    """Times and relative radius errors of a simulated sphere against the closed form."""
    grid = AxisymGrid(n, N)
    state = flow.init(grid, "polar", make_function("mean", n=n), "sphere", r0)
    if dt is not None:
        control = flow.StepControl(t_end, cfl=cfl, dt_min=dt, dt_max=dt, cadence=dt)
    else:
        control = flow.StepControl(t_end, cfl=cfl, cadence=cadence)
    rec = flow.FieldRecorder()
    flow.run(state, control, [rec])
    times = np.array(rec.times)
    exact = flow.sphere_exact(r0, n, times)
    err = np.array([np.max(np.abs(f - e)) / e for f, e in zip(rec.fields, np.atleast_1d(exact))])
    spread = max(float(np.ptp(f)) for f in rec.fields)
    return times, err, spread


def cmd_sphere_test(n, r0, t_end, dt=None, N=201, threshold=1e-8, order=False, echo=print) -> int:
    times, err, spread = sphere_errors(n, r0, t_end, dt, N)
    worst = float(err.max()) if len(err) else 0.0
    echo(f"sphere n={n} r0={r0:g} t_end={t_end:g}: max relative error {worst:.3e} "
         f"(node spread {spread:.1e})")
    status = EXIT_OK if worst <= threshold else EXIT_CHECK_FAILED
    if order:
        if dt is None:
            raise ConfigurationError("--order needs a fixed --dt")
        finals = [sphere_errors(n, r0, t_end, dt / 2**j, N)[1][-1] for j in range(3)]
        orders = [math.log2(finals[j] / finals[j + 1]) for j in range(2)]
        echo(f"temporal order over dt, dt/2, dt/4: {orders[0]:.2f}, {orders[1]:.2f}")
    if status != EXIT_OK:
        echo(f"FAIL: error above threshold {threshold:g}")
    return status


def _run_fields(cfg_dict):
    cfg = parse_config(cfg_dict)
    state = _initial_state(cfg)
    rec = flow.FieldRecorder()
    flow.run(state, cfg.step_control(), [rec])
    return rec.times, rec.fields


def cmd_compare(configs, out_dir=None, workers=1, echo=print) -> int:
    """Run three nested initial configurations and check strict ordering throughout."""
    lo, mid, hi = configs
    same = ("n", "model", "layout", "N", "ntheta", "nlambda", "t_end", "cadence")
    diffs = [k for k in same if len({getattr(c, k) for c in configs}) != 1]
    if diffs:
        raise ConfigurationError(f"compare configs differ in {diffs}")
    u0 = []
    for c in configs:
        st = _initial_state(c)
        u0.append(flow.polar_radius(st.model, st.phi))
    if not (np.all(u0[0] < u0[1]) and np.all(u0[1] < u0[2])):
        raise ConfigurationError("initial data are not strictly nested (lo < mid < hi)")
    dicts = [c.to_dict() for c in configs]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=min(workers, 3)) as pool:
            results = list(pool.map(_run_fields, dicts))
    else:
        results = [_run_fields(d) for d in dicts]
    runs = [flow.FieldRecorder() for _ in results]
    for rec, (times, fields) in zip(runs, results):
        rec.times, rec.fields = list(times), list(fields)
    report = diag.nesting_check(*runs)
    echo(f"{'PASS' if report.ok else 'FAIL'} nesting over {report.checked} recorded times"
         + ("" if report.ok else f"; first violation {report.first_violation}"))
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "nesting.json"), "w") as fh:
            json.dump({"ok": report.ok, "checked": report.checked, "first_violation": report.first_violation},
                      fh, indent=2)
    return EXIT_OK if report.ok else EXIT_CHECK_FAILED


def _series_n(series_path, n):
    if n is not None:
        return n
    cfg_path = os.path.join(os.path.dirname(os.path.abspath(series_path)), CONFIG_NAME)
    if os.path.exists(cfg_path):
        with open(cfg_path) as fh:
            return yaml.safe_load(fh).get("n")
    return None


def cmd_rates(series_path, quantity, window=None, n=None, out=None, echo=print) -> int:
    n = _series_n(series_path, n)
    series = diag.DiagnosticsSeries.from_csv(series_path, n=n, columns=("t", quantity))
    if window is None:
        if n is None:
            raise ConfigurationError("no --window given and n unknown (pass --n)")
        window = diag.default_window(n)
    fit = diag.fit_rate(series, quantity, window, n=n)
    text = json.dumps(fit.to_json())
    echo(text)
    if out:
        with open(out, "w") as fh:
            fh.write(text + "\n")
    return EXIT_OK


def _refine_level(args):
    cfg_dict, N, probe, stride = args
    c = parse_config(cfg_dict)
    c.N = N
    final = flow.run(_initial_state(c), c.step_control())
    if probe == "kappa_hyp":
        return final.geometry.kappa_hyp[::stride]
    return diag.record(final.t, final)[probe]


def cmd_refine(cfg: RunConfig, probe="grad_scaled_sup", workers=1, echo=print) -> int:
    """Observed spatial order from runs at ``N``, ``2N-1`` and ``4N-3`` nodes."""
    if cfg.layout != "axisym":
        raise ConfigurationError("refine supports axisym grids only")
    if probe != "kappa_hyp" and probe not in diag.COLUMNS:
        raise ConfigurationError(f"unknown probe {probe!r}")
    jobs = [(cfg.to_dict(), (cfg.N - 1) * 2**j + 1, probe, 2**j) for j in range(3)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=min(workers, 3)) as pool:
            values = list(pool.map(_refine_level, jobs))
    else:
        values = [_refine_level(job) for job in jobs]
    res = diag.refinement_order(*values)
    echo(f"probe {probe}: differences {res.differences[0]:.3e}, {res.differences[1]:.3e}; "
         f"observed order {res.order:.2f} ({res.flag})")
    return EXIT_CHECK_FAILED if res.flag == "inconclusive" else EXIT_OK


def cmd_plotdata(series_path, out_dir, quantities=None, with_log=True, echo=print) -> int:
    series = diag.DiagnosticsSeries.from_csv(series_path)
    explicit = quantities is not None
    quantities = list(quantities) if explicit else [c for c in diag.COLUMNS if c != "t"]
    os.makedirs(out_dir, exist_ok=True)
    for q in quantities:
        use_log = with_log
        if with_log and not explicit and np.any(~(series.column(q) > 0)):
            use_log = False
        text = diag.plot_columns(series, q, with_log=use_log)
        with open(os.path.join(out_dir, f"{q}.dat"), "w") as fh:
            fh.write(text)
    echo(f"wrote {len(quantities)} file(s) to {out_dir}")
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="hypflow", description="Inverse curvature flows in hyperbolic space")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one flow from a config file")
    r.add_argument("--config", required=True)
    r.add_argument("--out")
    r.add_argument("--workers", type=int, default=1, help="accepted for symmetry; one flow runs in one process")
    r.add_argument("--strict", action="store_true")

    s = sub.add_parser("sphere-test", help="compare a sphere run with the closed-form radius")
    s.add_argument("--n", type=int, default=2, help="hypersurface dimension")
    s.add_argument("--r0", type=float, default=0.5, help="initial geodesic radius")
    s.add_argument("--t-end", type=float, default=4.0)
    s.add_argument("--dt", type=float, help="fixed step; adaptive when omitted")
    s.add_argument("--N", type=int, default=201, help="axisymmetric grid nodes")
    s.add_argument("--threshold", type=float, default=1e-8, help="max relative radius error")
    s.add_argument("--order", action="store_true", help="also report the temporal order over dt halvings")

    c = sub.add_parser("compare", help="check the comparison principle on three nested configs")
    c.add_argument("--config", nargs=3, required=True, metavar=("LO", "MID", "HI"))
    c.add_argument("--out")
    c.add_argument("--workers", type=int, default=1)
    c.add_argument("--strict", action="store_true")

    t = sub.add_parser("rates", help="fit an exponential rate to one series column")
    t.add_argument("series")
    t.add_argument("--quantity", default="umbil_deficit")
    t.add_argument("--window", type=float, nargs=2)
    t.add_argument("--n", type=int)
    t.add_argument("--out")

    f = sub.add_parser("refine", help="observed spatial order over three grid refinements")
    f.add_argument("--config", required=True)
    f.add_argument("--probe", default="grad_scaled_sup")
    f.add_argument("--workers", type=int, default=1)
    f.add_argument("--strict", action="store_true")

    d = sub.add_parser("plotdata", help="write plot-ready text columns from a series CSV")
    d.add_argument("series")
    d.add_argument("--out", required=True)
    d.add_argument("--quantity", action="append")
    d.add_argument("--no-log", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "run":
            return cmd_run(parse_config(args.config, strict=args.strict), args.out)
        if args.command == "sphere-test":
            return cmd_sphere_test(args.n, args.r0, args.t_end, args.dt, args.N, args.threshold, args.order)
        if args.command == "compare":
            cfgs = [parse_config(path, strict=args.strict) for path in args.config]
            return cmd_compare(cfgs, args.out, args.workers)
        if args.command == "rates":
            return cmd_rates(args.series, args.quantity, args.window, args.n, args.out)
        if args.command == "refine":
            return cmd_refine(parse_config(args.config, strict=args.strict), args.probe, args.workers)
        if args.command == "plotdata":
            return cmd_plotdata(args.series, args.out, args.quantity, not args.no_log)
    except ConfigurationError as err:
        for v in err.violations:
            print(f"config error: {v}", file=sys.stderr)
        return EXIT_ERROR
    except (HypflowError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_ERROR
    return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
