"""Command-line front end.

Each subcommand evaluates one module operation and writes a CSV or JSON
artifact (atomically) plus a one-line summary.  Flags carry their unit in
the name.  Any flag may also be set through ``CSLWALK_<FLAG>`` (dashes become
underscores, upper case); a ``--params`` file supplies defaults below both.

Exit codes: 0 success, 2 usage, 3 domain/data errors, 4 oracle divergence.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import warnings

EXIT_USAGE = 2

# flag dest -> (params-file key, SI multiplier applied to the flag value)
_SETUP_FLAGS = {
    "sigma_nm": ("sigma", 1e-9),
    "mu_nm": ("mu", 1e-9),
    "time_s": ("t_flight", 1.0),
    "sigma_err_nm": ("sigma_err", 1e-9),
    "temperature_ext_k": ("temperature_ext", 1.0),
}
_PARAM_FILE_KEYS = {"sigma", "mu", "t_flight", "sigma_err", "n_samples", "temperature_ext", "pressure",
                    "lam", "alpha", "lambda_alpha", "mass", "mass_amu", "seed",
                    "radius", "density", "internal_temperature"}

FORMULAS = {
    "D": "D = hbar^2 lambda alpha (m/m0)^2 / 4",
    "sigma2_X_m2": "sigma_X^2 = (sigma^2/2) [4 D t^3/(3 m^2 sigma^2) + hbar^2 t^2/(4 m^2 sigma^4) + 1]",
    "sigma2_rel_m2": "sigma_{xi/2}^2 = (sigma^2/2) [hbar^2 t^2/(4 m^2 sigma^4) + 1]",
    "sigma2_csl_m2": "sigma_CSL^2 = sigma_X^2 - sigma_{xi/2}^2 = 2 D t^3 / (3 m^2)",
    "csl_term": "4 D t^3 / (3 m^2 sigma^2)",
    "dispersion_term": "hbar^2 t^2 / (4 m^2 sigma^4)  (smallness parameter)",
    "quadrature": "int J(x, x'; t) rho_0(x') d^4x' by saddle-shifted Gauss-Hermite",
    "analytic": "two-peak Gaussian joint density with sigma_X, sigma_{xi/2}",
    "moment_ode": "d<q^2>/dt = 2<qp>/M, d<qp>/dt = <p^2>/M, d<p^2>/dt = 2 d_P with d_P = (4D, 0), M = 2m",
    "residual": "|dJ/dt - (i hbar/2m) sum_k +-d^2J/dx_k^2 + (D/hbar^2) B(x, y) J| / |dJ/dt|",
    "order": "-log2(residual(h/2) / residual(h))",
    "x1_m": "x1 = X + xi/2 + e1,  e1 ~ N(0, sigma_err^2)",
    "x2_m": "x2 = X - xi/2 + e2,  e2 ~ N(0, sigma_err^2)",
    "X_m": "X = (x1 + x2)/2",
    "xi_m": "xi = x1 - x2",
    "s2_X_m2": "unbiased sample variance of X",
    "s2_rel_m2": "unbiased sample variance of xi/2 about the realised peak centre",
    "var_s2_X_m4": "Var[s_X^2] = 2 (sigma_X^2 + sigma_err^2/2)^2 / (n - 1)",
    "threshold_m2": "n_sigma sqrt(2) sqrt(2 (sigma_{xi/2,D=0}^2 + sigma_err^2/2)^2 / (n - 1))",
    "detection_rate": "fraction of experiments with s_X^2 - s_{xi/2}^2 > threshold",
    "false_positive_rate": "same fraction with D = 0",
    "n_min": "n >= 2 (100/(lambda alpha) + 10)^2 + 1  (exact: 1 + 2 [10 (sigma_X^2 + sigma_err^2/2)/sigma_CSL^2]^2)",
    "t_i_max_K": "T_i < 73 (lambda alpha)^(1/6)  (exact: sigma_CSL^2 = 10 sigma_RAD^2)",
    "p_max_torr": "P < 0.8 [2 (100/(lambda alpha) + 10)^2 + 1]^-1 pTorr  (exact: tau_c = 10 n t)",
    "sigma2_rad_m2": "sigma_RAD^2 = 4.0e-43 rho^-2 R^-3 T_i^6 t^3",
    "collision_time_s": "tau_c = 2 (T_e/T_0)^(1/2) / P[pTorr]",
    "inside": "lambda alpha >= lambda_alpha_min and alpha <= alpha_max",
}


class UsageError(Exception):
    category = "usage"
    exit_code = EXIT_USAGE


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        _emit_error("usage", message)
        raise SystemExit(EXIT_USAGE)


def _emit_error(category: str, message: str) -> None:
    sys.stderr.write(json.dumps({"error": category, "message": message}) + "\n")


def _common_parser() -> argparse.ArgumentParser:
    c = argparse.ArgumentParser(add_help=False)
    g = c.add_argument_group("physical parameters")
    g.add_argument("--params", metavar="FILE", help="key = value [unit] parameter file")
    g.add_argument("--sigma-nm", type=float, help="trap ground-state width")
    g.add_argument("--mu-nm", type=float, help="half the trap separation")
    g.add_argument("--time-s", type=float, help="free-flight time")
    g.add_argument("--sigma-err-nm", type=float, help="position measurement error")
    g.add_argument("--mass-amu", type=float, help="particle mass")
    g.add_argument("--lambda-alpha", type=float, help="collapse product lambda*alpha, 1/(m^2 s)")
    g.add_argument("--lambda", dest="lam", type=float, help="collapse rate, 1/s")
    g.add_argument("--alpha", type=float, help="collapse inverse squared length, 1/m^2")
    g.add_argument("--temperature-ext-k", type=float, help="ambient gas temperature")
    o = c.add_argument_group("run control")
    o.add_argument("--seed", type=int, help="RNG seed (default 0)")
    o.add_argument("--threads", type=int, help="worker threads (default: all)")
    o.add_argument("--format", choices=("csv", "json"), help="output format (default csv)")
    o.add_argument("--output", metavar="PATH", help="write the artifact here instead of stdout")
    o.add_argument("--explain", action="store_true", default=None, help="print the formula behind each column")
    return c


def build_parser() -> argparse.ArgumentParser:
    common = _common_parser()
    p = _Parser(prog="cslwalk", description="Correlated collapse-induced random walks of two particles.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, help_):
        return sub.add_parser(name, parents=[common], help=help_, description=help_)

    add("variances", "closed-form peak variances after free flight")

    s = add("propagate-check", "quadrature and moment-ODE oracles against the closed form")
    s.add_argument("--points", type=int, help="test points per peak (default 20)")
    s.add_argument("--nodes", type=int, help="Gauss-Hermite nodes per axis (default 40)")
    s.add_argument("--rtol", type=float, help="failure threshold on relative error (default 1e-5)")

    s = add("residual-check", "master-equation residual of the closed-form propagator")
    s.add_argument("--levels", type=int, help="step halvings (default 4)")
    s.add_argument("--rel-step", type=float, help="coarsest step relative to sqrt(hbar t/m) and t (default 1e-3)")
    s.add_argument("--samples", type=int, help="random propagator points (default 16)")

    s = add("simulate", "simulated drop trials")
    s.add_argument("--n", type=int, help="number of trials (default 24201)")

    s = add("power", "detection power and false-positive rate")
    s.add_argument("--n", type=int, help="trials per experiment (default 24201)")
    s.add_argument("--repetitions", type=int, help="simulated experiments (default 200)")
    s.add_argument("--n-sigma", type=float, help="detection threshold in null standard deviations (default 5)")

    s = add("feasibility", "noise ceilings at one lambda*alpha")
    s.add_argument("--pressure-ptorr", type=float, help="gas pressure for the collision time (default: ceiling)")
    s.add_argument("--radius-m", type=float, help="sphere radius (default 1e-7)")
    s.add_argument("--density-kg-m3", type=float, help="sphere density (default 1e3)")

    s = add("scan", "noise ceilings over a lambda*alpha grid")
    s.add_argument("--grid", help="start:stop:count[log|lin] (default 1e-2:1e2:25log)")
    s.add_argument("--exact", action="store_true", default=None, help="use the unrounded bounds")

    s = add("region", "accessible (lambda, alpha) region on a log10 grid")
    s.add_argument("--grid-log10-lambda", help="log10 lambda grid (default -20:4:25lin)")
    s.add_argument("--grid-log10-alpha", help="log10 alpha grid (default -4:20:25lin)")
    s.add_argument("--alpha-max", type=float, help="largest alpha, 1/m^2 (default 1e4)")
    s.add_argument("--lambda-alpha-min", type=float, help="smallest lambda*alpha (default 1)")
    s.add_argument("--exclusion", metavar="CSV", help="polygon (log10 lambda, log10 alpha) to flag as excluded")
    return p


def _env_value(dest: str, action: argparse.Action):
    raw = os.environ.get("CSLWALK_" + dest.upper())
    if raw is None:
        return None
    if action.const is True and action.nargs == 0:
        return raw.strip().lower() in {"1", "true", "yes", "on"}
    try:
        value = action.type(raw) if action.type else raw
    except (TypeError, ValueError):
        raise UsageError(f"CSLWALK_{dest.upper()}={raw!r} is not a valid value for --{dest.replace('_', '-')}")
    if action.choices is not None and value not in action.choices:
        raise UsageError(f"CSLWALK_{dest.upper()}={raw!r}: choose from {list(action.choices)}")
    return value


def _apply_env(parser: argparse.ArgumentParser, args: argparse.Namespace) -> None:
    sub = parser._subparsers._group_actions[0].choices[args.command]
    for action in sub._actions:
        if action.dest in ("help",) or getattr(args, action.dest, None) is not None:
            continue
        if action.dest == "lam":
            v = _env_value("lambda", action)
        else:
            v = _env_value(action.dest, action)
        if v is not None:
            setattr(args, action.dest, v)


def _peek_threads(argv) -> int | None:
    for i, a in enumerate(argv):
        if a == "--threads" and i + 1 < len(argv):
            v = argv[i + 1]
        elif a.startswith("--threads="):
            v = a.split("=", 1)[1]
        else:
            continue
        try:
            return int(v)
        except ValueError:
            return None
    v = os.environ.get("CSLWALK_THREADS")
    try:
        return int(v) if v else None
    except ValueError:
        return None


# --- configuration ------------------------------------------------------------


def _resolve(args):
    """Merge flags, environment and parameter file into SI objects."""
    from .params import DEFAULT_ALPHA, CONSTANTS, ExperimentSetup, load_param_file, make_csl_params

    filed = {}
    if args.params:
        filed = load_param_file(args.params)
        unknown = sorted(set(filed) - _PARAM_FILE_KEYS)
        if unknown:
            raise UsageError(f"unknown keys in {args.params}: {', '.join(unknown)}")

    setup_kw = {}
    for key in ("sigma", "mu", "t_flight", "sigma_err", "temperature_ext", "pressure", "n_samples"):
        if key in filed:
            setup_kw[key] = filed[key]
    for dest, (key, scale) in _SETUP_FLAGS.items():
        v = getattr(args, dest, None)
        if v is not None:
            setup_kw[key] = v * scale
    setup = ExperimentSetup(**setup_kw)

    if args.mass_amu is not None:
        mass_amu = args.mass_amu
    elif "mass_amu" in filed:
        mass_amu = filed["mass_amu"]
    elif "mass" in filed:
        mass_amu = filed["mass"] / CONSTANTS.amu
    else:
        mass_amu = 1e9

    lam = args.lam if args.lam is not None else filed.get("lam")
    alpha = args.alpha if args.alpha is not None else filed.get("alpha")
    la = args.lambda_alpha if args.lambda_alpha is not None else filed.get("lambda_alpha")
    if la is not None and lam is not None and alpha is not None and not math.isclose(lam * alpha, la, rel_tol=1e-12):
        raise UsageError("--lambda-alpha conflicts with --lambda * --alpha")
    if lam is None and alpha is None:
        la = 1.0 if la is None else la
        alpha = DEFAULT_ALPHA
        lam = la / alpha
    elif lam is None:
        lam = (1.0 if la is None else la) / alpha
    elif alpha is None:
        alpha = (1.0 if la is None else la) / lam if la is not None else DEFAULT_ALPHA
    p = make_csl_params(lam, alpha, mass_amu)
    seed = args.seed if args.seed is not None else int(filed.get("seed", 0))
    return setup, p, seed, filed


def _setup_dict(setup, p) -> dict:
    return {
        "sigma_m": setup.sigma,
        "mu_m": setup.mu,
        "t_flight_s": setup.t_flight,
        "sigma_err_m": setup.sigma_err,
        "temperature_ext_K": setup.temperature_ext,
        "mass_kg": p.mass,
        "mass_amu": p.mass_amu,
        "lambda_per_s": p.lam,
        "alpha_per_m2": p.alpha,
        "lambda_alpha": p.lambda_alpha,
    }


# --- commands -----------------------------------------------------------------
# Each returns (params, columns, rows, summary, extra_json).


def _cmd_variances(args, setup, p, seed, filed):
    from .analytic import joint_distribution

    jd = joint_distribution(setup, p)
    cols = ["lambda_alpha", "D", "sigma2_X_m2", "sigma2_rel_m2", "sigma2_csl_m2", "csl_term", "dispersion_term"]
    row = [p.lambda_alpha, p.D, jd.sigma2_X, jd.sigma2_rel, jd.sigma2_csl, jd.terms.csl, jd.terms.dispersion]
    summary = (f"sigma_X^2 = {jd.sigma2_X:.4g} m^2, sigma_rel^2 = {jd.sigma2_rel:.4g} m^2, "
               f"sigma_CSL^2 = {jd.sigma2_csl:.4g} m^2, dispersion term = {jd.terms.dispersion:.4g}")
    return _setup_dict(setup, p), cols, [row], summary, {"peaks_separated": jd.validity_flag}


def _check_points(setup, p, seed, per_peak):
    """Test points: per peak, Gaussian draws (clipped to 2.5 sd) about the peak centre."""
    import numpy as np

    from .analytic import joint_distribution
    from .rng import normal, stream_key

    jd = joint_distribution(setup, p)
    key = stream_key(seed, 7)
    z = np.clip(normal(key, np.arange(4 * per_peak, dtype=np.uint64)).reshape(2, 2, per_peak), -2.5, 2.5)
    X, xi = [], []
    for k, c in enumerate((1.0, -1.0)):
        X.append(jd.sigma_X * z[k, 0])
        xi.append(2.0 * (c * jd.mu + jd.sigma_rel * z[k, 1]))
    return jd, np.concatenate(X), np.concatenate(xi)


def _cmd_propagate_check(args, setup, p, seed, filed):
    from .analytic import pdf
    from .errors import OracleDivergenceError
    from .oracle import moment_ode_evolve, quadrature_propagate

    per_peak = 20 if args.points is None else args.points
    nodes = 40 if args.nodes is None else args.nodes
    rtol = 1e-5 if args.rtol is None else args.rtol
    if per_peak < 1:
        raise UsageError("--points must be >= 1")
    jd, X, xi = _check_points(setup, p, seed, per_peak)
    quad = np.atleast_1d(quadrature_propagate(setup, p, X, xi, nodes=nodes))
    ref = np.atleast_1d(pdf(jd, X, xi))
    err = np.abs(quad - ref) / np.abs(ref)

    ms = moment_ode_evolve(setup, p, setup.t_flight, setup.t_flight / 1000.0)
    m_err = [abs(ms.var_X - jd.sigma2_X) / jd.sigma2_X, abs(ms.var_rel - jd.sigma2_rel) / jd.sigma2_rel]

    cols = ["check", "X_m", "xi_m", "reference", "oracle", "rel_error"]
    rows = [["quadrature", X[i], xi[i], ref[i], quad[i], err[i]] for i in range(X.size)]
    rows.append(["moment_ode_sigma2_X", "", "", jd.sigma2_X, ms.var_X, m_err[0]])
    rows.append(["moment_ode_sigma2_rel", "", "", jd.sigma2_rel, ms.var_rel, m_err[1]])
    params = {**_setup_dict(setup, p), "points_per_peak": per_peak, "nodes": nodes, "rtol": rtol, "seed": seed}
    summary = (f"quadrature max rel error {err.max():.3g} over {X.size} points ({nodes} nodes/axis); "
               f"moment ODE max rel error {max(m_err):.3g}")
    failed = err.max() > rtol or max(m_err) > 1e-8
    return params, cols, rows, summary, {"failed": failed and OracleDivergenceError(summary)}


def _cmd_residual_check(args, setup, p, seed, filed):
    from .oracle import GridSpec, residual_convergence, sample_points

    levels = 4 if args.levels is None else args.levels
    rel = 1e-3 if args.rel_step is None else args.rel_step
    n = 16 if args.samples is None else args.samples
    if levels < 2:
        raise UsageError("--levels must be >= 2")
    g = GridSpec.for_kernel(p, setup.t_flight, rel_step=rel)
    pt = sample_points(p, setup.t_flight, g, n, np.random.default_rng(seed))
    rep = residual_convergence(p, pt, g, levels=levels)
    res = rep.details["residuals"]
    orders = [""] + rep.details["orders"]
    cols = ["level", "fd_step_m", "dt_s", "residual", "order"]
    rows = [[k, g.fd_step / 2**k, g.dt / 2**k, res[k], orders[k]] for k in range(levels)]
    params = {**_setup_dict(setup, p), "levels": levels, "rel_step": rel, "samples": n, "seed": seed}
    summary = f"finest residual {res[-1]:.3g}, observed orders " + ", ".join(f"{o:.3f}" for o in rep.details["orders"])
    return params, cols, rows, summary, {}


def _cmd_simulate(args, setup, p, seed, filed):
    from .analytic import joint_distribution
    from .montecarlo import estimate_variances, sample_trials

    n = setup.n_samples if args.n is None else args.n
    trials = sample_trials(setup, p, seed, n)
    est = estimate_variances(trials)
    jd = joint_distribution(setup, p)
    params = {**_setup_dict(setup, p), "n": n, "seed": seed}
    summary = (f"n={n}: s2_X = {est.s2_X:.4g} m^2, s2_rel = {est.s2_rel:.4g} m^2, "
               f"difference {est.s2_diff:.4g} m^2 (sigma_CSL^2 = {jd.sigma2_csl:.4g})")
    stats = {"s2_X_m2": est.s2_X, "s2_rel_m2": est.s2_rel, "s2_diff_m2": est.s2_diff,
             "sigma2_csl_m2": jd.sigma2_csl}
    return params, None, trials, summary, {"statistics": stats}


def _cmd_power(args, setup, p, seed, filed):
    from .montecarlo import detection_power

    n = setup.n_samples if args.n is None else args.n
    reps = 200 if args.repetitions is None else args.repetitions
    ns = 5.0 if args.n_sigma is None else args.n_sigma
    r = detection_power(setup, p, n, reps, seed, n_sigma=ns)
    cols = ["n", "repetitions", "n_sigma", "threshold_m2", "detection_rate", "false_positive_rate", "mean_s2_diff_m2"]
    rows = [[r.n, r.repetitions, r.n_sigma, r.threshold, r.detection_rate, r.false_positive_rate, r.mean_s2_diff]]
    params = {**_setup_dict(setup, p), "seed": seed}
    summary = f"n={n}: detection rate {r.detection_rate:.3f}, false-positive rate {r.false_positive_rate:.3f}"
    return params, cols, rows, summary, {}


def _cmd_feasibility(args, setup, p, seed, filed):
    from .analytic import sigma2_csl
    from .feasibility import SphereParams, collision_time, envelope, sigma2_rad
    from .params import CONSTANTS, convert_pressure

    la = p.lambda_alpha
    radius = args.radius_m if args.radius_m is not None else filed.get("radius", 1e-7)
    density = args.density_kg_m3 if args.density_kg_m3 is not None else filed.get("density", 1e3)
    ratio = setup.temperature_ext / CONSTANTS.T0
    s2c = sigma2_csl(setup, p)
    cols = ["variant", "lambda_alpha", "n_min", "t_i_max_K", "p_max_torr", "sigma2_rad_m2", "sigma2_csl_over_10_m2",
            "collision_time_s", "ten_n_t_s"]
    rows = []
    for variant, exact in (("rounded", False), ("exact", True)):
        env = envelope(la, exact=exact)
        sphere = SphereParams(radius=radius, density=density, internal_temperature=env.t_i_max)
        if args.pressure_ptorr is not None:
            p_ptorr = args.pressure_ptorr
        else:
            p_ptorr = convert_pressure(env.p_max, "Torr", "picoTorr")
        rows.append([variant, la, env.n_min, env.t_i_max, env.p_max, sigma2_rad(sphere, setup.t_flight), s2c / 10.0,
                     collision_time(p_ptorr, ratio), 10.0 * env.n_min * setup.t_flight])
    params = {**_setup_dict(setup, p), "radius_m": radius, "density_kg_m3": density}
    r = rows[0]
    summary = f"lambda*alpha = {la:g}: n >= {r[2]}, T_i < {r[3]:.4g} K, P < {r[4]:.3g} Torr"
    return params, cols, rows, summary, {}


def _cmd_scan(args, setup, p, seed, filed):
    from .feasibility import SCAN_CSV_HEADER, parse_grid, scan

    spec = args.grid or "1e-2:1e2:25log"
    grid = parse_grid(spec)
    res = scan(grid, exact=bool(args.exact))
    rows = [list(e.row()) for e in res]
    params = {"grid": spec, "exact": bool(args.exact)}
    summary = (f"{len(rows)} points, lambda*alpha {grid[0]:g}..{grid[-1]:g}: n_min {rows[0][1]}..{rows[-1][1]}")
    return params, list(SCAN_CSV_HEADER), rows, summary, {}


def _cmd_region(args, setup, p, seed, filed):
    from .feasibility import accessible_region, load_exclusion_csv, parse_grid

    gl = args.grid_log10_lambda or "-20:4:25lin"
    ga = args.grid_log10_alpha or "-4:20:25lin"
    reg = accessible_region(1e4 if args.alpha_max is None else args.alpha_max,
                            1.0 if args.lambda_alpha_min is None else args.lambda_alpha_min)
    ll, aa = parse_grid(gl), parse_grid(ga)
    poly = load_exclusion_csv(args.exclusion) if args.exclusion else None
    rows = [list(r) for r in reg.grid_rows(ll, aa, exclusion=poly)]
    cols = ["log10_lambda", "log10_alpha", "inside"] + (["excluded"] if poly is not None else [])
    boundary = reg.boundary((float(ll.min()), float(ll.max())), (float(aa.min()), float(aa.max())))
    params = {"grid_log10_lambda": gl, "grid_log10_alpha": ga, "alpha_max": reg.alpha_max,
              "lambda_alpha_min": reg.lambda_alpha_min, "exclusion": args.exclusion}
    n_in = sum(int(r[2]) for r in rows)
    summary = f"{n_in} of {len(rows)} grid points inside the accessible region"
    return params, cols, rows, summary, {"boundary_log10": boundary.tolist()}


COMMANDS = {
    "variances": _cmd_variances,
    "propagate-check": _cmd_propagate_check,
    "residual-check": _cmd_residual_check,
    "simulate": _cmd_simulate,
    "power": _cmd_power,
    "feasibility": _cmd_feasibility,
    "scan": _cmd_scan,
    "region": _cmd_region,
}


# --- rendering ----------------------------------------------------------------


def _cell(v):
    if hasattr(v, "item"):  # numpy scalar
        v = v.item()
    if isinstance(v, float):
        return repr(v)
    return v


def _plain(v):
    if hasattr(v, "item"):
        return v.item()
    return v


def _render(command, fmt, params, cols, rows, extra) -> str:
    if cols is None:  # trial set
        trials = rows
        if fmt == "csv":
            return trials.to_csv_text()
        cols = ["trial", "component", "x1_m", "x2_m", "X_m", "xi_m"]
        rows = [list(r) for r in trials.records()]
    refs = {c: FORMULAS[c] for c in cols if c in FORMULAS}
    if command == "propagate-check":
        refs.update({k: FORMULAS[k] for k in ("quadrature", "analytic", "moment_ode")})
    elif command == "residual-check":
        refs["residual"] = FORMULAS["residual"]
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        for r in rows:
            w.writerow([_cell(v) for v in r])
        return buf.getvalue()
    doc = {
        "command": command,
        "params": params,
        "results": [{c: _plain(v) for c, v in zip(cols, r)} for r in rows],
        "provenance": {"formula_refs": refs},
    }
    for k, v in extra.items():
        if k != "failed":
            doc[k] = v
    return json.dumps(doc, indent=1, allow_nan=True) + "\n"


def _explain(command, cols) -> str:
    keys = list(cols or ["x1_m", "x2_m", "X_m", "xi_m"])
    if command == "propagate-check":
        keys += ["quadrature", "analytic", "moment_ode"]
    if command == "residual-check":
        keys += ["residual"]
    keys = [k for k in dict.fromkeys(keys) if k in FORMULAS]
    return "".join(f"{k}: {FORMULAS[k]}\n" for k in keys)


def run(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    threads = _peek_threads(argv)
    if threads is not None and threads > 0 and "NUMBA_NUM_THREADS" not in os.environ:
        # numba reads this once at import; the pool must be at least as large as requested
        os.environ["NUMBA_NUM_THREADS"] = str(threads)

    parser = build_parser()
    args = parser.parse_args(argv)

    from ._accel import set_threads
    from ._files import atomic_write_text
    from .errors import CslWalkError

    global np
    import numpy as np

    try:
        _apply_env(parser, args)
        if args.threads is not None and args.threads < 1:
            raise UsageError("--threads must be >= 1")
        set_threads(args.threads)
        setup, p, seed, filed = _resolve(args)
        fmt = args.format or "csv"
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            params, cols, rows, summary, extra = COMMANDS[args.command](args, setup, p, seed, filed)
        text = _render(args.command, fmt, params, cols, rows, extra)
        if args.output:
            atomic_write_text(args.output, text)
            print(summary)
        else:
            sys.stdout.write(text)
            sys.stderr.write(summary + "\n")
        if args.explain:
            expl_cols = cols if cols is not None else None
            sys.stderr.write(_explain(args.command, expl_cols))
        failure = extra.get("failed")
        if failure:
            raise failure
    except UsageError as e:
        _emit_error(e.category, str(e))
        return e.exit_code
    except CslWalkError as e:
        _emit_error(e.category, str(e))
        return e.exit_code
    except OSError as e:
        _emit_error("io", str(e))
        return 1
    return 0


def main(argv=None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
