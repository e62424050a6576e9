"""Command-line front end.

Subcommands: phi, jlo, patodi, ahat, fk, levy-area, localize, bridge-test,
selftest.  Configs and reports are JSON, time sweeps also emit CSV; formats
are documented in docs/formats.md.  Exit codes: 0 all verdicts pass, 1 a
numeric verdict failed, 2 usage or schema error.
"""

from __future__ import annotations

import argparse
import csv
import sys
import time

import numpy as np

from . import __version__, acceptance, clifford, jlo, phi_core
from .jsonio import (
    ConfigError,
    chain_from_json,
    dump_json,
    family_from_json,
    form_from_json,
    load_config,
    matrix_to_json,
    point_from_json,
    torus_model_from_json,
)
from .stochastic_mc import (
    fk_estimate,
    heat_kernel,
    levy_area_estimate,
    localization_check,
    sample_bridge_batch,
    spectral_phi_kernel,
)

EXIT_PASS, EXIT_NUMERIC, EXIT_USAGE = 0, 1, 2


def _args_echo(args) -> dict:
    return {k: v for k, v in vars(args).items() if k not in ("func",)}


def _report(command: str, config_echo, results: dict, verdicts: dict, started: float):
    import scipy

    digest_payload = {"results": _digestable(results), "verdicts": _digestable(verdicts)}
    return {
        "command": command,
        "config": config_echo,
        "results": results,
        "verdicts": verdicts,
        "timings": {"elapsed_s": time.time() - started},
        "versions": {
            "opcalc": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
        "results_digest": acceptance.digest_of(digest_payload),
    }


def _digestable(obj):
    if isinstance(obj, dict):
        return {k: _digestable(v) for k, v in sorted(obj.items())}
    if isinstance(obj, (list, tuple)):
        return [_digestable(v) for v in obj]
    if isinstance(obj, complex):
        return repr(obj)
    if isinstance(obj, float):
        return repr(obj)
    if isinstance(obj, np.ndarray):
        return [repr(v) for v in obj.ravel()]
    if isinstance(obj, (np.integer, np.floating, np.complexfloating, np.bool_)):
        return repr(obj)
    return obj


def _emit(report, out, verdicts) -> int:
    text = dump_json(report, out)
    if out:
        print(f"report written to {out}")
    else:
        print(text)
    return EXIT_PASS if all(verdicts.values()) else EXIT_NUMERIC


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _parse_t_grid(text: str):
    try:
        vals = tuple(float(v) for v in text.split(","))
    except ValueError:
        raise ConfigError("--t-grid", "expected comma-separated reals") from None
    if not vals or any(v <= 0 for v in vals):
        raise ConfigError("--t-grid", "need positive times")
    return vals


# --- subcommand handlers ----------------------------------------------------


def cmd_phi(args) -> int:
    started = time.time()
    cfg = load_config(args.config)
    fam = family_from_json(cfg)
    t = args.t if args.t is not None else cfg.get("t", 0.5)
    if t <= 0:
        raise ConfigError("--t", "t must be positive")
    methods = (
        ("fermionic", "quadrature", "ode") if args.method == "all" else (args.method,)
    )
    results = {}
    vals = {}
    for method in methods:
        if method == "fermionic":
            res = phi_core.phi_fermionic(fam, t)
        elif method == "quadrature":
            res = phi_core.phi_quadrature(fam, t, args.nodes)
        else:
            res = phi_core.phi_ode(fam, t, args.steps)
        vals[method] = res.value
        results[method] = {
            "t": t,
            "method": method,
            "value": matrix_to_json(res.value),
            "diagnostics": res.diagnostics,
        }
    verdicts = {}
    if len(methods) > 1:
        scale = max(np.linalg.norm(v) for v in vals.values())
        devs = {}
        worst = 0.0
        for i, a in enumerate(methods):
            for b in methods[i + 1:]:
                dev = float(np.linalg.norm(vals[a] - vals[b]) / max(scale, 1e-300))
                devs[f"{a}-{b}"] = dev
                worst = max(worst, dev)
        results["pairwise_relative_deviation"] = devs
        verdicts["cross_method_1e-6"] = worst <= 1e-6
    report = _report("phi", cfg, results, verdicts, started)
    return _emit(report, args.out, verdicts)


def cmd_jlo(args) -> int:
    started = time.time()
    cfg = load_config(args.config)
    d, chain = chain_from_json(cfg)
    t_grid = _parse_t_grid(args.t_grid)
    res = jlo.small_time_limit(
        chain, t_sequence=t_grid, truncation=args.truncation, d=d
    )
    rows = [
        {"chain": cfg.get("chain"), "t": t, "value_re": v.real, "value_im": v.imag}
        for t, v in res.sweep
    ]
    results = {
        "rows": rows,
        "extrapolated": res.extrapolated,
        "target": res.target,
        "relative_error": res.relative_error,
    }
    verdicts = {"within_2_percent": res.relative_error <= 0.02}
    if args.csv:
        _write_csv(
            args.csv,
            ["t", "value_re", "value_im"],
            [(t, v.real, v.imag) for t, v in res.sweep],
        )
    report = _report("jlo", cfg, results, verdicts, started)
    return _emit(report, args.out, verdicts)


def cmd_patodi(args) -> int:
    started = time.time()
    if args.d % 2 or args.d < 2:
        raise ConfigError("--d", "d must be a positive even integer")
    rep = clifford.build_spinor_rep(args.d)
    rng = np.random.default_rng(args.seed)
    worst_vanish = 0.0
    worst_top = 0.0
    for _ in range(args.words):
        if rep.l >= 2:
            order = int(rng.integers(1, rep.l))
            word = clifford.PatodiWord(
                tuple(_rand_antisym(rng, args.d) for _ in range(order))
            )
        else:
            word = clifford.PatodiWord(())
        worst_vanish = max(worst_vanish, clifford.patodi_vanishing(rep, word))
        factors = tuple(_rand_antisym(rng, args.d) for _ in range(rep.l))
        _, _, resid = clifford.patodi_top_identity(rep, factors)
        worst_top = max(worst_top, resid)
    results = {
        "d": args.d,
        "chirality_sign": rep.sigma,
        "worst_vanishing": worst_vanish,
        "worst_top_residual": worst_top,
        "words": args.words,
    }
    verdicts = {
        "vanishing_1e-10": worst_vanish <= 1e-10,
        "top_identity_1e-10": worst_top <= 1e-10,
    }
    report = _report("patodi", _args_echo(args), results, verdicts, started)
    return _emit(report, args.out, verdicts)


def _rand_antisym(rng, d):
    m = rng.standard_normal((d, d))
    return m - m.T


def cmd_ahat(args) -> int:
    started = time.time()
    cfg = load_config(args.config)
    if not isinstance(cfg, dict) or "d" not in cfg or "omega" not in cfg:
        raise ConfigError("config", "expected an object with 'd' and 'omega'")
    d = cfg["d"]
    if not isinstance(d, int) or d % 2 or d < 2:
        raise ConfigError("config.d", "d must be a positive even integer")
    omega = [
        [form_from_json(e, d, f"omega[{i}][{j}]") for j, e in enumerate(row)]
        for i, row in enumerate(cfg["omega"])
    ]
    series = clifford.a_hat_series(omega, d)
    results = {
        "coefficients": {
            format(mask, "b").zfill(d): {"re": c.real, "im": c.imag}
            for mask, c in sorted(series.coeffs.items())
        },
        "degree0": series.coefficient(0),
        "top": series.coefficient((1 << d) - 1),
    }
    verdicts = {"degree0_is_one": series.coefficient(0) == 1.0}
    report = _report("ahat", cfg, results, verdicts, started)
    return _emit(report, args.out, verdicts)


def cmd_fk(args) -> int:
    started = time.time()
    cfg = load_config(args.config)
    model = torus_model_from_json(cfg)
    t = args.t if args.t is not None else cfg.get("t", 0.5)
    x = point_from_json(cfg.get("x", [0.0] * model.d), model.d, "config.x")
    y = point_from_json(cfg.get("y", [0.0] * model.d), model.d, "config.y")
    paths = args.paths or cfg.get("paths", 20000)
    steps = args.steps or cfg.get("steps", 256)
    seed = args.seed if args.seed is not None else cfg.get("seed", 0)
    k = args.truncation or cfg.get("K", 14)
    oracle = spectral_phi_kernel(model, t, x, y, k)
    res = fk_estimate(model, t, x, y, paths, steps, seed=seed, workers=args.workers)
    # floor the stderr at the rounding scale so exact zero-variance cases pass
    floor = 1e-12 * max(float(np.abs(oracle).max()), 1e-300)
    z = np.abs(res.estimate - oracle) / np.maximum(res.stderr, floor)
    results = {
        "estimate": matrix_to_json(res.estimate),
        "stderr": matrix_to_json(res.stderr + 0j),
        "oracle": matrix_to_json(oracle),
        "z_scores": matrix_to_json(z + 0j),
        "diagnostics": res.diagnostics,
    }
    verdicts = {"within_3_stderr": bool(np.all(z <= 3.0))}
    report = _report("fk", cfg, results, verdicts, started)
    return _emit(report, args.out, verdicts)


def cmd_levy_area(args) -> int:
    started = time.time()
    cfg = load_config(args.config)
    if not isinstance(cfg, dict) or "d" not in cfg or "omega" not in cfg:
        raise ConfigError("config", "expected an object with 'd' and 'omega'")
    d = cfg["d"]
    omega = [
        [form_from_json(e, d, f"omega[{i}][{j}]") for j, e in enumerate(row)]
        for i, row in enumerate(cfg["omega"])
    ]
    paths = args.paths or cfg.get("paths", 10**5)
    steps = args.steps or cfg.get("steps", 512)
    seed = args.seed if args.seed is not None else cfg.get("seed", 0)
    res = levy_area_estimate(omega, d, paths, steps, seed=seed)
    oracle = clifford.a_hat_series(omega, d)
    top_mask = (1 << d) - 1
    diff = abs(res.top_mean - oracle.coefficient(top_mask))
    tol = 0.01 * max(1.0, abs(oracle.coefficient(top_mask)))
    results = {
        "estimate_top": res.top_mean,
        "stderr_top": res.top_stderr,
        "oracle_top": oracle.coefficient(top_mask),
        "difference": diff,
        "tolerance": tol,
        "diagnostics": res.diagnostics,
    }
    verdicts = {"within_tolerance": diff <= tol}
    report = _report("levy-area", cfg, results, verdicts, started)
    return _emit(report, args.out, verdicts)


def cmd_localize(args) -> int:
    started = time.time()
    cfg = load_config(args.config)
    d, chain = chain_from_json(cfg)
    t_grid = _parse_t_grid(args.t_grid)
    res = localization_check(
        chain,
        t_sequence=t_grid,
        truncation=args.truncation or 14,
        mc_paths=args.paths or 0,
        mc_steps=args.steps or 256,
        seed=args.seed if args.seed is not None else 0,
    )
    results = {
        "sweep": [{"t": t, "value": v} for t, v in res.sweep],
        "extrapolated": res.extrapolated,
        "target": res.target,
        "relative_error": res.relative_error,
        "mc_check": res.mc_check,
    }
    verdicts = {"within_2_percent": res.relative_error <= 0.02}
    if res.mc_check is not None:
        verdicts["mc_within_3_stderr"] = res.mc_check["z"] <= 3.0
    if args.csv:
        _write_csv(
            args.csv,
            ["t", "value_re", "value_im"],
            [(t, v.real, v.imag) for t, v in res.sweep],
        )
    report = _report("localize", cfg, results, verdicts, started)
    return _emit(report, args.out, verdicts)


def cmd_bridge_test(args) -> int:
    started = time.time()
    import scipy.stats

    d, t, steps = args.d, args.t, 2
    x = np.full(d, 0.8)
    y = np.full(d, 2.9)
    rng = np.random.Generator(
        np.random.Philox(key=np.array([args.seed, 0], dtype=np.uint64))
    )
    windings, positions = sample_bridge_batch(rng, d, x, y, t, steps, args.samples)
    endpoints_exact = bool(
        np.all(positions[:, 0, :] == x) and
        np.all(positions[:, -1, :] == y + 2 * np.pi * windings)
    )
    mid = np.mod(positions[:, 1, 0], 2 * np.pi)
    bins = args.bins
    edges = np.linspace(0, 2 * np.pi, bins + 1)
    counts, _ = np.histogram(mid, bins=edges)
    s = t / 2.0
    p_total = heat_kernel(d, t, x, y)
    probs = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        grid = np.linspace(lo, hi, 9)
        dens = []
        for z0 in grid:
            z = np.array([z0] + list(x[1:]))
            # marginal of the first coordinate: other coordinates integrate out
            dens.append(
                heat_kernel(1, s, x[:1], z[:1]) * heat_kernel(1, t - s, z[:1], y[:1])
            )
        probs.append(np.trapezoid(dens, grid))
    probs = np.asarray(probs) / heat_kernel(1, t, x[:1], y[:1])
    probs /= probs.sum()
    expected = probs * args.samples
    chi2 = float(np.sum((counts - expected) ** 2 / expected))
    crit = float(scipy.stats.chi2.ppf(0.99, bins - 1))
    results = {
        "chi2": chi2,
        "critical_1pct": crit,
        "bins": bins,
        "samples": args.samples,
        "endpoints_exact": endpoints_exact,
    }
    verdicts = {"chi2_pass": chi2 <= crit, "endpoints_exact": endpoints_exact}
    report = _report("bridge-test", _args_echo(args), results, verdicts, started)
    return _emit(report, args.out, verdicts)


def cmd_selftest(args) -> int:
    started = time.time()
    numbers = None
    if args.criteria:
        try:
            numbers = [int(v) for v in args.criteria.split(",")]
        except ValueError:
            raise ConfigError("--criteria", "expected comma-separated integers") from None
    results = acceptance.run_criteria(numbers, seed=args.seed or 0)
    for res in results:
        print(res.line())
    verdicts = {f"criterion_{r.number}": r.passed for r in results}
    results_json = {
        f"criterion_{r.number}": {
            "title": r.title,
            "passed": r.passed,
            "details": _digestable(r.details),
        }
        for r in results
    }
    report = _report("selftest", {"criteria": numbers or "all"}, results_json, verdicts, started)
    report["timings"]["criteria_s"] = {
        f"criterion_{r.number}": r.elapsed for r in results
    }
    code = _emit(report, args.out, verdicts)
    print(f"{sum(v for v in verdicts.values())}/{len(verdicts)} criteria passed")
    return code


# --- argument parsing -------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="opcalc",
        description="Iterated semigroup integrals, graded supertraces, and "
        "flat-torus path-integral estimators.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("--config", required=True, help="JSON config path")
        p.add_argument("--out", help="write the JSON report here")
        p.add_argument("--seed", type=int, default=None, help="RNG seed (default 0)")

    p = sub.add_parser("phi", help="evaluate the iterated integral three ways")
    common(p)
    p.add_argument("--method", choices=("quadrature", "fermionic", "ode", "all"), default="all")
    p.add_argument("--t", type=float, default=None)
    p.add_argument("--nodes", type=int, default=32, help="quadrature nodes per dim")
    p.add_argument("--steps", type=int, default=4096, help="ode steps")
    p.set_defaults(func=cmd_phi)

    p = sub.add_parser("jlo", help="flat-model small-time cocycle study")
    common(p)
    p.add_argument("--t-grid", default="1.6,0.8", help="comma-separated times")
    p.add_argument("--truncation", type=int, default=6)
    p.add_argument("--csv", help="write the t-sweep CSV here")
    p.set_defaults(func=cmd_jlo)

    p = sub.add_parser("patodi", help="filtration and top supertrace checks")
    common(p, config=False)
    p.add_argument("--d", type=int, default=4)
    p.add_argument("--words", type=int, default=50)
    p.set_defaults(func=cmd_patodi)

    p = sub.add_parser("ahat", help="curvature characteristic power series")
    common(p)
    p.set_defaults(func=cmd_ahat)

    p = sub.add_parser("fk", help="path estimator vs spectral oracle")
    common(p)
    p.add_argument("--t", type=float, default=None)
    p.add_argument("--paths", type=int, default=None)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--truncation", type=int, default=None)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_fk)

    p = sub.add_parser("levy-area", help="stochastic-area exponential vs series")
    common(p)
    p.add_argument("--paths", type=int, default=None)
    p.add_argument("--steps", type=int, default=None)
    p.set_defaults(func=cmd_levy_area)

    p = sub.add_parser("localize", help="flat-model localization check")
    common(p)
    p.add_argument("--t-grid", default="0.8,0.4")
    p.add_argument("--truncation", type=int, default=None)
    p.add_argument("--paths", type=int, default=None, help="MC cross-check paths")
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--csv", help="write the t-sweep CSV here")
    p.set_defaults(func=cmd_localize)

    p = sub.add_parser("bridge-test", help="bridge cylinder-law chi-squared test")
    common(p, config=False)
    p.add_argument("--d", type=int, default=1)
    p.add_argument("--t", type=float, default=0.7)
    p.add_argument("--samples", type=int, default=10**5)
    p.add_argument("--bins", type=int, default=40)
    p.set_defaults(func=cmd_bridge_test)

    p = sub.add_parser("selftest", help="run the acceptance criteria")
    common(p, config=False)
    p.add_argument("--criteria", help="comma-separated criterion numbers (default all)")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_selftest)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits with 2 on usage errors already
        return int(exc.code) if exc.code else 0
    if args.seed is None and hasattr(args, "seed"):
        args.seed = 0
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
