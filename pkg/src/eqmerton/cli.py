"""Command-line pipelines: solve, verify, compare, simulate.

Every command reads one config (INI, or a JSON manifest from a previous run),
writes CSV outputs plus a manifest with the fully resolved parameters into the
output directory, and uses deterministic formatting so identical configs give
byte-identical files.

Exit codes: 0 success, 2 config error, 3 solver non-convergence,
4 verification failure.

Config sections and keys (INI):

    [market]    r, sigma, and exactly one of alpha | mu
    [utility]   p
    [discount]  kind = exponential | mixture | hyperbolic;
                rho (exponential); betas, rhos (mixture, comma lists);
                k, gamma (hyperbolic)
    [grid]      horizon, n_steps
    [solver]    method = picard | mixture | closed_form, tol, max_iter,
                damping, mixture_terms, rho_min, rho_max, rho_count
    [sim]       n_paths, seed, x0, n_workers, block_size
    [output]    dir
    [compare]   labels (comma list), probe_times (comma list); one
                [discount.<label>] section per label
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import duality, policy, simulate, solver
from .config import ConfigError, RunConfig, load_config
from .model import ExponentialDiscount, ExponentialMixtureDiscount, ParameterError
from .output import write_csv, write_manifest
from .simulate import STAT_THRESHOLD, SimConfig, Spike

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NONCONVERGENCE = 3
EXIT_VERIFICATION = 4


def _solve_curve(cfg: RunConfig, d=None):
    """Solve the value coefficient with the configured method.

    Returns (curve, fit_report_or_None)."""
    d = d if d is not None else cfg.discount
    if d is None:
        raise ConfigError("no [discount] section configured")
    s = cfg.solver
    if s.method == "picard":
        return (
            solver.picard_solve(cfg.market, cfg.utility, d, cfg.grid,
                                tol=s.tol, max_iter=s.max_iter, damping=s.damping),
            None,
        )
    if s.method == "mixture":
        if isinstance(d, ExponentialMixtureDiscount):
            return solver.mixture_ode_solve(cfg.market, cfg.utility, d, cfg.grid), None
        rho_grid = np.geomspace(s.rho_min, s.rho_max, s.rho_count)
        fit = solver.fit_exponential_mixture(d, s.mixture_terms, rho_grid, cfg.grid)
        return (
            solver.mixture_ode_solve(cfg.market, cfg.utility, fit.mixture, cfg.grid),
            fit,
        )
    if s.method == "closed_form":
        if not isinstance(d, ExponentialDiscount):
            raise ConfigError(
                "method closed_form applies only to exponential discounting"
            )
        return solver.theta_closed_form(cfg.market, cfg.utility, d.rho, cfg.grid), None
    raise ConfigError(f"unknown solver method {s.method!r}")


def _lambda_rows(curve, u):
    cons = curve.consumption_rate(u)
    t = curve.grid.nodes
    for i in range(len(t)):
        yield (t[i], curve.values[i], curve.derivative[i], cons[i])


def _manifest_payload(cfg: RunConfig, command: str, extra: dict | None = None) -> dict:
    payload = {"command": command, "config": cfg.to_dict()}
    if extra:
        payload.update(extra)
    return payload


def cmd_solve(cfg: RunConfig, out: Path) -> int:
    bounds = solver.a_priori_bounds(cfg.market, cfg.utility, cfg.discount, cfg.grid)
    write_csv(out / "bounds.csv", ["A", "lower", "upper"],
              [(bounds.A, bounds.lower, bounds.upper)])
    try:
        curve, fit = _solve_curve(cfg)
    except solver.NonConvergenceError as exc:
        write_manifest(out / "manifest.json", _manifest_payload(cfg, "solve", {
            "error": "non_convergence",
            "iterations": exc.iterations,
            "last_delta": exc.last_delta,
        }))
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    write_csv(out / "lambda.csv", ["t", "lambda", "lambda_prime", "consumption_rate"],
              _lambda_rows(curve, cfg.utility))
    res_ie = solver.residual_integral_equation(curve, cfg.market, cfg.utility, cfg.discount)
    res_df = solver.residual_differential_form(curve, cfg.market, cfg.utility, cfg.discount)
    write_csv(out / "residuals.csv", ["check", "value"],
              [("integral_equation", res_ie), ("differential_form", res_df)])
    extra = {"provenance": curve.provenance, "bounds_contain": bounds.contains(curve.values)}
    if fit is not None:
        extra["mixture_fit"] = {
            "betas": list(fit.mixture.betas),
            "rhos": list(fit.mixture.rhos),
            "sup_error_h": fit.sup_error_h,
            "sup_error_h_prime": fit.sup_error_h_prime,
        }
    write_manifest(out / "manifest.json", _manifest_payload(cfg, "solve", extra))
    return EXIT_OK


ALL_CHECKS = ("value_identity", "martingale", "perturbation", "duality")


def cmd_verify(cfg: RunConfig, out: Path, perturb_lambda: float = 0.0,
               checks: tuple = ALL_CHECKS) -> int:
    m, u, d, g = cfg.market, cfg.utility, cfg.discount, cfg.grid
    unknown = set(checks) - set(ALL_CHECKS)
    if unknown:
        raise ConfigError(f"unknown check(s) {sorted(unknown)}; "
                          f"choose from {list(ALL_CHECKS)}")
    curve, _ = _solve_curve(cfg)
    pol = policy.equilibrium_policy(curve, m, u)
    sim_cfg = SimConfig(n_paths=cfg.sim.n_paths, seed=cfg.sim.seed, grid=g,
                        x0=cfg.sim.x0, n_workers=cfg.sim.n_workers,
                        block_size=cfg.sim.block_size)
    rows = []

    if "value_identity" in checks:
        vv = simulate.verify_value_identity(
            curve, sim_cfg, m, u, d, t=0.0, x=cfg.sim.x0, policy=pol,
            target_scale=1.0 + perturb_lambda)
        rows.append(vv)

    nc_curve = solver.solve_no_consumption(m, u, d, g)
    if "martingale" in checks:
        flat, decreasing = simulate.martingale_check(nc_curve, sim_cfg, m, u, d)
        rows.extend([flat, decreasing])

    if "perturbation" in checks:
        rows.extend(_perturbation_verdicts(pol, sim_cfg, m, u, d, g))

    if "duality" in checks:
        rows.extend(_duality_verdicts(nc_curve, u, m, d, g))

    write_csv(out / "verification.csv", ["check", "statistic", "threshold", "pass"],
              [(v.name, v.statistic, v.threshold, v.passed) for v in rows])
    write_manifest(out / "manifest.json", _manifest_payload(cfg, "verify", {
        "perturb_lambda": perturb_lambda,
        "checks": list(checks),
        "all_passed": all(v.passed for v in rows),
    }))
    if not all(v.passed for v in rows):
        for v in rows:
            if not v.passed:
                print(f"FAILED: {v.name} statistic={v.statistic:.4g}", file=sys.stderr)
        return EXIT_VERIFICATION
    return EXIT_OK


def _perturbation_verdicts(pol, sim_cfg, m, u, d, g) -> list:
    gross = simulate.perturbation_test(
        pol, sim_cfg, m, u, d, t=0.0, epsilons=[0.25 * g.horizon],
        spike=Spike(zeta=pol.stock_fraction + 1.0),
    )[0]
    small = simulate.perturbation_test(
        pol, sim_cfg, m, u, d, t=0.0, epsilons=[0.1 * g.horizon],
        spike=Spike(zeta=pol.stock_fraction + 0.01),
    )[0]
    return [
        simulate.Verdict(
            name="perturbation_gross_spike", statistic=gross.z,
            threshold=STAT_THRESHOLD, passed=bool(gross.z > STAT_THRESHOLD),
            details=f"D={gross.d_estimate:.4g} se={gross.std_error:.3g}",
        ),
        simulate.Verdict(
            name="perturbation_first_order_stationarity", statistic=small.z,
            threshold=STAT_THRESHOLD, passed=bool(abs(small.z) <= STAT_THRESHOLD),
            details=f"D={small.d_estimate:.4g} se={small.std_error:.3g}",
        ),
    ]


def _duality_verdicts(nc_curve, u, m, d, g) -> list:
    dv = duality.dual_from_primal(nc_curve, u)
    res_dual = duality.dual_pde_residual(dv, m, d)
    pts = [(i, x) for i in (0, g.n_steps // 2, g.n_steps) for x in (0.5, 1.0, 2.0)]
    rt = duality.primal_dual_roundtrip(dv, u, pts)
    return [
        simulate.Verdict(
            name="dual_pde_residual", statistic=res_dual, threshold=1e-6,
            passed=bool(res_dual <= 1e-6), details="normalized sup residual",
        ),
        simulate.Verdict(
            name="primal_dual_roundtrip", statistic=rt, threshold=1e-6,
            passed=bool(rt <= 1e-6), details="max relative error",
        ),
    ]


def cmd_compare(cfg: RunConfig, out: Path) -> int:
    specs = dict(cfg.compare_discounts)
    if not specs:
        if cfg.discount is None:
            raise ConfigError("compare needs [compare] labels or a [discount] section")
        specs = {"default": cfg.discount}
    probes = cfg.probe_times or tuple(
        cfg.grid.horizon * f for f in (0.25, 0.5, 0.75)
    )
    rows = []
    failures = {}
    for label in specs:
        d = specs[label]
        try:
            curve, _ = _solve_curve(cfg, d=d)
        except (solver.NonConvergenceError, solver.StepFailureError) as exc:
            failures[label] = str(exc)
            continue
        cons = curve.consumption_rate(cfg.utility)
        t = curve.grid.nodes
        rows.extend(
            (label, t[i], cons[i], curve.values[i]) for i in range(len(t))
        )
        report = policy.inconsistency_report(
            cfg.market, cfg.utility, d, cfg.grid, probes,
            equilibrium=policy.equilibrium_policy(curve, cfg.market, cfg.utility,
                                                  verify=False),
        )
        write_csv(
            out / f"inconsistency_{label}.csv",
            ["t_probe", "c_precommit_0", "c_precommit_t", "c_equilibrium",
             "gap_naive", "gap_equilibrium"],
            [(r.t_probe, r.c_precommit_0, r.c_precommit_t, r.c_equilibrium,
              r.gap_naive, r.gap_equilibrium) for r in report],
        )
    write_csv(out / "compare.csv", ["spec_label", "t", "consumption_rate", "lambda"], rows)
    write_manifest(out / "manifest.json", _manifest_payload(cfg, "compare", {
        "labels": sorted(specs),
        "probe_times": list(probes),
        "failures": failures,
    }))
    return EXIT_OK


def cmd_simulate(cfg: RunConfig, out: Path) -> int:
    m, u, d, g = cfg.market, cfg.utility, cfg.discount, cfg.grid
    curve, _ = _solve_curve(cfg)
    pol = policy.equilibrium_policy(curve, m, u, verify=False)
    sim_cfg = SimConfig(n_paths=cfg.sim.n_paths, seed=cfg.sim.seed, grid=g,
                        x0=cfg.sim.x0, n_workers=cfg.sim.n_workers,
                        block_size=cfg.sim.block_size)
    batch = simulate.simulate_equilibrium(pol, sim_cfg, m, u, d,
                                          moment_orders=(u.p, 2 * u.p))
    t = g.nodes
    write_csv(out / "simulation.csv", ["t", "mean_wealth", "mean_value_over_h"],
              [(t[i], batch.mean_wealth[i], batch.mean_value_over_h[i])
               for i in range(len(t))])
    write_manifest(out / "manifest.json", _manifest_payload(cfg, "simulate", {
        "j_estimate": batch.j_estimate,
        "j_std_error": batch.j_std_error,
        "terminal_moments": {
            str(q): {"mean": mq, "std_error": sq}
            for q, (mq, sq) in batch.terminal_moments.items()
        },
        "value_at_start": float(curve.values[0]) * cfg.sim.x0**u.p / u.p,
    }))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="eqmerton",
        description="Equilibrium Merton policies under non-exponential discounting",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("solve", "verify", "compare", "simulate"):
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="INI config or JSON manifest")
        sp.add_argument("--out", default=None, help="output directory")
        sp.add_argument("--seed", type=int, default=None, help="override sim seed")
        sp.add_argument("--method", choices=["picard", "mixture", "closed_form"],
                        default=None, help="override solver method")
        if name == "verify":
            sp.add_argument("--debug-perturb-lambda", type=float, default=0.0,
                            help="negative control: scale the value identity "
                                 "target by (1 + x)")
            sp.add_argument("--checks", default=None,
                            help="comma-separated subset of "
                                 f"{','.join(ALL_CHECKS)}; empty string runs "
                                 "nothing (default: all)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = replace(cfg, sim=replace(cfg.sim, seed=args.seed))
        if args.method is not None:
            cfg = replace(cfg, solver=replace(cfg.solver, method=args.method))
        if args.out is not None:
            cfg = replace(cfg, output_dir=args.out)
        out = Path(cfg.output_dir)
        if args.command == "solve":
            return cmd_solve(cfg, out)
        if args.command == "verify":
            checks = ALL_CHECKS
            if args.checks is not None:
                checks = tuple(c.strip() for c in args.checks.split(",") if c.strip())
            return cmd_verify(cfg, out, perturb_lambda=args.debug_perturb_lambda,
                              checks=checks)
        if args.command == "compare":
            return cmd_compare(cfg, out)
        if args.command == "simulate":
            return cmd_simulate(cfg, out)
        raise ConfigError(f"unknown command {args.command!r}")
    except (ConfigError, ParameterError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
