"""Command-line interface for scenario simulation, regret experiments,
system identification, and filtering demos.

Subcommands
-----------
``scenarios``
    List the built-in benchmark scenarios.
``simulate``
    Run a controller on a scenario and write the per-step trajectory
    report (no comparator).
``regret``
    Run a controller and an offline hindsight comparator, reporting
    average regret.
``sysid``
    Run the explore/identify/exploit pipeline against a black-box system.
``filter``
    Track a noisy linear system with the predictive Kalman recursion.
``spectral``
    Learn an input-to-output map online with spectral filtering.

All subcommands accept ``--config PATH`` (scenario file), ``--seed N``,
``--out DIR`` (artifact directory), and ``--horizon T``.  Exit codes:
0 on success, 2 on configuration errors, 3 on numerical failures.
"""

from __future__ import annotations

import argparse
import os
import sys
from typing import Optional

import numpy as np

from .errors import ConfigurationError, EvaluationError
from .filtering import (
    KalmanState,
    OnlineSpectralFilter,
    SpectralPredictor,
    cached_basis,
    kalman_step,
    spectral_basis,
)
from .harness import (
    ScenarioConfig,
    component_seed,
    config_from_preset,
    generate_perturbations,
    load_config,
    report_summary,
    run_experiment,
    scenario_presets,
    write_report_csv,
)
from .lds_core import PerturbationSource
from .serialize import write_csv, write_json_summary
from .sysid import BlackBoxSystem, identify_then_control

__all__ = ["main"]


def _add_common_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", metavar="PATH", help="scenario config file")
    sub.add_argument("--seed", type=int, metavar="N", help="master seed")
    sub.add_argument("--out", metavar="DIR", help="artifact output directory")
    sub.add_argument("--horizon", type=int, metavar="T", help="number of steps")


def _add_scenario_flags(sub: argparse.ArgumentParser, controller: str) -> None:
    sub.add_argument(
        "--preset",
        default="scalar-0.9",
        help="benchmark scenario name (ignored with --config)",
    )
    sub.add_argument(
        "--controller",
        default=controller,
        choices=["zero", "linear", "lqr", "gpc", "grc"],
        help="controller kind (ignored with --config)",
    )
    sub.add_argument("--h", type=int, help="learner window length")
    sub.add_argument("--radius", type=float, help="learner projection radius")
    sub.add_argument("--step-size", type=float, help="learner step-size scale")


def _scenario_config(args: argparse.Namespace, default_horizon: int) -> ScenarioConfig:
    if args.config:
        overrides = {}
        if args.horizon is not None:
            overrides["horizon"] = args.horizon
        if args.seed is not None:
            overrides["seed"] = args.seed
        if args.out is not None:
            overrides["out"] = args.out
        return load_config(args.config, overrides)
    controller = {"kind": getattr(args, "controller", "zero")}
    for key in ("h", "radius", "step_size"):
        value = getattr(args, key, None)
        if value is not None:
            controller[key] = value
    comparator = {}
    if getattr(args, "comparator", None):
        comparator["kind"] = args.comparator
    return config_from_preset(
        args.preset,
        controller=controller,
        horizon=args.horizon if args.horizon is not None else default_horizon,
        seed=args.seed if args.seed is not None else 0,
        comparator=comparator,
        out_dir=args.out,
    )


def _cmd_scenarios(args: argparse.Namespace) -> int:
    for name, bp in sorted(scenario_presets().items()):
        print(
            f"{name:18s} d_x={bp.system.d_x} d_u={bp.system.d_u} "
            f"cost_on={bp.cost_on:11s} {bp.description}"
        )
    return 0


def _cmd_simulate(args: argparse.Namespace) -> int:
    config = _scenario_config(args, default_horizon=100)
    config.comparator = {"kind": "none"}
    report = run_experiment(config)
    print(
        f"{config.name}: controller={report.controller} T={report.horizon} "
        f"seed={report.seed} total_cost={report.total_cost:.6g} "
        f"gamma={report.gamma:.6g}"
    )
    if config.out_dir:
        print(f"artifacts written to {config.out_dir}")
    return 0


def _cmd_regret(args: argparse.Namespace) -> int:
    config = _scenario_config(args, default_horizon=500)
    report = run_experiment(config)
    print(
        f"{config.name}: controller={report.controller} "
        f"comparator={report.comparator} T={report.horizon} "
        f"seed={report.seed} total_cost={report.total_cost:.6g} "
        f"comparator_cost={report.comparator_total_cost:.6g} "
        f"avg_regret={report.final_avg_regret:.6g}"
    )
    if config.out_dir:
        print(f"artifacts written to {config.out_dir}")
    return 0


def _cmd_sysid(args: argparse.Namespace) -> int:
    config = _scenario_config(args, default_horizon=2000)
    if config.cost_on != "state":
        raise ConfigurationError(
            "the identification pipeline needs a state cost; pick a preset "
            "whose cost consumes states"
        )
    T = config.horizon
    source = config.perturbation
    if config.noise_embedding is not None:
        w = generate_perturbations(
            source, T, config.system.d_x, config.seed, config.noise_embedding
        )
        source = PerturbationSource.recorded(w)
    box = BlackBoxSystem(
        config.system, source, seed=config.seed, x0=config.x0
    )
    gpc = {
        key: config.controller[key]
        for key in ("h", "radius", "step_size", "H_trunc")
        if key in config.controller
    }
    report = identify_then_control(
        box,
        T,
        config.cost,
        k=args.k if args.k is not None else config.system.d_x,
        seed=config.seed,
        **gpc,
    )
    extras = report.extras
    print(
        f"{config.name}: T={T} T0={extras['T0']} k={extras['k']} "
        f"explore_steps={extras['n_explore']} sigma_min={extras['sigma_min']:.3g} "
        f"residual={extras['residual']:.3g} A_error={extras['A_error']:.3g} "
        f"B_error={extras['B_error']:.3g} avg_regret={report.final_avg_regret:.6g}"
    )
    if config.out_dir:
        os.makedirs(config.out_dir, exist_ok=True)
        write_report_csv(report, os.path.join(config.out_dir, "report.csv"))
        write_json_summary(
            os.path.join(config.out_dir, "summary.json"), report_summary(report)
        )
        print(f"artifacts written to {config.out_dir}")
    return 0


def _cmd_filter(args: argparse.Namespace) -> int:
    config = _scenario_config(args, default_horizon=200)
    T = config.horizon
    system = config.system
    d_x = system.d_x
    Sigma_x = (args.process_noise**2) * np.eye(d_x)

    w = generate_perturbations(
        PerturbationSource.gaussian(sigma=args.process_noise),
        T,
        d_x,
        config.seed,
    )
    rng_obs = np.random.default_rng(component_seed(config.seed, "measurement"))

    x = np.zeros(d_x) if config.x0 is None else config.x0.copy()
    state = KalmanState(x_hat=np.zeros(d_x), Sigma=Sigma_x)
    rows = []
    state_sq = obs_sq = 0.0
    for t in range(T):
        A_t, _, C_t = system.matrices(t)
        C_t = np.eye(d_x) if C_t is None else C_t
        d_y = C_t.shape[0]
        Sigma_y = (args.obs_noise**2) * np.eye(d_y)
        y = C_t @ x + args.obs_noise * rng_obs.standard_normal(d_y)
        state_err = float(np.linalg.norm(state.x_hat - x))
        obs_err = float(np.linalg.norm(C_t @ state.x_hat - y))
        rows.append([t + 1, state_err, obs_err, float(np.trace(state.Sigma))])
        state_sq += state_err**2
        obs_sq += obs_err**2
        state = kalman_step(state, A_t, None, C_t, Sigma_x, Sigma_y, y=y)
        x = A_t @ x + w[t]
    summary = {
        "name": config.name,
        "horizon": T,
        "seed": config.seed,
        "process_noise": args.process_noise,
        "obs_noise": args.obs_noise,
        "mse_state": state_sq / T,
        "mse_obs": obs_sq / T,
    }
    print(
        f"{config.name}: kalman T={T} seed={config.seed} "
        f"mse_state={summary['mse_state']:.6g} mse_obs={summary['mse_obs']:.6g}"
    )
    if config.out_dir:
        os.makedirs(config.out_dir, exist_ok=True)
        write_csv(
            os.path.join(config.out_dir, "filter.csv"),
            ["t", "state_error", "obs_error", "sigma_trace"],
            rows,
        )
        write_json_summary(os.path.join(config.out_dir, "summary.json"), summary)
        print(f"artifacts written to {config.out_dir}")
    return 0


def _cmd_spectral(args: argparse.Namespace) -> int:
    config = _scenario_config(args, default_horizon=500)
    T = config.horizon
    system = config.system
    h = args.filters
    if config.out_dir:
        basis = cached_basis(T, h, config.out_dir)
    else:
        basis = spectral_basis(T, h)

    rng = np.random.default_rng(component_seed(config.seed, "excitation"))
    predictor = SpectralPredictor.zeros(
        basis,
        d_y=system.d_y,
        d_u=system.d_u,
        kappa=args.kappa,
        step_scale=args.step_size if args.step_size is not None else 0.1,
    )
    online = OnlineSpectralFilter(predictor, d_u=system.d_u)

    x = np.zeros(system.d_x) if config.x0 is None else config.x0.copy()
    rows = []
    running = 0.0
    for t in range(T):
        A_t, B_t, C_t = system.matrices(t)
        C_t = np.eye(system.d_x) if C_t is None else C_t
        u = rng.integers(0, 2, size=system.d_u).astype(float) * 2.0 - 1.0
        x = A_t @ x + B_t @ u
        y = C_t @ x
        online.step(u, y)
        running += online.losses[-1]
        rows.append([t + 1, online.losses[-1], running / (t + 1)])
    losses = np.array(online.losses)
    last_quarter = float(losses[3 * T // 4 :].mean()) if T >= 4 else float(losses.mean())
    summary = {
        "name": config.name,
        "horizon": T,
        "seed": config.seed,
        "filters": h,
        "avg_loss": float(losses.mean()),
        "last_quarter_avg_loss": last_quarter,
    }
    print(
        f"{config.name}: spectral T={T} filters={h} seed={config.seed} "
        f"avg_loss={summary['avg_loss']:.6g} "
        f"last_quarter={summary['last_quarter_avg_loss']:.6g}"
    )
    if config.out_dir:
        os.makedirs(config.out_dir, exist_ok=True)
        write_csv(
            os.path.join(config.out_dir, "spectral.csv"),
            ["t", "sq_error", "avg_loss"],
            rows,
        )
        write_json_summary(os.path.join(config.out_dir, "summary.json"), summary)
        print(f"artifacts written to {config.out_dir}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nscontrol",
        description="Online control experiments: simulation, regret, "
        "identification, and filtering.",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    sub = subs.add_parser("scenarios", help="list built-in scenarios")
    _add_common_flags(sub)
    sub.set_defaults(func=_cmd_scenarios)

    sub = subs.add_parser("simulate", help="run a controller, no comparator")
    _add_common_flags(sub)
    _add_scenario_flags(sub, controller="lqr")
    sub.set_defaults(func=_cmd_simulate)

    sub = subs.add_parser("regret", help="run a controller against a comparator")
    _add_common_flags(sub)
    _add_scenario_flags(sub, controller="gpc")
    sub.add_argument(
        "--comparator",
        choices=["best-dac", "best-drc", "best-linear", "zero", "none"],
        help="comparator kind (default: matched to the controller)",
    )
    sub.set_defaults(func=_cmd_regret)

    sub = subs.add_parser("sysid", help="explore, identify, then control")
    _add_common_flags(sub)
    _add_scenario_flags(sub, controller="gpc")
    sub.add_argument("--k", type=int, help="controllability index (default d_x)")
    sub.set_defaults(func=_cmd_sysid)

    sub = subs.add_parser("filter", help="Kalman-filter a noisy scenario")
    _add_common_flags(sub)
    sub.add_argument("--preset", default="scalar-0.9", help="scenario name")
    sub.add_argument(
        "--process-noise", type=float, default=0.1, help="process noise level"
    )
    sub.add_argument(
        "--obs-noise", type=float, default=0.1, help="observation noise level"
    )
    sub.set_defaults(func=_cmd_filter)

    sub = subs.add_parser("spectral", help="online spectral filtering demo")
    _add_common_flags(sub)
    sub.add_argument("--preset", default="scalar-0.9", help="scenario name")
    sub.add_argument("--filters", type=int, default=20, help="number of filters")
    sub.add_argument("--step-size", type=float, help="learner step-size scale")
    sub.add_argument("--kappa", type=float, default=10.0, help="coefficient radius")
    sub.set_defaults(func=_cmd_spectral)

    return parser


def main(argv: Optional[list] = None) -> int:
    """Entry point; returns the process exit code."""
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except EvaluationError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
