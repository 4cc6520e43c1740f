"""Command-line front end: simulate, estimate, mc, rates, qq, coverage.

Configuration comes from an optional JSON/TOML file plus flag overrides; every
failure exits nonzero with a one-line JSON error object on stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .estimate import augmented_mle
from .experiments import ExperimentPlan, run_plan
from .kernels import asymptotic_variance, kernel_by_name, scale_kernel
from .noise import NoiseModel
from .simulate import SimConfig, simulate_linear_exact, simulate_measured, simulate_semilinear_fd
from .spectral import Grid1D


class CLIError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CLIError(message)


def _add_common(parser):
    parser.add_argument("--config", help="JSON or TOML file with plan keys")
    parser.add_argument("--theta", type=float)
    parser.add_argument("--sigma", type=float)
    parser.add_argument("--gamma", type=float)
    parser.add_argument("--delta", type=str, help="comma-separated resolution levels")
    parser.add_argument("--x0", type=str, help="comma-separated measurement locations")
    parser.add_argument("--grid", type=int, help="number of spatial intervals M")
    parser.add_argument("--steps", type=int, help="number of time steps N")
    parser.add_argument("--horizon", type=float)
    parser.add_argument("--reps", type=int)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--workers", type=int)
    parser.add_argument("--out", type=str)
    parser.add_argument("--equation", choices=["linear", "allen_cahn", "burgers",
                                               "polynomial"])
    parser.add_argument("--poly", type=str, help="comma-separated reaction coefficients")
    parser.add_argument("--kernel", type=str, help="kernel name (phi3, ..., custom)")
    parser.add_argument("--kernel-poly", type=str,
                        help="comma-separated polynomial for the custom kernel")
    parser.add_argument("--alpha", type=float)
    parser.add_argument("--eps", type=float, help="plateau transition width")
    parser.add_argument("--initial", type=str, help="zero or plateau")
    parser.add_argument("--scheme", choices=["auto", "semi_implicit_fd", "spectral_exact"])
    parser.add_argument("--b-norm", choices=["spectral", "qv"], dest="b_norm")
    parser.add_argument("--exclude-clamped", action="store_true", default=None)
    parser.add_argument("--paper-scale", action="store_true", default=None,
                        help="use the full-scale study sizes (R=5000, N=1e5)")


def build_parser() -> _Parser:
    parser = _Parser(prog="spdemle", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, blurb in [
        ("simulate", "one trajectory, optionally dumped to disk"),
        ("estimate", "one replication end-to-end, report as JSON"),
        ("mc", "full Monte-Carlo plan"),
        ("rates", "RMSE-versus-delta rate study"),
        ("qq", "normal Q-Q data for normalized errors"),
        ("coverage", "confidence-interval coverage study"),
    ]:
        p = sub.add_parser(name, help=blurb)
        _add_common(p)
        if name == "simulate":
            p.add_argument("--dump", type=str, help="path base for the field dump")
            p.add_argument("--dump-format", choices=["csv", "npy"], default="csv")
            p.add_argument("--stride", type=int, default=1,
                           help="store every k-th time step")
        if name == "mc":
            p.add_argument("--mode", choices=["single", "rates", "qq", "coverage"],
                           default="single")
    return parser


def _parse_list(text):
    return tuple(float(v) for v in str(text).split(",") if v != "")


def _load_config(path: str) -> dict:
    p = Path(path)
    if not p.exists():
        raise CLIError(f"config file {path} not found")
    if p.suffix == ".toml":
        try:
            import tomllib
        except ModuleNotFoundError:
            import tomli as tomllib
        return tomllib.loads(p.read_text())
    return json.loads(p.read_text())


_PLAN_KEYS = {
    "theta": "theta", "sigma": "sigma", "gamma": "gamma", "horizon": "horizon",
    "grid": "grid_size", "steps": "time_steps", "delta": "delta_grid",
    "x0": "x0_list", "reps": "replications", "seed": "base_seed",
    "equation": "equation", "poly": "poly_coefficients", "kernel": "kernel_name",
    "kernel_poly": "kernel_poly", "alpha": "alpha", "eps": "plateau_eps",
    "initial": "initial_condition", "scheme": "scheme", "b_norm": "b_norm_source",
    "exclude_clamped": "exclude_clamped", "workers": "workers", "out": "out_dir",
}
_LIST_KEYS = {"delta_grid", "x0_list", "poly_coefficients", "kernel_poly"}


def _plan_from_args(args, mode: str) -> ExperimentPlan:
    settings: dict = {}
    if args.config:
        raw = _load_config(args.config)
        for key, value in raw.items():
            plan_key = _PLAN_KEYS.get(key, key)
            settings[plan_key] = value
    for flag, plan_key in _PLAN_KEYS.items():
        value = getattr(args, flag, None)
        if value is not None:
            settings[plan_key] = value
    for key in _LIST_KEYS & set(settings):
        value = settings[key]
        settings[key] = _parse_list(value) if isinstance(value, str) else tuple(value)
    settings.pop("mode", None)
    if getattr(args, "paper_scale", None):
        settings["replications"] = 5000
        settings["time_steps"] = 100_000
    if mode == "rates" and "delta_grid" not in settings:
        settings["delta_grid"] = (0.05, 0.0707, 0.1, 0.141, 0.2)
    return ExperimentPlan(mode=mode, **settings)


def _sim_config_from_plan(plan: ExperimentPlan, delta_index: int = 0) -> SimConfig:
    from .experiments import replication_seed
    return SimConfig(
        theta=plan.theta, noise=NoiseModel(plan.gamma, plan.sigma),
        nonlinearity=plan.nonlinearity(), grid=Grid1D(plan.grid_size),
        time_steps=plan.time_steps, horizon=plan.horizon,
        initial_condition=plan.initial_condition, plateau_eps=plan.plateau_eps,
        rng_seed=replication_seed(plan.base_seed, 0, delta_index),
        scheme=plan.resolved_scheme())


def _cmd_simulate(args) -> int:
    plan = _plan_from_args(args, "single")
    config = _sim_config_from_plan(plan)
    config.store_stride = args.stride
    if config.scheme == "spectral_exact":
        field = simulate_linear_exact(config)
    else:
        field = simulate_semilinear_fd(config)
    summary = {
        "rows": int(field.values.shape[0]),
        "columns": int(field.values.shape[1]),
        "final_min": float(field.values[-1].min()),
        "final_max": float(field.values[-1].max()),
        "seed": field.rng_seed,
    }
    if args.dump:
        path = field.dump(args.dump, args.dump_format)
        summary["dump"] = str(path)
    print(json.dumps(summary, indent=2))
    return 0


def _cmd_estimate(args) -> int:
    plan = _plan_from_args(args, "single")
    config = _sim_config_from_plan(plan)
    grid = config.grid
    spec = plan.kernel_spec()
    delta = plan.delta_grid[0]
    x0 = plan.x0_list[0]
    scaled = scale_kernel(spec, delta, x0, grid)
    series = simulate_measured(config, [scaled])[0]
    theta_sigma = asymptotic_variance(spec, plan.theta, plan.horizon)
    report = augmented_mle(series, alpha=plan.alpha,
                           b_norm_source=plan.b_norm_source, theta_sigma=theta_sigma)
    payload = report.to_dict()
    payload["b_norm_sq_qv"] = series.b_norm_sq_qv
    if plan.out_dir:
        out = Path(plan.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "estimate.json").write_text(json.dumps(payload, indent=2))
    print(json.dumps(payload, indent=2))
    return 0


def _cmd_plan(args, mode: str) -> int:
    plan = _plan_from_args(args, mode)
    result = run_plan(plan)
    summary = {
        "content_hash": plan.content_hash(),
        "completed": result.manifest["completed"],
        "excluded": result.manifest["excluded"],
        "out_dir": plan.out_dir,
    }
    for (delta, x0), cell in result.results.items():
        key = f"delta={delta:g},x0={x0:g}"
        summary[key] = {"rmse": cell.rmse, "coverage": cell.coverage}
    if "rate_fits" in result.manifest:
        summary["rate_fits"] = result.manifest["rate_fits"]
    print(json.dumps(summary, indent=2))
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "simulate":
            return _cmd_simulate(args)
        if args.command == "estimate":
            return _cmd_estimate(args)
        if args.command == "mc":
            return _cmd_plan(args, args.mode)
        return _cmd_plan(args, args.command)
    except CLIError as exc:
        print(json.dumps({"error": "usage", "message": str(exc)}), file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}),
              file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
