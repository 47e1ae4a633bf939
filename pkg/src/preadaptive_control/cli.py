"""Command-line front end: scenario files, trace/summary output, subcommands.

Subcommands:
  run        simulate one scenario file, write trace.csv + summary.yaml
  compare    run two scenario files and tabulate per-phase peak reductions
  grad-check validate the sensitivity-ODE gradient against finite differences

Exit codes: 0 ok, 2 config error, 3 divergence, 4 tolerance failure.
"""

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
import yaml

from .attention import AttentionConfig
from .dynamics import PlantConfig, ThetaSchedule
from .errors import ConfigError, DivergenceError
from .learner import GradientMode
from .preadapt import PreadaptNet
from .simengine import (
    PreadaptSettings,
    RunConfig,
    build_b747,
    compare_results,
    grad_check,
    run,
    scenario_schedule,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGED = 3
EXIT_TOLERANCE = 4

_GRAD_CHECK_TOL = 1e-3


# --------------------------------------------------------------------------
# scenario file parsing (strict: unknown keys are config errors)

def _check_keys(section, allowed, where):
    if not isinstance(section, dict):
        raise ConfigError(f"'{where}' must be a mapping")
    unknown = set(section) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown key '{sorted(unknown)[0]}' in '{where}'")


def _parse_plant(node):
    if node == "b747":
        return build_b747()
    _check_keys(node, {"A", "B", "B1r", "output_index"}, "plant")
    try:
        return PlantConfig(
            A=np.asarray(node["A"], dtype=float),
            B=np.asarray(node["B"], dtype=float),
            B1r=np.asarray(node["B1r"], dtype=float),
            output_index=int(node["output_index"]),
        )
    except KeyError as exc:
        raise ConfigError(f"plant is missing key {exc}") from exc


def _parse_schedule(node, n):
    if isinstance(node, dict) and "scenario" in node:
        _check_keys(node, {"scenario"}, "schedule")
        return scenario_schedule(int(node["scenario"]), n=n)
    _check_keys(node, {"pieces", "horizon", "bounds"}, "schedule")
    try:
        pieces = [
            (float(p["t"]), np.asarray(p["theta"], dtype=float))
            for p in node["pieces"]
        ]
        horizon = float(node["horizon"])
    except (KeyError, TypeError) as exc:
        raise ConfigError("schedule pieces need 't' and 'theta' entries") from exc
    bounds = None
    if node.get("bounds") is not None:
        _check_keys(node["bounds"], {"lower", "upper"}, "schedule.bounds")
        bounds = (
            np.asarray(node["bounds"]["lower"], dtype=float),
            np.asarray(node["bounds"]["upper"], dtype=float),
        )
    return ThetaSchedule(pieces=pieces, horizon=horizon, bounds=bounds)


def _parse_attention(node):
    if node is None:
        return AttentionConfig(c_e=0.005, c_ed=0.02)
    _check_keys(
        node, {"c_e", "c_ed", "tau_f", "estimator", "omega_n", "zeta"}, "attention"
    )
    defaults = AttentionConfig(c_e=0.005, c_ed=0.02)
    return AttentionConfig(
        c_e=float(node.get("c_e", defaults.c_e)),
        c_ed=float(node.get("c_ed", defaults.c_ed)),
        tau_f=float(node.get("tau_f", defaults.tau_f)),
        estimator=str(node.get("estimator", defaults.estimator)),
        omega_n=float(node.get("omega_n", defaults.omega_n)),
        zeta=float(node.get("zeta", defaults.zeta)),
    )


def _parse_preadapt(node):
    if node is None:
        return PreadaptSettings()
    _check_keys(
        node,
        {"enabled", "learner", "gradient_mode", "gamma_pa", "hidden", "seed",
         "init_scale", "clip_norm", "weights"},
        "preadapt",
    )
    mode = str(node.get("gradient_mode", "approx"))
    if mode not in ("exact", "approx"):
        raise ConfigError(f"gradient_mode must be 'exact' or 'approx', got '{mode}'")
    net = None
    if node.get("weights") is not None:
        net = PreadaptNet.from_dict(node["weights"])
    return PreadaptSettings(
        enabled=bool(node.get("enabled", False)),
        learner_enabled=bool(node.get("learner", False)),
        gradient_mode=GradientMode(mode),
        gamma_pa=float(node.get("gamma_pa", 10.0)),
        hidden=int(node.get("hidden", 3)),
        seed=int(node.get("seed", 0)),
        init_scale=float(node.get("init_scale", 0.5)),
        clip_norm=None if node.get("clip_norm") is None else float(node["clip_norm"]),
        net=net,
    )


def load_scenario(path):
    """Parse and validate a scenario file into a RunConfig."""
    try:
        with open(path) as f:
            doc = yaml.safe_load(f)
    except OSError as exc:
        raise ConfigError(f"cannot read scenario file: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed scenario file: {exc}") from exc
    _check_keys(
        doc,
        {"plant", "schedule", "controller", "attention", "preadapt", "r", "dt",
         "x0", "theta_hat0"},
        "scenario",
    )
    for key in ("plant", "schedule"):
        if key not in doc:
            raise ConfigError(f"scenario file is missing '{key}'")

    plant = _parse_plant(doc["plant"])
    schedule = _parse_schedule(doc["schedule"], plant.n)

    ctrl_node = doc.get("controller") or {}
    _check_keys(ctrl_node, {"Q", "R", "gamma", "k0"}, "controller")
    Q = (
        np.eye(plant.n)
        if ctrl_node.get("Q") in (None, "identity")
        else np.asarray(ctrl_node["Q"], dtype=float)
    )

    return RunConfig(
        plant=plant,
        schedule=schedule,
        attention=_parse_attention(doc.get("attention")),
        preadapt=_parse_preadapt(doc.get("preadapt")),
        Q=Q,
        R=float(ctrl_node.get("R", 1.0)),
        gamma=float(ctrl_node.get("gamma", 10.0)),
        k0=float(ctrl_node.get("k0", 0.0)),
        r=float(doc.get("r", 0.1)),
        dt=float(doc.get("dt", 1e-3)),
        x0=None if doc.get("x0") is None else np.asarray(doc["x0"], dtype=float),
        theta_hat0=(
            None
            if doc.get("theta_hat0") is None
            else np.asarray(doc["theta_hat0"], dtype=float)
        ),
    )


def _apply_overrides(cfg, args):
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, preadapt=replace(cfg.preadapt, seed=int(args.seed)))
    if getattr(args, "dt", None) is not None:
        cfg = replace(cfg, dt=float(args.dt))
    if getattr(args, "mode", None) is not None:
        cfg = replace(
            cfg, preadapt=replace(cfg.preadapt, gradient_mode=GradientMode(args.mode))
        )
    return cfg


# --------------------------------------------------------------------------
# output writers

def _fmt(v):
    """17 significant digits: doubles survive a serialize/reparse round trip."""
    return format(float(v), ".17g")


def write_trace_csv(result, path):
    n = result.config.plant.n
    tr = result.trace
    cols = (
        ["t"]
        + [f"x{i + 1}" for i in range(n)]
        + [f"xr{i + 1}" for i in range(n)]
        + ["e", "edot_hat"]
        + [f"theta{i + 1}" for i in range(n)]
        + [f"theta_hat{i + 1}" for i in range(n)]
        + ["u", "Eu", "Ed"]
    )
    with open(path, "w") as f:
        f.write(",".join(cols) + "\n")
        for k in range(tr["t"].shape[0]):
            row = (
                [_fmt(tr["t"][k])]
                + [_fmt(v) for v in tr["x"][k]]
                + [_fmt(v) for v in tr["x_r"][k]]
                + [_fmt(tr["e"][k]), _fmt(tr["edot_hat"][k])]
                + [_fmt(v) for v in tr["theta"][k]]
                + [_fmt(v) for v in tr["theta_hat"][k]]
                + [_fmt(tr["u"][k]), str(int(tr["Eu"][k])), str(int(tr["Ed"][k]))]
            )
            f.write(",".join(row) + "\n")


def _config_echo(cfg):
    """Effective configuration with defaults materialized."""
    return {
        "plant": {
            "A": cfg.plant.A.tolist(),
            "B": cfg.plant.B.tolist(),
            "B1r": cfg.plant.B1r.tolist(),
            "output_index": int(cfg.plant.output_index),
        },
        "schedule": {
            "pieces": [
                {"t": float(t), "theta": v.tolist()} for t, v in cfg.schedule.pieces
            ],
            "horizon": float(cfg.schedule.horizon),
            "bounds": (
                None
                if cfg.schedule.bounds is None
                else {
                    "lower": cfg.schedule.bounds[0].tolist(),
                    "upper": cfg.schedule.bounds[1].tolist(),
                }
            ),
        },
        "controller": {
            "Q": cfg.Q.tolist(),
            "R": float(cfg.R),
            "gamma": float(cfg.gamma),
            "k0": float(cfg.k0),
        },
        "attention": {
            "c_e": cfg.attention.c_e,
            "c_ed": cfg.attention.c_ed,
            "tau_f": cfg.attention.tau_f,
            "estimator": cfg.attention.estimator,
            "omega_n": cfg.attention.omega_n,
            "zeta": cfg.attention.zeta,
        },
        "preadapt": {
            "enabled": cfg.preadapt.enabled,
            "learner": cfg.preadapt.learner_enabled,
            "gradient_mode": cfg.preadapt.gradient_mode.value,
            "gamma_pa": cfg.preadapt.gamma_pa,
            "hidden": cfg.preadapt.hidden,
            "seed": cfg.preadapt.seed,
            "init_scale": cfg.preadapt.init_scale,
            "clip_norm": cfg.preadapt.clip_norm,
        },
        "r": float(cfg.r),
        "dt": float(cfg.dt),
        "x0": cfg.x0.tolist(),
        "theta_hat0": cfg.theta_hat0.tolist(),
    }


def write_summary(result, path):
    doc = {
        "status": result.status,
        "error": result.error,
        "seed": result.config.preadapt.seed,
        "config": _config_echo(result.config),
        "events": [{"t": float(t), "kind": kind} for t, kind in result.events],
        "phases": [
            {
                "t_u": float(p.t_u),
                "t_d": None if p.t_d is None else float(p.t_d),
                "jump_ref": None if p.jump_ref is None else float(p.jump_ref),
                "peak_abs_e": float(p.peak_abs_e),
                "E_phase": float(p.E_phase),
                "recovered": bool(p.recovered),
            }
            for p in result.phases
        ],
        "phase_reports": [
            {k: (float(v) if isinstance(v, (int, float)) and not isinstance(v, bool)
                 else v) for k, v in rep.items()}
            for rep in result.phase_reports
        ],
        "final_weights": None if result.net is None else result.net.to_dict(),
    }
    with open(path, "w") as f:
        yaml.safe_dump(doc, f, sort_keys=False)


def write_compare_csv(rows, path):
    with open(path, "w") as f:
        f.write("jump_t,t_u_a,t_u_b,peak_a,peak_b,reduction_pct,E_a,E_b\n")
        for r in rows:
            f.write(
                ",".join(
                    [
                        _fmt(r["jump_t"]), _fmt(r["t_u_a"]), _fmt(r["t_u_b"]),
                        _fmt(r["peak_a"]), _fmt(r["peak_b"]),
                        _fmt(100.0 * r["reduction"]),
                        _fmt(r["E_a"]), _fmt(r["E_b"]),
                    ]
                )
                + "\n"
            )


# --------------------------------------------------------------------------
# subcommands

def cmd_run(args):
    cfg = _apply_overrides(load_scenario(args.scenario), args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    result = run(cfg)
    write_trace_csv(result, out / "trace.csv")
    write_summary(result, out / "summary.yaml")
    if result.status == "diverged":
        print(f"error: divergence at step {result.error_step}: {result.error}",
              file=sys.stderr)
        return EXIT_DIVERGED
    print(f"ok: {len(result.trace['t'])} trace rows, "
          f"{len(result.phases)} phases -> {out}")
    return EXIT_OK


def cmd_compare(args):
    cfg_a = _apply_overrides(load_scenario(args.scenario_a), args)
    cfg_b = _apply_overrides(load_scenario(args.scenario_b), args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    res_a = run(cfg_a)
    res_b = run(cfg_b)
    for name, res in (("A", res_a), ("B", res_b)):
        if res.status == "diverged":
            print(f"error: run {name} diverged: {res.error}", file=sys.stderr)
            return EXIT_DIVERGED
    rows = compare_results(res_a, res_b)
    write_compare_csv(rows, out / "compare.csv")
    print("jump_t    t_u(A)    t_u(B)    peak(A)     peak(B)     reduction")
    for r in rows:
        print(
            f"{r['jump_t']:<9.3f} {r['t_u_a']:<9.3f} {r['t_u_b']:<9.3f} "
            f"{r['peak_a']:<11.5g} {r['peak_b']:<11.5g} {100 * r['reduction']:.1f}%"
        )
    return EXIT_OK


def cmd_grad_check(args):
    if args.delta <= 0.0:
        raise ConfigError("delta must be positive")
    cfg = _apply_overrides(load_scenario(args.scenario), args)
    if not cfg.preadapt.enabled:
        raise ConfigError("grad-check needs a preadapt-enabled scenario")
    try:
        report = grad_check(cfg, args.phase, args.delta)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    print(f"phase {report['phase_index']}: t_u={report['t_u']:.3f} "
          f"t_d={report['t_d']:.3f} delta={report['delta']:g}")
    print(f"  finite-difference: {report['fd']}")
    for mode, entry in report["modes"].items():
        print(f"  {mode:<7} grad: {entry['grad']}  "
              f"max rel err: {entry['max_rel_error']:.3e}")
    # the exact-mode gradient is held to tolerance; approx is advisory only
    if report["modes"]["exact"]["max_rel_error"] >= _GRAD_CHECK_TOL:
        print(f"FAIL: exact-mode relative error exceeds {_GRAD_CHECK_TOL:g}",
              file=sys.stderr)
        return EXIT_TOLERANCE
    print("PASS")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="preadapt-ctl",
        description="MRAC simulation with learnable preadaptation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="simulate one scenario file")
    p_run.add_argument("scenario")
    p_run.add_argument("--out", default="out")
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--dt", type=float, default=None)
    p_run.add_argument("--mode", choices=["exact", "approx"], default=None)
    p_run.set_defaults(func=cmd_run)

    p_cmp = sub.add_parser("compare", help="compare two scenario files per phase")
    p_cmp.add_argument("scenario_a")
    p_cmp.add_argument("scenario_b")
    p_cmp.add_argument("--out", default="out")
    p_cmp.add_argument("--seed", type=int, default=None)
    p_cmp.add_argument("--dt", type=float, default=None)
    p_cmp.add_argument("--mode", choices=["exact", "approx"], default=None)
    p_cmp.set_defaults(func=cmd_compare)

    p_gc = sub.add_parser("grad-check", help="finite-difference gradient validation")
    p_gc.add_argument("scenario")
    p_gc.add_argument("--phase", type=int, default=0)
    p_gc.add_argument("--delta", type=float, default=1e-5)
    p_gc.add_argument("--seed", type=int, default=None)
    p_gc.add_argument("--dt", type=float, default=None)
    p_gc.add_argument("--mode", choices=["exact", "approx"], default=None)
    p_gc.set_defaults(func=cmd_grad_check)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as exc:
        print(f"divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGED


if __name__ == "__main__":
    sys.exit(main())
