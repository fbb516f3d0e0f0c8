"""Command-line interface.

Subcommands:
  run      one scenario/controller, writing the trace CSV and metrics JSON
  compare  all three controllers on one scenario, with a comparison table
  sweep    seeds x scenario kinds x controllers, with ordering verdicts
  tune-pi  run the PI gain design and verify both variants' step responses

A JSON config file (--config) can override any default; omitted keys keep
the published values.
"""

import argparse
import json
import os

import numpy as np

from .baselines import (
    design_pi_gains,
    pi_all_units_config,
    pi_du_bess_config,
    step_response_metrics,
)
from .der_models import default_pv_params, default_wind_params
from .estimator import EstimatorConfig, N_AUGMENTED, default_estimator_config
from .lfc_model import MicrogridParams, N_STATES
from .mpc import MpcConfig
from .profiles import read_profiles_csv
from .simulate import (
    CONTROLLER_KINDS,
    RunConfig,
    compute_metrics,
    make_scenario,
    metrics_summary,
    run_scenario,
    write_trace_csv,
)

SCENARIO_KINDS = ("step", "moderate", "rapid")


def _estimator_from_dict(d):
    state_noise = d.get("state_noise", 1e-8)
    disturbance_noise = d.get("disturbance_noise", 1e-4)
    measurement_noise = d.get("measurement_noise", 1e-8)
    p0_scale = d.get("initial_covariance", 1e-2)
    Q = np.diag([state_noise] * N_STATES + [disturbance_noise])
    return EstimatorConfig(Q=Q, R_noise=measurement_noise, P0=p0_scale * np.eye(N_AUGMENTED))


def load_run_config(path=None):
    """Build a RunConfig from an optional JSON override file."""
    raw = {}
    if path is not None:
        with open(path) as fh:
            raw = json.load(fh)
    params = MicrogridParams(**raw.get("microgrid", {}))
    mpc = MpcConfig(**raw.get("mpc", {}))
    estimator = (
        _estimator_from_dict(raw["estimator"]) if "estimator" in raw else default_estimator_config()
    )
    pi = raw.get("pi", {})
    sim = raw.get("sim", {})
    kp_default, ki_default = design_pi_gains(params)
    return RunConfig(
        params=params,
        mpc=mpc,
        estimator=estimator,
        wind=default_wind_params(rated_kw=params.p_wt1),
        pv=default_pv_params(rated_kw=params.p_pv1),
        pi_kp=pi.get("kp", kp_default),
        pi_ki=pi.get("ki", ki_default),
        deload=sim.get("deload", 0.1),
        dispatch_du_kw=sim.get("dispatch_du_kw", 60.0),
        dispatch_bess_kw=sim.get("dispatch_bess_kw", 0.0),
        measurement_noise_std=sim.get("measurement_noise_std", 0.0),
    )


def _scenario_from_args(args, controller, config):
    profiles = None
    if args.profiles is not None and os.path.exists(args.profiles):
        profiles = read_profiles_csv(args.profiles)
    return make_scenario(args.scenario, controller, args.seed, profiles=profiles)


def _write_outputs(trace, metrics, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    stem = f"{trace.kind}_{trace.controller}_seed{trace.seed}"
    trace_path = os.path.join(out_dir, f"trace_{stem}.csv")
    metrics_path = os.path.join(out_dir, f"metrics_{stem}.json")
    write_trace_csv(trace, trace_path)
    with open(metrics_path, "w") as fh:
        json.dump(metrics_summary(trace, metrics), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return trace_path, metrics_path


def _summary_line(trace, metrics):
    settle = "n/a" if np.isnan(metrics.settle_time) else f"{metrics.settle_time:.1f}s"
    return (
        f"{trace.kind:9s} {trace.controller:10s} seed={trace.seed:<3d} "
        f"max|df|={metrics.max_abs_freq_dev:.6e}  std={metrics.freq_std:.6e}  "
        f"settle={settle}  violations={metrics.constraint_violations}"
    )


def cmd_run(args):
    config = load_run_config(args.config)
    scenario = _scenario_from_args(args, args.controller, config)
    trace = run_scenario(scenario, config)
    metrics = compute_metrics(trace)
    print(_summary_line(trace, metrics))
    if trace.aborted_at is not None:
        print(f"  run aborted at step {trace.aborted_at} (controller failure); partial trace kept")
    if args.out:
        trace_path, metrics_path = _write_outputs(trace, metrics, args.out)
        print(f"  wrote {trace_path}\n  wrote {metrics_path}")
    return 0


def cmd_compare(args):
    config = load_run_config(args.config)
    results = {}
    for controller in CONTROLLER_KINDS:
        scenario = _scenario_from_args(args, controller, config)
        trace = run_scenario(scenario, config)
        results[controller] = (trace, compute_metrics(trace))
    print(f"scenario={args.scenario} seed={args.seed}")
    print(f"{'controller':12s} {'freq_std':>14s} {'max_abs_dev':>14s} {'settle_s':>9s}")
    for controller in CONTROLLER_KINDS:
        _, m = results[controller]
        print(
            f"{controller:12s} {m.freq_std:14.6e} {m.max_abs_freq_dev:14.6e} "
            f"{m.settle_time:9.1f}"
        )
    mpc_m = results["mpc"][1]
    pa_m = results["pi_all"][1]
    pd_m = results["pi_dubess"][1]
    ordered = (
        mpc_m.freq_std < pa_m.freq_std < pd_m.freq_std
        and mpc_m.max_abs_freq_dev < pa_m.max_abs_freq_dev < pd_m.max_abs_freq_dev
    )
    print(f"ordering mpc < pi_all < pi_dubess: {'yes' if ordered else 'NO'}")
    if args.out:
        for controller in CONTROLLER_KINDS:
            _write_outputs(*results[controller], args.out)
        print(f"wrote traces and metrics under {args.out}")
    return 0


def cmd_sweep(args):
    config = load_run_config(args.config)
    seeds = [int(s) for s in args.seeds.split(",") if s != ""]
    kinds = [k.strip() for k in args.kinds.split(",") if k.strip()]
    summaries = []
    all_ordered = True
    for kind in kinds:
        for seed in seeds:
            per_controller = {}
            for controller in CONTROLLER_KINDS:
                scenario = make_scenario(kind, controller, seed)
                trace = run_scenario(scenario, config)
                metrics = compute_metrics(trace)
                per_controller[controller] = metrics
                summaries.append(metrics_summary(trace, metrics))
                if args.out:
                    _write_outputs(trace, metrics, args.out)
            mpc_m = per_controller["mpc"]
            pa_m = per_controller["pi_all"]
            pd_m = per_controller["pi_dubess"]
            ordered = (
                mpc_m.freq_std < pa_m.freq_std < pd_m.freq_std
                and mpc_m.max_abs_freq_dev < pa_m.max_abs_freq_dev < pd_m.max_abs_freq_dev
            )
            all_ordered &= ordered
            print(
                f"{kind:9s} seed={seed:<3d} std "
                f"{mpc_m.freq_std:.3e}/{pa_m.freq_std:.3e}/{pd_m.freq_std:.3e} "
                f"ordered={'yes' if ordered else 'NO'}"
            )
    print(f"all runs ordered mpc < pi_all < pi_dubess: {'yes' if all_ordered else 'NO'}")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        path = os.path.join(args.out, "sweep_summary.json")
        with open(path, "w") as fh:
            json.dump(summaries, fh, indent=2, sort_keys=True)
            fh.write("\n")
        print(f"wrote {path}")
    return 0


def cmd_tune_pi(args):
    config = load_run_config(args.config)
    kp, ki = design_pi_gains(config.params)
    print(f"designed gains: kp={kp:.6g} ki={ki:.6g}")
    results = {"kp": kp, "ki": ki}
    for name, factory in (("pi_all", pi_all_units_config), ("pi_dubess", pi_du_bess_config)):
        metrics = step_response_metrics(factory(config.params, kp, ki), config.params)
        results[name] = metrics
        print(
            f"{name:10s} step verification: peak={metrics['peak']:.6e} "
            f"settle={metrics['settle_time']:.1f}s itae={metrics['itae']:.4f} "
            f"zero_crossings={metrics['zero_crossings']}"
        )
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        path = os.path.join(args.out, "pi_gains.json")
        with open(path, "w") as fh:
            json.dump(results, fh, indent=2, sort_keys=True)
            fh.write("\n")
        print(f"wrote {path}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="microfreq",
        description="Microgrid secondary-frequency control simulator and controller comparison.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, controller=False, scenario=True, seed=True):
        if scenario:
            p.add_argument("--scenario", choices=SCENARIO_KINDS, default="step")
        if controller:
            p.add_argument("--controller", choices=CONTROLLER_KINDS, default="mpc")
        if seed:
            p.add_argument("--seed", type=int, default=0)
        p.add_argument("--profiles", default=None, help="profile CSV (missing file: generated)")
        p.add_argument("--out", default=None, help="output directory for traces/metrics")
        p.add_argument("--config", default=None, help="JSON config override file")

    p_run = sub.add_parser("run", help="run one scenario with one controller")
    add_common(p_run, controller=True)
    p_run.set_defaults(func=cmd_run)

    p_cmp = sub.add_parser("compare", help="run all three controllers on one scenario")
    add_common(p_cmp)
    p_cmp.set_defaults(func=cmd_compare)

    p_sweep = sub.add_parser("sweep", help="run seeds x kinds x controllers")
    p_sweep.add_argument("--seeds", default="0,1,2,3,4")
    p_sweep.add_argument("--kinds", default="step,moderate,rapid")
    p_sweep.add_argument("--out", default=None)
    p_sweep.add_argument("--config", default=None)
    p_sweep.set_defaults(func=cmd_sweep)

    p_tune = sub.add_parser("tune-pi", help="run the PI gain design and verification")
    p_tune.add_argument("--out", default=None)
    p_tune.add_argument("--config", default=None)
    p_tune.set_defaults(func=cmd_tune_pi)

    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
