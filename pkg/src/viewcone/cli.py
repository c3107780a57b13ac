"""Command-line experiment runner.

Subcommands cover the full pipeline: dataset generation, observation-space
and detection-probability estimation, diffusion-policy training and rollout,
trajectory-fidelity evaluation, and obstacle-proximity safety analysis.
Every command writes a manifest (flags, seeds, input/output checksums,
wall-clock) next to its outputs; re-running with the recorded flags
reproduces the artifacts byte for byte.
"""

import argparse
import hashlib
import json
import os
import sys
import time

import numpy as np

from . import __version__
from .bcpolicy import (
    DiffusionConfig,
    bc_rollout,
    ddpm_train,
    load_model,
    save_model,
)
from .errors import DatasetParseError, SchemaVersionError
from .estimators import (
    BoConfig,
    default_obs_cem_config,
    estimate_observation_params,
    estimate_p_obs,
    write_report,
)
from .expert import ExpertGains, ExpertPolicy, LikelihoodKernel
from .likelihood import LikelihoodConfig
from .metrics import normalized_frechet, proximity_rate, summarize
from .sim import (
    Bounds,
    Dataset,
    DatasetMeta,
    Placement,
    ScenarioConfig,
    generate_dataset,
    read_dataset,
    write_dataset,
)
from .world import SensorParams


def _sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _write_manifest(command: str, args: argparse.Namespace, inputs, outputs, t0: float) -> None:
    main_out = outputs[0]
    manifest = {
        "command": command,
        "flags": {k: v for k, v in sorted(vars(args).items()) if k != "func"},
        "inputs": {p: _sha256(p) for p in inputs},
        "outputs": {p: _sha256(p) for p in outputs},
        "duration_s": round(time.time() - t0, 3),
        "version": __version__,
    }
    path = main_out + ".manifest.json"
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
    os.replace(tmp, path)


def _gains_from_args(args) -> ExpertGains:
    horizon = None if args.memory_horizon < 0 else args.memory_horizon
    return ExpertGains(
        k_att=args.k_att,
        k_rep=args.k_rep,
        d0=args.d0,
        v_max=args.v_max,
        k_heading=args.k_heading,
        memory_horizon=horizon,
    )


def _scenario_cfg_from_args(args) -> ScenarioConfig:
    return ScenarioConfig(
        bounds=Bounds(*args.bounds),
        n_obstacles=tuple(args.n_obstacles),
        obstacle_radius=tuple(args.obstacle_radius),
        obstacle_speed=tuple(args.obstacle_speed),
        start=Placement("fixed", tuple(args.start)),
        goal=Placement("fixed", tuple(args.goal)),
        h=args.h,
        t_max=args.t_max,
        min_separation=args.min_separation,
        start_heading=args.start_heading,
    )


def _lik_cfg_from_args(args) -> LikelihoodConfig:
    return LikelihoodConfig(kernel=LikelihoodKernel(args.sigma_u))


def _add_scenario_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--bounds", type=float, nargs=4, default=[0, 0, 400, 400],
                   metavar=("XMIN", "YMIN", "XMAX", "YMAX"))
    p.add_argument("--n-obstacles", type=int, nargs=2, default=[5, 9], metavar=("LO", "HI"))
    p.add_argument("--obstacle-radius", type=float, nargs=2, default=[5.0, 9.0],
                   metavar=("LO", "HI"))
    p.add_argument("--obstacle-speed", type=float, nargs=2, default=[0.0, 0.0],
                   metavar=("LO", "HI"))
    p.add_argument("--start", type=float, nargs=2, default=[40.0, 40.0], metavar=("X", "Y"))
    p.add_argument("--goal", type=float, nargs=2, default=[360.0, 360.0], metavar=("X", "Y"))
    p.add_argument("--start-heading", choices=["goal", "random"], default="goal")
    p.add_argument("--min-separation", type=float, default=80.0)
    p.add_argument("--h", type=float, default=0.1)
    p.add_argument("--t-max", type=int, default=600)


def _add_gain_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--k-att", type=float, default=1.0)
    p.add_argument("--k-rep", type=float, default=8.0e4)
    p.add_argument("--d0", type=float, default=150.0)
    p.add_argument("--v-max", type=float, default=12.0)
    p.add_argument("--k-heading", type=float, default=2.0)
    p.add_argument("--memory-horizon", type=int, default=0,
                   help="steps a sighting keeps steering the expert; -1 = never forget")


def _add_sensor_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--r-obs", type=float, required=True)
    p.add_argument("--theta-obs", type=float, required=True)
    p.add_argument("--p-obs", type=float, required=True)


def cmd_generate(args) -> int:
    t0 = time.time()
    sensor = SensorParams(args.r_obs, args.theta_obs, args.p_obs)
    cfg = _scenario_cfg_from_args(args)
    gains = _gains_from_args(args)
    scenarios = None
    inputs = []
    if args.scenarios_from:
        src = read_dataset(args.scenarios_from)
        scenarios = [t.scenario for t in src.trajectories]
        inputs.append(args.scenarios_from)
    dataset = generate_dataset(
        cfg,
        sensor,
        ExpertPolicy(gains),
        args.n,
        args.seed,
        scenarios=scenarios,
        jobs=args.jobs,
    )
    write_dataset(dataset, args.out)
    _write_manifest("generate", args, inputs, [args.out], t0)
    outcomes = {}
    for t in dataset.trajectories:
        outcomes[t.outcome.value] = outcomes.get(t.outcome.value, 0) + 1
    print(f"wrote {len(dataset)} trajectories to {args.out} ({outcomes})")
    return 0


def cmd_estimate_obs(args) -> int:
    t0 = time.time()
    dataset = read_dataset(args.data)
    cem = default_obs_cem_config(
        r_bounds=tuple(args.r_bounds),
        theta_bounds=tuple(args.theta_bounds),
        population=args.population,
        elite_frac=args.elite_frac,
        iterations=args.iterations,
        smoothing=args.smoothing,
        std_floor=args.std_floor,
    )
    report = estimate_observation_params(
        dataset,
        args.p_obs,
        cem,
        _lik_cfg_from_args(args),
        _gains_from_args(args),
        seed=args.seed,
        jobs=args.jobs,
    )
    write_report(report, args.out)
    _write_manifest("estimate-obs", args, [args.data], [args.out], t0)
    r, theta = report.best_params
    print(f"estimated r_obs={r:.4f} theta_obs={theta:.4f} (mean step loglik {report.best_value:.4f})")
    if report.is_flat():
        print("warning: objective is flat; sensor parameters are not identifiable", file=sys.stderr)
    return 0


def cmd_estimate_pobs(args) -> int:
    t0 = time.time()
    dataset = read_dataset(args.data)
    bo = BoConfig(init_points=args.init_points, iterations=args.iterations)
    report = estimate_p_obs(
        dataset,
        (args.r_obs, args.theta_obs),
        bo,
        _lik_cfg_from_args(args),
        _gains_from_args(args),
    )
    write_report(report, args.out)
    _write_manifest("estimate-pobs", args, [args.data], [args.out], t0)
    print(f"estimated p_obs={report.best_params[0]:.4f} (mean step loglik {report.best_value:.4f})")
    return 0


def cmd_train_bc(args) -> int:
    t0 = time.time()
    dataset = read_dataset(args.data)
    cfg = DiffusionConfig(
        epochs=args.epochs,
        batch_size=args.batch,
        lr=args.lr,
        horizon=args.horizon,
        k_nearest=args.k_nearest,
        t_diff=args.t_diff,
        ddim_steps=args.ddim_steps,
        ddpm_tail_steps=args.ddpm_tail_steps,
        belief_horizon=None if args.belief_horizon < 0 else args.belief_horizon,
    )
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(args.seed)))
    model = ddpm_train(dataset, cfg, rng)
    save_model(model, args.out)
    _write_manifest("train-bc", args, [args.data], [args.out], t0)
    print(
        f"trained on {len(dataset)} trajectories: loss {model.loss_trace[0]:.4f} -> "
        f"{model.loss_trace[-1]:.4f}, saved to {args.out}"
    )
    return 0


def cmd_rollout_bc(args) -> int:
    t0 = time.time()
    model = load_model(args.model)
    src = read_dataset(args.scenarios_from)
    sensor = SensorParams(args.r_obs, args.theta_obs, args.p_obs)
    cfg = DiffusionConfig(
        ddim_steps=args.ddim_steps,
        ddpm_tail_steps=args.ddpm_tail_steps,
        horizon=model.horizon,
        k_nearest=model.k_nearest,
        t_diff=model.t_diff,
    )
    n = args.n if args.n is not None else len(src)
    if n > len(src):
        raise ValueError(f"need {n} scenarios, dataset has {len(src)}")
    trajectories = []
    for i in range(n):
        traj = src.trajectories[i]
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence((args.seed, i))))
        trajectories.append(
            bc_rollout(
                model,
                traj.scenario,
                sensor,
                cfg,
                rng,
                args.mode,
                t_max=args.t_max,
                v_max=args.v_max,
                exec_steps=args.exec_steps,
                psi_mode=args.psi_mode,
                psi_rate=args.psi_rate,
                scenario_id=traj.scenario_id if traj.scenario_id is not None else i,
            )
        )
    out_meta = DatasetMeta(mode=args.mode, h=src.meta.h, sensor=sensor, seed=args.seed)
    write_dataset(Dataset(tuple(trajectories), out_meta), args.out)
    _write_manifest("rollout-bc", args, [args.model, args.scenarios_from], [args.out], t0)
    reached = sum(t.outcome.value == "reached_goal" for t in trajectories)
    print(f"rolled out {n} trajectories ({reached} reached goal) to {args.out}")
    return 0


def _pair_key(traj, index: int):
    return traj.scenario_id if traj.scenario_id is not None else index


def cmd_eval(args) -> int:
    t0 = time.time()
    actual = read_dataset(args.actual)
    predicted = read_dataset(args.predicted)
    by_id = {_pair_key(t, i): t for i, t in enumerate(predicted.trajectories)}
    values = []
    pairs = []
    for i, a in enumerate(actual.trajectories):
        key = _pair_key(a, i)
        b = by_id.get(key)
        if b is None:
            continue
        start = (a.scenario.start.p, a.scenario.start.q)
        v = normalized_frechet(a.positions(), b.positions(), start, a.scenario.goal)
        values.append(v)
        pairs.append(key)
    if not values:
        print("no scenario pairs in common", file=sys.stderr)
        return 1
    s = summarize(values)
    with open(args.out, "w", encoding="utf-8") as f:
        f.write(
            json.dumps(
                {
                    "schema": 1,
                    "kind": "frechet_summary",
                    "mean": s.mean,
                    "std": s.std,
                    "min": s.min,
                    "max": s.max,
                    "n": s.n,
                },
                separators=(",", ":"),
            )
            + "\n"
        )
        for key, v in zip(pairs, values):
            f.write(json.dumps({"scenario_id": key, "normalized_frechet": v},
                               separators=(",", ":")) + "\n")
    _write_manifest("eval", args, [args.actual, args.predicted], [args.out], t0)
    print(f"normalized Frechet over {s.n} pairs: mean {s.mean:.3f}% +/- {s.std:.3f} (max {s.max:.2f}%)")
    return 0


def cmd_safety(args) -> int:
    t0 = time.time()
    dataset = read_dataset(args.data)
    rates = [proximity_rate(t, args.threshold) for t in dataset.trajectories]
    s = summarize(rates)
    with open(args.out, "w", encoding="utf-8") as f:
        f.write(
            json.dumps(
                {
                    "schema": 1,
                    "kind": "proximity_summary",
                    "threshold": args.threshold,
                    "mean": s.mean,
                    "std": s.std,
                    "min": s.min,
                    "max": s.max,
                    "n": s.n,
                },
                separators=(",", ":"),
            )
            + "\n"
        )
        for i, r in enumerate(rates):
            f.write(json.dumps({"index": i, "proximity_rate": r}, separators=(",", ":")) + "\n")
    _write_manifest("safety", args, [args.data], [args.out], t0)
    print(f"proximity rate (threshold {args.threshold}): mean {100 * s.mean:.2f}% over {s.n} trajectories")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="viewcone",
        description="Simulate, estimate, and imitate agents with a restricted view cone.",
    )
    parser.add_argument("--version", action="version", version=f"viewcone {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="generate an expert demonstration dataset")
    _add_sensor_flags(p)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--scenarios-from", help="reuse scenarios from an existing dataset file")
    p.add_argument("--jobs", type=int, default=1)
    _add_scenario_flags(p)
    _add_gain_flags(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("estimate-obs", help="estimate (r_obs, theta_obs) by CEM at known p_obs")
    p.add_argument("--data", required=True)
    p.add_argument("--p-obs", type=float, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--population", type=int, default=64)
    p.add_argument("--elite-frac", type=float, default=0.125)
    p.add_argument("--iterations", type=int, default=30)
    p.add_argument("--smoothing", type=float, default=0.7)
    p.add_argument("--std-floor", type=float, default=1e-3)
    p.add_argument("--r-bounds", type=float, nargs=2, default=[10.0, 120.0])
    p.add_argument("--theta-bounds", type=float, nargs=2, default=[0.1, 1.0])
    p.add_argument("--sigma-u", type=float, default=0.05)
    _add_gain_flags(p)
    p.set_defaults(func=cmd_estimate_obs)

    p = sub.add_parser("estimate-pobs", help="estimate p_obs by Bayesian optimization")
    p.add_argument("--data", required=True)
    p.add_argument("--r-obs", type=float, required=True)
    p.add_argument("--theta-obs", type=float, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--init-points", type=int, default=8)
    p.add_argument("--iterations", type=int, default=40)
    p.add_argument("--sigma-u", type=float, default=0.05)
    _add_gain_flags(p)
    p.set_defaults(func=cmd_estimate_pobs)

    p = sub.add_parser("train-bc", help="train the diffusion behavior-cloning policy")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=60)
    p.add_argument("--batch", type=int, default=256)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--horizon", type=int, default=8)
    p.add_argument("--k-nearest", type=int, default=5)
    p.add_argument("--t-diff", type=int, default=100)
    p.add_argument("--ddim-steps", type=int, default=10)
    p.add_argument("--ddpm-tail-steps", type=int, default=10)
    p.add_argument("--belief-horizon", type=int, default=12,
                   help="recency window for encoded obstacles; -1 = entire history")
    p.set_defaults(func=cmd_train_bc)

    p = sub.add_parser("rollout-bc", help="roll out a trained policy on dataset scenarios")
    p.add_argument("--model", required=True)
    p.add_argument("--scenarios-from", required=True)
    _add_sensor_flags(p)
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mode", choices=["pointmass", "bicycle"], default="pointmass")
    p.add_argument("--t-max", type=int, default=600)
    p.add_argument("--v-max", type=float, default=20.0)
    p.add_argument("--exec-steps", type=int, default=4)
    p.add_argument("--psi-mode", choices=["model", "fixed"], default="model")
    p.add_argument("--psi-rate", type=float, default=0.05)
    p.add_argument("--ddim-steps", type=int, default=10)
    p.add_argument("--ddpm-tail-steps", type=int, default=10)
    p.set_defaults(func=cmd_rollout_bc)

    p = sub.add_parser("eval", help="normalized Frechet distance between paired datasets")
    p.add_argument("--actual", required=True)
    p.add_argument("--predicted", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("safety", help="obstacle-proximity rate distribution")
    p.add_argument("--data", required=True)
    p.add_argument("--threshold", type=float, default=20.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_safety)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (OSError, ValueError, KeyError, DatasetParseError, SchemaVersionError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
