"""Command-line interface.

Subcommands: fk, ik, simulate, calibrate, localize, rcm, workspace.
Angles are degrees at this boundary (and in every file), radians in
memory.  Exit codes: 0 success, 2 input/validation error, 3 numerical or
ill-posed failure.  Every report embeds the seed and a hash of the
effective configuration, so runs are reproducible byte for byte.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import calibration as cal
from . import localization as loc
from . import rcm as rcmod
from . import simulator as sim
from . import workspace as ws
from .errors import (
    ConvergenceError,
    DegenerateInputError,
    DegenerateTargetError,
    DivergedError,
    IllPosedProblemError,
    InsufficientDataError,
    RankDeficientError,
    UnreachableTargetError,
)
from .kinematics import (
    DEG,
    JointState,
    RobotModel,
    forward_kinematics,
    inverse_kinematics_nominal,
    inverse_kinematics_numeric,
)

INPUT_ERRORS = (UnreachableTargetError, DegenerateTargetError, DegenerateInputError,
                InsufficientDataError, ValueError, KeyError,
                FileNotFoundError, json.JSONDecodeError)
NUMERIC_ERRORS = (IllPosedProblemError, RankDeficientError, ConvergenceError,
                  DivergedError, np.linalg.LinAlgError)

DEFAULT_CONFIG = {
    "robot_model": None,
    "perturbation": {"max_length_dev": 0.5, "max_angle_dev_deg": 0.5,
                     "target": "observable"},
    "noise": {"position_std": 0.008, "axis_std_deg": 0.014,
              "cloud_axial_std": 0.0092, "cloud_lateral_std": 0.025},
    "poses": {"calibration": 30, "validation": 30, "cloud_repeats": 32},
    "tool": {"shaft_radius": 0.3, "shaft_length_in_view": 6.0, "tip_style": "flat"},
    "w": 10.0,
    "seed": 0,
}


def _merge(base: dict, override: dict) -> dict:
    out = dict(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def load_config(path, seed_override=None) -> dict:
    config = DEFAULT_CONFIG
    if path is not None:
        with open(path) as fh:
            config = _merge(config, json.load(fh))
    if seed_override is not None:
        config = dict(config, seed=int(seed_override))
    return config


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _write_json(path, payload) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _stats_rows(label, stats):
    rows = [("position [mm] " + label, stats.position)]
    if stats.orientation is not None:
        rows.append(("orientation [deg] " + label, stats.orientation))
    return rows


def _print_stats_table(pairs) -> None:
    print(f"{'':34s} {'RMS':>10s} {'Max':>10s} {'Std':>10s}")
    for label, triple in pairs:
        print(f"{label:34s} {triple.rms:10.4g} {triple.max:10.4g} {triple.std:10.4g}")


# -- fk / ik ---------------------------------------------------------------------

def cmd_fk(args) -> int:
    model = RobotModel.load(args.model) if args.model else RobotModel.nominal()
    t1, t2, d3, t4, d5 = args.joints
    q = JointState(t1 * DEG, t2 * DEG, d3, t4 * DEG, d5)
    T = forward_kinematics(model, q, check_limits=not args.no_limit_check)
    payload = {
        "position_mm": [float(v) for v in T.translation],
        "tool_axis": [float(v) for v in T.tool_axis],
    }
    if args.json:
        print(json.dumps(payload))
    else:
        print("tooltip position [mm]: {:+.6f} {:+.6f} {:+.6f}".format(*T.translation))
        print("tool axis:             {:+.6f} {:+.6f} {:+.6f}".format(*T.tool_axis))
    return 0


def cmd_ik(args) -> int:
    target = np.array(args.target, dtype=float)
    if args.model:
        model = RobotModel.load(args.model)
        q0 = JointState(*(v * s for v, s in zip(args.q0, (DEG, DEG, 1.0, DEG, 1.0))))
        q = inverse_kinematics_numeric(model, target, q0)
    else:
        q = inverse_kinematics_nominal(target)
    joints_deg = [q.theta1 / DEG, q.theta2 / DEG, q.d3, q.theta4 / DEG, q.d5]
    if args.json:
        print(json.dumps({"joints_deg_mm": joints_deg}))
    else:
        print("joints (theta1 theta2 [deg], d3 [mm], theta4 [deg], d5 [mm]):")
        print("  {:+.6f} {:+.6f} {:+.6f} {:+.6f} {:+.6f}".format(*joints_deg))
    return 0


# -- simulate ---------------------------------------------------------------------

def _build_truth(config):
    nominal = (RobotModel.load(config["robot_model"]) if config["robot_model"]
               else RobotModel.nominal())
    pert = config["perturbation"]
    target = pert["target"]
    if isinstance(target, list):
        target = tuple(target)
    spec = sim.PerturbationSpec(
        max_length_dev=pert["max_length_dev"],
        max_angle_dev=pert["max_angle_dev_deg"] * DEG,
        seed=config["seed"],
        target=target,
    )
    true_model, deviations = sim.perturb_model(nominal, spec)
    true_ct = sim.random_ct(config["seed"] + 1)
    return nominal, true_model, true_ct, deviations


def _noise_spec(config, seed_shift=0) -> sim.NoiseSpec:
    n = config["noise"]
    return sim.NoiseSpec(
        position_std=n["position_std"],
        axis_std=n["axis_std_deg"] * DEG,
        cloud_axial_std=n["cloud_axial_std"],
        cloud_lateral_std=n["cloud_lateral_std"],
        seed=config["seed"] + seed_shift,
    )


def cmd_simulate(args) -> int:
    config = load_config(args.config, args.seed)
    if config["poses"]["calibration"] < 1:
        raise ValueError("pose count must be positive")
    out = Path(args.out or "simulate_out")
    out.mkdir(parents=True, exist_ok=True)
    (out / "clouds").mkdir(exist_ok=True)

    nominal, true_model, true_ct, deviations = _build_truth(config)
    seed = config["seed"]

    cal_poses = sim.random_poses(config["poses"]["calibration"],
                                 strategy="cover", seed=seed + 2)
    val_poses = sim.random_poses(config["poses"]["validation"],
                                 strategy="cover", seed=seed + 3)
    cal_meas = sim.gen_measurements(true_model, true_ct, cal_poses,
                                    _noise_spec(config, 10))
    val_meas = sim.gen_measurements(true_model, true_ct, val_poses,
                                    _noise_spec(config, 11))
    cal.save_measurements(out / "measurements_calibration.json", cal_meas)
    cal.save_measurements(out / "measurements_validation.json", val_meas)

    tool_cfg = config["tool"]
    geom = sim.ToolGeometry(shaft_radius=tool_cfg["shaft_radius"],
                            shaft_length_in_view=tool_cfg["shaft_length_in_view"],
                            tip_style=tool_cfg["tip_style"])
    R = true_ct.rotation()
    pose = cal_poses[0]
    T = forward_kinematics(true_model, pose)
    tip = R @ T.translation + true_ct.p_mb
    axis = R @ T.tool_axis
    cloud_truths = []
    for i in range(config["poses"]["cloud_repeats"]):
        noise = _noise_spec(config, 100 + i)
        cloud, truth = sim.synth_cloud(tip, axis, geom, noise)
        loc.save_cloud(out / "clouds" / f"cloud_{i:03d}.txt", cloud)
        _write_json(out / "clouds" / f"cloud_{i:03d}.truth.json", truth.to_dict())
        cloud_truths.append(truth.to_dict())

    _write_json(out / "truth.json", {
        "config": config,
        "config_hash": config_hash(config),
        "seed": seed,
        "true_model": true_model.to_dict(),
        "nominal_model": nominal.to_dict(),
        "deviations": deviations,
        "true_ct": {"p_mb": [float(v) for v in true_ct.p_mb],
                    "r_mb_deg": [float(v) / DEG for v in true_ct.r_mb]},
        "cloud_pose_tip": [float(v) for v in tip],
        "cloud_pose_axis": [float(v) for v in axis],
    })
    print(f"wrote {len(cal_meas)}+{len(val_meas)} measurements and "
          f"{config['poses']['cloud_repeats']} clouds to {out}")
    return 0


# -- calibrate ---------------------------------------------------------------------

def cmd_calibrate(args) -> int:
    config = load_config(args.config, args.seed)
    w = args.w if args.w is not None else config["w"]
    measurements = cal.load_measurements(args.measurements)
    validation = (cal.load_measurements(args.validation)
                  if args.validation else None)

    start = cal.CalibrationParams.from_nominal(
        RobotModel.load(config["robot_model"]) if config["robot_model"] else None)
    ct_result = cal.ct_only_calibrate(start, measurements, w)
    full_result = cal.calibrate(measurements, w, initial=start)
    if validation:
        ct_result.valid_stats = cal.validate(ct_result.gamma_star, validation, w)
        full_result.valid_stats = cal.validate(full_result.gamma_star, validation, w)

    rows = []
    rows += _stats_rows("CT cal", ct_result.calib_stats)
    rows += _stats_rows("CT+FK cal", full_result.calib_stats)
    if validation:
        rows += _stats_rows("CT val", ct_result.valid_stats)
        rows += _stats_rows("CT+FK val", full_result.valid_stats)
    if not args.json:
        print("tooltip accuracy")
        _print_stats_table(rows)
        print(f"iterations: {full_result.iterations}, "
              f"objective {full_result.initial_objective:.6g} -> "
              f"{full_result.final_objective:.6g}")

    payload = {
        "config_hash": config_hash(config),
        "seed": config["seed"],
        "w": w,
        "ct_only": ct_result.to_dict(),
        "ct_fk": full_result.to_dict(),
    }
    if args.json:
        print(json.dumps(payload, sort_keys=True))
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        _write_json(out / "calibration_report.json", payload)
        with open(out / "calibration_stats.csv", "w") as fh:
            fh.write("metric,rms,max,std\n")
            for label, triple in rows:
                fh.write(f"{label},{triple.rms!r},{triple.max!r},{triple.std!r}\n")
        from .report import calibration_figure
        calibration_figure(ct_result, full_result, measurements, w,
                           out / "calibration_report.png")
    return 0


# -- localize ----------------------------------------------------------------------

def cmd_localize(args) -> int:
    config = load_config(args.config, args.seed)
    if not args.clouds:
        raise ValueError("no cloud files given")
    lconf = loc.LocalizeConfig(threshold_level=args.threshold,
                               window_mm=args.window)
    estimates = []
    clouds = []
    for path in args.clouds:
        cloud = loc.load_cloud(path)
        clouds.append(cloud)
        estimates.append(loc.localize_tool(cloud, lconf))

    payload = {
        "config_hash": config_hash(config),
        "seed": config["seed"],
        "tips": [{"file": str(p),
                  "p_mm": [float(v) for v in e.p],
                  "z": [float(v) for v in e.z],
                  "d_offset_mm": e.d_offset}
                 for p, e in zip(args.clouds, estimates)],
    }
    if len(estimates) >= 2:
        spread = cal.pose_stats([np.array([e.p for e in estimates])],
                                [np.array([e.z for e in estimates])])
        payload["spread"] = spread.to_dict()
        if not args.json:
            print(f"localization spread over {len(estimates)} clouds")
            _print_stats_table(_stats_rows("", spread))
    if args.json:
        print(json.dumps(payload, sort_keys=True))
    elif len(estimates) == 1:
        e = estimates[0]
        print("tip [mm]: {:+.5f} {:+.5f} {:+.5f}".format(*e.p))
        print("axis:     {:+.6f} {:+.6f} {:+.6f}".format(*e.z))

    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        _write_json(out / "localization_report.json", payload)
        with open(out / "tips.csv", "w") as fh:
            fh.write("file,px,py,pz,zx,zy,zz,d_offset\n")
            for p, e in zip(args.clouds, estimates):
                vals = [*e.p, *e.z, e.d_offset]
                fh.write(str(p) + "," + ",".join(repr(float(v)) for v in vals) + "\n")
        from .report import localization_figure
        e = estimates[0]
        axis_fit = loc.AxisFit(direction=e.z, point_on_axis=e.p,
                               rms_orthogonal=0.0, inlier_count=0)
        localization_figure(clouds[0], axis_fit, e, out / "localization_report.png",
                            window=args.window)
    return 0


# -- rcm ---------------------------------------------------------------------------

def cmd_rcm(args) -> int:
    config = load_config(args.config, args.seed)
    measurements = cal.load_measurements(args.measurements)
    lines = [rcmod.ToolLine(p=m.p_m, z=m.z_m) for m in measurements]
    measured = rcmod.fit_rcm(lines)
    payload = {
        "config_hash": config_hash(config),
        "seed": config["seed"],
        "measured": measured.to_dict(),
    }
    estimated = None
    if args.calibration:
        with open(args.calibration) as fh:
            report = json.load(fh)
        gamma = cal.gamma_from_named(report["ct_fk"]["gamma_deg_mm"])
        estimated = rcmod.estimated_rcm(gamma, [m.q for m in measurements])
        payload["estimated"] = estimated.to_dict()

    if args.json:
        print(json.dumps(payload, sort_keys=True))
    else:
        print("RCM error")
        rows = _stats_rows("measured", measured.stats)
        if estimated is not None:
            rows += _stats_rows("estimated", estimated.stats)
        _print_stats_table(rows)
        print("measured RCM point [mm]: {:+.4f} {:+.4f} {:+.4f}".format(*measured.p_rcm))

    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        _write_json(out / "rcm_report.json", payload)
        with open(out / "rcm_residuals.csv", "w") as fh:
            fh.write("index,residual_mm\n")
            for i, ln in enumerate(lines):
                r = float(np.linalg.norm(rcmod.rcm_residual(ln, measured.p_rcm)))
                fh.write(f"{i},{r!r}\n")
        from .report import rcm_figure
        rcm_figure(lines, measured, out / "rcm_report.png")
    return 0


# -- workspace ----------------------------------------------------------------------

def cmd_workspace(args) -> int:
    config = load_config(args.config, args.seed)
    t13 = np.arange(args.theta13[0], args.theta13[1] + 1e-9, args.step)
    t35 = np.arange(args.theta35[0], args.theta35[1] + 1e-9, args.step)
    result = ws.grid_search(theta13_values=t13, theta35_values=t35)
    best = result.best_design
    breakdown = result.best_breakdown

    payload = {
        "config_hash": config_hash(config),
        "seed": config["seed"],
        **result.to_dict(),
    }
    if args.json:
        print(json.dumps(payload, sort_keys=True))
    else:
        print(f"best design: theta13 = {best.theta13:g} deg, "
              f"theta35 = {best.theta35:g} deg, theta12 = {best.theta12:g} deg")
        print(f"  score {breakdown.score:.6g}  (gci {breakdown.gci:.4g}, "
              f"k_end {breakdown.k_end:.4g}, q_l {breakdown.q_l:.4g}, "
              f"alpha {breakdown.alpha:.4g})")

    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        ws.write_score_map(out / "score_map.tsv", result)
        _write_json(out / "workspace_report.json", payload)
        from .report import workspace_figure
        workspace_figure(result, out / "workspace_map.png")
    return 0


# -- parser ------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rcmcal",
        description="RCM manipulator kinematics, calibration, and evaluation. "
                    "Angles are degrees at the CLI and in files, radians in memory.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment config JSON")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--out", help="output directory for reports and figures")
    common.add_argument("--json", action="store_true",
                        help="print a JSON report to stdout")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fk", parents=[common], help="forward kinematics")
    p.add_argument("--joints", nargs=5, type=float, required=True,
                   metavar=("T1", "T2", "D3", "T4", "D5"),
                   help="theta1 theta2 [deg] d3 [mm] theta4 [deg] d5 [mm]")
    p.add_argument("--model", help="robot model JSON (default: nominal)")
    p.add_argument("--no-limit-check", action="store_true")
    p.set_defaults(func=cmd_fk)

    p = sub.add_parser("ik", parents=[common], help="inverse kinematics")
    p.add_argument("--target", nargs=3, type=float, required=True,
                   metavar=("X", "Y", "Z"), help="tooltip position [mm]")
    p.add_argument("--model",
                   help="robot model JSON; triggers the numeric solver")
    p.add_argument("--q0", nargs=5, type=float,
                   default=(-35.0, 0.0, 12.0, 0.0, 0.0),
                   help="initial joints for the numeric solver")
    p.set_defaults(func=cmd_ik)

    p = sub.add_parser("simulate", parents=[common],
                       help="generate synthetic measurement sets and clouds")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("calibrate", parents=[common],
                       help="registration-only and joint CT+FK calibration")
    p.add_argument("--measurements", required=True)
    p.add_argument("--validation")
    p.add_argument("--w", type=float, help="orientation weight [mm]")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("localize", parents=[common],
                       help="tool tip/axis estimation from cloud files")
    p.add_argument("--clouds", nargs="+", required=True)
    p.add_argument("--threshold", type=float,
                   help="intensity threshold (default: Otsu)")
    p.add_argument("--window", type=float, default=0.15,
                   help="tip interpolation window [mm]")
    p.set_defaults(func=cmd_localize)

    p = sub.add_parser("rcm", parents=[common],
                       help="RCM point fit from measurements")
    p.add_argument("--measurements", required=True)
    p.add_argument("--calibration",
                   help="calibration report JSON for the estimated variant")
    p.set_defaults(func=cmd_rcm)

    p = sub.add_parser("workspace", parents=[common],
                       help="design-space score map and argmax")
    p.add_argument("--theta13", nargs=2, type=float, default=(5.0, 90.0),
                   metavar=("MIN", "MAX"))
    p.add_argument("--theta35", nargs=2, type=float, default=(5.0, 90.0),
                   metavar=("MIN", "MAX"))
    p.add_argument("--step", type=float, default=5.0)
    p.set_defaults(func=cmd_workspace)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except NUMERIC_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except INPUT_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
