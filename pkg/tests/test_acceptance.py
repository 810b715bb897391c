"""Acceptance criteria, one test per criterion.

Each test prints a PASS line with its measured figures when it succeeds
(run pytest with -s to watch them); tolerances are asserted inline.
"""
import time

import numpy as np
import pytest

from rcmcal.calibration import (
    CalibrationParams,
    GAMMA_NAMES,
    Measurement,
    calibrate,
    ct_only_calibrate,
    error_vector,
    residual,
    tool_offset_recalibrate,
    validate,
)
from rcmcal.kinematics import (
    DEG,
    JointState,
    PARAM_NAMES,
    RobotModel,
    forward_kinematics,
    forward_kinematics_nominal,
    inverse_kinematics_nominal,
)
from rcmcal.localization import OctPointCloud, localize_tool
from rcmcal.rcm import ToolLine, fit_rcm, rcm_residual
from rcmcal.simulator import (
    NoiseSpec,
    PerturbationSpec,
    ScanSpec,
    ToolGeometry,
    gen_measurements,
    perturb_model,
    random_ct,
    random_poses,
    synth_cloud,
)
from rcmcal.transforms import euler_zyx
from rcmcal.workspace import grid_search, write_score_map


def _report(num, name, detail):
    print(f"ACCEPTANCE {num} ({name}): PASS  [{detail}]")


def test_acceptance_1_fk_ik_round_trip():
    """5 deg x 5 deg x 1 mm joint grid round-trips through analytic IK."""
    t0 = time.perf_counter()
    worst = 0.0
    count = 0
    for t1 in np.arange(-70.0, 0.1, 5.0) * DEG:
        for t2 in np.arange(-40.0, 40.1, 5.0) * DEG:
            if t2 == 0.0 and t1 != 0.0:
                continue  # theta1 drops out of the position on the base axis
            for d3 in np.arange(1.0, 25.1, 1.0):
                q = JointState(float(t1), float(t2), float(d3))
                p = forward_kinematics_nominal(q).translation
                r = inverse_kinematics_nominal(p)
                err = max(abs(r.theta1 - q.theta1), abs(r.theta2 - q.theta2),
                          abs(r.d3 - q.d3))
                worst = max(worst, err)
                count += 1
    elapsed = time.perf_counter() - t0
    assert worst < 1e-9
    assert elapsed < 10.0
    _report(1, "fk/ik round trip",
            f"{count} points, worst {worst:.2e}, {elapsed:.2f} s")


def test_acceptance_2_rcm_geometric_property():
    """d3 = 0 pins the nominal tooltip at the origin for any shoulder pose."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(10_000):
        q = JointState(rng.uniform(-70 * DEG, 0.0), rng.uniform(-40 * DEG, 40 * DEG),
                       0.0, rng.uniform(-720 * DEG, 720 * DEG), 0.0)
        worst = max(worst, float(np.linalg.norm(
            forward_kinematics_nominal(q).translation)))
    elapsed = time.perf_counter() - t0
    assert worst < 1e-12
    assert elapsed < 1.0
    _report(2, "rcm geometric property", f"worst |p| {worst:.2e}, {elapsed:.2f} s")


def test_acceptance_3_noise_free_calibration_recovery():
    """30 poses from an observably perturbed model: exact recovery."""
    t0 = time.perf_counter()
    nominal = RobotModel.nominal()
    model, _ = perturb_model(nominal, PerturbationSpec(0.5, 0.5 * DEG, seed=300,
                                                       target="observable"))
    ct = random_ct(301)
    poses = random_poses(30, strategy="cover", seed=302)
    meas = gen_measurements(model, ct, poses, NoiseSpec(0, 0, 0, 0))
    result = calibrate(meas)
    elapsed = time.perf_counter() - t0

    assert result.final_objective < 1e-15
    got = result.gamma_star.vector()
    want = np.concatenate([model.param_vector(), ct.p_mb, ct.r_mb])
    worst = 0.0
    for i in np.flatnonzero(result.gamma_star.free_mask):
        err = abs(got[i] - want[i])
        assert err < 1e-6, f"{GAMMA_NAMES[i]}: {err:.3g}"
        worst = max(worst, err)
    assert elapsed < 30.0
    _report(3, "noise-free calibration recovery",
            f"S* {result.final_objective:.2e}, worst param err {worst:.2e}, "
            f"{elapsed:.1f} s")


def test_acceptance_4_calibration_improvement_ratio():
    """Joint CT+FK calibration beats registration-only by 4x on held-out
    noisy validation data, across seeds."""
    t0 = time.perf_counter()
    ratios = []
    for seed in range(5):
        nominal = RobotModel.nominal()
        model, _ = perturb_model(nominal,
                                 PerturbationSpec(0.5, 0.5 * DEG, seed=400 + seed,
                                                  target="observable"))
        ct = random_ct(450 + seed)
        noise_cal = NoiseSpec(0.008, 0.014 * DEG, 0, 0, seed=500 + seed)
        noise_val = NoiseSpec(0.008, 0.014 * DEG, 0, 0, seed=550 + seed)
        cal_meas = gen_measurements(model, ct,
                                    random_poses(30, seed=600 + seed), noise_cal)
        val_meas = gen_measurements(model, ct,
                                    random_poses(30, seed=650 + seed), noise_val)
        start = CalibrationParams.from_nominal()
        ct_only = ct_only_calibrate(start, cal_meas)
        full = calibrate(cal_meas)
        ct_rms = validate(ct_only.gamma_star, val_meas).position.rms
        full_rms = validate(full.gamma_star, val_meas).position.rms
        ratios.append(full_rms / ct_rms)
    elapsed = time.perf_counter() - t0
    assert all(r <= 0.25 for r in ratios), ratios
    assert elapsed < 120.0
    _report(4, "calibration improvement ratio",
            f"ratios {['%.3f' % r for r in ratios]}, {elapsed:.1f} s")


def test_acceptance_5_tool_offset_recalibration():
    """Terminal-link-only exchange recovered exactly from 5 poses."""
    t0 = time.perf_counter()
    nominal = RobotModel.nominal()
    ct = random_ct(510)
    base = calibrate(gen_measurements(nominal, ct, random_poses(30, seed=511),
                                      NoiseSpec(0, 0, 0, 0)))
    swapped, deviations = perturb_model(
        nominal, PerturbationSpec(0.3, 0.5 * DEG, seed=512,
                                  target="observable-terminal"))
    meas = gen_measurements(swapped, ct, random_poses(5, seed=513),
                            NoiseSpec(0, 0, 0, 0))
    before = base.gamma_star.vector()
    result = tool_offset_recalibrate(base.gamma_star, meas)
    elapsed_recal = time.perf_counter() - t0

    assert result.final_objective < 1e-15
    got = result.gamma_star.model.param_vector()
    want = swapped.param_vector()
    for name in deviations:
        i = PARAM_NAMES.index(name)
        assert abs(got[i] - want[i]) < 1e-6, name
    after = result.gamma_star.vector()
    frozen = [i for i, n in enumerate(GAMMA_NAMES) if not n.startswith("link4.")]
    for i in frozen:
        assert after[i] == before[i]  # bit identical
    assert elapsed_recal < 60.0  # includes the one-time base calibration
    _report(5, "tool offset recalibration",
            f"S* {result.final_objective:.2e}, {elapsed_recal:.1f} s total")


def test_acceptance_6_localization_accuracy():
    """32 noisy clouds of one pose: tip rms <= 0.02 mm, axis rms <= 0.05 deg."""
    t0 = time.perf_counter()
    tip = np.array([0.8, -0.4, 5.5])
    axis = np.array([0.18, -0.12, 0.976])
    axis /= np.linalg.norm(axis)
    pos_err, ang_err = [], []
    for seed in range(32):
        noise = NoiseSpec(0, 0, cloud_axial_std=0.0092, cloud_lateral_std=0.025,
                          seed=600 + seed)
        cloud, _ = synth_cloud(tip, axis, ToolGeometry(), noise, ScanSpec())
        est = localize_tool(cloud)
        pos_err.append(np.linalg.norm(est.p - tip))
        ang_err.append(np.degrees(np.arccos(np.clip(est.z @ axis, -1, 1))))
    elapsed = time.perf_counter() - t0
    pos_rms = float(np.sqrt(np.mean(np.square(pos_err))))
    ang_rms = float(np.sqrt(np.mean(np.square(ang_err))))
    assert pos_rms <= 0.02
    assert ang_rms <= 0.05
    assert elapsed < 60.0
    _report(6, "localization accuracy",
            f"position rms {pos_rms * 1000:.1f} um, orientation rms "
            f"{ang_rms:.4f} deg, {elapsed:.1f} s")


def test_acceptance_7_rcm_fit():
    """Common-point recovery from noisy and exact line pencils."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(700)
    center = np.array([3.0, -2.0, 8.0])

    noisy, exact = [], []
    for _ in range(30):
        z = rng.normal(size=3)
        z /= np.linalg.norm(z)
        d = rng.uniform(5, 25)
        lateral = rng.normal(0, 0.05, 3)
        lateral -= (lateral @ z) * z
        noisy.append(ToolLine(p=center + d * z + lateral, z=z))
        exact.append(ToolLine(p=center + d * z, z=z))

    fit_noisy = fit_rcm(noisy)
    fit_exact = fit_rcm(exact)
    gradient = np.zeros(3)
    for ln in noisy:
        gradient += rcm_residual(ln, fit_noisy.p_rcm)
    elapsed = time.perf_counter() - t0

    assert np.linalg.norm(fit_noisy.p_rcm - center) < 0.05
    assert np.linalg.norm(fit_exact.p_rcm - center) < 1e-9
    assert np.linalg.norm(gradient) < 1e-9
    assert elapsed < 1.0
    _report(7, "rcm fit",
            f"noisy err {np.linalg.norm(fit_noisy.p_rcm - center) * 1000:.1f} um, "
            f"exact err {np.linalg.norm(fit_exact.p_rcm - center):.1e} mm, "
            f"{elapsed:.2f} s")


def test_acceptance_8_workspace_argmax(tmp_path):
    """Full 5-degree design scan peaks at 60/60; map file reproducible."""
    t0 = time.perf_counter()
    result = grid_search()
    best = result.best_design
    assert abs(best.theta13 - 60.0) <= 5.0
    assert abs(best.theta35 - 60.0) <= 5.0

    p1, p2 = tmp_path / "map1.tsv", tmp_path / "map2.tsv"
    write_score_map(p1, result)
    write_score_map(p2, grid_search())
    assert p1.read_bytes() == p2.read_bytes()
    elapsed = time.perf_counter() - t0
    assert elapsed < 120.0
    _report(8, "workspace argmax",
            f"best ({best.theta13:g}, {best.theta35:g}) deg, "
            f"score {result.best_breakdown.score:.4g}, {elapsed:.1f} s")


def test_acceptance_9_property_suites():
    """Bundle of the module invariants at their stated tolerances."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(900)

    # orthonormality of every returned transform
    nominal = RobotModel.nominal()
    model, _ = perturb_model(nominal, PerturbationSpec(1.0, 2 * DEG, seed=901))
    for _ in range(200):
        q = JointState(rng.uniform(-1.2, 0), rng.uniform(-0.7, 0.7),
                       rng.uniform(-40, 25), rng.uniform(-12, 12), 0.0)
        assert forward_kinematics(model, q).orthonormality_error() < 1e-12

    # frame-change equivariance of calibration
    truth, _ = perturb_model(nominal, PerturbationSpec(0.4, 0.4 * DEG, seed=902,
                                                       target="observable"))
    ct = random_ct(903)
    meas = gen_measurements(truth, ct, random_poses(30, seed=904),
                            NoiseSpec(0, 0, 0, 0))
    G_R = euler_zyx(0.4, -0.25, 0.15)
    G_t = np.array([5.0, 2.0, -3.0])
    moved = [Measurement(q=m.q, p_m=G_R @ m.p_m + G_t, z_m=G_R @ m.z_m)
             for m in meas]
    fk_a = calibrate(meas).gamma_star.model.param_vector()
    fk_b = calibrate(moved).gamma_star.model.param_vector()
    assert np.abs(fk_a - fk_b).max() < 1e-9

    # exact w-scaling of the residual blocks
    gamma = CalibrationParams.from_nominal()
    m = meas[0]
    e1, e2 = residual(gamma, m, w=3.0), residual(gamma, m, w=6.0)
    assert np.array_equal(e1[:3], e2[:3])
    assert np.array_equal(e2[3:], 2.0 * e1[3:])

    # rigid-motion equivariance of localization
    tip = np.array([0.4, 0.1, 4.8])
    axis = np.array([0.1, 0.2, 0.97])
    axis /= np.linalg.norm(axis)
    cloud, _ = synth_cloud(tip, axis, ToolGeometry(),
                           NoiseSpec(0, 0, 0.005, 0.01, seed=905), ScanSpec())
    movedc = OctPointCloud(points=cloud.points @ G_R.T + G_t,
                           intensity=cloud.intensity,
                           axial_res=cloud.axial_res, lateral_res=cloud.lateral_res,
                           bscan_dir=G_R @ cloud.bscan_dir)
    est_a, est_b = localize_tool(cloud), localize_tool(movedc)
    assert np.abs(est_b.p - (G_R @ est_a.p + G_t)).max() < 1e-9
    assert np.abs(est_b.z - G_R @ est_a.z).max() < 1e-9

    # translation equivariance of the RCM fit
    lines = [ToolLine(p=rng.normal(size=3) * 10,
                      z=(lambda v: v / np.linalg.norm(v))(rng.normal(size=3)))
             for _ in range(12)]
    shifted = [ToolLine(p=ln.p + G_t, z=ln.z) for ln in lines]
    assert np.abs(fit_rcm(shifted).p_rcm - (fit_rcm(lines).p_rcm + G_t)).max() < 1e-9

    # simulator determinism
    a, _ = synth_cloud(tip, axis, ToolGeometry(), NoiseSpec(seed=906), ScanSpec())
    b, _ = synth_cloud(tip, axis, ToolGeometry(), NoiseSpec(seed=906), ScanSpec())
    assert np.array_equal(a.points, b.points)
    pa = random_poses(10, seed=907)
    pb = random_poses(10, seed=907)
    assert all(np.array_equal(x.as_array(), y.as_array()) for x, y in zip(pa, pb))

    elapsed = time.perf_counter() - t0
    assert elapsed < 300.0
    _report(9, "property suites", f"{elapsed:.1f} s")
