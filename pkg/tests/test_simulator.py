import numpy as np
import pytest

from rcmcal.calibration import CalibrationParams, error_vector
from rcmcal.kinematics import (
    DEG,
    JointLimits,
    PARAM_NAMES,
    RobotModel,
    forward_kinematics_nominal,
)
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


# -- model perturbation ---------------------------------------------------------

def test_perturb_zero_magnitude_identity():
    nominal = RobotModel.nominal()
    model, dev = perturb_model(nominal, PerturbationSpec(0.0, 0.0, seed=1))
    assert np.array_equal(model.param_vector(), nominal.param_vector())
    assert all(v == 0.0 for v in dev.values())


def test_perturb_deterministic():
    nominal = RobotModel.nominal()
    a, dev_a = perturb_model(nominal, PerturbationSpec(0.5, 0.01, seed=42))
    b, dev_b = perturb_model(nominal, PerturbationSpec(0.5, 0.01, seed=42))
    assert np.array_equal(a.param_vector(), b.param_vector())
    assert dev_a == dev_b


def test_perturb_terminal_only():
    nominal = RobotModel.nominal()
    model, dev = perturb_model(nominal,
                               PerturbationSpec(0.5, 0.01, seed=3, target="terminal"))
    vec_n, vec_p = nominal.param_vector(), model.param_vector()
    assert np.array_equal(vec_p[:12], vec_n[:12])  # links 1-3 untouched
    assert set(dev) == {n for n in PARAM_NAMES if n.startswith("link4.")}


def test_perturb_respects_bounds():
    nominal = RobotModel.nominal()
    model, dev = perturb_model(nominal, PerturbationSpec(0.3, 0.5 * DEG, seed=4))
    for name, delta in dev.items():
        bound = 0.5 * DEG if name.split(".")[1] in ("theta_offset", "theta",
                                                    "alpha", "beta") else 0.3
        assert abs(delta) <= bound


def test_perturb_rejects_unknown_name():
    with pytest.raises(ValueError):
        perturb_model(RobotModel.nominal(),
                      PerturbationSpec(0.1, 0.1, target=("link9.q",)))


# -- pose sampling -----------------------------------------------------------------

def test_random_poses_cover_within_limits():
    limits = JointLimits.default()
    poses = random_poses(30, strategy="cover", seed=5)
    assert len(poses) == 30
    assert all(limits.contains(q) for q in poses)


def test_random_poses_repeatability_spacing():
    poses = random_poses(5, strategy="repeatability", seed=6)
    for a, b in zip(poses, poses[1:]):
        pa = forward_kinematics_nominal(a).translation
        pb = forward_kinematics_nominal(b).translation
        assert 2.5 <= np.linalg.norm(pa - pb) <= 4.0


def test_random_poses_deterministic():
    a = random_poses(10, seed=7)
    b = random_poses(10, seed=7)
    assert all(np.array_equal(x.as_array(), y.as_array()) for x, y in zip(a, b))


def test_random_poses_needs_positive_n():
    with pytest.raises(ValueError):
        random_poses(0)


# -- measurement generation -----------------------------------------------------------

def test_gen_measurements_zero_noise_zero_residual():
    model, _ = perturb_model(RobotModel.nominal(), PerturbationSpec(0.4, 0.01, seed=8))
    ct = random_ct(9)
    poses = random_poses(10, seed=10)
    meas = gen_measurements(model, ct, poses, NoiseSpec(0, 0, 0, 0))
    gamma = CalibrationParams(model, ct, CalibrationParams.default_free_mask())
    assert np.abs(error_vector(gamma, meas)).max() < 1e-12


def test_gen_measurements_noise_scale():
    model = RobotModel.nominal()
    ct = random_ct(11)
    poses = random_poses(1000, seed=12)
    meas = gen_measurements(model, ct, poses, NoiseSpec(0.008, 0, 0, 0, seed=13))
    clean = gen_measurements(model, ct, poses, NoiseSpec(0, 0, 0, 0))
    deltas = np.array([m.p_m - c.p_m for m, c in zip(meas, clean)]).ravel()
    assert np.std(deltas) == pytest.approx(0.008, rel=0.2)


def test_gen_measurements_unit_axes():
    model = RobotModel.nominal()
    meas = gen_measurements(model, random_ct(14), random_poses(50, seed=15),
                            NoiseSpec(0.01, 0.002, 0, 0, seed=16))
    for m in meas:
        assert abs(np.linalg.norm(m.z_m) - 1.0) < 1e-12


def test_gen_measurements_echoes_joints():
    poses = random_poses(5, seed=17)
    meas = gen_measurements(RobotModel.nominal(), random_ct(18), poses,
                            NoiseSpec(0.01, 0.001, 0, 0, seed=19))
    for q, m in zip(poses, meas):
        assert np.array_equal(q.as_array(), m.q.as_array())


# -- synthetic clouds ------------------------------------------------------------------

def test_synth_cloud_deterministic():
    axis = np.array([0.2, 0.1, 0.97])
    axis /= np.linalg.norm(axis)
    a, _ = synth_cloud([0, 0, 5.0], axis, ToolGeometry(), NoiseSpec(seed=20), ScanSpec())
    b, _ = synth_cloud([0, 0, 5.0], axis, ToolGeometry(), NoiseSpec(seed=20), ScanSpec())
    assert np.array_equal(a.points, b.points)
    assert np.array_equal(a.intensity, b.intensity)


def test_synth_cloud_labels_and_intensities():
    cloud, truth = synth_cloud([0, 0, 5.0], [0, 0, 1.0], ToolGeometry(),
                               NoiseSpec(0, 0, 0, 0, seed=21),
                               ScanSpec(background_fraction=0.02))
    assert len(truth.labels) == len(cloud)
    tool = truth.labels == "shaft"
    bg = truth.labels == "background"
    assert bg.sum() > 0
    assert np.all(cloud.intensity[tool] == 1.0)
    assert np.all(cloud.intensity[bg] == 0.1)


def test_synth_cloud_geometry():
    tip = np.array([1.0, 2.0, 3.0])
    axis = np.array([0.0, 0.0, 1.0])
    geom = ToolGeometry(shaft_radius=0.25, shaft_length_in_view=4.0)
    cloud, truth = synth_cloud(tip, axis, geom, NoiseSpec(0, 0, 0, 0, seed=22),
                               ScanSpec(background_fraction=0.0))
    shaft = cloud.points[truth.labels == "shaft"]
    radial = np.linalg.norm((shaft - tip)[:, :2], axis=1)
    assert np.allclose(radial, 0.25, atol=1e-12)
    along = (shaft - tip) @ axis
    assert along.max() <= 1e-12  # nothing beyond the tip
    assert along.min() >= -4.1


def test_synth_cloud_scan_direction_points_tipward():
    axis = np.array([1.0, 0.0, 0.0])  # orthogonal to the default scan direction
    cloud, _ = synth_cloud([0, 0, 0], axis, ToolGeometry(),
                           NoiseSpec(0, 0, 0, 0, seed=23), ScanSpec())
    assert float(cloud.bscan_dir @ axis) > 0.1
