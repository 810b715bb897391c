import numpy as np
import pytest

from rcmcal.errors import ConvergenceError, DegenerateTargetError, UnreachableTargetError
from rcmcal.kinematics import (
    DEG,
    DHLink,
    JointLimits,
    JointState,
    PARAM_NAMES,
    RobotModel,
    SixParamLink,
    closed_form_consistency_report,
    dh_transform,
    forward_kinematics,
    forward_kinematics_nominal,
    inverse_kinematics_nominal,
    inverse_kinematics_numeric,
    nominal_tool_axis,
    numeric_jacobian,
    six_param_transform,
    uncorrected_closed_form_rotation,
)


# -- independent elementary-matrix oracle ------------------------------------

def _rx(a):
    c, s = np.cos(a), np.sin(a)
    M = np.eye(4)
    M[1:3, 1:3] = [[c, -s], [s, c]]
    return M


def _ry(a):
    c, s = np.cos(a), np.sin(a)
    M = np.eye(4)
    M[0, 0] = c; M[0, 2] = s; M[2, 0] = -s; M[2, 2] = c
    return M


def _rz(a):
    c, s = np.cos(a), np.sin(a)
    M = np.eye(4)
    M[0:2, 0:2] = [[c, -s], [s, c]]
    return M


def _tx(v):
    M = np.eye(4); M[0, 3] = v; return M


def _ty(v):
    M = np.eye(4); M[1, 3] = v; return M


def _tz(v):
    M = np.eye(4); M[2, 3] = v; return M


# -- four-parameter link ------------------------------------------------------

def test_dh_identity_case():
    T = dh_transform(DHLink(0, 0, 0, 0), 0.0)
    assert np.allclose(T.matrix(), np.eye(4))


def test_dh_single_factor_case():
    T = dh_transform(DHLink(0, 0, 0, 60 * DEG), 0.0)
    assert np.allclose(T.matrix(), _rx(60 * DEG))
    assert np.allclose(T.translation, 0.0)


def test_dh_general_matches_elementary_product():
    link = DHLink(d=5.0, theta_offset=30 * DEG, a=2.0, alpha=10 * DEG)
    T = dh_transform(link, 15 * DEG)
    oracle = _tz(5.0) @ _rz(45 * DEG) @ _tx(2.0) @ _rx(10 * DEG)
    assert np.allclose(T.matrix(), oracle, atol=1e-14)


def test_dh_translational_drive():
    link = DHLink(d=5.0, theta_offset=30 * DEG, a=2.0, alpha=10 * DEG,
                  joint_kind="translational")
    T = dh_transform(link, 3.0)
    oracle = _tz(8.0) @ _rz(30 * DEG) @ _tx(2.0) @ _rx(10 * DEG)
    assert np.allclose(T.matrix(), oracle, atol=1e-14)


def test_dh_rejects_non_finite():
    with pytest.raises(ValueError):
        dh_transform(DHLink(0, 0, 0, 0), float("nan"))
    with pytest.raises(ValueError):
        dh_transform(DHLink(np.inf, 0, 0, 0), 0.0)


# -- six-parameter link -------------------------------------------------------

def test_six_param_identity():
    T = six_param_transform(SixParamLink(0, 0, 0, 0, 0, 0), 0.0)
    assert np.allclose(T.matrix(), np.eye(4))


def test_six_param_pure_y_translation():
    T = six_param_transform(SixParamLink(0, 0, 1.0, 0, 0, 0), 0.0)
    assert np.allclose(T.translation, [0, 1, 0])
    assert np.allclose(T.rotation, np.eye(3))


def test_six_param_generic_matches_elementary_product():
    link = SixParamLink(d=4.0, theta=20 * DEG, b=1.5, beta=-35 * DEG, a=0.7,
                        alpha=12 * DEG)
    T = six_param_transform(link, 2.5)
    oracle = (_tz(6.5) @ _rz(20 * DEG) @ _ty(1.5) @ _ry(-35 * DEG)
              @ _tx(0.7) @ _rx(12 * DEG))
    assert np.allclose(T.matrix(), oracle, atol=1e-14)


# -- forward kinematics -------------------------------------------------------

def test_fk_zero_configuration_at_rcm():
    T = forward_kinematics(RobotModel.nominal(), JointState())
    assert np.allclose(T.translation, 0.0, atol=1e-15)


def test_fk_straight_insertion():
    T = forward_kinematics(RobotModel.nominal(), JointState(d3=10.0))
    assert np.allclose(T.translation, [0, 0, 10.0], atol=1e-12)
    assert np.allclose(T.tool_axis, [0, 0, 1], atol=1e-12)


def test_fk_matches_per_link_chain_on_perturbed_model():
    rng = np.random.default_rng(21)
    nominal = RobotModel.nominal()
    vec = nominal.param_vector()
    vec += rng.uniform(-0.5, 0.5, 18)
    model = nominal.with_param_vector(vec)
    for _ in range(20):
        q = JointState(rng.uniform(-1.2, 0), rng.uniform(-0.7, 0.7),
                       rng.uniform(-5, 25), rng.uniform(-3, 3), rng.uniform(0, 10))
        T = forward_kinematics(model, q)
        oracle = (dh_transform(model.links[0], q.theta1).matrix()
                  @ dh_transform(model.links[1], q.theta2).matrix()
                  @ dh_transform(model.links[2], q.theta4).matrix()
                  @ six_param_transform(model.links[3], q.d3).matrix())
        assert np.allclose(T.matrix(), oracle, atol=1e-13)


def test_fk_orthonormality_property():
    rng = np.random.default_rng(8)
    nominal = RobotModel.nominal()
    model = nominal.with_param_vector(nominal.param_vector()
                                      + rng.uniform(-1, 1, 18))
    for _ in range(200):
        q = JointState(rng.uniform(-1.2, 0), rng.uniform(-0.7, 0.7),
                       rng.uniform(-40, 25), rng.uniform(-6, 6), 0.0)
        assert forward_kinematics(model, q).orthonormality_error() < 1e-12
        assert forward_kinematics_nominal(q).orthonormality_error() < 1e-12


def test_fk_nominal_identities():
    assert np.allclose(forward_kinematics_nominal(JointState()).translation, 0.0)
    T = forward_kinematics_nominal(JointState(d3=1.0))
    assert np.allclose(T.translation, [0, 0, 1.0], atol=1e-15)


def test_fk_nominal_agrees_with_structural_chain():
    """Closed-form axis equals the per-link product and the model chain."""
    rng = np.random.default_rng(4)
    nominal = RobotModel.nominal()
    for _ in range(100):
        q = JointState(rng.uniform(-70 * DEG, 0), rng.uniform(-40 * DEG, 40 * DEG),
                       rng.uniform(1, 25), rng.uniform(-np.pi, np.pi), 0.0)
        T = forward_kinematics_nominal(q)
        axis = nominal_tool_axis(q.theta1, q.theta2)
        assert np.allclose(T.translation, q.d3 * axis, atol=1e-9)
        T_chain = forward_kinematics(nominal, q)
        assert np.allclose(T.matrix(), T_chain.matrix(), atol=1e-12)


def test_rcm_property_nominal():
    rng = np.random.default_rng(77)
    for _ in range(500):
        q = JointState(rng.uniform(-70 * DEG, 0), rng.uniform(-40 * DEG, 40 * DEG),
                       0.0, rng.uniform(-6, 6), 0.0)
        assert np.linalg.norm(forward_kinematics_nominal(q).translation) < 1e-12


def test_ray_property_nominal():
    rng = np.random.default_rng(13)
    for _ in range(100):
        t1, t2 = rng.uniform(-1.2, 0), rng.uniform(-0.7, 0.7)
        d3 = rng.uniform(-40, 25)
        T = forward_kinematics_nominal(JointState(t1, t2, d3))
        z = T.tool_axis
        assert abs(np.linalg.norm(z) - 1.0) < 1e-12
        assert np.allclose(T.translation, d3 * z, atol=1e-12)


# -- superseded closed form ----------------------------------------------------

def test_uncorrected_closed_form_is_not_orthonormal_off_home():
    R = uncorrected_closed_form_rotation(-30 * DEG, 0.0)
    col = R[:, 1]
    s1 = np.sin(-30 * DEG)
    c1 = np.cos(-30 * DEG)
    assert np.linalg.norm(col) == pytest.approx(np.sqrt(s1 ** 2 / 4 + c1 ** 2))
    assert abs(np.linalg.norm(col) - 1.0) > 1e-3


def test_consistency_gate_agrees_where_orthonormal():
    report = closed_form_consistency_report()
    assert report["orthonormal_points"], "home pose must qualify"
    assert report["worst_deviation_where_orthonormal"] < 1e-9
    # the transcription genuinely disagrees elsewhere; the gate records it
    assert report["worst_deviation_elsewhere"] > 1e-3


# -- analytic inverse kinematics ------------------------------------------------

def test_ik_straight_insertion():
    q = inverse_kinematics_nominal([0, 0, 10.0])
    assert q.theta1 == pytest.approx(0.0, abs=1e-12)
    assert q.theta2 == pytest.approx(0.0, abs=1e-12)
    assert q.d3 == pytest.approx(10.0)
    assert q.theta4 == 0.0 and q.d5 == 0.0


def test_ik_recovers_joints():
    q_true = JointState(-20 * DEG, 15 * DEG, 12.0)
    p = forward_kinematics_nominal(q_true).translation
    q = inverse_kinematics_nominal(p)
    assert q.theta1 == pytest.approx(q_true.theta1, abs=1e-9)
    assert q.theta2 == pytest.approx(q_true.theta2, abs=1e-9)
    assert q.d3 == pytest.approx(q_true.d3, abs=1e-9)


def test_ik_unreachable_norm():
    p = np.array([0, 0, 30.0])
    with pytest.raises(UnreachableTargetError) as exc:
        inverse_kinematics_nominal(p)
    assert exc.value.limit == "d3"


def test_ik_degenerate_origin():
    with pytest.raises(DegenerateTargetError):
        inverse_kinematics_nominal([0.0, 0.0, 0.0])


def test_ik_rejects_theta2_overtilt():
    # direction 60 deg off the base axis needs |theta2| ~ 70 deg
    p = 10.0 * np.array([np.sin(60 * DEG), 0.0, np.cos(60 * DEG)])
    with pytest.raises(UnreachableTargetError) as exc:
        inverse_kinematics_nominal(p)
    assert exc.value.limit == "theta2"


def test_ik_round_trip_grid():
    """Joint round trip on a 5 deg x 5 deg x 4 mm sub-grid (full grid in acceptance)."""
    for t1 in np.arange(-70, 1, 5.0) * DEG:
        for t2 in np.arange(-40, 41, 5.0) * DEG:
            if t2 == 0.0 and t1 != 0.0:
                continue  # theta1 unobservable on the base axis
            for d3 in (1.0, 9.0, 17.0, 25.0):
                q = JointState(float(t1), float(t2), d3)
                p = forward_kinematics_nominal(q).translation
                r = inverse_kinematics_nominal(p)
                assert abs(r.theta1 - q.theta1) < 1e-9
                assert abs(r.theta2 - q.theta2) < 1e-9
                assert abs(r.d3 - q.d3) < 1e-9


# -- numeric jacobian ------------------------------------------------------------

def test_jacobian_d3_column_at_zero():
    J = numeric_jacobian(RobotModel.nominal(), JointState())
    assert np.allclose(J[:3, 2], [0, 0, 1], atol=1e-9)


def test_jacobian_theta4_position_column_zero():
    rng = np.random.default_rng(2)
    for _ in range(10):
        q = JointState(rng.uniform(-1, 0), rng.uniform(-0.6, 0.6),
                       rng.uniform(1, 25), rng.uniform(-3, 3), 0.0)
        J = numeric_jacobian(RobotModel.nominal(), q)
        assert np.allclose(J[:3, 3], 0.0, atol=1e-12)


def test_jacobian_d5_column_zero():
    J = numeric_jacobian(RobotModel.nominal(),
                         JointState(-0.5, 0.3, 10.0, 1.0, 5.0))
    assert np.allclose(J[:, 4], 0.0)


def test_jacobian_matches_independent_finite_differences():
    """Second oracle with a different step size and direct FK calls."""
    rng = np.random.default_rng(99)
    nominal = RobotModel.nominal()
    model = nominal.with_param_vector(nominal.param_vector()
                                      + rng.uniform(-0.3, 0.3, 18))
    q = JointState(-0.8, 0.4, 15.0, 0.7, 2.0)
    J = numeric_jacobian(model, q)
    h = 3e-6
    base = q.as_array()
    for j in range(5):
        up, dn = base.copy(), base.copy()
        up[j] += h
        dn[j] -= h
        Tu = forward_kinematics(model, JointState.from_array(up))
        Td = forward_kinematics(model, JointState.from_array(dn))
        col = np.concatenate([(Tu.translation - Td.translation) / (2 * h),
                              (Tu.tool_axis - Td.tool_axis) / (2 * h)])
        assert np.allclose(J[:, j], col, atol=5e-6)


def test_jacobian_wrt_parameters_shape_and_spot_check():
    model = RobotModel.nominal()
    q = JointState(-0.5, 0.2, 12.0, 0.4, 0.0)
    J = numeric_jacobian(model, q, wrt="parameters")
    assert J.shape == (6, 18)
    # terminal-link d translates along the tool axis
    idx = PARAM_NAMES.index("link4.d")
    axis = forward_kinematics(model, q).tool_axis
    assert np.allclose(J[:3, idx], axis, atol=1e-9)


# -- numeric inverse kinematics ----------------------------------------------------

def test_numeric_ik_round_trip_nominal():
    model = RobotModel.nominal()
    q_true = JointState(-35 * DEG, 18 * DEG, 14.0)
    target = forward_kinematics(model, q_true).translation
    q = inverse_kinematics_numeric(model, target, JointState(-0.3, 0.0, 5.0))
    err = np.linalg.norm(forward_kinematics(model, q).translation - target)
    assert err < 1e-6
    assert abs(q.theta1 - q_true.theta1) < 1e-6
    assert abs(q.theta2 - q_true.theta2) < 1e-6
    assert abs(q.d3 - q_true.d3) < 1e-6


def test_numeric_ik_handles_perturbed_model():
    """Analytic IK misses by the perturbation scale; numeric IK recovers."""
    nominal = RobotModel.nominal()
    vec = nominal.param_vector()
    vec[PARAM_NAMES.index("link2.a")] += 0.5  # 0.5 mm link offset
    model = nominal.with_param_vector(vec)
    q_true = JointState(-25 * DEG, 10 * DEG, 18.0)
    target = forward_kinematics(model, q_true).translation

    q_num = inverse_kinematics_numeric(model, target, JointState(-0.4, 0.1, 10.0))
    assert np.linalg.norm(forward_kinematics(model, q_num).translation - target) < 1e-6
    assert abs(q_num.theta1 - q_true.theta1) < 1e-6
    assert abs(q_num.d3 - q_true.d3) < 1e-6

    q_ana = inverse_kinematics_nominal(target)
    miss = np.linalg.norm(forward_kinematics(model, q_ana).translation - target)
    assert miss > 0.1  # of the order of the injected 0.5 mm offset


def test_numeric_ik_generalizes_over_random_perturbations():
    rng = np.random.default_rng(55)
    nominal = RobotModel.nominal()
    for trial in range(5):
        dev = np.zeros(18)
        for i, name in enumerate(PARAM_NAMES):
            field = name.split(".")[1]
            if field in ("d", "a", "b"):
                dev[i] = rng.uniform(-1.0, 1.0)
            else:
                dev[i] = rng.uniform(-2 * DEG, 2 * DEG)
        model = nominal.with_param_vector(nominal.param_vector() + dev)
        q_true = JointState(rng.uniform(-1.1, -0.1), rng.uniform(-0.6, 0.6),
                            rng.uniform(5, 24))
        target = forward_kinematics(model, q_true).translation
        q = inverse_kinematics_numeric(model, target, JointState(-0.5, 0.0, 10.0))
        assert np.linalg.norm(forward_kinematics(model, q).translation - target) < 1e-6


def test_numeric_ik_unreachable_target():
    with pytest.raises(ConvergenceError) as exc:
        inverse_kinematics_numeric(RobotModel.nominal(), [500.0, 0.0, 0.0],
                                   JointState(-0.3, 0.0, 10.0))
    assert exc.value.best is not None
    assert exc.value.residual > 1.0


# -- model serialization -------------------------------------------------------------

def test_model_json_round_trip(tmp_path):
    rng = np.random.default_rng(17)
    nominal = RobotModel.nominal()
    model = nominal.with_param_vector(nominal.param_vector() + rng.uniform(-1, 1, 18))
    path = tmp_path / "model.json"
    model.save(path)
    back = RobotModel.load(path)
    assert np.allclose(back.param_vector(), model.param_vector(), atol=1e-12)
    assert back.limits == model.limits
    q = JointState(-0.6, 0.3, 11.0, 0.9, 0.0)
    assert np.allclose(forward_kinematics(back, q).matrix(),
                       forward_kinematics(model, q).matrix(), atol=1e-12)


def test_model_rejects_wrong_link_layout():
    data = RobotModel.nominal().to_dict()
    data["links"][0]["type"] = "six"
    with pytest.raises(ValueError):
        RobotModel.from_dict(data)


def test_limits_validation():
    with pytest.raises(ValueError):
        JointLimits(theta1=(0.0, -1.0), theta2=(-0.7, 0.7), d3=(-40, 25),
                    theta4=(-12.6, 12.6), d5=(0, 500))
