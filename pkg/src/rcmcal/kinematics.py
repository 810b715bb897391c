"""Forward/inverse kinematics of the 5-DOF RCM arm.

The arm has two rotational shoulder joints whose axes meet at the remote
center of motion (RCM) 60 degrees apart, a translational insertion joint
along the tool centerline, a tool-spin joint about the centerline, and a
gripper/injection joint that never moves the tooltip.

Calibrated kinematics use a chain of three four-parameter links plus one
six-parameter terminal link:

    T = T1(theta1) T2(theta2) T3(theta4) T4(d3)

The first three links are standard four-parameter links (z-rotation
drive); the terminal six-parameter link is driven through its leading
z-translation by the insertion joint d3, so the calibrated chain keeps a
single prismatic insertion variable while the tool-spin joint sweeps any
tool-holder offsets around the centerline.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConvergenceError, DegenerateTargetError, UnreachableTargetError
from .transforms import RigidTransform, rotx, roty, rotz

DEG = math.pi / 180.0

# Finite-difference step: balances truncation against cancellation at
# double precision for both rad and mm parameters.
FD_STEP = 1e-6

SHOULDER_AXIS_SEPARATION = 60.0 * DEG


@dataclass(frozen=True)
class JointState:
    """One arm configuration: angles in radians, lengths in millimetres."""

    theta1: float = 0.0
    theta2: float = 0.0
    d3: float = 0.0
    theta4: float = 0.0
    d5: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([self.theta1, self.theta2, self.d3, self.theta4, self.d5])

    @staticmethod
    def from_array(values) -> "JointState":
        t1, t2, d3, t4, d5 = (float(v) for v in values)
        return JointState(t1, t2, d3, t4, d5)

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.as_array())))


@dataclass(frozen=True)
class JointLimits:
    """Per-joint (min, max); angles rad, lengths mm."""

    theta1: tuple[float, float]
    theta2: tuple[float, float]
    d3: tuple[float, float]
    theta4: tuple[float, float]
    d5: tuple[float, float]

    def __post_init__(self):
        for name in ("theta1", "theta2", "d3", "theta4", "d5"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"limit {name}: min {lo} > max {hi}")

    @staticmethod
    def default() -> "JointLimits":
        return JointLimits(
            theta1=(-70.0 * DEG, 0.0),
            theta2=(-40.0 * DEG, 40.0 * DEG),
            d3=(-40.0, 25.0),
            theta4=(-720.0 * DEG, 720.0 * DEG),
            d5=(0.0, 500.0),
        )

    def violations(self, q: JointState, tol: float = 1e-9) -> list[str]:
        out = []
        for name in ("theta1", "theta2", "d3", "theta4", "d5"):
            lo, hi = getattr(self, name)
            v = getattr(q, name)
            if v < lo - tol or v > hi + tol:
                out.append(name)
        return out

    def contains(self, q: JointState, tol: float = 1e-9) -> bool:
        return not self.violations(q, tol)

    def clamp(self, q: JointState) -> JointState:
        vals = {}
        for name in ("theta1", "theta2", "d3", "theta4", "d5"):
            lo, hi = getattr(self, name)
            vals[name] = min(max(getattr(q, name), lo), hi)
        return JointState(**vals)


@dataclass(frozen=True)
class DHLink:
    """Four-parameter link: Trans_z(d) Rot_z(theta) Trans_x(a) Rot_x(alpha).

    ``joint_kind`` selects which parameter the joint variable adds to:
    "rotational" adds to theta, "translational" adds to d.
    """

    d: float
    theta_offset: float
    a: float
    alpha: float
    joint_kind: str = "rotational"

    def __post_init__(self):
        if self.joint_kind not in ("rotational", "translational"):
            raise ValueError(f"unknown joint_kind {self.joint_kind!r}")

    PARAM_FIELDS = ("d", "theta_offset", "a", "alpha")


@dataclass(frozen=True)
class SixParamLink:
    """Six-parameter terminal link:

    Trans_z(d) Rot_z(theta) Trans_y(b) Rot_y(beta) Trans_x(a) Rot_x(alpha)

    The joint variable (insertion depth d3) adds to d.
    """

    d: float
    theta: float
    b: float
    beta: float
    a: float
    alpha: float

    PARAM_FIELDS = ("d", "theta", "b", "beta", "a", "alpha")


def _check_finite(*values):
    for v in values:
        if not math.isfinite(v):
            raise ValueError("non-finite kinematic input")


def dh_transform(link: DHLink, joint_value: float) -> RigidTransform:
    """Four-parameter link transform with the joint variable applied."""
    _check_finite(link.d, link.theta_offset, link.a, link.alpha, joint_value)
    if link.joint_kind == "rotational":
        d, theta = link.d, link.theta_offset + joint_value
    else:
        d, theta = link.d + joint_value, link.theta_offset
    ct, st = math.cos(theta), math.sin(theta)
    ca, sa = math.cos(link.alpha), math.sin(link.alpha)
    R = np.array([
        [ct, -st * ca, st * sa],
        [st, ct * ca, -ct * sa],
        [0.0, sa, ca],
    ])
    t = np.array([link.a * ct, link.a * st, d])
    return RigidTransform(R, t)


def six_param_transform(link: SixParamLink, joint_value: float) -> RigidTransform:
    """Six-parameter terminal transform; joint_value adds to d."""
    _check_finite(link.d, link.theta, link.b, link.beta, link.a, link.alpha, joint_value)
    d = link.d + joint_value
    Rz, Ry, Rx = rotz(link.theta), roty(link.beta), rotx(link.alpha)
    R = Rz @ Ry @ Rx
    t = (np.array([0.0, 0.0, d]) + Rz @ np.array([0.0, link.b, 0.0])
         + (Rz @ Ry) @ np.array([link.a, 0.0, 0.0]))
    return RigidTransform(R, t)


# Canonical flattening of the 18 link parameters, used by calibration.
PARAM_NAMES: tuple[str, ...] = tuple(
    f"link{i + 1}.{f}" for i in range(3) for f in DHLink.PARAM_FIELDS
) + tuple(f"link4.{f}" for f in SixParamLink.PARAM_FIELDS)


@dataclass(frozen=True)
class RobotModel:
    """Kinematic chain: three four-parameter links plus a six-parameter one.

    Joint wiring: link 1 <- theta1, link 2 <- theta2, link 3 <- theta4
    (tool spin), link 4 <- d3 (insertion).  d5 drives the gripper only and
    never enters the pose.
    """

    links: tuple[DHLink, DHLink, DHLink, SixParamLink]
    limits: JointLimits

    @staticmethod
    def nominal(limits: JointLimits | None = None) -> "RobotModel":
        """Ideal RCM geometry: shoulder axes 60 deg apart, no offsets."""
        return RobotModel(
            links=(
                DHLink(0.0, 0.0, 0.0, -SHOULDER_AXIS_SEPARATION),
                DHLink(0.0, 0.0, 0.0, +SHOULDER_AXIS_SEPARATION),
                DHLink(0.0, 0.0, 0.0, 0.0),
                SixParamLink(0.0, 0.0, 0.0, 0.0, 0.0, 0.0),
            ),
            limits=limits or JointLimits.default(),
        )

    def param_vector(self) -> np.ndarray:
        vals = []
        for link in self.links[:3]:
            vals.extend(getattr(link, f) for f in DHLink.PARAM_FIELDS)
        vals.extend(getattr(self.links[3], f) for f in SixParamLink.PARAM_FIELDS)
        return np.array(vals)

    def with_param_vector(self, vec) -> "RobotModel":
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (18,):
            raise ValueError(f"expected 18 link parameters, got {vec.shape}")
        links = []
        for i in range(3):
            d, toff, a, al = vec[4 * i : 4 * i + 4]
            links.append(replace(self.links[i], d=d, theta_offset=toff, a=a, alpha=al))
        d, th, b, be, a, al = vec[12:18]
        links.append(SixParamLink(d, th, b, be, a, al))
        return RobotModel(links=tuple(links), limits=self.limits)

    def to_dict(self) -> dict:
        """JSON form; angles in degrees, lengths in mm."""
        links = []
        for link in self.links[:3]:
            links.append({
                "type": "dh",
                "d": link.d,
                "theta_offset": link.theta_offset / DEG,
                "a": link.a,
                "alpha": link.alpha / DEG,
                "joint_kind": link.joint_kind,
            })
        last = self.links[3]
        links.append({
            "type": "six",
            "d": last.d,
            "theta": last.theta / DEG,
            "b": last.b,
            "beta": last.beta / DEG,
            "a": last.a,
            "alpha": last.alpha / DEG,
        })
        lim = {
            name: [getattr(self.limits, name)[0] / s, getattr(self.limits, name)[1] / s]
            for name, s in (("theta1", DEG), ("theta2", DEG), ("d3", 1.0),
                            ("theta4", DEG), ("d5", 1.0))
        }
        return {"links": links, "limits": lim}

    @staticmethod
    def from_dict(data: dict) -> "RobotModel":
        raw = data["links"]
        if len(raw) != 4 or any(r["type"] != "dh" for r in raw[:3]) or raw[3]["type"] != "six":
            raise ValueError("model must hold three 'dh' links then one 'six' link")
        links = []
        for r in raw[:3]:
            links.append(DHLink(
                d=float(r["d"]),
                theta_offset=float(r["theta_offset"]) * DEG,
                a=float(r["a"]),
                alpha=float(r["alpha"]) * DEG,
                joint_kind=r.get("joint_kind", "rotational"),
            ))
        r = raw[3]
        links.append(SixParamLink(
            d=float(r["d"]), theta=float(r["theta"]) * DEG, b=float(r["b"]),
            beta=float(r["beta"]) * DEG, a=float(r["a"]), alpha=float(r["alpha"]) * DEG,
        ))
        lim = data.get("limits")
        if lim is None:
            limits = JointLimits.default()
        else:
            limits = JointLimits(
                theta1=(lim["theta1"][0] * DEG, lim["theta1"][1] * DEG),
                theta2=(lim["theta2"][0] * DEG, lim["theta2"][1] * DEG),
                d3=(lim["d3"][0], lim["d3"][1]),
                theta4=(lim["theta4"][0] * DEG, lim["theta4"][1] * DEG),
                d5=(lim["d5"][0], lim["d5"][1]),
            )
        return RobotModel(links=tuple(links), limits=limits)

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)

    @staticmethod
    def load(path) -> "RobotModel":
        with open(path) as fh:
            return RobotModel.from_dict(json.load(fh))


def forward_kinematics(model: RobotModel, q: JointState,
                       check_limits: bool = False) -> RigidTransform:
    """Base-to-tooltip transform of the calibrated chain."""
    if not q.is_finite():
        raise ValueError("non-finite joint state")
    if check_limits:
        bad = model.limits.violations(q)
        if bad:
            raise UnreachableTargetError(f"joint limits violated: {bad}", limit=bad[0])
    T = dh_transform(model.links[0], q.theta1)
    T = T @ dh_transform(model.links[1], q.theta2)
    T = T @ dh_transform(model.links[2], q.theta4)
    T = T @ six_param_transform(model.links[3], q.d3)
    return T


def forward_kinematics_nominal(q: JointState) -> RigidTransform:
    """Closed-form FK of the ideal arm.

    Structurally: rotation theta1 about the base axis, rotation theta2
    about an axis 60 deg away, tool spin theta4 about the centerline, and
    insertion d3 along it.  The tooltip sits at d3 times the tool axis, so
    d3 = 0 pins the tip at the RCM for every shoulder configuration.
    """
    if not q.is_finite():
        raise ValueError("non-finite joint state")
    A = SHOULDER_AXIS_SEPARATION
    R_shoulder = rotz(q.theta1) @ rotx(-A) @ rotz(q.theta2) @ rotx(A)
    R = R_shoulder @ rotz(q.theta4)
    p = q.d3 * R_shoulder[:, 2]
    return RigidTransform(R, p)


def nominal_tool_axis(theta1: float, theta2: float) -> np.ndarray:
    """Unit tool axis of the ideal arm, written out in closed form.

    Cross-check for the structural FK: the tooltip is d3 times this
    vector.
    """
    c1, s1 = math.cos(theta1), math.sin(theta1)
    c2, s2 = math.cos(theta2), math.sin(theta2)
    r3 = math.sqrt(3.0)
    return np.array([
        r3 * (2.0 * c1 * s2 + s1 * c2 - s1) / 4.0,
        r3 * (2.0 * s1 * s2 + c1 - c1 * c2) / 4.0,
        (3.0 * c2 + 1.0) / 4.0,
    ])


def uncorrected_closed_form_rotation(theta1: float, theta2: float) -> np.ndarray:
    """Superseded closed-form rotation, kept only for cross-checking.

    This transcription loses orthonormality away from the home pose (for
    instance its middle column has norm sqrt(s1^2/4 + c1^2) at theta2 = 0),
    so it must never be used as the forward map.  See
    :func:`closed_form_consistency_report`.
    """
    c1, s1 = math.cos(theta1), math.sin(theta1)
    c2, s2 = math.cos(theta2), math.sin(theta2)
    r3 = math.sqrt(3.0)
    e1 = (2.0 * r3 * c1 * s2 + c2 * s1 - r3 * s1) / 4.0
    e2 = r3 * (c1 - c1 * c2 - 2.0 * s1 * s2) / 4.0
    e3 = (3.0 * c2 + 1.0) / 4.0
    return np.array([
        [c1 * c2 - 0.5 * s1 * s2, -(3.0 * s1 - 2.0 * c1 * s2 - c2 * s1) / 4.0, e1],
        [0.5 * c1 * s2 - c2 * s1, (3.0 * c1 + c1 * c2 - 2.0 * s1 * s2) / 4.0, e2],
        [-r3 / 2.0 * s2, r3 / 4.0 * (1.0 - c2), e3],
    ])


def closed_form_consistency_report(n_theta1: int = 15, n_theta2: int = 17,
                                   orth_tol: float = 1e-9) -> dict:
    """Scan the joint range comparing the superseded closed form with the
    structural FK.

    Wherever the superseded matrix is orthonormal it must agree with the
    structural rotation; the report records those points plus the worst
    disagreement elsewhere, so the discrepancy is logged rather than
    silently adopted.
    """
    lims = JointLimits.default()
    t1s = np.linspace(lims.theta1[0], lims.theta1[1], n_theta1)
    t2s = np.linspace(lims.theta2[0], lims.theta2[1], n_theta2)
    consistent, worst_dev_consistent, worst_dev_elsewhere = [], 0.0, 0.0
    for t1 in t1s:
        for t2 in t2s:
            legacy = uncorrected_closed_form_rotation(t1, t2)
            orth_err = float(np.abs(legacy.T @ legacy - np.eye(3)).max())
            structural = forward_kinematics_nominal(JointState(t1, t2)).rotation
            dev = float(np.abs(legacy - structural).max())
            if orth_err < orth_tol:
                consistent.append({"theta1": float(t1), "theta2": float(t2),
                                   "deviation": dev})
                worst_dev_consistent = max(worst_dev_consistent, dev)
            else:
                worst_dev_elsewhere = max(worst_dev_elsewhere, dev)
    return {
        "orthonormal_points": consistent,
        "worst_deviation_where_orthonormal": worst_dev_consistent,
        "worst_deviation_elsewhere": worst_dev_elsewhere,
        "grid": [n_theta1, n_theta2],
    }


def inverse_kinematics_nominal(p) -> JointState:
    """Closed-form IK of the ideal arm for a tooltip position.

    Returns (theta1, theta2, d3) with theta4 = d5 = 0.  The insertion
    depth is the target norm; theta2 follows from the axial component of
    the tool axis, with the sign branch chosen so the forward map
    round-trips; theta1 aligns the azimuth.  When the target lies on the
    base axis theta1 is unobservable and is returned as 0.
    """
    p = np.asarray(p, dtype=float)
    if p.shape != (3,) or not np.all(np.isfinite(p)):
        raise ValueError("target must be a finite 3-vector")
    limits = JointLimits.default()
    d3 = float(np.linalg.norm(p))
    if d3 < 1e-12:
        raise DegenerateTargetError("target at the RCM: tool direction undefined")
    if d3 > limits.d3[1] + 1e-9:
        raise UnreachableTargetError(
            f"|p| = {d3:.6g} mm exceeds the d3 limit {limits.d3[1]} mm", limit="d3")

    cos_t2 = (4.0 * p[2] - d3) / (3.0 * d3)
    if cos_t2 < math.cos(limits.theta2[1]) - 1e-9:
        raise UnreachableTargetError(
            "target direction too far from the base axis for theta2 limits",
            limit="theta2")
    cos_t2 = min(cos_t2, 1.0)
    sin_t2 = math.sqrt(max(0.0, 1.0 - cos_t2 * cos_t2))

    best = None
    rejected_limits: list[str] = []
    for s2 in (sin_t2, -sin_t2):
        t2 = math.atan2(s2, cos_t2)
        axis = nominal_tool_axis(0.0, t2)
        if math.hypot(axis[0], axis[1]) < 1e-12:
            t1 = 0.0
        else:
            t1 = math.atan2(axis[0] * p[1] - axis[1] * p[0],
                            axis[0] * p[0] + axis[1] * p[1])
        q = JointState(t1, t2, d3)
        bad = limits.violations(q)
        if bad:
            rejected_limits.extend(bad)
            continue
        err = float(np.linalg.norm(forward_kinematics_nominal(q).translation - p))
        if best is None or err < best[0]:
            best = (err, q)
        if s2 == -sin_t2 and sin_t2 == 0.0:
            break

    if best is None:
        raise UnreachableTargetError(
            f"no in-limit solution (violations: {sorted(set(rejected_limits))})",
            limit=rejected_limits[0] if rejected_limits else None)
    err, q = best
    if err > 1e-9 * max(1.0, d3):
        raise UnreachableTargetError(
            f"no branch round-trips the target (best error {err:.3g} mm)")
    return q


def numeric_jacobian(model: RobotModel, q: JointState, wrt: str = "joints",
                     step: float = FD_STEP) -> np.ndarray:
    """Central-difference Jacobian of tooltip position and tool axis.

    Rows: d(position)/d(), then d(tool axis)/d() — a 6 x n matrix.
    ``wrt``: "joints" (n = 5, order theta1 theta2 d3 theta4 d5) or
    "parameters" (n = 18, canonical link-parameter order).
    """
    if wrt == "joints":
        base = q.as_array()

        def evaluate(vec):
            T = forward_kinematics(model, JointState.from_array(vec))
            return np.concatenate([T.translation, T.tool_axis])

        n = 5
    elif wrt == "parameters":
        base = model.param_vector()

        def evaluate(vec):
            T = forward_kinematics(model.with_param_vector(vec), q)
            return np.concatenate([T.translation, T.tool_axis])

        n = 18
    else:
        raise ValueError(f"wrt must be 'joints' or 'parameters', got {wrt!r}")

    J = np.zeros((6, n))
    for j in range(n):
        up, dn = base.copy(), base.copy()
        up[j] += step
        dn[j] -= step
        J[:, j] = (evaluate(up) - evaluate(dn)) / (2.0 * step)
    return J


def inverse_kinematics_numeric(model: RobotModel, target, q0: JointState,
                               tol: float = 1e-6, damping: float = 1e-6,
                               max_iter: int = 100) -> JointState:
    """Damped least-squares IK on the calibrated chain.

    Solves for (theta1, theta2, d3) so the tooltip reaches ``target``;
    theta4 and d5 pass through from ``q0`` (the spin joint barely moves
    the tip and is commanded separately).  Iterates are projected into the
    joint limits, so targets outside the limited workspace cannot
    converge and raise :class:`ConvergenceError` carrying the best
    iterate.  A solve that converges while pinned against a limit is
    returned clamped and flagged with a warning.
    """
    target = np.asarray(target, dtype=float)
    if target.shape != (3,) or not np.all(np.isfinite(target)):
        raise ValueError("target must be a finite 3-vector")
    q = model.limits.clamp(q0).as_array()
    active = [0, 1, 2]
    best_q, best_err = q.copy(), math.inf
    clamped = False
    for _ in range(max_iter):
        T = forward_kinematics(model, JointState.from_array(q))
        e = target - T.translation
        err = float(np.linalg.norm(e))
        if err < best_err:
            best_err, best_q = err, q.copy()
        if err < tol:
            if clamped:
                warnings.warn("IK converged against a joint limit; solution clamped",
                              stacklevel=2)
            return JointState.from_array(q)
        J = numeric_jacobian(model, JointState.from_array(q))[:3, active]
        H = J.T @ J + damping * np.eye(3)
        delta = np.linalg.solve(H, J.T @ e)
        q[active] += delta
        projected = model.limits.clamp(JointState.from_array(q)).as_array()
        clamped = bool(np.any(np.abs(projected - q) > 1e-12))
        q = projected
        if float(np.linalg.norm(delta)) < 1e-14:
            break
    raise ConvergenceError(
        f"IK did not converge in {max_iter} iterations (best error {best_err:.3g} mm)",
        best=JointState.from_array(best_q), residual=best_err)
