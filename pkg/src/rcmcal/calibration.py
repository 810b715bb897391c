"""Joint estimation of coordinate-transform and kinematic parameters.

The calibration stacks, per measurement, a position residual and a
weighted tool-axis residual:

    e_i = [ p_m - (R(r) p_b(q, eta) + p) ;  w (z_m - R(r) z_b(q, eta)) ]

where (p, r) is the rigid registration between the measurement frame and
the robot base ("CT parameters") and eta the 18 link parameters.  The
stacked 24-parameter vector gamma = [eta; p; r] is estimated by
Levenberg-Marquardt over whichever entries the free mask leaves open,
after an SVD observability gate fixes directions the data cannot see.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    DivergedError,
    IllPosedProblemError,
    InsufficientDataError,
)
from .kinematics import (
    DEG,
    FD_STEP,
    JointState,
    PARAM_NAMES,
    RobotModel,
    forward_kinematics,
    numeric_jacobian,
)
from .transforms import euler_zyx, euler_zyx_angles, wrap_angle

CT_NAMES: tuple[str, ...] = ("ct.px", "ct.py", "ct.pz", "ct.rz", "ct.ry", "ct.rx")
GAMMA_NAMES: tuple[str, ...] = PARAM_NAMES + CT_NAMES
N_PARAMS = len(GAMMA_NAMES)  # 24

# Gauge freedoms between the registration and the first link: a base-z
# rotation is indistinguishable from link1.theta_offset and a base-z
# translation from link1.d, so both stay at nominal by default.
GAUGE_FIXED: tuple[str, ...] = ("link1.d", "link1.theta_offset")

DEFAULT_ORIENTATION_WEIGHT = 10.0  # mm per unit axis mismatch


@dataclass(frozen=True)
class CTParams:
    """Rigid registration measurement-frame <- base-frame.

    ``p_mb`` in mm; ``r_mb`` ZYX Euler angles (rz, ry, rx) in radians,
    wrapped to (-pi, pi].
    """

    p_mb: np.ndarray
    r_mb: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.p_mb, dtype=float)
        r = np.array([wrap_angle(v) for v in np.asarray(self.r_mb, dtype=float)])
        if p.shape != (3,) or r.shape != (3,):
            raise ValueError("CTParams wants two 3-vectors")
        object.__setattr__(self, "p_mb", p)
        object.__setattr__(self, "r_mb", r)
        self.p_mb.setflags(write=False)
        self.r_mb.setflags(write=False)

    @staticmethod
    def identity() -> "CTParams":
        return CTParams(np.zeros(3), np.zeros(3))

    def rotation(self) -> np.ndarray:
        return euler_zyx(*self.r_mb)

    def apply_point(self, p) -> np.ndarray:
        return self.rotation() @ np.asarray(p, dtype=float) + self.p_mb

    def apply_direction(self, d) -> np.ndarray:
        return self.rotation() @ np.asarray(d, dtype=float)


@dataclass(frozen=True)
class Measurement:
    """One observation: encoder joints, tooltip position and tool axis in
    the measurement frame."""

    q: JointState
    p_m: np.ndarray
    z_m: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.p_m, dtype=float)
        z = np.asarray(self.z_m, dtype=float)
        if p.shape != (3,) or z.shape != (3,):
            raise ValueError("measurement wants 3-vectors")
        if abs(np.linalg.norm(z) - 1.0) > 1e-9:
            raise ValueError("tool axis must be a unit vector")
        object.__setattr__(self, "p_m", p)
        object.__setattr__(self, "z_m", z)
        self.p_m.setflags(write=False)
        self.z_m.setflags(write=False)


def save_measurements(path, measurements) -> None:
    """Write a measurement set: JSON array of {q, p_m, z_m} records.

    Angular joints in degrees, lengths in mm (file convention).
    """
    records = []
    for m in measurements:
        records.append({
            "q": [m.q.theta1 / DEG, m.q.theta2 / DEG, m.q.d3,
                  m.q.theta4 / DEG, m.q.d5],
            "p_m": list(map(float, m.p_m)),
            "z_m": list(map(float, m.z_m)),
        })
    with open(path, "w") as fh:
        json.dump(records, fh, indent=1)


def load_measurements(path) -> list[Measurement]:
    with open(path) as fh:
        records = json.load(fh)
    out = []
    for r in records:
        t1, t2, d3, t4, d5 = r["q"]
        out.append(Measurement(
            q=JointState(t1 * DEG, t2 * DEG, d3, t4 * DEG, d5),
            p_m=np.array(r["p_m"], dtype=float),
            z_m=np.array(r["z_m"], dtype=float),
        ))
    return out


@dataclass(frozen=True)
class CalibrationParams:
    """Stacked parameter vector: 18 link scalars + 6 CT scalars, with a
    free mask saying which entries the optimizer may touch."""

    model: RobotModel
    ct: CTParams
    free_mask: np.ndarray

    def __post_init__(self):
        mask = np.asarray(self.free_mask, dtype=bool)
        if mask.shape != (N_PARAMS,):
            raise ValueError(f"free mask must have {N_PARAMS} entries")
        object.__setattr__(self, "free_mask", mask)
        self.free_mask.setflags(write=False)

    @staticmethod
    def default_free_mask() -> np.ndarray:
        mask = np.ones(N_PARAMS, dtype=bool)
        for name in GAUGE_FIXED:
            mask[GAMMA_NAMES.index(name)] = False
        return mask

    @staticmethod
    def from_nominal(model: RobotModel | None = None,
                     ct: CTParams | None = None) -> "CalibrationParams":
        return CalibrationParams(
            model=model or RobotModel.nominal(),
            ct=ct or CTParams.identity(),
            free_mask=CalibrationParams.default_free_mask(),
        )

    def vector(self) -> np.ndarray:
        return np.concatenate([self.model.param_vector(), self.ct.p_mb, self.ct.r_mb])

    def with_vector(self, vec) -> "CalibrationParams":
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (N_PARAMS,):
            raise ValueError(f"expected {N_PARAMS} parameters")
        return CalibrationParams(
            model=self.model.with_param_vector(vec[:18]),
            ct=CTParams(vec[18:21], vec[21:24]),
            free_mask=self.free_mask,
        )

    def with_free_mask(self, mask) -> "CalibrationParams":
        return CalibrationParams(self.model, self.ct, np.asarray(mask, dtype=bool))

    def free_names(self) -> list[str]:
        return [n for n, f in zip(GAMMA_NAMES, self.free_mask) if f]


def mask_for(names) -> np.ndarray:
    """Free mask selecting exactly the given parameter names."""
    mask = np.zeros(N_PARAMS, dtype=bool)
    for name in names:
        mask[GAMMA_NAMES.index(name)] = True
    return mask


def _is_angular(name: str) -> bool:
    return name.split(".")[1] in ("theta_offset", "theta", "alpha", "beta",
                                  "rz", "ry", "rx")


def named_gamma(gamma: "CalibrationParams") -> dict[str, float]:
    """Parameter vector as a name -> value map, angles in degrees."""
    out = {}
    for name, value in zip(GAMMA_NAMES, gamma.vector()):
        out[name] = float(value / DEG) if _is_angular(name) else float(value)
    return out


def gamma_from_named(named: dict, free_mask=None) -> "CalibrationParams":
    """Inverse of :func:`named_gamma`; missing entries default to nominal."""
    base = CalibrationParams.from_nominal()
    vec = base.vector()
    for name, value in named.items():
        idx = GAMMA_NAMES.index(name)
        vec[idx] = value * DEG if _is_angular(name) else value
    gamma = base.with_vector(vec)
    if free_mask is not None:
        gamma = gamma.with_free_mask(free_mask)
    return gamma

TOOL_OFFSET_NAMES: tuple[str, ...] = tuple(f"link4.{f}" for f in
                                           ("d", "theta", "b", "beta", "a", "alpha"))


@dataclass(frozen=True)
class StatTriple:
    rms: float
    max: float
    std: float


@dataclass(frozen=True)
class ErrorStats:
    """Position stats in mm and orientation stats in degrees."""

    position: StatTriple
    orientation: StatTriple | None = None

    def to_dict(self) -> dict:
        out = {"position": vars(self.position)}
        if self.orientation is not None:
            out["orientation"] = vars(self.orientation)
        return out


def _stat_triple(values) -> StatTriple:
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise InsufficientDataError("statistics need at least one sample")
    return StatTriple(
        rms=float(np.sqrt(np.mean(v ** 2))),
        max=float(np.max(v)),
        std=float(np.std(v)),
    )


@dataclass
class ObservabilityReport:
    singular_values: np.ndarray
    initial_singular_values: np.ndarray
    column_norms: dict[str, float]
    fixed_names: list[str]
    threshold: float
    all_fixed: bool = False

    def to_dict(self) -> dict:
        return {
            "singular_values": [float(s) for s in self.singular_values],
            "initial_singular_values": [float(s) for s in self.initial_singular_values],
            "column_norms": {k: float(v) for k, v in self.column_norms.items()},
            "fixed_names": list(self.fixed_names),
            "threshold": self.threshold,
            "all_fixed": self.all_fixed,
        }


@dataclass
class CalibrationResult:
    gamma_star: CalibrationParams
    calib_stats: ErrorStats
    valid_stats: ErrorStats | None
    iterations: int
    final_objective: float
    initial_objective: float
    observability: ObservabilityReport | None = None
    converged: bool = True

    def to_dict(self) -> dict:
        gamma = self.gamma_star
        out = {
            "gamma_deg_mm": named_gamma(gamma),
            "free_mask": {n: bool(f) for n, f in zip(GAMMA_NAMES, gamma.free_mask)},
            "calibration_stats": self.calib_stats.to_dict(),
            "iterations": self.iterations,
            "initial_objective": self.initial_objective,
            "final_objective": self.final_objective,
            "converged": self.converged,
        }
        if self.valid_stats is not None:
            out["validation_stats"] = self.valid_stats.to_dict()
        if self.observability is not None:
            out["observability"] = self.observability.to_dict()
        return out


# -- residuals ----------------------------------------------------------------

def residual(gamma: CalibrationParams, m: Measurement,
             w: float = DEFAULT_ORIENTATION_WEIGHT) -> np.ndarray:
    """Six-vector residual of one measurement: [e_p; w e_z]."""
    T = forward_kinematics(gamma.model, m.q)
    R = gamma.ct.rotation()
    e_p = m.p_m - (R @ T.translation + gamma.ct.p_mb)
    e_z = m.z_m - R @ T.tool_axis
    return np.concatenate([e_p, w * e_z])


def error_vector(gamma: CalibrationParams, measurements,
                 w: float = DEFAULT_ORIENTATION_WEIGHT) -> np.ndarray:
    """Stacked residuals in measurement order (length 6 n)."""
    if len(measurements) == 0:
        raise InsufficientDataError("need at least one measurement")
    return np.concatenate([residual(gamma, m, w) for m in measurements])


def objective(gamma: CalibrationParams, measurements,
              w: float = DEFAULT_ORIENTATION_WEIGHT) -> float:
    """Sum of squared residual entries (mm^2-equivalent)."""
    e = error_vector(gamma, measurements, w)
    return float(e @ e)


# -- jacobian -----------------------------------------------------------------

def residual_jacobian(gamma: CalibrationParams, measurements,
                      w: float = DEFAULT_ORIENTATION_WEIGHT) -> np.ndarray:
    """Jacobian of the stacked residual over the full 24-entry gamma.

    Link-parameter columns come from the kinematics finite-difference
    Jacobian composed with the CT rotation; CT columns use direct central
    differences of the 3x3 rotation (cheap and step-consistent).
    """
    n = len(measurements)
    J = np.zeros((6 * n, N_PARAMS))
    R = gamma.ct.rotation()

    dR = []
    for k in range(3):
        up = gamma.ct.r_mb.copy(); up[k] += FD_STEP
        dn = gamma.ct.r_mb.copy(); dn[k] -= FD_STEP
        dR.append((euler_zyx(*up) - euler_zyx(*dn)) / (2.0 * FD_STEP))

    for i, m in enumerate(measurements):
        rows = slice(6 * i, 6 * i + 6)
        T = forward_kinematics(gamma.model, m.q)
        Jk = numeric_jacobian(gamma.model, m.q, wrt="parameters")
        # d e_p / d eta = -R dp_b ; d e_z / d eta = -R dz_b
        J[rows, :18] = -np.vstack([R @ Jk[:3], w * (R @ Jk[3:])])
        # d e_p / d p_mb = -I ; orientation block unaffected
        J[rows.start:rows.start + 3, 18:21] = -np.eye(3)
        for k in range(3):
            J[rows, 21 + k] = -np.concatenate([dR[k] @ T.translation,
                                               w * (dR[k] @ T.tool_axis)])
    return J


# -- observability -------------------------------------------------------------

def observability_analysis(gamma: CalibrationParams, measurements,
                           w: float = DEFAULT_ORIENTATION_WEIGHT,
                           threshold: float = 1e-6,
                           ) -> tuple[np.ndarray, ObservabilityReport]:
    """SVD gate: fix parameters the measurement set cannot distinguish.

    The residual Jacobian over the currently free parameters is column
    scaled (zero-norm columns are fixed outright), then directions whose
    singular value falls below ``threshold`` times the largest are removed
    one parameter at a time: in each weak right-singular direction the
    lowest-index parameter among the dominant participants is fixed, which
    deterministically keeps the later (tool-side) twin of a redundant pair
    free.  Returns the reduced mask and a report with the spectra.
    """
    if len(measurements) < 5:
        raise InsufficientDataError("observability analysis needs >= 5 measurements")
    mask = gamma.free_mask.copy()
    J_full = residual_jacobian(gamma, measurements, w)
    norms_all = np.linalg.norm(J_full, axis=0)
    fixed: list[str] = []

    # zero columns first: no measurable effect at this linearization point
    for idx in np.flatnonzero(mask):
        if norms_all[idx] < 1e-12:
            mask[idx] = False
            fixed.append(GAMMA_NAMES[idx])

    def scaled(indices):
        Jf = J_full[:, indices] / norms_all[indices]
        return np.linalg.svd(Jf, compute_uv=True, full_matrices=False)

    free_idx = np.flatnonzero(mask)
    initial_s = (scaled(free_idx)[1] if free_idx.size else np.array([]))

    s = initial_s
    while free_idx.size:
        u, s, vt = scaled(free_idx)
        if s[0] <= 0 or s[-1] / s[0] >= threshold:
            break
        participation = np.abs(vt[-1])
        dominant = np.flatnonzero(participation >= 0.9 * participation.max())
        victim = free_idx[dominant[0]]
        mask[victim] = False
        fixed.append(GAMMA_NAMES[victim])
        free_idx = np.flatnonzero(mask)

    report = ObservabilityReport(
        singular_values=s if free_idx.size else np.array([]),
        initial_singular_values=initial_s,
        column_norms={GAMMA_NAMES[i]: norms_all[i]
                      for i in np.flatnonzero(gamma.free_mask)},
        fixed_names=fixed,
        threshold=threshold,
        all_fixed=not free_idx.size,
    )
    return mask, report


# -- Levenberg-Marquardt --------------------------------------------------------

@dataclass(frozen=True)
class LMOptions:
    max_iterations: int = 200
    gradient_tol: float = 1e-10
    step_tol: float = 1e-12
    initial_damping: float = 1e-3
    damping_increase: float = 10.0
    damping_decrease: float = 10.0
    max_damping: float = 1e14
    auto_observability: bool = True
    observability_threshold: float = 1e-6


def lm_solve(initial: CalibrationParams, measurements,
             w: float = DEFAULT_ORIENTATION_WEIGHT,
             options: LMOptions = LMOptions()) -> CalibrationResult:
    """Classic Marquardt descent on the stacked residual.

    Damping multiplies diag(J^T J); it grows tenfold on a rejected step
    and shrinks tenfold on an accepted one, so the accepted objective is
    monotone non-increasing.  Stops on gradient max-norm, step norm, or
    the iteration cap.  Only free-mask parameters move; an SVD
    observability gate trims the mask first unless disabled.
    """
    n = len(measurements)
    if n == 0:
        raise InsufficientDataError("need at least one measurement")

    gamma = initial
    report = None
    if options.auto_observability and n >= 5:
        mask, report = observability_analysis(
            gamma, measurements, w, options.observability_threshold)
        gamma = gamma.with_free_mask(mask)
    free = np.flatnonzero(gamma.free_mask)
    if 6 * n < free.size:
        raise InsufficientDataError(
            f"{free.size} free parameters need at least {free.size} residuals, "
            f"got {6 * n}")

    x_full = gamma.vector()

    def pack(e):
        if not np.all(np.isfinite(e)):
            raise DivergedError("residual evaluation produced non-finite values")
        return e

    e = pack(error_vector(gamma, measurements, w))
    S = float(e @ e)
    S0 = S
    lam = options.initial_damping
    iterations = 0
    converged = False

    if free.size == 0:
        stats = validate(gamma, measurements, w)
        return CalibrationResult(gamma, stats, None, 0, S, S0, report, True)

    for iterations in range(options.max_iterations + 1):
        J = residual_jacobian(gamma.with_vector(x_full), measurements, w)[:, free]
        g = J.T @ e
        if float(np.abs(g).max()) < options.gradient_tol:
            converged = True
            break
        if iterations == options.max_iterations:
            break
        JtJ = J.T @ J
        diag = np.diag(JtJ).copy()
        dead = diag <= 0.0
        if np.any(dead):
            raise IllPosedProblemError(
                "normal equations are rank deficient",
                parameters=[GAMMA_NAMES[free[i]] for i in np.flatnonzero(dead)])

        accepted = False
        while lam <= options.max_damping:
            H = JtJ + lam * np.diag(diag)
            try:
                delta = np.linalg.solve(H, -g)
            except np.linalg.LinAlgError:
                lam *= options.damping_increase
                continue
            x_try = x_full.copy()
            x_try[free] += delta
            e_try = pack(error_vector(gamma.with_vector(x_try), measurements, w))
            S_try = float(e_try @ e_try)
            if S_try <= S:
                x_full, e, S = x_try, e_try, S_try
                lam = max(lam / options.damping_decrease, 1e-15)
                accepted = True
                step_norm = float(np.linalg.norm(delta))
                break
            lam *= options.damping_increase
        if not accepted:
            break  # damping exhausted: stuck at a (numerical) minimum
        if step_norm < options.step_tol:
            converged = True
            break

    gamma_star = gamma.with_vector(x_full)
    calib_stats = validate(gamma_star, measurements, w)
    return CalibrationResult(
        gamma_star=gamma_star,
        calib_stats=calib_stats,
        valid_stats=None,
        iterations=iterations,
        final_objective=S,
        initial_objective=S0,
        observability=report,
        converged=converged,
    )


def ct_only_calibrate(initial: CalibrationParams, measurements,
                      w: float = DEFAULT_ORIENTATION_WEIGHT,
                      options: LMOptions = LMOptions()) -> CalibrationResult:
    """Registration-only baseline: frees the six CT scalars, nothing else."""
    gamma = initial.with_free_mask(mask_for(CT_NAMES))
    return lm_solve(gamma, measurements, w, options)


def tool_offset_recalibrate(gamma_star: CalibrationParams, measurements,
                            w: float = DEFAULT_ORIENTATION_WEIGHT,
                            options: LMOptions = LMOptions()) -> CalibrationResult:
    """Fast partial recalibration after a tool exchange.

    Frees only the terminal six-parameter link; the registration and
    links 1-3 stay frozen.  Needs at least five measurements.
    """
    if len(measurements) < 5:
        raise InsufficientDataError(
            f"tool offset recalibration needs >= 5 measurements, got {len(measurements)}")
    gamma = gamma_star.with_free_mask(mask_for(TOOL_OFFSET_NAMES))
    return lm_solve(gamma, measurements, w, options)


def calibrate(measurements, w: float = DEFAULT_ORIENTATION_WEIGHT,
              initial: CalibrationParams | None = None,
              options: LMOptions = LMOptions()) -> CalibrationResult:
    """Full pipeline: CT-only pre-solve from identity, then joint CT+FK.

    The pre-solve gives the full problem a sane registration start so the
    joint solve does not stall on a poor initial alignment.
    """
    start = initial or CalibrationParams.from_nominal()
    pre = ct_only_calibrate(start, measurements, w, options)
    warm = CalibrationParams(start.model, pre.gamma_star.ct, start.free_mask)
    return lm_solve(warm, measurements, w, options)


# -- statistics -----------------------------------------------------------------

def orientation_error_deg(z_measured, z_predicted) -> float:
    """Angle between unit axes, degrees, via a clamped dot product."""
    d = float(np.clip(np.dot(z_measured, z_predicted), -1.0, 1.0))
    return math.degrees(math.acos(d))


def validate(gamma: CalibrationParams, measurements,
             w: float = DEFAULT_ORIENTATION_WEIGHT) -> ErrorStats:
    """Residual statistics without touching the parameters.

    Position: per-measurement norm of e_p in mm.  Orientation: angle
    between measured and predicted tool axes in degrees.  ``std`` is the
    population standard deviation of those scalars.
    """
    if len(measurements) == 0:
        raise InsufficientDataError("validation needs at least one measurement")
    pos, ang = [], []
    R = gamma.ct.rotation()
    for m in measurements:
        T = forward_kinematics(gamma.model, m.q)
        pos.append(np.linalg.norm(m.p_m - (R @ T.translation + gamma.ct.p_mb)))
        ang.append(orientation_error_deg(m.z_m, R @ T.tool_axis))
    return ErrorStats(position=_stat_triple(pos), orientation=_stat_triple(ang))


def pose_stats(position_sets, axis_sets=()) -> ErrorStats:
    """Spread statistics over repeated returns to the same poses.

    Each set holds repeated samples of one pose.  Every sample contributes
    its distance from the set mean (position, mm) or its angle from the
    normalized mean axis (orientation, deg); the deviations are pooled
    across sets.  Because the deviations are measured about the mean, the
    reported ``std`` is their rms (two points 2h apart give std = h).
    """
    pos_dev = []
    for pts in position_sets:
        pts = np.asarray(pts, dtype=float)
        if pts.ndim != 2 or pts.shape[0] < 2 or pts.shape[1] != 3:
            raise InsufficientDataError("each position set needs >= 2 samples of 3 coords")
        centered = pts - pts.mean(axis=0)
        pos_dev.extend(np.linalg.norm(centered, axis=1))
    pos_dev = np.asarray(pos_dev)
    position = StatTriple(
        rms=float(np.sqrt(np.mean(pos_dev ** 2))),
        max=float(np.max(pos_dev)),
        std=float(np.sqrt(np.mean(pos_dev ** 2))),
    )
    orientation = None
    if len(axis_sets):
        ang_dev = []
        for axes in axis_sets:
            axes = np.asarray(axes, dtype=float)
            if axes.ndim != 2 or axes.shape[0] < 2:
                raise InsufficientDataError("each axis set needs >= 2 samples")
            mean_axis = axes.mean(axis=0)
            mean_axis = mean_axis / np.linalg.norm(mean_axis)
            ang_dev.extend(orientation_error_deg(a, mean_axis) for a in axes)
        ang_dev = np.asarray(ang_dev)
        orientation = StatTriple(
            rms=float(np.sqrt(np.mean(ang_dev ** 2))),
            max=float(np.max(ang_dev)),
            std=float(np.sqrt(np.mean(ang_dev ** 2))),
        )
    return ErrorStats(position=position, orientation=orientation)
