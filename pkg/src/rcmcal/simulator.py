"""Synthetic ground-truth data: perturbed models, pose sets, noisy
tool-pose measurements, and cylindrical-tool point clouds.

Every generator is a pure function of its inputs and a seed, so the
downstream estimators can be validated against exact truth: with zero
noise, calibration, localization, and RCM fitting must reproduce the
generator's parameters to solver tolerance.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .calibration import CTParams, Measurement
from .kinematics import (
    DEG,
    JointLimits,
    JointState,
    PARAM_NAMES,
    RobotModel,
    forward_kinematics,
    forward_kinematics_nominal,
)
from .localization import OctPointCloud

# Link parameters that calibration can actually see on data from the
# nominal geometry.  The complement is gauge (redundant with the rigid
# registration or with a same-axis twin on the terminal link) or has no
# pose effect at nominal (pure spins about the symmetric tool axis).
OBSERVABLE_PARAMS: tuple[str, ...] = (
    "link1.a", "link1.alpha",
    "link2.d", "link2.theta_offset", "link2.a", "link2.alpha",
    "link3.alpha",
    "link4.d", "link4.b", "link4.beta", "link4.a", "link4.alpha",
)

OBSERVABLE_TOOL_PARAMS: tuple[str, ...] = (
    "link4.d", "link4.b", "link4.beta", "link4.a", "link4.alpha",
)

_ANGULAR_FIELDS = ("theta_offset", "theta", "alpha", "beta")


@dataclass(frozen=True)
class PerturbationSpec:
    """Uniform parameter deviations: lengths within +-max_length_dev mm,
    angles within +-max_angle_dev rad.

    ``target`` picks the parameter set: "all" (all 18 link scalars),
    "terminal" (the six-parameter link only), "observable"
    (:data:`OBSERVABLE_PARAMS`), "observable-terminal", or an explicit
    tuple of parameter names.
    """

    max_length_dev: float = 0.5
    max_angle_dev: float = 0.5 * DEG
    seed: int = 0
    target: object = "all"

    def __post_init__(self):
        if self.max_length_dev < 0 or self.max_angle_dev < 0:
            raise ValueError("deviations must be non-negative")

    def parameter_names(self) -> tuple[str, ...]:
        if self.target == "all":
            return PARAM_NAMES
        if self.target == "terminal":
            return tuple(n for n in PARAM_NAMES if n.startswith("link4."))
        if self.target == "observable":
            return OBSERVABLE_PARAMS
        if self.target == "observable-terminal":
            return OBSERVABLE_TOOL_PARAMS
        names = tuple(self.target)
        for n in names:
            if n not in PARAM_NAMES:
                raise ValueError(f"unknown link parameter {n!r}")
        return names


def perturb_model(nominal: RobotModel,
                  spec: PerturbationSpec) -> tuple[RobotModel, dict[str, float]]:
    """Perturbed copy plus the exact deviation of every touched parameter."""
    rng = np.random.default_rng(spec.seed)
    vec = nominal.param_vector()
    deviations: dict[str, float] = {}
    for name in spec.parameter_names():
        idx = PARAM_NAMES.index(name)
        bound = (spec.max_angle_dev if name.split(".")[1] in _ANGULAR_FIELDS
                 else spec.max_length_dev)
        dev = float(rng.uniform(-bound, bound))
        vec[idx] += dev
        deviations[name] = dev
    return nominal.with_param_vector(vec), deviations


def random_ct(seed: int, translation_mm: float = 30.0,
              rotation_rad: float = 0.4) -> CTParams:
    """A plausible rigid registration between scanner and robot base."""
    rng = np.random.default_rng(seed)
    return CTParams(
        p_mb=rng.uniform(-translation_mm, translation_mm, 3),
        r_mb=rng.uniform(-rotation_rad, rotation_rad, 3),
    )


def random_poses(n: int, limits: JointLimits | None = None,
                 strategy: str = "cover", seed: int = 0,
                 spacing_mm: tuple[float, float] = (2.5, 4.0)) -> list[JointState]:
    """Sample joint configurations.

    "cover": independent uniform draws across the joint limits.
    "repeatability": consecutive nominal tooltip positions spaced within
    ``spacing_mm`` of each other, for precision experiments.
    """
    if n < 1:
        raise ValueError("need n >= 1 poses")
    limits = limits or JointLimits.default()
    rng = np.random.default_rng(seed)

    def draw(d3_range=None) -> JointState:
        lo, hi = d3_range or limits.d3
        return JointState(
            theta1=rng.uniform(*limits.theta1),
            theta2=rng.uniform(*limits.theta2),
            d3=rng.uniform(lo, hi),
            theta4=rng.uniform(*limits.theta4),
            d5=rng.uniform(*limits.d5),
        )

    if strategy == "cover":
        return [draw() for _ in range(n)]
    if strategy != "repeatability":
        raise ValueError(f"unknown strategy {strategy!r}")

    # keep the tip in front of the RCM so spacing is meaningful
    poses = [draw(d3_range=(5.0, limits.d3[1]))]
    lo, hi = spacing_mm
    while len(poses) < n:
        prev = forward_kinematics_nominal(poses[-1]).translation
        for _ in range(10000):
            cand = draw(d3_range=(5.0, limits.d3[1]))
            dist = np.linalg.norm(forward_kinematics_nominal(cand).translation - prev)
            if lo <= dist <= hi:
                poses.append(cand)
                break
        else:
            raise RuntimeError("could not satisfy the pose spacing constraint")
    return poses


@dataclass(frozen=True)
class NoiseSpec:
    """Gaussian noise levels; zeros give exact data."""

    position_std: float = 0.008      # mm, tool-pose position
    axis_std: float = 0.00025        # rad-equivalent axis jitter
    cloud_axial_std: float = 0.0092  # mm, along the scan direction
    cloud_lateral_std: float = 0.025 # mm, perpendicular
    seed: int = 0

    def __post_init__(self):
        for v in (self.position_std, self.axis_std,
                  self.cloud_axial_std, self.cloud_lateral_std):
            if v < 0:
                raise ValueError("noise levels must be non-negative")


def gen_measurements(true_model: RobotModel, true_ct: CTParams, poses,
                     noise: NoiseSpec = NoiseSpec()) -> list[Measurement]:
    """Tool-pose observations in the measurement frame.

    p_m = R p_b + t + N(0, position_std); the axis gets an additive
    Gaussian jitter and is renormalized.  Encoder joints are echoed
    exactly.
    """
    rng = np.random.default_rng(noise.seed)
    R = true_ct.rotation()
    out = []
    for q in poses:
        T = forward_kinematics(true_model, q)
        p = R @ T.translation + true_ct.p_mb
        z = R @ T.tool_axis
        if noise.position_std > 0:
            p = p + rng.normal(0.0, noise.position_std, 3)
        if noise.axis_std > 0:
            z = z + rng.normal(0.0, noise.axis_std, 3)
        z = z / np.linalg.norm(z)
        out.append(Measurement(q=q, p_m=p, z_m=z))
    return out


@dataclass(frozen=True)
class ToolGeometry:
    """Cylindrical shaft seen by the scanner.

    ``tip_style``: "flat" (clean end face), "rounded" (hemispherical cap),
    or "blob" (off-axis sphere of ``blob_radius``, a bent-tip artifact).
    """

    shaft_radius: float = 0.3
    shaft_length_in_view: float = 6.0
    tip_style: str = "flat"
    blob_radius: float = 0.9

    def __post_init__(self):
        if self.shaft_radius <= 0:
            raise ValueError("shaft radius must be positive")
        if self.tip_style not in ("flat", "rounded", "blob"):
            raise ValueError(f"unknown tip style {self.tip_style!r}")


@dataclass(frozen=True)
class ScanSpec:
    """Sampling grid for synthetic clouds.

    Shaft cross-sections are laid down every ``ring_spacing`` mm along the
    centerline with the last ring exactly at the tip, ``points_per_ring``
    around each.  Background clutter is uniform over the cloud's bounding
    box plus ``background_margin``.
    """

    ring_spacing: float = 0.010
    points_per_ring: int = 24
    background_fraction: float = 0.01
    background_margin: float = 1.0
    bscan_dir: tuple[float, float, float] = (0.0, 0.0, 1.0)
    axial_res: float = 0.0092
    lateral_res: float = 0.025

    tool_intensity: float = 1.0
    background_intensity: float = 0.1


@dataclass(frozen=True)
class CloudTruth:
    """Generator-side truth stored beside each synthetic cloud."""

    tip: np.ndarray
    axis: np.ndarray
    labels: np.ndarray  # per point: "shaft", "cap", "blob", "background"

    def to_dict(self) -> dict:
        return {
            "tip": [float(v) for v in self.tip],
            "axis": [float(v) for v in self.axis],
            "labels": self.labels.tolist(),
        }


def _orthonormal_frame(axis):
    helper = np.array([1.0, 0.0, 0.0])
    if abs(axis[0]) > 0.9:
        helper = np.array([0.0, 1.0, 0.0])
    e1 = np.cross(axis, helper)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(axis, e1)
    return e1, e2


def synth_cloud(tip, axis, geom: ToolGeometry = ToolGeometry(),
                noise: NoiseSpec = NoiseSpec(),
                scan: ScanSpec = ScanSpec()) -> tuple[OctPointCloud, CloudTruth]:
    """Point cloud of a cylindrical tool ending at ``tip`` along ``axis``.

    ``axis`` points from the shaft toward the tip.  The scan direction is
    tilted to keep a positive component along the tool (the scan ends at
    the tip side); noise is anisotropic, ``cloud_axial_std`` along the scan
    direction and ``cloud_lateral_std`` across it.
    """
    tip = np.asarray(tip, dtype=float)
    u = np.asarray(axis, dtype=float)
    u = u / np.linalg.norm(u)
    rng = np.random.default_rng(noise.seed)
    e1, e2 = _orthonormal_frame(u)
    r = geom.shaft_radius

    n_rings = max(2, int(round(geom.shaft_length_in_view / scan.ring_spacing)))
    ring_offsets = scan.ring_spacing * np.arange(n_rings)
    angles = 2.0 * math.pi * np.arange(scan.points_per_ring) / scan.points_per_ring

    pts, labels = [], []
    for off in ring_offsets:
        center = tip - off * u
        for a in angles:
            pts.append(center + r * (math.cos(a) * e1 + math.sin(a) * e2))
            labels.append("shaft")

    if geom.tip_style == "flat":
        # clean truncation: the first shaft ring already sits in the tip
        # plane, and equal mass per cross-section keeps the cumulative tip
        # interpolation exact on noise-free clouds
        pass
    elif geom.tip_style == "rounded":
        for polar in (0.3, 0.6, 0.9):
            rr = r * math.sin(polar * math.pi / 2)
            lift = r * (1.0 - math.cos(polar * math.pi / 2))
            for a in angles:
                pts.append(tip - lift * u + rr * (math.cos(a) * e1 + math.sin(a) * e2))
                labels.append("cap")
    else:  # blob: bent-tip artifact offset sideways from the centerline
        center = tip + 2.0 * geom.blob_radius * e1
        n_blob = 6 * scan.points_per_ring
        dirs = rng.normal(size=(n_blob, 3))
        dirs /= np.linalg.norm(dirs, axis=1)[:, None]
        for d in dirs:
            pts.append(center + geom.blob_radius * d)
            labels.append("blob")

    pts = np.asarray(pts)

    b = np.asarray(scan.bscan_dir, dtype=float)
    b = b / np.linalg.norm(b)
    if float(np.dot(b, u)) < 0.2:
        # tilt the scan direction toward the tool so the scan ends tipward
        b = b + 0.5 * u
        b = b / np.linalg.norm(b)

    if noise.cloud_axial_std > 0 or noise.cloud_lateral_std > 0:
        f1, f2 = _orthonormal_frame(b)
        jitter = (np.outer(rng.normal(0, 1, len(pts)) * noise.cloud_axial_std, b)
                  + np.outer(rng.normal(0, 1, len(pts)) * noise.cloud_lateral_std, f1)
                  + np.outer(rng.normal(0, 1, len(pts)) * noise.cloud_lateral_std, f2))
        pts = pts + jitter

    intensity = np.full(len(pts), scan.tool_intensity)

    n_bg = int(round(scan.background_fraction * len(pts)))
    if n_bg > 0:
        lo = pts.min(axis=0) - scan.background_margin
        hi = pts.max(axis=0) + scan.background_margin
        bg = rng.uniform(lo, hi, size=(n_bg, 3))
        pts = np.vstack([pts, bg])
        intensity = np.concatenate([intensity, np.full(n_bg, scan.background_intensity)])
        labels.extend(["background"] * n_bg)

    cloud = OctPointCloud(points=pts, intensity=intensity,
                          axial_res=scan.axial_res, lateral_res=scan.lateral_res,
                          bscan_dir=b)
    truth = CloudTruth(tip=tip, axis=u, labels=np.asarray(labels))
    return cloud, truth
