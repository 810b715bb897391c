"""Tool axis and tooltip estimation from intensity point clouds.

Pipeline: intensity threshold -> PCA axis seed -> Gauss-Newton line
refinement -> tip-feature rejection -> second refinement -> cumulative
tip interpolation.  A single cloud of a cylindrical shaft determines the
tool centerline and tip but leaves the roll of the tool frame free, so
only a position and an axis are ever produced.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import DegenerateInputError, InsufficientDataError

# Points whose centerline coordinates differ by less than this are treated
# as one sample of the same cross-section when building cumulative curves.
TIE_TOL = 1e-9

# Cumulative percentage above which the tip curves bend into the noise
# roll-off; the crossing line is fitted below it.
FIT_UPPER_PERCENT = 80.0


@dataclass(frozen=True)
class OctPointCloud:
    """Intensity-tagged point set with scan-grid metadata.

    ``points``: (n, 3) mm; ``intensity``: (n,).  ``bscan_dir`` is the unit
    scan direction; resolutions are in mm.
    """

    points: np.ndarray
    intensity: np.ndarray
    axial_res: float = 0.0092
    lateral_res: float = 0.025
    bscan_dir: np.ndarray = (0.0, 0.0, 1.0)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, 3)
        inten = np.asarray(self.intensity, dtype=float).reshape(-1)
        if pts.shape[0] != inten.shape[0]:
            raise ValueError("points and intensity lengths differ")
        if self.axial_res <= 0 or self.lateral_res <= 0:
            raise ValueError("resolutions must be positive")
        b = np.asarray(self.bscan_dir, dtype=float)
        if abs(np.linalg.norm(b) - 1.0) > 1e-9:
            raise ValueError("bscan_dir must be a unit vector")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "intensity", inten)
        object.__setattr__(self, "bscan_dir", b)
        for arr in (self.points, self.intensity, self.bscan_dir):
            arr.setflags(write=False)

    def __len__(self) -> int:
        return self.points.shape[0]


@dataclass(frozen=True)
class AxisFit:
    """Fitted tool centerline."""

    direction: np.ndarray
    point_on_axis: np.ndarray
    rms_orthogonal: float
    inlier_count: int
    converged: bool = True

    def __post_init__(self):
        d = np.asarray(self.direction, dtype=float)
        if abs(np.linalg.norm(d) - 1.0) > 1e-12:
            raise ValueError("axis direction must be unit")
        object.__setattr__(self, "direction", d)
        object.__setattr__(self, "point_on_axis",
                           np.asarray(self.point_on_axis, dtype=float))


@dataclass(frozen=True)
class TipEstimate:
    """Tooltip position, tool axis, and the signed distance along the axis
    applied by the cumulative interpolation relative to the farthest
    detected point."""

    p: np.ndarray
    z: np.ndarray
    d_offset: float

    def __post_init__(self):
        z = np.asarray(self.z, dtype=float)
        if abs(np.linalg.norm(z) - 1.0) > 1e-9:
            raise ValueError("tip axis must be unit")
        object.__setattr__(self, "p", np.asarray(self.p, dtype=float))
        object.__setattr__(self, "z", z)


@dataclass(frozen=True)
class LocalizeConfig:
    """Knobs for :func:`localize_tool`.

    ``threshold_level`` None selects an Otsu split of the intensity
    histogram.  ``discard_threshold`` None derives the cutoff from the
    shaft radius estimate (sqrt(2) times the median orthogonal distance,
    doubled).  ``window_mm`` bounds the tip interpolation region.
    """

    threshold_level: float | None = None
    discard_threshold: float | None = None
    window_mm: float = 0.15
    min_points: int = 6


def otsu_threshold(intensity, bins: int = 256) -> float:
    """Two-class histogram split maximizing between-class variance."""
    v = np.asarray(intensity, dtype=float)
    if v.size == 0:
        raise InsufficientDataError("empty intensity set")
    lo, hi = float(v.min()), float(v.max())
    if hi - lo < 1e-12:
        return lo
    hist, edges = np.histogram(v, bins=bins, range=(lo, hi))
    centers = (edges[:-1] + edges[1:]) / 2.0
    weight = hist.astype(float)
    total = weight.sum()
    scores = np.full(bins - 1, -1.0)
    w0 = 0.0
    sum0 = 0.0
    sum_all = float((weight * centers).sum())
    for k in range(bins - 1):
        w0 += weight[k]
        sum0 += weight[k] * centers[k]
        w1 = total - w0
        if w0 == 0 or w1 == 0:
            continue
        m0, m1 = sum0 / w0, (sum_all - sum0) / w1
        scores[k] = w0 * w1 * (m0 - m1) ** 2
    best = scores.max()
    # a clean bimodal histogram maximizes the score on a whole plateau of
    # empty bins; cut in its middle rather than hugging one mode
    plateau = np.flatnonzero(scores >= best * (1.0 - 1e-12))
    return float(edges[plateau[len(plateau) // 2] + 1])


def threshold_cloud(cloud: OctPointCloud, level: float) -> OctPointCloud:
    """Subset with intensity >= level; metadata preserved."""
    if not math.isfinite(level):
        raise ValueError("threshold level must be finite")
    keep = cloud.intensity >= level
    return replace(cloud, points=cloud.points[keep], intensity=cloud.intensity[keep])


def pca_axis(points) -> np.ndarray:
    """Principal direction of the centered covariance.

    Sign convention: positive component along +z, with ties broken toward
    +x then +y.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    if pts.shape[0] < 3:
        raise InsufficientDataError("PCA needs at least 3 points")
    centered = pts - pts.mean(axis=0)
    cov = centered.T @ centered / pts.shape[0]
    evals, evecs = np.linalg.eigh(cov)
    if evals[-1] < 1e-18:
        raise DegenerateInputError("all points coincide; no principal axis")
    d = evecs[:, -1]
    d = d / np.linalg.norm(d)
    for comp in (d[2], d[0], d[1]):
        if comp > 0:
            return d
        if comp < 0:
            return -d
    return d


def _orthogonal_components(points, point_on_axis, direction):
    rel = points - point_on_axis
    along = rel @ direction
    return rel - np.outer(along, direction)


def gauss_newton_line_refine(points, initial_direction, initial_point,
                             max_iter: int = 100, step_tol: float = 1e-10) -> AxisFit:
    """Orthogonal-distance line fit by Gauss-Newton.

    Minimizes the summed squared orthogonal offsets over a four-parameter
    chart: two in-plane shifts of the anchor point and two direction
    tilts, rebuilt around the current line each iteration.  Non-convergence
    returns the best iterate flagged rather than raising.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    if pts.shape[0] < 6:
        raise InsufficientDataError("line refinement needs at least 6 points")
    d = np.asarray(initial_direction, dtype=float)
    nd = np.linalg.norm(d)
    if nd < 1e-12:
        raise DegenerateInputError("initial direction is degenerate")
    d = d / nd
    c = np.asarray(initial_point, dtype=float)

    def basis(direction):
        helper = np.array([1.0, 0.0, 0.0])
        if abs(direction[0]) > 0.9:
            helper = np.array([0.0, 1.0, 0.0])
        e1 = np.cross(direction, helper)
        e1 /= np.linalg.norm(e1)
        e2 = np.cross(direction, e1)
        return e1, e2

    converged = False
    for _ in range(max_iter):
        e1, e2 = basis(d)
        # center the anchor on the data to keep the chart well conditioned
        c = c + ((pts - c).mean(axis=0) @ d) * d

        def residuals(u):
            dc = c + u[0] * e1 + u[1] * e2
            dd = d + u[2] * e1 + u[3] * e2
            dd = dd / np.linalg.norm(dd)
            return _orthogonal_components(pts, dc, dd).ravel()

        r0 = residuals(np.zeros(4))
        J = np.zeros((r0.size, 4))
        h = 1e-7
        for j in range(4):
            up = np.zeros(4); up[j] = h
            dn = np.zeros(4); dn[j] = -h
            J[:, j] = (residuals(up) - residuals(dn)) / (2 * h)
        step, *_ = np.linalg.lstsq(J, -r0, rcond=None)
        c = c + step[0] * e1 + step[1] * e2
        d = d + step[2] * e1 + step[3] * e2
        d = d / np.linalg.norm(d)
        if np.linalg.norm(step) < step_tol:
            converged = True
            break

    orth = _orthogonal_components(pts, c, d)
    rms = float(np.sqrt(np.mean(np.sum(orth ** 2, axis=1))))
    return AxisFit(direction=d, point_on_axis=c, rms_orthogonal=rms,
                   inlier_count=pts.shape[0], converged=converged)


def discard_tip_features(points, axis: AxisFit, dist_threshold: float) -> np.ndarray:
    """Drop points farther than ``dist_threshold`` from the centerline."""
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    orth = _orthogonal_components(pts, axis.point_on_axis, axis.direction)
    dist = np.linalg.norm(orth, axis=1)
    return pts[dist <= dist_threshold]


def default_discard_threshold(points, axis: AxisFit) -> float:
    """Twice the shaft-radius estimate (median orthogonal distance x sqrt 2)."""
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    orth = _orthogonal_components(pts, axis.point_on_axis, axis.direction)
    radius_estimate = float(np.median(np.linalg.norm(orth, axis=1))) * math.sqrt(2.0)
    return 2.0 * radius_estimate


def _cumulative_envelope(values, tie_tol: float = TIE_TOL):
    """Sorted distinct parameter values with the cumulative percentage
    reached at each; values closer than ``tie_tol`` merge into one step."""
    s = np.sort(np.asarray(values, dtype=float))
    n = s.size
    xs, ps = [], []
    for i in range(1, n + 1):
        if i == n or s[i] - s[i - 1] > tie_tol:
            xs.append(s[i - 1])
            ps.append(100.0 * i / n)
    return np.asarray(xs), np.asarray(ps)


def _quantile_line(xs, ps, fit_upper: float = FIT_UPPER_PERCENT):
    """Least-squares line x = a + b * percentage over the linear portion.

    Restricting the fit to percentages up to ``fit_upper`` keeps the noise
    roll-off at the very edge from biasing the extrapolated crossing.
    """
    keep = ps <= fit_upper + 1e-12
    if keep.sum() < 2:
        keep = np.ones_like(ps, dtype=bool)
    b, a = np.polyfit(ps[keep], xs[keep], 1)
    return float(a), float(b)


def cumulative_curves(points, axis: AxisFit, bscan_dir, window: float = 0.15):
    """The two tip-window cumulative curves (centerline, scan direction).

    Returns ``(s_values, s_percent, t_values, t_percent)`` — the envelope
    knots used by :func:`cumulative_tip_estimate`, handy for plotting.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    u = axis.direction
    b = np.asarray(bscan_dir, dtype=float)
    if np.dot(b, u) < 0:
        b = -b
    s = pts @ u
    in_window = s >= float(s.max()) - window
    sw = s[in_window]
    tw = pts[in_window] @ b
    xs_s, ps_s = _cumulative_envelope(sw)
    xs_t, ps_t = _cumulative_envelope(tw)
    return xs_s, ps_s, xs_t, ps_t


def cumulative_tip_estimate(points, axis: AxisFit, bscan_dir,
                            window: float = 0.15) -> TipEstimate:
    """Locate the tooltip from cumulative-percentage curves near the tip.

    ``axis.direction`` must point toward the tip end.  Within ``window``
    of the farthest point, two cumulative curves are built: one over the
    centerline coordinate and one over the scan-direction coordinate.
    Matching the percentage levels of the two parameterizations maps the
    scan-direction crossing onto the centerline, where it coincides with
    the centerline curve's own 100 percent crossing; the tip is placed on
    the fitted axis at that coordinate.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    if pts.shape[0] < 2:
        raise InsufficientDataError("tip estimation needs at least 2 points")
    u = axis.direction
    b = np.asarray(bscan_dir, dtype=float)
    if np.dot(b, u) < 0:
        b = -b

    s = pts @ u
    s_max = float(s.max())
    in_window = s >= s_max - window
    if int(in_window.sum()) < 2:
        raise InsufficientDataError("fewer than 2 points inside the tip window")
    sw = s[in_window]
    tw = pts[in_window] @ b

    xs_s, ps_s = _cumulative_envelope(sw)
    s_max_w = float(xs_s[-1])
    if xs_s.size < 2:
        d_tip = s_max_w
    else:
        a_s, b_s = _quantile_line(xs_s, ps_s)
        if b_s <= 0:
            d_tip = s_max_w
        else:
            d_tip = a_s + 100.0 * b_s
            xs_t, ps_t = _cumulative_envelope(tw)
            if abs(np.dot(b, u)) > 1e-9 and xs_t.size >= 2:
                # scan-direction crossing mapped onto the centerline by
                # matching percentage levels between the two curves; the
                # matched-level map sends the scan curve's own 100 percent
                # crossing to the centerline crossing, so the two
                # parameterizations agree there and the blend is stable
                a_t, b_t = _quantile_line(xs_t, ps_t)
                t_cross = a_t + 100.0 * b_t
                if abs(b_t) > 1e-15:
                    level = (t_cross - a_t) / b_t
                    d_tip = 0.5 * (d_tip + (a_s + b_s * level))

    c_perp = axis.point_on_axis - (axis.point_on_axis @ u) * u
    tip = c_perp + d_tip * u
    return TipEstimate(p=tip, z=u, d_offset=d_tip - s_max)


def orient_axis_toward_tip(axis: AxisFit, bscan_dir) -> AxisFit:
    """Point the axis along the scan direction, which ends at the tool tip
    (the shaft leaves the scanned volume on the mount side)."""
    b = np.asarray(bscan_dir, dtype=float)
    d = axis.direction
    dot = float(np.dot(d, b))
    if dot < 0:
        return replace(axis, direction=-d)
    if dot == 0.0:
        # scan plane orthogonal to the tool: fall back to the PCA convention
        for comp in (d[2], d[0], d[1]):
            if comp > 0:
                return axis
            if comp < 0:
                return replace(axis, direction=-d)
    return axis


def localize_tool(cloud: OctPointCloud,
                  config: LocalizeConfig = LocalizeConfig()) -> TipEstimate:
    """Full localization pipeline on one cloud; deterministic given config."""
    level = config.threshold_level
    if level is None:
        if len(cloud) == 0:
            raise InsufficientDataError("empty cloud")
        level = otsu_threshold(cloud.intensity)
    tool = threshold_cloud(cloud, level)
    if len(tool) < config.min_points:
        raise InsufficientDataError(
            f"{len(tool)} points above threshold; need >= {config.min_points}")

    seed = pca_axis(tool.points)
    fit = gauss_newton_line_refine(tool.points, seed, tool.points.mean(axis=0))

    cutoff = config.discard_threshold
    if cutoff is None:
        cutoff = default_discard_threshold(tool.points, fit)
    shaft = discard_tip_features(tool.points, fit, cutoff)
    if shaft.shape[0] < config.min_points:
        raise InsufficientDataError("tip-feature rejection removed nearly all points")
    # the tip blob biases the first fit; refit on the shaft alone
    fit = gauss_newton_line_refine(shaft, fit.direction, fit.point_on_axis)
    fit = orient_axis_toward_tip(fit, cloud.bscan_dir)
    return cumulative_tip_estimate(shaft, fit, cloud.bscan_dir, config.window_mm)


# -- point-cloud file format -----------------------------------------------------

def save_cloud(path, cloud: OctPointCloud) -> None:
    """Line-oriented text: header comments then `x y z intensity` rows."""
    with open(path, "w") as fh:
        fh.write(f"# axial_res {cloud.axial_res!r}\n")
        fh.write(f"# lateral_res {cloud.lateral_res!r}\n")
        fh.write("# bscan_dir {!r} {!r} {!r}\n".format(*map(float, cloud.bscan_dir)))
        for (x, y, z), w in zip(cloud.points, cloud.intensity):
            fh.write(f"{float(x)!r} {float(y)!r} {float(z)!r} {float(w)!r}\n")


def load_cloud(path) -> OctPointCloud:
    axial, lateral, bscan = 0.0092, 0.025, np.array([0.0, 0.0, 1.0])
    pts, inten = [], []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                fields = line[1:].split()
                if fields[0] == "axial_res":
                    axial = float(fields[1])
                elif fields[0] == "lateral_res":
                    lateral = float(fields[1])
                elif fields[0] == "bscan_dir":
                    bscan = np.array([float(v) for v in fields[1:4]])
                continue
            x, y, z, w = (float(v) for v in line.split())
            pts.append((x, y, z))
            inten.append(w)
    return OctPointCloud(points=np.array(pts, dtype=float).reshape(-1, 3),
                         intensity=np.array(inten, dtype=float),
                         axial_res=axial, lateral_res=lateral, bscan_dir=bscan)
