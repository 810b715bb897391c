"""Design-space scoring for the two-arc spherical pointing mechanism.

A candidate design is a pair of link arcs: theta13 from the base joint to
the middle joint and theta35 from there to the tool joint (theta12, the
separation between the two symmetric branch bases, is carried along but
the primary branch alone determines every metric; the built mechanism
uses coincident bases).  The tool direction reaches a grid cell iff the
cell's polar angle lies within [|theta13 - theta35|, theta13 + theta35].

The composite score is

    score = gci * k_end / (q_l * alpha^3)

with gci the grid average of the inverse condition number of the
three-axis wrist Jacobian, k_end the averaged worst-direction endpoint
stiffness (normalized across the candidate set), q_l the structural
length index L / V^(1/3), and alpha the normalized arc-length sum.
Designs that fail to cover the required task cone score zero.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .transforms import rotx, rotz

DEG = math.pi / 180.0

# Cone of directions the application must reach, and how much of it a
# feasible design may miss.  Tiny arc sums are rejected outright so the
# 1/alpha^3 pole cannot reward degenerate mechanisms.
REQUIRED_CONE_POLAR_DEG = 120.0
REQUIRED_COVERAGE = 0.95
MIN_ARC_SUM_DEG = 10.0

# Unit-shell radial extent of the insertion workspace used for the volume
# term: the physical insertion span mapped onto [0, 1].
RADIAL_INNER = 0.0
RADIAL_OUTER = 1.0

FD_STEP = 1e-6
COND_RANK_TOL = 1e-9


@dataclass(frozen=True)
class SPMDesign:
    """Link arcs in degrees, each within [0, 90]."""

    theta12: float
    theta13: float
    theta35: float

    def __post_init__(self):
        for name in ("theta12", "theta13", "theta35"):
            v = getattr(self, name)
            if not 0.0 <= v <= 90.0:
                raise ValueError(f"{name} = {v} outside [0, 90] degrees")


@dataclass(frozen=True)
class GridCell:
    polar: float      # rad, cell center
    azimuth: float    # rad, cell center
    solid_angle: float
    band: int         # polar band index; metrics depend on polar only

    @property
    def direction(self) -> np.ndarray:
        sp = math.sin(self.polar)
        return np.array([sp * math.cos(self.azimuth),
                         sp * math.sin(self.azimuth),
                         math.cos(self.polar)])


@dataclass(frozen=True)
class WorkspaceGrid:
    """Direction cells of the scoring domain."""

    cells: tuple[GridCell, ...]
    n_bands: int

    @staticmethod
    def semi_sphere(step_deg: float = 5.0) -> "WorkspaceGrid":
        """The 2592-cell grid: 5 x 5 degree cells over the full polar range
        and all azimuths (36 x 72 at the default step)."""
        n_pol = int(round(180.0 / step_deg))
        n_az = int(round(360.0 / step_deg))
        cells = []
        dphi = 2.0 * math.pi / n_az
        for i in range(n_pol):
            th0, th1 = i * step_deg * DEG, (i + 1) * step_deg * DEG
            dcos = math.cos(th0) - math.cos(th1)
            polar = (th0 + th1) / 2.0
            for j in range(n_az):
                azimuth = (j + 0.5) * dphi
                cells.append(GridCell(polar, azimuth, dphi * dcos, i))
        return WorkspaceGrid(cells=tuple(cells), n_bands=n_pol)

    def __len__(self) -> int:
        return len(self.cells)


@dataclass(frozen=True)
class StiffnessModel:
    """Diagonal joint stiffness (N*mm/rad per wrist joint) and the probe
    force used by deflection reports."""

    k_q: tuple[float, float, float] = (1.0, 1.0, 1.0)
    f: tuple[float, float, float] = (0.0, 0.0, 1.0)

    def __post_init__(self):
        if any(k <= 0 for k in self.k_q):
            raise ValueError("joint stiffness entries must be positive")


@dataclass(frozen=True)
class ScoreBreakdown:
    gci: float
    k_end: float
    q_l: float
    alpha: float
    score: float
    feasible: bool

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in
                ("gci", "k_end", "q_l", "alpha", "score", "feasible")}


def tool_frame(design: SPMDesign, q) -> np.ndarray:
    """Rotation of the tool frame: base spin, arc, middle spin, arc, tool
    spin; the tool direction is its z column."""
    q1, q2, q3 = (float(v) for v in q)
    t13 = design.theta13 * DEG
    t35 = design.theta35 * DEG
    return rotz(q1) @ rotx(-t13) @ rotz(q2) @ rotx(t35) @ rotz(q3)


def spm_jacobian(design: SPMDesign, q, base_rotation: np.ndarray | None = None,
                 step: float = FD_STEP) -> np.ndarray:
    """Angular-velocity Jacobian of the tool frame by central differences.

    Column i is the instantaneous rotation axis of joint i (the classic
    spherical-wrist Jacobian), recovered from the finite-difference
    derivative of the frame.  ``base_rotation`` re-expresses the design in
    a rotated base frame.
    """
    q = np.asarray(q, dtype=float)
    B = np.eye(3) if base_rotation is None else np.asarray(base_rotation, dtype=float)
    R0 = B @ tool_frame(design, q)
    J = np.zeros((3, 3))
    for i in range(3):
        up, dn = q.copy(), q.copy()
        up[i] += step
        dn[i] -= step
        dR = (B @ tool_frame(design, up) - B @ tool_frame(design, dn)) / (2.0 * step)
        W = dR @ R0.T
        J[:, i] = [W[2, 1], W[0, 2], W[1, 0]]
    return J


def condition_number(J: np.ndarray) -> float:
    s = np.linalg.svd(J, compute_uv=False)
    if s[-1] <= COND_RANK_TOL * s[0]:
        return math.inf
    return float(s[0] / s[-1])


def polar_reach(design: SPMDesign) -> tuple[float, float]:
    """Reachable polar-angle interval in radians (spherical triangle
    inequality on the two arcs)."""
    t13 = design.theta13 * DEG
    t35 = design.theta35 * DEG
    return abs(t13 - t35), min(t13 + t35, math.pi)


def reaches(design: SPMDesign, polar: float) -> bool:
    lo, hi = polar_reach(design)
    return lo - 1e-12 <= polar <= hi + 1e-12


def design_ik(design: SPMDesign, direction) -> tuple[float, float, float] | None:
    """Joint angles pointing the tool along ``direction``; None if out of
    reach.  The middle joint comes from the spherical law of cosines, the
    base joint matches the azimuth, the tool spin is free (zero)."""
    u = np.asarray(direction, dtype=float)
    u = u / np.linalg.norm(u)
    t13 = design.theta13 * DEG
    t35 = design.theta35 * DEG
    s13s35 = math.sin(t13) * math.sin(t35)
    if s13s35 < 1e-15:
        return (0.0, 0.0, 0.0) if abs(u[2] - math.cos(t13 + t35)) < 1e-12 else None
    cq2 = (float(np.clip(u[2], -1, 1)) - math.cos(t13) * math.cos(t35)) / s13s35
    if not -1.0 - 1e-9 <= cq2 <= 1.0 + 1e-9:
        return None
    q2 = math.acos(float(np.clip(cq2, -1.0, 1.0)))
    v = (rotx(-t13) @ rotz(q2) @ rotx(t35))[:, 2]
    if math.hypot(v[0], v[1]) < 1e-12 or math.hypot(u[0], u[1]) < 1e-12:
        q1 = 0.0
    else:
        q1 = math.atan2(u[1], u[0]) - math.atan2(v[1], v[0])
    return (q1, q2, 0.0)


@dataclass(frozen=True)
class DesignEvaluation:
    """Per-design aggregates over the grid."""

    gci: float
    k_end_raw: float
    solid_angle: float
    reachable_cells: int
    required_coverage: float


def evaluate_design(design: SPMDesign, grid: WorkspaceGrid,
                    model: StiffnessModel = StiffnessModel(),
                    jacobian=spm_jacobian,
                    required_cone_deg: float = REQUIRED_CONE_POLAR_DEG,
                    ) -> DesignEvaluation:
    """One pass over the grid collecting every score ingredient.

    The wrist metrics depend only on a cell's polar angle, so each polar
    band is evaluated once and shared by its cells; the resulting sums are
    identical to cell-by-cell evaluation regardless of iteration order.
    """
    kq_inv = np.diag([1.0 / k for k in model.k_q])
    band_cache: dict[int, tuple[float, float]] = {}

    inv_cond_sum = 0.0
    k_sum = 0.0
    omega = 0.0
    reachable_cells = 0
    required_total = 0
    required_hit = 0
    required_cone = required_cone_deg * DEG

    for cell in grid.cells:
        in_cone = cell.polar <= required_cone + 1e-12
        required_total += int(in_cone)
        if not reaches(design, cell.polar):
            continue
        reachable_cells += 1
        required_hit += int(in_cone)
        omega += cell.solid_angle
        if cell.band not in band_cache:
            q = design_ik(design, cell.direction)
            if q is None:
                band_cache[cell.band] = (0.0, 0.0)
            else:
                J = jacobian(design, q)
                s = np.linalg.svd(J, compute_uv=False)
                if s[-1] <= COND_RANK_TOL * s[0]:
                    band_cache[cell.band] = (0.0, 0.0)
                else:
                    C = J @ kq_inv @ J.T
                    evals = np.linalg.eigvalsh(C)
                    stiff = 0.0 if evals[0] <= COND_RANK_TOL * evals[-1] \
                        else 1.0 / evals[-1]
                    band_cache[cell.band] = (float(s[-1] / s[0]), stiff)
        inv_cond, stiff = band_cache[cell.band]
        inv_cond_sum += inv_cond
        k_sum += stiff

    return DesignEvaluation(
        gci=inv_cond_sum / len(grid),
        k_end_raw=(k_sum / reachable_cells) if reachable_cells else 0.0,
        solid_angle=omega,
        reachable_cells=reachable_cells,
        required_coverage=(required_hit / required_total) if required_total else 1.0,
    )


def gci(design: SPMDesign, grid: WorkspaceGrid, jacobian=spm_jacobian) -> float:
    """Average of 1/cond(J) over the grid; unreachable cells contribute 0."""
    return evaluate_design(design, grid, jacobian=jacobian).gci


def endpoint_stiffness(design: SPMDesign, grid: WorkspaceGrid,
                       model: StiffnessModel = StiffnessModel()) -> float:
    """Average worst-direction stiffness over reachable cells (raw,
    pre-normalization).

    Per cell the compliance J Kq^-1 J^T is formed; its inverse's smallest
    eigenvalue (the softest direction) is the cell stiffness, zero when
    the wrist is singular there.
    """
    return evaluate_design(design, grid, model).k_end_raw


def arc_length_sum(design: SPMDesign) -> float:
    """Arc sum of the two moving links, normalized so 90-degree arcs give 1."""
    return (design.theta13 + design.theta35) / 180.0


def structural_length_index(design: SPMDesign, grid: WorkspaceGrid,
                            radius: float = 1.0,
                            r_inner: float = RADIAL_INNER,
                            r_outer: float = RADIAL_OUTER) -> float:
    """L / V^(1/3): total link arc length at the given sphere radius over
    the cube root of the reachable shell volume (solid angle times radial
    depth).  Returns inf when nothing is reachable."""
    ev = evaluate_design(design, grid)
    if ev.solid_angle <= 0.0:
        return math.inf
    L = (design.theta13 + design.theta35) * DEG * radius
    V = ev.solid_angle / 3.0 * (r_outer ** 3 - r_inner ** 3)
    return L / V ** (1.0 / 3.0)


def score(design: SPMDesign, grid: WorkspaceGrid,
          model: StiffnessModel = StiffnessModel(),
          stiffness_norm: float | None = None,
          required_cone_deg: float = REQUIRED_CONE_POLAR_DEG,
          min_coverage: float = REQUIRED_COVERAGE) -> ScoreBreakdown:
    """Composite design score with its ingredients.

    ``stiffness_norm`` divides the raw endpoint stiffness into the [0, 1]
    normalization; grid searches pass the candidate-set maximum.  A design
    whose arcs sum below the guard, or that misses too much of the
    required cone, is infeasible and scores zero.
    """
    ev = evaluate_design(design, grid, model, required_cone_deg=required_cone_deg)
    alpha = arc_length_sum(design)
    feasible = (design.theta13 + design.theta35 >= MIN_ARC_SUM_DEG
                and ev.required_coverage >= min_coverage
                and ev.solid_angle > 0.0)
    if not feasible:
        return ScoreBreakdown(gci=ev.gci, k_end=0.0, q_l=math.inf, alpha=alpha,
                              score=0.0, feasible=False)
    norm = stiffness_norm if stiffness_norm is not None else 1.0
    k_end = ev.k_end_raw / norm
    L = (design.theta13 + design.theta35) * DEG
    V = ev.solid_angle / 3.0 * (RADIAL_OUTER ** 3 - RADIAL_INNER ** 3)
    q_l = L / V ** (1.0 / 3.0)
    value = ev.gci * k_end / (q_l * alpha ** 3)
    return ScoreBreakdown(gci=ev.gci, k_end=k_end, q_l=q_l, alpha=alpha,
                          score=value, feasible=True)


@dataclass
class ScoreMap:
    theta13_values: np.ndarray
    theta35_values: np.ndarray
    scores: np.ndarray  # (len(theta13), len(theta35)), rows theta13
    best_design: SPMDesign
    best_breakdown: ScoreBreakdown
    stiffness_norm: float

    def to_dict(self) -> dict:
        return {
            "theta13_deg": [float(v) for v in self.theta13_values],
            "theta35_deg": [float(v) for v in self.theta35_values],
            "scores": [[float(v) for v in row] for row in self.scores],
            "best_design": {"theta12": self.best_design.theta12,
                            "theta13": self.best_design.theta13,
                            "theta35": self.best_design.theta35},
            "best_breakdown": self.best_breakdown.to_dict(),
            "stiffness_norm": self.stiffness_norm,
        }


def grid_search(theta13_values=None, theta35_values=None,
                grid: WorkspaceGrid | None = None,
                model: StiffnessModel = StiffnessModel(),
                theta12: float = 0.0,
                stiffness_norm: float | None = None,
                required_cone_deg: float = REQUIRED_CONE_POLAR_DEG,
                min_coverage: float = REQUIRED_COVERAGE) -> ScoreMap:
    """Exhaustive scan over the arc-angle design space.

    With ``stiffness_norm`` unset, raw endpoint stiffnesses are normalized
    by their maximum over the candidate set, which lands k_end in [0, 1];
    passing an explicit constant instead rescales every score uniformly
    and cannot move the argmax.  Evaluation order never affects the map.
    """
    t13s = np.asarray(theta13_values if theta13_values is not None
                      else np.arange(5.0, 91.0, 5.0), dtype=float)
    t35s = np.asarray(theta35_values if theta35_values is not None
                      else np.arange(5.0, 91.0, 5.0), dtype=float)
    grid = grid or WorkspaceGrid.semi_sphere()

    designs = [[SPMDesign(theta12, a, b) for b in t35s] for a in t13s]
    evals = [[evaluate_design(d, grid, model, required_cone_deg=required_cone_deg)
              for d in row] for row in designs]

    if stiffness_norm is None:
        k_max = max((ev.k_end_raw for row in evals for ev in row), default=0.0)
        norm = k_max if k_max > 0 else 1.0
    else:
        norm = stiffness_norm

    scores = np.zeros((len(t13s), len(t35s)))
    best = None
    for i in range(len(t13s)):
        for j in range(len(t35s)):
            d, ev = designs[i][j], evals[i][j]
            alpha = arc_length_sum(d)
            feasible = (d.theta13 + d.theta35 >= MIN_ARC_SUM_DEG
                        and ev.required_coverage >= min_coverage
                        and ev.solid_angle > 0.0)
            if not feasible:
                continue
            L = (d.theta13 + d.theta35) * DEG
            V = ev.solid_angle / 3.0 * (RADIAL_OUTER ** 3 - RADIAL_INNER ** 3)
            q_l = L / V ** (1.0 / 3.0)
            value = ev.gci * (ev.k_end_raw / norm) / (q_l * alpha ** 3)
            scores[i, j] = value
            if best is None or value > best[0]:
                breakdown = ScoreBreakdown(gci=ev.gci, k_end=ev.k_end_raw / norm,
                                           q_l=q_l, alpha=alpha, score=value,
                                           feasible=True)
                best = (value, d, breakdown)

    if best is None:
        # nothing feasible: report the first design with a zero breakdown
        d = designs[0][0]
        breakdown = ScoreBreakdown(gci=0.0, k_end=0.0, q_l=math.inf,
                                   alpha=arc_length_sum(d), score=0.0,
                                   feasible=False)
        best = (0.0, d, breakdown)

    return ScoreMap(theta13_values=t13s, theta35_values=t35s, scores=scores,
                    best_design=best[1], best_breakdown=best[2],
                    stiffness_norm=norm)


def write_score_map(path, score_map: ScoreMap) -> None:
    """Delimited text matrix: rows theta13, columns theta35.

    Formatting uses shortest round-trip floats, so identical inputs give a
    byte-identical file.
    """
    with open(path, "w") as fh:
        header = "theta13/theta35\t" + "\t".join(
            repr(float(v)) for v in score_map.theta35_values)
        fh.write(header + "\n")
        for t13, row in zip(score_map.theta13_values, score_map.scores):
            fh.write(repr(float(t13)) + "\t"
                     + "\t".join(repr(float(v)) for v in row) + "\n")
