"""Remote-center-of-motion point estimation from tool centerlines.

Each tool pose defines a line (tip point, axis).  The RCM estimate is the
point minimizing the summed squared orthogonal distances to all lines,
which is linear: summing the projectors (I - z z^T) gives 3x3 normal
equations solved directly.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .calibration import CalibrationParams, StatTriple, ErrorStats
from .errors import RankDeficientError
from .kinematics import forward_kinematics

RANK_TOL = 1e-9


@dataclass(frozen=True)
class ToolLine:
    """Tool centerline: a point on it (the tooltip) and its unit direction."""

    p: np.ndarray
    z: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float)
        z = np.asarray(self.z, dtype=float)
        if p.shape != (3,) or z.shape != (3,):
            raise ValueError("ToolLine wants 3-vectors")
        if abs(np.linalg.norm(z) - 1.0) > 1e-9:
            raise ValueError("line direction must be unit")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "z", z)


@dataclass(frozen=True)
class RcmFit:
    p_rcm: np.ndarray
    stats: ErrorStats

    def to_dict(self) -> dict:
        return {"p_rcm": [float(v) for v in self.p_rcm], **self.stats.to_dict()}


def rcm_residual(line: ToolLine, p_rcm) -> np.ndarray:
    """Orthogonal displacement of the candidate point from the line."""
    p_rcm = np.asarray(p_rcm, dtype=float)
    rel = line.p - p_rcm
    return rel - line.z * (line.z @ rel)


def fit_rcm(lines) -> RcmFit:
    """Least-squares common point of >= 2 non-parallel lines.

    Solves sum_i (I - z_i z_i^T) p = sum_i (I - z_i z_i^T) p_i exactly;
    raises :class:`RankDeficientError` when the directions span fewer than
    two dimensions (all lines parallel).
    """
    lines = list(lines)
    if len(lines) < 2:
        raise RankDeficientError("need at least two tool lines")
    A = np.zeros((3, 3))
    b = np.zeros(3)
    for ln in lines:
        P = np.eye(3) - np.outer(ln.z, ln.z)
        A += P
        b += P @ ln.p
    evals = np.linalg.eigvalsh(A)
    if evals[0] < RANK_TOL * max(evals[-1], 1e-300):
        raise RankDeficientError("tool lines are parallel; RCM point not unique")
    p = np.linalg.solve(A, b)
    norms = [float(np.linalg.norm(rcm_residual(ln, p))) for ln in lines]
    stats = ErrorStats(position=StatTriple(
        rms=float(np.sqrt(np.mean(np.square(norms)))),
        max=float(np.max(norms)),
        std=float(np.std(norms)),
    ))
    return RcmFit(p_rcm=p, stats=stats)


def lines_from_tips(tip_estimates) -> list[ToolLine]:
    """Tool lines from localization output (tip point, tool axis)."""
    return [ToolLine(p=e.p, z=e.z) for e in tip_estimates]


def estimated_rcm(gamma_star: CalibrationParams, joint_states) -> RcmFit:
    """RCM fit over model-predicted centerlines in the measurement frame."""
    R = gamma_star.ct.rotation()
    t = gamma_star.ct.p_mb
    lines = []
    for q in joint_states:
        T = forward_kinematics(gamma_star.model, q)
        z = R @ T.tool_axis
        lines.append(ToolLine(p=R @ T.translation + t, z=z / np.linalg.norm(z)))
    return fit_rcm(lines)
