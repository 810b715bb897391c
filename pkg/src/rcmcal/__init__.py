"""rcmcal: kinematics, calibration, and evaluation toolkit for a
remote-center-of-motion surgical manipulator.

Submodules:

* :mod:`rcmcal.kinematics` -- nominal and calibrated FK/IK of the 5-DOF arm
* :mod:`rcmcal.calibration` -- Levenberg-Marquardt CT+FK estimation
* :mod:`rcmcal.localization` -- tool axis/tip from intensity point clouds
* :mod:`rcmcal.rcm` -- remote-center point fitting
* :mod:`rcmcal.workspace` -- design-space scoring and grid search
* :mod:`rcmcal.simulator` -- seeded synthetic ground-truth data
* :mod:`rcmcal.cli` -- the ``rcmcal`` command
"""

from .calibration import (
    CalibrationParams,
    CalibrationResult,
    CTParams,
    ErrorStats,
    LMOptions,
    Measurement,
    calibrate,
    ct_only_calibrate,
    lm_solve,
    observability_analysis,
    pose_stats,
    tool_offset_recalibrate,
    validate,
)
from .kinematics import (
    DHLink,
    JointLimits,
    JointState,
    RobotModel,
    SixParamLink,
    forward_kinematics,
    forward_kinematics_nominal,
    inverse_kinematics_nominal,
    inverse_kinematics_numeric,
    numeric_jacobian,
)
from .localization import (
    AxisFit,
    LocalizeConfig,
    OctPointCloud,
    TipEstimate,
    localize_tool,
)
from .rcm import RcmFit, ToolLine, estimated_rcm, fit_rcm, lines_from_tips
from .simulator import (
    NoiseSpec,
    PerturbationSpec,
    ScanSpec,
    ToolGeometry,
    gen_measurements,
    perturb_model,
    random_poses,
    synth_cloud,
)
from .transforms import RigidTransform
from .workspace import SPMDesign, StiffnessModel, WorkspaceGrid, grid_search, score

__version__ = "0.1.0"
