"""Centralized relative localization for simulated 2D robot swarms.

Direct least-squares recovery of a swarm configuration from pairwise
range/bearing observations, per-robot unscented Kalman filter tracking,
a differential-drive swarm simulator, and rigid-alignment error metrics.
"""

from .alignment import AlignmentResult, RigidAlignment, kabsch_align
from .direct import (
    DirectPoseEstimator,
    EstimationProblem,
    EstimationResult,
    ObservabilityCheck,
    SolverConfig,
    dump_estimation_result,
    estimate,
    load_observation_batch,
    objective,
    objective_gradient,
    observability_check,
    observations_from_dicts,
    observations_to_dicts,
    result_to_dict,
)
from .errors import (
    AlignmentError,
    CalibrationError,
    DegenerateGeometryError,
    EstimationDivergedError,
    InitializationError,
    ObservabilityWarning,
    ScenarioError,
    SwarmLocError,
    TraceFormatError,
    UpdateSkippedWarning,
)
from .geometry import (
    Observation,
    Pose2D,
    SensingGraph,
    SwarmEstimate,
    angle_residual,
    displacement,
    normalize_angle,
)
from .kinematics import ControlInput, propagate, step_pose, wheel_speeds_for
from .pipeline import (
    ErrorReport,
    LocalizationRun,
    run_localization,
    write_report_csv,
    write_report_json,
    write_state_records,
)
from .presets import FIGURES, run_preset
from .sensing import (
    PowerLawCalibration,
    PowerLawRangeModel,
    SensorNoiseModel,
    fit_power_law,
    load_calibration_samples,
    magnitude_to_range,
    sense,
)
from .simulate import (
    Scenario,
    SimulationTrace,
    build_formation,
    load_scenario,
    read_trace,
    run,
    scenario_from_dict,
    scenario_to_dict,
    step_truth,
    write_trace,
)
from .ukf import (
    MeasurementBatch,
    MotionNoise,
    RobotFilter,
    SigmaPointParams,
    generate_sigma_points,
    measurement_function,
    predict,
    state_record,
    swarm_step,
    update,
)

__version__ = "0.1.0"

__all__ = [
    "AlignmentError",
    "AlignmentResult",
    "CalibrationError",
    "ControlInput",
    "DegenerateGeometryError",
    "DirectPoseEstimator",
    "ErrorReport",
    "EstimationDivergedError",
    "EstimationProblem",
    "EstimationResult",
    "FIGURES",
    "InitializationError",
    "LocalizationRun",
    "MeasurementBatch",
    "MotionNoise",
    "ObservabilityCheck",
    "ObservabilityWarning",
    "Observation",
    "Pose2D",
    "PowerLawCalibration",
    "PowerLawRangeModel",
    "RigidAlignment",
    "RobotFilter",
    "Scenario",
    "ScenarioError",
    "SensingGraph",
    "SensorNoiseModel",
    "SigmaPointParams",
    "SimulationTrace",
    "SolverConfig",
    "SwarmEstimate",
    "SwarmLocError",
    "TraceFormatError",
    "UpdateSkippedWarning",
    "angle_residual",
    "build_formation",
    "displacement",
    "dump_estimation_result",
    "estimate",
    "fit_power_law",
    "generate_sigma_points",
    "kabsch_align",
    "load_calibration_samples",
    "load_observation_batch",
    "load_scenario",
    "magnitude_to_range",
    "measurement_function",
    "normalize_angle",
    "objective",
    "objective_gradient",
    "observability_check",
    "observations_from_dicts",
    "observations_to_dicts",
    "predict",
    "propagate",
    "read_trace",
    "result_to_dict",
    "run",
    "run_localization",
    "run_preset",
    "scenario_from_dict",
    "scenario_to_dict",
    "sense",
    "state_record",
    "step_pose",
    "step_truth",
    "swarm_step",
    "update",
    "wheel_speeds_for",
    "write_report_csv",
    "write_report_json",
    "write_state_records",
    "write_trace",
]
