"""tubeplan: episodic conformal tube calibration and safe radius transfer
for open-loop planning in interactive environments."""

__version__ = "0.1.0"

from .conformal import (  # noqa: F401
    CalibrationResult,
    ScoreSet,
    TubeSpec,
    calibrate,
    coverage_estimate,
    empirical_quantile,
    inflated_level,
    score,
    tube_contains,
)
from .convergence import (  # noqa: F401
    ContractionParams,
    EtaBoundInputs,
    dkw_quantile_error_mc,
    error_bound_horizon,
    error_bound_steady,
    eta_bound,
    synthetic_fixed_point_run,
)
from .dynamics import (  # noqa: F401
    NoiseSequence,
    PedestrianModel,
    Policy,
    Trajectory,
    draw_noise,
    policy_distance,
    predict_nominal,
    rollout,
    step_ego,
    step_pedestrian,
)
from .episodic import EpisodeRecord, RunConfig, RunResult, evaluate_coverage, run  # noqa: F401
from .errors import (  # noqa: F401
    ConfigurationError,
    DegenerateGeometryError,
    InitializationError,
    InsufficientSamplesError,
    InvalidGainError,
    NoSafeRadiusError,
    SensitivityUnavailableError,
    TubeplanError,
)
from .planner import PlannerConfig, PlanResult, feasibility_sufficient, safety_eval, solve  # noqa: F401
from .radius_update import RadiusInterval, UpdateOutcome, explicit_update, implicit_update, project  # noqa: F401
from .sensitivity import (  # noqa: F401
    KappaResult,
    SensitivityConfig,
    SensitivityConstants,
    beta_T_analytic,
    beta_T_empirical,
    kappa,
    L_U_empirical,
)
