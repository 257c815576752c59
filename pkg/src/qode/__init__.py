"""qode: tabular Q-learning and smooth-operator variants, their deterministic
mean-field models, and a numerical decay-certification harness."""

from .estimators import FixedPointSolver, NotFittedError, TabularQLearner
from .exceptions import (
    CapacityError,
    ConfigurationError,
    GenerationError,
    InadmissiblePError,
    NonErgodicChainError,
    NumericError,
    QodeError,
    ValidationError,
)
from .fixed_point import (
    FixedPointResult,
    brute_force_optimal,
    contraction_modulus_estimate,
    greedy_policy,
    policy_q_values,
    solve_fixed_point,
)
from .learner import (
    AnnealSchedule,
    LearningRun,
    NoiseReport,
    NoiseStats,
    ScheduleVerdict,
    StepSizeSchedule,
    noise_report,
    q_update_step,
    run_annealed_boltzmann,
    run_learning,
    save_run_csv,
    validate_schedule,
)
from .mdp import (
    MdpModel,
    SamplingDistribution,
    TransitionSample,
    build_sampling_distribution,
    flat_index,
    load_mdp,
    random_mdp,
    sample_transition,
    save_mdp,
)
from .ode import (
    DecayCertificate,
    OdeSystem,
    Trajectory,
    certify_decay,
    choose_even_p,
    f_infinity_field,
    integrate,
    lyapunov_series,
    mdp_ode_system,
    save_trajectory_csv,
    synthetic_affine_system,
    vector_field,
)
from .operators import (
    MAX_OP,
    BoundCheck,
    OperatorKind,
    WeightedNorm,
    apply_H,
    bellman_F,
    boltzmann,
    check_operator_bounds,
    lse,
    mellowmax,
    scaling_limit_error,
    smooth_max,
    weighted_norm,
)
from .verify import CheckResult, run_suite

__version__ = "0.1.0"
