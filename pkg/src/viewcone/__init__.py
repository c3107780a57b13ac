"""viewcone: simulate, estimate, and imitate agents with a restricted view cone."""

from .expert import (
    Belief,
    ExpertGains,
    ExpertPolicy,
    LikelihoodKernel,
    kernel_density,
    nominal_action,
    potential_field_control,
    update_belief,
)
from .likelihood import (
    DatasetEvaluator,
    LikelihoodConfig,
    dataset_loglik,
    step_marginal,
    trajectory_loglik,
)
from .estimators import (
    BoConfig,
    CemConfig,
    EstimationReport,
    cem_maximize,
    estimate_observation_params,
    estimate_p_obs,
    expected_improvement,
    gp_posterior,
)
from .metrics import (
    MetricSummary,
    discrete_frechet,
    normalized_frechet,
    proximity_rate,
    summarize,
)
from .sim import (
    Dataset,
    DatasetMeta,
    Outcome,
    Placement,
    ScenarioConfig,
    Trajectory,
    TrajectoryStep,
    generate_dataset,
    read_dataset,
    rollout,
    sample_scenario,
    write_dataset,
)
from .world import (
    AgentState,
    Bounds,
    Control,
    DetectionSet,
    ObstacleTrack,
    Scenario,
    SensorParams,
    in_cone,
    obstacle_position,
    sample_detections,
    step_bicycle,
    step_pointmass,
    step_unicycle,
    wrap_angle,
)

__version__ = "0.1.0"
