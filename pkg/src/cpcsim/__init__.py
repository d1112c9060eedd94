"""Multi-agent naming-game simulator with representational alignment analysis.

Agents with private noisy views of a shared world learn per-sign Gaussian
models, coordinate a sign system through a Metropolis-Hastings naming game,
and the alignment suite measures how far their internal relational structures
end up matching, with or without knowing the stimulus correspondence.
"""

from ._version import __version__
from .agent import (
    AgentState,
    Hyperparams,
    NIWPosterior,
    SignAssignment,
    gibbs_update_params,
    init_agent,
    load_agent_json,
    posterior_predictive_logdensity,
    predictive_sign_logweights,
    sample_sign_from_logweights,
    sample_sign_posterior,
    save_agent_json,
)
from .alignment import (
    RDM,
    AlignmentReport,
    TransportPlan,
    build_alignment_report,
    categorization_agreement,
    compute_rdm,
    gw_align,
    load_rdm_csv,
    matching_accuracy,
    rsa,
    save_rdm_csv,
    sinkhorn,
)
from .errors import NumericalError, SinkhornConvergenceError
from .experiments import (
    ExperimentConfig,
    RunRecord,
    SummaryReport,
    load_experiment_config,
    run_experiment,
    summarize,
)
from .naming_game import (
    GameConfig,
    GameTrace,
    StepRecord,
    mh_step,
    run_game,
)
from .world import (
    ModalityTransform,
    ObservationSet,
    World,
    WorldConfig,
    generate_world,
    observe,
)

__all__ = [
    "__version__",
    "AgentState",
    "AlignmentReport",
    "ExperimentConfig",
    "GameConfig",
    "GameTrace",
    "Hyperparams",
    "ModalityTransform",
    "NIWPosterior",
    "NumericalError",
    "ObservationSet",
    "RDM",
    "RunRecord",
    "SignAssignment",
    "SinkhornConvergenceError",
    "StepRecord",
    "SummaryReport",
    "TransportPlan",
    "World",
    "WorldConfig",
    "build_alignment_report",
    "categorization_agreement",
    "compute_rdm",
    "generate_world",
    "gibbs_update_params",
    "gw_align",
    "init_agent",
    "load_agent_json",
    "load_experiment_config",
    "load_rdm_csv",
    "matching_accuracy",
    "mh_step",
    "observe",
    "posterior_predictive_logdensity",
    "predictive_sign_logweights",
    "rsa",
    "run_experiment",
    "run_game",
    "sample_sign_from_logweights",
    "sample_sign_posterior",
    "save_agent_json",
    "save_rdm_csv",
    "sinkhorn",
    "summarize",
]
