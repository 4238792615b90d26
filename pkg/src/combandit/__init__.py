"""Simulation and verification harness for bandit combinatorial
optimization: adversarial environments with a planted optimum under
correlated Gaussian noise, baseline learners run under strict bandit
feedback, and numerical checks of the identities behind the k^{3/2}
sqrt(dT) regret floor."""

from ._kernels import NUMBA_ENABLED, jit_status
from .action_sets import (
    ActionSet,
    ActionSetError,
    DEFAULT_ENUMERATION_CAP,
    Dimensions,
    EnumerationCapExceeded,
    Family,
    LayeredPathSet,
    MatchingSet,
    MultitaskSet,
    action_from_string,
    action_to_string,
    build_action_set,
    build_layered_path_graph,
    build_matching,
    build_multitask,
)
from .analysis import (
    BoundForm,
    ClipEventReport,
    RegretSummary,
    ScalingFit,
    VarianceReport,
    empirical_regret,
    feedback_soundness,
    gaussian_kl,
    hindsight_best,
    lower_bound_value,
    scaling_fit,
    summarize_regret,
    variance_report,
    verify_clip_event,
    verify_ranking_tj_bound,
    verify_tj_partition,
    verify_tj_row_identity,
)
from .engine import (
    AdversaryFactory,
    GameProtocolError,
    Learner,
    Transcript,
    play_losses,
    replicate,
    run_game,
)
from .environments import (
    AdversaryConfig,
    EpsilonVariant,
    NoiseMode,
    clip,
    compute_epsilon,
    compute_sigma,
    draw_loss,
    draw_losses,
    make_adversary,
    make_rng,
    make_theorem4_adversary,
    sample_optimal_action,
    shortest_path_losses,
    standard_normals,
    with_noise_mode,
)
from .learners import (
    EnumeratedExp2Learner,
    Exp2SingularError,
    FixedActionLearner,
    LearnerSpec,
    PerTaskExp3Learner,
    RoundRobinLearner,
    UniformRandomLearner,
    default_eta,
    default_gamma,
    enumerated_exp2,
    fixed_action,
    learner_factory,
    make_learner,
    per_task_exp3,
    play_with_kernel,
    round_robin,
    uniform_random,
)

__version__ = "0.1.0"
