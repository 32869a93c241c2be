"""Multi-armed bandits with stochastic delayed composite anonymous feedback."""

from .env import (
    AnonymousFeedback,
    ArmSpec,
    Environment,
    Instance,
    PendingBuffer,
    RewardLedger,
    generate_reward,
    ledger_true_mean_estimate,
)
from .errors import (
    ConfigurationError,
    HorizonExhausted,
    ResourceError,
    UndefinedEstimate,
    VerificationUnavailable,
)
from .harness import ExperimentConfig, compute_pseudo_regret, run_experiment, sublinearity_probe
from .policies import (
    ModifiedUCB,
    PhasedElimination,
    UniformRandom,
    VanillaUCB,
    alg1_default_k,
    alg2_eliminate,
    alg2_nm,
    baseline_policies,
    make_policy,
    ucb_index,
)
from .spread import SpreadAssignment, SpreadSpec, make_spread_policy, spread
from .verify import check_lemma1, check_lemma2, check_pull_count_bound

__version__ = "0.1.0"
