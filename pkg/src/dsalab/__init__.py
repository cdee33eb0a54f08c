"""Dynamic spectrum access laboratory.

A secondary user senses a small subset of channels per slot and learns,
with a double deep Q-network over its observation history, both where to
sense and where to transmit. The package bundles the simulated networks
(cyclic drift and three frame-traffic scenarios), the learner and its fixed
sensing baselines, the closed-form optimal policy for the cyclic network,
throughput metrics, and a reproducible experiment harness.
"""

import os

# BLAS threading only adds synchronization overhead at this package's matrix
# sizes (128-wide layers, batches of 64); honored only if numpy is not
# already loaded.
os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
os.environ.setdefault("OMP_NUM_THREADS", "1")

from .agent import (
    DdqnAgent,
    Hyperparams,
    ReplayBuffer,
    Transition,
    TrainingTrace,
    ddqn_target,
    ddqn_targets,
    decompose_action,
    epsilon,
    evaluate_policy,
    run_training,
    select_action,
    shift_history,
    store_and_train,
)
from .baselines import (
    BaselineKind,
    access_only_agent,
    fixed_sensing_schedule,
    make_schedule,
    random_access_action,
    run_baseline,
    run_random_access,
)
from .config import ExperimentConfig, build_config, load_config
from .env import (
    BENCHMARK_PU_CHAINS,
    Cyclic,
    CyclicParams,
    FixedChannel,
    FrameScenario,
    LowestIndex,
    LowestIndexFlipping,
    NetworkEnv,
    PuChain,
    Scenario,
    StepResult,
    allocate,
    cyclic_transition,
    flip_channels,
    pu_advance,
    sense,
)
from .experiment import ExperimentResult, evaluate_checkpoint, replica_rngs, run_experiment
from .metrics import (
    Aggregate,
    RunTrace,
    ThroughputRecorder,
    WindowStats,
    average_runs,
    relative_throughput,
    rho_or_nan,
    write_aggregate_csv,
    write_windows_csv,
)
from .nn import (
    AdamState,
    ForwardCache,
    MlpParams,
    adam_update,
    backward,
    copy_params,
    forward,
    init_params,
    load_checkpoint,
    masked_mse_loss,
    save_checkpoint,
    zeros_like_params,
)
from .oracle import (
    CyclicOraclePolicy,
    ObsRecord,
    PolicyTableRow,
    ValueTable,
    bootstrap_policy,
    in_init_set,
    infer_state,
    optimal_access,
    optimal_sense,
    optimal_throughput,
    play_optimal,
    reachable_pairs,
    sense_for_state,
    sensing_policy_table,
    transition_matrix,
    value_iteration,
)

__version__ = "0.1.0"
