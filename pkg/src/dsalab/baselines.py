"""Reference policies: blind random access and fixed-sensing DDQN learners.

The two learned baselines reuse the DdqnAgent/run_training machinery verbatim
(output layer of N channels instead of N^2/L extended actions), so throughput
differences against the joint learner isolate the sensing policy. Random
access performs no sensing at all.
"""

from __future__ import annotations

import enum

import numpy as np

from .agent import DdqnAgent, Hyperparams, TrainingTrace, run_training
from .env import NetworkEnv
from .metrics import ThroughputRecorder


class BaselineKind(enum.Enum):
    RANDOM_ACCESS = "random_access"
    RANDOM_SENSING = "random_sensing"
    ALTERNATING_SENSING = "alternating"


def random_access_action(n_channels: int, rng: np.random.Generator) -> int:
    """Uniform channel choice; no sensing."""
    return int(rng.integers(n_channels))


def fixed_sensing_schedule(kind: BaselineKind, t: int, n_channels: int, subset_size: int, rng) -> int:
    """Subset sensed by a non-learned policy at slot t."""
    n_subsets = n_channels // subset_size
    if kind is BaselineKind.RANDOM_SENSING:
        return int(rng.integers(n_subsets))
    if kind is BaselineKind.ALTERNATING_SENSING:
        return t % n_subsets
    raise ValueError(f"{kind} has no sensing schedule")


def make_schedule(kind: BaselineKind, n_channels: int, subset_size: int):
    """Bind a schedule to its geometry: returns schedule(t, rng) -> subset."""
    return lambda t, rng: fixed_sensing_schedule(kind, t, n_channels, subset_size, rng)


def access_only_agent(
    hyperparams: Hyperparams,
    init_rng: np.random.Generator,
    replay_rng: np.random.Generator,
) -> DdqnAgent:
    """DDQN learner whose action space is just the N access channels."""
    return DdqnAgent(hyperparams, hyperparams.n_channels, init_rng, replay_rng)


def run_random_access(
    env: NetworkEnv,
    steps: int,
    rng: np.random.Generator,
    *,
    window_len: int = 100,
    hooks=None,
) -> TrainingTrace:
    """Blind uniform access for `steps` slots; nothing is learned or sensed."""
    env.reset(initial_subset=None)
    recorder = ThroughputRecorder(window_len, on_window=hooks)
    rewards = np.empty(steps, dtype=np.int8)
    free = np.empty(steps, dtype=bool)
    for i in range(steps):
        channel = random_access_action(env.n_channels, rng)
        env.advance()
        reward, free_exists = env.access(channel)
        rewards[i] = reward
        free[i] = free_exists
        recorder.update(reward, free_exists)
    recorder.flush()
    return TrainingTrace(rewards, free, recorder.windows)


def run_baseline(
    env: NetworkEnv,
    hyperparams: Hyperparams,
    kind: BaselineKind,
    total_steps: int,
    rng: np.random.Generator,
    **kwargs,
):
    """Run one baseline; returns (trace, agent or None for random access)."""
    if kind is BaselineKind.RANDOM_ACCESS:
        trace = run_random_access(
            env,
            total_steps,
            rng,
            window_len=kwargs.get("window_len", 100),
            hooks=kwargs.get("hooks"),
        )
        return trace, None
    schedule = make_schedule(kind, hyperparams.n_channels, hyperparams.subset_size)
    return run_training(env, hyperparams, total_steps, rng, sensing_schedule=schedule, **kwargs)
