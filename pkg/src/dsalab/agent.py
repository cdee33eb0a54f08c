"""Joint sensing/access DDQN learner.

The agent's state is the concatenation of the last H full observations
(N values each, 0 = not sensed), and its action space is either the extended
space of size N^2/L (subset to sense and channel to access, both at the next
slot) or just the N access channels when sensing is supplied externally by a
fixed schedule. One learner implementation serves both cases, so baseline
and joint-policy results differ only in the sensing policy.

Per transmitting slot the learner stores one transition and performs one
DDQN gradient step: the policy network picks the best next action, the
periodically synced target network values it. Idle slots (transmit
probability p_ac < 1) skip storage and training but still advance the
observation history.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import nn
from .errors import ActionOutOfRange
from .metrics import ThroughputRecorder, WindowStats


@dataclass(frozen=True)
class Hyperparams:
    n_channels: int = 4
    subset_size: int = 2
    history_len: int = 2
    gamma: float = 0.8
    learning_rate: float = 1e-4
    replay_capacity: int = 30_000
    target_sync: int = 20
    batch_size: int = 64
    hidden: tuple[int, ...] = (128, 128)
    p_ac: float = 1.0

    def __post_init__(self):
        if self.n_channels < 1 or self.n_channels % self.subset_size:
            raise ValueError(
                f"subset_size {self.subset_size} must divide n_channels {self.n_channels}"
            )
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError(f"gamma {self.gamma} outside [0, 1)")
        if self.history_len < 1:
            raise ValueError("history_len must be >= 1")
        if self.replay_capacity < self.batch_size:
            raise ValueError("replay capacity must be >= batch size")
        if not 0.0 < self.p_ac <= 1.0:
            raise ValueError(f"p_ac {self.p_ac} outside (0, 1]")
        if self.learning_rate <= 0.0:
            raise ValueError("learning_rate must be positive")
        object.__setattr__(self, "hidden", tuple(self.hidden))

    @property
    def n_subsets(self) -> int:
        return self.n_channels // self.subset_size

    @property
    def n_extended_actions(self) -> int:
        return self.n_channels * self.n_subsets  # N^2/L

    @property
    def obs_dim(self) -> int:
        return self.n_channels * self.history_len


def epsilon(t_transmit: int) -> float:
    """Exploration rate after t_transmit transmitting slots: 1 / (1 + 0.01 t)."""
    return 1.0 / (1.0 + 0.01 * t_transmit)


def decompose_action(action: int, n_channels: int, n_subsets: int | None = None) -> tuple[int, int]:
    """Split an extended action into (sensing subset, access channel)."""
    bound = n_channels * (n_subsets if n_subsets is not None else n_channels)
    if not 0 <= action < bound:
        raise ActionOutOfRange(f"action {action} outside [0, {bound})")
    return action // n_channels, action % n_channels


def select_action(params: nn.MlpParams, obs: np.ndarray, eps: float, rng: np.random.Generator) -> int:
    """Epsilon-greedy over the network's outputs; greedy ties take the lowest index."""
    if rng.random() < eps:
        return int(rng.integers(params.dims[-1]))
    q, _ = nn.forward(params, obs)
    return int(q[0].argmax())


def ddqn_targets(
    policy: nn.MlpParams,
    target: nn.MlpParams,
    rewards: np.ndarray,
    next_obs: np.ndarray,
    gamma: float,
) -> np.ndarray:
    """y = r + gamma * Q_target(o', argmax_a Q_policy(o', a)) for a batch."""
    q_policy, _ = nn.forward(policy, next_obs)
    best = q_policy.argmax(axis=1)
    q_target, _ = nn.forward(target, next_obs)
    return np.asarray(rewards, dtype=np.float64) + gamma * q_target[np.arange(len(best)), best]


def ddqn_target(policy, target, reward, next_obs, gamma) -> float:
    """Single-transition DDQN target."""
    return float(ddqn_targets(policy, target, np.array([reward]), np.atleast_2d(next_obs), gamma)[0])


def shift_history(history: np.ndarray, observation: np.ndarray, n_channels: int) -> np.ndarray:
    """Drop the oldest N-block and append the newest observation; returns a new array."""
    out = np.empty_like(history)
    out[:-n_channels] = history[n_channels:]
    out[-n_channels:] = observation
    return out


@dataclass(frozen=True)
class Transition:
    obs: np.ndarray        # history before acting
    action: int            # index in the learner's action space
    reward: int
    next_obs: np.ndarray   # history the agent acts on next


class ReplayBuffer:
    """Bounded FIFO of transitions with uniform sampling, stored as flat arrays."""

    def __init__(self, capacity: int, obs_dim: int, rng: np.random.Generator):
        self.capacity = capacity
        self.rng = rng
        self.obs = np.empty((capacity, obs_dim))
        self.actions = np.empty(capacity, dtype=np.int64)
        self.rewards = np.empty(capacity)
        self.next_obs = np.empty((capacity, obs_dim))
        self.inserted = 0

    @property
    def size(self) -> int:
        return min(self.inserted, self.capacity)

    def push(self, obs, action, reward, next_obs) -> None:
        i = self.inserted % self.capacity
        self.obs[i] = obs
        self.actions[i] = action
        self.rewards[i] = reward
        self.next_obs[i] = next_obs
        self.inserted += 1

    def sample(self, batch_size: int):
        idx = self.rng.integers(self.size, size=batch_size)
        return (
            self.obs.take(idx, axis=0),
            self.actions.take(idx),
            self.rewards.take(idx),
            self.next_obs.take(idx, axis=0),
        )


class DdqnAgent:
    """Policy/target network pair, optimizer state, replay buffer, and counters."""

    def __init__(
        self,
        hyperparams: Hyperparams,
        n_actions: int,
        init_rng: np.random.Generator,
        replay_rng: np.random.Generator,
        params: nn.MlpParams | None = None,
    ):
        self.hp = hyperparams
        self.n_actions = n_actions
        dims = (hyperparams.obs_dim, *hyperparams.hidden, n_actions)
        self.policy = params if params is not None else nn.init_params(dims, init_rng)
        if self.policy.dims != dims:
            raise ValueError(f"parameter dims {self.policy.dims} do not match {dims}")
        self.target = nn.copy_params(self.policy)
        self.adam = nn.AdamState.for_params(self.policy)
        self.replay = ReplayBuffer(hyperparams.replay_capacity, hyperparams.obs_dim, replay_rng)
        self.train_iterations = 0
        self.t_transmit = 0  # transmitting-slot counter driving the epsilon decay
        self._grads = nn.zeros_like_params(self.policy)  # scratch, fully overwritten each step

    def store_and_train(self, obs, action, reward, next_obs) -> None:
        """Push one transition; once the buffer can fill a batch, take one DDQN step."""
        self.replay.push(obs, action, reward, next_obs)
        if self.replay.size >= self.hp.batch_size:
            self.train_step()

    def train_step(self) -> None:
        obs, actions, rewards, next_obs = self.replay.sample(self.hp.batch_size)
        targets = ddqn_targets(self.policy, self.target, rewards, next_obs, self.hp.gamma)
        q, cache = nn.forward(self.policy, obs)
        _, out_grad = nn.masked_mse_loss(q, actions, targets)
        nn.backward(self.policy, cache, out_grad, out=self._grads)
        nn.adam_update(self.policy, self.adam, self._grads, self.hp.learning_rate)
        self.train_iterations += 1
        if self.train_iterations % self.hp.target_sync == 0:
            self.target = nn.copy_params(self.policy)


def store_and_train(agent: DdqnAgent, transition: Transition) -> DdqnAgent:
    agent.store_and_train(transition.obs, transition.action, transition.reward, transition.next_obs)
    return agent


@dataclass
class TrainingTrace:
    """Per-slot rewards (0 = idle slot), feasibility flags, and windowed stats."""

    rewards: np.ndarray
    free_exists: np.ndarray
    windows: list[WindowStats] = field(default_factory=list)
    observations: np.ndarray | None = None


def run_training(
    env,
    hyperparams: Hyperparams,
    total_steps: int,
    rng: np.random.Generator,
    *,
    sensing_schedule=None,
    hooks=None,
    window_len: int = 100,
    checkpoint_hook=None,
    checkpoint_every: int = 100_000,
    train: bool = True,
    epsilon_override: float | None = None,
    agent: DdqnAgent | None = None,
    record_observations: bool = False,
) -> tuple[TrainingTrace, DdqnAgent]:
    """Drive one learner against one environment for total_steps slots.

    If sensing_schedule is None the learner picks extended actions (joint
    sensing and access); otherwise the schedule is called as schedule(t, rng)
    for the subset to sense and the learner only picks the access channel.
    `rng` is split into independent weight-init, exploration (incl. transmit
    draws), and replay-sampling streams; the environment owns its own stream.

    With train=False no transitions are stored and no gradients are taken
    (frozen-policy evaluation); epsilon_override pins the exploration rate.
    `hooks`, if given, is called as hooks(tau, eta, eta_bound) after each
    completed window; checkpoint_hook(step, agent) fires every
    checkpoint_every steps.

    Returns the per-slot trace and the (possibly updated) agent.
    """
    if total_steps < 1:
        raise ValueError("total_steps must be >= 1")
    hp = hyperparams
    init_rng, explore_rng, replay_rng = rng.spawn(3)
    if agent is None:
        n_actions = hp.n_extended_actions if sensing_schedule is None else hp.n_channels
        agent = DdqnAgent(hp, n_actions, init_rng, replay_rng)
    recorder = ThroughputRecorder(window_len, on_window=hooks)
    rewards = np.zeros(total_steps, dtype=np.int8)
    free = np.zeros(total_steps, dtype=bool)
    obs_log = np.zeros((total_steps, hp.n_channels), dtype=np.int8) if record_observations else None

    first = env.reset(initial_subset=0)
    history = np.zeros(hp.obs_dim)
    history[-hp.n_channels :] = first.observation

    for t in range(1, total_steps + 1):
        transmit = hp.p_ac >= 1.0 or explore_rng.random() < hp.p_ac
        if transmit:
            agent.t_transmit += 1
        eps = epsilon(agent.t_transmit) if epsilon_override is None else epsilon_override
        action = select_action(agent.policy, history, eps, explore_rng)
        if sensing_schedule is None:
            env_action = action
        else:
            env_action = sensing_schedule(t, explore_rng) * hp.n_channels + action
        result = env.step(env_action, transmit=transmit)
        next_history = shift_history(history, result.observation, hp.n_channels)
        if transmit:
            rewards[t - 1] = result.reward
            if train:
                agent.store_and_train(history, action, result.reward, next_history)
        free[t - 1] = result.free_exists
        if obs_log is not None:
            obs_log[t - 1] = result.observation
        history = next_history
        recorder.update(result.reward, result.free_exists)
        if checkpoint_hook is not None and t % checkpoint_every == 0:
            checkpoint_hook(t, agent)

    recorder.flush()
    return TrainingTrace(rewards, free, recorder.windows, obs_log), agent


def evaluate_policy(
    env,
    hyperparams: Hyperparams,
    params: nn.MlpParams,
    steps: int,
    rng: np.random.Generator,
    *,
    sensing_schedule=None,
    window_len: int = 100,
) -> TrainingTrace:
    """Frozen-policy rollout: greedy actions, no storage, no training."""
    n_actions = params.dims[-1]
    init_rng, _, replay_rng = rng.spawn(3)
    agent = DdqnAgent(hyperparams, n_actions, init_rng, replay_rng, params=params)
    trace, _ = run_training(
        env,
        hyperparams,
        steps,
        rng,
        sensing_schedule=sensing_schedule,
        window_len=window_len,
        train=False,
        epsilon_override=0.0,
        agent=agent,
    )
    return trace
