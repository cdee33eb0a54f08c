"""Closed-form sensing/access policies for the cyclic network.

With subsets of two channels and a single free channel drifting right by
0/1/2 positions per slot, a pair of consecutive observations pins down the
free channel exactly, provided the sensing rule below is followed and the
chain of observations started from one that contained a free channel. The
full-state access rule and its expected throughput then follow in closed
form; `value_iteration` solves the same fully observed MDP numerically and
serves as an independent check of the access rule.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .env import Cyclic, CyclicParams, NetworkEnv
from .errors import UnknownState, UnsupportedGeometry

SUBSET_SIZE = 2  # the analytic machinery is derived for pairs of channels

FREE_LEFT = (-1, 1)
FREE_RIGHT = (1, -1)
ALL_BUSY = (1, 1)


@dataclass(frozen=True)
class ObsRecord:
    """One sensing outcome: which subset was sensed, and the two values seen."""

    subset: int
    pair: tuple[int, int]

    def __post_init__(self):
        object.__setattr__(self, "pair", tuple(int(v) for v in self.pair))

    def __str__(self):
        return f"[{self.subset},({self.pair[0]},{self.pair[1]})]"


def in_init_set(obs: ObsRecord) -> bool:
    """Membership in the bootstrap target set: at least one sensed channel free."""
    return -1 in obs.pair


def _check_geometry(n_channels: int) -> None:
    if n_channels < 4 or n_channels % 2:
        raise UnsupportedGeometry(f"need an even channel count >= 4, got {n_channels}")


def infer_state(x_prev: ObsRecord | None, x_curr: ObsRecord, n_channels: int) -> int | None:
    """Deduce the free channel from the last two observations, or None.

    A free channel in the current pair identifies the state outright. An
    all-busy pair resolves only through the previous observation, and only
    for subset combinations that arise under the optimal sensing rule;
    anything else returns None (Unknown).
    """
    _check_geometry(n_channels)
    nsub = n_channels // SUBSET_SIZE
    l = x_curr.subset
    if x_curr.pair == FREE_LEFT:
        return l * SUBSET_SIZE
    if x_curr.pair == FREE_RIGHT:
        return l * SUBSET_SIZE + 1
    if x_curr.pair != ALL_BUSY or x_prev is None:
        return None
    lp = x_prev.subset
    if x_prev.pair == FREE_LEFT:
        # previous state lp*2; candidates {lp*2, +1, +2}; subset lp all busy
        return (lp * SUBSET_SIZE + 2) % n_channels if l == lp else None
    if x_prev.pair == FREE_RIGHT:
        # previous state lp*2+1; candidates {+0, +1, +2}; subset lp+1 all busy
        return (lp * SUBSET_SIZE + 1) % n_channels if l == (lp + 1) % nsub else None
    if x_prev.pair == ALL_BUSY:
        if l == (lp + 1) % nsub:
            # previous state was lp*2+2 (left element of subset lp+1)
            return (l * SUBSET_SIZE + 2) % n_channels
        if l == lp:
            # previous state was lp*2-1 (right element of subset lp-1)
            return (l * SUBSET_SIZE - 1) % n_channels
    return None


def sense_for_state(u: int, n_channels: int) -> int:
    """Subset to sense next when the free channel is known to be u.

    The three reachable successors of u are {u, u+1, u+2}; sensing the subset
    holding u (u even) or u+1, u+2 (u odd) distinguishes all three, with the
    all-busy outcome identifying the one channel outside the sensed pair.
    """
    _check_geometry(n_channels)
    if u % 2 == 0:
        return u // SUBSET_SIZE
    return (u // SUBSET_SIZE + 1) % (n_channels // SUBSET_SIZE)


def optimal_sense(x_prev: ObsRecord | None, x_curr: ObsRecord, n_channels: int) -> int:
    """Subset to sense at the next slot given the last two observations."""
    u = infer_state(x_prev, x_curr, n_channels)
    if u is None:
        raise UnknownState(f"state not inferable from ({x_prev}, {x_curr})")
    return sense_for_state(u, n_channels)


def optimal_access(u: int, params: CyclicParams) -> int:
    """Access the most probable successor of the free channel u.

    Ties break toward the smaller shift (stay < switch < double switch).
    """
    shift = int(np.argmax((params.p_stay, params.p_switch, params.p_dswitch)))
    return (u + shift) % params.n_channels


def optimal_throughput(params: CyclicParams) -> float:
    """Long-run success rate of the optimal policy: the largest transition probability."""
    return max(params.p_stay, params.p_switch, params.p_dswitch)


def transition_matrix(params: CyclicParams) -> np.ndarray:
    """Row-stochastic free-channel transition matrix."""
    n = params.n_channels
    p = np.zeros((n, n))
    for s in range(n):
        p[s, s] += params.p_stay
        p[s, (s + 1) % n] += params.p_switch
        p[s, (s + 2) % n] += params.p_dswitch
    return p


@dataclass
class ValueTable:
    """Optimal state values and action values of the fully observed access MDP."""

    v: np.ndarray  # (N,)
    q: np.ndarray  # (N, N): state x access channel


def value_iteration(params: CyclicParams, gamma: float, tol: float = 1e-10):
    """Solve the fully observed access MDP by Bellman backups.

    q(s, a) = gamma * sum_s' P(s'|s) v(s') + 2 P(s'=a|s) - 1; iterates until
    the sup-norm change of v drops below tol. Returns (ValueTable, greedy
    policy); greedy argmax ties break toward the lowest channel index.
    """
    if not 0.0 <= gamma < 1.0:
        raise ValueError(f"gamma {gamma} outside [0, 1)")
    if tol <= 0.0:
        raise ValueError("tol must be positive")
    p = transition_matrix(params)
    v = np.zeros(params.n_channels)
    while True:
        q = gamma * (p @ v)[:, None] + 2.0 * p - 1.0
        v_new = q.max(axis=1)
        done = np.max(np.abs(v_new - v)) < tol
        v = v_new
        if done:
            return ValueTable(v, q), q.argmax(axis=1)


class CyclicOraclePolicy:
    """Random bootstrap, then exact tracking of the free channel.

    Until an observation contains a free channel, sensing and access actions
    are uniformly random. From then on the state is inferred from each
    consecutive observation pair and the analytic sensing/access rules are
    followed; `random_steps` records how many actions the bootstrap took.
    """

    def __init__(self, params: CyclicParams, rng: np.random.Generator):
        self.params = params
        self.n_channels = params.n_channels
        self.n_subsets = params.n_channels // SUBSET_SIZE
        self.rng = rng
        self.random_steps = 0
        self._x_curr: ObsRecord | None = None
        self._state: int | None = None

    @property
    def state(self) -> int | None:
        return self._state

    def observe(self, subset: int, pair) -> None:
        x = ObsRecord(subset, tuple(pair))
        if self._state is not None:
            u = infer_state(self._x_curr, x, self.n_channels)
            if u is None:
                raise UnknownState(f"tracking lost at ({self._x_curr}, {x})")
        elif in_init_set(x):
            u = infer_state(None, x, self.n_channels)
        else:
            u = None
        self._x_curr = x
        self._state = u

    def act(self) -> int:
        """Extended action (subset * N + channel) for the next slot."""
        if self._state is None:
            self.random_steps += 1
            a_s = int(self.rng.integers(self.n_subsets))
            a_ac = int(self.rng.integers(self.n_channels))
        else:
            a_s = sense_for_state(self._state, self.n_channels)
            a_ac = optimal_access(self._state, self.params)
        return a_s * self.n_channels + a_ac


def bootstrap_policy(params: CyclicParams, rng: np.random.Generator) -> CyclicOraclePolicy:
    """Policy that explores randomly until the state becomes inferable."""
    return CyclicOraclePolicy(params, rng)


def play_optimal(
    env: NetworkEnv,
    steps: int,
    rng: np.random.Generator,
    initial_subset: int = 0,
    initial_free: int | None = None,
) -> np.ndarray:
    """Run the oracle policy on a cyclic environment; returns the reward per slot."""
    if not isinstance(env.scenario, Cyclic):
        raise UnsupportedGeometry("the oracle policy only plays cyclic scenarios")
    policy = bootstrap_policy(env.scenario.params, rng)
    first = env.reset(initial_subset, initial_free=initial_free)
    lo = initial_subset * SUBSET_SIZE
    policy.observe(initial_subset, first.observation[lo : lo + SUBSET_SIZE])
    rewards = np.empty(steps, dtype=np.int8)
    n = env.n_channels
    for i in range(steps):
        a = policy.act()
        res = env.step(a)
        rewards[i] = res.reward
        a_s = a // n
        policy.observe(a_s, res.observation[a_s * SUBSET_SIZE : a_s * SUBSET_SIZE + SUBSET_SIZE])
    return rewards


@dataclass(frozen=True)
class PolicyTableRow:
    """One line of the sensing-policy table: observation pair, inferred state, next subset."""

    x_prev: ObsRecord | None
    x_curr: ObsRecord
    state: int
    next_subset: int


def sensing_policy_table(n_channels: int) -> list[PolicyTableRow]:
    """Every observation pair the tracking policy can encounter, with its inference.

    Pairs whose current observation contains a free channel are collapsed
    into 'don't care' rows (x_prev=None). 6*(N/2) rows in total.
    """
    _check_geometry(n_channels)
    nsub = n_channels // SUBSET_SIZE
    keys: list[tuple[ObsRecord | None, ObsRecord]] = []
    for l in range(nsub):
        keys.append((None, ObsRecord(l, FREE_LEFT)))
        keys.append((None, ObsRecord(l, FREE_RIGHT)))
    for pat in (FREE_LEFT, FREE_RIGHT, ALL_BUSY):
        for lp in range(nsub):
            if pat == FREE_LEFT:
                curr = lp
            elif pat == FREE_RIGHT:
                curr = (lp + 1) % nsub
            else:
                curr = None  # both continuations occur for all-busy history
            for l in ((curr,) if curr is not None else (lp, (lp + 1) % nsub)):
                keys.append((ObsRecord(lp, pat), ObsRecord(l, ALL_BUSY)))
    rows = []
    for x_prev, x_curr in keys:
        u = infer_state(x_prev, x_curr, n_channels)
        rows.append(PolicyTableRow(x_prev, x_curr, u, sense_for_state(u, n_channels)))
    return rows


def reachable_pairs(n_channels: int) -> dict[tuple, int]:
    """Exhaustive closure of (previous, current) observation pairs under tracking.

    Starts from every state observed through the subset containing it (the
    bootstrap entry condition) and follows the sensing rule through all three
    transition branches. Returns {(x_prev, x_curr): state}; raises if any
    pair would map to two different states, so a clean return certifies the
    one-to-one property.
    """
    _check_geometry(n_channels)

    def record_for(u: int, subset: int) -> ObsRecord:
        lo = subset * SUBSET_SIZE
        return ObsRecord(subset, tuple(-1 if c == u else 1 for c in (lo, lo + 1)))

    pairs: dict[tuple, int] = {}
    seen = set()
    frontier = [(u, record_for(u, u // SUBSET_SIZE)) for u in range(n_channels)]
    while frontier:
        u, x_curr = frontier.pop()
        if (u, x_curr) in seen:
            continue
        seen.add((u, x_curr))
        subset = sense_for_state(u, n_channels)
        for shift in (0, 1, 2):
            u_next = (u + shift) % n_channels
            x_next = record_for(u_next, subset)
            key = (x_curr, x_next)
            if key in pairs and pairs[key] != u_next:
                raise UnknownState(f"pair {key} maps to both {pairs[key]} and {u_next}")
            pairs[key] = u_next
            frontier.append((u_next, x_next))
    return pairs
