"""Time-slotted wireless network simulation.

Channel occupancy is a vector in {-1, +1}^N (+1 busy, -1 free) driven either
by the cyclic single-free-channel dynamics or by per-PU frame Markov chains
with one of three allocation rules. The secondary user never sees occupancy
directly: it senses one contiguous subset of `subset_size` channels per slot
and receives ACK/NACK feedback (+1/-1) for the channel it transmits on.

Timing contract of `NetworkEnv.step`: the action chosen after observing the
time-t data selects both the subset sensed at t+1 and the channel accessed at
t+1. The returned reward and observation therefore both refer to the
post-transition occupancy.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ActionOutOfRange, AllocationOverflow, SubsetOutOfRange

PROB_TOL = 1e-12


@dataclass(frozen=True)
class CyclicParams:
    """One free channel drifts right by 0/1/2 positions per slot."""

    n_channels: int
    p_stay: float
    p_switch: float
    p_dswitch: float

    def __post_init__(self):
        if self.n_channels < 4 or self.n_channels % 2:
            raise ValueError(f"n_channels must be an even integer >= 4, got {self.n_channels}")
        for name in ("p_stay", "p_switch", "p_dswitch"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name}={p} outside [0, 1]")
        total = self.p_stay + self.p_switch + self.p_dswitch
        if abs(total - 1.0) > PROB_TOL:
            raise ValueError(f"transition probabilities sum to {total}, not 1")


@dataclass(frozen=True)
class PuChain:
    """Frame-length Markov chain of one PU.

    ``end_prob[j]`` is the probability of returning to the idle state 0 from
    state j; otherwise the chain advances to j+1. The last entry must be
    exactly 1 (frames are bounded by ``max_frame_len``).
    """

    end_prob: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "end_prob", tuple(float(p) for p in self.end_prob))
        if len(self.end_prob) < 2:
            raise ValueError("a PU chain needs at least states 0 and 1")
        if any(not 0.0 <= p <= 1.0 for p in self.end_prob):
            raise ValueError(f"end probabilities outside [0, 1]: {self.end_prob}")
        if self.end_prob[-1] != 1.0:
            raise ValueError("end_prob must close the frame: last entry != 1")

    @property
    def max_frame_len(self) -> int:
        return len(self.end_prob) - 1


# The four PU chains used by the frame-scenario benchmarks
# (frame lengths 3, 4, 4, 5).
BENCHMARK_PU_CHAINS = (
    PuChain((0.1, 0.1, 0.15, 1.0)),
    PuChain((0.2, 0.2, 0.1, 0.2, 1.0)),
    PuChain((0.15, 0.18, 0.3, 0.1, 1.0)),
    PuChain((0.28, 0.2, 0.02, 0.15, 0.01, 1.0)),
)


@dataclass(frozen=True)
class Cyclic:
    params: CyclicParams

    @property
    def n_channels(self) -> int:
        return self.params.n_channels


@dataclass(frozen=True)
class FrameScenario:
    n_channels: int
    chains: tuple[PuChain, ...]

    def __post_init__(self):
        object.__setattr__(self, "chains", tuple(self.chains))
        if len(self.chains) > self.n_channels:
            raise ValueError(f"{len(self.chains)} PUs but only {self.n_channels} channels")
        if not self.chains:
            raise ValueError("at least one PU chain is required")


@dataclass(frozen=True)
class FixedChannel(FrameScenario):
    """Scenario 1: pu_i transmits only on ch_i."""


@dataclass(frozen=True)
class LowestIndex(FrameScenario):
    """Scenario 2: new frames take the lowest-index free channel."""


@dataclass(frozen=True)
class LowestIndexFlipping(FrameScenario):
    """Scenario 3: like LowestIndex, with channels mirrored at every even slot."""


Scenario = Cyclic | FixedChannel | LowestIndex | LowestIndexFlipping


@dataclass
class StepResult:
    """Outcome of one slot.

    ``free_exists`` and ``true_state`` are diagnostics for metrics and tests;
    agents must only ever see ``observation`` and ``reward``. ``reward`` is
    None on idle (non-transmitting) slots.
    """

    observation: np.ndarray
    reward: int | None
    free_exists: bool
    true_state: np.ndarray


def cyclic_transition(u: int, params: CyclicParams, rng: np.random.Generator) -> int:
    """Move the free channel: stay, +1, or +2 (mod N) with the configured probabilities."""
    r = rng.random()
    if r < params.p_stay:
        return u
    if r < params.p_stay + params.p_switch:
        return (u + 1) % params.n_channels
    return (u + 2) % params.n_channels


def pu_advance(chain: PuChain, m: int, rng: np.random.Generator) -> int:
    """Advance one PU frame state: m -> 0 with prob end_prob[m], else m -> m+1."""
    if not 0 <= m <= chain.max_frame_len:
        raise ValueError(f"PU state {m} outside [0, {chain.max_frame_len}]")
    if m == chain.max_frame_len:
        return 0
    return 0 if rng.random() < chain.end_prob[m] else m + 1


def allocate(scenario: FrameScenario, prev_alloc: dict, pu_prev, pu_new) -> dict:
    """Recompute the PU -> channel map after a chain transition.

    FixedChannel pins pu_i to ch_i. Otherwise PUs mid-frame keep their
    channel, PUs that reached state 0 release theirs, and PUs starting a new
    frame (state 1 from 0) take the lowest-index free channels in increasing
    PU-index order.
    """
    if isinstance(scenario, FixedChannel):
        return {i: i for i, m in enumerate(pu_new) if m > 0}
    alloc = {i: c for i, c in prev_alloc.items() if pu_new[i] > 0 and pu_prev[i] > 0}
    starters = [i for i, m in enumerate(pu_new) if m == 1 and pu_prev[i] == 0]
    if starters:
        taken = set(alloc.values())
        free = [c for c in range(scenario.n_channels) if c not in taken]
        if len(starters) > len(free):
            raise AllocationOverflow(f"{len(starters)} new frames, {len(free)} free channels")
        for i, c in zip(starters, free):
            alloc[i] = c
    return alloc


def flip_channels(alloc: dict, t: int, n_channels: int) -> dict:
    """Mirror every allocated channel (c -> N-1-c) at even slots; identity at odd slots."""
    if t % 2:
        return dict(alloc)
    return {i: n_channels - 1 - c for i, c in alloc.items()}


def sense(state: np.ndarray, subset: int, subset_size: int) -> np.ndarray:
    """Copy the sensed contiguous subset out of the occupancy; 0 elsewhere."""
    n = len(state)
    if not 0 <= subset < n // subset_size:
        raise SubsetOutOfRange(f"subset {subset} outside [0, {n // subset_size})")
    obs = np.zeros(n, dtype=np.int8)
    lo = subset * subset_size
    obs[lo : lo + subset_size] = state[lo : lo + subset_size]
    return obs


class NetworkEnv:
    """Single-SU network simulator; owns its RNG, one instance per replica."""

    def __init__(self, scenario: Scenario, subset_size: int = 2, rng: np.random.Generator | None = None):
        if scenario.n_channels % subset_size:
            raise ValueError(f"subset_size {subset_size} does not divide {scenario.n_channels} channels")
        self.scenario = scenario
        self.n_channels = scenario.n_channels
        self.subset_size = subset_size
        self.n_subsets = self.n_channels // subset_size
        self.n_actions = self.n_channels * self.n_subsets  # extended action count N^2/L
        self.rng = rng if rng is not None else np.random.default_rng()
        self.t = 0
        self._is_cyclic = isinstance(scenario, Cyclic)
        self._free_channel: int | None = None
        self._pu_state: list[int] = []
        self._alloc: dict[int, int] = {}
        self._occ = np.ones(self.n_channels, dtype=np.int8)

    # -- diagnostics (never fed to agents) --------------------------------

    @property
    def occupancy(self) -> np.ndarray:
        return self._occ.copy()

    @property
    def free_channel(self) -> int | None:
        return self._free_channel

    @property
    def pu_states(self) -> tuple[int, ...]:
        return tuple(self._pu_state)

    @property
    def allocation(self) -> dict[int, int]:
        return dict(self._alloc)

    # -- dynamics ----------------------------------------------------------

    def reset(self, initial_subset: int | None = 0, *, initial_free: int | None = None) -> StepResult:
        """Start at t=1: cyclic free channel uniform (or pinned via initial_free,
        a test/diagnostic hook), frame scenarios all idle. Returns the initial
        observation of ``initial_subset`` (all zeros when None, for policies
        that never sense); no reward."""
        self.t = 1
        if isinstance(self.scenario, Cyclic):
            if initial_free is None:
                self._free_channel = int(self.rng.integers(self.n_channels))
            else:
                self._free_channel = initial_free % self.n_channels
        else:
            self._pu_state = [0] * len(self.scenario.chains)
            self._alloc = {}
        self._rebuild_occupancy()
        if initial_subset is None:
            observation = np.zeros(self.n_channels, dtype=np.int8)
        else:
            observation = sense(self._occ, initial_subset, self.subset_size)
        return StepResult(
            observation=observation,
            reward=None,
            free_exists=self._free_exists(),
            true_state=self._occ.copy(),
        )

    def _free_exists(self) -> bool:
        # cyclic keeps exactly one channel free; frame scenarios allocate one
        # channel per transmitting PU
        if self._is_cyclic:
            return True
        return len(self._alloc) < self.n_channels

    def access(self, channel: int) -> tuple[int, bool]:
        """Grade a transmission on `channel` against the current occupancy,
        without sensing: (reward, free_exists)."""
        if not 0 <= channel < self.n_channels:
            raise ActionOutOfRange(f"channel {channel} outside [0, {self.n_channels})")
        reward = 1 if self._occ[channel] == -1 else -1
        return reward, self._free_exists()

    def advance(self) -> None:
        """Advance the PU dynamics by one slot (t -> t+1) without sensing."""
        if isinstance(self.scenario, Cyclic):
            self._free_channel = cyclic_transition(self._free_channel, self.scenario.params, self.rng)
        else:
            prev = self._pu_state
            new = [pu_advance(c, m, self.rng) for c, m in zip(self.scenario.chains, prev)]
            alloc = allocate(self.scenario, self._alloc, prev, new)
            if isinstance(self.scenario, LowestIndexFlipping):
                alloc = flip_channels(alloc, self.t + 1, self.n_channels)
            self._pu_state = new
            self._alloc = alloc
        self.t += 1
        self._rebuild_occupancy()

    def step(self, action: int, transmit: bool = True, rng=None) -> StepResult:
        """Execute an extended action: sense subset action//N, access channel action%N.

        Order: advance dynamics to t+1, grade the access against the new
        occupancy (only if transmitting), then sense. ``rng`` is accepted for
        interface symmetry but the environment's own generator is used.
        """
        if not 0 <= action < self.n_actions:
            raise ActionOutOfRange(f"action {action} outside [0, {self.n_actions})")
        a_s, a_ac = divmod(action, self.n_channels)
        self.advance()
        occ = self._occ
        reward = None
        if transmit:
            reward = 1 if occ[a_ac] == -1 else -1
        return StepResult(
            observation=sense(occ, a_s, self.subset_size),
            reward=reward,
            free_exists=self._free_exists(),
            true_state=occ.copy(),
        )

    def _rebuild_occupancy(self) -> None:
        if isinstance(self.scenario, Cyclic):
            self._occ = np.ones(self.n_channels, dtype=np.int8)
            self._occ[self._free_channel] = -1
        else:
            self._occ = np.full(self.n_channels, -1, dtype=np.int8)
            for c in self._alloc.values():
                self._occ[c] = 1
