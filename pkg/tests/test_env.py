import numpy as np
import pytest

from dsalab import env as envmod
from dsalab.env import (
    BENCHMARK_PU_CHAINS,
    Cyclic,
    CyclicParams,
    FixedChannel,
    LowestIndex,
    LowestIndexFlipping,
    NetworkEnv,
    PuChain,
    allocate,
    cyclic_transition,
    flip_channels,
    pu_advance,
    sense,
)
from dsalab.errors import ActionOutOfRange, AllocationOverflow, SubsetOutOfRange


def cyclic_env(p_stay=0.1, p_switch=0.1, p_dswitch=0.8, n=4, seed=0):
    return NetworkEnv(Cyclic(CyclicParams(n, p_stay, p_switch, p_dswitch)), rng=np.random.default_rng(seed))


def frame_env(kind=FixedChannel, seed=0, chains=BENCHMARK_PU_CHAINS, n=4):
    return NetworkEnv(kind(n, chains), rng=np.random.default_rng(seed))


class TestCyclicParams:
    def test_simplex_enforced(self):
        with pytest.raises(ValueError):
            CyclicParams(4, 0.5, 0.4, 0.2)

    def test_even_channels(self):
        with pytest.raises(ValueError):
            CyclicParams(5, 0.1, 0.1, 0.8)

    def test_accepts_exact_simplex(self):
        CyclicParams(6, 0.3, 0.3, 0.4)


class TestCyclicTransition:
    def test_stay_is_degenerate(self, rng):
        params = CyclicParams(4, 1.0, 0.0, 0.0)
        assert all(cyclic_transition(2, params, rng) == 2 for _ in range(20))

    def test_double_switch_wraps(self, rng):
        params = CyclicParams(4, 0.0, 0.0, 1.0)
        assert cyclic_transition(3, params, rng) == 1

    def test_empirical_frequencies(self):
        params = CyclicParams(4, 0.1, 0.1, 0.8)
        rng = np.random.default_rng(7)
        draws = np.array([cyclic_transition(1, params, rng) for _ in range(100_000)])
        freqs = [(draws == c).mean() for c in (1, 2, 3)]
        assert freqs == pytest.approx([0.1, 0.1, 0.8], abs=0.01)


class TestPuChain:
    def test_final_entry_must_be_one(self):
        with pytest.raises(ValueError):
            PuChain((0.1, 0.99))

    def test_benchmark_chain_lengths(self):
        assert [c.max_frame_len for c in BENCHMARK_PU_CHAINS] == [3, 4, 4, 5]

    def test_forced_return_from_last_state(self, rng):
        chain = BENCHMARK_PU_CHAINS[0]
        assert all(pu_advance(chain, 3, rng) == 0 for _ in range(20))

    def test_only_reachable_states(self, rng):
        chain = BENCHMARK_PU_CHAINS[1]
        for m in range(chain.max_frame_len):
            results = {pu_advance(chain, m, rng) for _ in range(200)}
            assert results <= {0, m + 1}

    def test_empirical_end_probability(self):
        rng = np.random.default_rng(3)
        chain = BENCHMARK_PU_CHAINS[0]
        ended = np.array([pu_advance(chain, 2, rng) == 0 for _ in range(100_000)])
        assert ended.mean() == pytest.approx(0.15, abs=0.01)


class TestAllocate:
    def test_fixed_channel_identity(self):
        scenario = FixedChannel(4, BENCHMARK_PU_CHAINS)
        alloc = allocate(scenario, {}, [0, 0, 3, 0], [0, 0, 3, 0])
        assert alloc == {2: 2}

    def test_lowest_index_new_frames(self):
        scenario = LowestIndex(4, BENCHMARK_PU_CHAINS)
        # pu_1 holds ch_0, pu_3 holds ch_2; pu_0 and pu_2 start together
        prev = {1: 0, 3: 2}
        alloc = allocate(scenario, prev, [0, 2, 0, 1], [1, 3, 1, 2])
        assert alloc == {1: 0, 3: 2, 0: 1, 2: 3}

    def test_mid_frame_keeps_channel(self):
        scenario = LowestIndex(4, BENCHMARK_PU_CHAINS)
        alloc = allocate(scenario, {1: 0}, [0, 2, 0, 0], [0, 3, 0, 0])
        assert alloc == {1: 0}

    def test_release_on_frame_end(self):
        scenario = LowestIndex(4, BENCHMARK_PU_CHAINS)
        alloc = allocate(scenario, {1: 0}, [0, 4, 0, 0], [0, 0, 0, 0])
        assert alloc == {}

    def test_overflow_raises(self):
        # impossible when K_p <= N; the guard is exercised with an
        # inconsistent state (more PUs than the scenario owns)
        scenario = LowestIndex(4, BENCHMARK_PU_CHAINS)
        prev = {0: 0, 1: 1, 2: 2}
        with pytest.raises(AllocationOverflow):
            allocate(scenario, prev, [1, 1, 1, 0, 0], [2, 2, 2, 1, 1])


class TestFlipChannels:
    def test_even_step_mirrors(self):
        assert flip_channels({0: 0}, t=2, n_channels=4) == {0: 3}

    def test_odd_step_identity(self):
        assert flip_channels({0: 0, 2: 3}, t=3, n_channels=4) == {0: 0, 2: 3}

    def test_involution(self):
        alloc = {0: 1, 1: 2}
        assert flip_channels(flip_channels(alloc, 2, 4), 4, 4) == alloc


class TestSense:
    def test_copies_first_subset(self):
        state = np.array([-1, 1, 1, 1], dtype=np.int8)
        assert np.array_equal(sense(state, 0, 2), [-1, 1, 0, 0])

    def test_copies_second_subset(self):
        state = np.array([1, 1, -1, 1], dtype=np.int8)
        assert np.array_equal(sense(state, 1, 2), [0, 0, -1, 1])

    def test_exactly_subset_size_nonzeros(self, rng):
        for _ in range(50):
            state = rng.choice([-1, 1], size=8).astype(np.int8)
            subset = int(rng.integers(4))
            obs = sense(state, subset, 2)
            assert np.count_nonzero(obs) == 2
            lo = subset * 2
            assert np.array_equal(obs[lo : lo + 2], state[lo : lo + 2])

    def test_out_of_range(self):
        with pytest.raises(SubsetOutOfRange):
            sense(np.ones(4, dtype=np.int8), 2, 2)


class TestStep:
    def test_deterministic_double_switch_reward(self):
        e = cyclic_env(0.0, 0.0, 1.0)
        e.reset(initial_free=0)
        # free channel moves 0 -> 2; action senses subset 1 and accesses ch_2
        res = e.step(1 * 4 + 2)
        assert res.reward == 1
        assert np.array_equal(res.observation, [0, 0, -1, 1])

    def test_accessing_busy_channel(self):
        e = cyclic_env(0.0, 0.0, 1.0)
        e.reset(initial_free=0)
        res = e.step(1 * 4 + 0)
        assert res.reward == -1

    def test_idle_step_has_no_reward(self):
        e = cyclic_env(0.0, 0.0, 1.0)
        e.reset(initial_free=0)
        res = e.step(1 * 4 + 2, transmit=False)
        assert res.reward is None
        assert np.array_equal(res.observation, [0, 0, -1, 1])

    def test_action_out_of_range(self):
        e = cyclic_env()
        e.reset()
        with pytest.raises(ActionOutOfRange):
            e.step(8)

    def test_reward_matches_true_state(self):
        e = frame_env(LowestIndex, seed=5)
        e.reset()
        rng = np.random.default_rng(6)
        for _ in range(500):
            action = int(rng.integers(e.n_actions))
            res = e.step(action)
            a_ac = action % 4
            assert res.reward == (1 if res.true_state[a_ac] == -1 else -1)
            assert res.free_exists == bool((res.true_state == -1).any())


class TestCyclicInvariants:
    def test_exactly_one_free_channel(self):
        e = cyclic_env(seed=2)
        e.reset()
        for _ in range(1000):
            res = e.step(0)
            assert (res.true_state == -1).sum() == 1

    def test_chain_frequencies_within_three_sigma(self):
        e = cyclic_env(seed=3)
        e.reset()
        prev = e.free_channel
        counts = np.zeros((4, 4))
        for _ in range(100_000):
            e.advance()
            counts[prev, e.free_channel] += 1
            prev = e.free_channel
        probs = {0: 0.1, 1: 0.1, 2: 0.8}
        for s in range(4):
            total = counts[s].sum()
            for shift, p in probs.items():
                observed = counts[s, (s + shift) % 4] / total
                sigma = np.sqrt(p * (1 - p) / total)
                assert abs(observed - p) <= 3 * sigma, (s, shift)


class TestFrameInvariants:
    def test_scenario1_occupancy_tracks_pu_state(self):
        e = frame_env(FixedChannel, seed=11)
        e.reset()
        for _ in range(2000):
            e.advance()
            occ = e.occupancy
            for i, m in enumerate(e.pu_states):
                assert (occ[i] == 1) == (m > 0)

    @pytest.mark.parametrize("kind", [LowestIndex, LowestIndexFlipping])
    def test_no_channel_collisions(self, kind):
        e = frame_env(kind, seed=12)
        e.reset()
        for _ in range(2000):
            e.advance()
            channels = list(e.allocation.values())
            assert len(channels) == len(set(channels))
            assert len(channels) == sum(m > 0 for m in e.pu_states)

    def test_scenario2_channel_constant_per_frame(self):
        e = frame_env(LowestIndex, seed=13)
        e.reset()
        current: dict[int, int] = {}
        for _ in range(3000):
            e.advance()
            alloc = e.allocation
            for i, m in enumerate(e.pu_states):
                if m > 0:
                    if i in current:
                        assert alloc[i] == current[i]  # unchanged mid-frame
                    current[i] = alloc[i]
                else:
                    current.pop(i, None)

    def test_scenario3_flip_pattern(self):
        # two slots of scenario-2 layout, then two mirrored, and so on
        e = frame_env(LowestIndexFlipping, seed=14)
        twin = frame_env(LowestIndex, seed=14)
        e.reset()
        twin.reset()
        for _ in range(2000):
            e.advance()
            twin.advance()
            t = e.t
            flipped = (t % 4) in (2, 3)  # flips applied at t = 2, 4, ... toggle the frame
            expect = {i: 3 - c for i, c in twin.allocation.items()} if flipped else twin.allocation
            assert e.allocation == expect, t

    def test_scenario3_starts_all_idle(self):
        e = frame_env(LowestIndexFlipping, seed=15)
        res = e.reset()
        assert np.all(res.true_state == -1)
        assert e.pu_states == (0, 0, 0, 0)
