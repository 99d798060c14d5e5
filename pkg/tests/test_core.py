import itertools
import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from empowerment.core import (
    ContextPartition,
    EmpowermentCalculator,
    HorizonTooLargeError,
    SolverParams,
    average_state_empowerment,
    context_free_empowerment,
    contextual_empowerment,
    deterministic_empowerment,
    expected_empowerment,
    greedy_policy_step,
    impoverished_empowerment,
    optimal_context_search,
    sequence_channel,
    state_empowerment,
    state_empowerment_map,
)
from empowerment.infotheory import ValidationError, blahut_arimoto
from empowerment.model import TransitionModel, random_model
from oracles import bsc_capacity, path_distribution, set_partitions

TIGHT = SolverParams(epsilon=1e-12, max_iter=5000)


def line_world(length: int, stay: bool = True) -> TransitionModel:
    """Cells 0..length-1; actions L, R (and Stay); walls at both ends."""
    moves = [-1, 1] + ([0] if stay else [])
    nxt = [[min(max(c + m, 0), length - 1) for m in moves] for c in range(length)]
    return TransitionModel.from_deterministic(nxt, name=f"line{length}")


def dict_model(model: TransitionModel):
    return {r: {a: model.row(r, a) for a in range(model.n_actions)} for r in range(model.n_states)}


def random_deterministic(rng, n_states, n_actions, n_sensors):
    nxt = rng.integers(0, n_states, size=(n_states, n_actions))
    sensor = rng.integers(0, n_sensors, size=n_states)
    return TransitionModel.from_deterministic(nxt, sensor, sensors=range(n_sensors))


# -- sequence channel ----------------------------------------------------------


class TestSequenceChannel:
    def test_deterministic_two_state(self):
        m = TransitionModel.from_deterministic([[0, 1], [0, 1]])
        ch = sequence_channel(m, 0, 1)
        assert ch.shape == (2, 2)
        assert np.array_equal(ch, np.eye(2))

    def test_copies_transition_row(self):
        t = np.zeros((5, 2, 5))
        t[0, 0, 1:5] = 0.25
        t[0, 1, 0] = 1
        t[1:, :, 0] = 1
        m = TransitionModel.from_dense(t)
        ch = sequence_channel(m, 0, 1)
        assert np.allclose(ch[0], [0, 0.25, 0.25, 0.25, 0.25])

    def test_line_world_center_enumeration(self):
        m = line_world(3)
        ch = sequence_channel(m, 1, 2)
        assert ch.shape == (9, 3)
        trans = dict_model(m)
        for i, seq in enumerate(itertools.product(range(3), repeat=2)):
            dist = path_distribution(trans, 1, seq)
            expected = np.zeros(3)
            for s, p in dist.items():
                expected[m.sensor[s]] += p
            assert np.allclose(ch[i], expected)

    @given(st.integers(0, 2**32 - 1), st.integers(1, 3))
    def test_stochastic_rows_match_path_oracle(self, seed, n):
        rng = np.random.default_rng(seed)
        m = random_model(rng, 5, 3, 3, support=2)
        ch = sequence_channel(m, 0, n)
        trans = dict_model(m)
        for i, seq in enumerate(itertools.product(range(3), repeat=n)):
            expected = np.zeros(m.n_sensors)
            for s, p in path_distribution(trans, 0, seq).items():
                expected[m.sensor[s]] += p
            assert np.allclose(ch[i], expected, atol=1e-12)

    def test_budget_error_names_count(self):
        m = line_world(3)
        with pytest.raises(HorizonTooLargeError, match=r"3\^4 = 81"):
            sequence_channel(m, 0, 4, budget=80)

    def test_horizon_must_be_positive(self):
        with pytest.raises(ValidationError):
            sequence_channel(line_world(3), 0, 0)


# -- per-state empowerment ---------------------------------------------------------


class TestStateEmpowerment:
    def test_one_cell_world(self):
        m = TransitionModel.from_deterministic([[0, 0, 0]])
        for n in (1, 3, 7):
            assert deterministic_empowerment(m, 0, n) == 0.0
            assert state_empowerment(m, 0, n) == 0.0

    def test_identical_actions_zero(self):
        rng = np.random.default_rng(3)
        row = rng.dirichlet(np.ones(4))
        t = np.tile(row, (4, 3, 1))
        m = TransitionModel.from_dense(t)
        assert state_empowerment(m, 2, 2) == pytest.approx(0.0, abs=1e-9)

    def test_bsc_like_confusion(self):
        t = np.zeros((3, 2, 3))
        t[0, 0] = [0, 0.89, 0.11]
        t[0, 1] = [0, 0.11, 0.89]
        t[1:, :, :] = np.eye(3)[1:, None, :]
        m = TransitionModel.from_dense(t)
        assert state_empowerment(m, 0, 1, TIGHT) == pytest.approx(bsc_capacity(0.11), abs=1e-9)

    def test_deterministic_rejects_stochastic(self):
        m = random_model(np.random.default_rng(0), 3, 2, 2)
        with pytest.raises(ValidationError, match="Blahut-Arimoto"):
            deterministic_empowerment(m, 0, 1)

    def test_line_world_counts(self):
        m = line_world(7)
        # center of a 7-line: n steps reach 2n+1 cells
        for n in (1, 2, 3):
            assert deterministic_empowerment(m, 3, n) == pytest.approx(math.log2(2 * n + 1))

    @given(st.integers(0, 2**32 - 1), st.integers(1, 3))
    def test_deterministic_agreement(self, seed, n):
        rng = np.random.default_rng(seed)
        m = random_deterministic(rng, 6, 3, 4)
        for r in range(m.n_states):
            d = deterministic_empowerment(m, r, n)
            assert state_empowerment(m, r, n) == pytest.approx(d, abs=1e-6)
            # deterministic values are log2 of an integer
            assert 2**d == pytest.approx(round(2**d), abs=1e-9)

    @given(st.integers(0, 2**32 - 1))
    def test_horizon_monotone_with_stay(self, seed):
        rng = np.random.default_rng(seed)
        nxt = rng.integers(0, 8, size=(8, 3))
        nxt[:, 2] = np.arange(8)  # self-loop
        m = TransitionModel.from_deterministic(nxt, rng.integers(0, 4, size=8))
        for r in range(8):
            vals = [deterministic_empowerment(m, r, n) for n in range(1, 7)]
            assert all(b >= a for a, b in zip(vals, vals[1:]))


# -- relabeling -------------------------------------------------------------------


@given(st.integers(0, 2**32 - 1))
def test_relabeling_invariance(seed):
    rng = np.random.default_rng(seed)
    m = random_model(rng, 5, 3, 3, support=2)
    sp, ap, xp = rng.permutation(5), rng.permutation(3), rng.permutation(3)
    pm = m.permuted(sp, ap, xp)
    for r in range(5):
        for n in (1, 2):
            assert state_empowerment(pm, int(sp[r]), n, TIGHT) == pytest.approx(
                state_empowerment(m, r, n, TIGHT), abs=1e-10)
        # greedy choice maps through the action permutation when it is unique
        calc = EmpowermentCalculator(m, 1, TIGHT)
        vals = [calc.expected(r, a) for a in range(3)]
        best = max(vals)
        if sum(v >= best - 1e-9 for v in vals) == 1:
            assert greedy_policy_step(pm, int(sp[r]), 1, TIGHT) == int(ap[calc.greedy(r)])


def test_relabeling_deterministic_exact():
    m = random_deterministic(np.random.default_rng(1), 6, 4, 3)
    sp = np.array([3, 0, 5, 1, 4, 2])
    pm = m.permuted(sp, [2, 3, 0, 1], [1, 2, 0])
    for r in range(6):
        assert deterministic_empowerment(pm, int(sp[r]), 3) == deterministic_empowerment(m, r, 3)


# -- contexts ---------------------------------------------------------------------


def two_level_model():
    """State 0: 2 of 4 actions distinguishable (1 bit); state 1: all 4 distinct (2 bits)."""
    nxt = np.array([[2, 2, 3, 3], [2, 3, 4, 5], [2] * 4, [3] * 4, [4] * 4, [5] * 4])
    return TransitionModel.from_deterministic(nxt)


class TestContexts:
    def test_average_toy(self):
        m = two_level_model()
        assert state_empowerment(m, 0, 1) == pytest.approx(1.0, abs=1e-8)
        assert state_empowerment(m, 1, 1) == pytest.approx(2.0, abs=1e-8)
        prior = [0.5, 0.5, 0, 0, 0, 0]
        assert average_state_empowerment(m, prior, 1) == pytest.approx(1.5, abs=1e-8)

    def test_average_concentrated_prior(self):
        m = two_level_model()
        assert average_state_empowerment(m, [0, 1, 0, 0, 0, 0], 1) == pytest.approx(2.0, abs=1e-8)

    def test_average_identical_states(self):
        nxt = [[2, 3], [2, 3], [2, 2], [3, 3]]
        m = TransitionModel.from_deterministic(nxt)
        assert average_state_empowerment(m, [0.5, 0.5, 0, 0], 1) == pytest.approx(state_empowerment(m, 0, 1))

    def test_singleton_and_one_block(self):
        m = random_model(np.random.default_rng(5), 5, 3, 3)
        single = ContextPartition(tuple(range(5)))
        one = ContextPartition((0,) * 5)
        assert contextual_empowerment(m, single, None, 1, TIGHT) == pytest.approx(
            average_state_empowerment(m, None, 1, TIGHT), abs=1e-9)
        assert contextual_empowerment(m, one, None, 1, TIGHT) == pytest.approx(
            context_free_empowerment(m, None, 1, TIGHT), abs=1e-12)

    def test_identical_pairs(self):
        # states 0,1 behave alike, as do 2,3
        t = np.zeros((6, 2, 6))
        t[0, 0, 4] = t[1, 0, 4] = 1
        t[0, 1, 5] = t[1, 1, 5] = 1
        t[2, 0] = t[3, 0] = [0, 0, 0, 0, 0.7, 0.3]
        t[2, 1] = t[3, 1] = [0, 0, 0, 0, 0.2, 0.8]
        t[4, :, 4] = t[5, :, 5] = 1
        m = TransitionModel.from_dense(t)
        prior = [0.25, 0.25, 0.25, 0.25, 0, 0]
        pairs = ContextPartition((0, 0, 1, 1, 2, 2))
        e_r = average_state_empowerment(m, prior, 1, TIGHT)
        assert contextual_empowerment(m, pairs, prior, 1, TIGHT) == pytest.approx(e_r, abs=1e-9)

    def test_sensor_permuted_states_jensen_gap(self):
        nxt = [[2, 3], [3, 2], [2, 2], [3, 3]]
        m = TransitionModel.from_deterministic(nxt)
        prior = [0.5, 0.5, 0, 0]
        e_r = average_state_empowerment(m, prior, 1)
        e_free = context_free_empowerment(m, prior, 1)
        assert e_r == pytest.approx(1.0, abs=1e-8)
        assert e_free < e_r - 0.5

    def test_state_independent_channel(self):
        row = np.array([[0.9, 0.1, 0], [0, 0.2, 0.8]])
        t = np.tile(row, (3, 1, 1))
        m = TransitionModel.from_dense(t)
        assert context_free_empowerment(m, None, 1, TIGHT) == pytest.approx(
            average_state_empowerment(m, None, 1, TIGHT), abs=1e-9)

    def test_single_state_model(self):
        m = TransitionModel.from_dense(np.ones((1, 2, 1)))
        assert context_free_empowerment(m, None, 2) == state_empowerment(m, 0, 2)

    def test_partition_validation(self):
        with pytest.raises(ValidationError):
            ContextPartition((0, 2))
        with pytest.raises(ValidationError):
            ContextPartition.from_blocks([[0], [0, 1]], 2)
        with pytest.raises(ValidationError):
            contextual_empowerment(two_level_model(), ContextPartition((0, 1)), None, 1)

    @given(st.integers(0, 2**32 - 1))
    def test_jensen_chain(self, seed):
        rng = np.random.default_rng(seed)
        R, A, S = int(rng.integers(1, 7)), int(rng.integers(1, 5)), int(rng.integers(1, 5))
        m = random_model(rng, R, A, S, support=int(rng.integers(1, 4)))
        prior = rng.dirichlet(np.ones(R))
        part = ContextPartition.from_labels(rng.integers(0, R, size=R).tolist())
        e_free = context_free_empowerment(m, prior, 1, TIGHT)
        e_k = contextual_empowerment(m, part, prior, 1, TIGHT)
        e_r = average_state_empowerment(m, prior, 1, TIGHT)
        assert e_free <= e_k + 1e-9
        assert e_k <= e_r + 1e-9


class TestOptimalContext:
    def test_identical_states_one_block(self):
        row = np.array([[0.9, 0.1, 0], [0, 0.2, 0.8]])
        m = TransitionModel.from_dense(np.tile(row, (3, 1, 1)))
        k = optimal_context_search(m, None, 1, TIGHT)
        assert k.assignment == (0, 0, 0)
        assert k.entropy(np.full(3, 1 / 3)) == 0.0

    def test_two_classes(self):
        # states 0, 2 map actions straight; states 1, 3 swap them
        nxt = [[4, 5], [5, 4], [4, 5], [5, 4], [4, 4], [5, 5]]
        m = TransitionModel.from_deterministic(nxt)
        prior = [0.25, 0.25, 0.25, 0.25, 0, 0]
        k = optimal_context_search(m, prior, 1)
        blocks = [set(b) & {0, 1, 2, 3} for b in k.blocks()]
        assert {0, 2} in blocks and {1, 3} in blocks
        e_r = average_state_empowerment(m, prior, 1)
        assert contextual_empowerment(m, k, prior, 1) >= e_r - 1e-6

    def test_all_distinct_singletons(self):
        # three states, each permuting three outcomes differently
        perms = [(3, 4, 5), (4, 5, 3), (5, 3, 4)]
        nxt = [list(p) for p in perms] + [[3] * 3, [4] * 3, [5] * 3]
        m = TransitionModel.from_deterministic(nxt)
        prior = [1 / 3] * 3 + [0, 0, 0]
        k = optimal_context_search(m, prior, 1)
        sub = [b for b in k.blocks() if set(b) & {0, 1, 2}]
        assert all(len(set(b) & {0, 1, 2}) == 1 for b in sub)
        # oracle: no coarser grouping of {0, 1, 2} reaches E(R)
        e_r = average_state_empowerment(m, prior, 1)
        for assign in set_partitions(range(3)):
            if len(set(assign)) == 3:
                continue
            part = ContextPartition(tuple(assign) + (0, 0, 0))
            assert contextual_empowerment(m, part, prior, 1) < e_r - 1e-6

    def test_too_many_states(self):
        m = TransitionModel.from_deterministic(np.zeros((13, 1), dtype=int))
        with pytest.raises(ValidationError, match="at most 12"):
            optimal_context_search(m)

    @pytest.mark.parametrize("seed", range(6))
    def test_matches_exhaustive_oracle(self, seed):
        rng = np.random.default_rng(seed)
        R = 5
        # duplicate a few states so non-trivial groupings exist
        base = random_model(rng, R, 2, 3, support=2)
        succ, prob = base.succ.copy(), base.prob.copy()
        succ[3], prob[3] = succ[0], prob[0]
        succ[4], prob[4] = succ[1], prob[1]
        m = TransitionModel(succ, prob, base.sensor, sensors=range(3))
        prior = rng.dirichlet(np.ones(R))
        tol = 1e-6
        found = optimal_context_search(m, prior, 1, TIGHT, tol)
        e_r = average_state_empowerment(m, prior, 1, TIGHT)
        best = None
        for assign in set_partitions(range(R)):
            part = ContextPartition(assign)
            if contextual_empowerment(m, part, prior, 1, TIGHT) < e_r - tol:
                continue
            key = (round(part.entropy(prior), 9), part.n_contexts, assign)
            if best is None or key < best:
                best = key
        assert found.assignment == best[2]


# -- impoverished -----------------------------------------------------------------


class TestImpoverished:
    def test_full_budget_equals_deterministic(self):
        m = line_world(9)
        full = deterministic_empowerment(m, 4, 3)
        count = round(2**full)
        res = impoverished_empowerment(m, 4, 3, count, 1)
        assert res.bits == pytest.approx(full, abs=1e-6)
        assert len(res.sequences) == count

    def test_budget_two_extremes(self):
        m = line_world(9)
        res = impoverished_empowerment(m, 4, 3, 2, 1)
        # any pair of distinct endpoints gives 1 bit in a deterministic world;
        # ties go to the earliest sequence after the all-left start
        assert res.sequences == ((0, 0, 0), (0, 0, 1))
        assert res.endpoints[0] != res.endpoints[1]
        assert res.bits == pytest.approx(1.0, abs=1e-8)
        # with noise the extremes are strictly best
        t = np.zeros((9, 3, 9))
        for c in range(9):
            for a, mv in enumerate((-1, 1, 0)):
                tgt = min(max(c + mv, 0), 8)
                t[c, a, tgt] += 0.8
                for other in (-1, 1, 0):
                    if other != mv:
                        t[c, a, min(max(c + other, 0), 8)] += 0.1
        noisy = TransitionModel.from_dense(t)
        res = impoverished_empowerment(noisy, 4, 3, 2, 1, TIGHT)
        ch = sequence_channel(noisy, 4, 3)
        pair_best = max(
            (blahut_arimoto(ch[[i, j]][:, ch[[i, j]].sum(0) > 0]).capacity_bits, i, j)
            for i in range(27) for j in range(i + 1, 27)
        )
        assert res.bits == pytest.approx(pair_best[0], abs=1e-6)
        assert sorted(res.endpoints) == [1, 7]

    def test_clamped_flag(self):
        m = line_world(3)
        res = impoverished_empowerment(m, 1, 1, 10, 1)
        assert res.clamped
        assert len(res.sequences) == 3

    def test_budget_too_small(self):
        with pytest.raises(ValidationError):
            impoverished_empowerment(line_world(3), 1, 1, 1)

    def test_multi_stage_skeleton(self):
        m = line_world(15)
        res = impoverished_empowerment(m, 7, 2, 4, 3)
        assert len(res.stage_bits) == 3
        assert all(len(s) == 6 for s in res.sequences)
        assert res.bits <= deterministic_empowerment(m, 7, 6) + 1e-9

    @settings(max_examples=15)
    @given(st.integers(0, 2**32 - 1), st.integers(2, 6), st.integers(1, 2))
    def test_bound(self, seed, budget, segments):
        rng = np.random.default_rng(seed)
        m = random_model(rng, 6, 3, 4, support=2)
        res = impoverished_empowerment(m, 0, 2, budget, segments, TIGHT)
        full = state_empowerment(m, 0, 2 * segments, TIGHT)
        assert res.bits <= full + 1e-6


# -- expected empowerment and greedy steps ----------------------------------------


class TestGreedy:
    def setup_method(self):
        # 0 -> 1 (dead end, E=0) via action 0; 0 -> 2 (open, two exits) via action 1
        nxt = [[1, 2], [1, 1], [3, 4], [3, 3], [4, 4]]
        self.m = TransitionModel.from_deterministic(nxt)

    def test_deterministic_step(self):
        assert expected_empowerment(self.m, 0, 1, 1) == pytest.approx(state_empowerment(self.m, 2, 1))

    def test_dead_state(self):
        assert expected_empowerment(self.m, 0, 0, 1) == 0.0
        assert greedy_policy_step(self.m, 0, 1) == 1

    def test_uniform_mixture(self):
        # successors with 1 bit and 3 bits
        t = np.zeros((12, 8, 12))
        t[0, :, 1] = 0.5
        t[0, :, 2] = 0.5
        for a in range(8):
            t[1, a, 3 + a % 2] = 1
            t[2, a, 3 + a] = 1
        for s in range(3, 12):
            t[s, :, s] = 1
        m = TransitionModel.from_dense(t)
        assert state_empowerment(m, 1, 1) == pytest.approx(1.0, abs=1e-8)
        assert state_empowerment(m, 2, 1) == pytest.approx(3.0, abs=1e-8)
        assert expected_empowerment(m, 0, 0, 1) == pytest.approx(2.0, abs=1e-8)

    def test_tie_goes_to_action_zero(self):
        m = TransitionModel.from_deterministic([[1, 1, 1], [1, 1, 1]])
        assert greedy_policy_step(m, 0, 2) == 0

    def test_invalid_action(self):
        with pytest.raises(ValidationError):
            expected_empowerment(self.m, 0, 5, 1)

    def test_cache_thread_safe(self):
        m = random_model(np.random.default_rng(2), 10, 3, 4)
        calc = EmpowermentCalculator(m, 2)
        with ThreadPoolExecutor(4) as pool:
            vals = list(pool.map(calc.value, list(range(10)) * 3))
        serial = [state_empowerment(m, r, 2) for r in range(10)]
        assert vals == serial * 3


# -- serialization ----------------------------------------------------------------


def test_model_json_roundtrip(tmp_path):
    m = random_model(np.random.default_rng(9), 4, 2, 3)
    m.save_json(tmp_path / "m.json")
    back = TransitionModel.load_json(tmp_path / "m.json")
    assert np.allclose(back.dense(), m.dense())
    assert np.array_equal(back.sensor, m.sensor)
    for r in range(4):
        assert state_empowerment(back, r, 2) == state_empowerment(m, r, 2)


def test_model_validation():
    with pytest.raises(ValidationError, match="sums to"):
        TransitionModel([[[0, 1]]], [[[0.5, 0.4]]])
    with pytest.raises(ValidationError):
        TransitionModel([[[3]]], [[[1.0]]])
    with pytest.raises(ValidationError):
        TransitionModel.from_deterministic([[0]], sensor=[0, 1])
    with pytest.raises(ValidationError):
        TransitionModel.from_dict({"transitions": "nope"})


def test_empowerment_map_exports(tmp_path):
    m = line_world(5)
    emap = state_empowerment_map(m, 2)
    assert emap.method == "deterministic"
    emap.write_csv(tmp_path / "m.csv")
    lines = (tmp_path / "m.csv").read_text().splitlines()
    assert lines[0] == "state,empowerment_bits"
    assert len(lines) == 6
    emap.write_json(tmp_path / "m.json")
    import json
    doc = json.loads((tmp_path / "m.json").read_text())
    assert doc["horizon"] == 2 and len(doc["values"]) == 5
    assert all(v >= 0 for v in emap.values)
