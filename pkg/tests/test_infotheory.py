import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from empowerment.infotheory import (
    ValidationError,
    as_channel,
    blahut_arimoto,
    conditional_entropy,
    entropy,
    load_channel_csv,
    mutual_information,
    save_channel_csv,
)
from oracles import bsc_capacity, grid_capacity, h2, mi_bits


def bsc(p):
    return np.array([[1 - p, p], [p, 1 - p]])


# -- oracle values, computed before the implementation is consulted ---------

H_011 = h2(0.11)  # 0.4999162...
C_BSC_011 = bsc_capacity(0.11)  # 0.5000837...


def test_oracle_constants_are_sane():
    assert H_011 == pytest.approx(-0.11 * math.log2(0.11) - 0.89 * math.log2(0.89), abs=1e-15)
    assert C_BSC_011 == pytest.approx(1 - H_011, abs=1e-15)
    assert abs(C_BSC_011 - 0.50008) < 1e-5


class TestEntropy:
    def test_uniform_pair(self):
        assert entropy([0.5, 0.5]) == 1.0

    def test_deterministic(self):
        assert entropy([1.0, 0.0]) == 0.0

    def test_binary(self):
        assert entropy([0.11, 0.89]) == pytest.approx(H_011, abs=1e-12)

    @pytest.mark.parametrize("bad", [[0.5, 0.6], [-0.1, 1.1], [0.3, 0.3]])
    def test_rejects_invalid(self, bad):
        with pytest.raises(ValidationError):
            entropy(bad)

    def test_tolerance_1e9(self):
        entropy([0.5, 0.5 + 5e-10])
        with pytest.raises(ValidationError):
            entropy([0.5, 0.5 + 5e-9])

    @given(arrays(np.float64, st.integers(1, 8), elements=st.floats(0, 1)))
    def test_range(self, raw):
        if raw.sum() <= 0:
            return
        p = raw / raw.sum()
        h = entropy(p)
        assert -1e-12 <= h <= math.log2(p.size) + 1e-9


class TestConditionalEntropy:
    def test_identity(self):
        assert conditional_entropy([0.5, 0.5], np.eye(2)) == 0.0

    def test_uniform_rows(self):
        assert conditional_entropy([0.5, 0.5], [[0.5, 0.5], [0.5, 0.5]]) == pytest.approx(1.0)

    def test_mixed(self):
        assert conditional_entropy([0.25, 0.75], [[1, 0], [0.5, 0.5]]) == pytest.approx(0.75)

    def test_dimension_mismatch(self):
        with pytest.raises(ValidationError):
            conditional_entropy([1.0], np.eye(2))


class TestMutualInformation:
    @pytest.mark.parametrize("n", [1, 2, 3, 5, 8])
    def test_identity(self, n):
        assert mutual_information(np.full(n, 1 / n), np.eye(n)) == pytest.approx(math.log2(n), abs=1e-12)

    def test_constant_channel(self):
        w = np.tile([0.2, 0.3, 0.5], (3, 1))
        assert mutual_information([0.1, 0.6, 0.3], w) == 0.0

    def test_bsc(self):
        assert mutual_information([0.5, 0.5], bsc(0.11)) == pytest.approx(C_BSC_011, abs=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(ValidationError):
            mutual_information([0.5, 0.5], np.eye(3))

    @given(st.integers(1, 4), st.integers(1, 4), st.integers(0, 2**32 - 1))
    def test_symmetry_via_joint(self, n_in, n_out, seed):
        rng = np.random.default_rng(seed)
        w = rng.dirichlet(np.ones(n_out) * 0.7, size=n_in)
        p = rng.dirichlet(np.ones(n_in))
        joint = p[:, None] * w
        q = joint.sum(axis=0)
        post = np.divide(joint, q, out=np.zeros_like(joint), where=q > 0)
        # H(X) - H(X|Y)
        hxy = -sum(q[j] * sum(post[i, j] * math.log2(post[i, j]) for i in range(n_in) if post[i, j] > 0)
                   for j in range(n_out))
        expected = entropy(p) - hxy
        assert mutual_information(p, w) == pytest.approx(max(expected, 0.0), abs=1e-10)
        assert mutual_information(p, w) == pytest.approx(max(mi_bits(p, w), 0.0), abs=1e-10)


class TestBlahutArimoto:
    def test_identity4(self):
        res = blahut_arimoto(np.eye(4))
        assert res.capacity_bits == pytest.approx(2.0, abs=1e-8)
        assert np.allclose(res.optimal_input, 0.25)
        assert res.converged

    def test_bsc(self):
        assert blahut_arimoto(bsc(0.11)).capacity_bits == pytest.approx(C_BSC_011, abs=1e-7)

    def test_duplicate_rows(self):
        w = np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
        oracle = grid_capacity(w, 0.001)
        assert oracle == pytest.approx(1.0, abs=1e-9)
        assert blahut_arimoto(w).capacity_bits == pytest.approx(1.0, abs=1e-7)

    def test_not_converged_flag(self):
        w = np.array([[0.6, 0.3, 0.1], [0.1, 0.6, 0.3], [0.2, 0.2, 0.6]])
        res = blahut_arimoto(w, epsilon=1e-300, max_iter=3)
        assert not res.converged and res.iterations == 3

    def test_history_monotone(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            w = rng.dirichlet(np.ones(5) * 0.5, size=4)
            hist = np.asarray(blahut_arimoto(w, epsilon=1e-12).history)
            assert np.all(np.diff(hist) >= -1e-12)

    def test_rejects_bad_parameters(self):
        with pytest.raises(ValidationError):
            blahut_arimoto(np.eye(2), epsilon=0)
        with pytest.raises(ValidationError):
            blahut_arimoto(np.eye(2), max_iter=0)
        with pytest.raises(ValidationError):
            blahut_arimoto([[0.5, 0.4]])

    @given(st.integers(1, 5), st.integers(1, 5), st.integers(0, 2**32 - 1))
    def test_bounds(self, n_in, n_out, seed):
        w = np.random.default_rng(seed).dirichlet(np.ones(n_out) * 0.4, size=n_in)
        res = blahut_arimoto(w)
        assert 0 <= res.capacity_bits <= math.log2(min(n_in, n_out)) + 1e-9
        assert res.optimal_input.sum() == pytest.approx(1.0, abs=1e-9)
        # the returned input actually achieves the reported value
        assert mutual_information(res.optimal_input, w) == pytest.approx(res.capacity_bits, abs=1e-6)

    @given(st.integers(0, 2**32 - 1))
    def test_matches_grid_oracle_2x3(self, seed):
        w = np.random.default_rng(seed).dirichlet(np.ones(3) * 0.6, size=2)
        assert blahut_arimoto(w, epsilon=1e-12).capacity_bits == pytest.approx(grid_capacity(w, 0.0005), abs=1e-4)


class TestChannelCsv:
    def test_roundtrip(self, tmp_path):
        w = np.array([[0.89, 0.11], [0.11, 0.89]])
        save_channel_csv(tmp_path / "c.csv", w)
        assert np.array_equal(load_channel_csv(tmp_path / "c.csv"), w)

    def test_header_and_comments(self, tmp_path):
        p = tmp_path / "c.csv"
        p.write_text("# a channel\nout0,out1\n1,0\n0.5,0.5\n")
        assert load_channel_csv(p).shape == (2, 2)

    def test_bad_row_reports_line(self, tmp_path):
        p = tmp_path / "c.csv"
        p.write_text("1,0\n0.5,0.6\n")
        with pytest.raises(ValidationError):
            load_channel_csv(p)
        p.write_text("1,0\n0.5,x\n")
        with pytest.raises(ValidationError, match=":2:"):
            load_channel_csv(p)

    def test_ragged(self, tmp_path):
        p = tmp_path / "c.csv"
        p.write_text("1,0\n1\n")
        with pytest.raises(ValidationError):
            load_channel_csv(p)

    def test_as_channel_rejects_empty(self):
        with pytest.raises(ValidationError):
            as_channel(np.zeros((0, 2)))
