import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from kpca_attn import rpc
from kpca_attn.attention import symmetric_attention
from kpca_attn.bench import SynthSpec, synth_lowrank_sparse
from kpca_attn.errors import DegenerateScalingError, ShapeError
from kpca_attn.matrixcore import format_matrix_csv, parse_matrix_csv
from kpca_attn.rpc import PapConfig, PapVariant, PcpUpdate

finite = st.floats(-20, 20, allow_nan=False, allow_infinity=False)
shape = st.tuples(st.integers(1, 6), st.integers(1, 6))


class TestShrink:
    def test_example(self):
        np.testing.assert_array_equal(rpc.shrink([[3.0, -2.0, 1.0]], 1.5), [[1.5, -0.5, 0.0]])

    def test_zero_threshold_is_identity(self):
        x = np.random.default_rng(0).standard_normal((3, 4))
        np.testing.assert_array_equal(rpc.shrink(x, 0.0), x)

    def test_negative_threshold(self):
        with pytest.raises(ValueError):
            rpc.shrink([[1.0]], -0.1)

    @given(shape.flatmap(lambda s: st.tuples(arrays(np.float64, s, elements=finite),
                                             arrays(np.float64, s, elements=finite))),
           st.floats(0, 10))
    def test_nonexpansive_and_bounded(self, pair, tau):
        x, y = pair
        sx, sy = rpc.shrink(x, tau), rpc.shrink(y, tau)
        assert np.linalg.norm(sx - sy) <= np.linalg.norm(x - y) + 1e-12
        assert np.abs(sx).max() <= max(0.0, np.abs(x).max() - tau) + 1e-12


class TestSvt:
    def test_diagonal(self):
        np.testing.assert_allclose(rpc.svt(np.diag([3.0, 0.5]), 1.0), np.diag([2.0, 0.0]), atol=1e-15)

    def test_large_threshold_is_zero(self):
        x = np.random.default_rng(1).standard_normal((4, 3))
        np.testing.assert_array_equal(rpc.svt(x, np.linalg.norm(x, 2) + 1e-9), np.zeros((4, 3)))

    @pytest.mark.parametrize("seed", range(20))
    def test_singular_values_shrink_exactly(self, seed):
        rng = np.random.default_rng(seed)
        r = int(rng.integers(1, 4))
        x = rng.standard_normal((6, r)) @ rng.standard_normal((r, 5))
        tau = float(rng.uniform(0, 3))
        before = np.linalg.svd(x, compute_uv=False)
        after = np.linalg.svd(rpc.svt(x, tau), compute_uv=False)
        np.testing.assert_allclose(after, np.maximum(before - tau, 0.0), atol=1e-9)
        assert np.linalg.matrix_rank(rpc.svt(x, tau), tol=1e-9) <= r


class TestDefaultMu:
    def test_all_ones(self):
        assert rpc.default_mu(np.ones((2, 3))) == 0.25

    def test_homogeneity(self):
        K = np.random.default_rng(2).standard_normal((5, 4))
        assert rpc.default_mu(3.0 * K) == pytest.approx(rpc.default_mu(K) / 3.0, rel=1e-14)

    def test_direct_formula(self):
        K = np.random.default_rng(3).standard_normal((7, 3))
        assert rpc.default_mu(K) == pytest.approx(21 / (4 * np.abs(K).sum()), rel=1e-15)

    def test_zero_matrix(self):
        with pytest.raises(DegenerateScalingError):
            rpc.default_mu(np.zeros((2, 2)))


class TestAdmmPcp:
    def test_zero_matrix_one_iteration(self):
        state = rpc.admm_pcp(np.zeros((3, 4)))
        assert state.converged and state.iterations == 1
        np.testing.assert_array_equal(state.L, 0.0)
        np.testing.assert_array_equal(state.S, 0.0)

    def test_rank_one_clean(self):
        rng = np.random.default_rng(4)
        M = np.outer(rng.standard_normal(20), rng.standard_normal(15))
        state = rpc.admm_pcp(M, lam=1 / math.sqrt(20))
        assert state.converged
        assert np.linalg.norm(state.L - M) / np.linalg.norm(M) <= 1e-3

    @pytest.mark.parametrize("seed", range(3))
    def test_recovers_low_rank_plus_sparse(self, seed):
        L0, S0, M = synth_lowrank_sparse(SynthSpec(50, 50, 2, 0.05, 10.0, seed))
        state = rpc.admm_pcp(M, max_iter=500, record_trace=True)
        assert state.converged
        assert np.linalg.norm(state.L - L0) / np.linalg.norm(L0) <= 1e-3
        np.testing.assert_array_equal(np.abs(state.S) > 1e-6, S0 != 0)
        assert all(math.isfinite(r.rel_residual) for r in state.trace)
        assert state.rel_residual <= 1e-7

    def test_final_identity(self):
        _, _, M = synth_lowrank_sparse(SynthSpec(10, 8, 1, 0.1, 5.0, 0))
        s = rpc.admm_pcp(M, max_iter=5)
        R = M - s.L - s.S
        assert s.rel_residual == pytest.approx(np.linalg.norm(R) / max(1.0, np.linalg.norm(M)))

    def test_listing_update_does_not_recover(self):
        L0, _, M = synth_lowrank_sparse(SynthSpec(50, 50, 2, 0.05, 10.0, 0))
        state = rpc.admm_pcp(M, max_iter=500, update=PcpUpdate.LISTING)
        assert not state.converged
        err = np.linalg.norm(state.L - L0) / np.linalg.norm(L0)
        assert not err <= 1e-3

    def test_bad_parameters(self):
        with pytest.raises(ValueError):
            rpc.admm_pcp(np.eye(2), lam=0.0)
        with pytest.raises(ValueError):
            rpc.admm_pcp(np.eye(2), max_iter=0)

    def test_trace_csv(self):
        state = rpc.admm_pcp(np.eye(3), max_iter=3, record_trace=True)
        text = rpc.format_trace_csv(state.trace, comment="x")
        lines = text.splitlines()
        assert lines[0] == "# x"
        assert lines[1] == "iteration,rel_residual,l1_S,nuclear_L"
        assert len(lines) == 2 + len(state.trace)


class TestPap:
    def rand_keys(self, seed, n=6, d=3):
        return np.random.default_rng(seed).standard_normal((n, d))

    @pytest.mark.parametrize("seed", range(5))
    def test_degenerates_to_symmetric_attention(self, seed):
        K = self.rand_keys(seed)
        mu = rpc.default_mu(K)
        lam = 1.01 * mu * np.abs(K).max()
        res = rpc.pap(K, PapConfig(n_iter=1, lam=lam))
        H, _ = symmetric_attention(K, K)
        assert np.abs(res.L - H).max() <= 1e-12
        np.testing.assert_array_equal(rpc.rpc_attention(K, PapConfig(n_iter=1, lam=1e9)),
                                      symmetric_attention(K, K)[0])

    def test_zero_keys(self):
        res = rpc.pap(np.zeros((3, 2)))
        np.testing.assert_array_equal(res.L, 0.0)
        assert res.trace == () and math.isnan(res.mu)

    def test_zero_keys_explicit_mu_iterates(self):
        res = rpc.pap(np.zeros((3, 2)), PapConfig(mu=1.0))
        np.testing.assert_array_equal(res.L, 0.0)
        assert len(res.trace) == 4

    def test_first_layer_configuration(self):
        res = rpc.pap(self.rand_keys(0, 16, 8), PapConfig(n_iter=4, lam=4.0))
        assert res.L.shape == (16, 8)
        assert [r.iteration for r in res.trace] == [1, 2, 3, 4]
        assert all(math.isfinite(r.rel_residual) for r in res.trace)

    def test_deterministic(self):
        K = self.rand_keys(1, 8, 4)
        a = rpc.rpc_attention(K, PapConfig(n_iter=6))
        b = rpc.rpc_attention(K.copy(), PapConfig(n_iter=6))
        assert a.tobytes() == b.tobytes()

    def test_mu_echo_and_manual_mu(self):
        K = self.rand_keys(2)
        assert rpc.pap(K).mu == rpc.default_mu(K)
        assert rpc.pap(K, PapConfig(mu=0.5)).mu == 0.5

    def test_asymmetric_with_q_equal_k_matches_symmetric(self):
        K = self.rand_keys(3)
        sym = rpc.rpc_attention(K, PapConfig(n_iter=1, lam=1e9))
        asym = rpc.rpc_attention(K, PapConfig(n_iter=1, lam=1e9, variant=PapVariant.ASYMMETRIC), Q=K)
        np.testing.assert_allclose(asym, sym, atol=1e-14)

    def test_asymmetric_uses_queries(self):
        K, Q = self.rand_keys(4), self.rand_keys(5)
        cfg = PapConfig(n_iter=1, lam=1e9, variant="asymmetric")
        A = np.exp(Q @ K.T / math.sqrt(3))
        A /= A.sum(axis=1, keepdims=True)
        np.testing.assert_allclose(rpc.rpc_attention(K, cfg, Q), A @ K, atol=1e-14)

    def test_asymmetric_shape_errors(self):
        cfg = PapConfig(variant="asymmetric")
        K = self.rand_keys(6)
        with pytest.raises(ValueError):
            rpc.pap(K, cfg)
        with pytest.raises(ShapeError):
            rpc.pap(K, cfg, Q=np.ones((6, 2)))
        with pytest.raises(ShapeError):
            rpc.pap(K, cfg, Q=np.ones((2, 3)))

    @pytest.mark.parametrize("kw", [{"n_iter": 0}, {"lam": 0.0}, {"mu": -1.0}, {"mu": "fast"}, {"scale": 0.0}])
    def test_config_validation(self, kw):
        with pytest.raises(ValueError):
            PapConfig(**kw)

    def test_beats_softmax_on_corrupted_keys(self):
        # verbatim PAP at n_iter = 6, lam = 4, auto mu on a seeded corrupted instance
        L0, _, K = synth_lowrank_sparse(SynthSpec(32, 16, 2, 0.05, 10.0, 0))
        ref, _ = symmetric_attention(L0, L0)
        soft, _ = symmetric_attention(K, K)
        L = rpc.rpc_attention(K, PapConfig(n_iter=6, lam=4.0))
        dev_rpc, dev_softmax = float(np.linalg.norm(L - ref)), float(np.linalg.norm(soft - ref))
        assert dev_rpc < dev_softmax


def test_trace_csv_round_trips_through_matrix_reader_shape():
    trace = rpc.pap(np.random.default_rng(0).standard_normal((4, 2))).trace
    body = rpc.format_trace_csv(trace).splitlines()[1:]
    m = parse_matrix_csv(f"{len(body)},4\n" + "\n".join(body) + "\n")
    np.testing.assert_array_equal(m[:, 0], [1, 2, 3, 4])
    assert format_matrix_csv(m)
