import math

import numpy as np
import pytest

from kpca_attn import attention as att
from kpca_attn import kpca
from kpca_attn.errors import InsufficientEigenpairsError, ShapeError
from kpca_attn.kpca import KernelKind, KernelSpec
from kpca_attn.verify import finite_difference_vjp, random_attention_instance


def rand(seed, *shape):
    return np.random.default_rng(seed).standard_normal(shape)


class TestBatch:
    def test_default_scale(self):
        assert att.AttentionBatch(rand(0, 2, 4), rand(1, 3, 4), rand(2, 3, 1)).scale == 0.5

    @pytest.mark.parametrize("shapes", [((2, 3), (3, 4), (3, 1)), ((2, 3), (3, 3), (2, 1))])
    def test_shape_errors(self, shapes):
        with pytest.raises(ShapeError):
            att.AttentionBatch(*(np.ones(s) for s in shapes))

    def test_scale_must_be_positive(self):
        with pytest.raises(ValueError):
            att.AttentionBatch(np.ones((1, 2)), np.ones((1, 2)), np.ones((1, 1)), scale=-1.0)


class TestLinearProjections:
    def test_identity_weights(self):
        X = rand(0, 4, 3)
        b = att.linear_projections(X, np.eye(3), np.eye(3), np.eye(3))
        for m in (b.Q, b.K, b.V):
            np.testing.assert_array_equal(m, X)

    def test_one_hot_rows_select(self):
        W = rand(1, 2, 3)
        X = np.eye(3)[[2, 0]]
        b = att.linear_projections(X, W, W, W)
        np.testing.assert_array_equal(b.Q, W.T[[2, 0]])

    def test_random_matches_loop(self):
        X, WQ, WK, WV = rand(2, 5, 3), rand(3, 2, 3), rand(4, 2, 3), rand(5, 4, 3)
        b = att.linear_projections(X, WQ, WK, WV)
        loop = np.array([[sum(X[i, k] * WV[j, k] for k in range(3)) for j in range(4)] for i in range(5)])
        np.testing.assert_allclose(b.V, loop, atol=1e-14)

    def test_mismatch(self):
        with pytest.raises(ShapeError):
            att.linear_projections(np.ones((2, 3)), np.ones((2, 3)), np.ones((4, 3)), np.ones((1, 3)))


class TestSoftmaxAttention:
    def test_single_key(self):
        V = np.array([[2.0, -1.0]])
        H, _ = att.softmax_attention(att.AttentionBatch(rand(0, 3, 2), rand(1, 1, 2), V))
        np.testing.assert_allclose(H, np.repeat(V, 3, axis=0), atol=1e-15)

    def test_equal_logits_average_values(self):
        K = np.array([[1.0, 0.0], [1.0, 0.0], [1.0, 0.0]])
        Q = np.array([[0.0, 2.0]])
        V = rand(2, 3, 2)
        H, _ = att.softmax_attention(att.AttentionBatch(Q, K, V))
        np.testing.assert_allclose(H[0], V.mean(axis=0), atol=1e-15)

    def test_hand_softmax(self):
        # scale 1, q.k1 = 0, q.k2 = ln 3
        Q, K = np.array([[1.0]]), np.array([[0.0], [math.log(3)]])
        V = np.array([[4.0, 0.0], [0.0, 8.0]])
        H, A = att.softmax_attention(att.AttentionBatch(Q, K, V, scale=1.0))
        np.testing.assert_allclose(A, [[0.25, 0.75]], atol=1e-15)
        np.testing.assert_allclose(H, [[1.0, 6.0]], atol=1e-14)

    @pytest.mark.parametrize("seed", range(20))
    def test_rows_in_simplex(self, seed):
        rng = np.random.default_rng(seed)
        Q, K = 5 * rng.standard_normal((6, 3)), 5 * rng.standard_normal((7, 3))
        _, A = att.softmax_attention(att.AttentionBatch(Q, K, np.ones((7, 1))))
        assert A.min() >= 0
        assert np.abs(A.sum(axis=1) - 1).max() <= 1e-12


class TestSymmetricAttention:
    def test_zero_keys(self):
        V = rand(0, 4, 2)
        H, A = att.symmetric_attention(np.zeros((4, 3)), V)
        np.testing.assert_array_equal(A, np.full((4, 4), 0.25))
        np.testing.assert_allclose(H, np.tile(V.mean(axis=0), (4, 1)), atol=1e-15)

    def test_row_normaliser_is_g(self):
        K = rand(1, 5, 3)
        spec = KernelSpec.softmax(3)
        _, A = att.symmetric_attention(K, np.ones((5, 1)))
        k = np.array([[kpca.kernel_eval(x, y, spec) for y in K] for x in K])
        g = np.array([kpca.g_scaling(x, K, spec) for x in K])
        np.testing.assert_allclose(A * g[:, None], k, rtol=1e-13)

    def test_same_as_general_form(self):
        K, V = rand(2, 6, 3), rand(3, 6, 2)
        H1, A1 = att.symmetric_attention(K, V)
        H2, A2 = att.softmax_attention(att.AttentionBatch(K, K, V))
        np.testing.assert_array_equal(H1, H2)
        np.testing.assert_array_equal(A1, A2)

    @pytest.mark.parametrize("seed", range(10))
    def test_translation_orthogonal_to_keys(self, seed):
        rng = np.random.default_rng(seed)
        K = np.hstack([rng.standard_normal((5, 3)), np.zeros((5, 1))])
        shift = np.array([0.0, 0.0, 0.0, rng.uniform(-3, 3)])
        _, A = att.symmetric_attention(K, np.ones((5, 1)), scale=0.5)
        _, B = att.softmax_attention(att.AttentionBatch(K, K + shift, np.ones((5, 1)), scale=0.5))
        assert np.abs(A - B).max() <= 1e-10


def test_multi_head_concatenates():
    X = rand(0, 4, 3)
    heads = [(rand(i, 2, 3), rand(i + 10, 2, 3), rand(i + 20, i + 1, 3)) for i in range(3)]
    out = att.multi_head_attention(X, heads)
    assert out.shape == (4, 1 + 2 + 3)
    H1, _ = att.softmax_attention(att.linear_projections(X, *heads[1]))
    np.testing.assert_array_equal(out[:, 1:3], H1)


class TestScaledAttention:
    def test_equal_g_subtracts_column_means(self):
        K = np.eye(3)
        Q, V = rand(0, 2, 3), rand(1, 3, 2)
        S = att.scaling_matrix(K)
        np.testing.assert_allclose(S, np.full((3, 3), 1 / 3), atol=1e-15)
        H = att.scaled_attention(Q, K, V)
        H_plain, _ = att.softmax_attention(att.AttentionBatch(Q, K, V - V.mean(axis=0)))
        np.testing.assert_allclose(H, H_plain, atol=1e-14)

    @pytest.mark.parametrize("fn", [att.scaled_attention, att.scaled_attention_ratio_form])
    def test_single_key_is_zero(self, fn):
        H = fn(rand(0, 3, 2), rand(1, 1, 2), rand(2, 1, 4))
        np.testing.assert_allclose(H, 0.0, atol=1e-15)

    def test_identical_keys_ratio_form(self):
        K = np.tile(rand(3, 1, 2), (4, 1))
        Q, V = rand(4, 2, 2), rand(5, 4, 3)
        H = att.scaled_attention_ratio_form(Q, K, V)
        # every key is the same, so A is uniform and (I - S)V has zero column means
        np.testing.assert_allclose(H, 0.0, atol=1e-14)

    @pytest.mark.parametrize("seed", range(25))
    def test_forms_agree(self, seed):
        rng = np.random.default_rng(seed)
        n, d = int(rng.integers(1, 10)), int(rng.integers(1, 5))
        Q, K, V = rng.standard_normal((3, d)), rng.standard_normal((n, d)), rng.standard_normal((n, 2))
        np.testing.assert_allclose(att.scaled_attention(Q, K, V),
                                   att.scaled_attention_ratio_form(Q, K, V), atol=1e-10, rtol=0)

    @pytest.mark.parametrize("seed", range(10))
    def test_alternate_values_match_exact_attention(self, seed):
        rng = np.random.default_rng(seed)
        n, d = int(rng.integers(3, 9)), 3
        keys, queries = rng.standard_normal((n, d)), rng.standard_normal((4, d))
        spec = KernelSpec.softmax(d)
        b = kpca.gram(keys, spec)
        basis = kpca.solve_coefficients(b)
        H = att.scaled_attention(queries, keys, kpca.build_raw_values(basis, b))
        np.testing.assert_allclose(H, att.kpca_exact_attention(queries, keys, spec), atol=1e-10, rtol=0)

    def test_custom_s_shape_checked(self):
        with pytest.raises(ShapeError):
            att.scaled_attention(np.ones((1, 2)), np.ones((3, 2)), np.ones((3, 1)), S=np.eye(2))


class TestKpcaExactAttention:
    def test_matches_projection_many_instances(self):
        worst = 0.0
        for seed in range(200):
            rng = np.random.default_rng(seed)
            n, d = int(rng.integers(2, 17)), int(rng.integers(1, 6))
            keys, queries = rng.standard_normal((n, d)), rng.standard_normal((int(rng.integers(1, 6)), d))
            spec = KernelSpec.softmax(d)
            b = kpca.gram(keys, spec)
            basis = kpca.solve_coefficients(b)
            H = att.kpca_exact_attention(queries, keys, spec, basis.num_components)
            worst = max(worst, np.abs(H - kpca.project_many(queries, keys, basis, b, spec)).max())
        assert worst <= 1e-8

    def test_centroid_like_query(self):
        keys = np.eye(4)
        H = att.kpca_exact_attention(np.zeros((1, 4)), keys, KernelSpec.softmax(4))
        np.testing.assert_allclose(H, 0.0, atol=1e-14)

    def test_identity_keys_closed_form(self):
        s = 1 / math.sqrt(2)
        e = math.exp(s)
        g = e + 1
        c = (e - 1) / (2 * g * g)
        q = np.array([[0.3, -0.7]])
        # h = sum_j a_j k_phi(q, k_j) with a = [1, -1] / (2 sqrt c)
        kq = np.exp(s * q[0])
        want = (kq[0] - kq[1]) / (kq.sum() * g) / (2 * math.sqrt(c))
        H = att.kpca_exact_attention(q, np.eye(2), KernelSpec(KernelKind.SCALED_EXP_DOT, s), 1)
        assert H[0, 0] == pytest.approx(want, rel=1e-12)

    def test_rejects_linear_kernel(self):
        with pytest.raises(ValueError):
            att.kpca_exact_attention(np.ones((1, 2)), np.eye(2), KernelSpec.linear())

    def test_too_many_components(self):
        with pytest.raises(InsufficientEigenpairsError):
            att.kpca_exact_attention(np.ones((1, 2)), np.eye(2), KernelSpec.softmax(2), 2)


class TestVjp:
    def test_zero_upstream(self):
        b = att.AttentionBatch(rand(0, 3, 2), rand(1, 4, 2), rand(2, 4, 3))
        for grad in att.softmax_attention_vjp(b, np.zeros((3, 3))):
            np.testing.assert_array_equal(grad, 0.0)

    def test_single_key(self):
        b = att.AttentionBatch(rand(0, 3, 2), rand(1, 1, 2), rand(2, 1, 3))
        U = rand(3, 3, 3)
        dQ, dK, dV = att.softmax_attention_vjp(b, U)
        np.testing.assert_allclose(dV, U.sum(axis=0, keepdims=True), atol=1e-14)
        np.testing.assert_allclose(dQ, 0.0, atol=1e-15)
        np.testing.assert_allclose(dK, 0.0, atol=1e-15)

    def test_shape_mismatch(self):
        b = att.AttentionBatch(rand(0, 3, 2), rand(1, 4, 2), rand(2, 4, 3))
        with pytest.raises(ShapeError):
            att.softmax_attention_vjp(b, np.ones((3, 2)))

    @pytest.mark.parametrize("seed", range(100))
    def test_against_finite_differences(self, seed):
        b, U = random_attention_instance(seed)
        numeric = finite_difference_vjp(b, U, 1e-5)
        for a, n in zip(att.softmax_attention_vjp(b, U), numeric):
            assert np.abs(a - n).max() <= 1e-5 * max(1.0, np.abs(n).max())
