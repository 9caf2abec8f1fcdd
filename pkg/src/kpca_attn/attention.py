"""Softmax attention and the variants that fall out of the kernel PCA view."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kpca
from .errors import ShapeError
from .matrixcore import as_mat, row_softmax


def default_scale(dim):
    return 1.0 / math.sqrt(dim)


@dataclass(frozen=True)
class AttentionBatch:
    """Queries (N_q x D), keys (N x D), values (N x D_v) and the logit scale.

    ``scale=None`` resolves to ``1/sqrt(D)``.
    """

    Q: np.ndarray
    K: np.ndarray
    V: np.ndarray
    scale: float | None = None

    def __post_init__(self):
        Q = as_mat(self.Q, "Q")
        K = as_mat(self.K, "K")
        V = as_mat(self.V, "V")
        if Q.shape[1] != K.shape[1]:
            raise ShapeError(f"Q has {Q.shape[1]} columns but K has {K.shape[1]}")
        if K.shape[0] != V.shape[0]:
            raise ShapeError(f"K has {K.shape[0]} rows but V has {V.shape[0]}")
        scale = default_scale(K.shape[1]) if self.scale is None else float(self.scale)
        if not (math.isfinite(scale) and scale > 0):
            raise ValueError(f"scale must be positive, got {scale}")
        for name, value in (("Q", Q), ("K", K), ("V", V), ("scale", scale)):
            object.__setattr__(self, name, value)


def linear_projections(X, W_Q, W_K, W_V, scale=None):
    """``Q = X W_Q^T``, ``K = X W_K^T``, ``V = X W_V^T``."""
    X = as_mat(X, "X")
    W_Q, W_K, W_V = as_mat(W_Q, "W_Q"), as_mat(W_K, "W_K"), as_mat(W_V, "W_V")
    for name, W in (("W_Q", W_Q), ("W_K", W_K), ("W_V", W_V)):
        if W.shape[1] != X.shape[1]:
            raise ShapeError(f"{name} is {W.shape[0]}x{W.shape[1]} but X has {X.shape[1]} columns")
    if W_Q.shape[0] != W_K.shape[0]:
        raise ShapeError(f"W_Q and W_K must share a row count, got {W_Q.shape[0]} and {W_K.shape[0]}")
    return AttentionBatch(X @ W_Q.T, X @ W_K.T, X @ W_V.T, scale)


def softmax_attention(batch):
    """Return ``(H, A)`` with ``A = softmax(scale Q K^T)`` row-wise and ``H = A V``."""
    A = row_softmax(batch.scale * (batch.Q @ batch.K.T))
    return A @ batch.V, A


def symmetric_attention(K, V, scale=None):
    """Softmax attention with the keys doubling as queries."""
    K = as_mat(K, "K")
    return softmax_attention(AttentionBatch(K, K, V, scale))


def multi_head_attention(X, heads, scale=None):
    """Run independent heads and concatenate their outputs column-wise.

    `heads` is a sequence of ``(W_Q, W_K, W_V)`` triples.
    """
    outs = [softmax_attention(linear_projections(X, *w, scale=scale))[0] for w in heads]
    return np.hstack(outs)


def scaling_matrix(K, scale=None):
    """``S[j, j'] = g(k_j') / (N g(k_j))`` built from the key g-values."""
    K = as_mat(K, "K")
    scale = default_scale(K.shape[1]) if scale is None else scale
    spec = kpca.KernelSpec(kpca.KernelKind.SCALED_EXP_DOT, scale)
    # ratios of g only, so work with log g to avoid overflow
    log_g = kpca._log_g(K, K, spec)
    return np.exp(log_g[None, :] - log_g[:, None]) / K.shape[0]


def scaled_attention(Q, K, V, scale=None, S=None):
    """``H = softmax(scale Q K^T) (I - S) V``.

    `S` defaults to :func:`scaling_matrix`; pass a fixed matrix to try other
    choices (e.g. a learned one).
    """
    batch = AttentionBatch(Q, K, V, scale)
    n = batch.K.shape[0]
    S = scaling_matrix(batch.K, batch.scale) if S is None else as_mat(S, "S")
    if S.shape != (n, n):
        raise ShapeError(f"S must be {n}x{n}, got {S.shape[0]}x{S.shape[1]}")
    A = row_softmax(batch.scale * (batch.Q @ batch.K.T))
    return A @ (batch.V - S @ batch.V)


def scaled_attention_ratio_form(Q, K, V, scale=None):
    """Scaled Attention with ``S = (1/N) A_sym / A_sym^T`` (elementwise ratio)."""
    batch = AttentionBatch(Q, K, V, scale)
    _, A_sym = symmetric_attention(batch.K, batch.V, batch.scale)
    S = A_sym / A_sym.T / batch.K.shape[0]
    return scaled_attention(batch.Q, batch.K, batch.V, batch.scale, S=S)


def kpca_exact_attention(queries, keys, spec, num_components=None):
    """Softmax attention whose values are the kernel PCA value vectors of `keys`.

    The output row for query ``q_i`` equals the projection of ``phi(q_i)``
    onto the top `num_components` principal axes of the keys.
    """
    if not spec.is_exp:
        raise ValueError("kpca_exact_attention needs the scaled exp-dot kernel")
    bundle = kpca.gram(keys, spec)
    basis = kpca.solve_coefficients(bundle, num_components)
    V = kpca.build_values(basis, bundle)
    H, _ = softmax_attention(AttentionBatch(queries, keys, V, spec.scale))
    return H


def softmax_attention_vjp(batch, upstream):
    """Gradients of ``<upstream, H>`` with respect to Q, K and V."""
    H, A = softmax_attention(batch)
    upstream = as_mat(upstream, "upstream")
    if upstream.shape != H.shape:
        raise ShapeError(f"upstream is {upstream.shape} but H is {H.shape}")
    dV = A.T @ upstream
    dA = upstream @ batch.V.T
    dlogits = A * (dA - np.einsum("ij,ij->i", dA, A)[:, None])
    dQ = batch.scale * (dlogits @ batch.K)
    dK = batch.scale * (dlogits.T @ batch.Q)
    return dQ, dK, dV
