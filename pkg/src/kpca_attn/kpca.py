"""Kernel PCA over a set of keys, in the normalized feature space of softmax.

With ``k(x, y) = exp(scale * x.y)`` and ``g(x) = sum_j k(x, k_j)``, the kernel
``k_phi(x, y) = k(x, y) / (g(x) g(y))`` defines a feature map ``phi`` whose
principal axes ``u_d = sum_j a_d[j] (phi(k_j) - mean phi)`` are found from the
centered Gram matrix. Projecting a query onto those axes is exactly a softmax
attention read-out with specially built value vectors (:func:`build_values`).

The :attr:`KernelKind.LINEAR_DOT` kernel ``k(x, y) = x.y`` exists so that the
feature map ``phi(x) = x / g(x)`` is explicit and finite dimensional, which
lets tests brute-force the same quantities in feature space.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import DegenerateScalingError, InsufficientEigenpairsError, ShapeError
from .matrixcore import as_mat, as_vec, sym_eig

#: g-values at or below this are rejected (only reachable with LINEAR_DOT).
G_FLOOR = 1e-300

#: Eigenpairs with ``N * lambda_d <= EIGEN_FLOOR * ||K_centered||_F`` are dropped.
EIGEN_FLOOR = 1e-10

#: ...and so are those at the roundoff level of the uncentered Gram matrix,
#: which is all that is left when centering cancels everything.
CANCELLATION_FLOOR = 1e-13


class KernelKind(enum.Enum):
    SCALED_EXP_DOT = "scaled_exp_dot"
    LINEAR_DOT = "linear_dot"


@dataclass(frozen=True)
class KernelSpec:
    """Which kernel to use. ``scale`` multiplies the dot product inside ``exp``."""

    kind: KernelKind = KernelKind.SCALED_EXP_DOT
    scale: float = 1.0

    def __post_init__(self):
        if not isinstance(self.kind, KernelKind):
            object.__setattr__(self, "kind", KernelKind(self.kind))
        if self.kind is KernelKind.LINEAR_DOT:
            object.__setattr__(self, "scale", 1.0)
        if not (math.isfinite(self.scale) and self.scale > 0):
            raise ValueError(f"kernel scale must be positive, got {self.scale}")

    @classmethod
    def softmax(cls, dim):
        """The attention kernel ``exp(x.y / sqrt(dim))``."""
        return cls(KernelKind.SCALED_EXP_DOT, 1.0 / math.sqrt(dim))

    @classmethod
    def linear(cls):
        return cls(KernelKind.LINEAR_DOT)

    @property
    def is_exp(self):
        return self.kind is KernelKind.SCALED_EXP_DOT


@dataclass(frozen=True)
class GramBundle:
    """g-values of the keys plus the uncentered and centered normalized Gram matrices."""

    g: np.ndarray
    gram: np.ndarray
    centered: np.ndarray

    @property
    def n(self):
        return self.g.shape[0]


@dataclass(frozen=True)
class EigenBasis:
    """Leading eigenpairs of the centered Gram matrix.

    ``eigenvalues[d]`` is the covariance eigenvalue ``lambda_d``, i.e. the Gram
    eigenvalue divided by N. Column ``d`` of ``coefficients`` is ``a_d``,
    scaled so that ``a_d . a_d = 1 / (N lambda_d)``; this makes the feature
    space axis ``u_d`` a unit vector.
    """

    eigenvalues: np.ndarray
    coefficients: np.ndarray

    @property
    def n(self):
        return self.coefficients.shape[0]

    @property
    def num_components(self):
        return self.coefficients.shape[1]


def kernel_eval(x, y, spec):
    x = as_vec(x, "x")
    y = as_vec(y, "y")
    if x.shape != y.shape:
        raise ShapeError(f"kernel arguments differ in length: {x.size} vs {y.size}")
    dot = float(x @ y)
    return math.exp(spec.scale * dot) if spec.is_exp else dot


def kernel_matrix(X, Y, spec):
    """``out[i, j] = k(X[i], Y[j])``."""
    X = as_mat(X, "X")
    Y = as_mat(Y, "Y")
    if X.shape[1] != Y.shape[1]:
        raise ShapeError(f"row dimensions differ: {X.shape[1]} vs {Y.shape[1]}")
    dots = X @ Y.T
    return np.exp(spec.scale * dots) if spec.is_exp else dots


def g_scaling(x, keys, spec):
    """``g(x) = sum_j k(x, k_j)``, the softmax normalizer of `x` against `keys`."""
    x = as_vec(x, "x")
    keys = as_mat(keys, "keys")
    if x.size != keys.shape[1]:
        raise ShapeError(f"x has length {x.size} but keys have {keys.shape[1]} columns")
    return float(kernel_matrix(x[None, :], keys, spec).sum())


def _log_g(X, keys, spec):
    """``log g(x)`` for every row of X (exp kernel only)."""
    return logsumexp(spec.scale * (X @ keys.T), axis=1)


def _checked_g(X, keys, spec, what):
    g = kernel_matrix(X, keys, spec).sum(axis=1)
    bad = np.flatnonzero(g <= G_FLOOR)
    if bad.size:
        raise DegenerateScalingError(
            f"g({what}[{bad[0]}]) = {g[bad[0]]:.3e} is not positive; the linear kernel "
            "needs inputs with a positive dot-product sum against the keys"
        )
    return g


def feature_kernel(X, keys, spec):
    """``out[i, j] = k_phi(X[i], k_j) = phi(X[i]) . phi(k_j)``, evaluated stably."""
    X = as_mat(X, "X")
    keys = as_mat(keys, "keys")
    if X.shape[1] != keys.shape[1]:
        raise ShapeError(f"inputs have {X.shape[1]} columns but keys have {keys.shape[1]}")
    if spec.is_exp:
        logits = spec.scale * (X @ keys.T)
        log_gx = logsumexp(logits, axis=1)
        log_gk = _log_g(keys, keys, spec)
        return np.exp(logits - log_gx[:, None] - log_gk[None, :])
    gx = _checked_g(X, keys, spec, "x")
    gk = _checked_g(keys, keys, spec, "k")
    return (X @ keys.T) / np.outer(gx, gk)


def center_gram(gram):
    """Double-center a Gram matrix: ``K - 1K - K1 + 1K1`` with ``1 = ones/N``."""
    gram = as_mat(gram, "gram")
    return (
        gram
        - gram.mean(axis=0, keepdims=True)
        - gram.mean(axis=1, keepdims=True)
        + gram.mean()
    )


def gram(keys, spec):
    """Build g-values, the normalized Gram matrix and its centered version."""
    keys = as_mat(keys, "keys")
    if spec.is_exp:
        g = np.exp(_log_g(keys, keys, spec))
    else:
        g = _checked_g(keys, keys, spec, "k")
    K = feature_kernel(keys, keys, spec)
    K = 0.5 * (K + K.T)
    return GramBundle(g=g, gram=K, centered=center_gram(K))


def _eigen_threshold(bundle):
    return max(EIGEN_FLOOR * np.linalg.norm(bundle.centered),
               CANCELLATION_FLOOR * np.linalg.norm(bundle.gram))


def usable_components(bundle):
    """Number of centered-Gram eigenvalues above the floor."""
    w, _ = sym_eig(bundle.centered)
    return int(np.count_nonzero(w > _eigen_threshold(bundle)))


def solve_coefficients(bundle, num_components=None):
    """Solve ``K_centered a_d = N lambda_d a_d`` for the top components.

    Parameters
    ----------
    bundle : GramBundle
    num_components : int, optional
        How many components to keep. Defaults to every eigenpair above the
        floor.

    Raises
    ------
    InsufficientEigenpairsError
        When fewer than `num_components` eigenvalues clear the floor. A single
        key always lands here, since its centered Gram matrix is zero.
    """
    n = bundle.n
    w, v = sym_eig(bundle.centered)
    usable = int(np.count_nonzero(w > _eigen_threshold(bundle)))
    if num_components is None:
        num_components = max(usable, 1)
    if not 1 <= num_components <= n:
        raise ValueError(f"num_components must lie in [1, {n}], got {num_components}")
    if num_components > usable:
        raise InsufficientEigenpairsError(num_components, usable)
    w = w[:num_components]
    a = v[:, :num_components] / np.sqrt(w)
    pivot = np.argmax(np.abs(a), axis=0)
    a *= np.sign(a[pivot, np.arange(num_components)])
    return EigenBasis(eigenvalues=w / n, coefficients=a)


def build_values(basis, bundle):
    """Value vectors under which softmax attention performs the projection.

    ``V[j, d] = (a_d[j] - mean(a_d)) / g(k_j)``.
    """
    a = basis.coefficients
    return (a - a.mean(axis=0, keepdims=True)) / bundle.g[:, None]


def build_raw_values(basis, bundle):
    """The un-centered parameterization ``V[j, d] = a_d[j] / g(k_j)``.

    Feeding these into :func:`kpca_attn.attention.scaled_attention` reproduces
    the output obtained from :func:`build_values` with plain softmax attention.
    """
    return basis.coefficients / bundle.g[:, None]


def project_many(queries, keys, basis, bundle, spec):
    """Kernel-trick projections ``h_i(d) = phi(q_i) . u_d`` for every query row."""
    kphi = feature_kernel(queries, keys, spec)
    centered_cross = kphi - kphi.mean(axis=1, keepdims=True)
    return centered_cross @ basis.coefficients


def project(q, keys, basis, bundle, spec):
    """Projection of a single query onto the principal axes (length ``D_v``)."""
    q = as_vec(q, "q")
    return project_many(q[None, :], keys, basis, bundle, spec)[0]


def log_feature_sq_norms(queries, keys, spec):
    """``log ||phi(q_i)||^2`` for each query.

    For the exp kernel this is ``scale*|q|^2 - 2*logsumexp_j(scale*q.k_j)``.
    """
    queries = as_mat(queries, "queries")
    keys = as_mat(keys, "keys")
    if queries.shape[1] != keys.shape[1]:
        raise ShapeError(f"queries have {queries.shape[1]} columns but keys have {keys.shape[1]}")
    if spec.is_exp:
        sq = spec.scale * np.einsum("ij,ij->i", queries, queries)
        return sq - 2.0 * _log_g(queries, keys, spec)
    g = _checked_g(queries, keys, spec, "q")
    with np.errstate(divide="ignore"):
        return np.log(np.einsum("ij,ij->i", queries, queries)) - 2.0 * np.log(g)


def feature_sq_norms(queries, keys, spec):
    return np.exp(log_feature_sq_norms(queries, keys, spec))


def projection_loss_terms(queries, keys, H, spec):
    """Per-query ``||phi(q_i)||^2 - ||h_i||^2``, unclamped."""
    H = as_mat(H, "H")
    queries = as_mat(queries, "queries")
    if H.shape[0] != queries.shape[0]:
        raise ShapeError(f"H has {H.shape[0]} rows for {queries.shape[0]} queries")
    return feature_sq_norms(queries, keys, spec) - np.einsum("ij,ij->i", H, H)


def projection_loss(queries, keys, H, spec):
    """Mean projection error of the queries given their projections `H`."""
    return float(projection_loss_terms(queries, keys, H, spec).mean())
