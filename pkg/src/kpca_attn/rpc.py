"""Robust principal components: PCP via ADMM and Principal Attention Pursuit.

PCP splits ``M = L + S`` into a low-rank ``L`` and a sparse ``S`` by solving
``min ||L||_* + lam ||S||_1  s.t.  L + S = M``. :func:`admm_pcp` runs the
standard ADMM on the augmented Lagrangian. :func:`pap` keeps the shrinkage and
dual steps but swaps the singular value thresholding step for a softmax
attention pass over the current low-rank estimate; :func:`rpc_attention`
returns its final ``L``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .attention import default_scale
from .errors import DegenerateScalingError, ShapeError
from .matrixcore import as_mat, row_softmax, svd


def shrink(x, tau):
    """Elementwise soft threshold ``sign(x) * max(|x| - tau, 0)``.

    Examples
    --------
    >>> shrink([[3.0, -2.0, 1.0]], 1.5)
    array([[ 1.5, -0.5,  0. ]])
    """
    if not tau >= 0:
        raise ValueError(f"tau must be nonnegative, got {tau}")
    x = as_mat(x, "x")
    return np.sign(x) * np.maximum(np.abs(x) - tau, 0.0)


def svt(x, tau):
    """Singular value thresholding: shrink the singular values of `x` by `tau`."""
    if not tau >= 0:
        raise ValueError(f"tau must be nonnegative, got {tau}")
    U, sigma, Vt = svd(x)
    sigma = np.maximum(sigma - tau, 0.0)
    keep = sigma > 0
    return (U[:, keep] * sigma[keep]) @ Vt[keep]


#: admm_pcp gives up once the relative residual exceeds this.
DIVERGENCE_LIMIT = 1e100


def default_mu(K):
    """``mu = N D / (4 ||K||_1)`` with the entrywise l1 norm."""
    K = as_mat(K, "K")
    l1 = float(np.abs(K).sum())
    if l1 == 0.0:
        raise DegenerateScalingError("default mu is undefined for an all-zero matrix")
    return K.shape[0] * K.shape[1] / (4.0 * l1)


def default_lambda(shape):
    """``1 / sqrt(max(N, D))``, the usual PCP weight."""
    return 1.0 / math.sqrt(max(shape))


class TraceRow(NamedTuple):
    iteration: int
    rel_residual: float
    l1_S: float
    nuclear_L: float


def _trace_row(k, M, L, S, norm_M):
    return TraceRow(
        iteration=k,
        rel_residual=float(np.linalg.norm(M - L - S) / norm_M),
        l1_S=float(np.abs(S).sum()),
        nuclear_L=float(svd(L)[1].sum()),
    )


def format_trace_csv(trace, comment=None):
    """CSV with header ``iteration,rel_residual,l1_S,nuclear_L``."""
    lines = [f"# {c}" for c in comment.splitlines()] if comment else []
    lines.append(",".join(TraceRow._fields))
    lines.extend(
        f"{r.iteration},{r.rel_residual:.17g},{r.l1_S:.17g},{r.nuclear_L:.17g}" for r in trace
    )
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class PcpState:
    L: np.ndarray
    S: np.ndarray
    Y: np.ndarray
    mu: float
    lam: float
    iterations: int
    rel_residual: float
    converged: bool = False
    trace: tuple = field(default=(), repr=False)


class PcpUpdate(enum.Enum):
    """How the low-rank step of :func:`admm_pcp` is formed.

    ``CLASSICAL`` is the minimizer of the augmented Lagrangian,
    ``L = D_{1/mu}(M - S + Y/mu)``. ``LISTING`` takes ``L = D_mu(M - S - Y/mu)``
    literally as sometimes printed; it does not converge to the PCP solution
    and is kept only so the two can be compared.
    """

    CLASSICAL = "classical"
    LISTING = "listing"


def admm_pcp(M, lam=None, mu=None, tol=1e-7, max_iter=1000, update=PcpUpdate.CLASSICAL,
             record_trace=False):
    """Principal Component Pursuit by ADMM.

    Parameters
    ----------
    M : array_like, shape (N, D)
    lam : float, optional
        l1 weight, default ``1/sqrt(max(N, D))``.
    mu : float, optional
        Penalty parameter, default :func:`default_mu` (1.0 for ``M = 0``).
    tol : float
        Stop once ``||M - L - S||_F / max(1, ||M||_F) <= tol``.
    max_iter : int
    update : PcpUpdate or str
    record_trace : bool
        Keep one :class:`TraceRow` per iteration (costs an extra SVD each).

    Returns
    -------
    PcpState
        The first iterate meeting `tol`, otherwise the one at `max_iter`
        (with ``converged=False``).
    """
    M = as_mat(M, "M")
    update = PcpUpdate(update)
    lam = default_lambda(M.shape) if lam is None else float(lam)
    if mu is None:
        mu = default_mu(M) if np.any(M) else 1.0
    mu = float(mu)
    if not (lam > 0 and mu > 0 and tol > 0):
        raise ValueError(f"lam, mu and tol must be positive (got {lam}, {mu}, {tol})")
    if max_iter < 1:
        raise ValueError(f"max_iter must be at least 1, got {max_iter}")

    norm_M = max(1.0, float(np.linalg.norm(M)))
    L = np.zeros_like(M)
    S = np.zeros_like(M)
    Y = np.zeros_like(M)
    trace = []
    inv_mu = 1.0 / mu
    for k in range(1, max_iter + 1):
        S = shrink(M - L + inv_mu * Y, lam * inv_mu)
        if update is PcpUpdate.CLASSICAL:
            L = svt(M - S + inv_mu * Y, inv_mu)
        else:
            L = svt(M - S - inv_mu * Y, mu)
        R = M - L - S
        Y = Y + mu * R
        res = float(np.linalg.norm(R)) / norm_M
        if not res < DIVERGENCE_LIMIT:
            break
        if record_trace:
            trace.append(_trace_row(k, M, L, S, norm_M))
        if res <= tol:
            return PcpState(L, S, Y, mu, lam, k, res, True, tuple(trace))
    return PcpState(L, S, Y, mu, lam, k, res, False, tuple(trace))


class PapVariant(enum.Enum):
    SYMMETRIC = "symmetric"
    ASYMMETRIC = "asymmetric"


@dataclass(frozen=True)
class PapConfig:
    """Settings for Principal Attention Pursuit.

    ``mu="auto"`` resolves per call to ``N D / (4 ||K||_1)``; ``scale=None``
    resolves to ``1/sqrt(D)``.
    """

    n_iter: int = 4
    lam: float = 4.0
    mu: float | str = "auto"
    variant: PapVariant = PapVariant.SYMMETRIC
    scale: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "variant", PapVariant(self.variant))
        if int(self.n_iter) != self.n_iter or self.n_iter < 1:
            raise ValueError(f"n_iter must be a positive integer, got {self.n_iter}")
        if not self.lam > 0:
            raise ValueError(f"lam must be positive, got {self.lam}")
        if self.mu != "auto" and not (isinstance(self.mu, (int, float)) and self.mu > 0):
            raise ValueError(f"mu must be positive or 'auto', got {self.mu!r}")
        if self.scale is not None and not self.scale > 0:
            raise ValueError(f"scale must be positive, got {self.scale}")

    def resolve_mu(self, K):
        return default_mu(K) if self.mu == "auto" else float(self.mu)


class PapResult(NamedTuple):
    L: np.ndarray
    trace: tuple
    mu: float


def pap(K, config=PapConfig(), Q=None):
    """Principal Attention Pursuit on the key matrix `K`.

    Starting from ``L = S = Y = 0``, each of the ``config.n_iter`` steps does::

        S <- shrink(K - L + Y/mu, lam/mu)
        M <- K - S - Y/mu
        L <- softmax(scale * A M^T) M      (A = M, or Q for the asymmetric variant)
        Y <- Y + mu (K - L - S)

    Returns
    -------
    PapResult
        ``L``, a per-iteration tuple of :class:`TraceRow`, and the ``mu`` used.
        An all-zero `K` with ``mu="auto"`` returns ``L = 0`` and an empty trace.
    """
    K = as_mat(K, "K")
    if config.variant is PapVariant.ASYMMETRIC:
        if Q is None:
            raise ValueError("the asymmetric variant needs queries Q")
        Q = as_mat(Q, "Q")
        if Q.shape[1] != K.shape[1]:
            raise ShapeError(f"Q has {Q.shape[1]} columns but K has {K.shape[1]}")
        if Q.shape[0] != K.shape[0]:
            # L must stay N x D for the constraint L + S = K
            raise ShapeError(f"Q has {Q.shape[0]} rows but K has {K.shape[0]}")
    scale = default_scale(K.shape[1]) if config.scale is None else float(config.scale)

    if config.mu == "auto" and not np.any(K):
        return PapResult(np.zeros_like(K), (), float("nan"))
    mu = config.resolve_mu(K)
    inv_mu = 1.0 / mu
    norm_K = max(1.0, float(np.linalg.norm(K)))

    L = np.zeros_like(K)
    S = np.zeros_like(K)
    Y = np.zeros_like(K)
    trace = []
    for k in range(1, config.n_iter + 1):
        S = shrink(K - L + inv_mu * Y, config.lam * inv_mu)
        Mk = K - S - inv_mu * Y
        left = Mk if config.variant is PapVariant.SYMMETRIC else Q
        L = row_softmax(scale * (left @ Mk.T)) @ Mk
        Y = Y + mu * (K - L - S)
        trace.append(_trace_row(k, K, L, S, norm_K))
    return PapResult(as_mat(L, "L"), tuple(trace), mu)


def rpc_attention(K, config=PapConfig(), Q=None):
    """RPC-Attention output: the low-rank iterate of :func:`pap`."""
    return pap(K, config, Q).L
