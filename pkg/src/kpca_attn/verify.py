"""Diagnostics that test whether attention values carry kernel PCA structure.

Given value vectors ``V`` for a set of keys, :func:`recover_coefficients`
inverts the value construction to estimate the coefficient vectors, and
:func:`gamma_check` measures how far each estimate is from being an
eigenvector of the centered Gram matrix: for an eigenvector the elementwise
ratio ``(K_c a) / (N a)`` is constant.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import kpca
from .attention import (
    AttentionBatch,
    kpca_exact_attention,
    softmax_attention,
    softmax_attention_vjp,
)
from .matrixcore import DEFAULT_RANK_TOL, as_mat, pinv, sym_eig

#: Thresholds used by :func:`run_diagnostics` to decide pass/fail.
ROUND_TRIP_TOL = 1e-10
GAMMA_TOL = 1e-8
J_PROJ_FLOOR = -1e-10
EIGEN_RESIDUAL_TOL = 1e-8
GRADIENT_TOL = 1e-5


def _num(x):
    """Finite float, or None (JSON null) for NaN/Inf."""
    x = float(x)
    return x if np.isfinite(x) else None


def centering_matrix(n):
    """``I - 1_N`` where ``1_N`` is the constant ``1/N`` matrix."""
    return np.eye(n) - np.full((n, n), 1.0 / n)


def recover_coefficients(V, bundle, rank_tol=DEFAULT_RANK_TOL):
    """Estimate the coefficient vectors from a value matrix.

    Computes ``pinv(I - 1_N) @ diag(g) @ V``. ``I - 1_N`` is singular (it
    kills constant vectors), so only the mean-zero part of each coefficient
    vector comes back; that is all the value construction depends on.
    """
    V = as_mat(V, "V")
    if V.shape[0] != bundle.n:
        raise ValueError(f"V has {V.shape[0]} rows but the keys number {bundle.n}")
    return pinv(centering_matrix(bundle.n), rank_tol) @ (bundle.g[:, None] * V)


@dataclass(frozen=True)
class ComponentGamma:
    d: int
    mean_diff: float
    std_diff: float
    median_gamma: float
    n_used: int
    flagged: bool = False


@dataclass(frozen=True)
class GammaStats:
    per_component: tuple
    eig_abs: dict

    @property
    def max_mean_diff(self):
        return max((c.mean_diff for c in self.per_component if not c.flagged), default=0.0)

    def to_dict(self):
        return {
            "per_component": [
                {
                    "d": c.d,
                    "mean_diff": _num(c.mean_diff),
                    "std_diff": _num(c.std_diff),
                    "median_gamma": _num(c.median_gamma),
                    "n_used": c.n_used,
                    "flagged": c.flagged,
                }
                for c in self.per_component
            ],
            "eig_abs": dict(self.eig_abs),
        }


def gamma_check(bundle, A_hat, entry_floor=1e-6):
    """Constancy of ``gamma = (K_c a_hat) / (N a_hat)`` for each column of `A_hat`.

    Entries with ``|a_hat[j]| <= entry_floor * max|a_hat|`` are left out of
    the ratio. A column with fewer than two usable entries is flagged and
    reported with NaN statistics instead of raising.

    ``eig_abs`` summarizes ``|N lambda_d|`` for the top ``A_hat.shape[1]``
    eigenvalues of the centered Gram matrix, the scale the differences
    should be compared to.
    """
    if not entry_floor > 0:
        raise ValueError(f"entry_floor must be positive, got {entry_floor}")
    A_hat = as_mat(A_hat, "A_hat")
    Kc = bundle.centered
    n = bundle.n
    comps = []
    for d in range(A_hat.shape[1]):
        a = A_hat[:, d]
        scale = np.abs(a).max()
        use = np.abs(a) > entry_floor * scale
        if use.sum() < 2:
            comps.append(ComponentGamma(d, float("nan"), float("nan"), float("nan"), int(use.sum()), True))
            continue
        gamma = (Kc @ a)[use] / (n * a[use])
        iu = np.triu_indices(gamma.size, 1)
        diffs = np.abs(gamma[:, None] - gamma[None, :])[iu]
        comps.append(
            ComponentGamma(d, float(diffs.mean()), float(diffs.std()), float(np.median(gamma)), int(use.sum()))
        )
    w, _ = sym_eig(Kc)
    top = np.abs(w[: A_hat.shape[1]])
    eig_abs = {
        "max": float(top.max()),
        "min": float(top.min()),
        "mean": float(top.mean()),
        "median": float(np.median(top)),
    }
    return GammaStats(tuple(comps), eig_abs)


def projection_loss_trace(steps, spec):
    """``[(t, J_proj(queries_t, keys_t, H_t)), ...]`` for a sequence of triples."""
    return [(t, kpca.projection_loss(q, k, h, spec)) for t, (q, k, h) in enumerate(steps)]


def eigen_residuals(bundle, basis):
    """``||K_c a_d - N lambda_d a_d||`` for every component of `basis`."""
    a = basis.coefficients
    r = bundle.centered @ a - a * (bundle.n * basis.eigenvalues)
    return np.linalg.norm(r, axis=0)


def _rel_err(analytic, numeric):
    scale = max(np.abs(analytic).max(), np.abs(numeric).max())
    if scale == 0.0:
        return 0.0
    return float(np.abs(analytic - numeric).max() / scale)


def random_attention_instance(seed, sizes=None):
    """Seeded ``(batch, upstream)`` with ``N, N_q <= 8`` and ``D, D_v <= 5``.

    `sizes` may fix any of ``n``, ``n_q``, ``d``, ``d_v``.
    """
    rng = np.random.default_rng(seed)
    dims = {
        "n": int(rng.integers(1, 9)),
        "n_q": int(rng.integers(1, 9)),
        "d": int(rng.integers(1, 6)),
        "d_v": int(rng.integers(1, 6)),
    }
    dims.update(sizes or {})
    Q = rng.standard_normal((dims["n_q"], dims["d"]))
    K = rng.standard_normal((dims["n"], dims["d"]))
    V = rng.standard_normal((dims["n"], dims["d_v"]))
    upstream = rng.standard_normal((dims["n_q"], dims["d_v"]))
    return AttentionBatch(Q, K, V), upstream


def finite_difference_vjp(batch, upstream, epsilon):
    """Central differences of ``<upstream, H>`` in every entry of Q, K and V."""

    def objective(Q, K, V):
        H, _ = softmax_attention(AttentionBatch(Q, K, V, batch.scale))
        return float(np.sum(upstream * H))

    grads = []
    mats = [batch.Q, batch.K, batch.V]
    for which in range(3):
        g = np.zeros_like(mats[which])
        for idx in np.ndindex(g.shape):
            plus = [m.copy() for m in mats]
            minus = [m.copy() for m in mats]
            plus[which][idx] += epsilon
            minus[which][idx] -= epsilon
            g[idx] = (objective(*plus) - objective(*minus)) / (2.0 * epsilon)
        grads.append(g)
    return tuple(grads)


def gradient_check(seed, epsilon=1e-5, zero_upstream=False, sizes=None):
    """Worst relative error of the analytic attention VJP against central differences.

    The relative error of each gradient is ``max|analytic - numeric|`` over
    the larger of the two max-abs values (0 when both vanish); the maximum
    over dQ, dK and dV is returned.
    """
    if not 1e-7 <= epsilon <= 1e-3:
        raise ValueError(f"epsilon must lie in [1e-7, 1e-3], got {epsilon}")
    batch, upstream = random_attention_instance(seed, sizes)
    if zero_upstream:
        upstream = np.zeros_like(upstream)
    analytic = softmax_attention_vjp(batch, upstream)
    numeric = finite_difference_vjp(batch, upstream, epsilon)
    return max(_rel_err(a, n) for a, n in zip(analytic, numeric))


# -- report ------------------------------------------------------------------


@dataclass
class DiagnosticsReport:
    j_proj_trace: list
    gamma: GammaStats
    eigen_residuals: list
    seed: int | None = None
    config: dict = field(default_factory=dict)
    checks: dict = field(default_factory=dict)

    @property
    def passed(self):
        return all(c["passed"] for c in self.checks.values())

    def to_dict(self):
        return {
            "j_proj_trace": [[int(t), float(v)] for t, v in self.j_proj_trace],
            "gamma": self.gamma.to_dict(),
            "eigen_residuals": [float(r) for r in self.eigen_residuals],
            "seed": self.seed,
            "config": self.config,
            "checks": self.checks,
            "passed": self.passed,
        }

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), sort_keys=True, **kw)


def diagnostic_instance(seed, n=4, dim=3, n_queries=None, key_std=1.0):
    """Seeded Gaussian ``(keys, queries)``; the default family used by the CLI."""
    rng = np.random.default_rng(seed)
    keys = key_std * rng.standard_normal((n, dim))
    queries = key_std * rng.standard_normal((n if n_queries is None else n_queries, dim))
    return keys, queries


def run_diagnostics(keys, queries, spec=None, values=None, random_values_seed=None,
                    entry_floor=1e-6, epsilon=1e-5, seed=None, trace_steps=10):
    """Run every diagnostic on one key/query set and collect a report.

    By default the values are the exact kernel PCA values of the keys, so all
    checks should pass. Pass `values` to test a supplied value matrix, or
    `random_values_seed` to use Gaussian values (a negative control).
    """
    keys = as_mat(keys, "keys")
    queries = as_mat(queries, "queries")
    spec = kpca.KernelSpec.softmax(keys.shape[1]) if spec is None else spec
    bundle = kpca.gram(keys, spec)
    basis = kpca.solve_coefficients(bundle)
    exact_values = kpca.build_values(basis, bundle)
    if values is None and random_values_seed is not None:
        values = np.random.default_rng(random_values_seed).standard_normal(exact_values.shape)
    V = exact_values if values is None else as_mat(values, "values")

    A_hat = recover_coefficients(V, bundle)
    a = basis.coefficients
    if V.shape[1] == a.shape[1]:
        round_trip = float(np.abs(A_hat - (a - a.mean(axis=0))).max())
    else:
        round_trip = None
    gamma = gamma_check(bundle, A_hat, entry_floor)
    residuals = eigen_residuals(bundle, basis)

    H = kpca_exact_attention(queries, keys, spec)
    blend = [(queries, keys, (t / trace_steps) * H) for t in range(trace_steps + 1)]
    trace = projection_loss_trace(blend, spec)
    j_final = trace[-1][1]
    grad = gradient_check(0 if seed is None else seed, epsilon)
    eig_tol = EIGEN_RESIDUAL_TOL * max(1.0, float(np.linalg.norm(bundle.centered)))

    checks = {
        "round_trip": {"value": round_trip, "threshold": ROUND_TRIP_TOL,
                       "passed": round_trip is not None and round_trip <= ROUND_TRIP_TOL},
        "gamma_mean_diff": {"value": _num(gamma.max_mean_diff), "threshold": GAMMA_TOL,
                            "passed": gamma.max_mean_diff <= GAMMA_TOL
                            and not any(c.flagged for c in gamma.per_component)},
        "j_proj_exact": {"value": j_final, "threshold": J_PROJ_FLOOR,
                         "passed": j_final >= J_PROJ_FLOOR},
        "eigen_residual": {"value": float(residuals.max()), "threshold": eig_tol,
                           "passed": residuals.max() <= eig_tol},
        "gradient": {"value": grad, "threshold": GRADIENT_TOL, "passed": grad <= GRADIENT_TOL},
    }
    for c in checks.values():
        c["passed"] = bool(c["passed"])
    return DiagnosticsReport(
        j_proj_trace=trace,
        gamma=gamma,
        eigen_residuals=residuals.tolist(),
        seed=seed,
        checks=checks,
    )
