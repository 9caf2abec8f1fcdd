"""Softmax attention as kernel PCA, plus robust (PCP-based) attention.

Modules
-------
matrixcore  dense float64 primitives and the matrix CSV format
kpca        kernels, Gram centering, coefficient eigenproblem, projections
attention   softmax / symmetric / Scaled Attention and the attention VJP
rpc         shrinkage, SVT, ADMM for PCP, Principal Attention Pursuit
verify      coefficient recovery, gamma-constancy and gradient diagnostics
bench       synthetic corruption benchmark
"""

__version__ = "0.1.0"

from .attention import (
    AttentionBatch,
    kpca_exact_attention,
    scaled_attention,
    scaled_attention_ratio_form,
    softmax_attention,
    softmax_attention_vjp,
    symmetric_attention,
)
from .kpca import EigenBasis, GramBundle, KernelKind, KernelSpec
from .rpc import PapConfig, admm_pcp, pap, rpc_attention

__all__ = [
    "AttentionBatch",
    "EigenBasis",
    "GramBundle",
    "KernelKind",
    "KernelSpec",
    "PapConfig",
    "admm_pcp",
    "kpca_exact_attention",
    "pap",
    "rpc_attention",
    "scaled_attention",
    "scaled_attention_ratio_form",
    "softmax_attention",
    "softmax_attention_vjp",
    "symmetric_attention",
]
