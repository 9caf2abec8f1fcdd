"""
Reading eigenvectors back out of a value matrix
===============================================

Given a value matrix, undo the value construction to estimate the coefficient
vectors, then ask whether each one is an eigenvector of the centered Gram
matrix. For an eigenvector the ratio gamma = (K_c a) / (N a) is the same at
every index.
"""

# %%
import numpy as np

from kpca_attn import kpca, verify

keys, queries = verify.diagnostic_instance(seed=0, n=4, dim=3)
bundle = kpca.gram(keys, kpca.KernelSpec.softmax(3))
basis = kpca.solve_coefficients(bundle)

# %%
# Values built from the exact eigenvectors: gamma is flat.
V = kpca.build_values(basis, bundle)
stats = verify.gamma_check(bundle, verify.recover_coefficients(V, bundle))
for c in stats.per_component:
    print(f"component {c.d}: mean |gamma_i - gamma_j| = {c.mean_diff:.2e}, gamma = {c.median_gamma:.4f}")
print("|N lambda| range:", stats.eig_abs["min"], "to", stats.eig_abs["max"])

# %%
# Random values as a contrast: the differences are now on the scale of the
# eigenvalues themselves.
V_rand = np.random.default_rng(1).standard_normal(V.shape)
rstats = verify.gamma_check(bundle, verify.recover_coefficients(V_rand, bundle))
print("random values:", [f"{c.mean_diff:.3g}" for c in rstats.per_component])

# %%
# Everything at once, as the CLI's `verify` command reports it.
report = verify.run_diagnostics(keys, queries, seed=0)
for name, check in report.checks.items():
    print(f"{name:>16}: {'pass' if check['passed'] else 'FAIL'} ({check['value']})")
