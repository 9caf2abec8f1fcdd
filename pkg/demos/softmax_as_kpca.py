"""
Softmax attention as a kernel PCA projection
=============================================

Pick value vectors from the eigenvectors of the keys' centered Gram matrix and
plain softmax attention returns the coordinates of each query along the
principal axes of the keys in feature space.
"""

# %%
import numpy as np

from kpca_attn import kpca
from kpca_attn.attention import AttentionBatch, kpca_exact_attention, softmax_attention

rng = np.random.default_rng(0)
keys = rng.standard_normal((8, 4))
queries = rng.standard_normal((3, 4))
spec = kpca.KernelSpec.softmax(4)  # exp(q.k / sqrt(D))

# %%
# Principal axes of the keys, from the Gram matrix alone.
bundle = kpca.gram(keys, spec)
basis = kpca.solve_coefficients(bundle)
print("usable components:", basis.num_components)
print("eigenvalues:", np.round(basis.eigenvalues, 6))

# %%
# Kernel-trick projection of each query onto those axes...
H_proj = kpca.project_many(queries, keys, basis, bundle, spec)

# ...and the same numbers out of a softmax attention layer.
V = kpca.build_values(basis, bundle)
H_attn, A = softmax_attention(AttentionBatch(queries, keys, V, spec.scale))
print("max |attention - projection|:", np.abs(H_attn - H_proj).max())
np.testing.assert_allclose(H_attn, kpca_exact_attention(queries, keys, spec), atol=1e-12)

# %%
# The projection loss: squared feature-space distance between phi(q) and its
# reconstruction. It shrinks as more components are kept.
for m in range(1, basis.num_components + 1):
    H = kpca_exact_attention(queries, keys, spec, m)
    print(f"{m} components: J_proj = {kpca.projection_loss(queries, keys, H, spec):.6f}")
