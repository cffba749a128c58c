"""Cyclic sample graphs and their spectral bases.

A frame of N samples is a signal on a directed ring where every sample
links to its K predecessors.  This walk-through builds that graph, takes
its SVD basis, and checks the circulant eigenbasis against the DFT.
"""
# %%
import numpy as np

from learngft import (TABLE_SPARSITIES, build_shift_operator, circulant_evd, sparsity_to_k,
                      svd)
from learngft.topology import fixed_adjacency

# %% [markdown]
# Graph sparsity p maps to a neighbor count K.  At N = 512 the sweep grid gives:

# %%
for p in TABLE_SPARSITIES:
    print(f"p = {p:<5} K = {sparsity_to_k(p, 512)}")

# %% [markdown]
# The shift operator is circulant: row n has ones at (n - k) mod N.

# %%
w = build_shift_operator(8, 2)
print(w.shift_operator.astype(int))

# %% [markdown]
# SVD basis of the row-normalized adjacency.  psi is orthogonal and the
# factors rebuild the matrix.

# %%
a = fixed_adjacency(build_shift_operator(64, 3))
basis = svd(a)
print("sigma[:6]", np.round(basis.sigma[:6], 4))
print("orthogonality", np.abs(basis.psi.T @ basis.psi - np.eye(64)).max())
print("reconstruction", np.abs(basis.psi @ np.diag(basis.sigma) @ basis.gamma - a).max())

# %% [markdown]
# The eigenvalues of a circulant matrix are the DFT of its first row, so the
# eigenbasis and the STFT differ only by a bin permutation.

# %%
evd = circulant_evd(build_shift_operator(4, 1))
print("eigenvalues of the 4-cycle", np.round(evd.lam, 12))
