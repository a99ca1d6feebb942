# %% [markdown]
# # Measurement designs
#
# A design routes every mode into several small interferometers ("groups").
# Each group of L modes is mixed by a Q x L block of the DFT, and every
# column is scaled by 1/sqrt(degree) so the whole matrix has orthonormal
# columns.

# %%
import numpy as np

from qlphase import dft_code, holographic_design, materialize_rows, random_group_design
from qlphase.designs import is_connected, orthonormality_error

np.set_printoptions(precision=3, suppress=True)

# %%
W = dft_code(3, 2).entries
print(W)
print("W^H W =", np.round(W.conj().T @ W, 12))

# %% [markdown]
# Pairs (L=2) go through a 3-output coupler; larger groups use Q = L.

# %%
for L in (2, 3, 5):
    d = random_group_design(64, L, seed=0)
    deg = d.degrees()
    print(f"L={L}: {d.n_groups} groups, M={d.m_rows} rows, degree {deg.min()}..{deg.max()}, "
          f"connected={is_connected(d)}, |A^H A - I|={orthonormality_error(d):.1e}")

# %% [markdown]
# Quadrature holography is the L=1 special case with a strong reference.

# %%
h = holographic_design(3, rho=10.0)
A = materialize_rows(h)
print(A[:4])
print("A^T A =", np.abs(A.T @ A).max())

# %%
print(random_group_design(4, 2, seed=1).to_json()[:200], "...")
