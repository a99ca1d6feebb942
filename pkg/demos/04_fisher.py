# %% [markdown]
# # Fisher information and the quantum limit
#
# With orthonormal columns, J = 2I + [[C_R, C_I], [C_I, -C_R]], whose
# eigenvalues come in pairs 2 +/- gamma, so Tr(J^-1) >= N. Without a
# reference the global phase is invisible and J is singular; the bounds that
# matter are then the pseudo-inverse trace (errors after global alignment)
# and the trace with Im x_0 pinned.

# %%
import numpy as np

from qlphase import c_matrix, diagonal_crlb_approx, fisher, random_field, random_group_design
from qlphase.bounds import fisher_finite_difference

n = 256
x = random_field(n, 1e4, seed=0)
for L in (2, 3, 5):
    d = random_group_design(n, L, seed=L)
    b = fisher(d, x)
    C = c_matrix(d, x)
    print(f"L={L}: median |C_nn| {np.median(np.abs(np.diag(C))):.3f}, "
          f"aligned CRLB/N {b.crlb_trace_aligned / n:.3f}, mode-0 pinned CRLB/N {b.crlb_trace_gauge_reduced / n:.3f}, "
          f"diagonal-C formula for the pinned trace {diagonal_crlb_approx(np.diag(C)) / n:.3f}")

# %%
lam = np.sort(b.eigenvalues - 2)
print("eigenvalue pairing, max |l + l_reversed|:", np.abs(lam + lam[::-1]).max())

# %% [markdown]
# The block formula agrees with the definition sum_m grad I_m grad I_m^T / I_m.

# %%
d = random_group_design(6, 3, seed=1)
xs = random_field(6, 10, seed=2).values
print("max |J - J_fd|:", np.abs(fisher(d, xs).j_matrix - fisher_finite_difference(d, xs)).max())
