# %% [markdown]
# # Simulate photon counts and reconstruct the field
#
# A random complex Gaussian field with 10^4 photons per mode is measured by an
# L=3 design, detection is Poisson, and the field is recovered with Adam on
# the Poisson negative log-likelihood. The global phase cannot be measured,
# so errors are computed after the best global rotation.

# %%
import numpy as np

from qlphase import OptimizerConfig, fisher, mse, random_field, random_group_design, reconstruct, simulate

n, L = 128, 3
design = random_group_design(n, L, seed=7)
x = random_field(n, photons_per_mode=1e4, seed=1)
rec = simulate(design, x, seed=2)
print("detected photons:", rec.counts.sum(), " field energy:", round(x.intensity))

# %%
out = reconstruct(design, rec.counts, OptimizerConfig(), seed=3)
err = mse(out.field, x)
print(f"iterations {out.iters}, best restart {out.restart}, final loss {out.final_loss:.2f}")
print(f"per-mode MSE {err.mse_per_mode:.3f} (photon units; 1.0 is the quantum limit)")

# %% [markdown]
# The Cramér-Rao bound for this design and field tells how close that is to
# the best any unbiased estimator can do.

# %%
bound = fisher(design, x)
print(f"aligned CRLB per mode {bound.crlb_trace_aligned / n:.3f}")

# %%
trace = out.smoothed_trace
for i in (0, 10, 100, len(trace) - 1):
    print(i, round(float(trace[i]), 2))
