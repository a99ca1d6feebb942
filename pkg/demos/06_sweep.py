# %% [markdown]
# # Experiment sweeps
#
# The harness runs (n, L, trial) grids and writes one CSV row per trial. Every
# row carries the seed that regenerates it. The same runs are available from
# the command line:
#
#     qlphase sweep --config sweep.yaml --out sweep.csv --threads 4

# %%
import numpy as np

from qlphase.harness import ExperimentConfig, median, run_sweep, run_trial

cfg = ExperimentConfig(n_list=[64, 256], L_list=[2, 3, 5], trials=3, optimizer={"restarts": 1},
                       holography_rho_factor=1e3)
rows = run_sweep(cfg)
for n in cfg.n_list:
    for L in (1, 2, 3, 5):
        print(f"n={n:<4} L={L}: median MSE/mode {median(rows, 'mse_per_mode', n=n, L=L):.3f}, "
              f"median CRLB/mode {median(rows, 'crlb_per_mode', n=n, L=L):.3f}")

# %%
r = rows[5]
again = run_trial(r["n"], r["L"], r["Q"], r["seed"], cfg.photons_per_mode, cfg.optimizer)
print("replayed row identical:", again["mse_per_mode"] == r["mse_per_mode"])
