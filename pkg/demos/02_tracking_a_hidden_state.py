"""A filter in action on the `full` preset.

The state X flips at rate 1/2; Y drifts up by one unit more in state 0 than in
state 1.  Watch the uninformed belief P(X = 0 | Y) chase the truth, and check
that on average it agrees with the exact marginal of the chain.
"""
# %%
import numpy as np

from asymgame import load_model, preset_path
from asymgame.chain_filter import markov_marginal, run_filter, simulate_joint_path, simulate_paths

m = load_model(preset_path("full"))
dt = 0.01
path = simulate_joint_path(m, k0=0, y0=0.0, T=5.0, dt=dt, seed=42)
chi = run_filter(m, path.y_path, [0.5, 0.5], dt)
for n in range(0, len(path.times), 50):
    bar = "#" * int(round(30 * chi[n, 0]))
    print(f"t={path.times[n]:4.1f}  X={path.x_path[n]}  P(X=0)={chi[n, 0]:.2f} {bar}")

# %% Averaged over many paths the belief is an unbiased guess of the state
_, x, y = simulate_paths(m, [1.0, 0.0], 0.0, 1.0, dt, 4000, seed=7)
chi_T = run_filter(m, y, [1.0, 0.0], dt)[:, -1, 0]
print(f"\nmean belief {chi_T.mean():.4f}, frequency of X_T = 0 {np.mean(x[:, -1] == 0):.4f}, "
      f"exact {markov_marginal(m.R, [1.0, 0.0], 1.0)[0]:.4f}")
