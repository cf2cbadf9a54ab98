"""Discrete games with n stages per unit of time approach the limit value.

Uses a coarse grid so the whole script runs in well under a minute.
Then plays the splitting strategy against a Bayesian opponent.
"""
# %%
import numpy as np

from asymgame import load_model, preset_path
from asymgame.discrete_game import (BayesOpponent, build_informed_strategy, non_revealing_policy,
                                    simulate_match, value_iteration_vn)
from asymgame.hjb import make_grid, solve_value

m = load_model(preset_path("aumann_maschler"))
grid = make_grid(m, 41, 5)  # 41 nodes put the peaks of u at 1/4 and 3/4 on the grid
V = solve_value(m, grid)
for n in (1, 2, 4, 8):
    Vn = value_iteration_vn(m, n, grid, mq=3, ns=21)
    print(f"n={n}: sup |V_n - V| = {np.abs(Vn.v - V.v).max():.4f}  (V_n(1/2) = {Vn(0.5, 0.0):.4f})")

# %% Simulated play at n = 32, starting from belief 1/2
for label, pol in [("splitting", build_informed_strategy(m, V)), ("non-revealing", non_revealing_policy(m, grid))]:
    res = simulate_match(m, pol, BayesOpponent(m, pol), 32, [0.5, 0.5], 0.0, num_paths=2000, seed=1)
    print(f"{label:>13}: {res.estimate:+.3f} +- {res.std_error:.3f}")
print(f"limit value V(1/2) = {V(0.5, 0.0):.3f}")
