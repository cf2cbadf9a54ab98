"""Solve the limit value of the `full` preset and look at how good the grid is.

Two grids, the second being the (2N-1) refinement of the first, then the
residual of the constrained equation on nodes away from kinks.
"""
# %%
import time

import numpy as np

from asymgame import load_model, preset_path
from asymgame.hjb import make_grid, refinement_check, residual_report, solve_value

m = load_model(preset_path("full"))
fields = {}
for shape in [(51, 21), (101, 41)]:
    t0 = time.perf_counter()
    fields[shape] = V = solve_value(m, make_grid(m, *shape))
    rep = residual_report(m, V.grid, V)
    print(f"{shape}: {V.iterations} iterations in {time.perf_counter() - t0:.1f}s, "
          f"max residual {rep.max_abs:.4f} on {rep.n_nodes} smooth nodes, "
          f"chord nodes {rep.active_fraction:.0%}")

# %% the same physical nodes on both grids
chk = refinement_check(m, fields[(51, 21)], fields[(101, 41)])
print(f"\nshared nodes: residual {chk.coarse_max:.4f} -> {chk.fine_max:.4f} "
      f"({chk.reduction:.0%} smaller); sup difference of the solutions {chk.sup_diff:.4f}")

# %% A slice through y = 0: V is concave in p; the chain keeps moving, so even the
# vertices are worth more than the one-shot value there
V = fields[(101, 41)]
j = np.argmin(np.abs(V.grid.y_nodes))
for i in range(0, 101, 10):
    print(f"p={V.grid.p_nodes[i]:.1f}  u={V.u[i, j]:+.3f}  V={V.v[i, j]:+.3f}")
