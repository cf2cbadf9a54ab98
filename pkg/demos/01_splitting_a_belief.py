"""Why an informed player sometimes reveals part of what they know.

Walks through the aumann_maschler preset. The non-revealing value u is
W-shaped in the belief, so its concave envelope is flat on [1/4, 3/4]; the
PDE solver reproduces that envelope.  Run: python demos/01_splitting_a_belief.py
"""
# %%
import numpy as np

from asymgame import concave_envelope_1d, load_model, preset_path, u_surface
from asymgame.discrete_game import build_informed_strategy
from asymgame.hjb import make_grid, solve_value

m = load_model(preset_path("aumann_maschler"))
ps = np.linspace(0, 1, 9)
u = u_surface(m, ps, [0.0])[:, 0]   # payoffs ignore y here, any slice will do
cav = concave_envelope_1d(u)
print("p      u      Cav u")
for p, a, b in zip(ps, u, cav):
    print(f"{p:.3f}  {a:.3f}  {b:.3f}")

# %% The solver starts from u and only ever lifts it to the envelope, since
# nothing moves in this game (no chain jumps, no drift in y).
grid = make_grid(m, 201, 41)
V = solve_value(m, grid)
err = np.abs(V.v - concave_envelope_1d(V.u[:, 0])[:, None]).max()
print(f"\nsolved on 201x41 in {V.iterations} iterations, sup |V - Cav u| = {err:.1e}")

# %% Reading off the split: at p = 1/2 the belief is sent to 1/4 or 3/4 with
# equal odds.  The state-dependent lottery that achieves that is the
# revelation probability per state.
pol = build_informed_strategy(m, V)
p_lo, p_hi, w_hi, _ = pol.split(0.5, 0.0)
q = pol.reveal_probs(np.array([0.5]), p_hi, w_hi)[0]
print(f"split 0.5 -> {p_lo[0]:.3f} / {p_hi[0]:.3f} with weight {w_hi[0]:.3f} on the upper end")
print(f"probability of moving the belief up: {q[0]:.3f} in state 0, {q[1]:.3f} in state 1")
