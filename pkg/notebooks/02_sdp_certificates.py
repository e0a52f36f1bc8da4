"""
Weighted disturbance as a semidefinite program
==============================================

For fixed measurement angles the smallest weighted disturbance compatible
with a CHSH value is an SDP. Each solve returns a primal state and a dual
value; the dual is a certified lower bound.
"""
# %%
import numpy as np

from diqkd.sdp import chsh_norm_bound, solve_arc_relaxation, solve_weighted_delta_sdp

phi, omega = np.pi / 2, np.pi / 4
b = (np.cos(omega), np.sin(omega))
print("largest reachable value:", chsh_norm_bound(phi, b))
for s in (2.0, 2.2, 2.4, 2.6, 2.8):
    sol = solve_weighted_delta_sdp(phi, b, 0.5, s)
    print(f"S={s:.1f}  primal={sol.primal_value:.6f}  dual={sol.dual_value:.6f}  gap={sol.gap:.1e}  {sol.status}")

# %%
# A whole interval of angles can be handled at once by relaxing the arc of
# Alice's Bloch vectors to the triangle around it.
box = solve_arc_relaxation(1.2, 1.4, b, 0.5, 2.4)
points = [solve_weighted_delta_sdp(p, b, 0.5, 2.4, sense="ge").primal_value for p in np.linspace(1.2, 1.4, 5)]
print("interval bound", round(box.dual_value, 6), "<= pointwise", np.round(points, 6))
