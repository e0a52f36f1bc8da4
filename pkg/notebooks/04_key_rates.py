"""
Key rates, critical noise and the basis bias
============================================

Under white noise the CHSH value fixes the bit error rate. The rate
vanishes at a critical S that depends on how often the second key basis
is used.
"""
# %%
import numpy as np

from diqkd import ChannelPoint, critical_chsh, critical_qber, feasibility_grid, optimize_basis_bias
from diqkd.keyrate import analytic_single_basis_bound

for lam in (0.5, 1.0):
    print(f"lambda={lam}: S*={critical_chsh(lam):.4f}  Q*={critical_qber(lam):.4f}")

# %%
# The single-basis curve has a closed form to compare against.
print("analytic single-basis C at S=2.6:", analytic_single_basis_bound(2.6))

# %%
# Which bias is best depends on the noise.
for s in np.linspace(2.3, 2.8, 6):
    choice = optimize_basis_bias(ChannelPoint.depolarizing(s))
    print(f"S={s:.2f}  best lambda={choice.best_lambda:.2f}  rate={choice.best_rate:.4f}")

# %%
grid = feasibility_grid((2.2, 2.8), (0.0, 0.12), (13, 7))
print("zero-rate contour (S, Q):")
print(np.round(grid.contour, 4))
