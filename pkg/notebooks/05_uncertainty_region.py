"""
Uncertainty sets of the two key-basis entropies
===============================================

Every weight lambda gives a half-plane lambda x + (1 - lambda) y >= C_lambda.
Their intersection is the set of entropy pairs allowed at a given S.
"""
# %%
import numpy as np

from diqkd import uncertainty_region

grid = np.round(np.linspace(0, 1, 21), 10)
for s in (2.0, 2.4, 2.6, 2.8):
    region = uncertainty_region(s, grid)
    corner = region.boundary[len(region.boundary) // 2]
    print(f"S={s}: {len(region.boundary)} boundary points, a middle one at ({corner[0]:.3f}, {corner[1]:.3f})")
    print("   contains (0.5, 0.5)?", region.contains(0.5, 0.5))
