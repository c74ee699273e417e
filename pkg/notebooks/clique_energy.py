"""
The spectral smoothness score
=============================

A candidate block is judged by pasting it next to already-chosen neighbours
and looking at the low-frequency DCT content of the 2x2-block tile. The DC
term is dropped, so only structure counts, not brightness.
"""

# %%
import numpy as np

from blockbg.spectral import clique_energy, dct2, retained_extent

# %%
# For a 32x32 tile the retained band is the leading 28x28 square.
print({m: retained_extent(m) for m in (8, 16, 32)})

# %%
# A smooth ramp continues cleanly; a foreign block pasted in one quadrant
# adds edges, so its energy is larger.
y, x = np.mgrid[0:32, 0:32].astype(float)
ramp = 100 + 1.5 * x + y
pasted = ramp.copy()
pasted[16:, 16:] = 60 + 80 * ((x[16:, 16:] // 3) % 2)
for name, tile in [("ramp", ramp), ("ramp + 50", ramp + 50), ("pasted", pasted)]:
    print(f"{name:10s} energy {clique_energy(tile):10.1f}")

# %%
# The transform is orthonormal, so coefficient energy equals pixel energy.
tile = np.random.default_rng(0).uniform(0, 255, (32, 32))
print(np.sum(dct2(tile) ** 2) / np.sum(tile ** 2))
