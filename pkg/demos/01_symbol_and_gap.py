"""Which modes grow, and how large is the spectral gap?

The linear part damps a mode at rate sigma = |kt|^4 - |kt|^2.  Modes with
0 < |kt| < 1 grow, so they only appear once a period exceeds 2 pi.
"""

import math

from ks2d import TorusSpec, build_symbol_table

for L in (math.pi, 2 * math.pi, 4 * math.pi, 8 * math.pi):
    table = build_symbol_table(TorusSpec(L, L, 64, 64))
    print(f"L = {L / math.pi:g} pi: {len(table.growing):3d} growing, "
          f"{len(table.neutral)} neutral, A = {table.A:g}, min sigma = {table.sigma_min:.4g}")

# On the pi-torus the weakest decay per unit |k| sits on the |kt| = 2 ring.
t = build_symbol_table(TorusSpec(math.pi, math.pi, 64, 64))
print("gap attained at k =", t.A_argmin)
