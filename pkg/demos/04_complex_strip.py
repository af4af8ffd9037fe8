"""Growing modes present: follow the solution into a complex strip for a short time.

On the 4 pi torus the linear part has unstable modes, so only a short-time
statement is available.  The horizon T* and the admissible shift alpha come
from the size of the data; the complexified hierarchy then stays bounded.
"""

import math

import numpy as np

from ks2d import TorusSpec, complex_shift_solve, thresholds
from ks2d.analysis import l2_norm
from ks2d.harness import random_gradient_field

spec = TorusSpec(4 * math.pi, 4 * math.pi, 32, 32)
u0 = random_gradient_field(spec, 0.1, 2.0, seed=7, normalize="l2")
rep = thresholds(spec, 1.0, T=2.0, M=l2_norm(u0))
print(f"T* = {rep.T_star:.4f}, |alpha| <= {rep.alpha_max:.4g}")

dt = 1e-2
T = math.floor(rep.T_star / dt) * dt
a = rep.alpha_max / math.sqrt(2)
_, sup = complex_shift_solve(u0, [a, a], T, n_levels=8, dt=dt)
print("level sup-norms / |u0|:", np.array2string(sup / l2_norm(u0), precision=4))
