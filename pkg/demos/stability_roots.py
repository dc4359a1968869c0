"""Linear stability of four algorithms at rho = 0.115, v* = 10.49.

Prints the fixed-point speed, the largest root modulus of the characteristic
equation and of the per-mode map matrix, and the verdicts.
"""
import numpy as np

from dmpc_ring.coordination import algorithm
from dmpc_ring.core import RingGeometry
from dmpc_ring.stability import analyse, max_modulus
from dmpc_ring.utility import UtilityParams

geo = RingGeometry(314.0, 36)
for name in ("AS1D_c", "AS2D_c", "IAS1D_c", "IAS2D_c"):
    rep = analyse(geo, algorithm(name), UtilityParams())
    k = int(np.argmax(np.abs(rep.spectrum.bracket).max(axis=1)))
    print(f"{name:8s} v={rep.fixed_point.velocity:.4f}  |z|max={max_modulus(rep.spectrum):.5f} "
          f"(mode {k})  map |z|max={max_modulus(rep.map_spectrum):.5f}  -> {rep.verdict}; "
          f"sum beta_x={rep.jacobian.beta_x.sum():.1e}")
    print("         beta_x", np.round(rep.jacobian.beta_x, 4), "beta_v", np.round(rep.jacobian.beta_v, 4))
