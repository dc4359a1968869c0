"""How fast the best-response rounds settle within one time step.

Runs IAS2D_c at rho = 0.121, v* = 7.5 after a kick and, every 50 steps,
re-negotiates the same state with deeper loops. The per-round plan change
shrinks during the transient but then hovers around one grid step
(0.25 m/s^2): with lambda = 200 the Boltzmann average is close to a hard
argmax, and neighbouring agents keep hopping between adjacent grid points.
"""
import numpy as np

from dmpc_ring.coordination import algorithm, search_grid, tau_loop, with_iterations
from dmpc_ring.core import RingGeometry
from dmpc_ring.policy import pack_coefficients
from dmpc_ring.simulator import ScenarioConfig, run
from dmpc_ring.utility import UtilityParams

params = UtilityParams(v_star=7.5)
spec = algorithm("IAS2D_c")
grid = search_grid(spec.order)
coef = pack_coefficients(params, spec.utility_form, 3.9)


def probe(k, x, v, a, result, gaps):
    if k % 50:
        return
    acts = {T: tau_loop(x, v, a, with_iterations(spec, T), params, 314.0, grid=grid, coef=coef,
                        gaps=gaps) for T in (2, 4, 8)}
    d24 = np.abs(acts[2].actions - acts[4].actions).max()
    d48 = np.abs(acts[4].actions - acts[8].actions).max()
    rounds = " ".join(f"{d:.2f}" for d in acts[8].deltas)
    print(f"t={k / 6:6.1f}s  |u2-u4|={d24:.3f}  |u4-u8|={d48:.3f}  round deltas: {rounds}")


run(ScenarioConfig(RingGeometry(314.0, 38), spec, params, duration=120.0), on_step=probe)
