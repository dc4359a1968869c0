"""Free flow versus stop-and-go for uncoordinated human-like driving.

AS1D_g at v* = 10.49 on a 314 m ring, after a 6 s braking kick: 24 vehicles
settle back to a uniform flow, 38 vehicles lock into a stop-and-go wave.
"""
from dmpc_ring.coordination import algorithm
from dmpc_ring.core import RingGeometry
from dmpc_ring.simulator import ScenarioConfig, simulate

for n in (24, 38):
    traj, op = simulate(ScenarioConfig(RingGeometry(314.0, n), algorithm("AS1D_g")))
    v = traj.v[-1]
    print(f"N={n:2d} rho={n / 314:.3f}  V={op.V:5.2f} m/s  A={op.A:5.2f} m/s  "
          f"final speeds {v.min():.2f}..{v.max():.2f} m/s")
