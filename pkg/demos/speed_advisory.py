"""Choosing the ideal speed offline: a coarse v* scan at rho = 0.121.

A v* is feasible when the kicked fleet ends up with speed spread A <= 0.1 m/s;
v*_opt is the feasible v* with the highest mean speed. The coarse grid and
shorter runs keep this to a few minutes; the full version is
`dmpc-ring sweep --override sweep.mode=optimize`.
"""
from dmpc_ring.core import RingGeometry
from dmpc_ring.mechanism import SweepSpec, optimize_v_star
from dmpc_ring.simulator import ScenarioConfig

spec = SweepSpec(vehicle_counts=(38,), v_star_grid=(2.5, 3.0, 3.5, 4.0, 5.0, 7.0, 9.0),
                 template=ScenarioConfig(RingGeometry(314.0, 38), duration=300.0))
for name in ("AS1D_g", "IAS2D_c"):
    points, (opt,) = optimize_v_star(spec, name)
    for p in points:
        print(f"{name:8s} v*={p.v_star:4.1f}  V={p.V:5.2f}  A={p.A:6.3f}  "
              f"{'feasible' if p.feasible else ''}")
    print(f"{name:8s} -> v*_opt = {opt.v_star_opt}, V = {opt.V}\n")
