"""Flows, log-Jacobians and pushforward densities.

The ensemble integrator carries log J along each trajectory; exp(log J)
sampled on the initial grid is the density of the backward pushforward
of Lebesgue measure, and a histogram of evolved positions is its
independent estimate.  Field E shows what near-incompressibility
failure looks like: mass piles onto the interface and a vacuum opens.
"""

import numpy as np

from bvflow.catalog import get_field
from bvflow.flow import (
    FlowSolverConfig,
    check_group_property,
    check_ode_residual,
    density_from_flow,
    integrate_flow,
    pushforward_histogram,
)

print(__doc__)

ax = (np.arange(128) + 0.5) / 128
grid = np.stack(np.meshgrid(ax, ax, indexing="ij"), axis=-1).reshape(-1, 2)

print("field A (divergence-free cellular flow), rk4 at h = 2e-3:")
a = get_field("A")
ens = integrate_flow(a, FlowSolverConfig(step=2e-3), grid[::16], [0.0, 0.5])
print(f"  group defect X(0.3, X(0.2, .)) vs X(0.5, .): "
      f"{check_group_property(ens, 0.2, 0.3, max_points=32):.2e}")
print(f"  ODE residual at t = 0.5: "
      f"{check_ode_residual(ens, tuple(grid[0]), 0.5):.2e}")

print("\nfield B (div = 2 pi cos 2 pi x1): the density develops a peak")
b = get_field("B")
ens_b = integrate_flow(b, FlowSolverConfig(method="explicit_exact"), grid, [0.0, 0.5])
dens = density_from_flow(ens_b, 0.5)
hist = pushforward_histogram(ens_b, 0.5, 8)
print(f"  density range [{dens.values.min():.4f}, {dens.values.max():.4f}]"
      f"  (bounded-divergence band [e^-pi, e^pi] = [0.0432, 23.14])")
print(f"  total mass 1 within {abs(dens.total_mass() - 1.0):.1e}")
print(f"  histogram bins range [{hist.values.min():.3f}, {hist.values.max():.3f}]")

print("\nfield E forward (sticking selection): the violation in numbers")
e = get_field("E")
ens_e = integrate_flow(e, FlowSolverConfig(method="explicit_exact"), grid,
                       [0.0, 0.4, 0.6])
for t in (0.4, 0.6):
    h = pushforward_histogram(ens_e, t, 32)
    empty = int(np.sum(h.values == 0.0))
    print(f"  t = {t}: sup density {h.values.max():6.1f}, "
          f"{empty}/1024 empty bins")
print("  (rk4_event refuses both the forward collision and any backward run:")
try:
    integrate_flow(e, FlowSolverConfig(step=1e-3), grid[:1], [0.0, 0.2])
except Exception as exc:
    print(f"   {type(exc).__name__}: {exc})")
