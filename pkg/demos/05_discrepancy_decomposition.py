"""The discrepancy functional and its two-route time derivative.

D(t) weighs the separation of two flows with the scaled kernel; its
derivative is computed both as a finite difference and as the direct
quadrature I1 + I2 of the transformed integrals.  Their agreement,
within the reported error budget, validates the entire change-of-
variables chain at finite epsilon.
"""

import numpy as np

from bvflow import functionals as fn
from bvflow.catalog import get_field
from bvflow.flow import ExactFlowMap
from bvflow.kernels import AnisotropicKernel, DirectionField, poly_bump

print(__doc__)

eta = DirectionField.constant((1.0, 0.0))
c = get_field("C")
fm = ExactFlowMap(c)

print("field C (BV shear), identical flows, eps = 0.05, t = 0.3:")
for gamma in (0.0, 10.0):
    kern = AnisotropicKernel(poly_bump, eta, gamma)
    cfg = fn.FunctionalConfig(epsilon=0.05, n_x=32, n_z=32)
    res = fn.decomposition_check(fm, fm, c, kern, cfg, 0.3)
    print(f"  gamma = {gamma:4.1f}: I_fd = {res['I_eps_fd']:+.6f},"
          f" I1 + I2 = {res['I1'] + res['I2']:+.6f},"
          f" gap = {res['gap']:.1e} <= bound {res['bound']:.1e}")
print("  (the derivative itself shrinks with gamma: the anisotropic kernel")
print("   suppresses the jump contribution by 1/(1+gamma))")

print("\nD(t) at t = 0 is the kernel's first absolute moment times eps:")
from scipy.integrate import quad

mean_abs_z = 2 * np.pi * quad(lambda r: float(poly_bump.f0(r * r, 2)) * r * r, 0, 1)[0]
cfg = fn.FunctionalConfig(epsilon=0.05, n_x=32, n_z=32)
d0 = fn.discrepancy_D(fm, fm, c, AnisotropicKernel(poly_bump, eta, 0.0), cfg, 0.0)
print(f"  D(0) = {d0:.8f} vs eps <|z|> = {0.05 * mean_abs_z:.8f}")
