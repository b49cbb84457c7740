"""The singular-part majorant and the gamma / eta trade-off.

The computable bound on the jump contribution decays exactly like
1/(1+gamma) when the kernel direction matches the jump normal.  With a
misaligned direction the bound picks up a (1+2 gamma)-weighted penalty,
so gamma must be sent to infinity first and the misalignment to zero
second -- the order of limits the envelope table makes visible.
"""

import numpy as np

from bvflow import functionals as fn
from bvflow.catalog import get_field
from bvflow.experiments import fit_rate
from bvflow.kernels import AnisotropicKernel, DirectionField, poly_bump

print(__doc__)

for fid, eta_vec in (("C", (1.0, 0.0)), ("D", (2.0, 1.0))):
    fld = get_field(fid)
    eta = DirectionField.constant(eta_vec)
    gammas = np.array([0.0, 1.0, 3.0, 9.0, 27.0, 81.0])
    vals = [fn.singular_bound(fld, AnisotropicKernel(poly_bump, eta, g)) for g in gammas]
    slope, err = fit_rate(vals, 1.0 + gammas)
    print(f"field {fid}: bound at gamma = 0: {vals[0]:.4f};"
          f" log-log slope vs (1+gamma): {slope:.4f} +- {err:.1e}")

print("\nenvelope 1/(1+gamma) + (1+2 gamma) d over the (gamma, d) grid:")
out = fn.gamma_eta_tradeoff(get_field("C"), [0, 1, 9, 99], [0.0, 1e-4, 1e-2])
header = "  gamma \\ d " + "".join(f"{d:>12.0e}" for d in out["deltas"])
print(header)
for g, row in zip(out["gammas"], out["envelope"]):
    print(f"  {g:9.0f} " + "".join(f"{v:12.5f}" for v in row))
best = out["best"]
print(f"  grid minimum {best[2]:.5f} at gamma = {best[0]:.0f}, d = {best[1]:g}")
k = out["diagonal_k"]
print("\nalong gamma_k = k, d_k = k^-2 the envelope vanishes:")
for kk in (1, 3, 10, 30, 100):
    print(f"  k = {kk:3d}: envelope = {out['diagonal'][kk-1]:.5f}"
          f"  (3/k = {3.0/kk:.5f})")
