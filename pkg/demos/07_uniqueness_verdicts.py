"""The Gronwall bookkeeping and the two verdicts.

For field C two independent solver routes produce flows whose weighted
L^1 separation stays at solver precision over [0, 1]: the numerical
face of "at most one almost-everywhere flow".  Field E fails the
hypotheses; the report declines the verdict and instead exhibits two
legitimate backward branch constructions that stay macroscopically
apart.
"""

from bvflow import functionals as fn
from bvflow.catalog import get_field
from bvflow.flow import DirectFlowMap, ExactFlowMap, FlowSolverConfig
from bvflow.kernels import AnisotropicKernel, DirectionField, poly_bump

print(__doc__)

kern = AnisotropicKernel(poly_bump, DirectionField.constant((1.0, 0.0)), 3.0)

print("field C, rk4_event vs explicit_exact over [0, 1]:")
c = get_field("C")
rep = fn.uniqueness_report(
    c,
    DirectFlowMap(c, FlowSolverConfig(step=2e-3)),
    ExactFlowMap(c),
    kern,
    fn.FunctionalConfig(epsilon=0.05, n_x=48),
    T=1.0,
    n_times=5,
)
for t, l_val, r in zip(rep.times, rep.l_values, rep.residuals):
    print(f"  t = {t:.2f}: L(t) = {l_val:.2e}, eqfin residual = {r:.2e}")
print(f"  measured C(T) = {rep.c_measured:.3f}, Gronwall rhs = {rep.gronwall_rhs:.2e}")
print(f"  final discrepancy {rep.final_discrepancy:.2e} -> verdict {rep.verdict}")

print("\nfield E (singular divergence):")
rep_e = fn.uniqueness_report(
    get_field("E"), None, None, kern, fn.FunctionalConfig(epsilon=0.05), T=1.0
)
print(f"  verdict {rep_e.verdict}")
print(f"  two backward branch constructions separate by "
      f"{rep_e.branch_discrepancy:.3f} in L^1 at t = 0.3 (threshold 0.1)")
