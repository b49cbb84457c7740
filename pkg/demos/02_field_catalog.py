"""The field catalog and its jump geometry.

Each discontinuous field carries, per jump surface, the unit normal
eta_b, the unit jump direction xi_b and the density sigma = |b+ - b-|.
For fields with integrable divergence <xi_b, eta_b> = 0: the jump can
only shear, not compress.  Field E compresses (<xi, eta> = -1 at
x1 = 1/2), which is exactly the singular divergence the uniqueness
statement excludes.
"""

import numpy as np

from bvflow.catalog import (
    FIELD_IDS,
    TrigPolynomial,
    distributional_divergence_check,
    get_field,
    surface_quadrature,
    total_jump_mass,
)

print(__doc__)

for fid in FIELD_IDS:
    fld = get_field(fid)
    print(f"field {fid} ({fld.classification})")
    for jump in fld.jumps:
        pairing = float(np.dot(jump.xi, jump.eta))
        print(
            f"  surface <x, {jump.normal_int}> = {jump.offset:g} mod 1:"
            f"  xi = {np.round(jump.xi, 4).tolist()}"
            f"  eta = {np.round(jump.eta, 4).tolist()}"
            f"  sigma = {jump.sigma:g}  <xi, eta> = {pairing:+.3f}"
        )
    if fld.jumps:
        print(f"  total jump mass |D^s b| = {total_jump_mass(fld):.6f}")

print("\nthe distributional divergence balances volume against surface terms:")
phi = TrigPolynomial(((0.7, (1, 0), 0.3), (0.4, (2, 1), 1.1)))
for fid in FIELD_IDS:
    res = distributional_divergence_check(get_field(fid), phi, 128)
    print(f"  field {fid}: residual = {res:+.2e}")

print("\nfield E's surface atoms of divergence cancel only in total:")
e = get_field("E")
for jump in e.jumps:
    atom = float(np.dot(jump.xi, jump.eta)) * surface_quadrature(jump, lambda x: 1.0)
    print(f"  surface at {jump.offset:g}: divergence atom = {atom:+.1f}")
