"""Frozen audit thresholds for the release pavement configuration.

The contact-law audit reports raw defect maxima whose size is set by
stress recovery from P1 elements, not by solver tolerances, so pass
bounds cannot be universal constants. The numbers here were calibrated
on ``configs/pavement3.ini`` at its release resolution (grid spacing
h = 1/16) and frozen with a 2-4x margin over the measured defects to
absorb platform-dependent rounding in the active-set path.

Measured defect ladder on the release problem:

    entry                        h=1/16      h=1/32      h=1/64
    interface_penetration        0.0         0.0         0.0
    interface_complementarity    1.008       0.557       0.291
    interface_cone               1.203e5     1.586e5     2.254e5
    interface_stick_slip         1.186e2     6.133e1     3.066e1
    foundation_compliance        2.085e6     2.445e6     2.898e6
    foundation_stick_slip        1.506e2     9.626e1     7.481e1
    foundation_cone              9.545e5     1.174e6     1.564e6

Problem scales at h = 1/16: peak displacement 1.3e-2 m, peak recovered
contact traction 4.4e6 Pa, so h times the traction scale is about
2.8e5 Pa and h times the work scale (traction x displacement) about
3.6e3 Pa m. The jump-weighted entries sit far below their scale and
shrink like h. The cone and compliance maxima live at free nodes one
element away from the clamped corners, where nodal stress recovery
samples the corner concentration; their maxima grow slowly (about
h^-0.2) under refinement, which is why the thresholds are anchored at
the release mesh instead of a mesh-independent formula.
"""

# pass bounds for every audit entry, keyed by report field name;
# penetration is a hard nodal constraint and stays at rounding level
KKT_THRESHOLDS = {
    "interface_penetration": 1.0e-8,  # m
    "interface_complementarity": 4.0,  # Pa m
    "interface_cone": 3.0e5,  # Pa
    "interface_stick_slip": 5.0e2,  # Pa m
    "foundation_compliance": 4.5e6,  # Pa
    "foundation_cone": 2.5e6,  # Pa
    "foundation_stick_slip": 6.0e2,  # Pa m
}

# grid spacing of the release mesh the thresholds are anchored to
CANONICAL_H = 1.0 / 16.0
