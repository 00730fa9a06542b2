"""
One rigid transform, six ways
=============================

A pose can be stored as a matrix, an angle-axis pair, a quaternion, a dual
quaternion, or a motor in projective or conformal geometric algebra.  Here we
walk a single pose around all of them and check that each one moves points
the same way.
"""
import numpy as np

from unisg.ga import CGA, PGA, sandwich_apply
from unisg.xform import ALL_FORMS, Form, TransformRepr, convert, quat_from_angle_axis, translator_from_t

# a quarter turn about z, then a shift along x
q = quat_from_angle_axis(np.pi / 2, [0, 0, 1])
m = np.eye(4)
m[:3, :3] = [[0, -1, 0], [1, 0, 0], [0, 0, 1]]
m[:3, 3] = [2, 0, 0]
pose = TransformRepr.from_matrix(m)

points = np.array([[1.0, 0, 0], [0, 1, 0], [1, 2, 3]])
print("matrix applied to the points:")
print(pose.apply(points))

for form in ALL_FORMS:
    x = convert(pose, form)
    err = np.max(np.abs(x.apply(points) - pose.apply(points)))
    print(f"{form.value:>13}  {x.coeffs.size:2d} numbers  max disagreement {err:.1e}")

###############################################################################
# Motors are products of a translator and a rotor.  Scaling a motor by any
# nonzero number does not change what it does.

for alg in (PGA, CGA):
    T = translator_from_t([2, 0, 0], alg)
    M = convert(pose, Form.PGA_MOTOR if alg is PGA else Form.CGA_MOTOR)
    motor = alg.mv(M.coeffs)
    print(alg.name, "translator:", T)
    once = sandwich_apply(motor, [1, 0, 0]).round(12) + 0.0
    thrice = sandwich_apply((3.0 * motor).normalized(), [1, 0, 0]).round(12) + 0.0
    print(f"{alg.name} (1, 0, 0) -> {once}, and with the motor tripled -> {thrice}")

print("quaternion from angle-axis:", q)
