"""Rigid transform representations and the conversions between them.

Six interchangeable forms are supported:

========================  =====  ===============================================
form                      arity  payload layout
========================  =====  ===============================================
``matrix``                16     row-major 4x4, scale folded in (M = T R S)
``angle_axis_t``          7      angle, axis(3), t(3)
``quat_t``                7      q0, q1, q2, q3, t(3)
``dual_quat``             8      real quaternion(4), dual quaternion(4)
``pga_motor``             16     PGA blade coefficients of T*R
``cga_motor``             32     CGA blade coefficients of T*R
========================  =====  ===============================================

Quaternions are ``(w, x, y, z)`` arrays.  Every form other than ``matrix`` is
rigid and carries a uniform scale in a separate 3-vector side channel.
Conversions route through ``(q, t, scale)``; quaternion signs are
canonicalized to ``q0 >= 0`` with ties broken by the first nonzero of
``q1, q2, q3`` being positive.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .ga import CGA, N_INF, PGA, Algebra, Multivector, check_normalized, sandwich_matrix, embed_points, extract_points

TOL = 1e-9


class InvalidTransform(ValueError):
    pass


class NonRigidTransform(InvalidTransform):
    pass


class Form(str, enum.Enum):
    MATRIX = "matrix"
    ANGLE_AXIS_T = "angle_axis_t"
    QUAT_T = "quat_t"
    DUAL_QUAT = "dual_quat"
    PGA_MOTOR = "pga_motor"
    CGA_MOTOR = "cga_motor"

    def __str__(self):
        return self.value


ARITY = {
    Form.MATRIX: 16,
    Form.ANGLE_AXIS_T: 7,
    Form.QUAT_T: 7,
    Form.DUAL_QUAT: 8,
    Form.PGA_MOTOR: 16,
    Form.CGA_MOTOR: 32,
}

ALL_FORMS = tuple(Form)


# -- quaternions ---------------------------------------------------------------

def quat_mul(a, b):
    w1, x1, y1, z1 = a
    w2, x2, y2, z2 = b
    return np.array([
        w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
        w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
        w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
        w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
    ])


def quat_conj(q):
    return np.array([q[0], -q[1], -q[2], -q[3]])


def canonical_quat(q):
    q = np.asarray(q, dtype=float)
    for c in q:
        if c != 0.0:
            return -q if c < 0 else q.copy()
    return q.copy()


def _check_unit(q, what="quaternion"):
    n = np.linalg.norm(q)
    if abs(n - 1.0) > TOL:
        raise InvalidTransform(f"{what} must have unit norm, got {n:.12g}")


def quat_rotate(q, points):
    """Rotate ``(n, 3)`` points by unit quaternion ``q`` (``q p q*``)."""
    q = np.asarray(q, dtype=float)
    _check_unit(q)
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    w, u = q[0], q[1:]
    uv = np.cross(u, pts)
    return pts + 2.0 * w * uv + 2.0 * np.cross(u, uv)


def rotation_from_quat(q):
    q = np.asarray(q, dtype=float)
    _check_unit(q)
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def check_rotation(r, tol=TOL):
    r = np.asarray(r, dtype=float)
    if r.shape != (3, 3):
        raise InvalidTransform(f"rotation must be 3x3, got {r.shape}")
    if np.max(np.abs(r.T @ r - np.eye(3))) > tol or np.linalg.det(r) < 0:
        raise InvalidTransform("not a proper rotation matrix")


def quat_from_rotation(r):
    """Unit quaternion for a proper rotation matrix (Shepperd's method)."""
    r = np.asarray(r, dtype=float)
    check_rotation(r, 1e-6)
    trace = r[0, 0] + r[1, 1] + r[2, 2]
    diag = np.diag(r)
    # pick the largest of w^2, x^2, y^2, z^2 to divide by
    i = int(np.argmax(diag))
    if trace >= diag[i]:
        s = 2.0 * np.sqrt(1.0 + trace)
        q = np.array([0.25 * s, (r[2, 1] - r[1, 2]) / s, (r[0, 2] - r[2, 0]) / s, (r[1, 0] - r[0, 1]) / s])
    elif i == 0:
        s = 2.0 * np.sqrt(1.0 + r[0, 0] - r[1, 1] - r[2, 2])
        q = np.array([(r[2, 1] - r[1, 2]) / s, 0.25 * s, (r[0, 1] + r[1, 0]) / s, (r[0, 2] + r[2, 0]) / s])
    elif i == 1:
        s = 2.0 * np.sqrt(1.0 - r[0, 0] + r[1, 1] - r[2, 2])
        q = np.array([(r[0, 2] - r[2, 0]) / s, (r[0, 1] + r[1, 0]) / s, 0.25 * s, (r[1, 2] + r[2, 1]) / s])
    else:
        s = 2.0 * np.sqrt(1.0 - r[0, 0] - r[1, 1] + r[2, 2])
        q = np.array([(r[1, 0] - r[0, 1]) / s, (r[0, 2] + r[2, 0]) / s, (r[1, 2] + r[2, 1]) / s, 0.25 * s])
    return canonical_quat(q / np.linalg.norm(q))


def quat_from_angle_axis(angle, axis):
    axis = np.asarray(axis, dtype=float)
    n = np.linalg.norm(axis)
    if n == 0.0:
        if angle != 0.0:
            raise InvalidTransform("zero rotation axis with nonzero angle")
        return np.array([1.0, 0.0, 0.0, 0.0])
    if abs(n - 1.0) > TOL:
        raise InvalidTransform(f"rotation axis must be a unit vector, got norm {n:.12g}")
    half = 0.5 * angle
    return np.concatenate([[np.cos(half)], np.sin(half) * axis])


def angle_axis_from_quat(q):
    """Returns ``(angle, axis)`` with angle in ``[0, pi]``; axis is ``x`` at angle 0."""
    q = canonical_quat(q)
    _check_unit(q)
    v = q[1:]
    s = np.linalg.norm(v)
    if s == 0.0:
        return 0.0, np.array([1.0, 0.0, 0.0])
    return 2.0 * np.arctan2(s, q[0]), v / s


# -- dual quaternions ------------------------------------------------------------

def dq_from_qt(q, t):
    q = np.asarray(q, dtype=float)
    _check_unit(q)
    dual = 0.5 * quat_mul(np.concatenate([[0.0], t]), q)
    return np.concatenate([q, dual])


def qt_from_dq(dq):
    dq = np.asarray(dq, dtype=float)
    real, dual = dq[:4], dq[4:]
    _check_unit(real, "dual quaternion real part")
    t = 2.0 * quat_mul(dual, quat_conj(real))
    return real.copy(), t[1:]


# -- GA translators, rotors and motors -------------------------------------------

_PGA_T = [PGA.blade_index(b) for b in ("e01", "e02", "e03")]
_CGA_T4 = [CGA.blade_index(b) for b in ("e14", "e24", "e34")]
_CGA_T5 = [CGA.blade_index(b) for b in ("e15", "e25", "e35")]
_ROTOR_BLADES = ("e12", "e13", "e23")


def _algebra(algebra):
    if isinstance(algebra, Algebra):
        return algebra
    return {"pga": PGA, "cga": CGA}[str(algebra).lower()]


def translator_from_t(t, algebra) -> Multivector:
    alg = _algebra(algebra)
    t = np.asarray(t, dtype=float)
    if alg is PGA:
        c = np.zeros(16)
        c[0] = 1.0
        c[_PGA_T] = -0.5 * t
        return PGA.mv(c)
    vec = CGA.zero()
    for i in range(3):
        vec = vec + CGA.basis_vector(i) * t[i]
    return 1.0 - 0.5 * (vec * N_INF)


def _translator_blades(alg):
    return _PGA_T if alg is PGA else _CGA_T4 + _CGA_T5


def t_from_translator(T: Multivector, tol=TOL):
    alg = T.algebra
    s = T.scalar
    if s == 0.0:
        raise InvalidTransform("translator has zero scalar part")
    c = T.coeffs / s
    mask = np.ones(alg.blade_count, dtype=bool)
    mask[0] = False
    mask[_translator_blades(alg)] = False
    if np.max(np.abs(c[mask])) > tol:
        raise InvalidTransform("not a translator: unexpected blades present")
    if alg is PGA:
        return -2.0 * c[_PGA_T]
    if np.max(np.abs(c[_CGA_T4] - c[_CGA_T5])) > tol:
        raise InvalidTransform("not a translator: e_i4 and e_i5 parts differ")
    return -2.0 * c[_CGA_T4]


def rotor_from_quat(q, algebra) -> Multivector:
    alg = _algebra(algebra)
    q = np.asarray(q, dtype=float)
    _check_unit(q)
    c = np.zeros(alg.blade_count)
    c[0] = q[0]
    c[alg.blade_index("e12")] = -q[3]
    c[alg.blade_index("e13")] = q[2]
    c[alg.blade_index("e23")] = -q[1]
    return alg.mv(c)


def _rotor_mask(alg):
    mask = np.zeros(alg.blade_count, dtype=bool)
    mask[0] = True
    mask[[alg.blade_index(b) for b in _ROTOR_BLADES]] = True
    return mask


def quat_from_rotor(R: Multivector, tol=TOL):
    alg = R.algebra
    c = R.coeffs
    if np.max(np.abs(c[~_rotor_mask(alg)])) > tol:
        raise InvalidTransform("not a rotor: unexpected blades present")
    q = np.array([c[0], -c[alg.blade_index("e23")], c[alg.blade_index("e13")], -c[alg.blade_index("e12")]])
    _check_unit(q, "rotor")
    return canonical_quat(q)


def motor_compose(T: Multivector, R: Multivector) -> Multivector:
    """``T * R``: rotate first, then translate."""
    return T * R


def motor_decompose(M: Multivector):
    """Split a motor into ``(T, R)`` with ``T * R == M / |M|`` up to sign.

    The motor is first scaled by its norm, so any nonzero multiple of a motor
    (negative ones included, since ``M`` and ``-M`` act alike) decomposes to
    the same pair.  The rotor sign is canonicalized the same way as
    quaternions and the translator always has scalar part 1.
    """
    alg = M.algebra
    norm = M.norm()
    if norm == 0.0:
        raise InvalidTransform("zero multivector is not a motor")
    M = M / norm
    try:
        check_normalized(M)
    except ValueError as exc:
        raise InvalidTransform(f"not a motor: {exc}") from None
    # the rotor is the part free of e0 (PGA) or of e4/e5 (CGA)
    if alg is PGA:
        free = np.array([k & 1 == 0 for k in range(alg.blade_count)])
    else:
        free = np.array([k & 0b11000 == 0 for k in range(alg.blade_count)])
    R = alg.mv(np.where(free, M.coeffs, 0.0))
    R = R / R.norm()
    q = quat_from_rotor(R)
    R = rotor_from_quat(q, alg)
    T = translator_from_t(t_from_translator(M * ~R), alg)
    return T, R


# -- matrices ------------------------------------------------------------------

def decompose_matrix(m):
    """Split an affine TRS matrix into ``(rotation, t, scale)``."""
    m = np.asarray(m, dtype=float).reshape(4, 4)
    if np.max(np.abs(m[3] - [0, 0, 0, 1])) > TOL:
        raise InvalidTransform("non-TRS matrix: last row must be (0, 0, 0, 1)")
    block = m[:3, :3]
    scale = np.linalg.norm(block, axis=0)
    if np.any(scale < 1e-12):
        raise InvalidTransform("non-TRS matrix: singular linear part")
    rot = block / scale
    if np.max(np.abs(rot.T @ rot - np.eye(3))) > 1e-6 or np.linalg.det(rot) < 0:
        raise InvalidTransform("non-TRS matrix: shear or reflection")
    return rot, m[:3, 3].copy(), scale


def compose_matrix(rotation, t, scale=(1.0, 1.0, 1.0)):
    m = np.eye(4)
    m[:3, :3] = np.asarray(rotation, dtype=float) * np.asarray(scale, dtype=float)
    m[:3, 3] = t
    return m


# -- the tagged representation -----------------------------------------------------

def _uniform(scale):
    return np.max(np.abs(scale - scale[0])) <= TOL * max(1.0, abs(scale[0]))


@dataclass(frozen=True, eq=False)
class TransformRepr:
    """One transform in one of the six forms, plus a scale side channel.

    Construction only checks arity; :meth:`validate` checks the form's
    invariants and is called by every conversion.  Instances are immutable,
    so the decomposition and the matrix are computed once and cached.
    """

    form: Form
    coeffs: np.ndarray
    scale: np.ndarray = field(default_factory=lambda: np.ones(3))

    def __post_init__(self):
        form = Form(self.form)
        coeffs = np.array(self.coeffs, dtype=float).reshape(-1)
        scale = np.array(self.scale, dtype=float).reshape(-1)
        if coeffs.size != ARITY[form]:
            raise InvalidTransform(f"{form.value} needs {ARITY[form]} coefficients, got {coeffs.size}")
        if scale.size != 3:
            raise InvalidTransform(f"scale needs 3 values, got {scale.size}")
        if not (np.all(np.isfinite(coeffs)) and np.all(np.isfinite(scale))):
            raise InvalidTransform("non-finite transform data")
        coeffs.flags.writeable = False
        scale.flags.writeable = False
        object.__setattr__(self, "form", form)
        object.__setattr__(self, "coeffs", coeffs)
        object.__setattr__(self, "scale", scale)

    def __deepcopy__(self, memo):
        return self  # immutable

    def __repr__(self):
        return f"TransformRepr({self.form.value}, coeffs={self.coeffs.tolist()}, scale={self.scale.tolist()})"

    @classmethod
    def identity(cls, form=Form.MATRIX):
        return from_qts([1.0, 0, 0, 0], np.zeros(3), np.ones(3), Form(form))

    @classmethod
    def from_matrix(cls, m):
        return cls(Form.MATRIX, np.asarray(m, dtype=float).reshape(16))

    def validate(self):
        to_qts(self)
        return self

    def to(self, form) -> "TransformRepr":
        return convert(self, form)

    def matrix(self) -> np.ndarray:
        m = self.__dict__.get("_matrix")
        if m is None:
            m = convert(self, Form.MATRIX).coeffs.reshape(4, 4)
            object.__setattr__(self, "_matrix", m)
        return m.copy()

    def apply(self, points) -> np.ndarray:
        return apply(self, points)


def motor_of(x: TransformRepr) -> Multivector:
    return (PGA if x.form is Form.PGA_MOTOR else CGA).mv(x.coeffs)


def to_qts(x: TransformRepr):
    """The hub form: unit quaternion (canonical sign), translation, scale."""
    cached = x.__dict__.get("_qts")
    if cached is None:
        cached = tuple(np.asarray(v, dtype=float) for v in _to_qts(x))
        for v in cached:
            v.flags.writeable = False
        object.__setattr__(x, "_qts", cached)
    return tuple(v.copy() for v in cached)


def _to_qts(x: TransformRepr):
    f = x.form
    c = x.coeffs
    if f is not Form.MATRIX:
        if np.any(x.scale <= 0) or not _uniform(x.scale):
            raise NonRigidTransform(f"{f.value} requires a uniform positive scale, got {x.scale.tolist()}")
    if f is Form.MATRIX:
        rot, t, s = decompose_matrix(c)
        return quat_from_rotation(rot), t, s
    if f is Form.ANGLE_AXIS_T:
        angle = c[0]
        if not 0.0 <= angle <= np.pi + TOL:
            raise InvalidTransform(f"angle must lie in [0, pi], got {angle}")
        return canonical_quat(quat_from_angle_axis(angle, c[1:4])), c[4:7].copy(), x.scale.copy()
    if f is Form.QUAT_T:
        _check_unit(c[:4])
        return canonical_quat(c[:4]), c[4:7].copy(), x.scale.copy()
    if f is Form.DUAL_QUAT:
        if abs(np.dot(c[:4], c[4:])) > TOL:
            raise InvalidTransform("dual quaternion real and dual parts must be orthogonal")
        q, t = qt_from_dq(c)
        return canonical_quat(q), t, x.scale.copy()
    m = motor_of(x)
    try:
        check_normalized(m)
    except ValueError as exc:
        raise InvalidTransform(str(exc)) from None
    T, R = motor_decompose(m)
    return quat_from_rotor(R), t_from_translator(T), x.scale.copy()


def from_qts(q, t, scale, form) -> TransformRepr:
    form = Form(form)
    q = np.asarray(q, dtype=float)
    t = np.asarray(t, dtype=float)
    scale = np.asarray(scale, dtype=float)
    if form is Form.MATRIX:
        return TransformRepr(form, compose_matrix(rotation_from_quat(q), t, scale).reshape(16))
    if np.any(scale <= 0) or not _uniform(scale):
        raise NonRigidTransform(f"non-rigid transform not representable as {form.value} (scale {scale.tolist()})")
    if form is Form.ANGLE_AXIS_T:
        angle, axis = angle_axis_from_quat(q)
        coeffs = np.concatenate([[angle], axis, t])
    elif form is Form.QUAT_T:
        coeffs = np.concatenate([q, t])
    elif form is Form.DUAL_QUAT:
        coeffs = dq_from_qt(q, t)
    else:
        alg = PGA if form is Form.PGA_MOTOR else CGA
        coeffs = motor_compose(translator_from_t(t, alg), rotor_from_quat(q, alg)).coeffs
    return TransformRepr(form, coeffs, scale)


def convert(x: TransformRepr, form) -> TransformRepr:
    form = Form(form)
    if x.form is form:
        x.validate()
        return x
    return from_qts(*to_qts(x), form)


def apply(x: TransformRepr, points) -> np.ndarray:
    """Transform a 3-vector or an ``(n, 3)`` array of points."""
    pts = np.asarray(points, dtype=float)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    f = x.form
    if f is Form.MATRIX:
        decompose_matrix(x.coeffs)
        m = x.coeffs.reshape(4, 4)
        out = pts @ m[:3, :3].T + m[:3, 3]
    else:
        q, t, s = to_qts(x)
        scaled = pts * s
        if f in (Form.PGA_MOTOR, Form.CGA_MOTOR):
            m = motor_of(x)
            m = m / m.norm()
            out = extract_points(m.algebra, embed_points(m.algebra, scaled) @ sandwich_matrix(m).T)
        else:
            out = quat_rotate(q, scaled) + t
    return out[0] if single else out
