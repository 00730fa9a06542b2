"""Dense Clifford algebra kernel for 3D PGA and 3D CGA.

Blades are indexed by bitmask: bit ``i`` set means basis vector ``i`` is a
factor, and every blade is stored in canonical ascending order.  The product
sign is the parity of transpositions needed to sort the concatenated factors,
times the metric square of every repeated factor.

Presets
-------
``PGA`` is Cl(3,0,1) with basis ``e0, e1, e2, e3`` (bits 0..3), ``e0**2 = 0``.
``CGA`` is Cl(4,1,0) with basis ``e1 .. e5`` (bits 0..4), ``e5**2 = -1``.

CGA points use the null basis ``n_o = (e5 - e4) / 2`` and ``n_inf = e4 + e5``
so that ``n_o . n_inf = -1``.

PGA points are the plane-based trivectors
``P = e123 + x e032 + y e013 + z e021``; with the translator
``1 - 0.5 e0 (t1 e1 + t2 e2 + t3 e3)`` the sandwich ``T P ~T`` moves the point
by ``+t``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

NORMALIZED_TOL = 1e-9


class SignatureMismatch(ValueError):
    pass


class NotNormalizedError(ValueError):
    pass


@dataclass(frozen=True)
class Signature:
    p: int
    q: int
    r: int

    @property
    def n(self) -> int:
        return self.p + self.q + self.r

    @property
    def blade_count(self) -> int:
        return 1 << self.n


def _reorder_sign(a: int, b: int) -> int:
    a >>= 1
    swaps = 0
    while a:
        swaps += bin(a & b).count("1")
        a >>= 1
    return -1 if swaps & 1 else 1


class Algebra:
    """A Clifford algebra given by the metric square of each basis vector."""

    def __init__(self, metric, labels, name):
        metric = tuple(int(m) for m in metric)
        if len(metric) > 6:
            raise ValueError("only algebras with at most 6 basis vectors are supported")
        if any(m not in (-1, 0, 1) for m in metric):
            raise ValueError(f"metric entries must be -1, 0 or +1, got {metric}")
        if len(labels) != len(metric):
            raise ValueError("one label per basis vector")
        self.metric = metric
        self.labels = tuple(labels)
        self.name = name
        self.signature = Signature(metric.count(1), metric.count(-1), metric.count(0))
        self.n = len(metric)
        self.blade_count = 1 << self.n
        self.grades = np.array([bin(k).count("1") for k in range(self.blade_count)])

        size = self.blade_count
        sign = np.zeros((size, size))
        for a in range(size):
            for b in range(size):
                s = _reorder_sign(a, b)
                common = a & b
                for i in range(self.n):
                    if common >> i & 1:
                        s *= metric[i]
                sign[a, b] = s
        self._sign = sign
        k = np.arange(size)
        self._xor = k[:, None] ^ k[None, :]
        # left[k, j] = sign[k ^ j, j] -> (a*b)_k = sum_j a[k^j] left[k, j] b[j]
        self._left_sign = sign[self._xor, k[None, :]]
        # right[k, i] = sign[i, k ^ i] -> (a*b)_k = sum_i a[i] right[k, i] b[k^i]
        self._right_sign = sign[k[None, :], self._xor]
        self._reverse_sign = np.array([(-1) ** (g * (g - 1) // 2) for g in self.grades], dtype=float)

    def __repr__(self):
        s = self.signature
        return f"Algebra({self.name}, Cl({s.p},{s.q},{s.r}))"

    # -- blades -----------------------------------------------------------
    def blade_name(self, mask: int) -> str:
        if mask == 0:
            return "1"
        return "e" + "".join(self.labels[i] for i in range(self.n) if mask >> i & 1)

    @cached_property
    def _name_to_mask(self):
        return {self.blade_name(k): k for k in range(self.blade_count)}

    def blade_index(self, name: str) -> int:
        """Index of a blade given as e.g. ``"e12"``; reordered names carry a sign
        and are rejected here, use :meth:`blade` for those."""
        try:
            return self._name_to_mask[name]
        except KeyError:
            raise KeyError(f"{name!r} is not a canonical blade of {self.name}") from None

    def blade(self, name: str, value: float = 1.0) -> "Multivector":
        """Multivector ``value * name``; accepts non-canonical orderings (``"e032"``)."""
        if name in ("1", ""):
            return self.scalar(value)
        if not name.startswith("e"):
            raise KeyError(name)
        result = self.scalar(value)
        for ch in name[1:]:
            result = result * self.basis_vector(self.labels.index(ch))
        return result

    def basis_vector(self, i: int) -> "Multivector":
        c = np.zeros(self.blade_count)
        c[1 << i] = 1.0
        return Multivector(self, c)

    def scalar(self, value: float = 1.0) -> "Multivector":
        c = np.zeros(self.blade_count)
        c[0] = value
        return Multivector(self, c)

    def zero(self) -> "Multivector":
        return Multivector(self, np.zeros(self.blade_count))

    def mv(self, coeffs) -> "Multivector":
        return Multivector(self, coeffs)

    # -- products on raw coefficient arrays -----------------------------------
    def left_matrix(self, a: np.ndarray) -> np.ndarray:
        """Matrix ``L`` with ``L @ b == (a * b).coeffs``."""
        return a[self._xor] * self._left_sign

    def right_matrix(self, b: np.ndarray) -> np.ndarray:
        """Matrix ``Q`` with ``Q @ a == (a * b).coeffs``."""
        return b[self._xor] * self._right_sign

    def product(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        return self.left_matrix(a) @ b


class Multivector:
    """Immutable coefficient vector over the blades of an :class:`Algebra`."""

    __slots__ = ("algebra", "coeffs")
    __array_priority__ = 100

    def __init__(self, algebra: Algebra, coeffs):
        c = np.array(coeffs, dtype=float)
        if c.shape != (algebra.blade_count,):
            raise ValueError(
                f"{algebra.name} multivector needs {algebra.blade_count} coefficients, got shape {c.shape}"
            )
        c.flags.writeable = False
        self.algebra = algebra
        self.coeffs = c

    def _check(self, other: "Multivector"):
        if other.algebra is not self.algebra:
            raise SignatureMismatch(f"cannot combine {self.algebra.name} and {other.algebra.name} multivectors")

    def __add__(self, other):
        if isinstance(other, Multivector):
            self._check(other)
            return Multivector(self.algebra, self.coeffs + other.coeffs)
        return self + self.algebra.scalar(float(other))

    __radd__ = __add__

    def __neg__(self):
        return Multivector(self.algebra, -self.coeffs)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Multivector):
            return geometric_product(self, other)
        return Multivector(self.algebra, self.coeffs * float(other))

    def __rmul__(self, other):
        return Multivector(self.algebra, self.coeffs * float(other))

    def __truediv__(self, other):
        if isinstance(other, Multivector):
            if np.any(other.coeffs[1:] != 0):
                raise TypeError("division only by scalars")
            other = other.coeffs[0]
        other = float(other)
        if other == 0.0:
            raise ZeroDivisionError("multivector divided by zero scalar")
        return Multivector(self.algebra, self.coeffs / other)

    def __invert__(self):
        return reverse(self)

    def __getitem__(self, blade: str) -> float:
        return float(self.coeffs[self.algebra.blade_index(blade)])

    def __eq__(self, other):
        if not isinstance(other, Multivector):
            return NotImplemented
        return other.algebra is self.algebra and np.array_equal(self.coeffs, other.coeffs)

    def __hash__(self):
        return hash((self.algebra.name, self.coeffs.tobytes()))

    def __repr__(self):
        terms = [
            f"{c:+.6g}" + ("" if k == 0 else "*" + self.algebra.blade_name(k))
            for k, c in enumerate(self.coeffs)
            if c != 0
        ]
        return " ".join(terms) if terms else "0"

    @property
    def scalar(self) -> float:
        return float(self.coeffs[0])

    def grade(self, k: int) -> "Multivector":
        return grade_project(self, k)

    def is_even(self, tol: float = NORMALIZED_TOL) -> bool:
        return bool(np.all(np.abs(self.coeffs[self.algebra.grades % 2 == 1]) <= tol))

    def norm(self) -> float:
        return float(np.sqrt(abs((self * ~self).scalar)))

    def normalized(self) -> "Multivector":
        return self / self.norm()

    def allclose(self, other: "Multivector", atol: float = 1e-12) -> bool:
        self._check(other)
        return bool(np.allclose(self.coeffs, other.coeffs, rtol=0, atol=atol))


def geometric_product(a: Multivector, b: Multivector) -> Multivector:
    a._check(b)
    return Multivector(a.algebra, a.algebra.product(a.coeffs, b.coeffs))


def reverse(a: Multivector) -> Multivector:
    return Multivector(a.algebra, a.coeffs * a.algebra._reverse_sign)


def grade_project(a: Multivector, k: int) -> Multivector:
    if not 0 <= k <= a.algebra.n:
        raise ValueError(f"grade {k} out of range for {a.algebra.name} (0..{a.algebra.n})")
    return Multivector(a.algebra, np.where(a.algebra.grades == k, a.coeffs, 0.0))


PGA = Algebra((0, 1, 1, 1), "0123", "PGA")
CGA = Algebra((1, 1, 1, 1, -1), "12345", "CGA")

N_O = (CGA.basis_vector(4) - CGA.basis_vector(3)) * 0.5
N_INF = CGA.basis_vector(3) + CGA.basis_vector(4)

_PGA_E123 = PGA.blade_index("e123")
# plane-based point blades for x, y, z: e032 = -e023, e013, e021 = -e012
_PGA_POINT = (
    (PGA.blade_index("e023"), -1.0),
    (PGA.blade_index("e013"), 1.0),
    (PGA.blade_index("e012"), -1.0),
)
_CGA_E = (CGA.blade_index("e1"), CGA.blade_index("e2"), CGA.blade_index("e3"))
_CGA_E4, _CGA_E5 = CGA.blade_index("e4"), CGA.blade_index("e5")


def embed_points(algebra: Algebra, points) -> np.ndarray:
    """Rows of blade coefficients for Euclidean points (shape ``(n, 3)``)."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    out = np.zeros((len(pts), algebra.blade_count))
    if algebra is PGA:
        out[:, _PGA_E123] = 1.0
        for axis, (idx, s) in enumerate(_PGA_POINT):
            out[:, idx] = s * pts[:, axis]
    elif algebra is CGA:
        half_sq = 0.5 * np.einsum("ij,ij->i", pts, pts)
        for axis, idx in enumerate(_CGA_E):
            out[:, idx] = pts[:, axis]
        # n_o + 0.5|p|^2 n_inf on the e4, e5 blades
        out[:, _CGA_E4] = -0.5 + half_sq
        out[:, _CGA_E5] = 0.5 + half_sq
    else:
        raise ValueError(f"no point embedding for {algebra.name}")
    return out


def extract_points(algebra: Algebra, rows: np.ndarray) -> np.ndarray:
    rows = np.atleast_2d(rows)
    if algebra is PGA:
        w = rows[:, _PGA_E123]
        return np.stack([s * rows[:, idx] for idx, s in _PGA_POINT], axis=1) / w[:, None]
    if algebra is CGA:
        # -X . n_inf, the weight of a (scaled) conformal point
        w = rows[:, _CGA_E5] - rows[:, _CGA_E4]
        return rows[:, list(_CGA_E)] / w[:, None]
    raise ValueError(f"no point embedding for {algebra.name}")


def check_normalized(m: Multivector, tol: float = NORMALIZED_TOL):
    if not m.is_even(tol):
        raise NotNormalizedError(f"versor must be even-grade: {m!r}")
    err = (m * ~m - 1.0).coeffs
    if np.max(np.abs(err)) > tol:
        raise NotNormalizedError(f"versor not normalized (|m~m - 1| = {np.max(np.abs(err)):.3g})")


def sandwich_matrix(m: Multivector) -> np.ndarray:
    """Linear map ``X -> m X ~m`` on blade coefficients."""
    alg = m.algebra
    return alg.right_matrix((~m).coeffs) @ alg.left_matrix(m.coeffs)


def sandwich_apply(m: Multivector, points) -> np.ndarray:
    """Apply a normalized rotor or motor to Euclidean points.

    Accepts a single 3-vector or an ``(n, 3)`` array and returns the same
    shape.
    """
    check_normalized(m)
    pts = np.asarray(points, dtype=float)
    single = pts.ndim == 1
    rows = embed_points(m.algebra, pts)
    out = extract_points(m.algebra, rows @ sandwich_matrix(m).T)
    return out[0] if single else out
