"""Unit-quaternion geometry on the 3-sphere and 6-DoF pose arithmetic.

Quaternions are plain numpy ``(4,)`` arrays in scalar-first order
``[w, x, y, z]``; this order is used everywhere, including serialized
output.  Orientation displacements live in tangent spaces of the sphere:
``log_map`` projects onto the tangent space at a base quaternion,
``exp_map`` maps back, and ``left_trivialize`` remaps a tangent vector to
the tangent space at identity (the body frame), where its scalar part is
zero and its vector part relates to body angular velocity.

Sign handling is explicit: quaternions are never silently canonicalized.
Operations that need the shortest geodesic (``log_map``, ``quat_error``)
flip the sign of their second argument when the 4-D dot product is
negative, so ``q`` and ``-q`` measure as the same orientation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Norm tolerance enforced on every quaternion input/output.
UNIT_TOL = 1e-9
# |q0 . q| below this means the two orientations are a half turn apart:
# both sign choices give equally short geodesics, so the direction of the
# error is ambiguous and we refuse to pick one.
ANTIPODAL_TOL = 1e-12
# Below this geodesic distance the normalization in the log map is 0/0;
# the displacement is returned as exactly zero instead.
SMALL_ANGLE = 1e-8

IDENTITY = np.array([1.0, 0.0, 0.0, 0.0])


class AntipodalPairError(ValueError):
    """Raised when two quaternions are too close to antipodal to define a
    unique shortest geodesic between them."""


def as_unit_quaternion(q) -> np.ndarray:
    """Validate and return ``q`` as a float64 scalar-first unit quaternion."""
    arr = np.asarray(q, dtype=float)
    if arr.shape != (4,):
        raise ValueError(f"quaternion must have shape (4,), got {arr.shape}")
    n = np.linalg.norm(arr)
    if abs(n - 1.0) > UNIT_TOL:
        raise ValueError(f"quaternion norm {n!r} deviates from 1 by more than {UNIT_TOL}")
    return arr


def quat_normalize(q) -> np.ndarray:
    arr = np.asarray(q, dtype=float)
    n = np.linalg.norm(arr)
    if n < ANTIPODAL_TOL:
        raise ValueError("cannot normalize near-zero quaternion")
    return arr / n


def quat_conjugate(q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_mul(a, b) -> np.ndarray:
    """Hamilton product a ⊗ b (inputs need not be unit norm)."""
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ]
    )


def quat_from_axis_angle(axis, angle: float) -> np.ndarray:
    """Unit quaternion for a rotation of ``angle`` rad about ``axis``."""
    axis = np.asarray(axis, dtype=float)
    n = np.linalg.norm(axis)
    if n < ANTIPODAL_TOL:
        raise ValueError("rotation axis must be non-zero")
    half = 0.5 * angle
    out = np.empty(4)
    out[0] = math.cos(half)
    out[1:] = math.sin(half) * (axis / n)
    return out


def quat_from_rotation_vector(r) -> np.ndarray:
    """Unit quaternion for the rotation vector ``r`` (axis * angle, rad)."""
    r = np.asarray(r, dtype=float)
    angle = np.linalg.norm(r)
    if angle < SMALL_ANGLE:
        # second-order series keeps the result exactly unit-norm after normalize
        out = np.empty(4)
        out[0] = 1.0 - 0.125 * angle * angle
        out[1:] = 0.5 * r
        return quat_normalize(out)
    return quat_from_axis_angle(r, angle)


def random_unit_quaternion(rng: np.random.Generator) -> np.ndarray:
    """Uniformly distributed unit quaternion (normalized 4-D Gaussian)."""
    v = rng.standard_normal(4)
    return v / np.linalg.norm(v)


def geodesic_distance(q0, q) -> float:
    """Shortest-arc distance between two unit quaternions, in [0, pi/2].

    The sign flip folds the double cover, so q and -q are at distance 0.
    """
    q0 = as_unit_quaternion(q0)
    q = as_unit_quaternion(q)
    dot = abs(float(q0 @ q))
    return math.acos(min(dot, 1.0))


@dataclass(frozen=True)
class Tangent4:
    """A 4-vector in a tangent space of the unit-quaternion sphere.

    ``base`` names the tangent space: a unit quaternion for the tangent
    space at that point, or None for the tangent space at identity (the
    body frame), where the scalar component is zero.
    """

    components: np.ndarray
    base: np.ndarray | None = None

    def __post_init__(self):
        arr = np.asarray(self.components, dtype=float)
        if arr.shape != (4,):
            raise ValueError(f"tangent vector must have shape (4,), got {arr.shape}")
        object.__setattr__(self, "components", arr)
        if self.base is not None:
            object.__setattr__(self, "base", as_unit_quaternion(self.base))

    @property
    def vec(self) -> np.ndarray:
        """Vector (x, y, z) part."""
        return self.components[1:]

    def norm(self) -> float:
        return float(np.linalg.norm(self.components))


def _tangent_array(dq) -> np.ndarray:
    if isinstance(dq, Tangent4):
        return dq.components
    arr = np.asarray(dq, dtype=float)
    if arr.shape != (4,):
        raise ValueError(f"tangent vector must have shape (4,), got {arr.shape}")
    return arr


def log_map(q0, q) -> Tangent4:
    """Project ``q`` onto the tangent space at ``q0`` along the shortest geodesic.

    The returned displacement has norm equal to ``geodesic_distance(q0, q)``
    and is orthogonal to ``q0``.  Raises :class:`AntipodalPairError` when the
    pair is a half turn apart (|q0 . q| ~ 0), where both sign choices give
    equally short geodesics in opposite directions.
    """
    q0 = as_unit_quaternion(q0)
    q = as_unit_quaternion(q)
    dot = float(q0 @ q)
    if abs(dot) < ANTIPODAL_TOL:
        raise AntipodalPairError(
            "antipodal pair: orientations are a half turn apart, "
            "shortest geodesic direction is ambiguous"
        )
    if dot < 0.0:
        q = -q
        dot = -dot
    d = math.acos(min(dot, 1.0))
    if d < SMALL_ANGLE:
        return Tangent4(np.zeros(4), base=q0)
    u = q - dot * q0
    n = float(np.linalg.norm(u))
    if n < 1e-12:
        # q coincides with q0 up to input rounding: arccos inflates the
        # distance while the direction is pure noise
        return Tangent4(np.zeros(4), base=q0)
    return Tangent4((d / n) * u, base=q0)


def exp_map(q0, dq) -> np.ndarray:
    """Map a tangent displacement at ``q0`` back onto the sphere.

    Inverse of :func:`log_map`: follows the geodesic from ``q0`` in the
    direction of ``dq`` for arc length ``|dq|``.
    """
    q0 = as_unit_quaternion(q0)
    v = _tangent_array(dq)
    d = float(np.linalg.norm(v))
    if d >= SMALL_ANGLE and abs(float(v @ q0)) / d > 1e-6:
        raise ValueError("tangent vector is not orthogonal to the base quaternion")
    if d < SMALL_ANGLE:
        return q0.copy()
    return quat_normalize(q0 * math.cos(d) + (v / d) * math.sin(d))


def left_trivialize(q0, dq) -> Tangent4:
    """Remap a tangent vector at ``q0`` to the tangent space at identity.

    Linear in ``dq``: multiplication by the inverse base quaternion.  The
    result lives in the body frame and has zero scalar part.
    """
    q0 = as_unit_quaternion(q0)
    return Tangent4(quat_mul(quat_conjugate(q0), _tangent_array(dq)), base=None)


def left_detrivialize(q0, dq_body) -> Tangent4:
    """Inverse of :func:`left_trivialize`: body frame back to tangent at ``q0``."""
    q0 = as_unit_quaternion(q0)
    return Tangent4(quat_mul(q0, _tangent_array(dq_body)), base=q0)


def quat_error(q_ref, q) -> np.ndarray:
    """Body-frame orientation error (3-vector, rad) between two quaternions.

    Vector part of the left-trivialized log of ``q`` at base ``q_ref``;
    zero exactly when q is ±q_ref.  Norm equals the geodesic distance.
    """
    return left_trivialize(q_ref, log_map(q_ref, q)).vec.copy()


def quat_derivative(q_t, q_next, dt: float) -> np.ndarray:
    """Body-frame angular velocity (rad/s) taking ``q_t`` to ``q_next`` over ``dt``.

    The trivialized quaternion rate has vector part omega/2, hence the
    factor 2.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    return 2.0 * quat_error(q_t, q_next) / dt


def integrate_quat(q_t, omega, dt: float) -> np.ndarray:
    """Advance ``q_t`` by body angular velocity ``omega`` (rad/s) over ``dt``.

    Exact exponential update: q ⊗ exp([0, omega] * dt / 2), renormalized.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    q_t = as_unit_quaternion(q_t)
    u = 0.5 * dt * np.asarray(omega, dtype=float)
    theta = float(np.linalg.norm(u))
    step = np.empty(4)
    if theta < SMALL_ANGLE:
        step[0] = 1.0 - 0.5 * theta * theta
        step[1:] = u
    else:
        step[0] = math.cos(theta)
        step[1:] = (math.sin(theta) / theta) * u
    return quat_normalize(quat_mul(q_t, step))


@dataclass(frozen=True)
class Pose:
    """Position (m) and orientation quaternion of a rigid body."""

    p: np.ndarray
    q: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float)
        if p.shape != (3,):
            raise ValueError(f"position must have shape (3,), got {p.shape}")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "q", as_unit_quaternion(self.q))

    @staticmethod
    def identity() -> "Pose":
        return Pose(np.zeros(3), IDENTITY)

    def components(self) -> np.ndarray:
        """Flat 7-vector [p, q] used as the frequency-estimator input bank."""
        return np.concatenate([self.p, self.q])


@dataclass(frozen=True)
class Twist:
    """Linear velocity (m/s) and body-frame angular velocity (rad/s)."""

    v: np.ndarray
    omega: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.v, dtype=float)
        w = np.asarray(self.omega, dtype=float)
        if v.shape != (3,) or w.shape != (3,):
            raise ValueError("twist components must have shape (3,)")
        if not (np.all(np.isfinite(v)) and np.all(np.isfinite(w))):
            raise ValueError("twist components must be finite")
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "omega", w)

    @staticmethod
    def zero() -> "Twist":
        return Twist(np.zeros(3), np.zeros(3))

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.v, self.omega])


@dataclass(frozen=True)
class Wrench:
    """Force (N) and moment (N·m)."""

    f: np.ndarray
    m: np.ndarray

    def __post_init__(self):
        f = np.asarray(self.f, dtype=float)
        m = np.asarray(self.m, dtype=float)
        if f.shape != (3,) or m.shape != (3,):
            raise ValueError("wrench components must have shape (3,)")
        object.__setattr__(self, "f", f)
        object.__setattr__(self, "m", m)

    @staticmethod
    def zero() -> "Wrench":
        return Wrench(np.zeros(3), np.zeros(3))

    @staticmethod
    def from_array(u) -> "Wrench":
        u = np.asarray(u, dtype=float)
        return Wrench(u[:3], u[3:6])

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.f, self.m])


def pose_diff(x_ref: Pose, x: Pose) -> np.ndarray:
    """6-vector difference [p_ref - p, quat_error(q_ref, q)] (m, rad)."""
    out = np.empty(6)
    out[:3] = x_ref.p - x.p
    out[3:] = quat_error(x_ref.q, x.q)
    return out


def tracking_error(x_ref: Pose, x: Pose) -> np.ndarray:
    """6-vector pose error for closed-loop control (m, rad).

    Same norm as :func:`pose_diff`, but the rotation rows are
    ``quat_error(q, q_ref)`` so that both halves point from the current
    pose toward the reference; a positive gain on this error is restoring
    in both translation and rotation.  (``quat_error(a, b)`` is the exact
    negation of ``quat_error(b, a)``.)
    """
    out = np.empty(6)
    out[:3] = x_ref.p - x.p
    out[3:] = quat_error(x.q, x_ref.q)
    return out
