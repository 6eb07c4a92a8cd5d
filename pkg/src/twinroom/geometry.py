"""Small vector/quaternion toolkit shared by the whole engine.

Conventions used everywhere:
  * positions are numpy float64 arrays of shape (3,), y is up, units are meters
  * quaternions are numpy arrays [w, x, y, z], unit norm
  * yaw is a rotation about +y; yaw 0 faces +z, positive yaw turns +z toward +x
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

UP = np.array([0.0, 1.0, 0.0])
FORWARD = np.array([0.0, 0.0, 1.0])

_EPS = 1e-12


def vec3(x: float, y: float, z: float) -> np.ndarray:
    return np.array([float(x), float(y), float(z)])


def norm(v) -> float:
    v = np.asarray(v, dtype=float)
    return float(math.sqrt(float(np.dot(v, v))))


def normalized(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    n = norm(v)
    if n < _EPS:
        raise ValueError("cannot normalize a near-zero vector")
    return v / n


def horizontal(v) -> np.ndarray:
    """Projection of v onto the ground plane (y zeroed)."""
    v = np.asarray(v, dtype=float)
    return np.array([v[0], 0.0, v[2]])


def horizontal_distance(a, b) -> float:
    dx = float(a[0]) - float(b[0])
    dz = float(a[2]) - float(b[2])
    return math.hypot(dx, dz)


def wrap_angle(a: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    a = math.fmod(a, 2.0 * math.pi)
    if a <= -math.pi:
        a += 2.0 * math.pi
    elif a > math.pi:
        a -= 2.0 * math.pi
    return a


def wrap_angle_positive(a: float) -> float:
    """Wrap an angle to [0, 2*pi)."""
    a = math.fmod(a, 2.0 * math.pi)
    if a < 0.0:
        a += 2.0 * math.pi
    if a >= 2.0 * math.pi:  # fmod of a tiny negative can round back up to 2*pi
        a = 0.0
    return a


def angle_between(a, b) -> float:
    """Unsigned angle in radians between two nonzero vectors."""
    d = float(np.dot(normalized(a), normalized(b)))
    return math.acos(max(-1.0, min(1.0, d)))


# --- quaternions ------------------------------------------------------------

QUAT_IDENTITY = np.array([1.0, 0.0, 0.0, 0.0])


def quat(w: float, x: float, y: float, z: float) -> np.ndarray:
    return np.array([float(w), float(x), float(y), float(z)])


def quat_normalize(q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    n = norm(q)
    if n < _EPS:
        raise ValueError("cannot normalize a near-zero quaternion")
    return q / n


def quat_is_unit(q, tol: float = 1e-6) -> bool:
    return abs(norm(q) - 1.0) <= tol


def quat_mul(a, b) -> np.ndarray:
    aw, ax, ay, az = (float(c) for c in a)
    bw, bx, by, bz = (float(c) for c in b)
    return np.array(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ]
    )


def quat_conj(q) -> np.ndarray:
    return np.array([float(q[0]), -float(q[1]), -float(q[2]), -float(q[3])])


def quat_rotate(q, v) -> np.ndarray:
    """Rotate vector v by unit quaternion q."""
    qv = np.array([float(q[1]), float(q[2]), float(q[3])])
    w = float(q[0])
    v = np.asarray(v, dtype=float)
    t = 2.0 * np.cross(qv, v)
    return v + w * t + np.cross(qv, t)


def quat_from_axis_angle(axis, angle: float) -> np.ndarray:
    axis = normalized(axis)
    h = 0.5 * float(angle)
    s = math.sin(h)
    return np.array([math.cos(h), axis[0] * s, axis[1] * s, axis[2] * s])


def quat_from_yaw(yaw: float) -> np.ndarray:
    h = 0.5 * float(yaw)
    return np.array([math.cos(h), 0.0, math.sin(h), 0.0])


def yaw_of(q) -> float:
    """Yaw of the rotated forward axis, in [0, 2*pi)."""
    f = quat_rotate(q, FORWARD)
    if abs(f[0]) < _EPS and abs(f[2]) < _EPS:
        return 0.0
    return wrap_angle_positive(math.atan2(float(f[0]), float(f[2])))


def quat_between(a, b) -> np.ndarray:
    """Shortest-arc rotation taking unit vector a onto unit vector b."""
    a = normalized(a)
    b = normalized(b)
    d = float(np.dot(a, b))
    if d > 1.0 - 1e-12:
        return QUAT_IDENTITY.copy()
    if d < -1.0 + 1e-12:
        axis = _any_perpendicular(a)
        return quat_from_axis_angle(axis, math.pi)
    axis = np.cross(a, b)
    w = 1.0 + d
    return quat_normalize(np.array([w, axis[0], axis[1], axis[2]]))


def look_rotation(forward, up=UP) -> np.ndarray:
    """Rotation mapping +z to `forward` with +y as close to `up` as possible."""
    f = normalized(forward)
    u = np.asarray(up, dtype=float)
    right = np.cross(u, f)
    if norm(right) < 1e-9:
        # forward parallel to up: pick a deterministic right axis
        right = np.cross(np.array([0.0, 0.0, 1.0]), f)
        if norm(right) < 1e-9:
            right = np.array([1.0, 0.0, 0.0])
    right = normalized(right)
    u = np.cross(f, right)
    m = np.column_stack([right, u, f])
    return _quat_from_matrix(m)


def _quat_from_matrix(m: np.ndarray) -> np.ndarray:
    t = float(m[0, 0] + m[1, 1] + m[2, 2])
    if t > 0.0:
        s = math.sqrt(t + 1.0) * 2.0
        w = 0.25 * s
        x = (m[2, 1] - m[1, 2]) / s
        y = (m[0, 2] - m[2, 0]) / s
        z = (m[1, 0] - m[0, 1]) / s
    elif m[0, 0] > m[1, 1] and m[0, 0] > m[2, 2]:
        s = math.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2.0
        w = (m[2, 1] - m[1, 2]) / s
        x = 0.25 * s
        y = (m[0, 1] + m[1, 0]) / s
        z = (m[0, 2] + m[2, 0]) / s
    elif m[1, 1] > m[2, 2]:
        s = math.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2]) * 2.0
        w = (m[0, 2] - m[2, 0]) / s
        x = (m[0, 1] + m[1, 0]) / s
        y = 0.25 * s
        z = (m[1, 2] + m[2, 1]) / s
    else:
        s = math.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1]) * 2.0
        w = (m[1, 0] - m[0, 1]) / s
        x = (m[0, 2] + m[2, 0]) / s
        y = (m[1, 2] + m[2, 1]) / s
        z = 0.25 * s
    return quat_normalize(np.array([w, x, y, z]))


def _any_perpendicular(v) -> np.ndarray:
    v = normalized(v)
    if abs(v[0]) <= abs(v[1]) and abs(v[0]) <= abs(v[2]):
        other = np.array([1.0, 0.0, 0.0])
    elif abs(v[1]) <= abs(v[2]):
        other = np.array([0.0, 1.0, 0.0])
    else:
        other = np.array([0.0, 0.0, 1.0])
    return normalized(np.cross(v, other))


def slerp_vec(a, b, t: float) -> np.ndarray:
    """Great-circle interpolation between two unit vectors.

    t=0 returns a, t=1 returns b, constant angular speed in t. Antipodal
    inputs rotate through a deterministic perpendicular axis.
    """
    a = normalized(a)
    b = normalized(b)
    d = float(np.dot(a, b))
    if d > 1.0 - 1e-12:
        return normalized(a + (b - a) * t)
    if d < -1.0 + 1e-12:
        axis = _any_perpendicular(a)
        return quat_rotate(quat_from_axis_angle(axis, math.pi * t), a)
    omega = math.acos(max(-1.0, min(1.0, d)))
    so = math.sin(omega)
    return (math.sin((1.0 - t) * omega) / so) * a + (math.sin(t * omega) / so) * b


def point_to_line_distance(point, origin, direction) -> float:
    """Distance from a point to the infinite line through origin along direction."""
    d = normalized(direction)
    rel = np.asarray(point, dtype=float) - np.asarray(origin, dtype=float)
    return norm(rel - float(np.dot(rel, d)) * d)


@dataclass(frozen=True)
class Transform:
    """Position + orientation pair. Used both for world poses and for
    root-relative offsets; which one is contextual."""

    position: np.ndarray
    orientation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float))
        object.__setattr__(self, "orientation", np.asarray(self.orientation, dtype=float))

    def apply(self, local_point) -> np.ndarray:
        """Map a point from this frame into the parent frame."""
        return self.position + quat_rotate(self.orientation, local_point)

    def compose(self, child: "Transform") -> "Transform":
        """This transform applied after `child` (child expressed locally)."""
        return Transform(
            position=self.apply(child.position),
            orientation=quat_mul(self.orientation, child.orientation),
        )

    def inverse_apply(self, world_point) -> np.ndarray:
        return quat_rotate(quat_conj(self.orientation), np.asarray(world_point, dtype=float) - self.position)

    def forward(self) -> np.ndarray:
        return quat_rotate(self.orientation, FORWARD)


IDENTITY_TRANSFORM = Transform(np.zeros(3), QUAT_IDENTITY.copy())
