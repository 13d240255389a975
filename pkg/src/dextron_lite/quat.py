"""Unit-quaternion helpers, scalar-first ``(w, x, y, z)``.

All functions broadcast over leading axes so a whole trajectory can be
processed in one call.
"""

import numpy as np

IDENTITY = np.array([1.0, 0.0, 0.0, 0.0])


def normalize(q):
    q = np.asarray(q, dtype=float)
    return q / np.linalg.norm(q, axis=-1, keepdims=True)


def conj(q):
    q = np.asarray(q, dtype=float)
    return q * np.array([1.0, -1.0, -1.0, -1.0])


def mul(a, b):
    """Hamilton product ``a * b``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    aw, ax, ay, az = np.moveaxis(a, -1, 0)
    bw, bx, by, bz = np.moveaxis(b, -1, 0)
    return np.stack([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ], axis=-1)


def log(q):
    """Logarithm of a unit quaternion, returned as a pure quaternion."""
    q = np.asarray(q, dtype=float)
    v = q[..., 1:]
    s = np.linalg.norm(v, axis=-1)
    theta = np.arctan2(s, q[..., 0])
    # theta / sin(theta) -> 1 as theta -> 0
    scale = np.where(s > 1e-12, theta / np.where(s > 1e-12, s, 1.0), 1.0)
    out = np.zeros_like(q)
    out[..., 1:] = v * scale[..., None]
    return out


def exp(p):
    """Exponential of a pure quaternion."""
    p = np.asarray(p, dtype=float)
    v = p[..., 1:]
    theta = np.linalg.norm(v, axis=-1)
    sinc = np.where(theta > 1e-12, np.sin(theta) / np.where(theta > 1e-12, theta, 1.0), 1.0)
    out = np.empty_like(p)
    out[..., 0] = np.cos(theta)
    out[..., 1:] = v * sinc[..., None]
    return out


def from_axis_angle(axis, angle):
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    half = 0.5 * np.asarray(angle, dtype=float)
    return np.concatenate([np.cos(half)[..., None], np.sin(half)[..., None] * axis], axis=-1)


def yaw(angle):
    """Rotation by ``angle`` radians about +z."""
    return from_axis_angle([0.0, 0.0, 1.0], angle)


def align_hemisphere(qs):
    """Flip signs so that consecutive quaternions have non-negative dot product."""
    qs = np.array(qs, dtype=float)
    for i in range(1, len(qs)):
        if np.dot(qs[i - 1], qs[i]) < 0.0:
            qs[i] = -qs[i]
    return qs


def slerp(q0, q1, u):
    """Spherical linear interpolation without shortest-path flipping.

    Callers that want the short arc must align hemispheres first. Squad relies
    on this: its inner slerp between control points must not be flipped.
    """
    q0 = np.asarray(q0, dtype=float)
    q1 = np.asarray(q1, dtype=float)
    u = np.asarray(u, dtype=float)
    dot = np.clip(np.sum(q0 * q1, axis=-1), -1.0, 1.0)
    theta = np.arccos(dot)
    sin_theta = np.sin(theta)
    small = sin_theta < 1e-10
    safe = np.where(small, 1.0, sin_theta)
    w0 = np.where(small, 1.0 - u, np.sin((1.0 - u) * theta) / safe)
    w1 = np.where(small, u, np.sin(u * theta) / safe)
    return normalize(w0[..., None] * q0 + w1[..., None] * q1)


def squad_control_points(qs):
    """Inner control points for a hemisphere-aligned knot sequence.

    End knots reuse themselves as missing neighbours, which makes the end
    control point equal to the knot.
    """
    qs = np.asarray(qs, dtype=float)
    prev = np.concatenate([qs[:1], qs[:-1]])
    nxt = np.concatenate([qs[1:], qs[-1:]])
    inv = conj(qs)
    tangent = log(mul(inv, nxt)) + log(mul(inv, prev))
    return normalize(mul(qs, exp(-0.25 * tangent)))


def squad(q0, q1, q2, q3, u):
    """Spherical quadrangle interpolation between ``q1`` and ``q2``.

    ``q0`` and ``q3`` are the outer neighbours used to build the inner control
    points. Inputs are hemisphere-aligned before use.
    """
    knots = align_hemisphere(np.stack([normalize(q) for q in (q0, q1, q2, q3)]))
    ctrl = squad_control_points(knots)
    return squad_segment(knots[1], knots[2], ctrl[1], ctrl[2], u)


def squad_segment(qa, qb, sa, sb, u):
    u = np.asarray(u, dtype=float)
    return slerp(slerp(qa, qb, u), slerp(sa, sb, u), 2.0 * u * (1.0 - u))


def angular_velocity(q_prev, q_next, dt):
    """World-frame angular velocity that rotates ``q_prev`` into ``q_next`` in ``dt``."""
    dq = mul(q_next, conj(q_prev))
    dq = np.where((dq[..., :1] < 0.0), -dq, dq)
    return 2.0 * log(dq)[..., 1:] / dt


def distance(a, b):
    """Sign-invariant quaternion distance ``min(|a-b|, |a+b|)``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return np.minimum(np.linalg.norm(a - b, axis=-1), np.linalg.norm(a + b, axis=-1))
