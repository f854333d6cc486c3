"""Quaternion and small-vector algebra.

Conventions used throughout the package:

- Quaternions are scalar-first ``[w, x, y, z]`` unit arrays (Hamilton
  product).  The attitude quaternion ``q`` maps Moon-Centered Inertial
  (MCI) frame vectors into body frame: ``v_body = rotate(q, v_mci)``.
- Composition: ``A(qmul(a, b)) = A(b) @ A(a)``, so an incremental
  body-frame rotation ``dq`` updates the attitude as ``qmul(q, dq)``.
- After normalization the scalar part is kept non-negative so that
  equality comparisons are unambiguous.

Hot-path helpers are written with scalar arithmetic on purpose:
``np.cross`` and friends cost ~20 us per call, which is too slow for a
loop that runs hundreds of thousands of times per simulation.
"""

import math

import numpy as np

_UNIT_TOL = 1e-9


def vec(x, y, z):
    return np.array([x, y, z], dtype=float)


def norm(v):
    return math.sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2])


def unit(v):
    n = norm(v)
    if n == 0.0:
        raise ValueError("cannot normalize zero vector")
    return np.array([v[0] / n, v[1] / n, v[2] / n])


def cross(a, b):
    return np.array([
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ])


def dot(a, b):
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]


def qidentity():
    return np.array([1.0, 0.0, 0.0, 0.0])


def qnorm(q):
    return math.sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3])


def normalize(q):
    """Unit-normalize, fixing the sign so the scalar part is >= 0."""
    n = qnorm(q)
    if n == 0.0:
        raise ValueError("cannot normalize zero quaternion")
    s = 1.0 / n if q[0] >= 0.0 else -1.0 / n
    return np.array([q[0] * s, q[1] * s, q[2] * s, q[3] * s])


def qmul(a, b):
    """Hamilton product a*b.  Attitude composition: A(a*b) = A(b)A(a)."""
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by + ay * bw + az * bx - ax * bz,
        aw * bz + az * bw + ax * by - ay * bx,
    ])


def qconj(q):
    return np.array([q[0], -q[1], -q[2], -q[3]])


def dcm(q):
    """Attitude matrix A(q) with v_body = A(q) @ v_mci."""
    w, x, y, z = q
    ww, xx, yy, zz = w * w, x * x, y * y, z * z
    wx, wy, wz = w * x, w * y, w * z
    xy, xz, yz = x * y, x * z, y * z
    return np.array([
        [ww + xx - yy - zz, 2.0 * (xy + wz), 2.0 * (xz - wy)],
        [2.0 * (xy - wz), ww - xx + yy - zz, 2.0 * (yz + wx)],
        [2.0 * (xz + wy), 2.0 * (yz - wx), ww - xx - yy + zz],
    ])


def rotate(q, v):
    """Express the MCI-frame vector v in the body frame."""
    w, x, y, z = q
    vx, vy, vz = v[0], v[1], v[2]
    # t = 2 (u x v) ; result = v - w t + u x t   (expanded A(q) @ v)
    tx = 2.0 * (y * vz - z * vy)
    ty = 2.0 * (z * vx - x * vz)
    tz = 2.0 * (x * vy - y * vx)
    return np.array([
        vx - w * tx + (y * tz - z * ty),
        vy - w * ty + (z * tx - x * tz),
        vz - w * tz + (x * ty - y * tx),
    ])


def rotate_back(q, v):
    """Express the body-frame vector v in the MCI frame (inverse of rotate)."""
    w, x, y, z = q
    vx, vy, vz = v[0], v[1], v[2]
    tx = 2.0 * (y * vz - z * vy)
    ty = 2.0 * (z * vx - x * vz)
    tz = 2.0 * (x * vy - y * vx)
    return np.array([
        vx + w * tx + (y * tz - z * ty),
        vy + w * ty + (z * tx - x * tz),
        vz + w * tz + (x * ty - y * tx),
    ])


def from_axis_angle(axis, angle_rad):
    a = unit(np.asarray(axis, dtype=float))
    h = 0.5 * angle_rad
    s = math.sin(h)
    return np.array([math.cos(h), s * a[0], s * a[1], s * a[2]])


def from_rotvec(phi):
    """Quaternion for a rotation vector phi (rad); small angles are exact."""
    ang = norm(phi)
    if ang < 1e-12:
        return normalize(np.array([1.0, 0.5 * phi[0], 0.5 * phi[1], 0.5 * phi[2]]))
    s = math.sin(0.5 * ang) / ang
    return np.array([math.cos(0.5 * ang), s * phi[0], s * phi[1], s * phi[2]])


def to_rotvec(q):
    qn = normalize(q)
    sin_half = math.sqrt(qn[1] ** 2 + qn[2] ** 2 + qn[3] ** 2)
    if sin_half < 1e-12:
        return np.array([2.0 * qn[1], 2.0 * qn[2], 2.0 * qn[3]])
    ang = 2.0 * math.atan2(sin_half, qn[0])
    s = ang / sin_half
    return np.array([qn[1] * s, qn[2] * s, qn[3] * s])


def from_dcm(A):
    """Quaternion from an attitude matrix, branch-stable (Shepperd)."""
    tr = A[0, 0] + A[1, 1] + A[2, 2]
    choices = [tr, A[0, 0], A[1, 1], A[2, 2]]
    k = int(np.argmax(choices))
    if k == 0:
        w = 0.5 * math.sqrt(1.0 + tr)
        f = 0.25 / w
        q = np.array([w,
                      f * (A[1, 2] - A[2, 1]),
                      f * (A[2, 0] - A[0, 2]),
                      f * (A[0, 1] - A[1, 0])])
    else:
        i = k - 1
        j, l = (i + 1) % 3, (i + 2) % 3
        s = math.sqrt(1.0 + A[i, i] - A[j, j] - A[l, l])
        u = np.zeros(3)
        u[i] = 0.5 * s
        f = 0.25 / u[i]
        u[j] = f * (A[i, j] + A[j, i])
        u[l] = f * (A[i, l] + A[l, i])
        w = f * (A[j, l] - A[l, j])
        q = np.array([w, u[0], u[1], u[2]])
    return normalize(q)


def angle_between(qa, qb):
    """Rotation angle (rad) taking attitude qa to attitude qb."""
    d = qmul(qconj(qa), qb)
    c = min(1.0, abs(d[0]))
    return 2.0 * math.acos(c)


def step_attitude(q, rate_body, dt):
    """Advance attitude by the exact rotation for constant body rate over dt."""
    return normalize(qmul(q, from_rotvec(np.array([
        rate_body[0] * dt, rate_body[1] * dt, rate_body[2] * dt]))))


def slerp(qa, qb, t):
    """Spherical linear interpolation from qa (t=0) to qb (t=1)."""
    qa = normalize(qa)
    qb = normalize(qb)
    c = float(np.dot(qa, qb))
    if c < 0.0:
        qb = -qb
        c = -c
    if c > 1.0 - 1e-12:
        return normalize(qa + t * (qb - qa))
    ang = math.acos(min(1.0, c))
    sa = math.sin((1.0 - t) * ang) / math.sin(ang)
    sb = math.sin(t * ang) / math.sin(ang)
    return normalize(sa * qa + sb * qb)


def check_unit(q, tol=_UNIT_TOL):
    if abs(qnorm(q) - 1.0) > tol:
        raise ValueError(f"quaternion norm {qnorm(q):.3e} departs from unity")
