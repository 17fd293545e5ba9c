"""Unit quaternion kinematics.

Conventions, fixed once here and relied on everywhere else:

- Quaternions are stored scalar-first, ``q = (w, x, y, z)``, Hamilton
  product, right-handed.
- ``quat_exp(v)`` is the unit quaternion of the rotation by angle
  ``2 * norm(v)`` about ``v`` (half-angle argument).
- ``rot_matrix(q)`` is the matrix of the sandwich product: for every
  quaternion ``q`` and vector ``u``, ``rot_matrix(q) @ u`` equals the
  vector part of ``q * (0, u) * conj(q)``.
- A state quaternion carries the navigation-to-body coordinate
  transform: ``v_body = rot_matrix(q) @ v_nav``.  The body-to-nav
  direction is the transpose, written explicitly at call sites.

All operations accept a single quaternion of shape ``(4,)`` or a batch
of shape ``(4, k)`` with components along the first axis, and vectors of
shape ``(3,)`` or ``(3, k)``.
"""

from __future__ import annotations

import numpy as np
from numpy.typing import NDArray

__all__ = [
    "quat_mul",
    "quat_conj",
    "quat_normalize",
    "quat_exp",
    "quat_rotate",
    "rot_matrix",
    "quat_from_rpy",
    "rpy_from_quat",
]

# Below this rotation-vector norm the exponential switches to its
# second-order series; keeps the output unit to 1e-12 and avoids 0/0.
_EXP_SERIES_NORM = 1e-8

# A quaternion with a norm this small cannot be meaningfully normalized.
_DEGENERATE_NORM = 1e-12


def quat_mul(p: NDArray[np.float64], q: NDArray[np.float64]) -> NDArray[np.float64]:
    """Hamilton product ``p * q``.

    Parameters
    ----------
    p, q : ndarray, shape (4,) or (4, k)
        Quaternions, scalar first.  Shapes must broadcast.

    Returns
    -------
    ndarray
        The product, same layout as the inputs.
    """
    p, q = np.asarray(p, dtype=float), np.asarray(q, dtype=float)
    pw, px, py, pz = p
    qw, qx, qy, qz = q
    return np.stack(
        [
            pw * qw - px * qx - py * qy - pz * qz,
            pw * qx + px * qw + py * qz - pz * qy,
            pw * qy - px * qz + py * qw + pz * qx,
            pw * qz + px * qy - py * qx + pz * qw,
        ]
    )


def quat_conj(q: NDArray[np.float64]) -> NDArray[np.float64]:
    """Conjugate ``(w, -x, -y, -z)``; the inverse for unit quaternions."""
    q = np.asarray(q, dtype=float)
    out = q.copy()
    out[1:] = -out[1:]
    return out


def quat_normalize(q: NDArray[np.float64]) -> NDArray[np.float64]:
    """Rescale to unit norm.

    Raises
    ------
    ValueError
        If any quaternion in the batch has a norm too close to zero for
        the direction to be trusted.
    """
    q = np.asarray(q, dtype=float)
    n = np.sqrt(np.sum(q * q, axis=0))
    if np.any(n < _DEGENERATE_NORM) or not np.all(np.isfinite(n)):
        raise ValueError(f"cannot normalize quaternion with norm {np.min(n):g}")
    return q / n


def quat_exp(v: NDArray[np.float64]) -> NDArray[np.float64]:
    """Map a rotation vector to a unit quaternion.

    ``quat_exp(v) = (cos |v|, sin |v| * v / |v|)``: the result rotates by
    the angle ``2 |v|`` about ``v`` under the sandwich product.

    Parameters
    ----------
    v : ndarray, shape (3,) or (3, k)

    Returns
    -------
    ndarray, shape (4,) or (4, k)
    """
    v = np.asarray(v, dtype=float)
    n = np.sqrt(np.sum(v * v, axis=0))
    small = n < _EXP_SERIES_NORM
    # sin(n)/n, with the series 1 - n^2/6 where n underflows the division.
    with np.errstate(invalid="ignore"):
        s = np.where(small, 1.0 - n * n / 6.0, np.sin(n) / np.where(small, 1.0, n))
    w = np.where(small, 1.0 - n * n / 2.0, np.cos(n))
    return np.concatenate([np.expand_dims(w, 0), s * v])


def quat_rotate(q: NDArray[np.float64], u: NDArray[np.float64]) -> NDArray[np.float64]:
    """Apply the sandwich product: vector part of ``q * (0, u) * conj(q)``.

    Equivalent to ``rot_matrix(q) @ u`` but works on batches without
    materializing matrices.
    """
    q, u = np.asarray(q, dtype=float), np.asarray(u, dtype=float)
    w, xyz = q[0], q[1:]
    # Components live on the FIRST axis, so a single vector meeting a
    # batched quaternion (or vice versa) must grow trailing batch axes;
    # plain broadcasting would align the wrong ends.
    if xyz.ndim > u.ndim:
        u = u.reshape(u.shape + (1,) * (xyz.ndim - u.ndim))
    elif u.ndim > xyz.ndim:
        grow = (1,) * (u.ndim - xyz.ndim)
        xyz = xyz.reshape(xyz.shape + grow)
        w = w.reshape(w.shape + grow)
    # Rodrigues form: u + 2 w (xyz x u) + 2 xyz x (xyz x u)
    t = 2.0 * np.cross(xyz, u, axis=0)
    return u + w * t + np.cross(xyz, t, axis=0)


def rot_matrix(q: NDArray[np.float64]) -> NDArray[np.float64]:
    """Rotation matrix of the sandwich product of ``q``.

    For a state quaternion (navigation-to-body transform) the returned
    matrix maps navigation-frame coordinates to body-frame coordinates;
    its transpose maps back.

    Parameters
    ----------
    q : ndarray, shape (4,)
        Unit quaternion.

    Returns
    -------
    ndarray, shape (3, 3)
    """
    w, x, y, z = np.asarray(q, dtype=float)
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def quat_from_rpy(roll: float, pitch: float, yaw: float) -> NDArray[np.float64]:
    """State quaternion (nav-to-body) for a body at the given attitude.

    Roll, pitch, yaw are the usual aerospace z-y-x Euler angles of the
    body relative to the navigation frame, in radians.
    """
    ex = np.array([roll / 2.0, 0.0, 0.0])
    ey = np.array([0.0, pitch / 2.0, 0.0])
    ez = np.array([0.0, 0.0, yaw / 2.0])
    # Body attitude is Rz(yaw) Ry(pitch) Rx(roll); the nav-to-body state
    # quaternion is its inverse.
    return quat_mul(quat_exp(-ex), quat_mul(quat_exp(-ey), quat_exp(-ez)))


def rpy_from_quat(q: NDArray[np.float64]) -> tuple[float, float, float]:
    """Roll, pitch, yaw of the body carrying the state quaternion ``q``."""
    c = rot_matrix(q).T  # body-to-nav
    pitch = np.arcsin(np.clip(-c[2, 0], -1.0, 1.0))
    roll = np.arctan2(c[2, 1], c[2, 2])
    yaw = np.arctan2(c[1, 0], c[0, 0])
    return float(roll), float(pitch), float(yaw)
