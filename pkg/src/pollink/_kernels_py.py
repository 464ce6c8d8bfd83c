"""Pure-numpy implementations of the hot rotation kernels.

Same call signatures as the compiled module ``_kernels_cy``; one of the
two is exported as ``pollink._backend.K``.
"""

import numpy as np

BACKEND_NAME = "python"


def rotations_from_axis_angle(axes, angles, out=None):
    """Rodrigues formula for a batch of unit axes (n,3) and angles (n,)."""
    axes = np.asarray(axes, dtype=np.float64)
    angles = np.asarray(angles, dtype=np.float64)
    n = angles.shape[0]
    if out is None:
        out = np.empty((n, 3, 3), dtype=np.float64)
    c = np.cos(angles)
    s = np.sin(angles)
    t = 1.0 - c
    x, y, z = axes[:, 0], axes[:, 1], axes[:, 2]
    out[:, 0, 0] = c + t * x * x
    out[:, 0, 1] = t * x * y - s * z
    out[:, 0, 2] = t * x * z + s * y
    out[:, 1, 0] = t * x * y + s * z
    out[:, 1, 1] = c + t * y * y
    out[:, 1, 2] = t * y * z - s * x
    out[:, 2, 0] = t * x * z - s * y
    out[:, 2, 1] = t * y * z + s * x
    out[:, 2, 2] = c + t * z * z
    return out


def compose_left_inplace(field, rot):
    """field[i] <- rot[i] @ field[i] for stacked 3x3 matrices."""
    np.matmul(rot, field, out=field)


def compose_single_left_inplace(field, rot):
    """field[i] <- rot @ field[i] with one common 3x3 rotation."""
    np.matmul(rot[None, :, :], field, out=field)


def drift_step_inplace(field, axes, angles):
    """Left-multiply each field matrix by the rotation (axes[i], angles[i])."""
    rot = rotations_from_axis_angle(axes, angles)
    np.matmul(rot, field, out=field)


def apply_matrices_vec(field, v):
    """Batch matrix-vector product: (n,3,3) @ (3,) -> (n,3)."""
    return np.asarray(field) @ np.asarray(v, dtype=np.float64)


def rotation_angles(field):
    """Rotation angle of each stacked matrix in [0, pi], computed in the
    atan2 form that stays accurate near zero."""
    f = np.asarray(field)
    cos_part = (np.einsum("...ii->...", f) - 1.0) * 0.5
    sin_part = 0.5 * np.sqrt(
        (f[..., 2, 1] - f[..., 1, 2]) ** 2
        + (f[..., 0, 2] - f[..., 2, 0]) ** 2
        + (f[..., 1, 0] - f[..., 0, 1]) ** 2
    )
    return np.arctan2(sin_part, cos_part)


def retarder_chain(retardances, axis_ids):
    """Compose rotations about coordinate axes, first element applied first.

    axis_ids entries index the Stokes axes (0, 1 or 2); the result is
    R(k-1) @ ... @ R(0).
    """
    retardances = np.asarray(retardances, dtype=np.float64)
    axis_ids = np.asarray(axis_ids, dtype=np.int64)
    m = np.eye(3)
    for phi, ax in zip(retardances, axis_ids):
        c, s = np.cos(phi), np.sin(phi)
        r = np.eye(3)
        if ax == 0:
            r[1, 1] = c
            r[1, 2] = -s
            r[2, 1] = s
            r[2, 2] = c
        elif ax == 1:
            r[0, 0] = c
            r[0, 2] = s
            r[2, 0] = -s
            r[2, 2] = c
        else:
            r[0, 0] = c
            r[0, 1] = -s
            r[1, 0] = s
            r[1, 1] = c
        m = r @ m
    return m
