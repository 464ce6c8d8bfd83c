# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled rotation kernels (drop-in replacement for _kernels_py)."""

import numpy as np

cimport numpy as cnp
from libc.math cimport atan2, cos, sin, sqrt

cnp.import_array()

BACKEND_NAME = "compiled"


def rotations_from_axis_angle(axes, angles, out=None):
    """Rodrigues formula for a batch of unit axes (n,3) and angles (n,)."""
    cdef const double[:, ::1] ax = np.ascontiguousarray(axes, dtype=np.float64)
    cdef const double[::1] an = np.ascontiguousarray(angles, dtype=np.float64)
    cdef Py_ssize_t n = an.shape[0]
    if out is None:
        out = np.empty((n, 3, 3), dtype=np.float64)
    cdef double[:, :, ::1] o = out
    cdef Py_ssize_t i
    cdef double c, s, t, x, y, z
    with nogil:
        for i in range(n):
            c = cos(an[i])
            s = sin(an[i])
            t = 1.0 - c
            x = ax[i, 0]
            y = ax[i, 1]
            z = ax[i, 2]
            o[i, 0, 0] = c + t * x * x
            o[i, 0, 1] = t * x * y - s * z
            o[i, 0, 2] = t * x * z + s * y
            o[i, 1, 0] = t * x * y + s * z
            o[i, 1, 1] = c + t * y * y
            o[i, 1, 2] = t * y * z - s * x
            o[i, 2, 0] = t * x * z - s * y
            o[i, 2, 1] = t * y * z + s * x
            o[i, 2, 2] = c + t * z * z
    return out


cdef inline void _mat3_mul_left(double[:, :, ::1] field, Py_ssize_t i,
                                double r00, double r01, double r02,
                                double r10, double r11, double r12,
                                double r20, double r21, double r22) noexcept nogil:
    cdef double f00 = field[i, 0, 0], f01 = field[i, 0, 1], f02 = field[i, 0, 2]
    cdef double f10 = field[i, 1, 0], f11 = field[i, 1, 1], f12 = field[i, 1, 2]
    cdef double f20 = field[i, 2, 0], f21 = field[i, 2, 1], f22 = field[i, 2, 2]
    field[i, 0, 0] = r00 * f00 + r01 * f10 + r02 * f20
    field[i, 0, 1] = r00 * f01 + r01 * f11 + r02 * f21
    field[i, 0, 2] = r00 * f02 + r01 * f12 + r02 * f22
    field[i, 1, 0] = r10 * f00 + r11 * f10 + r12 * f20
    field[i, 1, 1] = r10 * f01 + r11 * f11 + r12 * f21
    field[i, 1, 2] = r10 * f02 + r11 * f12 + r12 * f22
    field[i, 2, 0] = r20 * f00 + r21 * f10 + r22 * f20
    field[i, 2, 1] = r20 * f01 + r21 * f11 + r22 * f21
    field[i, 2, 2] = r20 * f02 + r21 * f12 + r22 * f22


def compose_left_inplace(field, rot):
    """field[i] <- rot[i] @ field[i] for stacked 3x3 matrices."""
    cdef double[:, :, ::1] f = field
    cdef const double[:, :, ::1] r = np.ascontiguousarray(rot, dtype=np.float64)
    cdef Py_ssize_t i, n = f.shape[0]
    with nogil:
        for i in range(n):
            _mat3_mul_left(f, i,
                           r[i, 0, 0], r[i, 0, 1], r[i, 0, 2],
                           r[i, 1, 0], r[i, 1, 1], r[i, 1, 2],
                           r[i, 2, 0], r[i, 2, 1], r[i, 2, 2])


def compose_single_left_inplace(field, rot):
    """field[i] <- rot @ field[i] with one common 3x3 rotation."""
    cdef double[:, :, ::1] f = field
    cdef const double[:, ::1] r = np.ascontiguousarray(rot, dtype=np.float64)
    cdef Py_ssize_t i, n = f.shape[0]
    with nogil:
        for i in range(n):
            _mat3_mul_left(f, i,
                           r[0, 0], r[0, 1], r[0, 2],
                           r[1, 0], r[1, 1], r[1, 2],
                           r[2, 0], r[2, 1], r[2, 2])


def drift_step_inplace(field, axes, angles):
    """Left-multiply each field matrix by the rotation (axes[i], angles[i])."""
    cdef double[:, :, ::1] f = field
    cdef const double[:, ::1] ax = np.ascontiguousarray(axes, dtype=np.float64)
    cdef const double[::1] an = np.ascontiguousarray(angles, dtype=np.float64)
    cdef Py_ssize_t i, n = f.shape[0]
    cdef double c, s, t, x, y, z
    with nogil:
        for i in range(n):
            c = cos(an[i])
            s = sin(an[i])
            t = 1.0 - c
            x = ax[i, 0]
            y = ax[i, 1]
            z = ax[i, 2]
            _mat3_mul_left(f, i,
                           c + t * x * x, t * x * y - s * z, t * x * z + s * y,
                           t * x * y + s * z, c + t * y * y, t * y * z - s * x,
                           t * x * z - s * y, t * y * z + s * x, c + t * z * z)


def apply_matrices_vec(field, v):
    """Batch matrix-vector product: (n,3,3) @ (3,) -> (n,3)."""
    cdef const double[:, :, ::1] f = np.ascontiguousarray(field, dtype=np.float64)
    cdef const double[::1] w = np.ascontiguousarray(v, dtype=np.float64)
    cdef Py_ssize_t i, n = f.shape[0]
    out = np.empty((n, 3), dtype=np.float64)
    cdef double[:, ::1] o = out
    with nogil:
        for i in range(n):
            o[i, 0] = f[i, 0, 0] * w[0] + f[i, 0, 1] * w[1] + f[i, 0, 2] * w[2]
            o[i, 1] = f[i, 1, 0] * w[0] + f[i, 1, 1] * w[1] + f[i, 1, 2] * w[2]
            o[i, 2] = f[i, 2, 0] * w[0] + f[i, 2, 1] * w[1] + f[i, 2, 2] * w[2]
    return out


def rotation_angles(field):
    """Rotation angle of each stacked matrix in [0, pi], computed in the
    atan2 form that stays accurate near zero."""
    cdef const double[:, :, ::1] f = np.ascontiguousarray(field, dtype=np.float64)
    cdef Py_ssize_t i, n = f.shape[0]
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    cdef double c, s, a, b, d
    with nogil:
        for i in range(n):
            c = (f[i, 0, 0] + f[i, 1, 1] + f[i, 2, 2] - 1.0) * 0.5
            a = f[i, 2, 1] - f[i, 1, 2]
            b = f[i, 0, 2] - f[i, 2, 0]
            d = f[i, 1, 0] - f[i, 0, 1]
            s = 0.5 * sqrt(a * a + b * b + d * d)
            o[i] = atan2(s, c)
    return out


def retarder_chain(retardances, axis_ids):
    """Compose rotations about coordinate axes, first element applied first."""
    cdef const double[::1] phis = np.ascontiguousarray(retardances, dtype=np.float64)
    cdef const long[::1] ids = np.ascontiguousarray(axis_ids, dtype=np.int64)
    cdef Py_ssize_t k = phis.shape[0]
    out = np.eye(3)
    cdef double[:, :, ::1] m = out[None, :, :]
    cdef Py_ssize_t j
    cdef double c, s
    cdef long ax
    with nogil:
        for j in range(k):
            c = cos(phis[j])
            s = sin(phis[j])
            ax = ids[j]
            if ax == 0:
                _mat3_mul_left(m, 0, 1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
            elif ax == 1:
                _mat3_mul_left(m, 0, c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
            else:
                _mat3_mul_left(m, 0, c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
    return out
