"""Polarization and two-qubit linear algebra.

Conventions used throughout the package:

* Stokes axes: H/V along +/-s1, D/A along +/-s2, R/L along +/-s3, with R
  the +s3 circular state. In the H/V Jones basis this maps (s1, s2, s3)
  onto the Pauli triple (sigma_z, sigma_x, sigma_y), which is
  right-handed (sigma_1 sigma_2 = i sigma_3).
* A Poincare-sphere rotation by theta about unit axis n corresponds to
  the SU(2) element U = cos(theta/2) I - i sin(theta/2) (n . sigma), so
  |Tr U| = 2|cos(theta/2)|. Conjugating rho = (I + s . sigma)/2 by U
  rotates s by the SO(3) matrix; U is defined up to global phase.
* Two-qubit basis order is |HH>, |HV>, |VH>, |VV>. The Bell state
  (|HH> + |VV>)/sqrt(2) therefore occupies entries (1,1), (1,4), (4,1),
  (4,4) of the density matrix.
* The Bell fidelity of rho is the linear overlap <phi|rho|phi>
  = (rho_11 + rho_44 + rho_14 + rho_41)/2. For a one-sided unitary U
  acting on the Bell state this equals |Tr U|^2 / 4 = cos^2(theta/2),
  independent of the rotation axis.

Geometry checks use a 1e-9 tolerance, density-matrix checks 1e-12.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

GEOMETRY_TOL = 1e-9
DENSITY_TOL = 1e-12
PSD_TOL = 1e-9

_SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True)
class StokesVector:
    """A polarization state on or inside the Poincare sphere.

    ``dop`` is the degree of polarization; it defaults to the Euclidean
    norm of (s1, s2, s3), which must not exceed 1 beyond numerical slack.
    """

    s1: float
    s2: float
    s3: float
    dop: float = None  # type: ignore[assignment]

    def __post_init__(self):
        norm2 = self.s1 * self.s1 + self.s2 * self.s2 + self.s3 * self.s3
        if norm2 > 1.0 + GEOMETRY_TOL:
            raise ValueError(f"Stokes vector has norm {math.sqrt(norm2):.6f} > 1")
        if self.dop is None:
            object.__setattr__(self, "dop", min(math.sqrt(norm2), 1.0))
        elif not 0.0 <= self.dop <= 1.0 + GEOMETRY_TOL:
            raise ValueError(f"degree of polarization {self.dop} outside [0, 1]")

    @property
    def vec(self) -> np.ndarray:
        return np.array([self.s1, self.s2, self.s3])

    def unit(self) -> np.ndarray:
        """Direction on the sphere; rejects the fully depolarized point."""
        v = self.vec
        n = np.linalg.norm(v)
        if n < 1e-12:
            raise ValueError("cannot normalize a zero Stokes vector")
        return v / n

    @classmethod
    def from_array(cls, v, dop: float | None = None) -> "StokesVector":
        v = np.asarray(v, dtype=float)
        return cls(float(v[0]), float(v[1]), float(v[2]), dop)


#: Canonical probe frame used by the polarimeter procedures.
CANONICAL_PROBES = (
    StokesVector(1.0, 0.0, 0.0),
    StokesVector(0.0, 1.0, 0.0),
    StokesVector(0.0, 0.0, 1.0),
)


class MeasurementMode(Enum):
    """Single-qubit analyzer settings, one per polarization eigenstate."""

    H = "H"
    V = "V"
    D = "D"
    A = "A"
    R = "R"
    L = "L"

    @property
    def jones(self) -> np.ndarray:
        return _JONES[self].copy()

    @property
    def projector(self) -> np.ndarray:
        v = _JONES[self]
        return np.outer(v, v.conj())

    @property
    def stokes(self) -> StokesVector:
        return _MODE_STOKES[self]


_JONES = {
    MeasurementMode.H: np.array([1.0, 0.0], dtype=complex),
    MeasurementMode.V: np.array([0.0, 1.0], dtype=complex),
    MeasurementMode.D: np.array([1.0, 1.0], dtype=complex) / _SQRT2,
    MeasurementMode.A: np.array([1.0, -1.0], dtype=complex) / _SQRT2,
    MeasurementMode.R: np.array([1.0, 1.0j], dtype=complex) / _SQRT2,
    MeasurementMode.L: np.array([1.0, -1.0j], dtype=complex) / _SQRT2,
}

_MODE_STOKES = {
    MeasurementMode.H: StokesVector(1.0, 0.0, 0.0),
    MeasurementMode.V: StokesVector(-1.0, 0.0, 0.0),
    MeasurementMode.D: StokesVector(0.0, 1.0, 0.0),
    MeasurementMode.A: StokesVector(0.0, -1.0, 0.0),
    MeasurementMode.R: StokesVector(0.0, 0.0, 1.0),
    MeasurementMode.L: StokesVector(0.0, 0.0, -1.0),
}

#: Pauli operators ordered to match the (s1, s2, s3) Stokes axes.
PAULI = np.array(
    [
        [[1.0, 0.0], [0.0, -1.0]],
        [[0.0, 1.0], [1.0, 0.0]],
        [[0.0, -1.0j], [1.0j, 0.0]],
    ],
    dtype=complex,
)


class PoincareRotation:
    """A proper rotation of Stokes space (3x3, orthonormal, det +1)."""

    __slots__ = ("_m",)

    def __init__(self, matrix, validate: bool = True):
        m = np.array(matrix, dtype=float)
        if m.shape != (3, 3):
            raise ValueError(f"expected a 3x3 matrix, got shape {m.shape}")
        if validate:
            err = np.abs(m.T @ m - np.eye(3)).max()
            if err > GEOMETRY_TOL:
                raise ValueError(f"matrix is not orthonormal (deviation {err:.2e})")
            det = np.linalg.det(m)
            if abs(det - 1.0) > GEOMETRY_TOL:
                raise ValueError(f"matrix is not proper (det {det:.9f})")
        m.setflags(write=False)
        self._m = m

    @property
    def matrix(self) -> np.ndarray:
        return self._m

    @classmethod
    def identity(cls) -> "PoincareRotation":
        return cls(np.eye(3), validate=False)

    @classmethod
    def from_axis_angle(cls, axis, angle: float) -> "PoincareRotation":
        axis = np.asarray(axis, dtype=float)
        n = np.linalg.norm(axis)
        if n < 1e-12:
            raise ValueError("rotation axis must be nonzero")
        axis = axis / n
        c, s = math.cos(angle), math.sin(angle)
        k = np.array(
            [
                [0.0, -axis[2], axis[1]],
                [axis[2], 0.0, -axis[0]],
                [-axis[1], axis[0], 0.0],
            ]
        )
        m = np.eye(3) * c + s * k + (1.0 - c) * np.outer(axis, axis)
        return cls(m, validate=False)

    def compose(self, other: "PoincareRotation") -> "PoincareRotation":
        """Rotation equal to applying ``other`` first, then ``self``."""
        return PoincareRotation(self._m @ other._m, validate=False)

    def __matmul__(self, other: "PoincareRotation") -> "PoincareRotation":
        return self.compose(other)

    def inverse(self) -> "PoincareRotation":
        return PoincareRotation(self._m.T.copy(), validate=False)

    def apply(self, s: StokesVector) -> StokesVector:
        return StokesVector.from_array(self._m @ s.vec)

    def angle(self) -> float:
        return rotation_angle(self)

    def __repr__(self) -> str:
        return f"PoincareRotation(angle={self.angle():.6f})"


def rotation_angle(rotation: PoincareRotation) -> float:
    """Rotation angle in [0, pi], arccos((Tr R - 1)/2).

    Evaluated as atan2(|R - R^T|/2, (Tr R - 1)/2), which is the same
    angle but stays accurate near 0 where the arccos form loses half the
    available precision.
    """
    m = rotation.matrix
    cos_part = (m[0, 0] + m[1, 1] + m[2, 2] - 1.0) / 2.0
    sin_part = 0.5 * math.sqrt(
        (m[2, 1] - m[1, 2]) ** 2
        + (m[0, 2] - m[2, 0]) ** 2
        + (m[1, 0] - m[0, 1]) ** 2
    )
    return math.atan2(sin_part, cos_part)


def _quaternion_from_matrix(m: np.ndarray) -> np.ndarray:
    """Unit quaternion (w, x, y, z) of a rotation matrix, stable near pi."""
    t = np.trace(m)
    if t > 0.0:
        r = math.sqrt(1.0 + t)
        w = 0.5 * r
        x = (m[2, 1] - m[1, 2]) / (2.0 * r)
        y = (m[0, 2] - m[2, 0]) / (2.0 * r)
        z = (m[1, 0] - m[0, 1]) / (2.0 * r)
    else:
        i = int(np.argmax(np.diag(m)))
        j, k = (i + 1) % 3, (i + 2) % 3
        r = math.sqrt(1.0 + m[i, i] - m[j, j] - m[k, k])
        q = np.empty(4)
        q[1 + i] = 0.5 * r
        q[0] = (m[k, j] - m[j, k]) / (2.0 * r)
        q[1 + j] = (m[j, i] + m[i, j]) / (2.0 * r)
        q[1 + k] = (m[k, i] + m[i, k]) / (2.0 * r)
        w, x, y, z = q
    q = np.array([w, x, y, z])
    return q / np.linalg.norm(q)


def su2_from_poincare(rotation: PoincareRotation) -> np.ndarray:
    """SU(2) element (2x2 complex, defined up to global phase) whose
    conjugation action on the Pauli triple reproduces the given rotation."""
    w, x, y, z = _quaternion_from_matrix(rotation.matrix)
    return w * np.eye(2, dtype=complex) - 1.0j * (
        x * PAULI[0] + y * PAULI[1] + z * PAULI[2]
    )


def poincare_from_su2(u: np.ndarray) -> PoincareRotation:
    """Inverse of :func:`su2_from_poincare` (phase-insensitive)."""
    u = np.asarray(u, dtype=complex)
    m = np.empty((3, 3))
    uh = u.conj().T
    for k in range(3):
        conj = u @ PAULI[k] @ uh
        for j in range(3):
            m[j, k] = 0.5 * np.trace(PAULI[j] @ conj).real
    return PoincareRotation(m)


class TwoQubitState:
    """4x4 density matrix of the biphoton polarization state."""

    __slots__ = ("_m",)

    def __init__(self, matrix, validate: bool = True):
        m = np.array(matrix, dtype=complex)
        if m.shape != (4, 4):
            raise ValueError(f"expected a 4x4 matrix, got shape {m.shape}")
        if validate:
            herm = np.abs(m - m.conj().T).max()
            if herm > DENSITY_TOL:
                raise ValueError(f"matrix is not Hermitian (asymmetry {herm:.2e})")
            tr = np.trace(m)
            if abs(tr - 1.0) > DENSITY_TOL:
                raise ValueError(f"trace is {tr:.12f}, expected 1")
            lo = np.linalg.eigvalsh(m).min()
            if lo < -PSD_TOL:
                raise ValueError(f"matrix has negative eigenvalue {lo:.2e}")
        m.setflags(write=False)
        self._m = m

    @property
    def matrix(self) -> np.ndarray:
        return self._m

    def __repr__(self) -> str:
        return f"TwoQubitState(F={fidelity_to_phi_plus(self):.6f})"


_PHI_PLUS_VEC = np.array([1.0, 0.0, 0.0, 1.0], dtype=complex) / _SQRT2


def bell_phi_plus() -> TwoQubitState:
    """The (|HH> + |VV>)/sqrt(2) Bell state as a density matrix."""
    return TwoQubitState(np.outer(_PHI_PLUS_VEC, _PHI_PLUS_VEC.conj()), validate=False)


def fidelity_to_phi_plus(rho: TwoQubitState) -> float:
    """Overlap of rho with the (|HH> + |VV>)/sqrt(2) Bell state."""
    m = rho.matrix
    herm = np.abs(m - m.conj().T).max()
    if herm > DENSITY_TOL:
        raise ValueError(f"density matrix is not Hermitian (asymmetry {herm:.2e})")
    return float((m[0, 0] + m[3, 3] + m[0, 3] + m[3, 0]).real / 2.0)


def werner_state(a: float) -> TwoQubitState:
    """Mixture a |phi+><phi+| + (1 - a)/4 I of the Bell state with white noise."""
    if not 0.0 <= a <= 1.0:
        raise ValueError(f"mixing parameter {a} outside [0, 1]")
    m = a * np.outer(_PHI_PLUS_VEC, _PHI_PLUS_VEC.conj()) + (1.0 - a) / 4.0 * np.eye(
        4, dtype=complex
    )
    return TwoQubitState(m, validate=False)


def apply_one_sided(rho: TwoQubitState, rotation: PoincareRotation) -> TwoQubitState:
    """Send the second qubit through the channel rotation: (I x U) rho (I x U)+."""
    u = su2_from_poincare(rotation)
    big = np.kron(np.eye(2, dtype=complex), u)
    m = big @ rho.matrix @ big.conj().T
    # conjugation by a unitary preserves all density-matrix invariants
    return TwoQubitState(m, validate=False)


def fidelity_from_residual_rotation(theta: float) -> float:
    """Bell fidelity cos^2(theta/2) left after a one-sided rotation by theta."""
    return math.cos(theta / 2.0) ** 2


_PROJECTOR_CACHE: dict = {}


def _pair_projector(a: MeasurementMode, b: MeasurementMode) -> np.ndarray:
    key = (a, b)
    proj = _PROJECTOR_CACHE.get(key)
    if proj is None:
        proj = np.kron(a.projector, b.projector)
        _PROJECTOR_CACHE[key] = proj
    return proj


def coincidence_probability(
    rho: TwoQubitState, a: MeasurementMode, b: MeasurementMode
) -> float:
    """Probability Tr[(P_a x P_b) rho] of a coincidence in modes (a, b)."""
    p = float(np.einsum("ij,ji->", _pair_projector(a, b), rho.matrix).real)
    # clip sub-tolerance excursions produced by rounding
    return min(1.0, max(0.0, p))
