"""Simulated deployed fiber: wavelength-dependent Poincare rotation field,
temporal drift, loss budget and polarimeter probing.

The rotation field is stored as a stacked (n, 3, 3) array over the
wavelength grid and evolves by left-composition with small random
rotations (slow random walk) plus rare large common rotations (discrete
jumps). All randomness flows through an injected numpy Generator; a
channel value is immutable and :func:`step_drift` returns a new one.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from ._backend import K
from .errors import EstimationError, SchemaError
from .polarization import (
    CANONICAL_PROBES,
    GEOMETRY_TOL,
    PoincareRotation,
    StokesVector,
)

#: Default probe grid, 1 nm steps across the telecom O-band sweep range.
DEFAULT_WAVELENGTHS_NM = np.arange(1260.0, 1351.0)

REORTHONORMALIZE_EVERY = 1000


@dataclass(frozen=True)
class LossElement:
    name: str
    db: float

    def __post_init__(self):
        if self.db < 0.0:
            raise ValueError(f"loss element {self.name!r} has negative loss {self.db}")


@dataclass(frozen=True)
class LossBudget:
    """Ordered list of lossy elements along the photon path."""

    elements: tuple[LossElement, ...]

    @property
    def total_db(self) -> float:
        return float(sum(e.db for e in self.elements))

    @classmethod
    def from_pairs(cls, pairs) -> "LossBudget":
        return cls(tuple(LossElement(str(n), float(d)) for n, d in pairs))

    @classmethod
    def from_json(cls, path) -> "LossBudget":
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
        if not isinstance(data, list):
            raise SchemaError("loss budget file must hold a JSON list")
        pairs = []
        for i, entry in enumerate(data):
            if not isinstance(entry, dict) or "name" not in entry or "db" not in entry:
                raise SchemaError(f"loss budget entry {i} must have 'name' and 'db'")
            pairs.append((entry["name"], entry["db"]))
        return cls.from_pairs(pairs)

    def to_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump([{"name": e.name, "db": e.db} for e in self.elements], fh, indent=2)


def default_loss_budget() -> LossBudget:
    """Measured telecom-arm budget of the reference deployment (17.47 dB)."""
    return LossBudget.from_pairs(
        [
            ("metropolitan fiber", 14.45),
            ("input paddles", 0.74),
            ("injector", 0.22),
            ("optical switch", 0.52),
            ("compensator and switch", 1.54),
        ]
    )


def total_loss_db(budget: LossBudget) -> float:
    return budget.total_db


def transmission(db: float) -> float:
    """Power transmission 10^(-dB/10)."""
    return 10.0 ** (-db / 10.0)


@dataclass(frozen=True)
class DriftProcess:
    """Random-walk plus jump model of slow fiber birefringence drift.

    Rates are synthetic defaults, not measured values: the walk rate sets
    the diffusion of the per-wavelength rotation angle and the jump
    process applies large rotations common to all wavelengths.
    """

    walk_rad_per_sqrt_hour: float = 0.02
    jump_rate_per_day: float = 2.0
    jump_magnitude_median_rad: float = 0.5
    jump_magnitude_sigma: float = 0.6
    decorrelation_nm: float = 15.0

    def __post_init__(self):
        for name in (
            "walk_rad_per_sqrt_hour",
            "jump_rate_per_day",
            "jump_magnitude_median_rad",
            "jump_magnitude_sigma",
            "decorrelation_nm",
        ):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be >= 0")


@dataclass(frozen=True)
class PolarimeterModel:
    rate_hz: float = 1.0e4
    stokes_noise: float = 0.005

    def __post_init__(self):
        if self.rate_hz <= 0.0:
            raise ValueError("polarimeter rate must be positive")
        if self.stokes_noise < 0.0:
            raise ValueError("polarimeter noise must be >= 0")


_SMOOTHER_CACHE: dict = {}


def _axis_smoother(wavelengths: np.ndarray, scale_nm: float) -> np.ndarray:
    """Row-normalized Gaussian smoothing matrix preserving unit marginal
    variance, used to correlate drift axes across the wavelength grid."""
    key = (wavelengths.tobytes(), float(scale_nm))
    s = _SMOOTHER_CACHE.get(key)
    if s is None:
        if scale_nm <= 0.0:
            s = np.eye(len(wavelengths))
        else:
            d = wavelengths[:, None] - wavelengths[None, :]
            s = np.exp(-0.5 * (d / scale_nm) ** 2)
            s /= np.sqrt((s**2).sum(axis=1, keepdims=True))
        _SMOOTHER_CACHE[key] = s
    return s


@dataclass(frozen=True)
class FiberChannel:
    """Rotation field R(lambda, t) plus loss budget and drift process."""

    wavelengths_nm: np.ndarray
    rotation_field: np.ndarray  # (n, 3, 3), one rotation per grid point
    loss: LossBudget = field(default_factory=default_loss_budget)
    drift: DriftProcess = field(default_factory=DriftProcess)
    polarimeter: PolarimeterModel = field(default_factory=PolarimeterModel)
    time_s: float = 0.0
    drift_steps: int = 0
    jump_count: int = 0
    max_step_rad_per_nm: float = 1.0

    def __post_init__(self):
        wl = np.asarray(self.wavelengths_nm, dtype=float)
        fieldarr = np.asarray(self.rotation_field, dtype=float)
        if wl.ndim != 1 or len(wl) < 1:
            raise ValueError("wavelength grid must be a non-empty 1-d array")
        if np.any(np.diff(wl) <= 0.0):
            raise ValueError("wavelength grid must be strictly increasing")
        if fieldarr.shape != (len(wl), 3, 3):
            raise ValueError(
                f"rotation field shape {fieldarr.shape} does not match grid of {len(wl)}"
            )
        object.__setattr__(self, "wavelengths_nm", wl)
        object.__setattr__(self, "rotation_field", fieldarr)

    @classmethod
    def identity(cls, wavelengths_nm=None, **kwargs) -> "FiberChannel":
        wl = DEFAULT_WAVELENGTHS_NM if wavelengths_nm is None else np.asarray(wavelengths_nm, dtype=float)
        fieldarr = np.broadcast_to(np.eye(3), (len(wl), 3, 3)).copy()
        return cls(wl, fieldarr, **kwargs)

    def index_of(self, wavelength_nm: float) -> int:
        """Nearest grid index; wavelengths beyond half a grid step outside
        the range are rejected."""
        wl = self.wavelengths_nm
        if wavelength_nm < wl[0] - 0.5 or wavelength_nm > wl[-1] + 0.5:
            raise ValueError(
                f"wavelength {wavelength_nm} nm outside grid "
                f"[{wl[0]}, {wl[-1]}] nm"
            )
        return int(np.argmin(np.abs(wl - wavelength_nm)))

    def rotation_at(self, wavelength_nm: float) -> PoincareRotation:
        return PoincareRotation(self.rotation_field[self.index_of(wavelength_nm)])

    def validate(self) -> None:
        """Check every grid rotation and the continuity bound in lambda."""
        f = self.rotation_field
        err = np.abs(np.einsum("nji,njk->nik", f, f) - np.eye(3)).max()
        if err > GEOMETRY_TOL:
            raise ValueError(f"rotation field not orthonormal (deviation {err:.2e})")
        if np.linalg.det(f).min() < 1.0 - 1e-6:
            raise ValueError("rotation field contains an improper rotation")
        if len(f) > 1:
            steps = K.rotation_angles(np.einsum("nji,njk->nik", f[:-1], f[1:]))
            dlam = np.diff(self.wavelengths_nm)
            worst = float((steps / dlam).max())
            if worst > self.max_step_rad_per_nm:
                raise ValueError(
                    f"rotation field discontinuous in wavelength "
                    f"({worst:.3f} rad/nm > {self.max_step_rad_per_nm})"
                )


def probe_response(
    channel: FiberChannel,
    wavelength_nm: float,
    s_in: StokesVector,
    rng: np.random.Generator,
    n_samples: int = 1,
) -> StokesVector:
    """Polarimeter reading of a fully polarized probe sent through the
    channel; averaging ``n_samples`` readings scales the noise down."""
    i = channel.index_of(wavelength_nm)
    out = channel.rotation_field[i] @ s_in.unit()
    sigma = channel.polarimeter.stokes_noise / math.sqrt(n_samples)
    if sigma > 0.0:
        out = out + rng.normal(0.0, sigma, 3)
        norm = np.linalg.norm(out)
        if norm > 1.0:
            out = out / norm
    return StokesVector.from_array(out)


def estimate_rotation(inputs, outputs) -> PoincareRotation:
    """Proper rotation minimizing the least-squares probe mismatch.

    ``inputs`` must form the canonical orthonormal Stokes frame (H, D, R
    by default); ``outputs`` are the measured responses. The estimate is
    the det-corrected orthogonal Procrustes solution, exact when the
    outputs are themselves an orthonormal frame.
    """
    a = np.stack([s.unit() for s in inputs], axis=1)
    if np.abs(a.T @ a - np.eye(a.shape[1])).max() > 1e-6:
        raise ValueError("probe inputs must form an orthonormal Stokes frame")
    for s in outputs:
        if s.dop < 0.5:
            raise ValueError(f"probe response has degree of polarization {s.dop:.3f} < 0.5")
    b_vecs = [s.unit() for s in outputs]
    for i in range(len(b_vecs)):
        for j in range(i + 1, len(b_vecs)):
            if np.linalg.norm(np.cross(b_vecs[i], b_vecs[j])) < 1e-6:
                raise EstimationError(
                    f"probe responses {i} and {j} are parallel; rotation is degenerate"
                )
    b = np.stack(b_vecs, axis=1)
    h = b @ a.T
    u, _, vt = np.linalg.svd(h)
    d = np.sign(np.linalg.det(u @ vt))
    m = u @ np.diag([1.0, 1.0, d]) @ vt
    return PoincareRotation(m)


def _random_unit(rng: np.random.Generator) -> np.ndarray:
    v = rng.normal(size=3)
    n = np.linalg.norm(v)
    while n < 1e-12:
        v = rng.normal(size=3)
        n = np.linalg.norm(v)
    return v / n


def _reorthonormalize(fieldarr: np.ndarray) -> np.ndarray:
    u, _, vt = np.linalg.svd(fieldarr)
    return u @ vt


def step_drift(channel: FiberChannel, dt_s: float, rng: np.random.Generator) -> FiberChannel:
    """Advance the rotation field by ``dt_s`` seconds of drift.

    Each grid rotation is left-multiplied by a small random rotation with
    angle |N(0, rate^2 dt)|; axis and angle fields are correlated across
    wavelength with the configured decorrelation scale. Jump events are
    drawn from a Poisson process and apply a large rotation common to the
    whole grid.
    """
    if dt_s <= 0.0:
        raise ValueError("drift step must be positive")
    drift = channel.drift
    fieldarr = channel.rotation_field.copy()
    n = len(channel.wavelengths_nm)
    jumps = 0

    if drift.walk_rad_per_sqrt_hour > 0.0:
        sigma = drift.walk_rad_per_sqrt_hour * math.sqrt(dt_s / 3600.0)
        smoother = _axis_smoother(channel.wavelengths_nm, drift.decorrelation_nm)
        g = smoother @ rng.standard_normal((n, 4))
        axes = g[:, :3]
        norms = np.linalg.norm(axes, axis=1)
        norms[norms < 1e-12] = 1.0
        axes = axes / norms[:, None]
        angles = np.abs(sigma * g[:, 3])
        K.drift_step_inplace(fieldarr, axes, angles)

    if drift.jump_rate_per_day > 0.0:
        jumps = int(rng.poisson(drift.jump_rate_per_day * dt_s / 86400.0))
        for _ in range(jumps):
            axis = _random_unit(rng)
            mag = rng.lognormal(
                mean=math.log(drift.jump_magnitude_median_rad),
                sigma=drift.jump_magnitude_sigma,
            )
            rot = PoincareRotation.from_axis_angle(axis, mag)
            K.compose_single_left_inplace(fieldarr, rot.matrix)

    steps = channel.drift_steps + 1
    if steps % REORTHONORMALIZE_EVERY == 0:
        fieldarr = _reorthonormalize(fieldarr)

    return replace(
        channel,
        rotation_field=fieldarr,
        time_s=channel.time_s + dt_s,
        drift_steps=steps,
        jump_count=channel.jump_count + jumps,
    )


def synth_dispersive_channel(
    n_plates: int,
    rng: np.random.Generator,
    wavelengths_nm=None,
    dispersion_range_rad_per_nm: tuple[float, float] = (0.002, 0.012),
    **channel_kwargs,
) -> FiberChannel:
    """Synthesize a channel as a stack of birefringent plates whose
    retardance varies linearly with wavelength.

    Rotation-per-nm grows with the plate count, mimicking concatenated
    fiber segments; zero plates gives the identity channel.
    """
    if n_plates < 0:
        raise ValueError("plate count must be >= 0")
    lo, hi = dispersion_range_rad_per_nm
    if lo < 0.0 or hi < lo:
        raise ValueError("invalid retardance dispersion range")
    wl = DEFAULT_WAVELENGTHS_NM if wavelengths_nm is None else np.asarray(wavelengths_nm, dtype=float)
    center = 0.5 * (wl[0] + wl[-1])
    fieldarr = np.broadcast_to(np.eye(3), (len(wl), 3, 3)).copy()
    for _ in range(n_plates):
        axis = _random_unit(rng)
        phi0 = rng.uniform(0.0, 2.0 * math.pi)
        slope = rng.uniform(lo, hi) * rng.choice((-1.0, 1.0))
        angles = phi0 + slope * (wl - center)
        axes = np.broadcast_to(axis, (len(wl), 3))
        rot = K.rotations_from_axis_angle(np.ascontiguousarray(axes), angles)
        K.compose_left_inplace(fieldarr, rot)
    return FiberChannel(wl, fieldarr, **channel_kwargs)


def simulate_probe_triple(
    channel: FiberChannel,
    wavelength_nm: float,
    rng: np.random.Generator,
    noise: float | None = None,
) -> list[StokesVector]:
    """Responses of the canonical H, D, R probe frame at one wavelength.

    ``noise`` overrides the channel polarimeter noise when given.
    """
    sigma = channel.polarimeter.stokes_noise if noise is None else noise
    i = channel.index_of(wavelength_nm)
    outs = []
    for probe in CANONICAL_PROBES:
        out = channel.rotation_field[i] @ probe.unit()
        if sigma > 0.0:
            out = out + rng.normal(0.0, sigma, 3)
            norm = np.linalg.norm(out)
            if norm > 1.0:
                out = out / norm
        outs.append(StokesVector.from_array(out))
    return outs
