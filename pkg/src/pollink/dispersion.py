"""Wavelength-sweep analysis: rotation spectra, corrected-fidelity curves,
Gaussian spectral averaging and temporal fidelity maps.

All analysis stays on the measured wavelength grid (no interpolation).
Probe triples are the canonical H, D, R Stokes frame.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass

import numpy as np

from . import channel as chan
from .errors import EstimationError, SchemaError
from .polarization import (
    CANONICAL_PROBES,
    PoincareRotation,
    StokesVector,
    fidelity_from_residual_rotation,
    rotation_angle,
)

PROBE_LABELS = ("H", "D", "R")

SWEEP_COLUMNS = ("timestamp_s", "wavelength_nm", "probe", "s1", "s2", "s3", "dop")


@dataclass(frozen=True)
class PolarimeterSweep:
    """Polarimeter responses of the H/D/R probe triple over a wavelength
    sweep, possibly repeated at several timestamps."""

    times_s: np.ndarray  # (nt,)
    wavelengths_nm: np.ndarray  # (nl,)
    stokes: np.ndarray  # (nt, nl, 3 probes, 3 components)
    dop: np.ndarray  # (nt, nl, 3 probes)
    label: str = ""

    def __post_init__(self):
        nt, nl = len(self.times_s), len(self.wavelengths_nm)
        if self.stokes.shape != (nt, nl, 3, 3) or self.dop.shape != (nt, nl, 3):
            raise ValueError("sweep arrays have inconsistent shapes")
        if nl < 1 or nt < 1:
            raise ValueError("sweep must contain at least one wavelength and timestamp")
        if nl > 1 and np.any(np.diff(self.wavelengths_nm) <= 0.0):
            raise ValueError("sweep wavelength grid must be strictly increasing")

    def responses(self, t_index: int, l_index: int) -> list[StokesVector]:
        return [
            StokesVector.from_array(
                self.stokes[t_index, l_index, k], float(self.dop[t_index, l_index, k])
            )
            for k in range(3)
        ]


def load_sweep(path) -> PolarimeterSweep:
    """Read and validate a sweep CSV (see SWEEP_COLUMNS for the schema)."""
    records: dict[tuple[float, float], dict[str, tuple[float, float, float, float]]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty sweep file") from None
        if tuple(h.strip() for h in header) != SWEEP_COLUMNS:
            raise SchemaError(
                f"{path}: bad header {header!r}, expected {','.join(SWEEP_COLUMNS)}"
            )
        n_rows = 0
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(SWEEP_COLUMNS):
                raise SchemaError(f"{path}:{lineno}: expected {len(SWEEP_COLUMNS)} fields")
            try:
                t = float(row[0])
                lam = float(row[1])
                probe = row[2].strip()
                s = (float(row[3]), float(row[4]), float(row[5]), float(row[6]))
            except ValueError as exc:
                raise SchemaError(f"{path}:{lineno}: {exc}") from None
            if probe not in PROBE_LABELS:
                raise SchemaError(
                    f"{path}:{lineno}: probe {probe!r} not one of {PROBE_LABELS}"
                )
            cell = records.setdefault((t, lam), {})
            if probe in cell:
                raise SchemaError(
                    f"{path}:{lineno}: duplicate probe {probe} at t={t} s, {lam} nm"
                )
            cell[probe] = s
            n_rows += 1
    if n_rows == 0:
        raise SchemaError(f"{path}: empty sweep")

    times = sorted({t for t, _ in records})
    wavelengths = sorted({lam for _, lam in records})
    for t in times:
        for lam in wavelengths:
            cell = records.get((t, lam))
            if cell is None:
                raise SchemaError(
                    f"{path}: missing probe triple at t={t} s, {lam} nm"
                )
            missing = [p for p in PROBE_LABELS if p not in cell]
            if missing:
                raise SchemaError(
                    f"{path}: missing probe {missing[0]} at t={t} s, {lam} nm"
                )

    nt, nl = len(times), len(wavelengths)
    stokes = np.empty((nt, nl, 3, 3))
    dop = np.empty((nt, nl, 3))
    for i, t in enumerate(times):
        for j, lam in enumerate(wavelengths):
            for k, p in enumerate(PROBE_LABELS):
                s1, s2, s3, d = records[(t, lam)][p]
                stokes[i, j, k] = (s1, s2, s3)
                dop[i, j, k] = d
    return PolarimeterSweep(np.array(times), np.array(wavelengths), stokes, dop)


def save_sweep(sweep: PolarimeterSweep, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(SWEEP_COLUMNS)
        for i, t in enumerate(sweep.times_s):
            for j, lam in enumerate(sweep.wavelengths_nm):
                for k, p in enumerate(PROBE_LABELS):
                    s = sweep.stokes[i, j, k]
                    writer.writerow(
                        [
                            f"{t:.17g}",
                            f"{lam:.17g}",
                            p,
                            f"{s[0]:.17g}",
                            f"{s[1]:.17g}",
                            f"{s[2]:.17g}",
                            f"{sweep.dop[i, j, k]:.17g}",
                        ]
                    )


def simulate_sweep(
    channel: chan.FiberChannel,
    rng: np.random.Generator,
    n_timestamps: int = 1,
    interval_s: float = 600.0,
    noise: float | None = None,
    label: str = "",
) -> PolarimeterSweep:
    """Forward-simulate the probe sweep over the channel's grid; the
    channel drifts by ``interval_s`` between successive timestamps."""
    times = []
    frames = []
    dops = []
    current = channel
    for i in range(n_timestamps):
        if i > 0:
            current = chan.step_drift(current, interval_s, rng)
        times.append(current.time_s)
        per_lambda = np.empty((len(current.wavelengths_nm), 3, 3))
        per_dop = np.empty((len(current.wavelengths_nm), 3))
        for j, lam in enumerate(current.wavelengths_nm):
            outs = chan.simulate_probe_triple(current, lam, rng, noise=noise)
            for k, s in enumerate(outs):
                per_lambda[j, k] = s.vec
                per_dop[j, k] = s.dop
        frames.append(per_lambda)
        dops.append(per_dop)
    return PolarimeterSweep(
        np.array(times),
        channel.wavelengths_nm.copy(),
        np.stack(frames),
        np.stack(dops),
        label=label,
    )


def rotations_vs_wavelength(
    sweep: PolarimeterSweep, t_index: int = 0
) -> list[tuple[float, PoincareRotation, float]]:
    """Per-wavelength rotation estimate of the probe triple at one
    timestamp, with its angle relative to the probe frame."""
    results = []
    for j, lam in enumerate(sweep.wavelengths_nm):
        try:
            rot = chan.estimate_rotation(CANONICAL_PROBES, sweep.responses(t_index, j))
        except EstimationError as exc:
            raise EstimationError(f"at {lam} nm: {exc}") from exc
        results.append((float(lam), rot, rotation_angle(rot)))
    return results


def _chordal_mean(matrices: np.ndarray) -> np.ndarray:
    mean = matrices.mean(axis=0)
    u, s, vt = np.linalg.svd(mean)
    if s.min() < 1e-9:
        raise EstimationError("entrywise mean rotation is singular; no chordal mean")
    d = np.sign(np.linalg.det(u @ vt))
    return u @ np.diag([1.0, 1.0, d]) @ vt


def rotation_relative_to_mean(
    rotations: list[tuple[float, PoincareRotation, float]]
) -> list[tuple[float, float]]:
    """Angle of each rotation relative to the chordal mean of the set."""
    if len(rotations) < 2:
        raise ValueError("need at least two wavelengths to form a mean rotation")
    mats = np.stack([r.matrix for _, r, _ in rotations])
    mean = _chordal_mean(mats)
    rel = mean.T @ mats
    angles = np.arccos(np.clip((np.einsum("nii->n", rel) - 1.0) / 2.0, -1.0, 1.0))
    return [(lam, float(a)) for (lam, _, _), a in zip(rotations, angles)]


def rotation_per_nm(
    rotations: list[tuple[float, PoincareRotation, float]]
) -> list[tuple[float, float]]:
    """Rotation angle between adjacent grid wavelengths, at midpoints."""
    out = []
    for (lam0, r0, _), (lam1, r1, _) in zip(rotations, rotations[1:]):
        step = rotation_angle(PoincareRotation(r0.matrix.T @ r1.matrix, validate=False))
        out.append((0.5 * (lam0 + lam1), step))
    return out


def corrected_fidelity_curve(
    rotations: list[tuple[float, PoincareRotation, float]], lambda0_nm: float
) -> list[tuple[float, float]]:
    """Expected narrowband Bell fidelity after undoing the rotation at
    ``lambda0_nm``: F(lambda) = cos^2(angle(R(l0)^T R(l)) / 2)."""
    lams = np.array([lam for lam, _, _ in rotations])
    matches = np.nonzero(np.abs(lams - lambda0_nm) < 0.5)[0]
    if len(matches) == 0:
        raise ValueError(f"correction wavelength {lambda0_nm} nm not on the grid")
    j0 = int(matches[0])
    r0 = rotations[j0][1].matrix
    out = []
    for j, (lam, r, _) in enumerate(rotations):
        if j == j0:
            theta = 0.0
        else:
            theta = rotation_angle(PoincareRotation(r0.T @ r.matrix, validate=False))
        out.append((float(lam), fidelity_from_residual_rotation(theta)))
    return out


def spectral_weighted_fidelity(
    curve: list[tuple[float, float]], center_nm: float, fwhm_nm: float
) -> float:
    """Gaussian-weighted average of a fidelity curve over the biphoton
    spectrum, truncated and renormalized on the measured grid."""
    if fwhm_nm < 0.0:
        raise ValueError("spectral width must be >= 0")
    lams = np.array([lam for lam, _ in curve])
    fids = np.array([f for _, f in curve])
    if center_nm < lams[0] - 0.5 or center_nm > lams[-1] + 0.5:
        raise ValueError(f"center wavelength {center_nm} nm outside the curve grid")
    if fwhm_nm == 0.0:
        return float(fids[np.argmin(np.abs(lams - center_nm))])
    sigma = fwhm_nm / (2.0 * math.sqrt(2.0 * math.log(2.0)))
    w = np.exp(-0.5 * ((lams - center_nm) / sigma) ** 2)
    # trapezoid-rule weights handle a non-uniform grid and the edges
    trap = np.empty_like(lams)
    trap[1:-1] = 0.5 * (lams[2:] - lams[:-2])
    trap[0] = 0.5 * (lams[1] - lams[0]) if len(lams) > 1 else 1.0
    trap[-1] = 0.5 * (lams[-1] - lams[-2]) if len(lams) > 1 else 1.0
    w = w * trap
    return float((w * fids).sum() / w.sum())


def temporal_fidelity_map(sweep: PolarimeterSweep) -> np.ndarray:
    """Narrowband Bell fidelity relative to the initial state of each
    wavelength: F[t, lambda] = cos^2(angle(R(l, t0)^T R(l, t)) / 2)."""
    if len(sweep.times_s) < 2:
        raise ValueError("temporal map needs at least two timestamps")
    per_t = [rotations_vs_wavelength(sweep, i) for i in range(len(sweep.times_s))]
    base = np.stack([r.matrix for _, r, _ in per_t[0]])
    fmap = np.empty((len(sweep.times_s), len(sweep.wavelengths_nm)))
    fmap[0] = 1.0
    for i, rots in enumerate(per_t[1:], start=1):
        mats = np.stack([r.matrix for _, r, _ in rots])
        rel = np.einsum("nji,njk->nik", base, mats)
        tr = np.einsum("nii->n", rel)
        fmap[i] = np.cos(np.arccos(np.clip((tr - 1.0) / 2.0, -1.0, 1.0)) / 2.0) ** 2
    return fmap


@dataclass
class DispersionReport:
    """Derived dispersion quantities of one sweep, plot-ready."""

    lambda0_nm: float
    wavelengths_nm: np.ndarray
    rotation_rad: np.ndarray
    rotation_rel_mean_rad: np.ndarray
    midpoints_nm: np.ndarray
    rotation_per_nm_rad: np.ndarray
    corrected_fidelity: np.ndarray
    fwhm_grid_nm: np.ndarray
    spectral_fidelity: np.ndarray
    center_grid_nm: np.ndarray
    center_sweep_fidelity: np.ndarray
    center_sweep_fwhm_nm: float
    times_s: np.ndarray | None = None
    temporal_fidelity: np.ndarray | None = None
    label: str = ""

    def to_dict(self) -> dict:
        d = {
            "label": self.label,
            "lambda0_nm": self.lambda0_nm,
            "wavelengths_nm": self.wavelengths_nm.tolist(),
            "rotation_rad": self.rotation_rad.tolist(),
            "rotation_rel_mean_rad": self.rotation_rel_mean_rad.tolist(),
            "rotation_per_nm": {
                "midpoints_nm": self.midpoints_nm.tolist(),
                "rad": self.rotation_per_nm_rad.tolist(),
            },
            "corrected_fidelity": self.corrected_fidelity.tolist(),
            "spectral_fidelity": {
                "fwhm_nm": self.fwhm_grid_nm.tolist(),
                "fidelity": self.spectral_fidelity.tolist(),
            },
            "center_sweep": {
                "fwhm_nm": self.center_sweep_fwhm_nm,
                "center_nm": self.center_grid_nm.tolist(),
                "fidelity": self.center_sweep_fidelity.tolist(),
            },
        }
        if self.temporal_fidelity is not None:
            d["temporal"] = {
                "times_s": self.times_s.tolist(),
                "fidelity": self.temporal_fidelity.tolist(),
            }
        return d


def analyze_sweep(
    sweep: PolarimeterSweep,
    lambda0_nm: float = 1300.0,
    fwhm_grid_nm=(0.0, 1.0, 2.0, 4.0, 6.0, 8.0, 10.0, 14.0, 20.0),
    center_sweep_fwhm_nm: float = 10.0,
    t_index: int = 0,
) -> DispersionReport:
    """Compute every derived dispersion quantity for one sweep.

    The per-center spectral sweep undoes the rotation at each center
    wavelength before averaging, so it isolates the bandwidth penalty.
    """
    rotations = rotations_vs_wavelength(sweep, t_index)
    rel = rotation_relative_to_mean(rotations) if len(rotations) > 1 else []
    per_nm = rotation_per_nm(rotations)
    curve = corrected_fidelity_curve(rotations, lambda0_nm)
    fwhm_grid = np.asarray(fwhm_grid_nm, dtype=float)
    spectral = np.array(
        [spectral_weighted_fidelity(curve, lambda0_nm, f) for f in fwhm_grid]
    )
    centers = sweep.wavelengths_nm
    center_fids = np.empty(len(centers))
    for i, c in enumerate(centers):
        c_curve = corrected_fidelity_curve(rotations, float(c))
        center_fids[i] = spectral_weighted_fidelity(c_curve, float(c), center_sweep_fwhm_nm)
    times = None
    fmap = None
    if len(sweep.times_s) > 1:
        times = sweep.times_s.copy()
        fmap = temporal_fidelity_map(sweep)
    return DispersionReport(
        lambda0_nm=lambda0_nm,
        wavelengths_nm=sweep.wavelengths_nm.copy(),
        rotation_rad=np.array([th for _, _, th in rotations]),
        rotation_rel_mean_rad=np.array([a for _, a in rel]) if rel else np.zeros(0),
        midpoints_nm=np.array([m for m, _ in per_nm]),
        rotation_per_nm_rad=np.array([a for _, a in per_nm]),
        corrected_fidelity=np.array([f for _, f in curve]),
        fwhm_grid_nm=fwhm_grid,
        spectral_fidelity=spectral,
        center_grid_nm=centers.copy(),
        center_sweep_fidelity=center_fids,
        center_sweep_fwhm_nm=center_sweep_fwhm_nm,
        times_s=times,
        temporal_fidelity=fmap,
        label=sweep.label,
    )


def _write_csv(path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([f"{x:.10g}" if isinstance(x, float) else x for x in row])


def write_report(report: DispersionReport, out_dir) -> list[str]:
    """Write the report JSON and one CSV per figure panel; returns the
    file names written."""
    import os

    written = []

    def out(name):
        written.append(name)
        return os.path.join(out_dir, name)

    _write_csv(
        out("fig2a.csv"),
        ("wavelength_nm", "rotation_rad"),
        zip(report.wavelengths_nm.tolist(), report.rotation_rad.tolist()),
    )
    if len(report.rotation_rel_mean_rad):
        _write_csv(
            out("fig2b.csv"),
            ("wavelength_nm", "rotation_rel_mean_rad"),
            zip(report.wavelengths_nm.tolist(), report.rotation_rel_mean_rad.tolist()),
        )
    _write_csv(
        out("fig2c.csv"),
        ("wavelength_mid_nm", "rotation_per_nm_rad"),
        zip(report.midpoints_nm.tolist(), report.rotation_per_nm_rad.tolist()),
    )
    _write_csv(
        out("fig2d.csv"),
        ("wavelength_nm", "fidelity"),
        zip(report.wavelengths_nm.tolist(), report.corrected_fidelity.tolist()),
    )
    _write_csv(
        out("fig2e.csv"),
        ("fwhm_nm", "fidelity"),
        zip(report.fwhm_grid_nm.tolist(), report.spectral_fidelity.tolist()),
    )
    _write_csv(
        out("fig2f.csv"),
        ("center_nm", "fidelity"),
        zip(report.center_grid_nm.tolist(), report.center_sweep_fidelity.tolist()),
    )
    if report.temporal_fidelity is not None:
        rows = []
        for i, t in enumerate(report.times_s.tolist()):
            for j, lam in enumerate(report.wavelengths_nm.tolist()):
                rows.append((t, lam, float(report.temporal_fidelity[i, j])))
        _write_csv(out("fig3.csv"), ("t_s", "wavelength_nm", "fidelity"), rows)
    with open(out("report.json"), "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
    return written
