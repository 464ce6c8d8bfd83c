"""Automated polarization compensation and the long-run link simulator.

The compensator is a stack of four variable retardances about fixed
alternating Stokes axes (enough to reach any Poincare rotation with
margin). A compensation cycle measures the classical probe fidelity
against a stored reference and, when it falls below the trigger
threshold, runs finite-difference gradient ascent on the retardances
until the optimization threshold is reached. The entangled channel is
down exactly while a cycle routes classical light, so downtime equals
the summed cycle durations.

Classical fidelity is the mean Stokes overlap (1 + s_cur . s_ref) / 2
over the probe set, 1 exactly when the channel matches the reference.
Probing happens at the quantum photon's wavelength: compensation is only
valid on the same fiber at the same wavelength.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field as dc_field, replace

import numpy as np

from ._backend import K
from .channel import FiberChannel, step_drift, transmission
from .errors import ConfigError
from .polarization import PoincareRotation, StokesVector
from .source import (
    CoincidenceCounts,
    DetectorModel,
    MeasurementPlan,
    SourceModel,
    default_detectors,
    pair_rate_from_counts,
    simulate_counts,
    state_at_rate,
)
from .bounds import bounds_from_counts

#: Stokes axes (by index) of the four retarder stages.
COMPENSATOR_AXIS_IDS = np.array([0, 1, 0, 1], dtype=np.int64)

#: Default operating point; at zero retardance an x-y-x-y stack loses a
#: tangent direction (gimbal degeneracy) and gradient search stalls.
DEFAULT_RETARDANCES = (1.0, 1.3, 1.7, 2.1)

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class CompensatorState:
    """Variable retarder stack; retardances are wrapped to [0, 2 pi)."""

    retardances_rad: np.ndarray = dc_field(
        default_factory=lambda: np.array(DEFAULT_RETARDANCES)
    )
    bandwidth_hz: float = 1.2e5

    def __post_init__(self):
        r = np.asarray(self.retardances_rad, dtype=float) % TWO_PI
        if r.shape != (len(COMPENSATOR_AXIS_IDS),):
            raise ValueError(
                f"expected {len(COMPENSATOR_AXIS_IDS)} retardances, got shape {r.shape}"
            )
        if self.bandwidth_hz <= 0.0:
            raise ValueError("modulation bandwidth must be positive")
        object.__setattr__(self, "retardances_rad", r)

    def matrix(self) -> np.ndarray:
        return K.retarder_chain(self.retardances_rad, COMPENSATOR_AXIS_IDS)

    def rotation(self) -> PoincareRotation:
        return PoincareRotation(self.matrix())

    def with_retardances(self, r) -> "CompensatorState":
        return CompensatorState(np.asarray(r, dtype=float), self.bandwidth_hz)


@dataclass(frozen=True)
class APCConfig:
    """Thresholds, cadence and time costs of the compensation loop."""

    trigger_threshold: float = 0.99
    optimization_threshold: float = 0.99
    check_period_s: float = 20.0
    samples_per_probe: int = 10
    gradient_step_rad: float = 0.4
    fd_delta_rad: float = 0.05
    max_iterations: int = 24
    measurement_cost_s: float = 0.03
    iteration_cost_s: float = 0.04

    def __post_init__(self):
        for name in ("trigger_threshold", "optimization_threshold"):
            v = getattr(self, name)
            if not 0.0 < v <= 1.0:
                raise ConfigError(f"{name} {v} outside (0, 1]")
        if self.check_period_s <= 0.0:
            raise ConfigError("check period must be positive")
        if self.samples_per_probe < 1:
            raise ConfigError("samples per probe must be >= 1")
        if self.gradient_step_rad <= 0.0 or self.fd_delta_rad <= 0.0:
            raise ConfigError("optimizer steps must be positive")
        if self.max_iterations < 1:
            raise ConfigError("max iterations must be >= 1")
        if self.measurement_cost_s < 0.03:
            raise ConfigError("fast-path cycle time must be at least 0.03 s")
        worst = self.measurement_cost_s + self.max_iterations * self.iteration_cost_s
        if worst > 1.0 + 1e-9:
            raise ConfigError(
                f"worst-case cycle time {worst:.3f} s exceeds the 1.0 s budget"
            )


@dataclass(frozen=True)
class DowntimeInterval:
    start_s: float
    duration_s: float
    cause: str  # "check" or "optimization"


@dataclass
class UptimeLedger:
    """Downtime bookkeeping of one run."""

    elapsed_s: float = 0.0
    intervals: list[DowntimeInterval] = dc_field(default_factory=list)

    def add(self, start_s: float, duration_s: float, cause: str) -> None:
        self.intervals.append(DowntimeInterval(start_s, duration_s, cause))

    @property
    def total_downtime_s(self) -> float:
        return sum(i.duration_s for i in self.intervals)

    def validate(self) -> None:
        prev_end = 0.0
        for i in self.intervals:
            if i.start_s < prev_end - 1e-9 or i.start_s < 0.0:
                raise ValueError("downtime intervals overlap or precede the run")
            prev_end = i.start_s + i.duration_s
        if prev_end > self.elapsed_s + 1e-9:
            raise ValueError("downtime extends beyond the elapsed time")


def uptime(ledger: UptimeLedger) -> float:
    """Fraction of elapsed time the link distributed entangled pairs."""
    if ledger.elapsed_s <= 0.0:
        raise ValueError("elapsed time must be positive")
    return 1.0 - ledger.total_downtime_s / ledger.elapsed_s


@dataclass(frozen=True)
class CompensationCycleResult:
    t_s: float
    path: str  # "fast-check" or "optimized"
    duration_s: float
    pre_fidelity: float
    post_fidelity: float
    iterations: int
    converged: bool
    accepted_fidelities: tuple[float, ...] = ()


def _measure_rows(net: np.ndarray, sigma: float, rng: np.random.Generator) -> np.ndarray:
    """Polarimeter responses of the canonical probe frame through ``net``,
    one Stokes row per probe."""
    rows = net.T.copy()
    if sigma > 0.0:
        rows += rng.normal(0.0, sigma, (3, 3))
        norms = np.linalg.norm(rows, axis=1)
        over = norms > 1.0
        rows[over] /= norms[over, None]
    return rows


def _fidelity_rows(current: np.ndarray, reference: np.ndarray) -> float:
    cn = np.linalg.norm(current, axis=1)
    rn = np.linalg.norm(reference, axis=1)
    if cn.min() < 1e-12 or rn.min() < 1e-12:
        raise ValueError("zero-polarization response; classical fidelity undefined")
    dots = np.einsum("ij,ij->i", current, reference) / (cn * rn)
    return float((1.0 + dots).mean() / 2.0)


def _rows_to_stokes(rows: np.ndarray) -> list[StokesVector]:
    return [StokesVector.from_array(rows[i]) for i in range(rows.shape[0])]


def _stokes_to_rows(vectors) -> np.ndarray:
    return np.stack([s.vec for s in vectors])


def reference_capture(
    channel: FiberChannel,
    wavelength_nm: float,
    compensator: CompensatorState,
    cfg: APCConfig,
    rng: np.random.Generator,
) -> list[StokesVector]:
    """Store the probe responses through channel plus compensator as the
    alignment reference for later cycles."""
    i = channel.index_of(wavelength_nm)
    net = compensator.matrix() @ channel.rotation_field[i]
    sigma = channel.polarimeter.stokes_noise / math.sqrt(cfg.samples_per_probe)
    return _rows_to_stokes(_measure_rows(net, sigma, rng))


def classical_fidelity(current, reference) -> float:
    """Mean probe-wise Stokes overlap between two response sets."""
    cur = _stokes_to_rows(current)
    ref = _stokes_to_rows(reference)
    if cur.shape != ref.shape:
        raise ValueError("response sets differ in length")
    return _fidelity_rows(cur, ref)


def compensation_cycle(
    channel: FiberChannel,
    wavelength_nm: float,
    compensator: CompensatorState,
    cfg: APCConfig,
    reference,
    rng: np.random.Generator,
    t_s: float = 0.0,
) -> tuple[CompensatorState, CompensationCycleResult]:
    """One threshold-gated compensation cycle.

    Fast path: one probe measurement, no adjustment. Otherwise gradient
    ascent on the retardances until the optimization threshold or the
    iteration budget is reached; the wall-time cost is the measurement
    cost plus the per-iteration cost, capped at 1 s.
    """
    i = channel.index_of(wavelength_nm)
    r_fiber = channel.rotation_field[i]
    ref_rows = _stokes_to_rows(reference)
    sigma = channel.polarimeter.stokes_noise / math.sqrt(cfg.samples_per_probe)

    def measure(retardances: np.ndarray) -> float:
        net = K.retarder_chain(retardances % TWO_PI, COMPENSATOR_AXIS_IDS) @ r_fiber
        return _fidelity_rows(_measure_rows(net, sigma, rng), ref_rows)

    r = compensator.retardances_rad.copy()
    pre = measure(r)
    if pre >= cfg.trigger_threshold:
        result = CompensationCycleResult(
            t_s=t_s,
            path="fast-check",
            duration_s=cfg.measurement_cost_s,
            pre_fidelity=pre,
            post_fidelity=pre,
            iterations=0,
            converged=True,
        )
        return compensator, result

    max_slew = TWO_PI * compensator.bandwidth_hz * cfg.iteration_cost_s
    f_cur = pre
    step = cfg.gradient_step_rad
    accepted = []
    iters = 0
    while iters < cfg.max_iterations and f_cur < cfg.optimization_threshold:
        iters += 1
        grad = np.empty(4)
        for k in range(4):
            rp = r.copy()
            rp[k] += cfg.fd_delta_rad
            rm = r.copy()
            rm[k] -= cfg.fd_delta_rad
            grad[k] = (measure(rp) - measure(rm)) / (2.0 * cfg.fd_delta_rad)
        norm = np.linalg.norm(grad)
        if norm < 1e-9:
            # flat patch (antipodal alignment); try a random kick instead
            candidate = r + rng.normal(0.0, 0.3, 4)
            f_new = measure(candidate)
            if f_new > f_cur:
                r, f_cur = candidate, f_new
                accepted.append(f_cur)
            continue
        direction = grad / norm
        trial = min(step, max_slew)
        f_new = measure(r + trial * direction)
        bracket_hi = None  # (step, fidelity) of the first failing probe beyond trial
        if f_new > f_cur:
            # extend the step while it keeps paying off
            for _ in range(4):
                wider = min(trial * 2.0, max_slew)
                if wider <= trial:
                    break
                f2 = measure(r + wider * direction)
                if f2 > f_new:
                    trial, f_new = wider, f2
                else:
                    bracket_hi = (wider, f2)
                    break
        else:
            # backtrack along the same direction before giving up
            for _ in range(3):
                bracket_hi = (trial, f_new)
                trial *= 0.5
                f_new = measure(r + trial * direction)
                if f_new > f_cur:
                    break
        if f_new > f_cur:
            if bracket_hi is not None:
                # parabolic refinement on the bracket (0, trial, hi)
                hi, f_hi = bracket_hi
                denom = (trial - 0.0) * (f_new - f_hi) - (trial - hi) * (f_new - f_cur)
                if abs(denom) > 1e-15:
                    t_star = trial - 0.5 * (
                        (trial - 0.0) ** 2 * (f_new - f_hi)
                        - (trial - hi) ** 2 * (f_new - f_cur)
                    ) / denom
                    if 0.0 < t_star < hi and abs(t_star - trial) > 1e-6:
                        f_star = measure(r + t_star * direction)
                        if f_star > f_new:
                            trial, f_new = t_star, f_star
            r = r + trial * direction
            f_cur = f_new
            accepted.append(f_cur)
            step = min(max(trial, 1e-3) * 1.3, max_slew)
        else:
            step = max(step * 0.25, 1e-4)

    converged = f_cur >= cfg.optimization_threshold
    duration = min(cfg.measurement_cost_s + iters * cfg.iteration_cost_s, 1.0)
    result = CompensationCycleResult(
        t_s=t_s,
        path="optimized",
        duration_s=duration,
        pre_fidelity=pre,
        post_fidelity=f_cur,
        iterations=iters,
        converged=converged,
        accepted_fidelities=tuple(accepted),
    )
    return compensator.with_retardances(r), result


@dataclass
class LongRunResult:
    """Time series and bookkeeping of one long-distribution run."""

    sample_t_s: np.ndarray
    pair_rate: np.ndarray
    comp_lower: np.ndarray
    comp_upper: np.ndarray
    uncomp_lower: np.ndarray
    uncomp_upper: np.ndarray
    uptime_cum: np.ndarray
    cycles: list[CompensationCycleResult]
    ledger: UptimeLedger
    final_channel: FiberChannel
    final_compensator: CompensatorState

    def uptime(self) -> float:
        return uptime(self.ledger)

    def summary(self) -> dict:
        n_opt = sum(1 for c in self.cycles if c.path == "optimized")
        return {
            "duration_s": self.ledger.elapsed_s,
            "uptime": self.uptime(),
            "total_downtime_s": self.ledger.total_downtime_s,
            "n_cycles": len(self.cycles),
            "n_optimizations": n_opt,
            "n_samples": int(len(self.sample_t_s)),
            "mean_pair_rate": float(self.pair_rate.mean()) if len(self.pair_rate) else None,
            "mean_comp_lower": float(self.comp_lower.mean()) if len(self.comp_lower) else None,
            "mean_comp_upper": float(self.comp_upper.mean()) if len(self.comp_upper) else None,
            "mean_uncomp_lower": float(self.uncomp_lower.mean()) if len(self.uncomp_lower) else None,
            "mean_uncomp_upper": float(self.uncomp_upper.mean()) if len(self.uncomp_upper) else None,
            "min_uncomp_lower": float(self.uncomp_lower.min()) if len(self.uncomp_lower) else None,
        }


def run_long_term(
    channel: FiberChannel,
    cfg: APCConfig,
    source: SourceModel,
    rate_pairs_per_s: float,
    plan: MeasurementPlan,
    duration_s: float,
    sampling_period_s: float,
    rng: np.random.Generator,
    quantum_wavelength_nm: float = 1324.0,
    detectors: tuple[DetectorModel, DetectorModel] | None = None,
    compensator: CompensatorState | None = None,
) -> LongRunResult:
    """Event-driven long-run simulation.

    Interleaves drift evolution, compensation checks every check period
    (rescheduled from each cycle's end) and fidelity-bounding samples of
    both the compensated and the uncompensated path every sampling
    period. Both paths share the frozen initial correction; only the
    compensated one is steered afterwards. Bounding measurements use the
    entangled light itself and cost no downtime.
    """
    if duration_s <= sampling_period_s:
        raise ValueError("duration must exceed the sampling period")
    if detectors is None:
        detectors = default_detectors()

    iq = channel.index_of(quantum_wavelength_nm)
    r0 = channel.rotation_field[iq].copy()
    comp = compensator if compensator is not None else CompensatorState()
    # pre-run calibration: paddles and retarder undo the initial rotation of
    # compensator plus fiber on both paths, then stay fixed
    static_correction = (comp.matrix() @ r0).T
    static_uncomp = r0.T
    reference = reference_capture(channel, quantum_wavelength_nm, comp, cfg, rng)

    state = state_at_rate(source, rate_pairs_per_s)
    trans = transmission(channel.loss.total_db)
    eta_a, eta_b = detectors[0].efficiency, detectors[1].efficiency

    ledger = UptimeLedger()
    cycles: list[CompensationCycleResult] = []
    rec_t: list[float] = []
    rec_rate: list[float] = []
    rec_cl: list[float] = []
    rec_cu: list[float] = []
    rec_ul: list[float] = []
    rec_uu: list[float] = []
    rec_up: list[float] = []

    ch = channel
    t = 0.0
    downtime = 0.0
    next_sample = 0.0
    next_check = cfg.check_period_s

    while min(next_sample, next_check) < duration_s:
        t_target = max(t, min(next_sample, next_check))
        if t_target > t:
            ch = step_drift(ch, t_target - t, rng)
            t = t_target

        if next_sample <= next_check:
            r_fiber = ch.rotation_field[iq]
            q_comp = PoincareRotation(
                static_correction @ comp.matrix() @ r_fiber, validate=False
            )
            q_unc = PoincareRotation(static_uncomp @ r_fiber, validate=False)
            counts_c = simulate_counts(
                state, rate_pairs_per_s, trans, detectors, plan, rng,
                channel_rotation=q_comp,
            )
            counts_u = simulate_counts(
                state, rate_pairs_per_s, trans, detectors, plan, rng,
                channel_rotation=q_unc,
            )
            b_c = bounds_from_counts(counts_c)
            b_u = bounds_from_counts(counts_u)
            rec_t.append(t)
            rec_rate.append(pair_rate_from_counts(counts_c, eta_a, eta_b))
            rec_cl.append(b_c.lower)
            rec_cu.append(b_c.upper)
            rec_ul.append(b_u.lower)
            rec_uu.append(b_u.upper)
            rec_up.append(1.0 if t <= 0.0 else 1.0 - downtime / t)
            next_sample += sampling_period_s
        else:
            comp, result = compensation_cycle(
                ch, quantum_wavelength_nm, comp, cfg, reference, rng, t_s=t
            )
            cycles.append(result)
            cause = "check" if result.path == "fast-check" else "optimization"
            ledger.add(t, result.duration_s, cause)
            downtime += result.duration_s
            t += result.duration_s
            next_check = t + cfg.check_period_s

    ledger.elapsed_s = duration_s
    return LongRunResult(
        sample_t_s=np.array(rec_t),
        pair_rate=np.array(rec_rate),
        comp_lower=np.array(rec_cl),
        comp_upper=np.array(rec_cu),
        uncomp_lower=np.array(rec_ul),
        uncomp_upper=np.array(rec_uu),
        uptime_cum=np.array(rec_up),
        cycles=cycles,
        ledger=ledger,
        final_channel=ch,
        final_compensator=comp,
    )


TIMESERIES_COLUMNS = (
    "t_s",
    "pair_rate",
    "comp_lower",
    "comp_upper",
    "uncomp_lower",
    "uncomp_upper",
    "uptime_cum",
)

CYCLES_COLUMNS = ("t_s", "path", "duration_s", "pre_fid", "post_fid", "iterations")


def _trailing_average(t_s: np.ndarray, values: np.ndarray, window_s: float) -> np.ndarray:
    out = np.empty_like(values)
    start = 0
    for i in range(len(values)):
        while t_s[i] - t_s[start] > window_s:
            start += 1
        out[i] = values[start : i + 1].mean()
    return out


def write_timeseries_csv(result: LongRunResult, path, trailing_hours: float = 0.0) -> None:
    header = list(TIMESERIES_COLUMNS)
    columns = [
        result.sample_t_s,
        result.pair_rate,
        result.comp_lower,
        result.comp_upper,
        result.uncomp_lower,
        result.uncomp_upper,
        result.uptime_cum,
    ]
    if trailing_hours > 0.0:
        window = trailing_hours * 3600.0
        for name, values in (
            ("pair_rate", result.pair_rate),
            ("comp_lower", result.comp_lower),
            ("comp_upper", result.comp_upper),
            ("uncomp_lower", result.uncomp_lower),
            ("uncomp_upper", result.uncomp_upper),
        ):
            header.append(f"{name}_trail")
            columns.append(_trailing_average(result.sample_t_s, values, window))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in zip(*columns):
            writer.writerow([f"{x:.10g}" for x in row])


def write_cycles_csv(result: LongRunResult, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(CYCLES_COLUMNS)
        for c in result.cycles:
            writer.writerow(
                [
                    f"{c.t_s:.10g}",
                    c.path,
                    f"{c.duration_s:.10g}",
                    f"{c.pre_fidelity:.10g}",
                    f"{c.post_fidelity:.10g}",
                    c.iterations,
                ]
            )
