"""Probabilistic entangled-pair source and coincidence detection.

The source emits the (|HH> + |VV>)/sqrt(2) Bell state mixed with white
noise. The mixing weight is tied to the pair rate through the
single-mode signal-idler cross-correlation g = 1 + kappa / rate, a
standard accidental-scaling model for probabilistic pair sources; the
default kappa is a fit to the reference link's operating points
(roughly F 0.99 at 2e4, 0.95 at 2e5 and 0.88 at 5e5 pairs/s) and is
configurable rather than measured. Rates refer to through-fiber pair
throughput; the transmission and detector efficiencies passed to
:func:`simulate_counts` only thin the counting statistics.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import SchemaError
from .polarization import (
    MeasurementMode,
    PoincareRotation,
    TwoQubitState,
    apply_one_sided,
    coincidence_probability,
    werner_state,
)

ModePair = tuple[MeasurementMode, MeasurementMode]

#: The eight analyzer settings used by the fidelity-bounding estimator.
BOUNDS_MODE_PAIRS: tuple[ModePair, ...] = tuple(
    (MeasurementMode(a), MeasurementMode(b))
    for a, b in ("HH", "HV", "VH", "VV", "DD", "DA", "AD", "AA")
)

LINEAR_MODE_PAIRS: tuple[ModePair, ...] = BOUNDS_MODE_PAIRS[:4]


def pair_label(pair: ModePair) -> str:
    return pair[0].value + pair[1].value


def pair_from_label(label: str) -> ModePair:
    if len(label) != 2:
        raise SchemaError(f"bad mode pair label {label!r}")
    try:
        return (MeasurementMode(label[0]), MeasurementMode(label[1]))
    except ValueError:
        raise SchemaError(f"bad mode pair label {label!r}") from None


@dataclass(frozen=True)
class SourceModel:
    """Pair source with rate-dependent white-noise admixture."""

    kappa_pairs_per_s: float = 5.5e6
    max_rate_pairs_per_s: float = 1.0e6

    def __post_init__(self):
        if self.kappa_pairs_per_s <= 0.0:
            raise ValueError("kappa must be positive")
        if self.max_rate_pairs_per_s <= 0.0:
            raise ValueError("max rate must be positive")


@dataclass(frozen=True)
class DetectorModel:
    """Efficiency-only detector; dark counts are kept as metadata since
    accidentals are absorbed by the source white-noise term."""

    efficiency: float
    dark_rate_hz: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.efficiency <= 1.0:
            raise ValueError(f"detector efficiency {self.efficiency} outside (0, 1]")
        if self.dark_rate_hz < 0.0:
            raise ValueError("dark count rate must be >= 0")


def default_detectors() -> tuple[DetectorModel, DetectorModel]:
    """Avalanche (68%) and nanowire (90%) detector pair of the reference
    link."""
    return (DetectorModel(0.68), DetectorModel(0.90))


@dataclass(frozen=True)
class MeasurementPlan:
    """Which analyzer pairs to dwell on and for how long each."""

    pairs: tuple[ModePair, ...] = BOUNDS_MODE_PAIRS
    dwell_s: float = 1.0

    def __post_init__(self):
        if self.dwell_s <= 0.0:
            raise ValueError("dwell must be positive")
        if not self.pairs:
            raise ValueError("measurement plan has no mode pairs")


@dataclass(frozen=True)
class CoincidenceCounts:
    """Coincidence counts per analyzer pair; integers when sampled,
    real-valued when carrying exact probabilities."""

    counts: dict[ModePair, float]
    dwell_s: float

    def __post_init__(self):
        for pair, c in self.counts.items():
            if c < 0:
                raise ValueError(f"negative count for {pair_label(pair)}")

    def get(self, label: str) -> float:
        return self.counts[pair_from_label(label)]

    def to_json(self, path) -> None:
        payload = {
            "dwell_s": self.dwell_s,
            "counts": {pair_label(p): c for p, c in self.counts.items()},
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, path) -> "CoincidenceCounts":
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
        if not isinstance(data, dict) or "dwell_s" not in data or "counts" not in data:
            raise SchemaError("counts file must hold {'dwell_s': ..., 'counts': {...}}")
        try:
            counts = {
                pair_from_label(label): float(c) for label, c in data["counts"].items()
            }
            return cls(counts, float(data["dwell_s"]))
        except (TypeError, ValueError) as exc:
            raise SchemaError(f"bad counts file: {exc}") from None


def gsi_at_rate(source: SourceModel, rate_pairs_per_s: float) -> float:
    """Single-mode cross-correlation 1 + kappa / rate, decreasing in rate."""
    if rate_pairs_per_s <= 0.0:
        raise ValueError("pair rate must be positive")
    if rate_pairs_per_s > source.max_rate_pairs_per_s:
        raise ValueError(
            f"pair rate {rate_pairs_per_s} above source maximum "
            f"{source.max_rate_pairs_per_s}"
        )
    return 1.0 + source.kappa_pairs_per_s / rate_pairs_per_s


def fidelity_from_gsi(g: float) -> float:
    """Expected Bell fidelity 1 - 3 / (2 (1 + g)) of the noisy source."""
    if g < 1.0:
        raise ValueError(f"cross-correlation {g} below 1")
    return 1.0 - 3.0 / (2.0 * (1.0 + g))


def werner_a_from_gsi(g: float) -> float:
    if g < 1.0:
        raise ValueError(f"cross-correlation {g} below 1")
    return (g - 1.0) / (g + 1.0)


def gsi_from_werner_a(a: float) -> float:
    if not 0.0 <= a < 1.0:
        raise ValueError(f"mixing parameter {a} outside [0, 1)")
    return (1.0 + a) / (1.0 - a)


def state_at_rate(source: SourceModel, rate_pairs_per_s: float) -> TwoQubitState:
    """Source output state at the given throughput rate."""
    return werner_state(werner_a_from_gsi(gsi_at_rate(source, rate_pairs_per_s)))


def simulate_counts(
    rho: TwoQubitState,
    rate_pairs_per_s: float,
    transmission: float,
    detectors: tuple[DetectorModel, DetectorModel],
    plan: MeasurementPlan,
    rng: np.random.Generator,
    channel_rotation: PoincareRotation | None = None,
) -> CoincidenceCounts:
    """Poisson-sample coincidences for each analyzer pair of the plan.

    The mean for pair (a, b) is rate * transmission * eta_a * eta_b *
    dwell * P(a, b), with P evaluated on rho after the optional one-sided
    channel rotation.
    """
    if not 0.0 < transmission <= 1.0:
        raise ValueError(f"transmission {transmission} outside (0, 1]")
    if rate_pairs_per_s <= 0.0:
        raise ValueError("pair rate must be positive")
    if channel_rotation is not None:
        rho = apply_one_sided(rho, channel_rotation)
    flux = (
        rate_pairs_per_s
        * transmission
        * detectors[0].efficiency
        * detectors[1].efficiency
        * plan.dwell_s
    )
    counts = {}
    for pair in plan.pairs:
        mean = flux * coincidence_probability(rho, *pair)
        counts[pair] = int(rng.poisson(mean))
    return CoincidenceCounts(counts, plan.dwell_s)


def pair_rate_from_counts(
    counts: CoincidenceCounts, eta_a: float, eta_b: float
) -> float:
    """Through-fiber pair rate: linear-basis coincidences divided by the
    peak detection efficiencies and the dwell."""
    missing = [p for p in LINEAR_MODE_PAIRS if p not in counts.counts]
    if missing:
        raise ValueError(f"missing linear-basis mode {pair_label(missing[0])}")
    total = sum(counts.counts[p] for p in LINEAR_MODE_PAIRS)
    return total / (eta_a * eta_b * counts.dwell_s)
