"""Fidelity bounding from eight coincidence counts.

Four Cauchy-Schwarz bound pairs are evaluated: linear-basis and
diagonal-basis population bounds, plus the two cross-basis bounds that
combine populations of one basis with the off-mode coherence limit of
the other. The reported interval is the highest lower bound and the
lowest upper bound (clamped to 1).

All expressions share the linear-basis total N as normalization, which
assumes equal flux during the two basis acquisitions; set
``renormalize_diagonal`` to rescale diagonal-basis counts by their own
total when that assumption is too strong.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np

from .errors import EstimationError
from .source import BOUNDS_MODE_PAIRS, CoincidenceCounts, pair_label

EXPRESSION_NAMES = ("L1", "U1", "L2", "U2", "L3", "U3", "L4", "U4")

_LOWER_IDX = np.array([0, 2, 4, 6])
_UPPER_IDX = np.array([1, 3, 5, 7])


@dataclass(frozen=True)
class FidelityBounds:
    """Bell-state fidelity interval with per-expression detail."""

    lower: float
    upper: float
    expressions: dict[str, float]
    sigma_lower: float | None = None
    sigma_upper: float | None = None

    def __post_init__(self):
        # sampling noise on near-pure states can invert the interval by a
        # hair (tiny off-mode counts); only a gross inversion signals
        # basis-imbalanced counts that the shared normalization cannot carry
        if self.lower > self.upper + 0.05:
            raise EstimationError(
                f"inconsistent bounds (lower {self.lower:.6f} > upper "
                f"{self.upper:.6f}); counts are badly basis-imbalanced"
            )

    def to_dict(self) -> dict:
        return {
            "lower": self.lower,
            "upper": self.upper,
            "sigma_lower": self.sigma_lower,
            "sigma_upper": self.sigma_upper,
            "expressions": dict(self.expressions),
        }

    def to_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)


def _counts_vector(counts: CoincidenceCounts) -> np.ndarray:
    missing = [p for p in BOUNDS_MODE_PAIRS if p not in counts.counts]
    if missing:
        raise ValueError(f"missing mode {pair_label(missing[0])} in counts")
    return np.array([counts.counts[p] for p in BOUNDS_MODE_PAIRS], dtype=float)


def _expressions(c: np.ndarray, renormalize_diagonal: bool = False) -> np.ndarray:
    """Evaluate the eight bound expressions on stacked count vectors.

    ``c`` has shape (..., 8) ordered HH, HV, VH, VV, DD, DA, AD, AA;
    the result has shape (..., 8) ordered as EXPRESSION_NAMES. Entries
    with zero linear-basis total come out as NaN.
    """
    c = np.asarray(c, dtype=float)
    n = c[..., :4].sum(axis=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        if renormalize_diagonal:
            nd = c[..., 4:].sum(axis=-1)
            scale = np.where(nd > 0.0, n / np.where(nd > 0.0, nd, 1.0), 1.0)
            c = np.concatenate([c[..., :4], c[..., 4:] * scale[..., None]], axis=-1)
        hh, hv, vh, vv = (c[..., k] for k in range(4))
        dd, da, ad, aa = (c[..., k] for k in range(4, 8))
        two_n = 2.0 * n
        root_lin = 2.0 * np.sqrt(hh * vv)
        root_diag = 2.0 * np.sqrt(dd * aa)
        cross_hv = 2.0 * np.sqrt(hv * vh)
        cross_da = 2.0 * np.sqrt(da * ad)
        pop = hh + vv
        pop_d = dd + aa
        mix_lin = pop + pop_d - da - ad
        mix_diag = pop_d + pop - hv - vh
        out = np.stack(
            [
                (pop - root_lin) / two_n,
                (pop + root_lin) / two_n,
                (mix_lin - cross_hv) / two_n,
                (mix_lin + cross_hv) / two_n,
                (pop_d - root_diag) / two_n,
                (pop_d + root_diag) / two_n,
                (mix_diag - cross_da) / two_n,
                (mix_diag + cross_da) / two_n,
            ],
            axis=-1,
        )
        return np.where(n[..., None] > 0.0, out, np.nan)


def _lower_upper(expr: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    lower = expr[..., _LOWER_IDX].max(axis=-1)
    upper = np.minimum(expr[..., _UPPER_IDX].min(axis=-1), 1.0)
    return lower, upper


def bounds_from_counts(
    counts: CoincidenceCounts, renormalize_diagonal: bool = False
) -> FidelityBounds:
    """Evaluate all bound expressions and aggregate the tightest interval."""
    c = _counts_vector(counts)
    if c[:4].sum() <= 0.0:
        raise ValueError("linear-basis counts sum to zero; bounds are undefined")
    expr = _expressions(c, renormalize_diagonal)
    lower, upper = _lower_upper(expr)
    return FidelityBounds(
        lower=float(lower),
        upper=float(upper),
        expressions={name: float(v) for name, v in zip(EXPRESSION_NAMES, expr)},
    )


def bound_uncertainties(
    counts: CoincidenceCounts,
    rng: np.random.Generator | None = None,
    method: str = "bootstrap",
    n_resamples: int = 1000,
    renormalize_diagonal: bool = False,
) -> tuple[float, float]:
    """Statistical standard errors of the aggregated lower and upper bound.

    The default is a parametric bootstrap (each count resampled as
    Poisson around the observed value); "gaussian" propagates Poisson
    variances through a numerical Jacobian as a cross-check.
    """
    c = _counts_vector(counts)
    if c[:4].sum() <= 0.0:
        raise ValueError("linear-basis counts sum to zero; bounds are undefined")
    if method == "bootstrap":
        if rng is None:
            rng = np.random.default_rng()
        resampled = rng.poisson(np.broadcast_to(c, (n_resamples, 8))).astype(float)
        expr = _expressions(resampled, renormalize_diagonal)
        lower, upper = _lower_upper(expr)
        ok = ~np.isnan(lower)
        if ok.sum() < 2:
            return (float("nan"), float("nan"))
        return (float(lower[ok].std(ddof=1)), float(upper[ok].std(ddof=1)))
    if method == "gaussian":
        var_l = 0.0
        var_u = 0.0
        for k in range(8):
            if c[k] <= 0.0:
                continue
            h = max(1.0, 0.01 * np.sqrt(c[k]))
            h = min(h, c[k])  # keep the step inside the domain of sqrt
            up = c.copy()
            dn = c.copy()
            up[k] += h
            dn[k] -= h
            lo_u, hi_u = _lower_upper(_expressions(up, renormalize_diagonal))
            lo_d, hi_d = _lower_upper(_expressions(dn, renormalize_diagonal))
            dl = (lo_u - lo_d) / (2.0 * h)
            du = (hi_u - hi_d) / (2.0 * h)
            var_l += dl * dl * c[k]
            var_u += du * du * c[k]
        return (float(np.sqrt(var_l)), float(np.sqrt(var_u)))
    raise ValueError(f"unknown uncertainty method {method!r}")


def bounds_with_uncertainties(
    counts: CoincidenceCounts,
    rng: np.random.Generator,
    method: str = "bootstrap",
    n_resamples: int = 1000,
    renormalize_diagonal: bool = False,
) -> FidelityBounds:
    b = bounds_from_counts(counts, renormalize_diagonal)
    sig_l, sig_u = bound_uncertainties(
        counts, rng, method=method, n_resamples=n_resamples,
        renormalize_diagonal=renormalize_diagonal,
    )
    return replace(b, sigma_lower=sig_l, sigma_upper=sig_u)
