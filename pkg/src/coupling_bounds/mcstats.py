"""Statistical post-processing for Monte Carlo batches.

Exponential-moment and p-th-moment estimators with delta-method or bootstrap
errors, a heavy-tail reliability diagnostic for exponential weights, and
log-log growth-exponent fits used by the order-of-growth checks.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional, Union

import numpy as np
from scipy import stats
from scipy.special import logsumexp

from .core import (
    ConfigInvalidError,
    DegenerateBatchError,
    NonPositiveDataError,
    RngStreamSpec,
)

MIN_BATCH = 100
BOOTSTRAP_RESAMPLES = 1000
HEAVY_TAIL_TOP_FRACTION = 0.01
HEAVY_TAIL_SHARE_LIMIT = 0.5
# resample matrices are chunked so bootstrap memory stays below ~160 MB
_BOOTSTRAP_CELL_BUDGET = 20_000_000


@dataclass(frozen=True)
class SampleBatch:
    """Replica-level Monte Carlo values with their RNG stream provenance."""

    values: np.ndarray
    provenance: Optional[tuple] = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or v.size == 0:
            raise DegenerateBatchError("batch must be a non-empty vector")
        if not np.all(np.isfinite(v)):
            raise DegenerateBatchError("batch contains non-finite values")
        object.__setattr__(self, "values", v)
        if self.provenance is not None:
            prov = tuple(self.provenance)
            if len(prov) != v.size:
                raise ConfigInvalidError(
                    "provenance", "length must match the number of values"
                )
            object.__setattr__(self, "provenance", prov)

    @property
    def size(self) -> int:
        return int(self.values.size)


class HeavyTailDiagnostic(NamedTuple):
    top_share: float
    top_count: int
    flagged: bool


class LogMgfEstimate(NamedTuple):
    estimate: float
    se: float
    diagnostics: HeavyTailDiagnostic


class MomentEstimate(NamedTuple):
    estimate: float
    ci: tuple


@dataclass(frozen=True)
class FitReport:
    """Least-squares fit of log(y) against log(x)."""

    slope: float
    intercept: float
    r2: float
    ci: tuple


def _require_size(batch: SampleBatch, minimum: int = MIN_BATCH) -> np.ndarray:
    if batch.size < minimum:
        raise DegenerateBatchError(
            f"need at least {minimum} samples, got {batch.size}"
        )
    return batch.values


def logmgf_estimate(batch: SampleBatch, lam: float) -> LogMgfEstimate:
    """Estimate log E exp(lam * (V - mean V)) from a batch of V samples.

    Parameters
    ----------
    batch : SampleBatch
        At least MIN_BATCH replica values.
    lam : float
        Tilting parameter; lam = 0 returns exactly zero.

    Returns
    -------
    LogMgfEstimate
        Log-mean-exp estimate, its delta-method standard error
        se(log m) = sd(w) / (mean(w) sqrt(N)) for weights w = exp(lam dV),
        and a heavy-tail diagnostic: the estimate is flagged unreliable when
        the largest 1% of weights carries more than half of the weight sum.

    Raises
    ------
    DegenerateBatchError
        Batch smaller than MIN_BATCH or non-finite.
    """
    values = _require_size(batch)
    lam = float(lam)
    n = values.size
    top_count = max(1, int(np.floor(HEAVY_TAIL_TOP_FRACTION * n)))
    if lam == 0.0 or np.ptp(values) == 0.0:
        share = top_count / n
        return LogMgfEstimate(0.0, 0.0, HeavyTailDiagnostic(share, top_count, False))
    logw = lam * (values - values.mean())
    # shift by the max so the weight vector is exp-safe; the shift cancels
    # in both the log-mean and the relative standard error
    shift = logw.max()
    w = np.exp(logw - shift)
    estimate = float(logsumexp(logw) - np.log(n))
    se = float(w.std(ddof=1) / (w.mean() * np.sqrt(n)))

    w_sorted = np.sort(w)
    top_share = float(w_sorted[-top_count:].sum() / w_sorted.sum())
    flagged = bool(top_share > HEAVY_TAIL_SHARE_LIMIT)
    return LogMgfEstimate(estimate, se, HeavyTailDiagnostic(top_share, top_count, flagged))


def _as_generator(rng) -> np.random.Generator:
    if rng is None:
        rng = RngStreamSpec(0, 0, "bootstrap")
    if isinstance(rng, RngStreamSpec):
        return rng.generator()
    return rng


def _pth_root_moment(values: np.ndarray, p: float, center) -> float:
    c = values.mean() if center == "mean" else float(center)
    return float(np.mean(np.abs(values - c) ** p) ** (1.0 / p))


def moment_estimate(
    batch: SampleBatch,
    p: float,
    center: Union[str, float] = "mean",
    rng: Union[RngStreamSpec, np.random.Generator, None] = None,
    n_resamples: int = BOOTSTRAP_RESAMPLES,
) -> MomentEstimate:
    """Estimate (E |V - center|^p)^(1/p) with a percentile bootstrap CI.

    Parameters
    ----------
    batch : SampleBatch
    p : float
        Moment order, p >= 1.
    center : "mean" or float
        "mean" recenters inside every bootstrap resample; a float is a
        fixed external center.
    rng : RngStreamSpec or numpy Generator, optional
        Fixed stream makes the bootstrap bit-reproducible.  Defaults to the
        stream tagged "bootstrap" under master seed 0.

    Returns
    -------
    MomentEstimate
        Point estimate and 95% percentile bootstrap interval.
    """
    values = _require_size(batch)
    p = float(p)
    if p < 1.0:
        raise ConfigInvalidError("p", f"moment order must be >= 1, got {p}")
    if center != "mean":
        center = float(center)
    gen = _as_generator(rng)

    estimate = _pth_root_moment(values, p, center)
    n = values.size
    chunk = max(1, int(_BOOTSTRAP_CELL_BUDGET // n))
    boot = np.empty(n_resamples)
    done = 0
    while done < n_resamples:
        m = min(chunk, n_resamples - done)
        idx = gen.integers(0, n, size=(m, n))
        resampled = values[idx]
        c = resampled.mean(axis=1, keepdims=True) if center == "mean" else center
        boot[done : done + m] = np.mean(np.abs(resampled - c) ** p, axis=1) ** (1.0 / p)
        done += m
    lo, hi = np.percentile(boot, [2.5, 97.5])
    return MomentEstimate(estimate, (float(lo), float(hi)))


def loglog_fit(xs, ys) -> FitReport:
    """Fit log(y) = slope * log(x) + intercept by least squares.

    Returns the slope with a 95% t-interval; r2 is the squared correlation.
    Raises NonPositiveDataError unless all inputs are strictly positive, and
    ConfigInvalidError with fewer than 5 points.
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.shape != ys.shape or xs.ndim != 1:
        raise ConfigInvalidError("xs", "xs and ys must be vectors of equal length")
    if xs.size < 5:
        raise ConfigInvalidError("xs", "need at least 5 points for a power-law fit")
    if np.any(xs <= 0.0) or np.any(ys <= 0.0) or not np.all(np.isfinite(xs)) or not np.all(np.isfinite(ys)):
        raise NonPositiveDataError("log-log fit needs strictly positive finite data")

    res = stats.linregress(np.log(xs), np.log(ys))
    half = stats.t.ppf(0.975, xs.size - 2) * res.stderr
    r2 = float(res.rvalue**2)
    return FitReport(
        slope=float(res.slope),
        intercept=float(res.intercept),
        r2=min(1.0, r2),
        ci=(float(res.slope - half), float(res.slope + half)),
    )
