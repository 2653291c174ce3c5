"""Shared domain types, validation, RNG stream contract, and error taxonomy.

Everything downstream (transport, finite-chain engine, coupling metrics,
bound assembly, simulators, CLI) builds on the types defined here.
"""

from __future__ import annotations

import dataclasses
import hashlib
import os
from dataclasses import dataclass

import numpy as np

ROW_SUM_TOL = 1e-12
PROB_TOL = 1e-10
METRIC_TOL = 1e-12

_U64 = (1 << 64) - 1


# ---------------------------------------------------------------------------
# error taxonomy


class CouplingBoundsError(Exception):
    """Base class for every domain error raised by this package."""


class NegativeOffDiagonalError(CouplingBoundsError):
    """Rate matrix has a negative off-diagonal entry."""


class RowSumNonzeroError(CouplingBoundsError):
    """Rate matrix row does not sum to zero within tolerance."""


class DimensionMismatchError(CouplingBoundsError):
    """Operands have incompatible shapes."""


class DegenerateError(CouplingBoundsError):
    """Marginals are not comparable probability vectors."""


class NumericalOverflowError(CouplingBoundsError):
    """A matrix exponential or exponential moment left the finite range."""


class ReducibleError(CouplingBoundsError):
    """Chain has more than one recurrent class; stationary law not unique."""


class NoDecayDetectedError(CouplingBoundsError):
    """Coupling distance did not fall below threshold within the horizon."""


class SemimetricOnlyError(CouplingBoundsError):
    """Operation requires the triangle inequality but got a semimetric."""


class ContractionViolatedError(CouplingBoundsError):
    """Coupling distance exceeded the base distance somewhere on the grid."""

    def __init__(self, message, x=None, y=None, t=None):
        super().__init__(message)
        self.x = x
        self.y = y
        self.t = t


class DivergentSeriesError(CouplingBoundsError):
    """Exponential series terms fail to decay; no certified truncation."""


class NonPositiveParameterError(CouplingBoundsError):
    """Parameter that must be strictly positive is not."""


class DivergentForDimensionError(CouplingBoundsError):
    """Lattice Green-type integral diverges in this dimension."""


class StepTooLargeError(CouplingBoundsError):
    """Discretization step too coarse: coupled gap expanded."""


class InvariantBrokenError(CouplingBoundsError):
    """Internal state invariant of a simulator was violated."""


class TorusTooSmallError(CouplingBoundsError):
    """Torus side too small for the requested horizon; wraparound bias."""


class ConfigInvalidError(CouplingBoundsError):
    """Experiment configuration rejected; names the offending field."""

    def __init__(self, field, message):
        super().__init__(f"config field '{field}': {message}")
        self.field = field


class CheckFailedError(CouplingBoundsError):
    """One or more experiment checks failed."""


class DegenerateBatchError(CouplingBoundsError):
    """Sample batch is empty or otherwise unusable."""


class NonPositiveDataError(CouplingBoundsError):
    """Log-log fit requires strictly positive abscissas and ordinates."""


# ---------------------------------------------------------------------------
# generator matrices


@dataclass(frozen=True)
class GeneratorMatrix:
    """Validated conservative rate matrix of a finite-state Markov chain.

    Off-diagonal entries are jump rates; each diagonal entry equals minus
    the corresponding off-diagonal row sum exactly (recomputed on
    validation, so the stored matrix has exact zero row sums).
    """

    q: np.ndarray

    @property
    def n(self) -> int:
        return self.q.shape[0]

    def off_diagonal(self) -> np.ndarray:
        """Rate matrix with the diagonal zeroed."""
        off = self.q.copy()
        np.fill_diagonal(off, 0.0)
        return off

    def exit_rates(self) -> np.ndarray:
        """Total jump rate out of each state."""
        return -np.diag(self.q)

    def uniformization_rate(self) -> float:
        return float(np.max(self.exit_rates()))


def validate_generator(raw, tol: float = ROW_SUM_TOL) -> GeneratorMatrix:
    """Validate a raw square matrix as a conservative generator.

    Parameters
    ----------
    raw : array_like
        Square matrix. Off-diagonal entries must be nonnegative and each
        row must sum to zero within `tol`.
    tol : float
        Row-sum tolerance. The diagonal is redundant given the off-diagonal
        rates, so after validation it is recomputed as the exact negative
        off-diagonal row sum, clearing any sub-tolerance residue.

    Returns
    -------
    GeneratorMatrix

    Raises
    ------
    DimensionMismatchError
        If `raw` is not square.
    NegativeOffDiagonalError
        If any off-diagonal entry is negative.
    RowSumNonzeroError
        If any row sum deviates from zero by more than `tol`.
    """
    q = np.array(raw, dtype=float)
    if q.ndim != 2 or q.shape[0] != q.shape[1]:
        raise DimensionMismatchError(f"generator must be square, got shape {q.shape}")
    if not np.all(np.isfinite(q)):
        raise NonPositiveParameterError("generator entries must be finite")
    n = q.shape[0]
    off_mask = ~np.eye(n, dtype=bool)
    neg = q[off_mask] < 0.0
    if np.any(neg):
        i, j = [(a, b) for a in range(n) for b in range(n) if a != b and q[a, b] < 0.0][0]
        raise NegativeOffDiagonalError(f"q[{i}][{j}] = {q[i, j]} < 0")
    row_sums = q.sum(axis=1)
    bad = np.abs(row_sums) > tol * max(1.0, float(np.max(np.abs(q))))
    if np.any(bad):
        i = int(np.argmax(np.abs(row_sums)))
        raise RowSumNonzeroError(f"row {i} sums to {row_sums[i]:.3e}, not 0 within {tol:g}")
    off = q.copy()
    np.fill_diagonal(off, 0.0)
    np.fill_diagonal(q, -off.sum(axis=1))
    return GeneratorMatrix(q=q)


# ---------------------------------------------------------------------------
# probability vectors


@dataclass(frozen=True)
class ProbVector:
    """Probability vector over chain states."""

    p: np.ndarray

    @property
    def n(self) -> int:
        return self.p.shape[0]


def validate_prob_vector(raw, n: int | None = None, tol: float = PROB_TOL) -> ProbVector:
    """Validate nonnegative entries summing to one within `tol`, then renormalize."""
    p = np.array(raw, dtype=float)
    if p.ndim != 1:
        raise DimensionMismatchError(f"probability vector must be 1-d, got shape {p.shape}")
    if n is not None and p.shape[0] != n:
        raise DimensionMismatchError(f"expected length {n}, got {p.shape[0]}")
    if np.any(p < -tol):
        raise DegenerateError(f"negative mass {p.min():.3e}")
    s = p.sum()
    if not np.isfinite(s) or abs(s - 1.0) > tol:
        raise DegenerateError(f"total mass {s!r} not 1 within {tol:g}")
    p = np.clip(p, 0.0, None)
    return ProbVector(p=p / p.sum())


# ---------------------------------------------------------------------------
# finite metric spaces


@dataclass(frozen=True)
class FiniteMetric:
    """Symmetric nonnegative cost with zero diagonal on a finite state space.

    mode is "metric" when the triangle inequality has been verified, else
    "semimetric".  Some operations (single-potential duality, Lipschitz
    seminorms used as metrics) require mode "metric".
    """

    rho: np.ndarray
    mode: str = "semimetric"

    @property
    def n(self) -> int:
        return self.rho.shape[0]


def validate_metric(raw, mode: str = "semimetric", tol: float = METRIC_TOL) -> FiniteMetric:
    """Validate a cost matrix as a semimetric, optionally checking triangles.

    Raises DimensionMismatchError / DegenerateError on a malformed cost, and
    SemimetricOnlyError when mode="metric" is requested but some triple
    violates the triangle inequality beyond `tol`.
    """
    rho = np.array(raw, dtype=float)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise DimensionMismatchError(f"cost must be square, got shape {rho.shape}")
    scale = max(1.0, float(np.max(np.abs(rho)))) if rho.size else 1.0
    if np.any(rho < -tol * scale):
        raise DegenerateError("cost has negative entries")
    if np.max(np.abs(np.diag(rho))) > tol * scale:
        raise DegenerateError("cost diagonal not zero")
    if np.max(np.abs(rho - rho.T)) > tol * scale:
        raise DegenerateError("cost not symmetric")
    rho = np.clip(0.5 * (rho + rho.T), 0.0, None)
    np.fill_diagonal(rho, 0.0)
    if mode == "metric":
        # rho[i,k] <= rho[i,j] + rho[j,k] for all triples
        slack = rho[:, None, :] - (rho[:, :, None] + rho[None, :, :])
        if np.max(slack) > tol * scale:
            i, j, k = np.unravel_index(int(np.argmax(slack)), slack.shape)
            raise SemimetricOnlyError(
                f"triangle violated: rho[{i},{k}] > rho[{i},{j}] + rho[{j},{k}]"
            )
    elif mode != "semimetric":
        raise ConfigInvalidError("metric.mode", f"unknown mode {mode!r}")
    return FiniteMetric(rho=rho, mode=mode)


def discrete_metric(n: int, scale: float = 1.0) -> FiniteMetric:
    """0/1 cost (times `scale`) on n states; always a metric."""
    if scale <= 0:
        raise NonPositiveParameterError("scale must be positive")
    rho = scale * (1.0 - np.eye(n))
    return FiniteMetric(rho=rho, mode="metric")


# ---------------------------------------------------------------------------
# observables


@dataclass(frozen=True)
class ObservableSpec:
    """Observable integrated along paths, with its time horizon.

    Exactly one payload is set:
      values      -- per-state values on a finite chain,
      occupation  -- lattice sites whose joint occupancy is the indicator,
      window      -- lattice sites read by a local function, with `table`
                     giving its value for each occupancy bit pattern.
    """

    horizon: float
    values: np.ndarray | None = None
    occupation: tuple | None = None
    window: tuple | None = None
    table: np.ndarray | None = None

    @property
    def kind(self) -> str:
        if self.values is not None:
            return "finite_vector"
        if self.occupation is not None:
            return "occupation_set"
        return "lattice_function"

    def scaled(self, lam: float) -> "ObservableSpec":
        """Observable with per-state values multiplied by lam (finite chains only)."""
        if self.values is None:
            raise ConfigInvalidError("observable", "scaling requires a finite_vector observable")
        return dataclasses.replace(self, values=lam * self.values)


def _check_horizon(T) -> float:
    T = float(T)
    if not (T > 0.0) or not np.isfinite(T):
        raise NonPositiveParameterError(f"horizon must be positive and finite, got {T}")
    return T


def finite_vector_observable(values, T) -> ObservableSpec:
    v = np.array(values, dtype=float)
    if v.ndim != 1:
        raise DimensionMismatchError("observable values must be a vector")
    return ObservableSpec(horizon=_check_horizon(T), values=v)


def occupation_observable(sites, T) -> ObservableSpec:
    return ObservableSpec(horizon=_check_horizon(T), occupation=tuple(int(s) for s in sites))


def lattice_function_observable(window, table, T) -> ObservableSpec:
    window = tuple(int(s) for s in window)
    table = np.array(table, dtype=float)
    if table.shape != (1 << len(window),):
        raise DimensionMismatchError(
            f"table must have 2**{len(window)} entries, got {table.shape}"
        )
    return ObservableSpec(horizon=_check_horizon(T), window=window, table=table)


# ---------------------------------------------------------------------------
# reproducible random streams


@dataclass(frozen=True)
class RngStreamSpec:
    """Key of a counter-based random stream.

    Identical (master_seed, replica_index, stream_tag) triples yield
    bit-identical streams on every platform; distinct triples yield
    statistically independent streams.  Derived via SeedSequence feeding a
    Philox counter-based generator, so replicas can be split without
    coordination.
    """

    master_seed: int
    replica_index: int = 0
    stream_tag: str = ""

    def __post_init__(self):
        if not isinstance(self.master_seed, int):
            raise ConfigInvalidError("master_seed", "must be an integer")
        if not isinstance(self.replica_index, int) or self.replica_index < 0:
            raise ConfigInvalidError("replica_index", "must be a nonnegative integer")

    def replica(self, index: int) -> "RngStreamSpec":
        return dataclasses.replace(self, replica_index=index)

    def tagged(self, tag: str) -> "RngStreamSpec":
        return dataclasses.replace(self, stream_tag=tag)

    def generator(self) -> np.random.Generator:
        tag_digest = hashlib.blake2b(
            self.stream_tag.encode("utf-8"), digest_size=8
        ).digest()
        entropy = [
            self.master_seed & _U64,
            self.replica_index & _U64,
            int.from_bytes(tag_digest, "big"),
        ]
        return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def worker_count() -> int:
    """Worker cap honoring the COUPLING_BOUNDS_THREADS environment variable."""
    cap = os.cpu_count() or 1
    raw = os.environ.get("COUPLING_BOUNDS_THREADS", "")
    if raw:
        try:
            requested = int(raw)
        except ValueError:
            raise ConfigInvalidError("COUPLING_BOUNDS_THREADS", f"not an integer: {raw!r}")
        if requested < 1:
            raise ConfigInvalidError("COUPLING_BOUNDS_THREADS", "must be >= 1")
        cap = min(cap, requested)
    return cap
