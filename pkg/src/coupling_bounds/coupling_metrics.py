"""Time-t coupling distances, coupling times, and contraction diagnostics.

For a finite-state chain with generator Q and base cost rho, the time-t
coupling distance between x and y is the optimal-transport distance between
the rows of exp(tQ).  Integrating it over t gives the generalized coupling
time h(x, y); the ratio sup rho_t / rho gives the Lipschitz norm of the
semigroup acting on rho-Lipschitz functions.  The suite checks the grid
versions of the contraction / coupling-time implications and the L^p decay
estimate; passes are grid certificates, not proofs.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad_vec

from .core import (
    ConfigInvalidError,
    ContractionViolatedError,
    DegenerateError,
    DimensionMismatchError,
    FiniteMetric,
    GeneratorMatrix,
    NoDecayDetectedError,
    NonPositiveParameterError,
    SemimetricOnlyError,
    worker_count,
)
from .finite_engine import propagator, stationary_distribution
from .transport import certified_cost, wasserstein_dual, wasserstein_primal

DUAL_AGREEMENT_TOL = 1e-8
LIP_FLOOR = 1e-9
GRID_SLACK = 1e-7


@dataclass(frozen=True)
class CouplingTimeResult:
    """Certified over-estimate of h(x,y) = int_0^inf rho_t(x,y) dt."""

    h: np.ndarray
    t_cut: float
    tail_bound: float
    grid: np.ndarray
    tail_matrix: np.ndarray


@dataclass(frozen=True)
class ContractionReport:
    is_contraction: bool
    lip_norms: list
    M: float
    decay_rate: float
    h_result: CouplingTimeResult


def _check_pair(rho: FiniteMetric, x: int, y: int) -> None:
    n = rho.n
    if not (0 <= x < n and 0 <= y < n):
        raise DimensionMismatchError(f"state pair ({x}, {y}) out of range for n={n}")


def rho_t(gen: GeneratorMatrix, rho: FiniteMetric, x: int, y: int, t: float) -> float:
    """Optimal-transport distance between the time-t laws started at x and y.

    Parameters
    ----------
    gen : GeneratorMatrix
    rho : FiniteMetric
        Ground cost; in metric mode the single-potential dual value is
        cross-checked against the primal within 1e-8.
    x, y : int
    t : float
        Elapsed time, t >= 0.

    Returns
    -------
    float
    """
    if t < 0:
        raise NonPositiveParameterError("t must be >= 0")
    _check_pair(rho, x, y)
    if x == y:
        return 0.0
    p = propagator(gen, t)
    mu, nu = p[x], p[y]
    plan = wasserstein_primal(mu, nu, rho)
    if rho.mode == "metric":
        dual = wasserstein_dual(mu, nu, rho)
        if abs(dual.value - plan.cost) > DUAL_AGREEMENT_TOL:
            raise DegenerateError(
                f"primal/dual disagreement {abs(dual.value - plan.cost):.3e}"
            )
    return plan.cost


def rho_t_matrix(gen: GeneratorMatrix, rho: FiniteMetric, t: float) -> np.ndarray:
    """All-pairs time-t coupling distances (symmetric, zero diagonal)."""
    if t < 0:
        raise NonPositiveParameterError("t must be >= 0")
    n = rho.n
    if gen.n != n:
        raise DimensionMismatchError("generator and cost sizes differ")
    p = np.clip(propagator(gen, t), 0.0, None)
    cost = np.ascontiguousarray(rho.rho, dtype=float)
    out = np.zeros((n, n))
    for x in range(n):
        for y in range(x + 1, n):
            out[x, y] = out[y, x] = certified_cost(p[x], p[y], cost)
    return out


def _lip_from_matrix(rho_mat: np.ndarray, rho: FiniteMetric) -> float:
    off = ~np.eye(rho.n, dtype=bool)
    base = rho.rho[off]
    if np.any(base <= 0.0):
        raise DegenerateError("Lipschitz ratio undefined: zero cost between distinct states")
    return float(np.max(rho_mat[off] / base))


def lip_norm(gen: GeneratorMatrix, rho: FiniteMetric, t: float) -> float:
    """sup_{x != y} rho_t(x, y) / rho(x, y); requires rho in metric mode."""
    if rho.mode != "metric":
        raise SemimetricOnlyError("Lipschitz norm requires a verified metric")
    return _lip_from_matrix(rho_t_matrix(gen, rho, t), rho)


def oscillation_norm(gen: GeneratorMatrix, t: float) -> float:
    """Oscillation norm of exp(tQ): max oscillation over 0/1-valued inputs.

    Exhaustive over the 2^n indicator functions, so guarded to n <= 12.
    Equals the discrete-metric Lipschitz norm of the semigroup.
    """
    n = gen.n
    if n > 12:
        raise ConfigInvalidError("n", "exhaustive oscillation norm limited to n <= 12")
    p = propagator(gen, t)
    best = 0.0
    for mask in range(1, 2**n - 1):
        f = np.array([(mask >> i) & 1 for i in range(n)], dtype=float)
        pf = p @ f
        best = max(best, float(pf.max() - pf.min()))
    return best


def _map_times(fun, times, workers: int):
    if workers <= 1 or len(times) < 4:
        return [fun(t) for t in times]
    out = [None] * len(times)
    with ThreadPoolExecutor(max_workers=workers) as ex:
        futs = {ex.submit(fun, t): i for i, t in enumerate(times)}
        for f, i in futs.items():
            out[i] = f.result()
    return out


def coupling_time_h(
    gen: GeneratorMatrix,
    rho: FiniteMetric,
    tol: float = 1e-6,
    max_horizon: float = 1e4,
) -> CouplingTimeResult:
    """Integrate rho_t over t with a certified geometric tail.

    Doubles t until the Lipschitz norm of the semigroup drops to 1/2, then
    integrates rho_t on [0, m * t_half] by adaptive quadrature and bounds the
    tail by the geometric series driven by submultiplicativity of the
    Lipschitz norms; m is chosen so the tail is below tol / 2.

    Parameters
    ----------
    gen : GeneratorMatrix
    rho : FiniteMetric
        Must be in metric mode (the tail certificate needs Lipschitz norms).
    tol : float
        Target absolute error of h, split between quadrature and tail.
    max_horizon : float
        Doubling search gives up past this time.

    Returns
    -------
    CouplingTimeResult
        h includes the tail matrix entrywise, so it over-estimates the true
        integral by at most tail_bound (up to quadrature error).

    Raises
    ------
    NoDecayDetectedError
        If the Lipschitz norm never reaches 1/2 before max_horizon.
    """
    if rho.mode != "metric":
        raise SemimetricOnlyError("coupling time certificate requires a metric")
    if tol <= 0:
        raise NonPositiveParameterError("tol must be > 0")
    rate = gen.uniformization_rate()
    if rate <= 0.0:
        raise NoDecayDetectedError("frozen chain: rho_t is constant in t")
    t = 1.0 / rate
    samples = []
    lip_max = 1.0
    t_half = None
    while t <= max_horizon:
        lip = lip_norm(gen, rho, t)
        samples.append((t, lip))
        lip_max = max(lip_max, lip)
        if lip <= 0.5:
            t_half = t
            break
        t *= 2.0
    if t_half is None:
        raise NoDecayDetectedError(
            f"Lipschitz norm stayed above 1/2 up to t={max_horizon:g}"
        )
    rho_max = float(np.max(rho.rho))
    # tail after m*t_half: sum_k t_half * lip_max * 2^{-(m+k)} * rho <= tol/2
    m = max(1, int(np.ceil(np.log2(max(2.0 * lip_max * t_half * rho_max / (0.5 * tol), 2.0)))))
    t_cut = m * t_half
    integral, err = quad_vec(
        lambda s: rho_t_matrix(gen, rho, s),
        0.0,
        t_cut,
        epsabs=0.5 * tol,
        epsrel=1e-10,
        workers=1,
    )
    integral = 0.5 * (integral + integral.T)
    np.fill_diagonal(integral, 0.0)
    tail_matrix = (2.0 ** (1 - m)) * t_half * lip_max * rho.rho
    h = integral + tail_matrix
    return CouplingTimeResult(
        h=h,
        t_cut=float(t_cut),
        tail_bound=float(np.max(tail_matrix)),
        grid=np.array([s for s, _ in samples]),
        tail_matrix=tail_matrix,
    )


def default_time_grid(lo: float = 1e-3, hi: float = 1e3, per_decade: int = 64) -> np.ndarray:
    decades = np.log10(hi / lo)
    return np.geomspace(lo, hi, int(np.ceil(per_decade * decades)) + 1)


def contraction_suite(
    gen: GeneratorMatrix,
    rho: FiniteMetric,
    alpha: float,
    grid=None,
    tol: float = GRID_SLACK,
    decay_tol: float = 1e-3,
    h_tol: float = 1e-6,
) -> ContractionReport:
    """Run the grid checks tying contraction, coupling time, and decay rate.

    Checks, on the time grid: (i) rho_t <= rho entrywise, (ii) entrywise and
    Lipschitz-norm monotonicity in t, (iii) Lipschitz norm <= 1/alpha for all
    grid t >= M * alpha where M = sup h / rho, (iv) h <= alpha T / (alpha - 1)
    * rho entrywise at the first grid T with Lipschitz norm <= 1/alpha, and
    (v) the measured decay rate is at most -1/M + decay_tol.

    Parameters
    ----------
    gen : GeneratorMatrix
    rho : FiniteMetric
        Metric mode required.
    alpha : float
        Contraction level, > 1.
    grid : array_like, optional
        Time grid; defaults to 64 points per decade on [1e-3, 1e3].

    Returns
    -------
    ContractionReport

    Raises
    ------
    ContractionViolatedError
        With a witness (x, y, t) if any grid check fails beyond tolerance.
    """
    if rho.mode != "metric":
        raise SemimetricOnlyError("contraction suite requires a verified metric")
    if alpha <= 1.0:
        raise NonPositiveParameterError("alpha must be > 1")
    grid = default_time_grid() if grid is None else np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 2 or np.any(np.diff(grid) <= 0) or grid[0] < 0:
        raise ConfigInvalidError("grid", "need an increasing 1-d time grid")
    scale = float(np.max(rho.rho))
    mats = _map_times(lambda t: rho_t_matrix(gen, rho, t), grid, worker_count())
    lips = [_lip_from_matrix(m, rho) for m in mats]
    off = ~np.eye(rho.n, dtype=bool)

    def _witness(diff: np.ndarray, t: float, msg: str) -> ContractionViolatedError:
        masked = np.where(off, diff, -np.inf)
        x, y = np.unravel_index(int(np.argmax(masked)), masked.shape)
        return ContractionViolatedError(msg, x=int(x), y=int(y), t=float(t))

    for t, m in zip(grid, mats):
        viol = m - rho.rho
        if np.max(viol[off]) > tol * scale:
            raise _witness(viol, t, "rho_t exceeds rho")
    for k in range(1, len(grid)):
        growth = mats[k] - mats[k - 1]
        if np.max(growth[off]) > tol * scale:
            raise _witness(growth, grid[k], "rho_t increased along the grid")
        if lips[k] > lips[k - 1] + tol:
            raise ContractionViolatedError(
                "Lipschitz norm increased along the grid", x=-1, y=-1, t=float(grid[k])
            )

    h_res = coupling_time_h(gen, rho, tol=h_tol)
    ratios = h_res.h[off] / rho.rho[off]
    M = float(np.max(ratios))

    # (iii): h <= M rho certified by construction of M, so the norm must be
    # below 1/alpha from time M*alpha on
    for t, lip in zip(grid, lips):
        if t >= M * alpha and lip > 1.0 / alpha + tol:
            raise ContractionViolatedError(
                f"Lipschitz norm {lip:.6g} above 1/alpha past M*alpha", x=-1, y=-1, t=float(t)
            )

    # (iv): converse, at the first grid time certifying norm <= 1/alpha
    first = next((i for i, lip in enumerate(lips) if lip <= 1.0 / alpha - tol), None)
    if first is not None:
        T = float(grid[first])
        cap = alpha * T / (alpha - 1.0) * rho.rho
        excess = (h_res.h - h_res.tail_matrix) - cap
        if np.max(excess[off]) > max(tol * scale, h_tol):
            raise _witness(excess, T, "coupling time exceeds alpha T/(alpha-1) rho")

    live = [i for i, lip in enumerate(lips) if lip >= LIP_FLOOR]
    if not live:
        raise NoDecayDetectedError("Lipschitz norm below floor on the whole grid")
    i_last = live[-1]
    decay_rate = float(np.log(lips[i_last]) / grid[i_last])
    if decay_rate > -1.0 / M + decay_tol:
        raise ContractionViolatedError(
            f"decay rate {decay_rate:.6g} above -1/M = {-1.0 / M:.6g}",
            x=-1,
            y=-1,
            t=float(grid[i_last]),
        )

    return ContractionReport(
        is_contraction=True,
        lip_norms=[(float(t), float(lip)) for t, lip in zip(grid, lips)],
        M=M,
        decay_rate=decay_rate,
        h_result=h_res,
    )


def lp_decay_check(gen: GeneratorMatrix, rho: FiniteMetric, f, p: float, t: float):
    """Compare ||S_t f - mu(f)||_{L^p(mu)} to its coupling-distance bound.

    Returns (lhs, rhs) with lhs = the stationary L^p norm of the centered
    semigroup image and rhs = Lip(f) * (int mu(dx) (int mu(dy)
    rho_t(x,y))^p)^{1/p}.  The contract lhs <= rhs + 1e-8 holds for any
    irreducible chain.
    """
    if p < 1.0:
        raise NonPositiveParameterError("p must be >= 1")
    if t < 0:
        raise NonPositiveParameterError("t must be >= 0")
    f = np.asarray(f, dtype=float)
    if f.shape != (gen.n,):
        raise DimensionMismatchError("observable size mismatch")
    mu = stationary_distribution(gen).p
    off = ~np.eye(rho.n, dtype=bool)
    base = rho.rho[off]
    if np.any(base <= 0.0):
        raise DegenerateError("Lipschitz constant undefined: zero cost off the diagonal")
    lipf = float(np.max(np.abs(f[:, None] - f[None, :])[off] / base))
    stf = propagator(gen, t) @ f
    centered = stf - float(mu @ f)
    lhs = float((mu @ np.abs(centered) ** p) ** (1.0 / p))
    rmat = rho_t_matrix(gen, rho, t)
    inner = rmat @ mu
    rhs = float(lipf * (mu @ inner**p) ** (1.0 / p))
    return lhs, rhs
