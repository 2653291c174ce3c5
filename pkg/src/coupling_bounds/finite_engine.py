"""Exact machinery for finite-state chains in continuous time.

Semigroup action and propagators use uniformization (a positive, mass
conserving Poisson mixture of powers of a stochastic matrix) with a
certified series truncation.  Exponential moments of integrated
observables come from a matrix exponential of the tilted generator with a
log-space shift so nothing overflows.  Expectations of the integrated
observable solve the forced linear system g' = f + Q g, which avoids ever
inverting the singular generator.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.integrate import solve_ivp

from .core import (
    DimensionMismatchError,
    GeneratorMatrix,
    NumericalOverflowError,
    ProbVector,
    ReducibleError,
    RngStreamSpec,
)

SEMIGROUP_TOL = 1e-12
MATRIX_EXP_TOL = 1e-10
ODE_TOL = 1e-12
STATIONARY_TOL = 1e-12

_CHUNK_EVENTS = 128.0  # max Poisson mean handled per uniformization chunk


def _poisson_weights(lam: float, tol: float):
    """Poisson(lam) pmf truncated once the tail certificate drops below tol."""
    if lam <= 0.0:
        return np.array([1.0])
    w = [np.exp(-lam)]
    k = 0
    cum = w[0]
    # continue until the residual mass 1 - cum <= tol, with a safety cap
    kmax = int(lam + 12.0 * np.sqrt(lam + 1.0) + 60.0 + 8.0 * np.log10(1.0 / max(tol, 1e-300)))
    while 1.0 - cum > tol and k < kmax:
        k += 1
        w.append(w[-1] * lam / k)
        cum += w[-1]
    return np.array(w)


def _apply_uniformized(gen: GeneratorMatrix, t: float, mat: np.ndarray, tol: float):
    """e^{tQ} @ mat via chunked uniformization; positivity preserving."""
    lam = gen.uniformization_rate()
    if lam * t == 0.0:
        return mat.copy()
    n_chunks = max(1, int(np.ceil(lam * t / _CHUNK_EVENTS)))
    tau = t / n_chunks
    chunk_tol = max(tol / n_chunks, 1e-16)
    p_stoch = np.eye(gen.n) + gen.q / lam
    w = _poisson_weights(lam * tau, chunk_tol)
    out = mat
    for _ in range(n_chunks):
        # accumulate sum_k w_k P^k mat for one chunk, restarting from `out`
        term = out
        acc = w[0] * term
        for k in range(1, w.shape[0]):
            term = p_stoch @ term
            acc = acc + w[k] * term
        out = acc
    return out


def semigroup_apply(gen: GeneratorMatrix, t: float, f, tol: float = SEMIGROUP_TOL):
    """Action of the Markov semigroup on a per-state vector.

    Returns e^{tQ} f with series truncation error at most `tol` in the max
    norm (for max|f| <= 1; scales linearly).  The result is a positive,
    mass-conserving average, so constants are preserved exactly up to the
    certified truncation.
    """
    f = np.asarray(f, dtype=float)
    if f.shape[0] != gen.n:
        raise DimensionMismatchError("observable length differs from state count")
    if t < 0.0:
        raise ValueError("time must be nonnegative")
    return _apply_uniformized(gen, t, f, tol)


def propagator(gen: GeneratorMatrix, t: float, tol: float = SEMIGROUP_TOL) -> np.ndarray:
    """Transition matrix e^{tQ}; row x is the time-t law started from x."""
    if t < 0.0:
        raise ValueError("time must be nonnegative")
    return _apply_uniformized(gen, t, np.eye(gen.n), tol)


def matrix_exp(m) -> np.ndarray:
    """Dense matrix exponential (scaling and squaring with Pade kernels).

    Intended for tilted generators and other moderate-norm matrices;
    raises NumericalOverflowError when entries leave the finite range.
    """
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionMismatchError("matrix_exp needs a square matrix")
    out = scipy.linalg.expm(m)
    if not np.all(np.isfinite(out)):
        raise NumericalOverflowError("matrix exponential overflowed")
    return out


def integrated_semigroup(gen: GeneratorMatrix, f, T: float, dense: bool = False):
    """g(T) = integral_0^T e^{sQ} f ds, solved from g' = f + Q g, g(0) = 0.

    With dense=True returns a callable s -> g(s) valid on [0, T].
    """
    f = np.asarray(f, dtype=float)
    if f.shape[0] != gen.n:
        raise DimensionMismatchError("observable length differs from state count")
    q = gen.q

    def rhs(_s, g):
        return f + q @ g

    sol = solve_ivp(
        rhs,
        (0.0, T),
        np.zeros(gen.n),
        method="DOP853",
        rtol=ODE_TOL,
        atol=ODE_TOL,
        dense_output=dense,
    )
    if not sol.success:
        raise NumericalOverflowError(f"integrated semigroup solve failed: {sol.message}")
    if dense:
        interp = sol.sol

        def g_of(s):
            if np.ndim(s) == 0:
                s = float(s)
                if s <= 0.0:
                    return np.zeros(gen.n)
                return interp(min(s, T))
            s = np.asarray(s, dtype=float)
            out = interp(np.clip(s, 0.0, T))
            out[:, s <= 0.0] = 0.0
            return out

        return g_of
    return sol.y[:, -1]


def expected_additive_functional(gen: GeneratorMatrix, f, T: float, nu: ProbVector) -> float:
    """E_nu of integral_0^T f(X_s) ds, exactly nu . g(T)."""
    return float(nu.p @ integrated_semigroup(gen, f, T))


def feynman_kac_logmgf(
    gen: GeneratorMatrix, f, T: float, lam: float, mu: ProbVector, nu: ProbVector
) -> float:
    """log E_mu exp(lam * integral_0^T f(X_s) ds) - lam * E_nu integral f.

    The exponential moment is mu . e^{T(Q + lam diag f)} 1.  The tilted
    matrix is shifted by max(lam f) so its semigroup is substochastic and
    cannot overflow; the shift is restored in log space.
    """
    f = np.asarray(f, dtype=float)
    if f.shape[0] != gen.n:
        raise DimensionMismatchError("observable length differs from state count")
    shift = float(np.max(lam * f))
    tilted = gen.q + np.diag(lam * f - shift)
    u = matrix_exp(T * tilted) @ np.ones(gen.n)
    val = float(mu.p @ u)
    if val <= 0.0 or not np.isfinite(val):
        raise NumericalOverflowError("exponential moment underflowed to a nonpositive value")
    log_moment = shift * T + np.log(val)
    mean_part = lam * expected_additive_functional(gen, f, T, nu)
    return log_moment - mean_part


def stationary_distribution(gen: GeneratorMatrix, tol: float = STATIONARY_TOL) -> ProbVector:
    """Unique stationary law of an irreducible chain.

    Solves mu Q = 0 with the mass constraint by least squares and verifies
    the residual; raises ReducibleError when the null space of Q^T has
    dimension greater than one (multiple recurrent classes).
    """
    n = gen.n
    q = gen.q
    scale = max(1.0, float(np.max(np.abs(q))))
    sv = scipy.linalg.svdvals(q.T)
    null_dim = int(np.sum(sv <= 1e-10 * scale * n))
    if null_dim > 1:
        raise ReducibleError(f"null space dimension {null_dim} > 1")
    a = np.vstack([q.T, np.ones((1, n))])
    b = np.zeros(n + 1)
    b[-1] = 1.0
    mu, *_ = np.linalg.lstsq(a, b, rcond=None)
    mu = np.clip(mu, 0.0, None)
    mu = mu / mu.sum()
    residual = float(np.max(np.abs(mu @ q)))
    if residual > tol * scale:
        raise ReducibleError(f"stationary residual {residual:.3e} exceeds {tol:g}")
    return ProbVector(p=mu)


@dataclass(frozen=True)
class CtmcPath:
    """Piecewise-constant path: states[k] holds on [jump_times[k], jump_times[k+1])."""

    states: np.ndarray
    jump_times: np.ndarray  # starts at 0.0, ends at the horizon
    horizon: float

    @property
    def n_jumps(self) -> int:
        return self.jump_times.shape[0] - 2


def sample_ctmc(gen: GeneratorMatrix, x0: int, T: float, rng) -> CtmcPath:
    """One exact event-driven trajectory on [0, T] started at x0.

    `rng` is either an RngStreamSpec or a numpy Generator.  Holding times
    are exponential at the exit rate of the current state; successors are
    drawn from the normalized off-diagonal rates.
    """
    if isinstance(rng, RngStreamSpec):
        rng = rng.generator()
    if not (0 <= x0 < gen.n):
        raise DimensionMismatchError(f"state {x0} outside 0..{gen.n - 1}")
    exit_rates = gen.exit_rates()
    off = gen.off_diagonal()
    states = [int(x0)]
    times = [0.0]
    t = 0.0
    x = int(x0)
    while True:
        rate = exit_rates[x]
        if rate <= 0.0:
            break
        t = t + rng.exponential(1.0 / rate)
        if t >= T:
            break
        row = off[x]
        u = rng.random() * rate
        x = int(np.searchsorted(np.cumsum(row), u, side="right"))
        x = min(x, gen.n - 1)
        states.append(x)
        times.append(t)
    times.append(T)
    return CtmcPath(states=np.array(states, dtype=np.int64), jump_times=np.array(times), horizon=T)


def path_functional(path: CtmcPath, f) -> float:
    """Exact integral of f along the piecewise-constant path."""
    f = np.asarray(f, dtype=float)
    durations = np.diff(path.jump_times)
    return float(np.sum(f[path.states] * durations))
