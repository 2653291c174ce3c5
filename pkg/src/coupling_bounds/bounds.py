"""Concentration bounds assembled from the coupled function difference.

For the truncated-constant observable family (f up to horizon T, zero after),
the coupled difference at elapsed time t is Phi_t(x, y) = g(T-t)(x) -
g(T-t)(y) where g solves g' = f + Qg, g(0) = 0.  The exponential-moment bound
is log c0 plus a time integral of the sup (resp. inf) over states of the
generator series sum_{k>=2} (1/k!) sum_y q[x,y] Phi_t(y,x)^k; the uniform
majorant replaces |Phi_t| by |Phi_0| and integrates trivially.  Downstream
corollaries (Bennett-type deviation, Lipschitz / coupling-time version, spin
system calculator) and the Rosenthal-type moment bound reuse the same pieces.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.integrate import quad_vec
from scipy.special import logsumexp

from .core import (
    CheckFailedError,
    ConfigInvalidError,
    DivergentSeriesError,
    GeneratorMatrix,
    NonPositiveParameterError,
    NumericalOverflowError,
    ObservableSpec,
    ProbVector,
    RngStreamSpec,
)
from .finite_engine import (
    expected_additive_functional,
    integrated_semigroup,
    path_functional,
    sample_ctmc,
)

SERIES_TOL = 1e-12
MAX_SERIES_K = 400
EXP_ARG_MAX = 700.0
QUAD_REL_TOL = 1e-8
_GL_NODES, _GL_WEIGHTS = leggauss(16)

PHI_MODES = ("exact_time_integral", "uniform_majorant")


@dataclass(frozen=True)
class CoupledDifference:
    """Coupled function difference of a truncated-constant family."""

    phi0: np.ndarray
    mode: str
    T: float
    g_of: Optional[Callable] = None

    def phi_at(self, t: float) -> np.ndarray:
        if t <= 0.0:
            return self.phi0
        if t >= self.T or self.g_of is None:
            return np.zeros_like(self.phi0)
        g = self.g_of(self.T - t)
        return g[:, None] - g[None, :]


@dataclass(frozen=True)
class BoundReport:
    c0: float
    series_terms: list
    truncation_k: int
    remainder: float
    upper: float
    lower: float


@dataclass(frozen=True)
class BennettDeviation:
    probability: float
    exponent: float
    optimized_exponent: float


class SeriesSup(NamedTuple):
    sup_value: float
    inf_value: float
    terms: list
    remainder: float


class CouplingSeriesCert(NamedTuple):
    c1: float
    c2: float
    degenerate: bool


@dataclass(frozen=True)
class MomentBoundReport:
    p: float
    term_qv: float
    term_jump: float
    term_initial: float
    C_p: float
    rhs: float
    lhs_estimate: float
    lhs_se: float


def coupled_difference(
    gen: GeneratorMatrix, obs: ObservableSpec, mode: str = "uniform_majorant"
) -> CoupledDifference:
    """Solve for g once (dense in time) and package Phi_t evaluation."""
    if obs.kind != "finite_vector":
        raise ConfigInvalidError("observable", "coupled difference needs a finite_vector")
    if mode not in PHI_MODES:
        raise ConfigInvalidError("mode", f"unknown mode {mode!r}")
    f = np.asarray(obs.values, dtype=float)
    g_of = integrated_semigroup(gen, f, obs.horizon, dense=True)
    gT = g_of(obs.horizon)
    return CoupledDifference(phi0=gT[:, None] - gT[None, :], mode=mode, T=obs.horizon, g_of=g_of)


def phi_matrix(gen: GeneratorMatrix, obs: ObservableSpec, t: float) -> np.ndarray:
    """Phi_t(x, y) = g(max(T - t, 0))(x) - g(...)(y) for the family of obs."""
    if t < 0:
        raise NonPositiveParameterError("t must be >= 0")
    if obs.kind != "finite_vector":
        raise ConfigInvalidError("observable", "phi_matrix needs a finite_vector")
    s = max(obs.horizon - t, 0.0)
    if s == 0.0:
        return np.zeros((gen.n, gen.n))
    g = integrated_semigroup(gen, np.asarray(obs.values, dtype=float), s)
    return g[:, None] - g[None, :]


def _series_truncation(rate: float, B: float, tol: float) -> tuple:
    """Smallest K with tail certificate rate * B^(K+1) e^B / (K+1)! <= tol."""
    if B > EXP_ARG_MAX:
        raise NumericalOverflowError(f"series argument {B:.3g} too large for exp majorant")
    if B == 0.0 or rate == 0.0:
        return 2, 0.0
    log_rate_eB = math.log(rate) + B if rate > 0 else -math.inf
    k = 2
    while k < MAX_SERIES_K:
        log_tail = log_rate_eB + (k + 1) * math.log(B) - math.lgamma(k + 2)
        if log_tail <= math.log(tol):
            return k, math.exp(log_tail)
        k += 1
    raise DivergentSeriesError("series truncation did not certify below tol")


def series_sup(
    gen: GeneratorMatrix,
    phi,
    t: float = 0.0,
    signed: bool = False,
    tol: float = SERIES_TOL,
) -> SeriesSup:
    """Truncated generator series sum_{k>=2} (1/k!) sum_y q[x,y] Phi(y,x)^k.

    Parameters
    ----------
    gen : GeneratorMatrix
    phi : CoupledDifference or array_like
        Either the packaged family (evaluated at elapsed time t) or an
        explicit n x n difference matrix.
    t : float
        Elapsed time, used only when phi is a CoupledDifference.
    signed : bool
        With signed=False the absolute value |Phi| enters the series, giving
        the monotone majorant form; with signed=True the raw signed powers.
    tol : float
        Tail certificate target; truncation at the smallest K with
        (max exit rate) * B^(K+1) e^B / (K+1)! <= tol, B = max |Phi|.

    Returns
    -------
    SeriesSup
        sup/inf over states of the truncated series, the per-k terms at the
        sup-achieving state, and the certified remainder.
    """
    if tol <= 0:
        raise NonPositiveParameterError("tol must be > 0")
    m = phi.phi_at(t) if isinstance(phi, CoupledDifference) else np.asarray(phi, dtype=float)
    q_off = gen.off_diagonal()
    w = m.T if signed else np.abs(m.T)  # w[x, y] = Phi(y, x) (or |.|)
    B = float(np.max(np.abs(m)))
    rate = float(np.max(gen.exit_rates())) if gen.n else 0.0
    K, remainder = _series_truncation(rate, B, tol)
    totals = np.zeros(gen.n)
    per_k = []
    wk = w * w
    for k in range(2, K + 1):
        term_x = (q_off * wk).sum(axis=1) / math.factorial(k)
        totals += term_x
        per_k.append(term_x)
        wk = wk * w
    x_sup = int(np.argmax(totals))
    terms = [(k, float(per_k[k - 2][x_sup])) for k in range(2, K + 1)]
    return SeriesSup(
        sup_value=float(totals[x_sup]),
        inf_value=float(np.min(totals)),
        terms=terms,
        remainder=remainder,
    )


def _log_c0(phi0: np.ndarray, mu: ProbVector, nu: ProbVector) -> float:
    a = phi0 @ nu.p
    if np.max(a) > EXP_ARG_MAX:
        raise NumericalOverflowError("c0 exponent too large")
    return float(logsumexp(a, b=mu.p))


def exp_bound(
    gen: GeneratorMatrix,
    obs: ObservableSpec,
    mu: ProbVector,
    nu: ProbVector,
    mode: str = "uniform_majorant",
    tol: float = QUAD_REL_TOL,
) -> BoundReport:
    """Two-sided bound on log E_mu[exp(F - E_nu F)] for F = int_0^T f(X_t)dt.

    The upper bound is log c0 plus either T times the |Phi_0| majorant series
    (mode "uniform_majorant") or the time integral of the signed series sup
    (mode "exact_time_integral").  The lower bound always integrates the
    signed series inf; the majorant replacement is licensed for the upper
    side only.

    Parameters
    ----------
    gen : GeneratorMatrix
    obs : ObservableSpec
        finite_vector observable with horizon T.
    mu, nu : ProbVector
        Initial law of the process and centering law.
    mode : str
    tol : float
        Relative quadrature tolerance for the time integrals.

    Returns
    -------
    BoundReport
        upper >= log E >= lower; c0, the majorant series terms at t = 0, the
        truncation order, and the certified series remainder.
    """
    cd = coupled_difference(gen, obs, mode)
    log_c0 = _log_c0(cd.phi0, mu, nu)
    T = cd.T
    majorant = series_sup(gen, cd.phi0, signed=False)

    def signed_envelope(t):
        s = series_sup(gen, cd, t=t, signed=True)
        return np.array([s.sup_value, s.inf_value])

    env, _ = quad_vec(signed_envelope, 0.0, T, epsrel=tol, epsabs=1e-12)
    slack = T * majorant.remainder
    lower = log_c0 + env[1] - slack
    if mode == "uniform_majorant":
        upper = log_c0 + T * (majorant.sup_value + majorant.remainder)
    else:
        upper = log_c0 + env[0] + slack
    terms = majorant.terms
    return BoundReport(
        c0=math.exp(log_c0),
        series_terms=terms,
        truncation_k=terms[-1][0] if terms else 2,
        remainder=majorant.remainder,
        upper=float(upper),
        lower=float(min(lower, upper)),
    )


def bennett_deviation(a: float, T: float, c1: float, c2: float) -> BennettDeviation:
    """Deviation probability bound P(F - EF > a) under the c1 c2^k certificate.

    Returns exp(-(1/2)(a/c2)^2 / (T c1 + a/(3 c2))) together with the
    Chernoff-optimal exponent it dominates.
    """
    for name, val in [("a", a), ("T", T), ("c1", c1), ("c2", c2)]:
        if not np.isfinite(val) or val <= 0:
            raise NonPositiveParameterError(f"{name} must be a positive finite real")
    ratio = a / c2
    exponent = -0.5 * ratio**2 / (T * c1 + ratio / 3.0)
    optimized = ratio - (T * c1 + ratio) * math.log(a / (T * c1 * c2) + 1.0)
    if optimized > exponent + 1e-12 * max(1.0, abs(exponent)):
        raise CheckFailedError("optimized exponent exceeds the closed-form exponent")
    return BennettDeviation(
        probability=math.exp(exponent), exponent=exponent, optimized_exponent=optimized
    )


def extract_c1_c2(gen: GeneratorMatrix, phi0) -> CouplingSeriesCert:
    """Certificate constants with sup_x sum_y q[x,y]|phi0(y,x)|^k <= c1 c2^k.

    c2 is the largest |phi0| over pairs connected by a positive rate, c1 the
    largest exit rate; the inequality is verified for k = 2..20.
    """
    phi0 = np.asarray(phi0, dtype=float)
    q_off = gen.off_diagonal()
    support = q_off > 0.0
    c2 = float(np.max(np.abs(phi0.T)[support])) if support.any() else 0.0
    c1 = float(np.max(gen.exit_rates()))
    absw = np.abs(phi0.T)
    for k in range(2, 21):
        lhs = float(np.max((q_off * absw**k).sum(axis=1)))
        if lhs > c1 * c2**k * (1.0 + 1e-12) + 1e-300:
            raise CheckFailedError(f"certificate failed at k={k}")
    return CouplingSeriesCert(c1=c1, c2=c2, degenerate=(c2 == 0.0 or c1 == 0.0))


def lipschitz_exp_bound(
    gen: GeneratorMatrix,
    h,
    lipf: float,
    T: float,
    mu: ProbVector,
    nu: ProbVector,
    tol: float = SERIES_TOL,
) -> BoundReport:
    """Upper bound on log E_mu[exp(F - E_nu F)] from the coupling time alone.

    Uses |Phi_t(x,y)| <= lipf * h(x,y) for rho-Lipschitz f: the bound is
    log c0 + sum_{k>=2} (T lipf^k / k!) sup_x sum_y q[x,y] h(y,x)^k with
    c0 = sum_x mu(x) exp(lipf * sum_y nu(y) h(x,y)).  Any entrywise
    over-estimate of h with zero diagonal is admissible.
    """
    if lipf < 0:
        raise NonPositiveParameterError("lipf must be >= 0")
    if T <= 0:
        raise NonPositiveParameterError("T must be > 0")
    hmat = np.asarray(getattr(h, "h", h), dtype=float)
    log_c0 = _log_c0(lipf * hmat, mu, nu)
    q_off = gen.off_diagonal()
    w = lipf * hmat.T
    B = float(np.max(w)) if w.size else 0.0
    rate = float(np.max(gen.exit_rates()))
    K, remainder = _series_truncation(rate, B, tol)
    terms = []
    total = 0.0
    wk = w * w
    for k in range(2, K + 1):
        sup_k = float(np.max((q_off * wk).sum(axis=1))) / math.factorial(k)
        terms.append((k, sup_k))
        total += sup_k
        wk = wk * w
    upper = log_c0 + T * (total + remainder)
    return BoundReport(
        c0=math.exp(log_c0),
        series_terms=terms,
        truncation_k=K,
        remainder=remainder,
        upper=float(upper),
        lower=-math.inf,
    )


def scalar_regime_norm_g1(eps: float, M: float) -> float:
    """l1 operator norm bound 1/(eps - M) for the uniformly dominated regime."""
    if eps <= M:
        raise NonPositiveParameterError("need eps > M for a finite norm")
    return 1.0 / (eps - M)


def ips_bound(
    norm_G_p2: float,
    norm_delta_f_p: float,
    c_k_rate: Callable[[int], float],
    T: float,
    norm_G_1: Optional[float] = None,
    triple_norm_f: Optional[float] = None,
) -> float:
    """Log exponential-moment bound for spin systems with dominated flips.

    Computes T * sum_{k>=2} c_k (norm_G_p2 * norm_delta_f_p)^k / k! and adds
    norm_G_1 * triple_norm_f when both are given (arbitrary initial laws).

    Parameters
    ----------
    norm_G_p2 : float
        Operator norm bound on the accumulated influence G, l^p to l^2.
    norm_delta_f_p : float
        l^p norm of the single-flip influence vector of f.
    c_k_rate : callable
        k-th weighted maximal flip rate, k >= 2 (e.g. 2**k for pair swaps).
    T : float
        Horizon.

    Raises
    ------
    DivergentSeriesError
        If the certified rates grow too fast for the series to converge.
    """
    if norm_G_p2 < 0 or norm_delta_f_p < 0:
        raise NonPositiveParameterError("norms must be >= 0")
    if T <= 0:
        raise NonPositiveParameterError("T must be > 0")
    g = norm_G_p2 * norm_delta_f_p
    total = 0.0
    if g > 0.0:
        prev = math.inf
        log_gk = 2.0 * math.log(g)
        k = 2
        while True:
            try:
                ck = float(c_k_rate(k))
            except OverflowError as exc:
                raise DivergentSeriesError(f"rate certifier overflowed at k={k}") from exc
            if ck < 0 or not np.isfinite(ck):
                raise DivergentSeriesError(f"rate certifier returned {ck} at k={k}")
            log_term = math.log(ck) + log_gk - math.lgamma(k + 1) if ck > 0 else -math.inf
            if log_term > EXP_ARG_MAX:
                raise DivergentSeriesError("series term overflow; rates grow too fast")
            term = math.exp(log_term)
            total += term
            if not np.isfinite(total):
                raise DivergentSeriesError("series accumulated to overflow")
            if term <= 1e-16 * (1.0 + total) and k > 4:
                break
            if k > MAX_SERIES_K:
                if term >= prev:
                    raise DivergentSeriesError("series terms stopped decreasing")
                if term <= 1e-300:
                    break
            prev = term
            log_gk += math.log(g)
            k += 1
    bound = T * total
    if norm_G_1 is not None and triple_norm_f is not None:
        if norm_G_1 < 0 or triple_norm_f < 0:
            raise NonPositiveParameterError("norms must be >= 0")
        bound += norm_G_1 * triple_norm_f
    return float(bound)


def default_C_p(p: float) -> float:
    return 2.0 * p / math.log(max(p, math.e))


def moment_bound_rhs(
    gen: GeneratorMatrix,
    obs: ObservableSpec,
    mu: ProbVector,
    nu: ProbVector,
    p: float,
    C_p: Optional[float] = None,
    n_replicas: int = 2000,
    rng: Optional[RngStreamSpec] = None,
) -> MomentBoundReport:
    """Monte Carlo assembly of the Rosenthal-type moment bound.

    term_qv is the L^p(/2) norm of the integrated conditional variance rate
    sum_y q(X_t, y) Phi_t(y, X_t)^2 (exact Gauss-Legendre on each constancy
    segment of the path), term_jump the L^p norm of the largest coupled
    difference across observed jumps, and term_initial the exact initial
    term; rhs = C_p (term_qv + term_jump) + term_initial.  The left side
    (E_mu |F - E_nu F|^p)^(1/p) is estimated on the same paths.

    Parameters
    ----------
    gen : GeneratorMatrix
    obs : ObservableSpec
    mu, nu : ProbVector
    p : float
        Moment order, p >= 2.
    C_p : float, optional
        Martingale moment constant; defaults to 2p / log(max(p, e)), exposed
        as a knob because only the asymptotic shape p/log p is certified.
    n_replicas : int
    rng : RngStreamSpec
        Per-replica substreams are derived from it.

    Returns
    -------
    MomentBoundReport
    """
    if p < 2:
        raise NonPositiveParameterError("p must be >= 2")
    if rng is None:
        raise ConfigInvalidError("rng", "an RngStreamSpec is required")
    if n_replicas < 2:
        raise ConfigInvalidError("n_replicas", "need at least 2 replicas")
    if C_p is None:
        C_p = default_C_p(p)
    f = np.asarray(obs.values, dtype=float)
    T = obs.horizon
    cd = coupled_difference(gen, obs)
    term_initial = float((mu.p @ np.abs(cd.phi0 @ nu.p) ** p) ** (1.0 / p))
    mean_nu = expected_additive_functional(gen, f, T, nu)
    q_off = gen.off_diagonal()

    qv = np.empty(n_replicas)
    jump_sup = np.empty(n_replicas)
    dev = np.empty(n_replicas)
    for r in range(n_replicas):
        gr = rng.replica(r).generator()
        x0 = int(gr.choice(gen.n, p=mu.p))
        path = sample_ctmc(gen, x0, T, gr)
        dev[r] = abs(path_functional(path, f) - mean_nu)
        t0 = path.jump_times[:-1]
        t1 = path.jump_times[1:]
        half = 0.5 * (t1 - t0)
        mid = 0.5 * (t1 + t0)
        nodes = mid[:, None] + half[:, None] * _GL_NODES[None, :]
        gv = cd.g_of(np.clip(T - nodes.ravel(), 0.0, T))
        gv = gv.reshape(gen.n, len(t0), 16)
        states = path.states
        total = 0.0
        for i, s in enumerate(states):
            diff = gv[:, i, :] - gv[s, i, :]
            vals = q_off[s] @ (diff * diff)
            total += half[i] * float(_GL_WEIGHTS @ vals)
        qv[r] = total
        best = 0.0
        for i in range(1, len(states)):
            tj = path.jump_times[i]
            gj = cd.g_of(max(T - tj, 0.0))
            best = max(best, abs(float(gj[states[i]] - gj[states[i - 1]])))
        jump_sup[r] = best

    term_qv = float(np.mean(qv ** (0.5 * p)) ** (1.0 / p))
    term_jump = float(np.mean(jump_sup**p) ** (1.0 / p))
    m_p = float(np.mean(dev**p))
    se_mp = float(np.std(dev**p, ddof=1) / math.sqrt(n_replicas))
    lhs = m_p ** (1.0 / p)
    lhs_se = se_mp * lhs / (p * m_p) if m_p > 0 else 0.0
    return MomentBoundReport(
        p=p,
        term_qv=term_qv,
        term_jump=term_jump,
        term_initial=term_initial,
        C_p=float(C_p),
        rhs=float(C_p * (term_qv + term_jump) + term_initial),
        lhs_estimate=lhs,
        lhs_se=lhs_se,
    )
