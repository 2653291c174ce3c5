"""Ornstein coupling of continuous-time lattice walks.

Both walks jump at total rate 1 (each coordinate at rate 1/d, signs fair).
Coordinates move independently until they agree, then jump together, so
matched coordinates never separate and the coupling time is the maximum of
the per-coordinate meeting times.  Per-coordinate differences evolve as
rate-2/d walks absorbed at 0, which module lattice's first-passage oracle
describes exactly.
"""

from dataclasses import dataclass

import numpy as np

from coupling_bounds.core import ConfigInvalidError, RngStreamSpec
from coupling_bounds.mcstats import SampleBatch


def _resolve_rng(rng) -> np.random.Generator:
    if isinstance(rng, RngStreamSpec):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    raise ConfigInvalidError("rng", "expected RngStreamSpec or numpy Generator")


def _check_point(name, value, d: int) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(value))
    if arr.shape != (d,) or not np.issubdtype(arr.dtype, np.integer):
        raise ConfigInvalidError(name, "must be an integer point of dimension %d" % d)
    return arr.astype(np.int64)


@dataclass(frozen=True)
class OrnsteinResult:
    """Coupling time (np.inf when censored at the horizon) and probe snapshots."""

    tau: float
    probe_times: np.ndarray
    x_path: np.ndarray
    y_path: np.ndarray


def simulate_rw_ornstein(d: int, x, y, T: float, rng, probe_times=None) -> OrnsteinResult:
    """Couple two rate-1 lattice walks coordinatewise until they merge.

    Parameters
    ----------
    d : int
        Lattice dimension.
    x, y : integer points of shape (d,)
        Starting positions.
    T : float
        Horizon; the coupling time is reported as np.inf if the walks have
        not merged by T.
    rng : RngStreamSpec or numpy Generator
    probe_times : array-like, optional
        Ascending times in [0, T] at which both positions are recorded;
        defaults to (T,).

    Returns
    -------
    OrnsteinResult
        tau, probe times, and paired positions of shape (n_probes, d).
    """
    if d < 1 or not isinstance(d, (int, np.integer)):
        raise ConfigInvalidError("d", "must be a positive integer")
    if not (np.isfinite(T) and T >= 0.0):
        raise ConfigInvalidError("T", "must be a nonnegative real")
    xs = _check_point("x", x, d)
    ys = _check_point("y", y, d)
    if probe_times is None:
        probes = np.array([T])
    else:
        probes = np.asarray(probe_times, dtype=float)
        if probes.ndim != 1 or probes.size == 0 or np.any(np.diff(probes) < 0):
            raise ConfigInvalidError("probe_times", "must be an ascending 1-D grid")
        if probes[0] < 0.0 or probes[-1] > T:
            raise ConfigInvalidError("probe_times", "must lie within [0, T]")
    gen = _resolve_rng(rng)

    n_probes = probes.size
    x_path = np.empty((n_probes, d), dtype=np.int64)
    y_path = np.empty((n_probes, d), dtype=np.int64)
    taus = np.zeros(d)
    for i in range(d):
        xi, yi = int(xs[i]), int(ys[i])
        matched = xi == yi
        tau_i = 0.0 if matched else np.inf
        t = 0.0
        k = 0
        while True:
            rate = (1.0 if matched else 2.0) / d
            t_next = t + gen.standard_exponential() / rate
            while k < n_probes and probes[k] < t_next:
                x_path[k, i] = xi
                y_path[k, i] = yi
                k += 1
            if t_next > T:
                break
            step = 1 if gen.random() < 0.5 else -1
            if matched:
                xi += step
                yi += step
            else:
                if gen.random() < 0.5:
                    xi += step
                else:
                    yi += step
                if xi == yi:
                    matched = True
                    tau_i = t_next
            t = t_next
        while k < n_probes:
            x_path[k, i] = xi
            y_path[k, i] = yi
            k += 1
        taus[i] = tau_i

    return OrnsteinResult(float(taus.max()), probes, x_path, y_path)


def ornstein_tau_batch(d: int, x, y, T: float, n_replicas: int, rng) -> np.ndarray:
    """Vectorized draws of the Ornstein coupling time, censored at T.

    Simulates only the per-coordinate difference walks (rate 2/d, absorbed
    at 0), whose absorption times have the same law as the meeting times of
    the full paired construction.  Returns an array of tau values with
    np.inf marking replicas still uncoupled at T.
    """
    if n_replicas < 1:
        raise ConfigInvalidError("n_replicas", "must be at least 1")
    xs = _check_point("x", x, d)
    ys = _check_point("y", y, d)
    gen = _resolve_rng(rng)
    gaps = np.abs(xs - ys)
    active_cols = np.nonzero(gaps)[0]
    if active_cols.size == 0:
        return np.zeros(n_replicas)

    n_act = active_cols.size
    m = n_replicas * n_act
    pos = np.tile(gaps[active_cols], n_replicas).astype(np.int64)
    t = np.zeros(m)
    tau = np.full(m, np.inf)
    alive = np.arange(m)
    rate = 2.0 / d
    while alive.size:
        t[alive] += gen.standard_exponential(alive.size) / rate
        keep = alive[t[alive] <= T]
        if keep.size == 0:
            break
        pos[keep] += gen.integers(0, 2, keep.size) * 2 - 1
        hit = pos[keep] == 0
        tau[keep[hit]] = t[keep[hit]]
        alive = keep[~hit]

    return tau.reshape(n_replicas, n_act).max(axis=1)


def ornstein_pair_occupation(T: float, n_replicas: int, rng) -> SampleBatch:
    """Signed origin-occupation gap of a coupled d=1 pair started at 0 and 1.

    Each replica integrates 1{X_s = 0} - 1{Y_s = 0} up to min(tau, T) under
    the independent-until-meeting coupling, which makes the expectation equal
    to the integral of p_s(0,0) - p_s(1,0) over [0, T].
    """
    if n_replicas < 1:
        raise ConfigInvalidError("n_replicas", "must be at least 1")
    if not (np.isfinite(T) and T >= 0.0):
        raise ConfigInvalidError("T", "must be a nonnegative real")
    gen = _resolve_rng(rng)
    x = np.zeros(n_replicas, dtype=np.int64)
    y = np.ones(n_replicas, dtype=np.int64)
    D = np.zeros(n_replicas)
    t = np.zeros(n_replicas)
    alive = np.arange(n_replicas)
    while alive.size:
        t_new = t[alive] + gen.standard_exponential(alive.size) / 2.0
        dt_eff = np.minimum(t_new, T) - t[alive]
        D[alive] += dt_eff * ((x[alive] == 0).astype(float) - (y[alive] == 0))
        t[alive] = t_new
        keep = alive[t_new <= T]
        if keep.size == 0:
            break
        r = gen.integers(0, 4, keep.size)
        step = (r >> 1) * 2 - 1
        on_x = (r & 1) == 0
        x[keep] += np.where(on_x, step, 0)
        y[keep] += np.where(on_x, 0, step)
        alive = keep[x[keep] != y[keep]]
    return SampleBatch(values=D)
