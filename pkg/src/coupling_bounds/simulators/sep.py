"""Symmetric exclusion process on a d-dimensional torus.

The dynamics follow the graphical representation: every unordered
nearest-neighbor edge carries an independent Poisson clock, and a ring
exchanges the occupation values across that edge.  The default edge rate
1/(2d) makes a lone particle perform the rate-1 total-jump walk whose kernel
module lattice computes, so simulator output can be checked against exact
transition probabilities.

The coupled variant runs two copies off one arrow configuration with clocks
at twice the rate and a fair coin per ring (tails: both copies ignore the
arrow), except at the arrow joining the two discrepancy sites, where exactly
one copy exchanges and the pair annihilates.  Each marginal is again a
rate-edge_rate exclusion process, and the two discrepancies move like
independent rate-1 walkers until they annihilate.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from coupling_bounds.core import (
    ConfigInvalidError,
    InvariantBrokenError,
    RngStreamSpec,
    TorusTooSmallError,
    worker_count,
)
from coupling_bounds.mcstats import SampleBatch, moment_estimate
from coupling_bounds.simulators import _sep_kernels as _k

_CHUNK = 1 << 20


def _resolve_rng(rng) -> np.random.Generator:
    if isinstance(rng, RngStreamSpec):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    raise ConfigInvalidError("rng", "expected RngStreamSpec or numpy Generator")


@dataclass(frozen=True)
class OccupationSet:
    """Additive functional counting particles inside a fixed site set."""

    sites: tuple


@dataclass(frozen=True)
class LocalFunction:
    """Table lookup on the occupation bits of an ordered site window."""

    window: tuple
    table: tuple


def occupation_set(sites) -> OccupationSet:
    return OccupationSet(sites=tuple(tuple(np.atleast_1d(s)) for s in sites))


def local_function(window, table) -> LocalFunction:
    return LocalFunction(
        window=tuple(tuple(np.atleast_1d(s)) for s in window),
        table=tuple(float(v) for v in table),
    )


def _flatten_sites(sites, d: int, L: int, name: str) -> np.ndarray:
    flat = []
    for s in sites:
        coord = np.atleast_1d(np.asarray(s))
        if coord.shape != (d,) or not np.issubdtype(coord.dtype, np.integer):
            raise ConfigInvalidError(name, "sites must be integer points of dimension %d" % d)
        if np.any(coord < 0) or np.any(coord >= L):
            raise ConfigInvalidError(name, "site coordinates must lie in [0, L)")
        flat.append(int(np.ravel_multi_index(tuple(coord), (L,) * d)))
    out = np.asarray(flat, dtype=np.int64)
    if np.unique(out).size != out.size:
        raise ConfigInvalidError(name, "sites must be distinct")
    return out


@dataclass(frozen=True, eq=False)
class SepConfig:
    """Torus geometry, initial configuration, and path functional.

    initial may have shape (L**d,) or (L,) * d with entries in {0, 1}.  The
    functional is either occupation_set(sites) integrating the particle count
    on the set, or local_function(window, table) integrating a table lookup
    on the window's occupation bits (bit i belongs to window[i]).
    """

    d: int
    L: int
    initial: object
    functional: object
    edge_rate: float = None

    def __post_init__(self):
        if not isinstance(self.d, (int, np.integer)) or self.d < 1:
            raise ConfigInvalidError("d", "must be a positive integer")
        if not isinstance(self.L, (int, np.integer)) or self.L < 4 or self.L % 2:
            raise ConfigInvalidError("L", "must be an even integer >= 4")
        if self.edge_rate is None:
            object.__setattr__(self, "edge_rate", 1.0 / (2.0 * self.d))
        if not (np.isfinite(self.edge_rate) and self.edge_rate > 0.0):
            raise ConfigInvalidError("edge_rate", "must be a positive real")
        arr = np.asarray(self.initial)
        n_sites = self.L**self.d
        if arr.shape == (self.L,) * self.d:
            arr = arr.reshape(-1)
        if arr.shape != (n_sites,):
            raise ConfigInvalidError("initial", "must have L**d sites")
        if not np.all((arr == 0) | (arr == 1)):
            raise ConfigInvalidError("initial", "entries must be 0 or 1")
        object.__setattr__(self, "_initial_flat", arr.astype(np.uint8))
        if isinstance(self.functional, OccupationSet):
            flat = _flatten_sites(self.functional.sites, self.d, self.L, "functional")
            object.__setattr__(self, "_flat_sites", flat)
        elif isinstance(self.functional, LocalFunction):
            flat = _flatten_sites(self.functional.window, self.d, self.L, "functional")
            table = np.asarray(self.functional.table, dtype=float)
            if table.shape != (2 ** flat.size,) or not np.all(np.isfinite(table)):
                raise ConfigInvalidError(
                    "functional", "table must hold 2**len(window) finite values"
                )
            object.__setattr__(self, "_flat_sites", flat)
        else:
            raise ConfigInvalidError(
                "functional", "expected occupation_set(...) or local_function(...)"
            )

    @property
    def n_sites(self) -> int:
        return self.L**self.d

    def initial_flat(self) -> np.ndarray:
        return self._initial_flat.copy()

    def functional_arrays(self, eta: np.ndarray):
        """Kernel-side arrays (member, win_bit, table, mode) and the starting value."""
        n = self.n_sites
        if isinstance(self.functional, OccupationSet):
            member = np.zeros(n, dtype=np.int64)
            member[self._flat_sites] = 1
            fval0 = float(eta[self._flat_sites].sum())
            return member, np.empty(0, np.int64), np.empty(0), _k.MODE_OCCUPATION, fval0
        win_bit = np.full(n, -1, dtype=np.int64)
        for i, s in enumerate(self._flat_sites):
            win_bit[s] = i
        table = np.asarray(self.functional.table, dtype=float)
        idx = 0
        for i, s in enumerate(self._flat_sites):
            idx |= int(eta[s]) << i
        return np.empty(0, np.int64), win_bit, table, _k.MODE_WINDOW, float(idx)


def _edges(d: int, L: int):
    grid = np.arange(L**d, dtype=np.int64).reshape((L,) * d)
    a_parts, b_parts = [], []
    for axis in range(d):
        a_parts.append(grid.reshape(-1))
        b_parts.append(np.roll(grid, -1, axis=axis).reshape(-1))
    return np.concatenate(a_parts), np.concatenate(b_parts)


def _draw_size(total_rate: float, remaining: float) -> int:
    est = total_rate * max(remaining, 0.0)
    return int(max(256, min(_CHUNK, est * 1.02 + 6.0 * np.sqrt(est + 1.0) + 64.0)))


def _check_grid(times, name: str) -> np.ndarray:
    grid = np.asarray(times, dtype=float)
    if grid.ndim != 1 or grid.size == 0 or np.any(~np.isfinite(grid)):
        raise ConfigInvalidError(name, "must be a finite 1-D grid")
    if grid[0] < 0.0 or np.any(np.diff(grid) <= 0.0):
        raise ConfigInvalidError(name, "must be nonnegative and strictly increasing")
    return grid


@dataclass(frozen=True)
class SepResult:
    F: float
    event_count: int
    checkpoint_times: np.ndarray
    checkpoint_values: np.ndarray
    final_configuration: np.ndarray


def _run_single(eta, edge_a, edge_b, member, win_bit, table, mode, fval0, total_rate, ck, gen):
    fstate = np.array([0.0, 0.0, fval0, 0.0])
    istate = np.zeros(5, dtype=np.int64)
    ck_values = np.empty(ck.size)
    n_edges = edge_a.size
    while True:
        n = _draw_size(total_rate, ck[-1] - fstate[0])
        exps = gen.standard_exponential(n)
        picks = gen.integers(0, n_edges, size=n, dtype=np.int64)
        istate[0] = 0  # cursor indexes the fresh chunk
        status = _k.advance_single(
            eta, edge_a, edge_b, member, win_bit, table, mode,
            total_rate, fstate, istate, ck, ck_values, exps, picks,
        )
        if status == _k.DONE:
            return ck_values, int(istate[2])


def simulate_sep(config: SepConfig, T: float, rng, checkpoint_times=None) -> SepResult:
    """Run one exclusion path and integrate the configured functional.

    Parameters
    ----------
    config : SepConfig
    T : float
        Horizon; F is the exact pathwise integral of the functional over
        [0, T] (holding times, not a discretization).
    rng : RngStreamSpec or numpy Generator
    checkpoint_times : array-like, optional
        Strictly increasing times in [0, T] at which running values of F are
        recorded; T is always appended as the final checkpoint.

    Returns
    -------
    SepResult
        F at T, the number of clock rings up to T, checkpoint arrays, and
        the configuration at time T.
    """
    if not (np.isfinite(T) and T >= 0.0):
        raise ConfigInvalidError("T", "must be a nonnegative real")
    if checkpoint_times is None:
        ck = np.array([T])
    else:
        ck = _check_grid(checkpoint_times, "checkpoint_times")
        if ck[-1] > T:
            raise ConfigInvalidError("checkpoint_times", "must not exceed T")
        if ck[-1] < T:
            ck = np.append(ck, T)
    gen = _resolve_rng(rng)
    eta = config.initial_flat()
    edge_a, edge_b = _edges(config.d, config.L)
    member, win_bit, table, mode, fval0 = config.functional_arrays(eta)
    total_rate = edge_a.size * config.edge_rate
    ck_values, events = _run_single(
        eta, edge_a, edge_b, member, win_bit, table, mode, fval0, total_rate, ck, gen
    )
    shape = (config.L,) * config.d
    return SepResult(
        F=float(ck_values[-1]),
        event_count=events,
        checkpoint_times=ck,
        checkpoint_values=ck_values,
        final_configuration=eta.reshape(shape),
    )


@dataclass(frozen=True)
class CoupledSepResult:
    """Discrepancy-site table of one coupled pair.

    discrepancies[k] holds the two flat sites where the copies differ at
    probe_times[k], or (-1, -1) after annihilation.  final_configurations
    holds the two copies as of stop_time, which is the last probe time
    unless the run halted early at the annihilating exchange.
    """

    d: int
    L: int
    probe_times: np.ndarray
    discrepancies: np.ndarray
    event_count: int
    stop_time: float
    final_configurations: tuple

    def indicator(self, probe_index: int, site) -> int:
        """1 if the copies differ at `site` (coords or flat index) at the probe."""
        coord = np.atleast_1d(np.asarray(site))
        if coord.size == self.d and np.issubdtype(coord.dtype, np.integer):
            flat = int(np.ravel_multi_index(tuple(coord % self.L), (self.L,) * self.d))
        else:
            raise ConfigInvalidError("site", "must be an integer point of dimension d")
        pair = self.discrepancies[probe_index]
        return int(flat == pair[0] or flat == pair[1])

    @property
    def coalesced(self) -> np.ndarray:
        return self.discrepancies[:, 0] < 0


def _flat_site(config: SepConfig, site, name: str) -> int:
    return int(_flatten_sites([site], config.d, config.L, name)[0])


def simulate_sep_coupled(
    config: SepConfig,
    x,
    y,
    probe_times,
    rng,
    check_invariants: bool = False,
    stop_at_coalescence: bool = True,
) -> CoupledSepResult:
    """Run the coin-flip coupled pair started from (eta, eta^{xy}).

    x and y must be nearest neighbors on the torus with eta(x) != eta(y).
    Returns the discrepancy sites at each probe time; after the annihilating
    exchange both copies agree everywhere and the indicator is 0 forever, so
    by default the event loop halts there and later probes are filled with
    the annihilated marker.  Pass stop_at_coalescence=False to simulate to
    the last probe (needed when final_configurations must be the time-T
    copies).  With check_invariants the configurations are compared against
    the tracked discrepancy pair at every probe (slow, test use; implies
    full simulation).
    """
    fx = _flat_site(config, x, "x")
    fy = _flat_site(config, y, "y")
    cx = np.asarray(np.unravel_index(fx, (config.L,) * config.d))
    cy = np.asarray(np.unravel_index(fy, (config.L,) * config.d))
    diff = (cx - cy) % config.L
    axis_hits = [(a, int(v)) for a, v in enumerate(diff) if v != 0]
    if len(axis_hits) != 1 or axis_hits[0][1] not in (1, config.L - 1):
        raise ConfigInvalidError("y", "x and y must be nearest neighbors on the torus")
    eta1 = config.initial_flat()
    if eta1[fx] == eta1[fy]:
        raise ConfigInvalidError("y", "initial configuration must differ at x and y")
    eta2 = eta1.copy()
    eta2[fx], eta2[fy] = eta2[fy], eta2[fx]

    probes = _check_grid(probe_times, "probe_times")
    gen = _resolve_rng(rng)
    edge_a, edge_b = _edges(config.d, config.L)
    n_edges = edge_a.size
    total_rate = 2.0 * n_edges * config.edge_rate
    fstate = np.array([0.0, 0.0])
    istate = np.zeros(7, dtype=np.int64)
    istate[5] = fx
    istate[6] = fy
    probe_disc = np.full((probes.size, 2), -2, dtype=np.int64)

    stop_flag = 0 if check_invariants or not stop_at_coalescence else 1

    def run_span(span_times, span_out):
        while True:
            n = _draw_size(total_rate, span_times[-1] - fstate[0])
            exps = gen.standard_exponential(n)
            picks = gen.integers(0, 2 * n_edges, size=n, dtype=np.int64)
            istate[0] = 0  # cursor indexes the fresh chunk
            status = _k.advance_coupled(
                eta1, eta2, edge_a, edge_b, total_rate,
                fstate, istate, span_times, span_out, exps, picks, stop_flag,
            )
            if status != _k.NEED_RANDOMS:
                return status

    stop_time = float(probes[-1])
    if check_invariants:
        for i in range(probes.size):
            istate[1] = 0
            run_span(probes[i : i + 1], probe_disc[i : i + 1])
            mism = np.nonzero(eta1 != eta2)[0]
            pair = probe_disc[i]
            expect = np.sort(pair[pair >= 0])
            if not np.array_equal(np.sort(mism), expect):
                raise InvariantBrokenError(
                    "discrepancy set %s does not match tracked pair %s at t=%g"
                    % (mism.tolist(), pair.tolist(), probes[i])
                )
    else:
        status = run_span(probes, probe_disc)
        if status == _k.COALESCED:
            probe_disc[int(istate[1]) :] = -1
            stop_time = float(fstate[0])

    shape = (config.L,) * config.d
    return CoupledSepResult(
        d=config.d,
        L=config.L,
        probe_times=probes,
        discrepancies=probe_disc,
        event_count=int(istate[2]),
        stop_time=stop_time,
        final_configurations=(eta1.reshape(shape), eta2.reshape(shape)),
    )


def _warm_kernels():
    cfg = SepConfig(d=1, L=4, initial=[1, 0, 0, 0], functional=occupation_set([(0,)]))
    gen = np.random.Generator(np.random.Philox(12345))
    simulate_sep(cfg, 0.5, gen)
    simulate_sep_coupled(cfg, (0,), (1,), [0.5], gen)


def coupled_discrepancy_profile(
    config: SepConfig, x, y, probe_times, n_replicas: int, rng: RngStreamSpec, window_sites
):
    """Replica counts of discrepancy hits per (probe time, window site).

    Returns an int64 array of shape (n_probes, n_window) where entry (k, j)
    counts replicas whose coupled pair differs at window_sites[j] at
    probe_times[k].  Replicas use independent child streams of `rng`, so the
    output is reproducible regardless of the worker count.
    """
    if not isinstance(rng, RngStreamSpec):
        raise ConfigInvalidError("rng", "replica splitting requires an RngStreamSpec")
    if n_replicas < 1:
        raise ConfigInvalidError("n_replicas", "must be at least 1")
    window = _flatten_sites(window_sites, config.d, config.L, "window_sites")
    windex = np.full(config.n_sites, -1, dtype=np.int64)
    windex[window] = np.arange(window.size)
    probes = _check_grid(probe_times, "probe_times")
    counts = np.zeros((probes.size, window.size), dtype=np.int64)

    def one(i: int) -> np.ndarray:
        res = simulate_sep_coupled(config, x, y, probes, rng.replica(i))
        return res.discrepancies

    _warm_kernels()
    workers = worker_count()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            tables = list(pool.map(one, range(n_replicas)))
    else:
        tables = [one(i) for i in range(n_replicas)]
    for disc in tables:
        for k in range(probes.size):
            for s in disc[k]:
                if s >= 0 and windex[s] >= 0:
                    counts[k, windex[s]] += 1
    return counts


@dataclass(frozen=True)
class VarianceCurve:
    T_grid: np.ndarray
    variances: np.ndarray
    ci: np.ndarray
    F_samples: np.ndarray


def occupation_variance_curve(
    config: SepConfig, T_grid, replicas: int, rng: RngStreamSpec, min_side_factor: float = 10.0
) -> VarianceCurve:
    """Variance of the path functional across a horizon grid.

    Each replica draws a fresh product-Bernoulli(1/2) initial configuration
    from its own stream and integrates the functional along one path,
    checkpointing at every grid horizon.  Variances are the unbiased
    (ddof=1) column variances with percentile-bootstrap CIs.

    The torus must satisfy L >= min_side_factor * sqrt(max T); the default
    factor 10 keeps wraparound negligible, and callers working at small
    sides lower it explicitly.

    Returns
    -------
    VarianceCurve
        T_grid, variances, ci of shape (k, 2), and the raw F samples of
        shape (replicas, k) for reuse in moment or MGF estimates.
    """
    if not isinstance(rng, RngStreamSpec):
        raise ConfigInvalidError("rng", "replica splitting requires an RngStreamSpec")
    if replicas < 2:
        raise ConfigInvalidError("replicas", "must be at least 2")
    grid = _check_grid(T_grid, "T_grid")
    if config.L < min_side_factor * np.sqrt(grid[-1]):
        raise TorusTooSmallError(
            "torus side %d is below %g * sqrt(max horizon %g)"
            % (config.L, min_side_factor, grid[-1])
        )
    edge_a, edge_b = _edges(config.d, config.L)
    total_rate = edge_a.size * config.edge_rate
    n_sites = config.n_sites

    def one(i: int) -> np.ndarray:
        gen = rng.replica(i).generator()
        eta = (gen.random(n_sites) < 0.5).astype(np.uint8)
        member, win_bit, table, mode, fval0 = config.functional_arrays(eta)
        values, _ = _run_single(
            eta, edge_a, edge_b, member, win_bit, table, mode, fval0, total_rate, grid, gen
        )
        return values[: grid.size]

    _warm_kernels()
    F = np.empty((replicas, grid.size))
    workers = worker_count()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for i, row in enumerate(pool.map(one, range(replicas))):
                F[i] = row
    else:
        for i in range(replicas):
            F[i] = one(i)

    variances = F.var(axis=0, ddof=1)
    scale = replicas / (replicas - 1.0)
    ci = np.empty((grid.size, 2))
    for j in range(grid.size):
        est = moment_estimate(
            SampleBatch(values=F[:, j]), p=2, center="mean",
            rng=rng.tagged("variance-bootstrap-%d" % j),
        )
        # moment_estimate returns the L^p root; square back to a variance
        ci[j] = scale * np.asarray(est.ci) ** 2
    return VarianceCurve(T_grid=grid, variances=variances, ci=ci, F_samples=F)
