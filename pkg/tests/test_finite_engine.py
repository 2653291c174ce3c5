import numpy as np
import pytest

from coupling_bounds.core import (
    ProbVector,
    ReducibleError,
    RngStreamSpec,
    validate_generator,
    validate_prob_vector,
)
from coupling_bounds.finite_engine import (
    expected_additive_functional,
    feynman_kac_logmgf,
    integrated_semigroup,
    matrix_exp,
    path_functional,
    propagator,
    sample_ctmc,
    semigroup_apply,
    stationary_distribution,
)

SYM2 = validate_generator([[-1.0, 1.0], [1.0, -1.0]])


def _random_generator(rng, n, rate_scale=2.0):
    q = rng.uniform(0.05, rate_scale, size=(n, n))
    np.fill_diagonal(q, 0.0)
    np.fill_diagonal(q, -q.sum(axis=1))
    return validate_generator(q)


def _mc_two_state_exp_moment(a, b, f, T, lam, x0, rng, n_paths):
    """Vectorized two-state Monte Carlo oracle for E exp(lam * int f).

    Independent of sample_ctmc: advances all replicas in rounds of
    exponential holding times.
    """
    rates = np.array([a, b])
    state = np.full(n_paths, x0, dtype=np.int64)
    t = np.zeros(n_paths)
    F = np.zeros(n_paths)
    alive = np.ones(n_paths, dtype=bool)
    while alive.any():
        r = rates[state[alive]]
        dt = rng.exponential(1.0 / r)
        reach = np.minimum(dt, T - t[alive])
        F[alive] += f[state[alive]] * reach
        t[alive] += dt
        state[alive] = 1 - state[alive]
        still = np.zeros_like(alive)
        still[alive] = t[alive] < T
        alive = still
    w = np.exp(lam * F)
    return w.mean(), w.std(ddof=1) / np.sqrt(n_paths)


def test_semigroup_identity_at_zero():
    f = np.array([2.0, -1.0])
    np.testing.assert_array_equal(semigroup_apply(SYM2, 0.0, f), f)


def test_semigroup_two_state_closed_form():
    f = np.array([1.0, 0.0])
    for t in [0.1, 0.7, 2.5, 40.0]:
        got = semigroup_apply(SYM2, t, f)
        want = np.array([(1 + np.exp(-2 * t)) / 2, (1 - np.exp(-2 * t)) / 2])
        np.testing.assert_allclose(got, want, atol=1e-12)


def test_semigroup_preserves_constants():
    rng = RngStreamSpec(master_seed=11, stream_tag="engine-const").generator()
    gen = _random_generator(rng, 6)
    out = semigroup_apply(gen, 3.7, np.full(6, 4.0))
    np.testing.assert_allclose(out, 4.0, atol=1e-11)


def test_semigroup_property_and_positivity():
    rng = RngStreamSpec(master_seed=12, stream_tag="engine-semigroup").generator()
    for _ in range(10):
        n = int(rng.integers(2, 7))
        gen = _random_generator(rng, n)
        s, t = rng.uniform(0.1, 2.0, size=2)
        p_s = propagator(gen, s)
        p_t = propagator(gen, t)
        p_st = propagator(gen, s + t)
        np.testing.assert_allclose(p_s @ p_t, p_st, atol=1e-10)
        assert p_st.min() >= 0.0
        np.testing.assert_allclose(p_st.sum(axis=1), 1.0, atol=1e-11)


def test_semigroup_long_time_chunking():
    # t large enough that exp(-Lambda t) underflows without chunking
    got = semigroup_apply(SYM2, 500.0, np.array([1.0, 0.0]))
    np.testing.assert_allclose(got, [0.5, 0.5], atol=1e-11)


def test_matrix_exp_trivial_cases():
    np.testing.assert_allclose(matrix_exp(np.zeros((3, 3))), np.eye(3), atol=1e-14)
    np.testing.assert_allclose(
        matrix_exp(np.diag([1.0, -2.0])), np.diag([np.e, np.exp(-2.0)]), rtol=1e-13
    )


def test_matrix_exp_against_high_precision_series():
    import mpmath

    mpmath.mp.dps = 50
    rng = RngStreamSpec(master_seed=13, stream_tag="engine-expm").generator()
    for _ in range(5):
        m = rng.normal(scale=2.0, size=(4, 4))
        got = matrix_exp(m)
        want = np.array(mpmath.expm(mpmath.matrix(m)).tolist(), dtype=float)
        np.testing.assert_allclose(got, want, rtol=1e-10, atol=1e-12)


@pytest.mark.filterwarnings("ignore:overflow encountered")
def test_matrix_exp_overflow():
    from coupling_bounds.core import NumericalOverflowError

    with pytest.raises(NumericalOverflowError):
        matrix_exp(np.diag([1e6, 1e6]))


def test_integrated_semigroup_matches_quadrature():
    rng = RngStreamSpec(master_seed=14, stream_tag="engine-ode").generator()
    gen = _random_generator(rng, 5)
    f = rng.normal(size=5)
    T = 1.7
    g = integrated_semigroup(gen, f, T)
    ts = np.linspace(0.0, T, 4001)
    vals = np.array([semigroup_apply(gen, t, f) for t in ts])
    from scipy.integrate import simpson

    ref = simpson(vals, x=ts, axis=0)
    np.testing.assert_allclose(g, ref, atol=1e-9)
    dense = integrated_semigroup(gen, f, T, dense=True)
    np.testing.assert_allclose(dense(T), g, atol=1e-10)
    np.testing.assert_allclose(dense(0.0), 0.0, atol=1e-14)


def test_feynman_kac_trivial_zero_cases():
    mu = validate_prob_vector([1.0, 0.0])
    nu = validate_prob_vector([0.3, 0.7])
    assert feynman_kac_logmgf(SYM2, [0.0, 0.0], 1.0, 2.0, mu, nu) == pytest.approx(0.0, abs=1e-12)
    assert feynman_kac_logmgf(SYM2, [1.0, -1.0], 1.0, 0.0, mu, nu) == pytest.approx(0.0, abs=1e-12)


def test_feynman_kac_against_mc_oracle():
    f = np.array([1.0, 0.0])
    T, lam = 1.0, 1.0
    mu = validate_prob_vector([1.0, 0.0])
    fk = feynman_kac_logmgf(SYM2, f, T, lam, mu, mu)
    mean_F = expected_additive_functional(SYM2, f, T, mu)
    rng = RngStreamSpec(master_seed=15, stream_tag="engine-fk-mc").generator()
    m, se = _mc_two_state_exp_moment(1.0, 1.0, f, T, lam, 0, rng, 1_000_000)
    mc_logmgf = np.log(m) - lam * mean_F
    se_log = se / m
    assert abs(fk - mc_logmgf) <= 3.0 * se_log


def test_feynman_kac_shift_stability_large_lambda():
    # without the log-space shift this would overflow: lam*max(f)*T = 400
    mu = validate_prob_vector([0.5, 0.5])
    val = feynman_kac_logmgf(SYM2, [2.0, 0.0], 20.0, 10.0, mu, mu)
    assert np.isfinite(val)
    # log E exp(lam F) <= lam * max f * T
    assert val <= 10.0 * 2.0 * 20.0


def test_stationary_two_state_asymmetric():
    a, b = 0.7, 1.9
    gen = validate_generator([[-a, a], [b, -b]])
    mu = stationary_distribution(gen)
    # hand oracle: balance a*mu0 = b*mu1 with mu0 + mu1 = 1
    np.testing.assert_allclose(mu.p, [b / (a + b), a / (a + b)], atol=1e-12)
    assert np.max(np.abs(mu.p @ gen.q)) <= 1e-12


def test_stationary_symmetric_two_state():
    np.testing.assert_allclose(stationary_distribution(SYM2).p, [0.5, 0.5], atol=1e-13)


def test_stationary_reducible_error():
    gen = validate_generator(
        [
            [-1.0, 1.0, 0.0, 0.0],
            [1.0, -1.0, 0.0, 0.0],
            [0.0, 0.0, -2.0, 2.0],
            [0.0, 0.0, 2.0, -2.0],
        ]
    )
    with pytest.raises(ReducibleError):
        stationary_distribution(gen)


def test_sample_ctmc_path_shape_and_determinism():
    spec = RngStreamSpec(master_seed=16, replica_index=4, stream_tag="engine-path")
    p1 = sample_ctmc(SYM2, 0, 5.0, spec)
    p2 = sample_ctmc(SYM2, 0, 5.0, spec)
    np.testing.assert_array_equal(p1.jump_times, p2.jump_times)
    np.testing.assert_array_equal(p1.states, p2.states)
    assert p1.jump_times[0] == 0.0 and p1.jump_times[-1] == 5.0
    assert np.all(np.diff(p1.jump_times) >= 0.0)
    assert np.all(p1.states[1:] != p1.states[:-1])


def test_sample_ctmc_statistics():
    from scipy import stats

    base = RngStreamSpec(master_seed=17, stream_tag="engine-gillespie")
    holds = []
    jumps_01 = 0
    jumps_total = 0
    gen = validate_generator([[-2.0, 1.5, 0.5], [1.0, -1.0, 0.0], [0.4, 0.6, -1.0]])
    for r in range(4000):
        path = sample_ctmc(gen, 0, 4.0, base.replica(r))
        # only the first hold per path: completed holds within a fixed horizon
        # are length-biased, but conditioning the first Exp(2) hold on
        # completion before T=4 perturbs its law by only e^{-8}
        if path.states.shape[0] > 1:
            holds.append(path.jump_times[1] - path.jump_times[0])
        for k in range(path.states.shape[0] - 1):
            if path.states[k] == 0:
                jumps_total += 1
                if path.states[k + 1] == 1:
                    jumps_01 += 1
    holds = np.array(holds)
    # first holding time in state 0 is Exp(2); KS test at the 1% level
    ks = stats.kstest(holds, "expon", args=(0.0, 0.5))
    assert ks.pvalue > 0.01
    # jump 0->1 probability 1.5/2
    p_hat = jumps_01 / jumps_total
    se = np.sqrt(0.75 * 0.25 / jumps_total)
    assert abs(p_hat - 0.75) <= 4.0 * se
    # mean holding within 3 SE of 1/2
    assert abs(holds.mean() - 0.5) <= 3.0 * holds.std(ddof=1) / np.sqrt(holds.size)


def test_path_functional_exact_segments():
    path = sample_ctmc(SYM2, 0, 3.0, RngStreamSpec(master_seed=18))
    f = np.array([1.0, 0.0])
    time_in_0 = sum(
        path.jump_times[k + 1] - path.jump_times[k]
        for k in range(path.states.shape[0])
        if path.states[k] == 0
    )
    assert path_functional(path, f) == pytest.approx(time_in_0, abs=1e-14)
    assert path_functional(path, [1.0, 1.0]) == pytest.approx(3.0, abs=1e-12)


def test_expected_functional_against_mc():
    f = np.array([1.0, 0.0])
    nu = validate_prob_vector([1.0, 0.0])
    exact = expected_additive_functional(SYM2, f, 2.0, nu)
    base = RngStreamSpec(master_seed=19, stream_tag="engine-meanF")
    vals = np.array(
        [path_functional(sample_ctmc(SYM2, 0, 2.0, base.replica(r)), f) for r in range(20000)]
    )
    se = vals.std(ddof=1) / np.sqrt(vals.size)
    assert abs(vals.mean() - exact) <= 3.0 * se


def test_frozen_chain_path_never_jumps():
    gen = validate_generator([[0.0, 0.0], [0.0, 0.0]])
    path = sample_ctmc(gen, 1, 10.0, RngStreamSpec(master_seed=20))
    assert path.states.tolist() == [1]
    assert path_functional(path, [0.0, 3.0]) == pytest.approx(30.0)
