import numpy as np
import pytest
from scipy import integrate

from coupling_bounds.core import (
    ConfigInvalidError,
    DegenerateBatchError,
    NonPositiveDataError,
    RngStreamSpec,
)
from coupling_bounds.mcstats import (
    FitReport,
    SampleBatch,
    logmgf_estimate,
    loglog_fit,
    moment_estimate,
)


def test_batch_validation():
    with pytest.raises(DegenerateBatchError):
        SampleBatch(np.array([]))
    with pytest.raises(DegenerateBatchError):
        SampleBatch(np.array([1.0, np.nan]))
    with pytest.raises(ConfigInvalidError):
        SampleBatch(np.ones(3), provenance=(RngStreamSpec(1),))
    batch = SampleBatch([1.0, 2.0], provenance=(RngStreamSpec(1), RngStreamSpec(2)))
    assert batch.size == 2


def test_logmgf_trivial_cases():
    const = SampleBatch(np.full(200, 3.7))
    est = logmgf_estimate(const, lam=1.3)
    assert est.estimate == 0.0
    assert est.se == 0.0

    rng = np.random.default_rng(5)
    batch = SampleBatch(rng.normal(size=500))
    est = logmgf_estimate(batch, lam=0.0)
    assert est.estimate == 0.0
    assert est.se == 0.0
    assert not est.diagnostics.flagged


def test_logmgf_small_batch_rejected():
    with pytest.raises(DegenerateBatchError):
        logmgf_estimate(SampleBatch(np.ones(99)), lam=0.5)


def test_logmgf_gaussian_oracle():
    # log E exp(lam (X - EX)) = lam^2 sigma^2 / 2 for X ~ N(mu, sigma^2)
    rng = RngStreamSpec(101, 0, "gaussian-mgf").generator()
    sigma = 1.4
    values = rng.normal(loc=2.0, scale=sigma, size=100_000)
    for lam in (0.2, 0.5):
        est = logmgf_estimate(SampleBatch(values), lam)
        truth = 0.5 * lam**2 * sigma**2
        # mean-centering adds lam*sd/sqrt(N) of fluctuation on top of the
        # delta-method SE of the log-mean-exp itself
        spread = np.hypot(est.se, lam * sigma / np.sqrt(values.size))
        assert abs(est.estimate - truth) <= 3.0 * spread
        assert not est.diagnostics.flagged


def test_logmgf_heavy_tail_flag():
    values = np.zeros(300)
    values[:3] = 40.0
    est = logmgf_estimate(SampleBatch(values), lam=1.0)
    assert est.diagnostics.flagged
    assert est.diagnostics.top_share > 0.99


def test_logmgf_permutation_invariant():
    rng = np.random.default_rng(7)
    values = rng.exponential(size=400)
    a = logmgf_estimate(SampleBatch(values), 0.3)
    b = logmgf_estimate(SampleBatch(values[::-1].copy()), 0.3)
    assert a.estimate == pytest.approx(b.estimate, abs=1e-14)
    assert a.se == pytest.approx(b.se, abs=1e-14)


def test_moment_p2_is_population_std():
    rng = np.random.default_rng(11)
    values = rng.normal(size=512)
    est = moment_estimate(SampleBatch(values), p=2, center="mean")
    assert est.estimate == pytest.approx(values.std(ddof=0), abs=1e-12)


def test_moment_constant_batch_zero():
    est = moment_estimate(SampleBatch(np.full(150, 2.0)), p=3, center="mean")
    assert est.estimate == 0.0
    assert est.ci == (0.0, 0.0)


def test_moment_exponential_oracle():
    # (E |X - 1|^3)^(1/3) for X ~ Exp(1), by quadrature
    target_cube, err = integrate.quad(
        lambda x: abs(x - 1.0) ** 3 * np.exp(-x), 0.0, np.inf
    )
    assert err < 1e-8
    target = target_cube ** (1.0 / 3.0)
    assert target == pytest.approx((12.0 / np.e - 2.0) ** (1 / 3), rel=1e-10)

    rng = RngStreamSpec(23, 0, "exp-moment").generator()
    values = rng.exponential(size=20_000)
    est = moment_estimate(SampleBatch(values), p=3, center=1.0)
    lo, hi = est.ci
    assert lo <= target <= hi
    assert lo <= est.estimate <= hi


def test_moment_bootstrap_reproducible():
    values = np.random.default_rng(3).normal(size=300)
    spec = RngStreamSpec(9, 0, "boot")
    a = moment_estimate(SampleBatch(values), p=4, rng=spec)
    b = moment_estimate(SampleBatch(values), p=4, rng=spec)
    assert a == b


def test_moment_bad_order():
    with pytest.raises(ConfigInvalidError):
        moment_estimate(SampleBatch(np.ones(200)), p=0.5)


def test_loglog_exact_lines():
    xs = np.array([1.0, 2.0, 4.0, 8.0, 16.0, 32.0])
    fit = loglog_fit(xs, xs)
    assert fit.slope == pytest.approx(1.0, abs=1e-12)
    assert fit.r2 == pytest.approx(1.0, abs=1e-12)
    assert fit.ci[0] <= fit.slope <= fit.ci[1]

    fit = loglog_fit(xs, xs**1.5)
    assert fit.slope == pytest.approx(1.5, abs=1e-12)
    assert fit.intercept == pytest.approx(0.0, abs=1e-10)


def test_loglog_noisy_power_law():
    rng = RngStreamSpec(31, 0, "loglog").generator()
    xs = np.geomspace(1.0, 1e3, 40)
    ys = xs**1.5 * (1.0 + 0.05 * rng.standard_normal(xs.size))
    fit = loglog_fit(xs, ys)
    assert 1.4 <= fit.slope <= 1.6
    assert fit.r2 >= 0.98


def test_loglog_rejects_bad_input():
    with pytest.raises(NonPositiveDataError):
        loglog_fit([1.0, 2.0, 3.0, 4.0, 0.0], [1.0] * 5)
    with pytest.raises(NonPositiveDataError):
        loglog_fit([1.0, 2.0, 3.0, 4.0, 5.0], [1.0, 1.0, -2.0, 1.0, 1.0])
    with pytest.raises(ConfigInvalidError):
        loglog_fit([1.0, 2.0, 3.0, 4.0], [1.0, 2.0, 3.0, 4.0])


def test_fit_report_shape():
    fit = loglog_fit(np.geomspace(1, 100, 10), np.geomspace(1, 100, 10) ** 0.5)
    assert isinstance(fit, FitReport)
    assert 0.0 <= fit.r2 <= 1.0
