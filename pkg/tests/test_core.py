import numpy as np
import pytest

from coupling_bounds.core import (
    ConfigInvalidError,
    DegenerateError,
    DimensionMismatchError,
    NegativeOffDiagonalError,
    RngStreamSpec,
    RowSumNonzeroError,
    SemimetricOnlyError,
    discrete_metric,
    finite_vector_observable,
    validate_generator,
    validate_metric,
    validate_prob_vector,
    worker_count,
)


def test_validate_generator_symmetric_two_state():
    gen = validate_generator([[-1.0, 1.0], [1.0, -1.0]])
    assert gen.n == 2
    np.testing.assert_allclose(gen.q.sum(axis=1), 0.0, atol=0.0)


def test_validate_generator_bad_row_sum():
    with pytest.raises(RowSumNonzeroError):
        validate_generator([[-1.0, 2.0], [1.0, -1.0]])


def test_validate_generator_frozen_chain():
    gen = validate_generator([[0.0, 0.0], [0.0, 0.0]])
    assert gen.uniformization_rate() == 0.0


def test_validate_generator_negative_rate():
    with pytest.raises(NegativeOffDiagonalError):
        validate_generator([[1.0, -1.0], [1.0, -1.0]])


def test_validate_generator_not_square():
    with pytest.raises(DimensionMismatchError):
        validate_generator([[0.0, 0.0, 0.0], [0.0, 0.0, 0.0]])


def test_validate_generator_idempotent():
    rng = np.random.default_rng(7)
    q = rng.uniform(0.0, 2.0, size=(5, 5))
    np.fill_diagonal(q, 0.0)
    np.fill_diagonal(q, -q.sum(axis=1))
    gen1 = validate_generator(q)
    gen2 = validate_generator(gen1.q)
    np.testing.assert_array_equal(gen1.q, gen2.q)


def test_validate_generator_repairs_subtolerance_residue():
    q = np.array([[-1.0 + 1e-14, 1.0], [1.0, -1.0]])
    gen = validate_generator(q)
    assert gen.q.sum(axis=1).max() == 0.0


def test_prob_vector_checks():
    v = validate_prob_vector([0.25, 0.75])
    assert v.n == 2
    with pytest.raises(DegenerateError):
        validate_prob_vector([0.5, 0.6])
    with pytest.raises(DegenerateError):
        validate_prob_vector([-0.1, 1.1])
    with pytest.raises(DimensionMismatchError):
        validate_prob_vector([0.5, 0.5], n=3)


def test_metric_validation():
    m = validate_metric([[0.0, 1.0], [1.0, 0.0]], mode="metric")
    assert m.mode == "metric"
    with pytest.raises(DegenerateError):
        validate_metric([[0.0, -1.0], [-1.0, 0.0]])
    with pytest.raises(DegenerateError):
        validate_metric([[0.0, 1.0], [2.0, 0.0]])
    # triangle violated: rho(0,2) = 10 > 1 + 1
    bad = [[0.0, 1.0, 10.0], [1.0, 0.0, 1.0], [10.0, 1.0, 0.0]]
    with pytest.raises(SemimetricOnlyError):
        validate_metric(bad, mode="metric")
    ok = validate_metric(bad, mode="semimetric")
    assert ok.mode == "semimetric"


def test_discrete_metric_is_metric():
    m = discrete_metric(4)
    assert m.mode == "metric"
    assert m.rho[0, 1] == 1.0 and m.rho[2, 2] == 0.0


def test_observable_requires_positive_horizon():
    from coupling_bounds.core import NonPositiveParameterError

    with pytest.raises(NonPositiveParameterError):
        finite_vector_observable([1.0, 0.0], 0.0)
    obs = finite_vector_observable([1.0, 0.0], 2.0)
    assert obs.kind == "finite_vector"
    scaled = obs.scaled(0.5)
    np.testing.assert_allclose(scaled.values, [0.5, 0.0])


def test_rng_stream_bit_reproducibility():
    spec = RngStreamSpec(master_seed=12345, replica_index=3, stream_tag="paths")
    a = spec.generator().random(64)
    b = spec.generator().random(64)
    np.testing.assert_array_equal(a, b)


def test_rng_stream_distinct_triples_differ():
    base = RngStreamSpec(master_seed=12345)
    a = base.generator().random(32)
    b = base.replica(1).generator().random(32)
    c = base.tagged("other").generator().random(32)
    assert not np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert not np.array_equal(b, c)


def test_rng_stream_rejects_bad_fields():
    with pytest.raises(ConfigInvalidError):
        RngStreamSpec(master_seed=1, replica_index=-1)


def test_worker_count_env(monkeypatch):
    monkeypatch.setenv("COUPLING_BOUNDS_THREADS", "1")
    assert worker_count() == 1
    monkeypatch.setenv("COUPLING_BOUNDS_THREADS", "zero")
    with pytest.raises(ConfigInvalidError):
        worker_count()
