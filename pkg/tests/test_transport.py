import itertools

import numpy as np
import pytest

from coupling_bounds.core import DegenerateError, RngStreamSpec, discrete_metric, validate_metric
from coupling_bounds.transport import (
    random_path_metric,
    tv_distance,
    wasserstein_dual,
    wasserstein_primal,
)


def _vertex_min_cost(a, b, cost):
    """Independent oracle: enumerate transportation-polytope vertices.

    Vertices are basic solutions supported on spanning trees of the
    complete bipartite graph; the flow on a tree is unique (peel leaves).
    Only usable for tiny instances.
    """
    n, m = cost.shape
    arcs = [(i, j) for i in range(n) for j in range(m)]
    best = np.inf
    for basis in itertools.combinations(arcs, n + m - 1):
        adj = {("s", i): [] for i in range(n)}
        adj.update({("t", j): [] for j in range(m)})
        for i, j in basis:
            adj[("s", i)].append(("t", j))
            adj[("t", j)].append(("s", i))
        seen, stack = set(), [("s", 0)]
        while stack:
            u = stack.pop()
            if u in seen:
                continue
            seen.add(u)
            stack.extend(adj[u])
        if len(seen) != n + m:
            continue
        bal = {("s", i): a[i] for i in range(n)}
        bal.update({("t", j): -b[j] for j in range(m)})
        local = {u: set(vs) for u, vs in adj.items()}
        flows = {}
        leaves = [u for u in local if len(local[u]) == 1]
        while leaves:
            u = leaves.pop()
            if not local[u]:
                continue
            v = next(iter(local[u]))
            x = bal[u] if u[0] == "s" else -bal[u]
            key = (u[1], v[1]) if u[0] == "s" else (v[1], u[1])
            flows[key] = x
            bal[v] += bal[u]
            bal[u] = 0.0
            local[v].discard(u)
            local[u].clear()
            if len(local[v]) == 1:
                leaves.append(v)
        if any(x < -1e-12 for x in flows.values()):
            continue
        best = min(best, sum(cost[i, j] * x for (i, j), x in flows.items()))
    return best


PATH3 = validate_metric(
    [[0.0, 1.0, 2.0], [1.0, 0.0, 1.0], [2.0, 1.0, 0.0]], mode="metric"
)


def test_point_masses_discrete_metric():
    plan = wasserstein_primal([1.0, 0.0], [0.0, 1.0], discrete_metric(2))
    assert plan.cost == pytest.approx(1.0, abs=1e-12)
    assert plan.matrix[0, 1] == pytest.approx(1.0, abs=1e-12)


def test_identical_marginals_zero_cost():
    mu = np.array([0.2, 0.3, 0.5])
    plan = wasserstein_primal(mu, mu, PATH3)
    assert plan.cost == pytest.approx(0.0, abs=1e-12)


def test_three_point_primal_frozen_value():
    # frozen from the spanning-tree vertex oracle below
    mu = np.array([0.5, 0.5, 0.0])
    nu = np.array([0.0, 0.5, 0.5])
    plan = wasserstein_primal(mu, nu, PATH3)
    assert plan.cost == pytest.approx(1.0, abs=1e-10)
    oracle = _vertex_min_cost(mu, nu, PATH3.rho)
    assert plan.cost == pytest.approx(oracle, abs=1e-10)


def test_three_point_dual_frozen_value():
    mu = np.array([0.5, 0.5, 0.0])
    nu = np.array([0.0, 0.5, 0.5])
    dual = wasserstein_dual(mu, nu, PATH3)
    assert dual.value == pytest.approx(1.0, abs=1e-10)
    slack = dual.f[:, None] - dual.f[None, :] - PATH3.rho
    assert slack.max() <= 1e-10


def test_dual_point_masses():
    dual = wasserstein_dual([1.0, 0.0], [0.0, 1.0], discrete_metric(2))
    assert dual.value == pytest.approx(1.0, abs=1e-10)
    assert dual.f[0] - dual.f[1] == pytest.approx(1.0, abs=1e-10)


def test_dual_identical_marginals():
    mu = [0.4, 0.6]
    dual = wasserstein_dual(mu, mu, discrete_metric(2))
    assert dual.value == pytest.approx(0.0, abs=1e-12)


def test_degenerate_mass_mismatch():
    with pytest.raises(DegenerateError):
        wasserstein_primal([0.7, 0.2], [0.5, 0.5], discrete_metric(2))


def test_strong_duality_random_instances():
    rng = RngStreamSpec(master_seed=2024, stream_tag="transport-duality").generator()
    for _ in range(300):
        n = int(rng.integers(2, 17))
        metric = random_path_metric(n, rng)
        mu = rng.dirichlet(np.ones(n))
        nu = rng.dirichlet(np.ones(n))
        plan = wasserstein_primal(mu, nu, metric)
        dual = wasserstein_dual(mu, nu, metric)
        assert plan.duality_gap <= 1e-8
        assert abs(plan.cost - dual.value) <= 1e-8 * max(1.0, plan.cost)
        np.testing.assert_allclose(plan.matrix.sum(axis=1), mu, atol=1e-10)
        np.testing.assert_allclose(plan.matrix.sum(axis=0), nu, atol=1e-10)
        assert plan.matrix.min() >= -1e-15


def test_symmetry_of_cost():
    rng = RngStreamSpec(master_seed=5, stream_tag="transport-symmetry").generator()
    for _ in range(25):
        n = int(rng.integers(2, 9))
        metric = random_path_metric(n, rng)
        mu = rng.dirichlet(np.ones(n))
        nu = rng.dirichlet(np.ones(n))
        c1 = wasserstein_primal(mu, nu, metric).cost
        c2 = wasserstein_primal(nu, mu, metric).cost
        assert c1 == pytest.approx(c2, abs=1e-10)


def test_triangle_inequality_over_distributions():
    rng = RngStreamSpec(master_seed=6, stream_tag="transport-triangle").generator()
    for _ in range(25):
        n = int(rng.integers(2, 9))
        metric = random_path_metric(n, rng)
        mu, nu, kappa = (rng.dirichlet(np.ones(n)) for _ in range(3))
        w_mn = wasserstein_primal(mu, nu, metric).cost
        w_mk = wasserstein_primal(mu, kappa, metric).cost
        w_kn = wasserstein_primal(kappa, nu, metric).cost
        assert w_mn <= w_mk + w_kn + 1e-9


def test_discrete_metric_specializes_to_tv():
    rng = RngStreamSpec(master_seed=8, stream_tag="transport-tv").generator()
    for _ in range(50):
        n = int(rng.integers(2, 13))
        mu = rng.dirichlet(np.ones(n))
        nu = rng.dirichlet(np.ones(n))
        cost = wasserstein_primal(mu, nu, discrete_metric(n)).cost
        assert cost == pytest.approx(tv_distance(mu, nu), abs=1e-10)


def test_vertex_oracle_agrees_on_random_small_instances():
    rng = RngStreamSpec(master_seed=9, stream_tag="transport-oracle").generator()
    for _ in range(10):
        metric = random_path_metric(3, rng)
        mu = rng.dirichlet(np.ones(3))
        nu = rng.dirichlet(np.ones(3))
        plan = wasserstein_primal(mu, nu, metric)
        oracle = _vertex_min_cost(mu, nu, metric.rho)
        assert plan.cost == pytest.approx(oracle, abs=1e-9)
