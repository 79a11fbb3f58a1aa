import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from corpus import random_model
from spinlab.errors import ParameterError
from spinlab.exact import (chain_diagnostics, correlation_form, covariance_matrix, exact_distribution,
                           field_dynamics_kernel, field_dynamics_parts, glauber_kernel, influence_matrix,
                           lambda_max, linear_statistic_variance, log_partition, phi_entropy, proximal_kernel,
                           reversibility_error, restrict, si_lambda_max, stationarity_error, to_csv)
from spinlab.graphs import make_graph
from spinlab.models import hardcore, ising, ising_matrix

EDGE = make_graph(2, [(0, 1)])
ONE = make_graph(1, [])


def test_distribution_examples():
    assert exact_distribution(hardcore(ONE, 4.0)).probs[1] == pytest.approx(0.8)
    p = exact_distribution(hardcore(EDGE, 4.0)).probs
    assert np.allclose(p, [1 / 9, 4 / 9, 4 / 9, 0.0], atol=1e-15)
    b = 0.3
    p = exact_distribution(ising(EDGE, b)).probs
    z = 2 * math.exp(b) + 2 * math.exp(-b)
    assert np.allclose(p, [math.exp(b) / z, math.exp(-b) / z, math.exp(-b) / z, math.exp(b) / z])


def test_log_partition_examples():
    assert log_partition(hardcore(EDGE, 4.0)) == pytest.approx(math.log(9))
    assert log_partition(hardcore(make_graph(5, []), 2.0)) == pytest.approx(5 * math.log(3))
    assert log_partition(ising(ONE, 0.0)) == pytest.approx(math.log(2))
    assert log_partition(hardcore(EDGE, 4.0), {0: 1, 1: 1}) == -math.inf


def test_influence_and_covariance_examples():
    m = hardcore(EDGE, 4.0)
    psi = influence_matrix(m)
    assert psi[0, 1] == pytest.approx(-0.8) and psi[1, 0] == pytest.approx(-0.8)
    assert psi[0, 0] == 1.0
    # diagonal-1 convention: eigenvalues 1 +- 4/5
    assert lambda_max(psi) == pytest.approx(1.8)
    assert covariance_matrix(m, "01")[0, 1] == pytest.approx(-16 / 81)
    two = hardcore(make_graph(2, []), 1.0)
    assert np.allclose(influence_matrix(two), np.eye(2))
    assert si_lambda_max(two) == pytest.approx(1.0)
    # vertex 1 is forced out when 0 is pinned occupied: its row is zero
    path = hardcore(make_graph(3, [(0, 1), (1, 2)]), 1.0)
    from spinlab.models import apply_pinning
    sub, free = apply_pinning(path, {0: 1})
    assert free == [2]
    tri = hardcore(make_graph(2, [(0, 1)]), np.array([1.0, 1e-300]))
    assert np.all(influence_matrix(tri)[1] == 0)


def test_rank_one_influence():
    u = np.array([0.5, 0.5])
    psi = influence_matrix(ising_matrix(np.outer(u, u)))
    assert psi[0, 1] == pytest.approx(math.tanh(0.25), abs=1e-12)
    assert lambda_max(psi) <= 2


@given(st.integers(0, 2**31))
def test_ratio_identity_and_si_equivalence(seed):
    rng = np.random.default_rng(seed)
    m = random_model(rng)
    psi = influence_matrix(m)
    C = covariance_matrix(m, "01")
    var = np.diag(C)
    for i in range(m.n):
        if var[i] > 1e-12:
            assert np.allclose(psi[i], C[i] / var[i], atol=1e-10)
    assert lambda_max(psi) == pytest.approx(np.linalg.eigvalsh(correlation_form(m)).max(), abs=1e-8)
    assert np.allclose(covariance_matrix(m, "pm"), 4 * C)
    assert np.linalg.eigvalsh(C).min() > -1e-9


@given(st.integers(0, 2**31))
def test_quadratic_form_two_ways(seed):
    rng = np.random.default_rng(seed)
    m = random_model(rng)
    s = rng.choice([-1.0, 1.0], size=m.n)
    dist = exact_distribution(m)
    assert s @ covariance_matrix(m, "pm", dist) @ s == pytest.approx(linear_statistic_variance(dist, s), abs=1e-10)


def test_glauber_kernel_examples():
    m = hardcore(ONE, 4.0)
    K = glauber_kernel(m)
    assert np.allclose(K.matrix, [[0.2, 0.8], [0.2, 0.8]])
    d = chain_diagnostics(K, exact_distribution(m))
    assert d.gap == pytest.approx(1.0) and d.tensorization_constant == pytest.approx(1.0)
    m = hardcore(EDGE, 4.0)
    dist = exact_distribution(m)
    K = glauber_kernel(m, dist)
    assert list(K.states) == [0, 1, 2]
    # hand-built chain on {empty, {u}, {v}}
    hand = np.array([[0.2, 0.4, 0.4], [0.1, 0.9, 0.0], [0.1, 0.0, 0.9]])
    assert np.allclose(K.matrix, hand, atol=1e-15)
    assert reversibility_error(K, restrict(dist, K.states)) < 1e-15


def test_field_dynamics_examples():
    m = hardcore(ONE, 3.0)
    K = field_dynamics_kernel(m, 0.4)
    pi = np.array([1, 3]) / 4
    assert np.allclose(pi @ K.matrix, pi, atol=1e-12)
    K = field_dynamics_kernel(hardcore(EDGE, 4.0), 1 - 1e-9)
    off = K.matrix - np.diag(np.diag(K.matrix))
    assert off.sum(axis=1).max() < 1e-6
    m = hardcore(EDGE, 4.0)
    dist = exact_distribution(m)
    K = field_dynamics_kernel(m, 0.5, dist)
    pi = restrict(dist, K.states)
    assert stationarity_error(K, pi) < 1e-12 and reversibility_error(K, pi) < 1e-10
    with pytest.raises(ParameterError):
        field_dynamics_kernel(m, 1.0)


def test_proximal_kernel_examples():
    m = ising_matrix([[0.7]])
    K = proximal_kernel(m)
    assert np.allclose(np.array([0.5, 0.5]) @ K.matrix, [0.5, 0.5], atol=1e-12)
    u = np.array([1.0, 1.0]) / 2
    m = ising_matrix(np.outer(u, u))
    K = proximal_kernel(m)
    pi = exact_distribution(m).probs
    assert np.abs(pi @ K.matrix - pi).max() < 1e-6
    tiny = ising_matrix(1e-12 * np.ones((3, 3)), [0.2, -0.1, 0.0])
    K = proximal_kernel(tiny)
    assert np.ptp(K.matrix, axis=0).max() < 1e-9


def test_diagnostics_tv_curve_monotone():
    rng = np.random.default_rng(4)
    for _ in range(5):
        m = random_model(rng, n=5, kind="hardcore")
        dist = exact_distribution(m)
        d = chain_diagnostics(glauber_kernel(m, dist), dist)
        assert np.all(np.diff(d.tv_curve) <= 1e-12)
        assert 0 < d.gap <= 1


def test_diagnostics_rejects_non_stationary():
    m = hardcore(EDGE, 4.0)
    K = glauber_kernel(m)
    with pytest.raises(ParameterError):
        chain_diagnostics(K, np.ones(3) / 3)


def test_phi_entropy_examples():
    mu = np.array([0.5, 0.5])
    assert phi_entropy(mu, [3.0, 3.0]) == pytest.approx(0.0)
    assert phi_entropy(mu, [0.0, 2.0]) == pytest.approx(math.log(2))
    f = np.array([1.0, 4.0])
    assert phi_entropy(mu, f, "variance") == pytest.approx(2.25)
    with pytest.raises(ParameterError):
        phi_entropy(mu, [-1.0, 1.0])


@given(st.integers(0, 2**31), st.floats(0.05, 0.95))
def test_entropy_contraction_and_total_entropy(seed, theta):
    rng = np.random.default_rng(seed)
    m = random_model(rng, n=int(rng.integers(1, 7)), kind="hardcore")
    parts = field_dynamics_parts(m, theta)
    K = parts.P @ parts.Q
    f = rng.exponential(size=len(parts.states))
    for kind in ("variance", "entropy"):
        assert phi_entropy(parts.mu, K @ f, kind) <= phi_entropy(parts.mu, f, kind) + 1e-12
        lhs = phi_entropy(parts.mu, f, kind)
        rhs = phi_entropy(parts.mu_theta, parts.Q @ f, kind) + sum(
            parts.mu_theta[s] * phi_entropy(parts.Q[s], f, kind) for s in range(len(parts.states)))
        assert lhs == pytest.approx(rhs, abs=1e-9)


def test_to_csv(tmp_path):
    to_csv(np.array([[1 / 3, 2.0]]), tmp_path / "m.csv")
    assert (tmp_path / "m.csv").read_text().strip() == "0.33333333333333331,2"
