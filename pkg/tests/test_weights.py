import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from so2zeros.errors import ContractError, DomainError
from so2zeros.weights import (
    build_limit_weights,
    build_weights,
    default_truncation,
    evaluate_scaled,
    limit_weight_error,
    theta_rate,
)


def direct_weights(n, x):
    """Weights straight from the x-form; fine for small n only."""
    k = np.arange(n + 1)
    binom = np.array([math.comb(n, j) for j in k], dtype=float)
    sigma = (1 + x * x) ** (n / 2)
    mu = np.sqrt(binom) * x**k / sigma
    deriv = np.sqrt(binom) * k * x ** np.maximum(k - 1, 0)
    # E f'(x)^2 = n (1+x^2)^(n-2) (1 + n x^2)
    zeta = math.sqrt(n * (1 + n * x * x)) * (1 + x * x) ** ((n - 2) / 2)
    nu = deriv / zeta
    inner = x * math.sqrt(n) / math.sqrt(1 + n * x * x)
    tau = 1 / math.sqrt(1 + n * x * x)
    lam = (nu - inner * mu) / tau
    return mu, nu, lam


def identities(w):
    x = w.x
    n = w.n
    return np.array(
        [
            w.mu @ w.mu - 1,
            w.nu @ w.nu - 1,
            w.lam @ w.lam - 1,
            w.mu @ w.lam,
            w.mu @ w.nu - x * math.sqrt(n) / math.sqrt(1 + n * x * x),
        ]
    )


def test_degree_two_hand_table():
    w = build_weights(2, math.pi / 4)
    r = math.sqrt(2) / 2
    assert np.allclose(w.mu, [0.5, r, 0.5], atol=1e-15)
    assert np.allclose(w.lam, [-r, 0.0, r], atol=1e-15)
    assert np.max(np.abs(identities(w))) < 1e-15


def test_evaluate_scaled_hand_case():
    g, h = evaluate_scaled(build_weights(2, math.pi / 4), [1, 0, -1])
    assert g == pytest.approx(0.0, abs=1e-15)
    assert h == pytest.approx(-math.sqrt(2), abs=1e-15)


def test_evaluate_scaled_zero_coefficients():
    assert evaluate_scaled(build_weights(10, 0.3), np.zeros(11)) == (0.0, 0.0)


def test_evaluate_scaled_shape_checked():
    with pytest.raises(ContractError):
        evaluate_scaled(build_weights(4, 0.3), np.zeros(4))


@pytest.mark.parametrize("n", [1, 3, 8, 20])
@pytest.mark.parametrize("x", [-2.5, -0.4, 0.3, 1.0, 3.0])
def test_matches_direct_x_form(n, x):
    w = build_weights(n, math.atan(x))
    mu, nu, lam = direct_weights(n, x)
    assert np.max(np.abs(w.mu - mu)) < 1e-13
    assert np.max(np.abs(w.nu - nu)) < 1e-13
    assert np.max(np.abs(w.lam - lam)) < 1e-12


def test_origin_table():
    w = build_weights(7, 0.0)
    e0, e1 = np.eye(8)[0], np.eye(8)[1]
    assert np.array_equal(w.mu, e0)
    assert np.allclose(w.lam, e1, atol=0)
    assert np.allclose(w.nu, e1, atol=0)


@pytest.mark.parametrize("theta", [-math.pi / 2, math.pi / 2, 2.0])
def test_theta_domain(theta):
    with pytest.raises(DomainError):
        build_weights(5, theta)


def test_degree_validated():
    with pytest.raises(ContractError):
        build_weights(0, 0.1)


def test_identities_large_degree():
    assert np.max(np.abs(identities(build_weights(1000, 0.7)))) < 1e-12


def test_large_degree_stays_finite_and_localized():
    w = build_weights(4096, 0.1)
    assert np.all(np.isfinite(w.mu)) and np.all(np.isfinite(w.lam))
    lo, hi = w.support_window
    width = hi - lo + 1
    assert width < 12 * math.sqrt(4096 * math.log(4096))
    assert np.all(w.mu[: lo] == 0) and np.all(w.mu[hi + 1 :] == 0)


@given(
    st.integers(min_value=1, max_value=3000),
    st.floats(min_value=-1.5, max_value=1.5, allow_nan=False),
)
@settings(max_examples=80, deadline=None)
def test_identities_property(n, theta):
    assert np.max(np.abs(identities(build_weights(n, theta)))) < 1e-12


@given(st.integers(min_value=2, max_value=400), st.floats(min_value=0.05, max_value=1.5))
@settings(max_examples=40, deadline=None)
def test_reciprocal_symmetry(n, theta):
    # mu_k(x) = mu_{n-k}(1/x) for x > 0.
    a = build_weights(n, theta)
    b = build_weights(n, math.pi / 2 - theta)
    assert np.max(np.abs(a.mu - b.mu[::-1])) < 1e-12


def test_negative_theta_parity():
    a = build_weights(9, 0.4)
    b = build_weights(9, -0.4)
    k = np.arange(10)
    assert np.allclose(b.mu, a.mu * (-1.0) ** k, atol=1e-15)


def test_bound_constant_stable_across_degree():
    consts = [build_weights(n, 0.7).bound_constant() for n in (64, 256, 1024, 4096, 16384)]
    assert max(consts) / min(consts) < 1.05


def test_gaussian_value_and_derivative_are_orthonormal():
    w = build_weights(64, 0.7)
    rng = np.random.default_rng(1)
    c = rng.standard_normal((100_000, 65))
    g, h = c @ w.mu, c @ w.lam
    assert abs(g.var() - 1) < 0.02
    assert abs(h.var() - 1) < 0.02
    assert abs(np.mean(g * h)) < 0.02


def test_theta_rate_minimum_and_curvature():
    for x in (0.1, 1.0, 10.0):
        u0 = x * x / (1 + x * x)
        v, d2 = theta_rate(u0, x)
        assert v == pytest.approx(0.0, abs=1e-14)
        assert d2 == pytest.approx((1 + x * x) ** 2 / (x * x), rel=1e-12)
    assert theta_rate(0.5, 1.0)[1] == pytest.approx(4.0)


def test_theta_rate_convex():
    u = np.linspace(1e-3, 1 - 1e-3, 1000)
    for x in (0.1, 1.0, 10.0):
        assert all(theta_rate(float(v), x)[1] > 0 for v in u)


def test_theta_rate_domain():
    with pytest.raises(DomainError):
        theta_rate(0.0, 1.0)
    with pytest.raises(DomainError):
        theta_rate(0.5, 0.0)


def test_limit_weights_origin():
    t = build_limit_weights(0.0)
    assert t.m[0] == 1 and np.all(t.m[1:] == 0)
    assert t.l[1] == 1 and t.l[0] == 0 and np.all(t.l[2:] == 0)


def test_limit_weights_y_one():
    t = build_limit_weights(1.0)
    assert t.m[1] == pytest.approx(math.exp(-0.5), rel=1e-15)


@given(st.floats(min_value=-12, max_value=12, allow_nan=False).filter(lambda v: abs(v) > 1e-6))
@settings(max_examples=60, deadline=None)
def test_limit_weight_identities(y):
    t = build_limit_weights(y)
    tol = t.tail_bound + 1e-12
    assert abs(t.m @ t.m - 1) < tol
    assert abs(t.l @ t.l - 1) < tol
    assert abs(t.m @ t.l) < tol
    k = np.arange(t.K + 1)
    assert np.allclose(t.l, t.m * (k - y * y) / y, rtol=1e-12, atol=1e-300)


def test_limit_truncation_at_least_default():
    for y in (0.0, 1.0, 3.5, -7.0):
        assert build_limit_weights(y).K >= default_truncation(y)


def test_limit_weight_convergence_rate():
    errs = [limit_weight_error(1.0, n) for n in (1000, 2000, 4000)]
    for a, b in zip(errs, errs[1:]):
        assert a / b == pytest.approx(2.0, abs=0.3)


def test_to_csv_round_trip(tmp_path):
    w = build_weights(5, 0.3)
    p = tmp_path / "w.csv"
    w.to_csv(p)
    data = np.loadtxt(p, delimiter=",", skiprows=1)
    assert np.array_equal(data[:, 1], w.mu)
    assert np.array_equal(data[:, 3], w.lam)
