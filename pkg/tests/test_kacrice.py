import math

import numpy as np
import pytest
from scipy import integrate

from so2zeros.coefficients import get_distribution
from so2zeros.errors import ContractError, NumericError
from so2zeros.kacrice import (
    abs_eta_moment,
    build_spectral_grid,
    crossover_density,
    decay_audit,
    density,
    density_at_origin,
    density_with_error,
    invert_to_density_slice,
    kac_rice_conditional_mc,
    write_density_curve,
)
from so2zeros.weights import build_limit_weights, build_weights

GAUSS = get_distribution("gaussian")
UNIFORM = get_distribution("uniform")
QUARTIC = get_distribution("quartic")


def cauchy(x):
    return 1 / (math.pi * (1 + x * x))


@pytest.mark.parametrize("x", [0.25, 0.5, 1.0, 2.0])
def test_gaussian_density_is_cauchy(x):
    v = density(32, math.atan(x), GAUSS)
    assert abs(v / cauchy(x) - 1) < 1e-3


def test_gaussian_grid_is_exact_exponential():
    w = build_weights(20, 0.4)
    grid = build_spectral_grid(w, GAUSS, cutoff=8.0, size=128)
    A, B = np.meshgrid(grid.axis, grid.axis, indexing="ij")
    # |mu| = |lambda| = 1 and mu . lambda = 0, so Phi = exp(-|gamma|^2 / 2).
    assert np.max(np.abs(grid.values - np.exp(-0.5 * (A * A + B * B)))) < 1e-14


def test_gaussian_slice_at_zero():
    # (g, h) standard bivariate normal: D(0, 0) = 1 / (2 pi).
    s = invert_to_density_slice(build_spectral_grid(build_weights(16, 0.3), GAUSS))
    assert s.values[s.eta.size // 2] == pytest.approx(1 / (2 * math.pi), abs=1e-10)
    assert abs_eta_moment(s) == pytest.approx(1 / math.pi, rel=1e-6)


def test_non_gaussian_grid_is_hermitian():
    grid = build_spectral_grid(build_weights(24, 0.5), QUARTIC, cutoff=10.0, size=128)
    v = grid.values
    # Phi(-gamma) = conj Phi(gamma) for indices i, j >= 1.
    assert np.max(np.abs(v[1:, 1:] - np.conj(v[1:, 1:][::-1, ::-1]))) < 1e-13


@pytest.mark.parametrize(
    "name,expected",
    [("gaussian", 1 / math.pi), ("uniform", 0.25)],
)
def test_origin_values(name, expected):
    for n in (1, 7, 1000):
        assert density_at_origin(n, get_distribution(name)) == pytest.approx(expected, abs=1e-12)


def test_origin_value_quartic_by_quadrature():
    q = QUARTIC
    r0 = float(q.density(0.0))
    abs1 = 2 * integrate.quad(lambda t: t * float(q.density(t)), 0, 15)[0]
    assert density_at_origin(64, q) == pytest.approx(r0 * abs1, rel=1e-9)


@pytest.mark.parametrize("y", [0.0, 1.0, 2.0, 4.0])
def test_gaussian_crossover_is_flat(y):
    assert crossover_density(y, GAUSS) == pytest.approx(1 / math.pi, abs=1e-3)


def test_quartic_crossover_endpoints():
    assert crossover_density(0.0, QUARTIC) == pytest.approx(density_at_origin(1, QUARTIC), abs=1e-3)
    assert abs(crossover_density(4.0, QUARTIC) - 1 / math.pi) < 0.03


def test_uniform_crossover_at_origin_fails_loudly():
    with pytest.raises(NumericError):
        crossover_density(0.0, UNIFORM)


def test_uniform_crossover_origin_by_conditional_mc():
    v = kac_rice_conditional_mc(build_limit_weights(0.0), UNIFORM, 200_000, seed=4)
    assert abs(v.value - 0.25) < 4 * v.stderr + 1e-4


def test_finite_n_approaches_crossover():
    y = 2.0
    target = crossover_density(y, QUARTIC)
    gaps = [abs(density(n, math.atan(y / math.sqrt(n)), QUARTIC) - target) for n in (1000, 4000, 16000)]
    assert gaps[0] > gaps[1] > gaps[2]


@pytest.mark.parametrize("x", [0.5, 1.0, 3.0])
def test_spectral_matches_conditional_mc(x):
    w = build_weights(48, math.atan(x))
    spectral = abs_eta_moment(invert_to_density_slice(build_spectral_grid(w, QUARTIC)))
    mc = kac_rice_conditional_mc(w, QUARTIC, 200_000, seed=9)
    assert abs(spectral - mc.value) < 4 * mc.stderr


def test_conditional_mc_on_limit_weights_matches_spectral():
    t = build_limit_weights(1.5)
    spectral = crossover_density(1.5, QUARTIC)
    mc = kac_rice_conditional_mc(t, QUARTIC, 200_000, seed=2)
    assert abs(spectral - mc.value) < 4 * mc.stderr


def test_uniform_universality_away_from_origin():
    gaps = [abs(density(n, math.pi / 4, UNIFORM) - 1 / (2 * math.pi)) for n in (64, 256, 1024)]
    assert gaps[0] > gaps[1] > gaps[2]
    assert gaps[2] < 0.02


def test_refinement_stability():
    v, delta = density_with_error(64, 0.6, QUARTIC)
    assert delta < 1e-4
    assert v > 0


@pytest.mark.parametrize("name", ["uniform", "quartic"])
@pytest.mark.parametrize("n", [64, 256])
def test_decay_audits_hold(name, n):
    grid = build_spectral_grid(build_weights(n, math.atan(1.0)), get_distribution(name))
    audit = decay_audit(grid, (0, 1, 2))
    assert audit.bound_holds
    assert all(audit.derivative_stable.values())
    assert invert_to_density_slice(grid).tail_stable


def test_decay_audit_orders_validated():
    grid = build_spectral_grid(build_weights(8, 0.3), GAUSS, size=128)
    with pytest.raises(ContractError):
        decay_audit(grid, (3,))


def test_grid_arguments_validated():
    w = build_weights(8, 0.3)
    with pytest.raises(ContractError):
        build_spectral_grid(w, GAUSS, size=100)
    with pytest.raises(ContractError):
        build_spectral_grid(w, GAUSS, cutoff=0.0)
    with pytest.raises(ContractError):
        build_spectral_grid(np.ones(3), GAUSS)


def test_density_curve_csv(tmp_path):
    p = tmp_path / "d.csv"
    write_density_curve(p, [0.5, 1.0], [0.2, 0.1], [1e-6, 2e-6])
    rows = p.read_text().strip().splitlines()
    assert rows[0] == "x,value,error"
    assert float(rows[2].split(",")[1]) == 0.1
