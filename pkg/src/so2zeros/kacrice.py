"""Semi-analytic zero densities from the Kac-Rice formula.

The pair ``(g, h)`` at a point is a weighted sum of i.i.d. coefficients,
so its joint characteristic function is a finite product

    Phi(alpha, beta) = prod_k phi(mu_k alpha + lambda_k beta).

Tabulating ``Phi`` on a square grid, integrating ``alpha`` out and
Fourier-inverting in ``beta`` gives the slice ``D(0, eta)`` of the joint
density, and the normalized zero density is

    p_n(x) / sqrt(n) = (1 + x^2)^(-1) * integral |eta| D(0, eta) d eta.

The same machinery, fed with the limit weights ``m_k(y), l_k(y)``, yields
the crossover density ``p_hat(y)`` near the origin.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .coefficients import CoefficientDistribution, Gaussian
from .errors import ContractError, NumericError
from .weights import LimitWeightTable, WeightTable, build_limit_weights, build_weights

DEFAULT_SIZE = 512
DEFAULT_CUTOFF = 12.0
BOUNDARY_TOL = 1e-12
MAX_DOUBLINGS = 3
MAX_SIZE = 2048
PAD_FACTOR = 8


@dataclass(frozen=True)
class SpectralGrid:
    """``Phi`` on ``[-cutoff, cutoff)^2``; ``values[i, j] = Phi(axis[i], axis[j])``."""

    cutoff: float
    size: int
    axis: np.ndarray
    values: np.ndarray
    source: tuple
    boundary_max: float
    a0: float
    L_fit: float

    @property
    def step(self) -> float:
        return 2 * self.cutoff / self.size


@dataclass(frozen=True)
class JointDensitySlice:
    eta: np.ndarray
    values: np.ndarray
    imag_residual: float
    tail_constant: float
    tail_constant_inner: float
    tail_constant_outer: float

    @property
    def step(self) -> float:
        return float(self.eta[1] - self.eta[0])

    @property
    def tail_stable(self) -> bool:
        return self.tail_constant <= self.tail_constant_inner * (1 + 1e-9)


def _weight_vectors(weights):
    if isinstance(weights, WeightTable):
        w = weights.window()
        return weights.mu[w], weights.lam[w], ("finite_n", weights.n, weights.theta)
    if isinstance(weights, LimitWeightTable):
        return weights.m, weights.l, ("limit", weights.y)
    raise ContractError("weights must be a WeightTable or LimitWeightTable")


def _phi_product(mu, lam, dist, alpha, beta):
    """``prod_k phi(mu_k alpha + lambda_k beta)`` on broadcast arrays."""
    keep = (mu != 0) | (lam != 0)
    mu, lam = mu[keep], lam[keep]
    if isinstance(dist, Gaussian):
        sq = np.zeros(np.broadcast(alpha, beta).shape)
        for m, l in zip(mu, lam):
            w = m * alpha + l * beta
            sq += w * w
        return np.exp(-0.5 * sq)
    out = None
    for m, l in zip(mu, lam):
        val = dist.char_fn_values(m * alpha + l * beta)
        out = val if out is None else out * val
    if out is None:
        return np.ones(np.broadcast(alpha, beta).shape)
    return out


def _evaluate_grid(mu, lam, dist, cutoff, size):
    d = 2 * cutoff / size
    axis = (np.arange(size) - size // 2) * d
    half = size // 2
    # Hermitian symmetry: Phi(-gamma) = conj Phi(gamma); columns 1..half-1 mirror half+1..size-1.
    cols = np.concatenate(([0], np.arange(half, size)))
    A, B = np.meshgrid(axis, axis[cols], indexing="ij")
    part = _phi_product(mu, lam, dist, A, B)
    dtype = complex if np.iscomplexobj(part) else float
    values = np.empty((size, size), dtype=dtype)
    values[:, cols] = part
    # (i, j) <- conj (size - i, size - j) for i, j >= 1
    mirror_src = values[:, half + 1 :][1:][::-1, ::-1]
    values[1:, 1:half] = np.conj(mirror_src) if dtype is complex else mirror_src
    # Row 0 (alpha = -cutoff) at those columns has no mirror on the grid.
    if half > 1:
        values[0, 1:half] = _phi_product(mu, lam, dist, axis[0], axis[1:half])
    return axis, values


def _boundary_max(values):
    a = np.abs(values)
    return float(max(a[0].max(), a[-1].max(), a[:, 0].max(), a[:, -1].max()))


def _fit_decay(axis, values, L=2.0, radius=None):
    """Largest ``a0`` with ``|Phi| <= (1 + a0 |gamma|^2)^(-L)`` on the grid (optionally within ``radius``)."""
    A, B = np.meshgrid(axis, axis, indexing="ij")
    r2 = A * A + B * B
    mag = np.abs(values)
    sel = (r2 > 0) & (mag > 0)
    if radius is not None:
        sel &= r2 <= radius * radius
    if not np.any(sel):
        return math.inf
    with np.errstate(over="ignore"):
        ratio = (mag[sel] ** (-1.0 / L) - 1.0) / r2[sel]
    return float(np.min(ratio))


def _envelope_exponent(axis, values):
    """Power-law exponent ``L`` of the ring-maximum envelope, ``max|Phi| ~ r^(-2L)``."""
    A, B = np.meshgrid(axis, axis, indexing="ij")
    r = np.hypot(A, B)
    cutoff = float(axis[-1])
    edges = np.linspace(cutoff / 4, cutoff, 13)
    rs, env = [], []
    mag = np.abs(values)
    for lo, hi in zip(edges[:-1], edges[1:]):
        ring = (r >= lo) & (r < hi)
        m = float(mag[ring].max()) if np.any(ring) else 0.0
        if m > 1e-290:
            rs.append(0.5 * (lo + hi))
            env.append(m)
    if len(rs) < 3:
        return math.inf
    slope = np.polyfit(np.log(rs), np.log(env), 1)[0]
    return float(-slope / 2)


def build_spectral_grid(
    weights,
    dist: CoefficientDistribution,
    cutoff: float = DEFAULT_CUTOFF,
    size: int = DEFAULT_SIZE,
) -> SpectralGrid:
    """Tabulate the joint characteristic function of ``(g, h)``.

    The cutoff is doubled (together with the size, up to ``MAX_SIZE``) at
    most ``MAX_DOUBLINGS`` times until ``|Phi|`` on the grid boundary is
    below ``BOUNDARY_TOL``.
    """
    if size < 128 or size & (size - 1):
        raise ContractError("size must be a power of two >= 128")
    if not cutoff > 0:
        raise ContractError("cutoff must be positive")
    mu, lam, source = _weight_vectors(weights)
    for attempt in range(MAX_DOUBLINGS + 1):
        axis, values = _evaluate_grid(mu, lam, dist, cutoff, size)
        bmax = _boundary_max(values)
        if bmax < BOUNDARY_TOL:
            break
        if attempt == MAX_DOUBLINGS:
            raise NumericError(
                f"|Phi| = {bmax:.3e} on the boundary of the cutoff {cutoff:g} grid",
                detail=bmax,
            )
        cutoff *= 2
        size = min(2 * size, MAX_SIZE)
    return SpectralGrid(
        cutoff=float(cutoff),
        size=int(size),
        axis=axis,
        values=values,
        source=source,
        boundary_max=bmax,
        a0=_fit_decay(axis, values),
        L_fit=_envelope_exponent(axis, values),
    )


def invert_to_density_slice(grid: SpectralGrid, pad: int = PAD_FACTOR) -> JointDensitySlice:
    """``D(0, eta) = (2 pi)^-2 iint Phi(alpha, beta) e^{-i beta eta} d alpha d beta``.

    ``alpha`` is integrated by the trapezoid rule (``Phi`` is negligible at
    the boundary, so this is a plain sum); the ``beta`` transform is a
    zero-padded FFT, giving ``eta`` spacing ``pi / (pad * cutoff)``.
    """
    d = grid.step
    F = grid.values.sum(axis=0) * d
    N = grid.size
    M = pad * N
    G = np.zeros(M, dtype=complex)
    G[M // 2 - N // 2 : M // 2 + N // 2] = F
    # beta_j = (j - M/2) d  =>  sum_j G_j e^{-i beta_j eta_m} = (-1)^m FFT(G)_m
    m = np.arange(-M // 2, M // 2)
    spec = np.fft.fft(G)[m % M] * np.where(m % 2 == 0, 1.0, -1.0)
    D = spec * d / (2 * math.pi) ** 2
    eta = m * (2 * math.pi / (M * d))
    imag = float(np.max(np.abs(D.imag)))
    if imag > 1e-6:
        raise NumericError(f"inverted density has imaginary part {imag:.3e} (aliasing)", detail=imag)
    vals = D.real
    weight = np.abs(vals) * (1 + np.abs(eta)) ** 3
    inner = np.abs(eta) <= eta[-1] / 2
    return JointDensitySlice(
        eta=eta,
        values=vals,
        imag_residual=imag,
        tail_constant=float(weight.max()),
        tail_constant_inner=float(weight[inner].max()),
        tail_constant_outer=float(weight[~inner].max()),
    )


def abs_eta_moment(slice_: JointDensitySlice) -> float:
    """``integral |eta| D(0, eta) d eta`` with kink and tail corrections.

    Trapezoid sums of ``|eta| D`` miss ``h^2 D(0) / 6`` at the kink; past the
    grid edge ``H`` the tail model ``C / (1 + |eta|)^3`` with the outer
    fitted ``C`` contributes ``2 C (1/(1+H) - 1/(2 (1+H)^2))``.
    """
    h = slice_.step
    eta, D = slice_.eta, slice_.values
    total = h * float(np.sum(np.abs(eta) * D))
    total += h * h * float(D[eta.size // 2]) / 6.0
    H = float(min(abs(eta[0]), abs(eta[-1])))
    total += 2 * slice_.tail_constant_outer * (1 / (1 + H) - 0.5 / (1 + H) ** 2)
    return total


def density_at_origin(n: int, dist: CoefficientDistribution) -> float:
    """``p_n(0) / sqrt(n) = r(0) E|c|`` (exact for every ``n``)."""
    m = dist.moments
    return m.r0 * m.abs_first


def density(
    n: int,
    theta: float,
    dist: CoefficientDistribution,
    cutoff: float = DEFAULT_CUTOFF,
    size: int = DEFAULT_SIZE,
) -> float:
    """Normalized density ``p_n(x)/sqrt(n)`` of real zeros at ``x = tan(theta)``."""
    if theta == 0:
        return density_at_origin(n, dist)
    table = build_weights(n, theta)
    grid = build_spectral_grid(table, dist, cutoff, size)
    return math.cos(theta) ** 2 * abs_eta_moment(invert_to_density_slice(grid))


def density_with_error(n, theta, dist, cutoff=DEFAULT_CUTOFF, size=DEFAULT_SIZE):
    """``(value, delta)`` where ``delta`` is the change under doubling both size and cutoff."""
    v = density(n, theta, dist, cutoff, size)
    v2 = density(n, theta, dist, 2 * cutoff, 2 * size)
    return v2, abs(v2 - v)


def crossover_density(
    y: float,
    dist: CoefficientDistribution,
    tolerance: float = 1e-16,
    cutoff: float = DEFAULT_CUTOFF,
    size: int = DEFAULT_SIZE,
) -> float:
    """Zero density ``p_hat(y)`` of the limiting field near the origin.

    Goes through the spectral inversion at every ``y`` including 0, so laws
    whose ``phi`` decays slowly (the uniform law) raise ``NumericError``
    at small ``|y|``; :func:`kac_rice_conditional_mc` covers those.
    """
    table = build_limit_weights(y, tolerance)
    grid = build_spectral_grid(table, dist, cutoff, size)
    return abs_eta_moment(invert_to_density_slice(grid))


@dataclass(frozen=True)
class MonteCarloValue:
    value: float
    stderr: float


def kac_rice_conditional_mc(weights, dist: CoefficientDistribution, samples: int, seed: int) -> MonteCarloValue:
    """``integral |eta| D(0, eta) d eta`` by integrating one coefficient out exactly.

    With ``j`` the index of the largest ``|mu_j|``, the constraint ``g = 0``
    fixes ``c_j = -R / mu_j`` (``R`` the rest of the sum), so

        integral |eta| D(0, eta) = E[ r(-R/mu_j) / |mu_j| * |h(c_j = -R/mu_j)| ]

    over the remaining coefficients. This is independent of the spectral
    route and works for any density, smooth or not.
    """
    mu, lam, _ = _weight_vectors(weights)
    j = int(np.argmax(np.abs(mu)))
    rest = np.ones(mu.size, dtype=bool)
    rest[j] = False
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    vals = []
    chunk = max(1, 4_000_000 // max(mu.size, 1))
    left = samples
    while left > 0:
        k = min(chunk, left)
        c = dist.draw(rng, (k, int(rest.sum())))
        R = c @ mu[rest]
        cj = -R / mu[j]
        h = c @ lam[rest] + lam[j] * cj
        vals.append(dist.density(cj) / abs(mu[j]) * np.abs(h))
        left -= k
    v = np.concatenate(vals)
    return MonteCarloValue(float(v.mean()), float(v.std(ddof=1) / math.sqrt(v.size)))


@dataclass(frozen=True)
class DecayAudit:
    a0: float
    a0_inner: float
    L: float
    L_fit: float
    bound_holds: bool
    derivative_constants: dict
    derivative_stable: dict


def decay_audit(grid: SpectralGrid, derivative_orders=(0,), L: float = 2.0) -> DecayAudit:
    """Check ``|D^k Phi(gamma)| <= C_k (1 + a0 |gamma|^2)^(-L)`` on the grid.

    ``a0`` is fitted on the inner half-radius disc and the bound is then
    required to hold on the whole grid. Derivatives (orders 1 and 2, along
    both axes) are central differences; ``C_k`` is fitted likewise inside
    and must not grow on the outer ring.
    """
    orders = set(derivative_orders)
    if not orders <= {0, 1, 2}:
        raise ContractError("derivative orders must be a subset of {0, 1, 2}")
    axis, values = grid.axis, grid.values
    a_inner = _fit_decay(axis, values, L, radius=grid.cutoff / 2)
    a_full = _fit_decay(axis, values, L)
    A, B = np.meshgrid(axis, axis, indexing="ij")
    r2 = A * A + B * B
    bound = (1 + a_inner * r2) ** (-L)
    holds = bool(np.all(np.abs(values) <= bound * (1 + 1e-9) + 1e-300))
    consts, stable = {}, {}
    d = grid.step
    inner = r2 <= (grid.cutoff / 2) ** 2
    for k in sorted(orders - {0}):
        worst, worst_inner = 0.0, 0.0
        for ax in (0, 1):
            der = values
            for _ in range(k):
                der = np.gradient(der, d, axis=ax)
            scaled = np.abs(der) / bound
            worst = max(worst, float(scaled.max()))
            worst_inner = max(worst_inner, float(scaled[inner].max()))
        consts[k] = worst
        stable[k] = bool(np.isfinite(worst) and worst <= worst_inner * (1 + 1e-6))
    return DecayAudit(a_full, a_inner, L, grid.L_fit, holds, consts, stable)


def write_density_curve(path, coords, values, errors, coord_name="x") -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([coord_name, "value", "error"])
        for c, v, e in zip(coords, values, errors):
            w.writerow([repr(float(c)), repr(float(v)), repr(float(e))])
