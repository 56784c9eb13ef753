"""The limiting Gaussian field and the correlation functions of its zeros.

In scaled coordinates the zero process converges to the zeros of the
stationary field ``g`` with ``h = g'`` and covariances

    a(y_i, y_j) = E g_i g_j = exp(-d^2/2),
    b(y_i, y_j) = E g_i h_j = d exp(-d^2/2),
    c(y_i, y_j) = E h_i h_j = (1 - d^2) exp(-d^2/2),        d = y_i - y_j.

The m-point correlation is the Gaussian density of ``(g_1..g_m)`` at 0
times ``E |h_1 ... h_m|`` under the conditional law of ``h`` given
``g = 0``; the conditional covariance is the Schur complement of the
``2m x 2m`` block matrix.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy import special
from scipy.stats import qmc

from .coefficients import CoefficientDistribution
from .errors import ContractError, DegeneracyError, NumericError
from .roots import refine_brackets
from .weights import build_limit_weights

MIN_SEPARATION = 1e-3
SCAN_STEP = 0.05
ZERO_TOL = 1e-10
TRUNCATION_SHIFT_TOL = 1e-8


def kernel_entries(y_i: float, y_j: float, n: int | None = None) -> tuple[float, float, float]:
    """Covariances ``(a, b, c)``; finite-degree versions when ``n`` is given."""
    d = float(y_i) - float(y_j)
    if n is None:
        e = math.exp(-0.5 * d * d)
        return e, d * e, (1 - d * d) * e
    t = d / math.sqrt(n)
    cn = math.cos(t) ** n
    tn = math.tan(t)
    return cn, math.sqrt(n) * tn * cn, (1 / math.cos(t) ** 2 - n * tn * tn) * cn


@dataclass(frozen=True)
class LimitKernel:
    points: np.ndarray
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    Delta: np.ndarray
    min_eigenvalue: float
    n: int | None = None


def build_kernel(points, n: int | None = None) -> LimitKernel:
    y = np.asarray(points, dtype=float).ravel()
    if y.size < 1:
        raise ContractError("at least one point is required")
    if y.size > 1:
        sep = np.abs(y[:, None] - y[None, :])[np.triu_indices(y.size, 1)]
        if np.min(sep) < MIN_SEPARATION:
            raise DegeneracyError(
                f"points closer than {MIN_SEPARATION:g}; the covariance is numerically singular",
                detail=float(np.min(sep)),
            )
    m = y.size
    A, B, C = (np.empty((m, m)) for _ in range(3))
    for i in range(m):
        for j in range(m):
            A[i, j], B[i, j], C[i, j] = kernel_entries(y[i], y[j], n)
    Delta = np.block([[A, B], [B.T, C]])
    return LimitKernel(y, A, B, C, Delta, float(np.linalg.eigvalsh(Delta)[0]), n)


def _conditional(kernel: LimitKernel):
    """Density of ``g`` at 0 and the covariance of ``h`` given ``g = 0``."""
    A, B, C = kernel.A, kernel.B, kernel.C
    m = A.shape[0]
    sign, logdet = np.linalg.slogdet(A)
    if sign <= 0:
        raise DegeneracyError("value covariance is not positive definite")
    p0 = math.exp(-0.5 * m * math.log(2 * math.pi) - 0.5 * logdet)
    cov = C - B.T @ np.linalg.solve(A, B)
    return p0, 0.5 * (cov + cov.T)


def expected_abs_product_2d(s1: float, s2: float, rho: float) -> float:
    """``E|Z_1 Z_2|`` for centered normals with scales ``s1, s2`` and correlation ``rho``."""
    rho = max(-1.0, min(1.0, rho))
    return (2 / math.pi) * s1 * s2 * (math.sqrt(1 - rho * rho) + rho * math.asin(rho))


@dataclass(frozen=True)
class CorrelationValue:
    value: float
    error: float


def limit_correlation(points, method: str = "auto", samples: int = 2**20, seed: int = 0) -> CorrelationValue:
    """Limiting m-point correlation ``K_m`` of zeros at ``points``.

    ``method`` is ``closed_form_m1``, ``closed_form_m2``, ``conditioned_mc``
    or ``auto`` (closed form when available). The Monte Carlo route
    averages ``|prod h_i|`` over scrambled Sobol draws of the conditional
    Gaussian; ``error`` is the spread over 16 independent scramblings.
    """
    y = np.atleast_1d(np.asarray(points, dtype=float))
    m = y.size
    if method == "auto":
        method = {1: "closed_form_m1", 2: "closed_form_m2"}.get(m, "conditioned_mc")
    if method == "closed_form_m1":
        if m != 1:
            raise ContractError("closed_form_m1 needs exactly one point")
        return CorrelationValue(1 / math.pi, 0.0)
    kernel = build_kernel(y)
    p0, cov = _conditional(kernel)
    if method == "closed_form_m2":
        if m != 2:
            raise ContractError("closed_form_m2 needs exactly two points")
        s1, s2 = math.sqrt(max(cov[0, 0], 0.0)), math.sqrt(max(cov[1, 1], 0.0))
        rho = cov[0, 1] / (s1 * s2) if s1 > 0 and s2 > 0 else 0.0
        return CorrelationValue(p0 * expected_abs_product_2d(s1, s2, rho), 0.0)
    if method != "conditioned_mc":
        raise ContractError(f"unknown method {method!r}")
    w, V = np.linalg.eigh(cov)
    root = V * np.sqrt(np.clip(w, 0.0, None))
    reps = 16
    per = 1 << max(4, math.ceil(math.log2(max(samples, reps) / reps)))
    children = np.random.SeedSequence(seed).spawn(reps)
    means = []
    for child in children:
        u = qmc.Sobol(m, scramble=True, rng=np.random.default_rng(child)).random(per)
        z = special.ndtri(np.clip(u, 1e-300, 1 - 1e-16))
        eta = z @ root.T
        means.append(float(np.mean(np.abs(np.prod(eta, axis=1)))))
    means = np.asarray(means)
    return CorrelationValue(p0 * float(means.mean()), p0 * float(means.std(ddof=1) / math.sqrt(reps)))


def bin_averaged_pair_correlation(y1: float, y2: float, width: float, nodes: int = 6) -> float:
    """Average of the closed-form ``K_2`` over the square of two bins of ``width``."""
    x, w = np.polynomial.legendre.leggauss(nodes)
    half = width / 2
    total = 0.0
    for xi, wi in zip(x, w):
        for xj, wj in zip(x, w):
            total += wi * wj * limit_correlation([y1 + half * xi, y2 + half * xj], "closed_form_m2").value
    return total / 4


def write_pair_curve(path, separations, values, errors) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["separation", "K2", "error"])
        for s, v, e in zip(separations, values, errors):
            w.writerow([repr(float(s)), repr(float(v)), repr(float(e))])


# -- sampling the truncated limit series -------------------------------------


def _series_eval(y, coeffs_t, trial, K):
    """``g(y) = e^{-y^2/2} sum_{k<=K} c_k y^k / sqrt(k!)`` by a Horner recursion."""
    acc = coeffs_t[K][trial].astype(float)
    for k in range(K - 1, -1, -1):
        acc = coeffs_t[k][trial] + (y / math.sqrt(k + 1)) * acc
    return acc * np.exp(-0.5 * y * y)


@dataclass(frozen=True)
class LimitZeroBatch:
    window: tuple[float, float]
    trials: int
    K: int
    trial: np.ndarray
    zeros: np.ndarray
    max_truncation_shift: float

    def zeros_of(self, i: int) -> np.ndarray:
        return self.zeros[self.trial == i]

    @property
    def counts(self) -> np.ndarray:
        return np.bincount(self.trial, minlength=self.trials)


def sample_limit_zero_batch(
    window,
    dist: CoefficientDistribution,
    trials: int,
    seed: int,
    tolerance: float = 1e-16,
    first_trial: int = 0,
) -> LimitZeroBatch:
    """Zeros in ``window`` of ``trials`` independent realizations of the limit series.

    Trial ``i`` draws its coefficients from ``SeedSequence(seed, spawn_key=(i,))``.
    Each realization carries ``2K + 1`` coefficients: the first ``K + 1`` define
    the reported zeros, the full set re-refines them as a truncation audit.
    """
    lo, hi = float(window[0]), float(window[1])
    if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
        raise ContractError("window must be a bounded interval")
    K = build_limit_weights(max(abs(lo), abs(hi)), tolerance).K
    K2 = 2 * K
    coeffs = np.empty((K2 + 1, trials))
    for i in range(trials):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(first_trial + i,)))
        coeffs[:, i] = dist.draw(rng, K2 + 1)
    m = max(1, int(math.ceil((hi - lo) / SCAN_STEP)))
    grid = np.linspace(lo, hi, m + 1)
    lw = [build_limit_weights(float(g), K=K).m for g in grid]
    values = np.asarray(lw) @ coeffs[: K + 1]
    sg = np.sign(values)
    gi, tr = np.nonzero(sg[:-1] * sg[1:] < 0)
    if gi.size == 0:
        empty = np.array([], dtype=float)
        return LimitZeroBatch((lo, hi), trials, K, np.array([], dtype=np.intp), empty, 0.0)

    def ev(kk):
        return lambda p, t: _series_eval(p, coeffs, t, kk)

    a, b = grid[gi], grid[gi + 1]
    fa, fb = ev(K)(a, tr), ev(K)(b, tr)
    roots, _ = refine_brackets(a, b, fa, fb, ev(K), tr, tol=ZERO_TOL, residual_tol=1e-9)
    ga, gb = ev(K2)(a, tr), ev(K2)(b, tr)
    if np.any(ga * gb >= 0):
        raise NumericError("doubling the series length changed the sign pattern on the scan grid")
    roots2, _ = refine_brackets(a, b, ga, gb, ev(K2), tr, tol=ZERO_TOL, residual_tol=1e-9)
    shift = float(np.max(np.abs(roots2 - roots)))
    if shift > TRUNCATION_SHIFT_TOL:
        raise NumericError(f"zeros moved by {shift:.3e} when the series length was doubled", detail=shift)
    order = np.lexsort((roots, tr))
    return LimitZeroBatch((lo, hi), trials, K, tr[order], roots[order], shift)


def sample_limit_zeros(window, dist: CoefficientDistribution, tolerance: float = 1e-16, seed: int = 0) -> np.ndarray:
    """Sorted zeros in ``window`` of one realization of the truncated limit series."""
    return sample_limit_zero_batch(window, dist, 1, seed, tolerance).zeros
