"""Orthonormal weight systems of the binomial-weighted polynomial.

At a point ``x = tan(theta)`` the normalized value and the orthogonalized
derivative of the polynomial are linear forms in the coefficients,
``g = sum mu_k c_k`` and ``h = sum lambda_k c_k``. All weights are built
from ``theta`` in log space,

    log|mu_k| = 1/2 log C(n, k) + k log|sin theta| + (n - k) log cos theta,

which stays finite for degrees in the tens of thousands where the
``x``-form overflows.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .errors import ContractError, DomainError

RELATIVE_CUTOFF = 1e-18


@dataclass(frozen=True)
class WeightTable:
    n: int
    theta: float
    mu: np.ndarray
    nu: np.ndarray
    lam: np.ndarray
    log_sigma_n: float
    log_zeta_n: float
    tau_n: float
    inner_mu_nu: float
    support_window: tuple[int, int]

    @property
    def x(self) -> float:
        return math.tan(self.theta)

    def window(self) -> slice:
        lo, hi = self.support_window
        return slice(lo, hi + 1)

    def bound_constant(self) -> float:
        """Smallest ``C`` with ``max|mu_k| <= C (1+x^2)^(1/2) n^(-1/4) |x|^(-1/2)``."""
        s, c = math.sin(self.theta), math.cos(self.theta)
        return float(np.max(np.abs(self.mu)) * self.n**0.25 * math.sqrt(abs(s * c)))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["k", "mu", "nu", "lambda"])
            for k in range(self.n + 1):
                w.writerow([k, repr(float(self.mu[k])), repr(float(self.nu[k])), repr(float(self.lam[k]))])


@dataclass(frozen=True)
class LimitWeightTable:
    y: float
    K: int
    m: np.ndarray
    l: np.ndarray  # noqa: E741
    tail_bound: float


def _log_binom_half(n: int) -> np.ndarray:
    k = np.arange(n + 1)
    return 0.5 * (special.gammaln(n + 1) - special.gammaln(k + 1) - special.gammaln(n - k + 1))


def build_weights(n: int, theta: float) -> WeightTable:
    """Weights ``mu``, ``nu``, ``lambda`` at ``x = tan(theta)`` for degree ``n``.

    ``theta = 0`` is accepted and yields the exact origin table
    (``mu = e_0``, ``lambda = nu = e_1``); the expression used for
    ``lambda`` never divides by ``sin(theta)``.
    """
    n = int(n)
    if n < 1:
        raise ContractError("degree must be >= 1")
    theta = float(theta)
    if not (-math.pi / 2 < theta < math.pi / 2) or math.isclose(abs(theta), math.pi / 2, abs_tol=1e-15):
        raise DomainError("theta must lie strictly inside (-pi/2, pi/2)")
    s, c = math.sin(theta), math.cos(theta)
    abs_s = abs(s)
    k = np.arange(n + 1, dtype=float)
    half_logc = _log_binom_half(n)
    log_c = math.log(c)

    with np.errstate(divide="ignore", invalid="ignore"):
        log_mu = half_logc + special.xlogy(k, abs_s) + (n - k) * log_c
        mu_sign = np.where((k % 2 == 1) & (s < 0), -1.0, 1.0)
        # lambda_k = sqrt(C) s^(k-1) c^(n-k-1) (k - n s^2) / sqrt(n)
        log_lam = np.empty(n + 1)
        log_lam[0] = 0.5 * math.log(n) + (math.log(abs_s) if s != 0 else -math.inf) + (n - 1) * log_c
        kk = k[1:]
        log_lam[1:] = (
            half_logc[1:]
            + special.xlogy(kk - 1, abs_s)
            + (n - kk - 1) * log_c
            + np.log(np.abs(kk - n * s * s))
            - 0.5 * math.log(n)
        )
        lam_sign = np.empty(n + 1)
        lam_sign[0] = -1.0 if s >= 0 else 1.0
        lam_sign[1:] = np.where(((kk - 1) % 2 == 1) & (s < 0), -1.0, 1.0) * np.sign(kk - n * s * s)

    top = float(np.max(log_mu))
    mu = mu_sign * np.exp(log_mu - top)
    lam = lam_sign * np.exp(log_lam - top)
    cutoff = math.log(RELATIVE_CUTOFF)
    keep = (log_mu - top > cutoff) | (log_lam - float(np.max(log_lam)) > cutoff)
    mu[~keep] = 0.0
    lam[~keep] = 0.0
    # Shared normalization, then a Gram-Schmidt polish at rounding level.
    scale = math.sqrt(float(np.dot(mu, mu)))
    mu /= scale
    lam /= scale
    lam -= float(np.dot(lam, mu)) * mu
    lam /= math.sqrt(float(np.dot(lam, lam)))

    x = math.tan(theta)
    inner = x * math.sqrt(n) / math.sqrt(1 + n * x * x)
    tau = 1.0 / math.sqrt(1 + n * x * x)
    nu = tau * lam + inner * mu
    idx = np.nonzero(keep)[0]
    return WeightTable(
        n=n,
        theta=theta,
        mu=mu,
        nu=nu,
        lam=lam,
        log_sigma_n=-n * log_c,
        log_zeta_n=0.5 * math.log(n) + 0.5 * math.log1p(n * x * x) - (n - 2) * log_c,
        tau_n=tau,
        inner_mu_nu=inner,
        support_window=(int(idx[0]), int(idx[-1])),
    )


def evaluate_scaled(weights: WeightTable, coeffs) -> tuple[float, float]:
    """``(g, h) = (sum mu_k c_k, sum lambda_k c_k)``."""
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.shape[0] != weights.n + 1:
        raise ContractError(f"expected {weights.n + 1} coefficients, got {coeffs.shape[0]}")
    w = weights.window()
    return float(weights.mu[w] @ coeffs[w]), float(weights.lam[w] @ coeffs[w])


def theta_rate(u: float, x: float) -> tuple[float, float]:
    """Rate function ``u ln u + (1-u) ln(1-u) + ln(1+x^2) - u ln x^2`` and its second u-derivative."""
    if not 0.0 < u < 1.0:
        raise DomainError("u must lie strictly inside (0, 1)")
    if x == 0:
        raise DomainError("x must be nonzero")
    value = u * math.log(u) + (1 - u) * math.log1p(-u) + math.log1p(x * x) - u * math.log(x * x)
    return value, 1.0 / (u * (1.0 - u))


def default_truncation(y: float) -> int:
    """Series length ``ceil(y^2 + 12|y| + 40)``; ``m_k`` peaks near ``k = y^2``."""
    return int(math.ceil(y * y + 12 * abs(y) + 40))


def _limit_terms(y: float, K: int):
    k = np.arange(K + 1, dtype=float)
    ay = abs(y)
    lgk = 0.5 * special.gammaln(k + 1)
    if y == 0:
        m = np.zeros(K + 1)
        lv = np.zeros(K + 1)
        m[0] = 1.0
        if K >= 1:
            lv[1] = 1.0
        return m, lv
    with np.errstate(divide="ignore"):
        log_m = k * math.log(ay) - lgk - 0.5 * y * y
        m = np.exp(log_m) * np.where((k % 2 == 1) & (y < 0), -1.0, 1.0)
        log_l = (k - 1) * math.log(ay) + np.log(np.abs(k - y * y)) - lgk - 0.5 * y * y
        l_sign = np.sign(k - y * y) * np.where(((k - 1) % 2 == 1) & (y < 0), -1.0, 1.0)
    lv = l_sign * np.exp(log_l)
    return m, lv


def build_limit_weights(y: float, tolerance: float = 1e-16, K: int | None = None) -> LimitWeightTable:
    """Limit weights ``m_k(y) = y^k e^{-y^2/2}/sqrt(k!)`` and ``l_k = m_k (k - y^2)/y``.

    The truncation index is the smallest ``K`` (at least the default
    series length unless ``K`` is given) whose dropped tails of
    ``sum m_k^2`` and ``sum l_k^2`` are below ``tolerance``.
    """
    if not tolerance > 0:
        raise ContractError("tolerance must be positive")
    y = float(y)
    k_max = int(math.ceil(y * y + 40 * abs(y) + 200))
    m, lv = _limit_terms(y, k_max)
    m2, l2 = m * m, lv * lv
    # tail[j] = sum over k > j
    tail_m = np.concatenate((np.cumsum(m2[::-1])[::-1][1:], [0.0]))
    tail_l = np.concatenate((np.cumsum(l2[::-1])[::-1][1:], [0.0]))
    if K is None:
        ok = np.nonzero((tail_m < tolerance) & (tail_l < tolerance))[0]
        K = max(int(ok[0]), default_truncation(y)) if ok.size else k_max
        K = min(K, k_max)
    K = int(K)
    if K > k_max:
        m, lv = _limit_terms(y, K)
        tail = 0.0
    else:
        tail = float(max(tail_m[K], tail_l[K]))
        m, lv = m[: K + 1], lv[: K + 1]
    return LimitWeightTable(y=y, K=K, m=m.copy(), l=lv.copy(), tail_bound=tail)


def limit_weight_error(y: float, n: int, k_max: int | None = None) -> float:
    """``max_k |mu_k(y/sqrt(n)) - m_k(y)|`` over ``k <= k_max``."""
    table = build_weights(n, math.atan(y / math.sqrt(n)))
    limit = build_limit_weights(y)
    top = min(limit.K, n) if k_max is None else min(k_max, n, limit.K)
    return float(np.max(np.abs(table.mu[: top + 1] - limit.m[: top + 1])))
