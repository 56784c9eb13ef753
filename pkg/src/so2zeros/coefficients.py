"""Coefficient laws for the random polynomial ensemble.

Every law is standardized (mean 0, variance 1) and exposes its density,
characteristic function with derivatives up to third order, a seeded
sampler and a cache of the low moments used by the origin density.

Three laws are built in (``gaussian``, ``uniform_symmetric``,
``quartic_exponential``); arbitrary tabulated densities are loaded with
:func:`load_custom_density`.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import integrate, special, stats

from .errors import ConfigurationError, ContractError, NumericError

SQRT3 = math.sqrt(3.0)

KINDS = ("gaussian", "uniform_symmetric", "quartic_exponential", "custom_density")

# Gauss-Legendre rule used on every quadrature panel.
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(16)


@dataclass(frozen=True)
class Moments:
    mean: float
    variance: float
    abs_first: float
    r0: float
    total_mass: float = 1.0


@dataclass(frozen=True)
class AffineCorrection:
    """Map applied to a tabulated density: ``c = (t - shift) / scale``."""

    shift: float
    scale: float
    normalization: float


class CoefficientDistribution:
    """Base class. Instances are immutable once constructed."""

    kind: str = ""
    is_even: bool = True

    def density(self, t):
        raise NotImplementedError

    def cdf(self, t):
        raise NotImplementedError

    def draw(self, rng: np.random.Generator, size) -> np.ndarray:
        raise NotImplementedError

    @property
    def moments(self) -> Moments:
        raise NotImplementedError

    def char_fn(self, s, order: int = 0):
        """``d^order phi / ds^order`` at ``s`` (array-valued)."""
        raise NotImplementedError

    def char_fn_values(self, s):
        """Fast vectorized ``phi(s)`` for building products on large grids."""
        return self.char_fn(s, 0)

    def __repr__(self):
        return f"{type(self).__name__}()"


class Gaussian(CoefficientDistribution):
    kind = "gaussian"

    def density(self, t):
        t = np.asarray(t, dtype=float)
        return np.exp(-0.5 * t * t) / math.sqrt(2 * math.pi)

    def cdf(self, t):
        return stats.norm.cdf(t)

    def draw(self, rng, size):
        return rng.standard_normal(size)

    @property
    def moments(self):
        return Moments(0.0, 1.0, math.sqrt(2 / math.pi), 1 / math.sqrt(2 * math.pi))

    def char_fn(self, s, order=0):
        _check_order(order)
        s = np.asarray(s, dtype=float)
        base = np.exp(-0.5 * s * s)
        # Hermite-type polynomial prefactors of the derivatives.
        poly = (1.0, -s, s * s - 1.0, 3.0 * s - s**3)[order]
        return poly * base

    def char_fn_values(self, s):
        s = np.asarray(s, dtype=float)
        return np.exp(-0.5 * s * s)


def _sinc_derivative(u, order):
    """``d^order/du^order`` of ``sin(u)/u``; a Taylor series covers small ``|u|``."""
    u = np.asarray(u, dtype=float)
    out = np.empty_like(u)
    small = np.abs(u) < 0.5
    us = u[small]
    acc = np.zeros_like(us)
    for m in range(13):
        p = 2 * m - order
        if p < 0:
            continue
        coef = (-1) ** m * math.factorial(2 * m) / (math.factorial(p) * math.factorial(2 * m + 1))
        acc += coef * us**p
    out[small] = acc
    ub = u[~small]
    sn, cs = np.sin(ub), np.cos(ub)
    if order == 0:
        val = sn / ub
    elif order == 1:
        val = cs / ub - sn / ub**2
    elif order == 2:
        val = -sn / ub - 2 * cs / ub**2 + 2 * sn / ub**3
    else:
        val = -cs / ub + 3 * sn / ub**2 + 6 * cs / ub**3 - 6 * sn / ub**4
    out[~small] = val
    return out


class UniformSymmetric(CoefficientDistribution):
    """Uniform law on ``[-sqrt(3), sqrt(3)]``."""

    kind = "uniform_symmetric"
    half_width = SQRT3

    def density(self, t):
        t = np.asarray(t, dtype=float)
        return np.where(np.abs(t) <= self.half_width, 1 / (2 * self.half_width), 0.0)

    def cdf(self, t):
        w = self.half_width
        return np.clip((np.asarray(t, dtype=float) + w) / (2 * w), 0.0, 1.0)

    def draw(self, rng, size):
        return rng.uniform(-self.half_width, self.half_width, size)

    @property
    def moments(self):
        w = self.half_width
        return Moments(0.0, w * w / 3, w / 2, 1 / (2 * w))

    def char_fn(self, s, order=0):
        _check_order(order)
        w = self.half_width
        return w**order * _sinc_derivative(w * np.asarray(s, dtype=float), order)

    def char_fn_values(self, s):
        u = self.half_width * np.asarray(s, dtype=float)
        return np.sinc(u / math.pi)


class _QuadratureCharFn(CoefficientDistribution):
    """Characteristic function by panel Gauss-Legendre quadrature of the density.

    Panels never exceed half an oscillation period ``pi/|s|``, so the rule
    stays accurate at the large ``|s|`` where decay conditions are fitted.
    Bulk evaluation goes through a cubic Hermite table of ``phi`` and
    ``phi'`` on ``[0, table_max]``; points beyond it fall back to direct
    quadrature.
    """

    table_step = 0.01
    table_max = 64.0
    quad_tolerance = 1e-10

    def _support(self) -> tuple[float, float]:
        raise NotImplementedError

    def _breakpoints(self) -> np.ndarray:
        lo, hi = self._support()
        return np.array([lo, hi])

    def _rule(self, s_max: float, refine: int = 1):
        bps = self._breakpoints()
        h = min(0.25, math.pi / max(s_max, 1.0)) / refine
        edges = []
        for a, b in zip(bps[:-1], bps[1:]):
            m = max(1, math.ceil((b - a) / h))
            edges.append(np.linspace(a, b, m + 1)[:-1])
        edges.append(bps[-1:])
        edges = np.concatenate(edges)
        a, b = edges[:-1], edges[1:]
        half = 0.5 * (b - a)
        t = (0.5 * (a + b))[:, None] + half[:, None] * _GL_NODES[None, :]
        w = half[:, None] * _GL_WEIGHTS[None, :]
        t = t.ravel()
        w = w.ravel() * self.density(t)
        return t, w

    def _quadrature(self, s, order, refine=1):
        s = np.atleast_1d(np.asarray(s, dtype=float))
        out = np.empty(s.shape, dtype=complex)
        if s.size == 0:
            return out
        t, w = self._rule(float(np.max(np.abs(s))), refine)
        wt = w * t**order
        # (i t)^order = i^order t^order
        phase = 1j**order
        chunk = max(1, 2_000_000 // t.size)
        for i in range(0, s.size, chunk):
            arg = np.outer(s[i : i + chunk], t)
            re = np.cos(arg) @ wt
            im = np.sin(arg) @ wt
            out[i : i + chunk] = phase * (re + 1j * im)
        return out

    def char_fn(self, s, order=0):
        _check_order(order)
        s_arr = np.asarray(s, dtype=float)
        flat = s_arr.ravel()
        coarse = self._quadrature(flat, order)
        fine = self._quadrature(flat, order, refine=2)
        resid = float(np.max(np.abs(coarse - fine))) if flat.size else 0.0
        if resid > self.quad_tolerance:
            raise NumericError(
                f"characteristic-function quadrature did not converge (residual {resid:.3e})",
                detail=resid,
            )
        val = fine.reshape(s_arr.shape)
        if self.is_even:
            return val.real
        return val

    @cached_property
    def _table(self):
        grid = np.arange(0.0, self.table_max + self.table_step / 2, self.table_step)
        phi = self._quadrature(grid, 0)
        dphi = self._quadrature(grid, 1)
        return grid, phi, dphi

    def char_fn_values(self, s):
        s = np.asarray(s, dtype=float)
        grid, phi, dphi = self._table
        a = np.abs(s)
        h = self.table_step
        inside = a < grid[-1]
        idx = np.minimum((a / h).astype(np.intp), grid.size - 2)
        u = a / h - idx
        u2, u3 = u * u, u * u * u
        h00 = 2 * u3 - 3 * u2 + 1
        h10 = u3 - 2 * u2 + u
        h01 = -2 * u3 + 3 * u2
        h11 = u3 - u2
        val = (
            h00 * phi[idx]
            + h10 * h * dphi[idx]
            + h01 * phi[idx + 1]
            + h11 * h * dphi[idx + 1]
        )
        if not np.all(inside):
            out = a[~inside]
            val[~inside] = self._quadrature(out, 0)
        if self.is_even:
            return val.real
        # phi(-s) = conj(phi(s))
        return np.where(s < 0, np.conj(val), val)


class QuarticExponential(_QuadratureCharFn):
    """Density ``exp(-beta t^4) / Z`` with ``beta`` and ``Z`` fixed for unit variance."""

    kind = "quartic_exponential"

    def __init__(self):
        # var(exp(-u^4)) fixes beta through var = beta^(-1/2) * var_1.
        m0 = integrate.quad(lambda u: math.exp(-(u**4)), -np.inf, np.inf, epsabs=1e-14, epsrel=1e-13)[0]
        m2 = integrate.quad(lambda u: u * u * math.exp(-(u**4)), -np.inf, np.inf, epsabs=1e-14, epsrel=1e-13)[0]
        self.beta = (m2 / m0) ** 2
        self.norm_const = integrate.quad(
            lambda t: math.exp(-self.beta * t**4), -np.inf, np.inf, epsabs=1e-14, epsrel=1e-13
        )[0]
        # exp(-beta T^4) = exp(-80) is far below double resolution of r(0).
        self._cut = (80.0 / self.beta) ** 0.25

    def _support(self):
        return -self._cut, self._cut

    def density(self, t):
        t = np.asarray(t, dtype=float)
        return np.exp(-self.beta * t**4) / self.norm_const

    def cdf(self, t):
        t = np.asarray(t, dtype=float)
        return 0.5 + 0.5 * np.sign(t) * special.gammainc(0.25, self.beta * t**4)

    def draw(self, rng, size):
        # Rejection from N(0,1): exp(-beta t^4 + t^2/2) peaks at exp(1/(16 beta)).
        shape = (size,) if np.isscalar(size) else tuple(size)
        total = int(np.prod(shape))
        log_m = 1.0 / (16.0 * self.beta)
        out = np.empty(total)
        filled = 0
        while filled < total:
            need = total - filled
            batch = int(need * 1.8) + 16
            t = rng.standard_normal(batch)
            u = rng.random(batch)
            keep = t[np.log(u) < -self.beta * t**4 + 0.5 * t * t - log_m]
            take = min(need, keep.size)
            out[filled : filled + take] = keep[:take]
            filled += take
        return out.reshape(shape)

    @cached_property
    def moments(self):
        r = lambda t: math.exp(-self.beta * t**4) / self.norm_const  # noqa: E731
        kw = dict(epsabs=1e-15, epsrel=1e-13)
        mass = integrate.quad(r, -np.inf, np.inf, **kw)[0]
        var = integrate.quad(lambda t: t * t * r(t), -np.inf, np.inf, **kw)[0]
        absf = 2 * integrate.quad(lambda t: t * r(t), 0, np.inf, **kw)[0]
        return Moments(0.0, var, absf, 1 / self.norm_const, mass)


class CustomDensity(_QuadratureCharFn):
    """Piecewise-linear density through tabulated knots.

    The table is renormalized, recentered and rescaled to unit variance on
    construction; :attr:`correction` records the affine map applied.
    Moments and the CDF of the interpolant are integrated exactly.
    """

    kind = "custom_density"
    is_even = False

    def __init__(self, t, r):
        t = np.asarray(t, dtype=float)
        r = np.asarray(r, dtype=float)
        if t.ndim != 1 or t.shape != r.shape or t.size < 2:
            raise ConfigurationError("custom density needs at least two (t, r) pairs")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(r))):
            raise ConfigurationError("custom density table contains non-finite values")
        if np.any(np.diff(t) <= 0):
            raise ConfigurationError("custom density abscissae must be strictly increasing")
        if np.any(r < 0):
            raise ConfigurationError("custom density has negative values")
        mass = _pl_moment(t, r, 0)
        if not mass > 0:
            raise ConfigurationError("custom density is not normalizable (zero mass)")
        mean = _pl_moment(t, r, 1) / mass
        var = _pl_moment(t, r, 2) / mass - mean**2
        if not var > 0:
            raise ConfigurationError("custom density has zero variance")
        sd = math.sqrt(var)
        self.correction = AffineCorrection(shift=mean, scale=sd, normalization=mass)
        self.knots = (t - mean) / sd
        self.values = r * sd / mass
        # Second pass removes the residual rounding of the first.
        m0 = _pl_moment(self.knots, self.values, 0)
        self.values = self.values / m0
        self.knots = self.knots - _pl_moment(self.knots, self.values, 1)
        s2 = math.sqrt(_pl_moment(self.knots, self.values, 2))
        self.knots = self.knots / s2
        self.values = self.values * s2
        self.is_even = bool(
            np.allclose(self.knots, -self.knots[::-1], atol=1e-12)
            and np.allclose(self.values, self.values[::-1], atol=1e-12)
        )
        cdf = np.concatenate(
            ([0.0], np.cumsum(0.5 * np.diff(self.knots) * (self.values[:-1] + self.values[1:])))
        )
        self._cdf_knots = cdf / cdf[-1]

    def _support(self):
        return float(self.knots[0]), float(self.knots[-1])

    def _breakpoints(self):
        return self.knots

    def density(self, t):
        return np.interp(np.asarray(t, dtype=float), self.knots, self.values, left=0.0, right=0.0)

    def cdf(self, t):
        t = np.asarray(t, dtype=float)
        k, v, c = self.knots, self.values, self._cdf_knots
        i = np.clip(np.searchsorted(k, t, side="right") - 1, 0, k.size - 2)
        dt = np.clip(t - k[i], 0.0, k[i + 1] - k[i])
        slope = (v[i + 1] - v[i]) / (k[i + 1] - k[i])
        val = c[i] + v[i] * dt + 0.5 * slope * dt * dt
        return np.where(t < k[0], 0.0, np.where(t >= k[-1], 1.0, val))

    def draw(self, rng, size):
        shape = (size,) if np.isscalar(size) else tuple(size)
        p = rng.random(shape)
        k, v, c = self.knots, self.values, self._cdf_knots
        i = np.clip(np.searchsorted(c, p, side="right") - 1, 0, k.size - 2)
        width = k[i + 1] - k[i]
        slope = (v[i + 1] - v[i]) / width
        rem = p - c[i]
        # Solve v_i d + slope d^2 / 2 = rem on the segment.
        disc = np.sqrt(np.maximum(v[i] ** 2 + 2 * slope * rem, 0.0))
        with np.errstate(divide="ignore", invalid="ignore"):
            d = np.where(np.abs(slope) > 1e-14, 2 * rem / (v[i] + disc), rem / np.where(v[i] > 0, v[i], 1.0))
        return k[i] + np.clip(d, 0.0, width)

    @cached_property
    def moments(self):
        k, v = self.knots, self.values
        return Moments(
            _pl_moment(k, v, 1),
            _pl_moment(k, v, 2),
            _pl_moment(k, v, 1, absolute=True),
            float(self.density(0.0)),
            _pl_moment(k, v, 0),
        )


def _pl_moment(t, r, power, absolute=False):
    """Exact ``int t^power r(t) dt`` for the linear interpolant of ``(t, r)``."""
    if absolute and t[0] < 0 < t[-1] and 0.0 not in t:
        j = np.searchsorted(t, 0.0)
        r0 = np.interp(0.0, t, r)
        t = np.insert(t, j, 0.0)
        r = np.insert(r, j, r0)
    # Three-point Gauss-Legendre is exact for the cubic integrand on each segment.
    x3, w3 = np.polynomial.legendre.leggauss(3)
    a, b = t[:-1], t[1:]
    half = 0.5 * (b - a)
    nodes = (0.5 * (a + b))[:, None] + half[:, None] * x3
    vals = np.interp(nodes, t, r)
    f = np.abs(nodes) if absolute else nodes
    return float(np.sum(half[:, None] * w3 * vals * f**power))


def _check_order(order):
    if order not in (0, 1, 2, 3):
        raise ContractError(f"derivative order must be in 0..3, got {order!r}")


_BUILTIN = {
    "gaussian": Gaussian,
    "uniform_symmetric": UniformSymmetric,
    "quartic_exponential": QuarticExponential,
}
_ALIASES = {"uniform": "uniform_symmetric", "quartic": "quartic_exponential", "normal": "gaussian"}
_CACHE: dict[str, CoefficientDistribution] = {}


def get_distribution(name: str) -> CoefficientDistribution:
    """Built-in law by name (aliases ``uniform``, ``quartic``, ``normal`` accepted)."""
    key = _ALIASES.get(name, name)
    if key not in _BUILTIN:
        raise ConfigurationError(f"unknown coefficient distribution {name!r}")
    if key not in _CACHE:
        _CACHE[key] = _BUILTIN[key]()
    return _CACHE[key]


def load_custom_density(path) -> CustomDensity:
    """Read a two-column ``t,r`` CSV (an optional header row is skipped)."""
    ts, rs = [], []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh)):
            if not row or not "".join(row).strip():
                continue
            try:
                t, r = float(row[0]), float(row[1])
            except (ValueError, IndexError):
                if lineno == 0:
                    continue
                raise ConfigurationError(f"{path}:{lineno + 1}: expected two numeric columns")
            ts.append(t)
            rs.append(r)
    return CustomDensity(ts, rs)


def resolve_distribution(spec: str) -> CoefficientDistribution:
    """Built-in name, or ``custom:<path>`` for a tabulated density."""
    if spec.startswith("custom:"):
        return load_custom_density(spec[len("custom:") :])
    return get_distribution(spec)


def sample(dist: CoefficientDistribution, count: int, seed: int) -> np.ndarray:
    """``count`` i.i.d. draws; bit-identical for a fixed ``(dist, count, seed)``."""
    if count < 1:
        raise ContractError("count must be positive")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    return dist.draw(rng, int(count))


def evaluate_char_fn(dist: CoefficientDistribution, s: float, derivative_order: int = 0) -> complex:
    """Derivative of order ``derivative_order`` of the characteristic function at ``s``."""
    _check_order(derivative_order)
    val = np.asarray(dist.char_fn(np.array([float(s)]), derivative_order))[0]
    return complex(val)


@dataclass(frozen=True)
class ConditionReport:
    """Outcome of fitting the characteristic-function decay conditions on a grid.

    ``c1_*``: ``|phi(s)| <= (1 + a s^2)^(-q)`` with the largest ladder ``q``
    whose fitted ``a`` does not degrade as the grid range doubles.
    ``cross0_*``: ``|phi^(j)(s)| <= A_j / (1 + |s|)^6`` for ``j = 0..3`` with
    ``A_j`` stable across the range.
    """

    s_max: float
    c1_holds: bool
    c1_q: float
    c1_a: float
    c1_fits: dict
    cross0_holds: bool
    cross0_constants: tuple
    c2_bound: float
    c3_bound: float
    unresolved_points: int


_Q_LADDER = (0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 3.0, 4.0, 6.0, 8.0)
_PHI_FLOOR = 1e-13


def verify_conditions(dist: CoefficientDistribution, s_grid) -> ConditionReport:
    """Fit the decay conditions on ``s_grid`` (must reach at least ``s = 50``)."""
    s = np.unique(np.abs(np.asarray(s_grid, dtype=float)))
    if s.size < 8 or s[-1] < 50:
        raise ContractError("s_grid must cover [0, S] with S >= 50")
    s_max = float(s[-1])
    derivs = [np.abs(np.asarray(dist.char_fn(s, j))) for j in range(4)]
    absphi = derivs[0]
    resolved = (absphi > _PHI_FLOOR) & (s > 0)
    half = s <= s_max / 2

    def fit_a(q, mask):
        sel = resolved & mask
        if not np.any(sel):
            return math.inf
        return float(np.min((absphi[sel] ** (-1.0 / q) - 1.0) / s[sel] ** 2))

    fits = {}
    best_q, best_a = 0.0, 0.0
    for q in _Q_LADDER:
        a_full, a_half = fit_a(q, np.ones_like(half)), fit_a(q, half)
        stable = a_full > 0 and a_full >= 0.75 * a_half
        fits[q] = (a_full, stable)
        if stable:
            best_q, best_a = q, a_full

    envelope = [(d * (1.0 + s) ** 6) for d in derivs]
    consts, ok = [], True
    for env in envelope:
        full, inner = float(np.max(env)), float(np.max(env[half]))
        consts.append(full)
        ok = ok and full <= 1.5 * inner
    return ConditionReport(
        s_max=s_max,
        c1_holds=best_q > 0,
        c1_q=best_q,
        c1_a=best_a,
        c1_fits=fits,
        cross0_holds=ok,
        cross0_constants=tuple(consts),
        c2_bound=float(np.max(derivs[2])),
        c3_bound=float(np.max(derivs[3])),
        unresolved_points=int(np.sum(~resolved & (s > 0))),
    )
