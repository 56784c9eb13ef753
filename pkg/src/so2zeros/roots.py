"""Real zeros of one or many polynomial realizations.

Zeros are located on the circle ``theta = arctan x`` by scanning the
normalized polynomial ``g_n(theta) = sum mu_k(theta) c_k`` (unit variance,
bounded range) on a uniform grid, bracketing sign changes and refining
each bracket with an Illinois regula falsi step safeguarded by bisection.

The batched entry point :func:`find_zeros` is what the Monte Carlo harness
uses; :func:`scan_and_refine` wraps it for a single coefficient vector.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import ContractError, NumericError
from .weights import build_weights

THETA_TOL = 1e-12
RESIDUAL_TOL = 1e-10
# A cell whose Hermite interpolant stays this far from zero cannot hide a
# zero pair: the interpolation error is ~ (pi/grid_factor)^4 / 384 ~ 1e-5.
DIP_MARGIN = 1e-3
DIP_SUBDIVISIONS = 32
_HERMITE_U = np.linspace(0.0, 1.0, 65)
MAX_ITER = 200
HALF_PI = math.pi / 2


@dataclass(frozen=True)
class ZeroSample:
    n: int
    seed: int | None
    zeros_theta: np.ndarray
    zeros_x: np.ndarray
    residuals: np.ndarray
    scan_grid_step: float
    at_infinity: bool = False

    @property
    def count(self) -> int:
        return int(self.zeros_theta.size)

    def to_csv(self, path, trial: int = 0) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["trial", "theta", "x", "residual"])
            for th, x, r in zip(self.zeros_theta, self.zeros_x, self.residuals):
                w.writerow([trial, repr(float(th)), repr(float(x)), repr(float(r))])


@dataclass
class ZeroBatch:
    """Zeros of a batch of realizations.

    ``theta`` holds refined locations where ``refined`` is true and bracket
    midpoints elsewhere (brackets that lie inside a single bin of interest
    need no refinement). ``counts`` is the per-trial number of zeros found
    in the scanned window.
    """

    trial: np.ndarray
    theta: np.ndarray
    residual: np.ndarray
    refined: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    counts: np.ndarray
    grid_step: float
    extra: dict = field(default_factory=dict)


def grid_size(n: int, grid_factor: int) -> int:
    return int(math.ceil(grid_factor * math.sqrt(n)))


@lru_cache(maxsize=32)
def _scan_matrix(n: int, grid_factor: int, window: tuple[float, float] | None):
    """Grid nodes with rows of ``mu`` (value) and ``sqrt(n) lambda`` (theta-derivative)."""
    m = grid_size(n, grid_factor)
    step = math.pi / m
    if window is None:
        i0, i1 = 0, m
    else:
        i0 = max(0, int(math.floor((window[0] + HALF_PI) / step)))
        i1 = min(m, int(math.ceil((window[1] + HALF_PI) / step)))
    idx = np.arange(i0, i1 + 1)
    theta = -HALF_PI + idx * step
    theta[idx == m] = HALF_PI
    rows = np.zeros((theta.size, n + 1))
    drows = np.zeros((theta.size, n + 1))
    rn = math.sqrt(n)
    for j, th in enumerate(theta):
        if abs(th) >= HALF_PI - 1e-15:
            # g(+-pi/2 - t) = (+-1)^n g_rev(t) with g_rev'(0) = sqrt(n) c_{n-1}
            sgn = 1.0 if th > 0 or n % 2 == 0 else -1.0
            rows[j, n] = sgn
            drows[j, n - 1] = -sgn * rn
        else:
            w = build_weights(n, th)
            rows[j] = w.mu
            drows[j] = rn * w.lam
    for a in (rows, drows, theta):
        a.setflags(write=False)
    return theta, rows, drows, step


def _horner(theta, coeffs_t, trial, reverse):
    """``g`` at ``|theta| <= pi/4`` with term ratios ``sqrt((n-k)/(k+1)) tan(theta)``."""
    n = coeffs_t.shape[0] - 1
    t = np.tan(theta)
    acc = coeffs_t[0 if reverse else n][trial].astype(float)
    log_scale = np.zeros_like(acc)
    ks = np.arange(n)
    ratio = np.sqrt((n - ks) / (ks + 1.0))
    for k in range(n - 1, -1, -1):
        row = n - k if reverse else k
        acc = coeffs_t[row][trial] + (ratio[k] * t) * acc
        if k % 64 == 0:
            big = np.abs(acc) > 1e150
            if np.any(big):
                acc = np.where(big, acc * 1e-150, acc)
                log_scale = np.where(big, log_scale + 150 * math.log(10), log_scale)
    # Rescaled terms are only ever shrunk while the tail still adds c_k of order one;
    # that lost precision is far below any zero-finding tolerance.
    return acc * np.exp(n * np.log(np.cos(theta)) + log_scale)


def evaluate_g(theta, coeffs_t, trial) -> np.ndarray:
    """Normalized polynomial ``g_n`` at points ``theta`` for the given trials.

    ``coeffs_t`` has shape ``(n+1, trials)``; ``trial[j]`` selects the
    coefficient column for ``theta[j]``.
    """
    theta = np.asarray(theta, dtype=float)
    trial = np.asarray(trial, dtype=np.intp)
    n = coeffs_t.shape[0] - 1
    out = np.empty_like(theta)
    inner = np.abs(theta) <= math.pi / 4
    if np.any(inner):
        out[inner] = _horner(theta[inner], coeffs_t, trial[inner], reverse=False)
    outer = ~inner
    if np.any(outer):
        th = theta[outer]
        pos = th > 0
        # theta' = +-pi/2 - theta swaps sin and cos; negative side picks up (-1)^n.
        reflected = np.where(pos, HALF_PI - th, -HALF_PI - th)
        sign = np.where(pos, 1.0, -1.0 if n % 2 else 1.0)
        out[outer] = sign * _horner(reflected, coeffs_t, trial[outer], reverse=True)
    return out


def refine_brackets(a, b, fa, fb, evaluate, trial, tol=THETA_TOL, residual_tol=RESIDUAL_TOL):
    """Vectorized Illinois iteration with bisection fallback on brackets ``[a, b]``.

    ``evaluate(points, trial)`` returns the function values; ``fa * fb < 0``
    on entry. Returns the refined roots and their recomputed residuals.
    """
    a, b, fa, fb = a.copy(), b.copy(), fa.copy(), fb.copy()
    width = np.abs(b - a)
    force_bisect = np.zeros(a.shape, dtype=bool)
    done = (width <= tol) | (fa == 0) | (fb == 0)
    for _ in range(MAX_ITER):
        act = np.nonzero(~done)[0]
        if act.size == 0:
            break
        aa, bb, ffa, ffb = a[act], b[act], fa[act], fb[act]
        denom = ffb - ffa
        with np.errstate(divide="ignore", invalid="ignore"):
            c = (aa * ffb - bb * ffa) / denom
        lo, hi = np.minimum(aa, bb), np.maximum(aa, bb)
        bad = force_bisect[act] | ~np.isfinite(c) | (c <= lo) | (c >= hi)
        c = np.where(bad, 0.5 * (aa + bb), c)
        fc = evaluate(c, trial[act])
        cross = fc * ffb < 0
        # Root between c and b: b becomes the retained endpoint a.
        new_a = np.where(cross, bb, aa)
        new_fa = np.where(cross, ffb, np.where(bad, ffa, 0.5 * ffa))
        a[act], fa[act] = new_a, new_fa
        b[act], fb[act] = c, fc
        new_width = np.abs(b[act] - a[act])
        force_bisect[act] = new_width > 0.5 * width[act]
        width[act] = new_width
        converged = (fc == 0) | ((new_width <= tol) & (np.abs(fc) < residual_tol))
        converged |= new_width <= 1e-3 * tol
        converged |= new_width <= 4 * np.spacing(np.maximum(np.abs(a[act]), np.abs(b[act])))
        done[act] = converged
    if not np.all(done):
        bad = np.nonzero(~done)[0]
        raise NumericError(
            f"{bad.size} bracket(s) failed to converge in {MAX_ITER} iterations",
            detail=[(float(a[i]), float(b[i])) for i in bad[:10]],
        )
    pick_b = np.abs(fb) <= np.abs(fa)
    root = np.where(pick_b, b, a)
    # Illinois halves stored endpoint values, so residuals are recomputed.
    resid = np.abs(evaluate(root, trial))
    return root, resid


def _dip_brackets(theta, values, dvalues, sg, coeffs_t):
    """Brackets for zero pairs that fall between two scan nodes.

    A cell whose end values share a sign but where ``|g|`` falls into the
    cell and rises out of it is screened with the cubic Hermite
    interpolant; cells that come within ``DIP_MARGIN`` of zero are
    subdivided and their sign changes returned.
    """
    empty = np.array([]), np.array([]), np.array([], dtype=np.intp)
    same = sg[:-1] * sg[1:] > 0
    s = sg[:-1]
    dip = same & (s * dvalues[:-1] < 0) & (s * dvalues[1:] > 0)
    ci, ct = np.nonzero(dip)
    if ci.size == 0:
        return empty
    h = theta[ci + 1] - theta[ci]
    u = _HERMITE_U[:, None]
    u2, u3 = u * u, u * u * u
    p = (
        (2 * u3 - 3 * u2 + 1) * values[ci, ct]
        + (u3 - 2 * u2 + u) * h * dvalues[ci, ct]
        + (-2 * u3 + 3 * u2) * values[ci + 1, ct]
        + (u3 - u2) * h * dvalues[ci + 1, ct]
    )
    close = np.min(s[ci, ct] * p, axis=0) < DIP_MARGIN
    ci, ct = ci[close], ct[close]
    if ci.size == 0:
        return empty
    sub = np.linspace(0.0, 1.0, DIP_SUBDIVISIONS + 1)[1:-1]
    pts = theta[ci][:, None] + (theta[ci + 1] - theta[ci])[:, None] * sub
    fv = evaluate_g(pts.ravel(), coeffs_t, np.repeat(ct, sub.size)).reshape(pts.shape)
    full = np.column_stack((values[ci, ct], fv, values[ci + 1, ct]))
    nodes = np.column_stack((theta[ci], pts, theta[ci + 1]))
    fs = np.sign(full)
    r, k = np.nonzero(fs[:, :-1] * fs[:, 1:] < 0)
    return nodes[r, k], nodes[r, k + 1], ct[r]


def find_zeros(
    coeffs,
    n: int,
    grid_factor: int = 20,
    window: tuple[float, float] | None = None,
    refine_edges=None,
) -> ZeroBatch:
    """Locate the real zeros of every row of ``coeffs`` (shape ``(trials, n+1)``).

    ``window`` restricts the scan to ``theta`` in that interval.
    ``refine_edges``, when given, is a sorted array of ``theta`` cut points:
    only brackets containing a cut point are refined, which is all a
    histogram over those cuts needs. ``None`` refines every bracket.
    """
    coeffs = np.atleast_2d(np.asarray(coeffs, dtype=float))
    if coeffs.shape[1] != n + 1:
        raise ContractError(f"expected {n + 1} coefficients per row, got {coeffs.shape[1]}")
    if grid_factor < 4:
        raise ContractError("grid_factor must be >= 4")
    win = None if window is None else (float(window[0]), float(window[1]))
    theta, rows, drows, step = _scan_matrix(int(n), int(grid_factor), win)
    coeffs_t = np.ascontiguousarray(coeffs.T)
    values = rows @ coeffs_t  # (grid, trials)
    sg = np.sign(values)
    change = sg[:-1] * sg[1:] < 0
    gi, tr = np.nonzero(change)
    # Exact zeros on interior grid nodes are zeros themselves (a probability-zero event).
    zi, ztr = np.nonzero(sg[1:-1] == 0)
    a, b = theta[gi], theta[gi + 1]
    da, db, dtr = _dip_brackets(theta, values, drows @ coeffs_t, sg, coeffs_t)
    a, b, tr = np.concatenate((a, da)), np.concatenate((b, db)), np.concatenate((tr, dtr))
    counts = np.bincount(tr, minlength=coeffs.shape[0]) + np.bincount(ztr, minlength=coeffs.shape[0])

    need = np.ones(a.shape, dtype=bool)
    if refine_edges is not None:
        edges = np.asarray(refine_edges, dtype=float)
        need = np.searchsorted(edges, a, side="right") != np.searchsorted(edges, b, side="left")
    root = 0.5 * (a + b)
    resid = np.full(a.shape, np.nan)
    idx = np.nonzero(need)[0]
    if idx.size:
        tri = tr[idx]
        fa = evaluate_g(a[idx], coeffs_t, tri)
        fb = evaluate_g(b[idx], coeffs_t, tri)
        r, res = refine_brackets(a[idx], b[idx], fa, fb, lambda p, t: evaluate_g(p, coeffs_t, t), tri)
        root[idx], resid[idx] = r, res

    all_trial = np.concatenate((tr, ztr))
    all_theta = np.concatenate((root, theta[1:-1][zi]))
    all_resid = np.concatenate((resid, np.zeros(zi.size)))
    all_ref = np.concatenate((need, np.ones(zi.size, dtype=bool)))
    all_lo = np.concatenate((a, theta[1:-1][zi]))
    all_hi = np.concatenate((b, theta[1:-1][zi]))
    order = np.lexsort((all_theta, all_trial))
    return ZeroBatch(
        trial=all_trial[order],
        theta=all_theta[order],
        residual=all_resid[order],
        refined=all_ref[order],
        lo=all_lo[order],
        hi=all_hi[order],
        counts=counts,
        grid_step=step,
    )


def scan_and_refine(coeffs, n: int, grid_factor: int = 20, seed: int | None = None) -> ZeroSample:
    """All real zeros of ``f(x) = sum sqrt(C(n,k)) c_k x^k``, sorted by ``theta``."""
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.ndim != 1 or coeffs.size != n + 1:
        raise ContractError(f"expected {n + 1} coefficients")
    batch = find_zeros(coeffs[None, :], n, grid_factor)
    th = batch.theta
    return ZeroSample(
        n=int(n),
        seed=seed,
        zeros_theta=th,
        zeros_x=np.tan(th),
        residuals=batch.residual,
        scan_grid_step=batch.grid_step,
        at_infinity=bool(coeffs[-1] == 0),
    )


@dataclass(frozen=True)
class MissedRootAudit:
    count_coarse: int
    count_fine: int
    discrepancy: int
    new_zeros_theta: np.ndarray

    @property
    def flagged(self) -> bool:
        return self.discrepancy != 0


def audit_missed_roots(coeffs, n: int, grid_factor: int = 20) -> MissedRootAudit:
    """Rescan at twice the grid factor and report zeros the coarse scan missed."""
    coarse = scan_and_refine(coeffs, n, grid_factor)
    fine = scan_and_refine(coeffs, n, 2 * grid_factor)
    if coarse.count:
        d = np.min(np.abs(fine.zeros_theta[:, None] - coarse.zeros_theta[None, :]), axis=1)
        new = fine.zeros_theta[d > 1e-9]
    else:
        new = fine.zeros_theta
    return MissedRootAudit(coarse.count, fine.count, fine.count - coarse.count, new)
