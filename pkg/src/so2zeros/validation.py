"""Fast cross-module invariant checks behind ``so2zeros validate``.

Each check returns ``(name, passed, detail)``; a check that raises counts
as failed with the exception text as detail.
"""
from __future__ import annotations

import math

import numpy as np

from .coefficients import get_distribution
from .weights import build_weights


def _weights_identities():
    worst = 0.0
    for n in (2, 64, 1024):
        for theta in np.linspace(-1.5, 1.5, 7):
            w = build_weights(n, float(theta))
            x = math.tan(theta)
            errs = [
                abs(w.mu @ w.mu - 1),
                abs(w.lam @ w.lam - 1),
                abs(w.mu @ w.lam),
                abs(w.nu @ w.nu - 1),
                abs(w.mu @ w.nu - x * math.sqrt(n) / math.sqrt(1 + n * x * x)),
            ]
            worst = max(worst, max(errs))
    return worst < 1e-12, f"max identity residual {worst:.1e}"


def _char_fn_normalization():
    worst = 0.0
    for name in ("gaussian", "uniform_symmetric", "quartic_exponential"):
        d = get_distribution(name)
        s0 = np.array([0.0])
        worst = max(worst, abs(complex(d.char_fn(s0, 0)[0]) - 1), abs(complex(d.char_fn(s0, 2)[0]) + 1))
    return worst < 1e-9, f"max |phi(0)-1|, |phi''(0)+1| = {worst:.1e}"


def _root_engine_vs_companion():
    from .roots import find_zeros

    rng = np.random.default_rng(11)
    n = 12
    worst = 0.0
    for _ in range(5):
        c = rng.standard_normal(n + 1)
        coeffs = c * np.sqrt([math.comb(n, k) for k in range(n + 1)])
        ref = np.sort(np.arctan([r.real for r in np.roots(coeffs[::-1]) if abs(r.imag) < 1e-9]))
        got = find_zeros(c[None, :], n).theta
        if got.size != ref.size:
            return False, f"count {got.size} vs companion {ref.size}"
        worst = max(worst, float(np.max(np.abs(got - ref))) if ref.size else 0.0)
    return worst < 1e-8, f"max theta difference {worst:.1e}"


def _gaussian_density_exact():
    from .kacrice import density

    d = get_distribution("gaussian")
    worst = max(abs(density(32, math.atan(x), d) * math.pi * (1 + x * x) - 1) for x in (0.5, 2.0))
    return worst < 1e-3, f"max relative error vs Cauchy {worst:.1e}"


def _origin_formula():
    from .kacrice import density_at_origin

    v = density_at_origin(64, get_distribution("uniform_symmetric"))
    return abs(v - 0.25) < 1e-8, f"uniform p_n(0)/sqrt(n) = {v:.12f}"


def _kernel_invariants():
    from .limit_field import build_kernel, kernel_entries

    k = build_kernel([0.0, 0.7, 1.9, 4.0])
    ok = (
        np.allclose(np.diag(k.A), 1)
        and np.allclose(np.diag(k.C), 1)
        and np.allclose(np.diag(k.B), 0)
        and np.allclose(k.Delta, k.Delta.T)
        and k.min_eigenvalue > 0
        and kernel_entries(0.3, 1.1)[1] == -kernel_entries(1.1, 0.3)[1]
    )
    return bool(ok), f"min eigenvalue of Delta {k.min_eigenvalue:.3e}"


def _pair_factorization():
    from .limit_field import limit_correlation

    v = limit_correlation([0.0, 8.0]).value
    return abs(v - 1 / math.pi**2) < 1e-3, f"K2 at separation 8 = {v:.6f}"


def _limit_truncation():
    from .limit_field import sample_limit_zero_batch

    b = sample_limit_zero_batch((0.0, 5.0), get_distribution("gaussian"), 50, seed=3)
    return b.max_truncation_shift <= 1e-8, f"max zero shift under doubled truncation {b.max_truncation_shift:.1e}"


def _merge_contract():
    from .empirical import merge, run_density_experiment, same_estimate

    edges = [0.0, 0.5, 1.0, 2.0]
    a = run_density_experiment("gaussian", 16, 100, edges, 5)
    b = run_density_experiment("gaussian", 16, 100, edges, 5, trial_offset=100)
    c = run_density_experiment("gaussian", 16, 100, edges, 5, trial_offset=200)
    whole = run_density_experiment("gaussian", 16, 300, edges, 5)
    ok = same_estimate(merge([a, merge([b, c])]), merge([merge([a, b]), c])) and same_estimate(merge([c, a, b]), whole)
    return ok, "associative and equal to a single run"


CHECKS = (
    ("weights.identities", _weights_identities),
    ("coefficients.normalization", _char_fn_normalization),
    ("roots.companion_matrix", _root_engine_vs_companion),
    ("kacrice.gaussian_exact", _gaussian_density_exact),
    ("kacrice.origin_formula", _origin_formula),
    ("limit_field.kernel", _kernel_invariants),
    ("limit_field.factorization", _pair_factorization),
    ("limit_field.truncation", _limit_truncation),
    ("empirical.merge", _merge_contract),
)


def run_checks():
    out = []
    for name, fn in CHECKS:
        try:
            ok, detail = fn()
        except Exception as exc:  # reported, not raised
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        out.append((name, bool(ok), detail))
    return out
