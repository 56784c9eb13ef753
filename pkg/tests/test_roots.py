import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from so2zeros.errors import ContractError
from so2zeros.roots import (
    audit_missed_roots,
    evaluate_g,
    find_zeros,
    grid_size,
    refine_brackets,
    scan_and_refine,
)
from so2zeros.weights import build_weights


def companion_zeros(c):
    """Real zeros in theta via numpy's companion-matrix solver."""
    n = c.size - 1
    poly = c * np.sqrt([math.comb(n, k) for k in range(n + 1)])
    r = np.roots(poly[::-1])
    return np.sort(np.arctan(r[np.abs(r.imag) < 1e-7].real))


def coeffs_from_roots(roots_x, n, extra=()):
    """Scaled coefficients c_k of prod (x - r) * prod (x^2 + e) padded to degree n."""
    p = np.poly1d([1.0])
    for r in roots_x:
        p = p * np.poly1d([1.0, -r])
    for e in extra:
        p = p * np.poly1d([1.0, 0.0, e])
    a = p.coeffs[::-1]
    assert a.size == n + 1
    return a / np.sqrt([math.comb(n, k) for k in range(n + 1)])


def test_linear_case():
    z = scan_and_refine(np.array([1.0, 1.0]), 1)
    assert z.count == 1
    assert z.zeros_theta[0] == pytest.approx(-math.pi / 4, abs=1e-13)
    assert z.zeros_x[0] == pytest.approx(-1.0, abs=1e-12)


@pytest.mark.parametrize("seed", range(6))
def test_matches_companion_matrix(seed):
    rng = np.random.default_rng(seed)
    n = 15
    c = rng.standard_normal(n + 1)
    ref = companion_zeros(c)
    z = scan_and_refine(c, n)
    assert z.count == ref.size
    assert np.max(np.abs(z.zeros_theta - ref), initial=0) < 1e-9
    assert np.all(np.diff(z.zeros_theta) > 0)
    assert np.all(z.residuals < 1e-10)


def test_evaluate_g_matches_weights():
    rng = np.random.default_rng(4)
    n = 300
    c = rng.standard_normal(n + 1)
    thetas = np.array([-1.4, -0.9, -0.3, 0.0, 0.2, 0.78, 0.8, 1.2, 1.55])
    got = evaluate_g(thetas, c[:, None], np.zeros(thetas.size, dtype=np.intp))
    ref = [build_weights(n, t).mu @ c for t in thetas]
    assert np.max(np.abs(got - ref)) < 1e-12


def test_reciprocal_zeros():
    rng = np.random.default_rng(8)
    n = 200
    for _ in range(5):
        c = rng.standard_normal(n + 1)
        a = scan_and_refine(c, n).zeros_x
        b = scan_and_refine(c[::-1], n).zeros_x
        a = np.sort(1 / a[a != 0])
        assert a.size == b.size
        assert np.max(np.abs(a - np.sort(b)) / np.maximum(1, np.abs(b))) < 1e-8


@given(st.integers(min_value=1, max_value=120), st.integers(min_value=0, max_value=2**31))
@settings(max_examples=40, deadline=None)
def test_negation_invariance(n, seed):
    c = np.random.default_rng(seed).standard_normal(n + 1)
    a = scan_and_refine(c, n)
    b = scan_and_refine(-c, n)
    assert np.array_equal(a.zeros_theta, b.zeros_theta)


@given(st.integers(min_value=1, max_value=300), st.integers(min_value=0, max_value=2**31))
@settings(max_examples=40, deadline=None)
def test_zero_count_parity_and_residuals(n, seed):
    c = np.random.default_rng(seed).standard_normal(n + 1)
    z = scan_and_refine(c, n)
    # Real zeros of a real polynomial of exact degree n have the parity of n.
    assert z.count % 2 == n % 2
    assert np.all(z.residuals < 1e-10)
    assert np.all(np.diff(z.zeros_theta) > 0)


def test_batch_agrees_with_single_rows():
    rng = np.random.default_rng(12)
    c = rng.standard_normal((20, 41))
    batch = find_zeros(c, 40)
    for i in range(20):
        single = scan_and_refine(c[i], 40).zeros_theta
        assert np.array_equal(batch.theta[batch.trial == i], single)
    assert np.array_equal(batch.counts, np.bincount(batch.trial, minlength=20))


def test_edge_limited_refinement_keeps_bin_membership():
    rng = np.random.default_rng(3)
    c = rng.standard_normal((200, 65))
    edges = np.arctan([0.0, 0.5, 1.0, 2.0])
    full = find_zeros(c, 64)
    lim = find_zeros(c, 64, refine_edges=edges)
    assert np.array_equal(full.counts, lim.counts)
    bf = np.searchsorted(edges, full.theta, side="right")
    bl = np.searchsorted(edges, lim.theta, side="right")
    assert np.array_equal(bf, bl)


def test_window_scan_finds_same_zeros():
    rng = np.random.default_rng(5)
    c = rng.standard_normal((50, 257))
    full = find_zeros(c, 256)
    win = find_zeros(c, 256, window=(0.5, 0.9))
    inside = (full.theta > 0.52) & (full.theta < 0.88)
    sel = (win.theta > 0.52) & (win.theta < 0.88)
    assert np.array_equal(full.theta[inside], win.theta[sel])


def test_refine_brackets_on_known_function():
    a = np.array([0.0, 1.0])
    b = np.array([2.0, 3.0])
    f = lambda x, t: np.cos(x)  # noqa: E731
    r, res = refine_brackets(a, b, f(a, None), f(b, None), f, np.zeros(2, dtype=np.intp))
    assert np.allclose(r, math.pi / 2, atol=1e-12)
    assert np.all(res < 1e-10)


def test_gaussian_mean_count_small():
    rng = np.random.default_rng(0)
    c = rng.standard_normal((4000, 65))
    counts = find_zeros(c, 64).counts
    assert abs(counts.mean() - 8) < 3 * counts.std() / math.sqrt(counts.size)


def test_audit_linear_has_no_discrepancy():
    rng = np.random.default_rng(1)
    for _ in range(20):
        assert not audit_missed_roots(rng.standard_normal(2), 1).flagged


def test_audit_rate_gaussian():
    rng = np.random.default_rng(2)
    flagged = sum(audit_missed_roots(rng.standard_normal(65), 64).flagged for _ in range(1000))
    assert flagged / 1000 < 1e-3


PLANT_EXTRA = [0.5, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0]


def test_dip_screen_recovers_pair_inside_one_cell():
    n = 16
    step = math.pi / grid_size(n, 4)
    lo = -math.pi / 2 + 9 * step
    t1, t2 = lo + 0.15 * step, lo + 0.85 * step
    c = coeffs_from_roots([math.tan(t1), math.tan(t2)], n, extra=PLANT_EXTRA)
    z = find_zeros(c[None, :], n, grid_factor=4)
    assert np.allclose(z.theta, [t1, t2], atol=1e-9)


def test_audit_flags_planted_close_pair():
    n = 16
    gf = 4
    step = math.pi / grid_size(n, gf)
    # A tight pair around the midpoint of a coarse cell: the coarse dip screen
    # stays above its margin, while the doubled grid puts a node between them.
    mid = -math.pi / 2 + 9.5 * step
    t1, t2 = mid - 0.01 * step, mid + 0.01 * step
    c = coeffs_from_roots([math.tan(t1), math.tan(t2)], n, extra=PLANT_EXTRA)
    audit = audit_missed_roots(c, n, gf)
    assert audit.flagged
    assert audit.discrepancy == 2
    assert np.allclose(np.sort(audit.new_zeros_theta), [t1, t2], atol=1e-9)


def test_shape_checks():
    with pytest.raises(ContractError):
        find_zeros(np.zeros((2, 5)), 5)
    with pytest.raises(ContractError):
        find_zeros(np.zeros((2, 6)), 5, grid_factor=2)
    with pytest.raises(ContractError):
        scan_and_refine(np.zeros(3), 5)


def test_zero_sample_csv(tmp_path):
    z = scan_and_refine(np.random.default_rng(1).standard_normal(11), 10)
    p = tmp_path / "z.csv"
    z.to_csv(p, trial=3)
    rows = p.read_text().strip().splitlines()
    assert rows[0] == "trial,theta,x,residual"
    assert len(rows) == z.count + 1
