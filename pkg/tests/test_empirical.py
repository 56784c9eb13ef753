import json
import math

import numpy as np
import pytest

from so2zeros.coefficients import get_distribution
from so2zeros.empirical import (
    merge,
    run_count_experiment,
    run_density_experiment,
    run_pair_correlation_experiment,
    same_estimate,
    trial_coefficients,
    write_manifest,
)
from so2zeros.errors import ContractError
from so2zeros.limit_field import bin_averaged_pair_correlation

EDGES = [0.0, 0.5, 1.0, 2.0]


def test_trial_seeds_are_independent_of_range():
    d = get_distribution("gaussian")
    whole = trial_coefficients(d, 8, 3, 0, 10)
    part = trial_coefficients(d, 8, 3, 4, 7)
    assert np.array_equal(whole[4:7], part)


def test_merge_contracts():
    a = run_density_experiment("gaussian", 16, 200, EDGES, 5)
    b = run_density_experiment("gaussian", 16, 200, EDGES, 5, trial_offset=200)
    c = run_density_experiment("gaussian", 16, 200, EDGES, 5, trial_offset=400)
    whole = run_density_experiment("gaussian", 16, 600, EDGES, 5)
    assert same_estimate(merge([a, merge([b, c])]), merge([merge([a, b]), c]))
    assert same_estimate(merge([a]), a)
    assert same_estimate(merge([c, a, b]), whole)
    assert merge([a, b, c]).trial_ranges == ((0, 600),)


def test_merge_rejects_mismatch_and_overlap():
    a = run_density_experiment("gaussian", 16, 100, EDGES, 5)
    with pytest.raises(ContractError):
        merge([a, run_density_experiment("gaussian", 16, 100, EDGES, 6, trial_offset=100)])
    with pytest.raises(ContractError):
        merge([a, run_density_experiment("uniform", 16, 100, EDGES, 5, trial_offset=100)])
    with pytest.raises(ContractError):
        merge([a, a])
    with pytest.raises(ContractError):
        merge([])


def test_worker_count_does_not_change_results():
    a = run_density_experiment("uniform", 32, 3000, EDGES, 9, workers=1)
    b = run_density_experiment("uniform", 32, 3000, EDGES, 9, workers=2)
    assert same_estimate(a, b)


def test_count_invariant_and_nonnegative_errors():
    e = run_density_experiment("gaussian", 24, 500, [-1.0, 0.0, 1.0], 2)
    assert e.total_zeros == e.counts.sum() + e.out_of_range
    assert np.all(e.stderr >= 0)


def test_gaussian_quarter_in_unit_interval():
    e = run_density_experiment("gaussian", 64, 20_000, [0.0, 1.0], 1)
    f, se = e.fraction(0)
    assert abs(f - 0.25) < 3 * se


def test_gaussian_mean_count():
    e = run_count_experiment("gaussian", 64, 20_000, 7)
    assert abs(e.mean_count - 8) < 3 * e.mean_count_stderr


def test_gaussian_density_matches_cauchy_per_bin():
    e = run_density_experiment("gaussian", 64, 5000, [-2.0, -0.5, 0.0, 0.5, 2.0], 4)
    edges = np.asarray(e.edges)
    mass = np.diff(np.arctan(edges)) / math.pi / np.diff(edges)
    assert np.all(np.abs(e.density / 8 - mass) < 3 * e.stderr / 8)


@pytest.mark.parametrize("dist", ["gaussian", "uniform"])
def test_reciprocal_mass_symmetry(dist):
    e = run_density_experiment(dist, 256, 5000, [0.5, 1.0, 2.0], 3)
    diff, se = e.mass_difference(0, 1)
    assert abs(diff) < 3 * se


def test_uniform_mean_count_approaches_sqrt_n():
    ratios, errs = [], []
    for n in (64, 256, 1024):
        e = run_count_experiment("uniform", n, 10_000, 1)
        ratios.append(e.mean_count / math.sqrt(n))
        errs.append(e.mean_count_stderr / math.sqrt(n))
    gaps = [abs(r - 1) for r in ratios]
    for k in range(2):
        assert gaps[k + 1] <= gaps[k] + 3 * math.hypot(errs[k], errs[k + 1])
    assert all(g < 3 * s + 0.01 for g, s in zip(gaps, errs))


def test_scaled_coordinates_at_origin():
    e = run_density_experiment("gaussian", 256, 2000, [-1.0, 1.0], 6, kind="scaled_y")
    # Gaussian zeros are uniform in theta: sqrt(n)/pi per unit theta, 1/pi per unit y.
    assert abs(e.density[0] - 1 / math.pi) < 3 * e.stderr[0]


def test_density_contracts():
    with pytest.raises(ContractError):
        run_density_experiment("gaussian", 16, 50, EDGES, 1)
    with pytest.raises(ContractError):
        run_density_experiment("gaussian", 16, 100, [1.0, 0.0], 1)
    with pytest.raises(ContractError):
        run_density_experiment("gaussian", 16, 100, [0.0, 2.0], 1, kind="theta")
    with pytest.raises(ContractError):
        run_density_experiment("gaussian", 16, 100, EDGES, 1, kind="polar")


def test_pair_contracts():
    with pytest.raises(ContractError):
        run_pair_correlation_experiment("gaussian", 64, 0.05, [(0, 1)], 0.2, 100, 1)
    with pytest.raises(ContractError):
        run_pair_correlation_experiment("gaussian", 64, 0.7, [(0, 1)], 0.6, 100, 1)
    with pytest.raises(ContractError):
        run_pair_correlation_experiment("gaussian", 64, 0.7, [(0, 1)], 0.0, 100, 1)


def test_pair_estimate_symmetric_in_bins():
    a = run_pair_correlation_experiment("gaussian", 64, 0.7, [(0.0, 1.0)], 0.4, 2000, 3)
    b = run_pair_correlation_experiment("gaussian", 64, 0.7, [(1.0, 0.0)], 0.4, 2000, 3)
    assert np.array_equal(a.counts, b.counts)
    assert a.normalization == 2000 * 0.4**2


@pytest.mark.slow
def test_gaussian_pair_correlation_and_rotation_invariance():
    ref = bin_averaged_pair_correlation(0.0, 1.0, 0.5)
    est = {}
    for theta0, seed in ((0.5, 11), (0.8, 12)):
        e = run_pair_correlation_experiment("gaussian", 256, theta0, [(0.0, 1.0)], 0.5, 40_000, seed)
        est[theta0] = (e.value[0], e.stderr[0])
        assert abs(e.value[0] - ref) < 3 * e.stderr[0]
    (v1, s1), (v2, s2) = est.values()
    assert abs(v1 - v2) < 3 * math.hypot(s1, s2)


def test_pair_merge_matches_single_run():
    a = run_pair_correlation_experiment("gaussian", 64, 0.7, [(0.0, 1.0)], 0.4, 300, 3)
    b = run_pair_correlation_experiment("gaussian", 64, 0.7, [(0.0, 1.0)], 0.4, 300, 3, trial_offset=300)
    whole = run_pair_correlation_experiment("gaussian", 64, 0.7, [(0.0, 1.0)], 0.4, 600, 3)
    assert same_estimate(merge([b, a]), whole)


def test_csv_and_manifest(tmp_path):
    e = run_density_experiment("gaussian", 16, 200, EDGES, 5)
    e.to_csv(tmp_path / "d.csv")
    rows = (tmp_path / "d.csv").read_text().strip().splitlines()
    assert rows[0] == "bin_lo,bin_hi,count,density,stderr"
    assert len(rows) == len(EDGES)
    write_manifest(tmp_path / "m.json", e.manifest())
    m = json.loads((tmp_path / "m.json").read_text())
    assert m["config"]["seed"] == 5 and m["trials"] == 200
