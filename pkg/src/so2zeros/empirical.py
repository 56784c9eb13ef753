"""Monte Carlo harness for zero statistics of the binomial-weighted polynomial.

Every trial ``i`` draws its coefficients from
``SeedSequence(seed, spawn_key=(i,))``, so a trial is reproducible in
isolation and any partition of the trial range gives the same answer.
Trials are assigned to batch ``i % 32``; all accumulators are integer
counts per batch, so merging partial runs is exact and the error bars
(batch means) do not depend on how the work was split.
"""
from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .coefficients import CoefficientDistribution, resolve_distribution
from .errors import ContractError
from .roots import find_zeros

N_BATCHES = 32
CHUNK = 1024
MIN_TRIALS = 100
THETA0_MARGIN = 0.1
HALF_PI = math.pi / 2


def _resolve(dist) -> tuple[CoefficientDistribution, str]:
    if isinstance(dist, str):
        return resolve_distribution(dist), dist
    return dist, dist.kind


def trial_coefficients(dist: CoefficientDistribution, n: int, seed: int, start: int, stop: int) -> np.ndarray:
    """Coefficient rows for trials ``start..stop-1``."""
    out = np.empty((stop - start, n + 1))
    for r, i in enumerate(range(start, stop)):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(i,)))
        out[r] = dist.draw(rng, n + 1)
    return out


def _batch_ratio_se(num_b: np.ndarray, den_b: np.ndarray) -> np.ndarray:
    """Batch-means standard error of ``sum(num_b) / sum(den_b)``.

    Uses the linearized ratio estimator; with equal batch sizes it reduces
    to the sample standard deviation of the batch ratios over ``sqrt(B)``.
    """
    num_b = np.asarray(num_b, dtype=float)
    den_b = np.asarray(den_b, dtype=float)
    used = den_b > 0
    B = int(np.count_nonzero(used))
    if B < 2:
        return np.full(num_b.shape[1:], np.nan)
    num_b, den_b = num_b[used], den_b[used]
    total = den_b.sum()
    r = num_b.sum(axis=0) / total
    shape = (B,) + (1,) * (num_b.ndim - 1)
    w = (den_b / total).reshape(shape)
    rb = num_b / den_b.reshape(shape)
    return np.sqrt(B / (B - 1) * np.sum(w * w * (rb - r) ** 2, axis=0))


def _merge_ranges(ranges) -> tuple[tuple[int, int], ...]:
    rs = sorted((int(a), int(b)) for a, b in ranges)
    out: list[list[int]] = []
    for a, b in rs:
        if out and a < out[-1][1]:
            raise ContractError(f"trial ranges overlap at {a}")
        if out and a == out[-1][1]:
            out[-1][1] = b
        else:
            out.append([a, b])
    return tuple((a, b) for a, b in out)


def _check_like(estimates, keys):
    if not estimates:
        raise ContractError("nothing to merge")
    first = estimates[0]
    for e in estimates[1:]:
        if type(e) is not type(first):
            raise ContractError("cannot merge estimates of different types")
        for k in keys:
            x, y = getattr(first, k), getattr(e, k)
            same = np.array_equal(x, y) if isinstance(x, np.ndarray) else x == y
            if not same:
                raise ContractError(f"metadata mismatch in {k!r}")


# -- density ----------------------------------------------------------------


@dataclass(frozen=True)
class DensityEstimate:
    """Histogram of zero locations with batch-means errors.

    ``edges`` are in the coordinate named by ``kind``: ``x``, ``theta`` or
    ``scaled_y`` (``y = sqrt(n) (theta - center)``). ``density`` is the mean
    number of zeros per trial per unit of that coordinate.
    """

    kind: str
    center: float
    n: int
    dist: str
    seed: int
    edges: np.ndarray
    trial_ranges: tuple
    counts: np.ndarray
    batch_counts: np.ndarray
    batch_trials: np.ndarray
    batch_zeros: np.ndarray
    grid_factor: int = 20

    @property
    def trials(self) -> int:
        return int(self.batch_trials.sum())

    @property
    def total_zeros(self) -> int:
        return int(self.batch_zeros.sum())

    @property
    def out_of_range(self) -> int:
        return self.total_zeros - int(self.counts.sum())

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.edges)

    @property
    def density(self) -> np.ndarray:
        return self.counts / (self.trials * self.widths)

    @property
    def stderr(self) -> np.ndarray:
        return _batch_ratio_se(self.batch_counts, self.batch_trials) / self.widths

    @property
    def mean_count(self) -> float:
        return self.total_zeros / self.trials

    @property
    def mean_count_stderr(self) -> float:
        return float(_batch_ratio_se(self.batch_zeros, self.batch_trials))

    def fraction(self, i: int) -> tuple[float, float]:
        """Share of all zeros that land in bin ``i``, with its error."""
        value = self.counts[i] / self.total_zeros
        return float(value), float(_batch_ratio_se(self.batch_counts[:, i], self.batch_zeros))

    def mass_difference(self, i: int, j: int) -> tuple[float, float]:
        """Per-trial zero mass in bin ``i`` minus bin ``j``, with its error."""
        diff_b = self.batch_counts[:, i] - self.batch_counts[:, j]
        return float(diff_b.sum() / self.trials), float(_batch_ratio_se(diff_b, self.batch_trials))

    def config(self) -> dict:
        return {
            "kind": self.kind,
            "center": self.center,
            "n": self.n,
            "dist": self.dist,
            "seed": self.seed,
            "edges": [float(e) for e in self.edges],
            "grid_factor": self.grid_factor,
        }

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["bin_lo", "bin_hi", "count", "density", "stderr"])
            for lo, hi, c, d, s in zip(self.edges[:-1], self.edges[1:], self.counts, self.density, self.stderr):
                w.writerow([repr(float(lo)), repr(float(hi)), int(c), repr(float(d)), repr(float(s))])

    def manifest(self) -> dict:
        return {
            "type": "density",
            "config": self.config(),
            "trials": self.trials,
            "trial_ranges": [list(r) for r in self.trial_ranges],
            "total_zeros": self.total_zeros,
            "out_of_range": self.out_of_range,
            "mean_count": self.mean_count,
            "mean_count_stderr": self.mean_count_stderr,
            "stderr": [float(s) for s in self.stderr],
        }


def _theta_edges(kind: str, edges: np.ndarray, n: int, center: float) -> np.ndarray:
    if kind == "x":
        return np.arctan(edges)
    if kind == "theta":
        return edges.copy()
    if kind == "scaled_y":
        return center + edges / math.sqrt(n)
    raise ContractError(f"unknown coordinate kind {kind!r}")


def _density_chunk(args):
    dist, n, seed, start, stop, theta_edges, grid_factor = args
    coeffs = trial_coefficients(dist, n, seed, start, stop)
    zb = find_zeros(coeffs, n, grid_factor=grid_factor, refine_edges=theta_edges)
    trial_ids = np.arange(start, stop)
    batch = trial_ids % N_BATCHES
    nb = theta_edges.size - 1
    batch_trials = np.bincount(batch, minlength=N_BATCHES)
    batch_zeros = np.bincount(batch, weights=zb.counts, minlength=N_BATCHES).astype(np.int64)
    b = np.searchsorted(theta_edges, zb.theta, side="right") - 1
    inside = (b >= 0) & (b < nb)
    zbatch = (start + zb.trial[inside]) % N_BATCHES
    flat = np.bincount(zbatch * nb + b[inside], minlength=N_BATCHES * nb)
    return batch_trials.astype(np.int64), batch_zeros, flat.reshape(N_BATCHES, nb).astype(np.int64)


def _chunks(start: int, stop: int):
    a = start
    while a < stop:
        b = min(stop, (a // CHUNK + 1) * CHUNK)
        yield a, b
        a = b


def _run_chunks(fn, jobs, workers: int):
    if workers <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, jobs))


def run_density_experiment(
    dist,
    n: int,
    trials: int,
    bins,
    seed: int,
    kind: str = "x",
    center: float = 0.0,
    workers: int = 1,
    trial_offset: int = 0,
    grid_factor: int = 20,
) -> DensityEstimate:
    """Histogram zeros of ``trials`` realizations into ``bins`` (edges in ``kind`` units)."""
    dist, label = _resolve(dist)
    n, trials = int(n), int(trials)
    if trials < MIN_TRIALS:
        raise ContractError(f"trials must be >= {MIN_TRIALS}")
    if n < 1:
        raise ContractError("degree must be >= 1")
    edges = np.asarray(bins, dtype=float)
    if edges.ndim != 1 or edges.size < 2 or np.any(np.diff(edges) <= 0) or not np.all(np.isfinite(edges)):
        raise ContractError("bins must be a strictly increasing sequence of finite edges")
    center = float(center) if kind == "scaled_y" else 0.0
    theta_edges = _theta_edges(kind, edges, n, center)
    if theta_edges[0] < -HALF_PI or theta_edges[-1] > HALF_PI:
        raise ContractError("bins extend beyond theta = +-pi/2")
    jobs = [(dist, n, int(seed), a, b, theta_edges, grid_factor) for a, b in _chunks(trial_offset, trial_offset + trials)]
    parts = _run_chunks(_density_chunk, jobs, workers)
    batch_trials = sum(p[0] for p in parts)
    batch_zeros = sum(p[1] for p in parts)
    batch_counts = sum(p[2] for p in parts)
    return DensityEstimate(
        kind=kind,
        center=center,
        n=n,
        dist=label,
        seed=int(seed),
        edges=edges,
        trial_ranges=((trial_offset, trial_offset + trials),),
        counts=batch_counts.sum(axis=0),
        batch_counts=batch_counts,
        batch_trials=batch_trials,
        batch_zeros=batch_zeros,
        grid_factor=grid_factor,
    )


def run_count_experiment(dist, n: int, trials: int, seed: int, workers: int = 1, trial_offset: int = 0) -> DensityEstimate:
    """Total real-zero counts; a one-bin histogram over the whole circle."""
    return run_density_experiment(
        dist, n, trials, [-HALF_PI, HALF_PI], seed, kind="theta", workers=workers, trial_offset=trial_offset
    )


# -- pair correlation -------------------------------------------------------


@dataclass(frozen=True)
class PairCorrelationEstimate:
    """Two-point intensity of scaled zeros ``y = sqrt(n) (theta - theta0)``.

    For each pair ``(y1, y2)`` the statistic is the number of ordered zero
    pairs with one zero in each of the two bins, divided by ``trials * w^2``
    (``w`` in ``y`` units, i.e. ``n`` times the product of the ``theta``
    widths).
    """

    theta0: float
    n: int
    dist: str
    seed: int
    pairs: np.ndarray
    bin_width: float
    trial_ranges: tuple
    counts: np.ndarray
    batch_counts: np.ndarray
    batch_trials: np.ndarray
    grid_factor: int = 20

    @property
    def trials(self) -> int:
        return int(self.batch_trials.sum())

    @property
    def normalization(self) -> float:
        return self.trials * self.bin_width**2

    @property
    def value(self) -> np.ndarray:
        return self.counts / self.normalization

    @property
    def stderr(self) -> np.ndarray:
        return _batch_ratio_se(self.batch_counts, self.batch_trials) / self.bin_width**2

    @property
    def separations(self) -> np.ndarray:
        return np.abs(self.pairs[:, 1] - self.pairs[:, 0])

    def config(self) -> dict:
        return {
            "theta0": self.theta0,
            "n": self.n,
            "dist": self.dist,
            "seed": self.seed,
            "pairs": [[float(a), float(b)] for a, b in self.pairs],
            "bin_width": self.bin_width,
            "grid_factor": self.grid_factor,
        }

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["y1", "y2", "separation", "pair_count", "K2_hat", "stderr"])
            for (a, b), s, c, v, e in zip(self.pairs, self.separations, self.counts, self.value, self.stderr):
                w.writerow([repr(float(a)), repr(float(b)), repr(float(s)), int(c), repr(float(v)), repr(float(e))])

    def manifest(self) -> dict:
        return {
            "type": "pair_correlation",
            "config": self.config(),
            "trials": self.trials,
            "trial_ranges": [list(r) for r in self.trial_ranges],
            "normalization": self.normalization,
            "stderr": [float(s) for s in self.stderr],
        }


def _pair_chunk(args):
    dist, n, seed, start, stop, theta0, pairs, w, grid_factor = args
    rn = math.sqrt(n)
    lo = theta0 + (float(pairs.min()) - w) / rn
    hi = theta0 + (float(pairs.max()) + w) / rn
    cuts = np.unique(np.concatenate([theta0 + (pairs.ravel() - w / 2) / rn, theta0 + (pairs.ravel() + w / 2) / rn]))
    coeffs = trial_coefficients(dist, n, seed, start, stop)
    zb = find_zeros(coeffs, n, grid_factor=grid_factor, window=(lo, hi), refine_edges=cuts)
    y = (zb.theta - theta0) * rn
    T = stop - start
    P = pairs.shape[0]
    per_trial = np.zeros((T, P), dtype=np.int64)
    for p, (y1, y2) in enumerate(pairs):
        in1 = np.abs(y - y1) < w / 2
        in2 = np.abs(y - y2) < w / 2
        n1 = np.bincount(zb.trial[in1], minlength=T)
        n2 = np.bincount(zb.trial[in2], minlength=T)
        per_trial[:, p] = n1 * n2
    batch = np.arange(start, stop) % N_BATCHES
    bc = np.zeros((N_BATCHES, P), dtype=np.int64)
    np.add.at(bc, batch, per_trial)
    return np.bincount(batch, minlength=N_BATCHES).astype(np.int64), bc


def run_pair_correlation_experiment(
    dist,
    n: int,
    theta0: float,
    y_pairs,
    bin_width: float,
    trials: int,
    seed: int,
    workers: int = 1,
    trial_offset: int = 0,
    grid_factor: int = 20,
) -> PairCorrelationEstimate:
    """Estimate the scaled two-point intensity at each ``(y1, y2)`` in ``y_pairs``."""
    dist, label = _resolve(dist)
    n, trials = int(n), int(trials)
    theta0 = float(theta0)
    if not THETA0_MARGIN < theta0 < HALF_PI - THETA0_MARGIN:
        raise ContractError(f"theta0 must lie in ({THETA0_MARGIN}, pi/2 - {THETA0_MARGIN})")
    if trials < MIN_TRIALS:
        raise ContractError(f"trials must be >= {MIN_TRIALS}")
    pairs = np.atleast_2d(np.asarray(y_pairs, dtype=float))
    if pairs.shape[1] != 2 or pairs.shape[0] < 1:
        raise ContractError("y_pairs must be a sequence of (y1, y2)")
    w = float(bin_width)
    if not w > 0:
        raise ContractError("bin_width must be positive")
    sep = np.abs(pairs[:, 1] - pairs[:, 0])
    if np.any(w > sep / 2):
        raise ContractError("bin_width must not exceed half the pair separation (bins would overlap)")
    span = (float(pairs.max()) + w) / math.sqrt(n)
    if theta0 + span >= HALF_PI or theta0 + (float(pairs.min()) - w) / math.sqrt(n) <= -HALF_PI:
        raise ContractError("scaled bins extend beyond theta = +-pi/2")
    jobs = [
        (dist, n, int(seed), a, b, theta0, pairs, w, grid_factor)
        for a, b in _chunks(trial_offset, trial_offset + trials)
    ]
    parts = _run_chunks(_pair_chunk, jobs, workers)
    batch_trials = sum(p[0] for p in parts)
    batch_counts = sum(p[1] for p in parts)
    return PairCorrelationEstimate(
        theta0=theta0,
        n=n,
        dist=label,
        seed=int(seed),
        pairs=pairs,
        bin_width=w,
        trial_ranges=((trial_offset, trial_offset + trials),),
        counts=batch_counts.sum(axis=0),
        batch_counts=batch_counts,
        batch_trials=batch_trials,
        grid_factor=grid_factor,
    )


# -- merging and persistence ------------------------------------------------

_DENSITY_KEYS = ("kind", "center", "n", "dist", "seed", "edges", "grid_factor")
_PAIR_KEYS = ("theta0", "n", "dist", "seed", "pairs", "bin_width", "grid_factor")


def merge(estimates):
    """Combine estimates over disjoint trial ranges of the same configuration.

    Counts are integers, so the result is independent of grouping and order.
    """
    estimates = list(estimates)
    first = estimates[0] if estimates else None
    if isinstance(first, DensityEstimate):
        _check_like(estimates, _DENSITY_KEYS)
        ranges = _merge_ranges([r for e in estimates for r in e.trial_ranges])
        bc = sum(e.batch_counts for e in estimates)
        return replace(
            first,
            trial_ranges=ranges,
            counts=bc.sum(axis=0),
            batch_counts=bc,
            batch_trials=sum(e.batch_trials for e in estimates),
            batch_zeros=sum(e.batch_zeros for e in estimates),
        )
    if isinstance(first, PairCorrelationEstimate):
        _check_like(estimates, _PAIR_KEYS)
        ranges = _merge_ranges([r for e in estimates for r in e.trial_ranges])
        bc = sum(e.batch_counts for e in estimates)
        return replace(
            first,
            trial_ranges=ranges,
            counts=bc.sum(axis=0),
            batch_counts=bc,
            batch_trials=sum(e.batch_trials for e in estimates),
        )
    raise ContractError("nothing to merge" if first is None else f"cannot merge {type(first).__name__}")


def same_estimate(a, b) -> bool:
    """Field-wise exact equality, arrays compared element by element."""
    if type(a) is not type(b):
        return False
    for k in a.__dataclass_fields__:
        x, y = getattr(a, k), getattr(b, k)
        if isinstance(x, np.ndarray) or isinstance(y, np.ndarray):
            if x is None or y is None or x.dtype != y.dtype or not np.array_equal(x, y):
                return False
        elif x != y:
            return False
    return True


def write_manifest(path, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
