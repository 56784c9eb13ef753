"""Command line experiment runner.

Every command resolves its configuration (built-in defaults, then an
optional ``--config`` JSON file, then explicit flags), validates it before
touching the filesystem, and writes into ``--out``:

    <command>.csv    the result table
    manifest.json    resolved configuration, its hash, seed, versions
    summary.txt      the human-readable summary that is also printed

Exit codes: 0 success, 1 ``validate`` found a failing check,
2 usage or configuration error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import sys
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import __version__
from .coefficients import resolve_distribution
from .errors import ConfigurationError, ContractError, DomainError, NumericError
from .weights import build_limit_weights

SCHEMA_VERSION = 1
COMMANDS = ("density", "crossover", "pair-corr", "count", "kacrice", "validate", "plot-data")
COORDS = ("x", "theta", "scaled_y")

EXIT_OK, EXIT_FAILED_CHECKS, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


@dataclass
class ExperimentConfig:
    command: str
    dist: str = "gaussian"
    n: list = field(default_factory=lambda: [64])
    trials: int = 20000
    seed: int = 0
    theta0: float = 0.7
    y: list = field(default_factory=list)
    x: list = field(default_factory=list)
    bins: str = ""
    coord: str = "x"
    bin_width: float = 0.2
    samples: int = 2**20
    out: str = "results"
    workers: int = 1
    source: str = ""

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise UsageError(f"unknown configuration keys: {sorted(unknown)}")
        return cls(**data)

    def hashed_part(self) -> dict:
        # Execution details that cannot change results stay out of the hash.
        d = self.to_dict()
        for k in ("workers", "out", "source"):
            d.pop(k)
        return d

    def config_hash(self) -> str:
        blob = json.dumps(self.hashed_part(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


_COMMAND_DEFAULTS = {
    "density": {"bins": "-4:4:32"},
    "crossover": {"y": [0.0, 1.0, 2.0, 4.0]},
    "pair-corr": {"n": [256], "y": [0.5, 1.0, 2.0]},
    "count": {},
    "kacrice": {"n": [32], "x": [0.25, 0.5, 1.0, 2.0]},
    "validate": {},
    "plot-data": {},
}


def _int_list(text: str) -> list:
    try:
        return [int(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _float_list(text: str) -> list:
    try:
        return [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def parse_bins(spec: str) -> np.ndarray:
    """``lo:hi:count`` (equal bins) or a comma-separated list of edges."""
    spec = str(spec).strip()
    try:
        if ":" in spec:
            lo, hi, count = spec.split(":")
            edges = np.linspace(float(lo), float(hi), int(count) + 1)
        else:
            edges = np.array([float(v) for v in spec.split(",")])
    except ValueError:
        raise UsageError(f"cannot parse bins {spec!r}")
    if edges.size < 2 or np.any(np.diff(edges) <= 0) or not np.all(np.isfinite(edges)):
        raise UsageError("bins must be strictly increasing finite edges")
    return edges


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="so2zeros", description="Zero statistics of random binomial-weighted polynomials.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, mc=True):
        p.add_argument("--config", help="JSON file with configuration keys; flags override it")
        p.add_argument("--out", help="output directory")
        p.add_argument("--dist", help="gaussian, uniform, quartic or custom:<path.csv>")
        if mc:
            p.add_argument("--trials", type=int)
            p.add_argument("--seed", type=int)
            p.add_argument("--workers", type=int, help="worker processes; results do not depend on it")

    p = sub.add_parser("density", help="histogram of real zeros")
    common(p)
    p.add_argument("--n", type=_int_list)
    p.add_argument("--bins", help="lo:hi:count or comma-separated edges")
    p.add_argument("--coord", choices=COORDS)
    p.add_argument("--theta0", type=float, help="center for scaled_y bins")

    p = sub.add_parser("crossover", help="zero density of the limit field near the origin")
    common(p, mc=False)
    p.add_argument("--y", type=_float_list)
    p.add_argument("--samples", type=int, help="Monte Carlo samples when spectral inversion is infeasible")
    p.add_argument("--seed", type=int)

    p = sub.add_parser("pair-corr", help="scaled two-point intensity of zeros")
    common(p)
    p.add_argument("--n", type=_int_list)
    p.add_argument("--theta0", type=float)
    p.add_argument("--y", type=_float_list, help="pair separations; bins sit at 0 and y")
    p.add_argument("--bin-width", dest="bin_width", type=float)

    p = sub.add_parser("count", help="mean number of real zeros")
    common(p)
    p.add_argument("--n", type=_int_list, help="one degree or a comma-separated sweep")

    p = sub.add_parser("kacrice", help="semi-analytic normalized zero density")
    common(p, mc=False)
    p.add_argument("--n", type=_int_list)
    p.add_argument("--x", type=_float_list)

    p = sub.add_parser("validate", help="run the cross-module invariant checks")
    p.add_argument("--config")
    p.add_argument("--out")

    p = sub.add_parser("plot-data", help="long-format plotting tables from a result directory")
    p.add_argument("source", help="directory written by density, crossover, pair-corr, count or kacrice")
    p.add_argument("--out", help="output directory (defaults to the source directory)")
    return parser


def resolve_config(argv) -> ExperimentConfig:
    args = build_parser().parse_args(argv)
    data = {"command": args.command}
    data.update(_COMMAND_DEFAULTS[args.command])
    if getattr(args, "config", None):
        try:
            with open(args.config, encoding="utf-8") as fh:
                loaded = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config!r}: {exc}")
        if not isinstance(loaded, dict):
            raise UsageError("config file must hold a JSON object")
        if loaded.get("command", args.command) != args.command:
            raise UsageError(f"config is for {loaded['command']!r}, not {args.command!r}")
        data.update(loaded)
    for k, v in vars(args).items():
        if k not in ("config", "command") and v is not None:
            data[k] = v
    if args.command == "plot-data" and not getattr(args, "out", None):
        data["out"] = args.source
    cfg = ExperimentConfig.from_dict(data)
    _check_config(cfg)
    return cfg


def _check_config(cfg: ExperimentConfig) -> None:
    if cfg.command in ("validate", "plot-data"):
        return
    try:
        resolve_distribution(cfg.dist)
    except (ConfigurationError, OSError) as exc:
        raise UsageError(str(exc))
    if not cfg.n or any(not 1 <= int(v) <= 100_000 for v in cfg.n):
        raise UsageError("n must be in [1, 100000]")
    if cfg.seed < 0:
        raise UsageError("seed must be >= 0")
    if cfg.workers < 1:
        raise UsageError("workers must be >= 1")
    if cfg.command in ("density", "pair-corr", "count") and cfg.trials < 100:
        raise UsageError("trials must be >= 100")
    if cfg.command in ("density", "pair-corr") and len(cfg.n) != 1:
        raise UsageError(f"{cfg.command} takes a single n")
    if cfg.command == "density":
        if cfg.coord not in COORDS:
            raise UsageError(f"coord must be one of {COORDS}")
        edges = parse_bins(cfg.bins)
        if cfg.coord == "theta" and (edges[0] < -math.pi / 2 or edges[-1] > math.pi / 2):
            raise UsageError("theta bins must lie in [-pi/2, pi/2]")
    if cfg.command == "pair-corr":
        if not 0.1 < cfg.theta0 < math.pi / 2 - 0.1:
            raise UsageError("theta0 must lie in (0.1, pi/2 - 0.1)")
        if not cfg.y or any(s <= 0 for s in cfg.y):
            raise UsageError("pair separations must be positive")
        if not 0 < cfg.bin_width <= min(cfg.y) / 2:
            raise UsageError("bin-width must be positive and at most half the smallest separation")
    if cfg.command == "crossover":
        if not cfg.y or cfg.samples < 1000:
            raise UsageError("crossover needs --y values and at least 1000 samples")
    if cfg.command == "kacrice" and not cfg.x:
        raise UsageError("kacrice needs --x values")


# -- output helpers -----------------------------------------------------------


def _r(v) -> str:
    return repr(float(v))


def _write_rows(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def _manifest(cfg: ExperimentConfig, outputs, result: dict) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "tool": "so2zeros",
        "tool_version": __version__,
        "numpy_version": np.__version__,
        "command": cfg.command,
        "config": cfg.hashed_part(),
        "config_hash": cfg.config_hash(),
        "seed": cfg.seed,
        "execution": {"workers": cfg.workers},
        "outputs": sorted(outputs),
        "result": result,
    }


def _finish(cfg: ExperimentConfig, outputs, result: dict, summary: str) -> None:
    with open(os.path.join(cfg.out, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(_manifest(cfg, list(outputs) + ["summary.txt"], result), fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(os.path.join(cfg.out, "summary.txt"), "w", encoding="utf-8") as fh:
        fh.write(summary + "\n")
    print(summary)


# -- commands ---------------------------------------------------------------


def cmd_density(cfg: ExperimentConfig) -> int:
    from .empirical import run_density_experiment

    n = cfg.n[0]
    est = run_density_experiment(
        cfg.dist, n, cfg.trials, parse_bins(cfg.bins), cfg.seed, kind=cfg.coord,
        center=cfg.theta0 if cfg.coord == "scaled_y" else 0.0, workers=cfg.workers,
    )
    est.to_csv(os.path.join(cfg.out, "density.csv"))
    lines = [
        f"density: dist={cfg.dist} n={n} trials={est.trials} seed={cfg.seed} coord={cfg.coord}",
        f"zeros per trial {est.mean_count:.6f} +- {est.mean_count_stderr:.6f}; out of range {est.out_of_range}",
    ]
    _finish(cfg, ["density.csv"], est.manifest(), "\n".join(lines))
    return EXIT_OK


def _crossover_value(y, dist, samples, seed):
    from .kacrice import crossover_density, kac_rice_conditional_mc

    try:
        return crossover_density(y, dist), 0.0, "spectral"
    except NumericError:
        mc = kac_rice_conditional_mc(build_limit_weights(y), dist, samples, seed)
        return mc.value, mc.stderr, "conditional_mc"


def cmd_crossover(cfg: ExperimentConfig) -> int:
    dist = resolve_distribution(cfg.dist)
    m = dist.moments
    origin = m.r0 * m.abs_first
    rows, lines = [], [f"crossover: dist={cfg.dist}; limit at the origin r(0)E|c| = {origin:.8f}; 1/pi = {1 / math.pi:.8f}"]
    for i, y in enumerate(cfg.y):
        v, e, how = _crossover_value(float(y), dist, cfg.samples, cfg.seed + i)
        rows.append([_r(y), _r(v), _r(e), how])
        lines.append(f"  y={y:g}: p_hat={v:.8f} +- {e:.2e} ({how})")
    _write_rows(os.path.join(cfg.out, "crossover.csv"), ["y", "p_hat", "error", "method"], rows)
    _finish(cfg, ["crossover.csv"], {"type": "crossover", "origin_value": origin}, "\n".join(lines))
    return EXIT_OK


def cmd_pair_corr(cfg: ExperimentConfig) -> int:
    from .empirical import run_pair_correlation_experiment
    from .limit_field import bin_averaged_pair_correlation

    n = cfg.n[0]
    pairs = [(0.0, float(s)) for s in cfg.y]
    est = run_pair_correlation_experiment(
        cfg.dist, n, cfg.theta0, pairs, cfg.bin_width, cfg.trials, cfg.seed, workers=cfg.workers
    )
    limit = [bin_averaged_pair_correlation(a, b, cfg.bin_width) for a, b in pairs]
    rows, lines = [], [f"pair-corr: dist={cfg.dist} n={n} theta0={cfg.theta0} trials={est.trials} bin_width={cfg.bin_width}"]
    for (a, b), c, v, e, k in zip(est.pairs, est.counts, est.value, est.stderr, limit):
        z = (v - k) / e if e > 0 else float("inf")
        rows.append([_r(b - a), int(c), _r(v), _r(e), _r(k)])
        lines.append(f"  separation {b - a:g}: K2_hat={v:.5f} +- {e:.5f}; limit {k:.5f}; z={z:+.2f}")
    _write_rows(os.path.join(cfg.out, "pair-corr.csv"), ["separation", "pair_count", "K2_hat", "stderr", "K2_limit"], rows)
    result = est.manifest()
    result["K2_limit_bin_averaged"] = [float(k) for k in limit]
    _finish(cfg, ["pair-corr.csv"], result, "\n".join(lines))
    return EXIT_OK


def cmd_count(cfg: ExperimentConfig) -> int:
    from .empirical import run_count_experiment

    rows, lines, per_n = [], [f"count: dist={cfg.dist} trials={cfg.trials} seed={cfg.seed}"], []
    for n in cfg.n:
        est = run_count_experiment(cfg.dist, n, cfg.trials, cfg.seed, workers=cfg.workers)
        mean, se = est.mean_count, est.mean_count_stderr
        z = (mean - math.sqrt(n)) / se
        rows.append([n, est.trials, _r(mean), _r(se), _r(mean / math.sqrt(n))])
        lines.append(f"  n={n}: mean count {mean:.5f} +- {se:.5f}; |mean - sqrt(n)| = {abs(z):.2f} standard errors; mean/sqrt(n) = {mean / math.sqrt(n):.5f}")
        per_n.append(est.manifest())
    _write_rows(os.path.join(cfg.out, "count.csv"), ["n", "trials", "mean_count", "stderr", "mean_over_sqrt_n"], rows)
    _finish(cfg, ["count.csv"], {"type": "count", "runs": per_n}, "\n".join(lines))
    return EXIT_OK


def cmd_kacrice(cfg: ExperimentConfig) -> int:
    from .kacrice import density_with_error

    dist = resolve_distribution(cfg.dist)
    rows, lines = [], [f"kacrice: dist={cfg.dist}; p_n(x)/sqrt(n) against the Cauchy density"]
    for n in cfg.n:
        for x in cfg.x:
            v, e = density_with_error(n, math.atan(x), dist)
            cauchy = 1 / (math.pi * (1 + x * x))
            rows.append([n, _r(x), _r(v), _r(e), _r(cauchy)])
            lines.append(f"  n={n} x={x:g}: {v:.10f} (change on refinement {e:.1e}); Cauchy {cauchy:.10f}; rel diff {v / cauchy - 1:+.2e}")
    _write_rows(os.path.join(cfg.out, "kacrice.csv"), ["n", "x", "p_over_sqrt_n", "error", "cauchy"], rows)
    _finish(cfg, ["kacrice.csv"], {"type": "kacrice"}, "\n".join(lines))
    return EXIT_OK


def cmd_validate(cfg: ExperimentConfig) -> int:
    from .validation import run_checks

    results = run_checks()
    rows = [[name, "pass" if ok else "FAIL", detail] for name, ok, detail in results]
    _write_rows(os.path.join(cfg.out, "validate.csv"), ["check", "status", "detail"], rows)
    failed = [r for r in results if not r[1]]
    lines = [f"{'PASS' if ok else 'FAIL'} {name}: {detail}" for name, ok, detail in results]
    lines.append(f"{len(results) - len(failed)}/{len(results)} checks passed")
    _finish(cfg, ["validate.csv"], {"type": "validate", "failed": [r[0] for r in failed]}, "\n".join(lines))
    return EXIT_OK if not failed else EXIT_FAILED_CHECKS


# -- plot data ----------------------------------------------------------------


def _read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _density_curves(conf: dict, centers: np.ndarray):
    """Kac-Rice and Cauchy densities in the coordinate of the histogram."""
    from .kacrice import density

    dist = resolve_distribution(conf["dist"])
    n, kind = conf["n"], conf["kind"]
    if kind == "x":
        theta = np.arctan(centers)
    elif kind == "theta":
        theta = centers
    else:
        theta = conf["center"] + centers / math.sqrt(n)
    x = np.tan(theta)
    # per unit x: sqrt(n) * value; per theta: times (1+x^2); per y: divide by sqrt(n)
    jac = {"x": math.sqrt(n) * np.ones_like(x), "theta": math.sqrt(n) * (1 + x * x), "scaled_y": 1 + x * x}[kind]
    kr = np.array([density(n, float(t), dist) for t in theta]) * jac
    cauchy = jac / (math.pi * (1 + x * x))
    return kr, cauchy


def cmd_plot_data(cfg: ExperimentConfig) -> int:
    src = cfg.source
    man_path = os.path.join(src, "manifest.json")
    if not os.path.isfile(man_path):
        raise UsageError(f"no manifest.json in {src!r}")
    with open(man_path, encoding="utf-8") as fh:
        man = json.load(fh)
    command = man.get("command")
    rows = []
    if command == "density":
        table = _read_csv(os.path.join(src, "density.csv"))
        lo = np.array([float(r["bin_lo"]) for r in table])
        hi = np.array([float(r["bin_hi"]) for r in table])
        centers = 0.5 * (lo + hi)
        kr, cauchy = _density_curves(man["result"]["config"], centers)
        for c, r in zip(centers, table):
            rows.append([_r(c), "empirical", r["density"], r["stderr"]])
        rows += [[_r(c), "kacrice", _r(v), "0.0"] for c, v in zip(centers, kr)]
        rows += [[_r(c), "cauchy", _r(v), "0.0"] for c, v in zip(centers, cauchy)]
        name = "plot_density.csv"
    elif command == "crossover":
        table = _read_csv(os.path.join(src, "crossover.csv"))
        rows = [[r["y"], "p_hat", r["p_hat"], r["error"]] for r in table]
        rows += [[r["y"], "one_over_pi", _r(1 / math.pi), "0.0"] for r in table]
        name = "plot_crossover.csv"
    elif command == "pair-corr":
        table = _read_csv(os.path.join(src, "pair-corr.csv"))
        rows = [[r["separation"], "empirical_K2", r["K2_hat"], r["stderr"]] for r in table]
        rows += [[r["separation"], "limit_K2", r["K2_limit"], "0.0"] for r in table]
        name = "plot_pair_corr.csv"
    elif command == "count":
        table = _read_csv(os.path.join(src, "count.csv"))
        rows = [[r["n"], "mean_over_sqrt_n", r["mean_over_sqrt_n"], _r(float(r["stderr"]) / math.sqrt(float(r["n"])))] for r in table]
        rows += [[r["n"], "one", "1.0", "0.0"] for r in table]
        name = "plot_count.csv"
    elif command == "kacrice":
        table = _read_csv(os.path.join(src, "kacrice.csv"))
        rows = [[r["x"], f"kacrice_n{r['n']}", r["p_over_sqrt_n"], r["error"]] for r in table]
        rows += [[r["x"], "cauchy", r["cauchy"], "0.0"] for r in table if r["n"] == table[0]["n"]]
        name = "plot_kacrice.csv"
    else:
        raise UsageError(f"no plot data defined for {command!r} results")
    os.makedirs(cfg.out, exist_ok=True)
    _write_rows(os.path.join(cfg.out, name), ["x", "series", "value", "error"], rows)
    print(f"wrote {os.path.join(cfg.out, name)} ({len(rows)} rows)")
    return EXIT_OK


_HANDLERS = {
    "density": cmd_density,
    "crossover": cmd_crossover,
    "pair-corr": cmd_pair_corr,
    "count": cmd_count,
    "kacrice": cmd_kacrice,
    "validate": cmd_validate,
    "plot-data": cmd_plot_data,
}


def run(argv=None) -> int:
    try:
        cfg = resolve_config(sys.argv[1:] if argv is None else list(argv))
    except UsageError as exc:
        print(f"so2zeros: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    try:
        if cfg.command != "plot-data":
            os.makedirs(cfg.out, exist_ok=True)
        return _HANDLERS[cfg.command](cfg)
    except UsageError as exc:
        print(f"so2zeros: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ContractError, DomainError, ConfigurationError) as exc:
        print(f"so2zeros: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericError as exc:
        detail = f" (detail: {exc.detail})" if exc.detail is not None else ""
        print(f"so2zeros: numerical failure: {exc}{detail}", file=sys.stderr)
        return EXIT_NUMERIC


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
