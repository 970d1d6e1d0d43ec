"""Command-line runner: ``sdemoments {moments,density,baseline,compare}``.

Every command reads one JSON config (see ``configs/*.example``) and writes
CSV/JSON reports into the output directory. Apart from ``timings.json`` the
outputs are a deterministic function of the config and seed.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .baseline import empirical_mean_covariance, empirical_moment, kde_1d, sample_ensemble
from .config import RunConfig
from .density import (
    density_parameters,
    fit_density_surrogates,
    fixed_density,
    gc_pdf,
    mixture_pdf,
    tvd,
)
from .errors import (
    ConfigError,
    DegenerateDensityError,
    NumericalError,
    RankDeficiencyError,
    SdeMomentsError,
)
from .multiindex import enumerate_up_to
from .pce import propagate_random
from .propagation import CSV_VERSION, FixedPropagation, propagate_fixed, write_trajectory_csv

logger = logging.getLogger("sdemoments")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_DEGENERATE = 0, 2, 3, 4
JSON_SCHEMA = "sdemoments-json v1"


# -- writers --------------------------------------------------------------------


def _num(x) -> Optional[float]:
    x = float(x)
    return x if math.isfinite(x) else None


def _write_json(path: Path, payload: dict) -> None:
    payload = {"schema": JSON_SCHEMA, **payload}
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, allow_nan=False) + "\n")


def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(CSV_VERSION + "\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _read_csv(path: Path) -> list[list[str]]:
    with open(path, newline="") as fh:
        lines = [line for line in fh if not line.startswith("#")]
    rows = list(csv.reader(lines))
    return rows[1:]


def _matrix(a) -> list:
    return [[_num(x) for x in row] for row in np.asarray(a)]


def _vector(a) -> list:
    return [_num(x) for x in np.asarray(a)]


# -- Algorithm 1 ------------------------------------------------------------------


@dataclass
class MomentRun:
    cfg: RunConfig
    mean: np.ndarray
    covariance: np.ndarray
    moments: dict
    n_steps: int
    seconds: float
    fixed: Optional[FixedPropagation] = None
    random: object = None


def compute_moments(cfg: RunConfig, stride: Optional[int] = None) -> MomentRun:
    model, init = cfg.build_model(), cfg.build_init()
    noise = cfg.build_noise(model)
    start = time.perf_counter()
    if init.kind == "fixed":
        result = propagate_fixed(
            init.fixed_value, model, noise, cfg.h, cfg.t0, cfg.tn, cfg.N,
            truncation=cfg.truncation, stride=stride, engine=cfg.engine,
        )
        seconds = time.perf_counter() - start
        if cfg.N >= 2:
            mean, cov = result.mean_and_covariance()
        else:
            lin = result.final_linear
            mean, cov = result.final_state + lin.mean, lin.covariance
        moments = dict(zip(result.final_table.indices, result.solution_moments()))
        return MomentRun(cfg, mean, cov, moments, result.n_steps, seconds, fixed=result)
    result = propagate_random(
        init, model, noise, cfg.h, cfg.t0, cfg.tn, cfg.N, cfg.N_PCE, cfg.N_s, cfg.seed,
        truncation=cfg.truncation, engine=cfg.engine,
    )
    seconds = time.perf_counter() - start
    return MomentRun(
        cfg, result.mean, result.covariance, result.moments, result.n_steps, seconds, random=result
    )


def run_moments(cfg: RunConfig, out: Path, stride: Optional[int] = None) -> MomentRun:
    run = compute_moments(cfg, stride)
    _write_csv(
        out / "moments.csv",
        ["multiindex", "value"],
        [[str(r), repr(float(value))] for r, value in run.moments.items()],
    )
    payload = {
        "init": cfg.init["kind"],
        "N": cfg.N,
        "n_steps": run.n_steps,
        "final_time": _num(cfg.t0 + run.n_steps * cfg.h),
        "mean": _vector(run.mean),
        "covariance": _matrix(run.covariance),
    }
    if run.random is not None:
        payload["pce"] = {
            "N_PCE": cfg.N_PCE,
            "N_s": cfg.N_s,
            "basis_size": run.random.basis.basis_size,
            "condition_number": _num(run.random.fit.condition_number),
            "residual_norm": _vector(run.random.fit.residual_norm),
        }
    _write_json(out / "covariance.json", payload)
    _write_json(
        out / "timings.json",
        {
            "n_steps": run.n_steps,
            "total_seconds": run.seconds,
            "mean_seconds_per_step": run.seconds / run.n_steps,
            "engine": cfg.engine,
        },
    )
    if stride and run.fixed is not None:
        write_trajectory_csv(run.fixed, out / "trajectory_moments.csv", out / "trajectory_central.csv")
    return run


# -- Algorithm 2 ------------------------------------------------------------------


def compute_densities(cfg: RunConfig, run: MomentRun) -> tuple[list, list[dict]]:
    """Per component ``(grid, values)`` (``None`` when degenerate) and a report."""
    v = run.mean.size
    std = np.sqrt(np.clip(np.diag(run.covariance), 0.0, None))
    grids = cfg.density_grid(run.mean, std)
    curves, report = [], []
    if run.fixed is not None:
        for k in range(v):
            try:
                dens = fixed_density(run.fixed, k)
            except DegenerateDensityError as exc:
                curves.append(None)
                report.append({"component": k, "status": "degenerate", "message": str(exc)})
                continue
            curves.append((grids[k], gc_pdf(dens, grids[k])))
            report.append({
                "component": k, "status": "ok", "mu": _num(dens.mu), "sigma": _num(dens.sigma),
                "coefficients": _vector(dens.coefficients),
            })
        return curves, report

    rp = run.random
    mu, sigma, C = density_parameters(rp.final, cfg.N)
    surrogates = fit_density_surrogates(rp.samples, mu, sigma, C, rp.basis)
    fresh = cfg.build_init().sample(np.random.default_rng([cfg.seed, 1]), cfg.N_s_density)
    for k in range(v):
        if not np.any(sigma[:, k] > 0):
            curves.append(None)
            report.append({"component": k, "status": "degenerate",
                           "message": "zero auxiliary deviation for every sample"})
            continue
        try:
            mix = mixture_pdf(surrogates, fresh, k, grids[k])
        except DegenerateDensityError as exc:
            curves.append(None)
            report.append({"component": k, "status": "degenerate", "message": str(exc)})
            continue
        curves.append((grids[k], mix.values))
        report.append({"component": k, "status": "ok", "skipped": mix.skipped, "used": mix.used})
    return curves, report


def _write_density(out: Path, prefix: str, k: int, grid, values, clip: bool) -> None:
    if clip:
        values = np.clip(values, 0.0, None)
    _write_csv(
        out / f"{prefix}_{k}.csv",
        ["component", "x", "pdf_value"],
        [[k, repr(float(x)), repr(float(f))] for x, f in zip(grid, values)],
    )


def run_density(cfg: RunConfig, out: Path, clip: bool = False, run: Optional[MomentRun] = None) -> list:
    run = run or compute_moments(cfg)
    curves, report = compute_densities(cfg, run)
    for k, curve in enumerate(curves):
        if curve is not None:
            _write_density(out, "density", k, *curve, clip)
    _write_json(out / "density_report.json", {"components": report, "clipped": clip})
    return curves


# -- baseline --------------------------------------------------------------------


def run_baseline(cfg: RunConfig, out: Path, clip: bool = False):
    model, init = cfg.build_model(), cfg.build_init()
    noise = cfg.build_noise(model)
    start = time.perf_counter()
    ens = sample_ensemble(init, model, cfg.h, cfg.t0, cfg.tn, cfg.mc_samples, cfg.seed, noise)
    seconds = time.perf_counter() - start
    X = ens.final_states
    v = X.shape[1]
    _write_csv(
        out / "ensemble.csv",
        [f"x{k}" for k in range(v)],
        [[repr(float(x)) for x in row] for row in X],
    )
    mean, cov = empirical_mean_covariance(ens)
    moments = []
    for r in enumerate_up_to(v, cfg.N)[1:]:
        value, se = empirical_moment(ens, r)
        moments.append({"multiindex": str(r), "value": _num(value), "standard_error": _num(se)})
    _write_json(out / "baseline_summary.json", {
        "seed": cfg.seed,
        "n_paths": ens.size,
        "n_steps": ens.n_steps,
        "h": cfg.h,
        "mean": _vector(mean),
        "covariance": _matrix(cov),
        "moments": moments,
    })
    _write_json(out / "baseline_timings.json", {
        "n_steps": ens.n_steps, "n_paths": ens.size, "total_seconds": seconds,
    })
    grids = cfg.density_grid(mean, np.sqrt(np.diag(cov)))
    for k in range(v):
        try:
            values = kde_1d(X[:, k], grids[k])
        except ValueError:
            logger.warning("component %d of the ensemble is degenerate; no KDE written", k)
            continue
        _write_density(out, "kde", k, grids[k], values, clip)
    return ens


# -- comparison ------------------------------------------------------------------


def _relative(a, b):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.abs(a - b) / np.abs(b)
    return rel


def _lists(a):
    a = np.asarray(a)
    return _vector(a) if a.ndim == 1 else _matrix(a)


def run_compare(cfg: RunConfig, out: Path, require_existing: bool = False) -> dict:
    needed = {
        "moments": [out / "covariance.json"],
        "baseline": [out / "baseline_summary.json", out / "ensemble.csv"],
        "density": [out / "density_report.json"],
    }
    missing = {name: [str(p) for p in paths if not p.exists()] for name, paths in needed.items()}
    missing = {k: v for k, v in missing.items() if v}
    if missing and require_existing:
        raise ConfigError(f"missing artifacts: {missing}")
    run = None
    if "moments" in missing or "density" in missing:
        run = run_moments(cfg, out)
    if "density" in missing:
        run_density(cfg, out, run=run)
    if "baseline" in missing:
        run_baseline(cfg, out)

    alg = json.loads((out / "covariance.json").read_text())
    base = json.loads((out / "baseline_summary.json").read_text())
    report = json.loads((out / "density_report.json").read_text())
    X = np.array([[float(x) for x in row] for row in _read_csv(out / "ensemble.csv")])

    mean_a, mean_b = np.array(alg["mean"], float), np.array(base["mean"], float)
    cov_a, cov_b = np.array(alg["covariance"], float), np.array(base["covariance"], float)
    tvds = []
    for entry in report["components"]:
        k = entry["component"]
        path = out / f"density_{k}.csv"
        if entry["status"] != "ok" or not path.exists():
            tvds.append(None)
            continue
        rows = _read_csv(path)
        grid = np.array([float(r[1]) for r in rows])
        f = np.array([float(r[2]) for r in rows])
        try:
            g = kde_1d(X[:, k], grid)
        except ValueError:
            tvds.append(None)
            continue
        tvds.append(_num(tvd(f, g, grid)))
    payload = {
        "mean": {
            "algorithm": _lists(mean_a),
            "baseline": _lists(mean_b),
            "absolute": _lists(np.abs(mean_a - mean_b)),
            "relative": _lists(_relative(mean_a, mean_b)),
        },
        "covariance": {
            "absolute": _lists(np.abs(cov_a - cov_b)),
            "relative": _lists(_relative(cov_a, cov_b)),
        },
        "tvd": tvds,
    }
    _write_json(out / "compare.json", payload)
    return payload


# -- entry point -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sdemoments",
        description="Moment and density propagation for Ito SDEs with a Monte Carlo baseline.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in [
        ("moments", "moments, mean and covariance at the final time"),
        ("density", "Gram-Charlier marginal densities at the final time"),
        ("baseline", "Euler-Maruyama Monte Carlo ensemble and KDEs"),
        ("compare", "differences between the propagated and Monte Carlo results"),
    ]:
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", required=True, help="JSON run configuration")
        p.add_argument("--seed", type=int, help="override the configured seed")
        p.add_argument("--out", help="override the output directory")
        p.add_argument("--trajectory-stride", type=int, metavar="K",
                       help="also dump moment tables every K steps (fixed start)")
        p.add_argument("--clip-nonnegative", action="store_true",
                       help="clip negative density values in exported CSVs")
        p.add_argument("--quiet", action="store_true", help="only log warnings")
        if name == "compare":
            p.add_argument("--no-run", action="store_true",
                           help="fail instead of producing missing artifacts")
    return parser


def _load(args) -> tuple[RunConfig, Path]:
    cfg = RunConfig.load(args.config)
    overrides = cfg.to_dict()
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.out is not None:
        overrides["output_dir"] = args.out
    if args.trajectory_stride is not None:
        overrides["trajectory_stride"] = args.trajectory_stride
    cfg = RunConfig.from_dict(overrides)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return cfg, out


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING if args.quiet else logging.INFO,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
        stream=sys.stderr,
    )
    try:
        cfg, out = _load(args)
        if args.command == "moments":
            run_moments(cfg, out, cfg.trajectory_stride)
        elif args.command == "density":
            run_density(cfg, out, args.clip_nonnegative)
        elif args.command == "baseline":
            run_baseline(cfg, out, args.clip_nonnegative)
        else:
            run_compare(cfg, out, args.no_run)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, exc)
    except (RankDeficiencyError, DegenerateDensityError) as exc:
        return _fail(EXIT_DEGENERATE, exc)
    except (NumericalError, SdeMomentsError, FloatingPointError, OverflowError) as exc:
        return _fail(EXIT_NUMERICAL, exc)
    return EXIT_OK


def _fail(code: int, exc: Exception) -> int:
    print(json.dumps({"error": type(exc).__name__, "message": str(exc), "exit_code": code}),
          file=sys.stderr)
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
