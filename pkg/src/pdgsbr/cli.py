"""Config-driven experiment harness.

Verbs: ``simulate`` (synthetic data), ``run`` (one chain), ``report``
(diagnostics from a trace), ``reproduce`` (the three bundled borrowing
experiments end to end). Exit codes: 0 success, 2 config error, 3 numeric
failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import importlib.resources
import json
import logging
import os
import sys

import numpy as np
import yaml

from . import __version__
from .diagnostics import (
    Hpdi,
    boi,
    ergodic_average,
    hpdi,
    kde,
    pare_table,
    posterior_mean_matrix,
    silverman_bandwidth,
)
from .distributions import RngHandle
from .dynamics import (
    MultiSeries,
    NAMED_MAPS,
    NoiseMixtureSpec,
    PolynomialMap,
    compound_noise,
    simulate_series,
)
from .errors import ConfigError, DivergenceError, SingularDesignError
from .gibbs import GibbsConfig, run_chain, run_gsbr, run_parametric_gaussian
from .model import (
    PriorConfig,
    load_checkpoint,
    read_trace_jsonl,
    write_trace_csv,
    write_trace_jsonl,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_IO = 4

DESK_SCALE = {"iterations": 10_000, "burn_in": 5_000}
FULL_SCALE = {"iterations": 60_000, "burn_in": 20_000}


# --- configuration --------------------------------------------------------------

def load_config(path) -> dict:
    try:
        with open(path) as fh:
            doc = yaml.safe_load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config must be a mapping")
    return doc


def bundled_config(experiment: str) -> dict:
    name = experiment.lower()
    if name not in ("4a", "4b", "4c"):
        raise ConfigError(f"unknown experiment {experiment!r}; expected 4A, 4B or 4C")
    ref = importlib.resources.files("pdgsbr.configs").joinpath(f"{name}.yaml")
    return yaml.safe_load(ref.read_text())


def _resolve_map(spec) -> PolynomialMap:
    if isinstance(spec, str):
        if spec not in NAMED_MAPS:
            raise ConfigError(f"unknown named map {spec!r}; known: {sorted(NAMED_MAPS)}")
        return NAMED_MAPS[spec]
    return PolynomialMap(tuple(spec))


def parse_data_block(block: dict):
    """Synthetic spec -> (per-series (map, noise, n, x0), horizons, selection, seed)."""
    for key in ("maps", "n", "x0", "selection", "components", "seed"):
        if key not in block:
            raise ConfigError(f"data block is missing {key!r}")
    maps = [_resolve_map(s) for s in block["maps"]]
    m = len(maps)
    ns = [int(v) for v in block["n"]]
    x0s = [float(v) for v in block["x0"]]
    horizons = [int(v) for v in block.get("horizon", [1] * m)]
    selection = [list(map(float, row)) for row in block["selection"]]
    if not (len(ns) == len(x0s) == len(horizons) == len(selection) == m):
        raise ConfigError("data block dimensions disagree (maps/n/x0/horizon/selection)")
    components = {}
    for key, spec in block["components"].items():
        j, l = sorted(int(t) for t in str(key).split(","))
        components[(j, l)] = NoiseMixtureSpec(tuple(spec["weights"]), tuple(spec["variances"]))
    noises = []
    for j in range(m):
        row = selection[j]
        if len(row) != m:
            raise ConfigError(f"selection row {j + 1} has wrong length")
        if abs(sum(row) - 1.0) > 1e-9:
            raise ConfigError(f"selection row {j + 1} does not sum to 1")
        comps = [components.get(tuple(sorted((j + 1, l + 1)))) for l in range(m)]
        noises.append(compound_noise(row, comps))
    specs = list(zip(maps, noises, ns, x0s))
    return specs, horizons, selection, int(block["seed"])


def parse_prior_block(block: dict, m: int, alpha_key: str = "dirichlet_alpha") -> PriorConfig:
    if alpha_key not in block:
        raise ConfigError(f"prior block is missing {alpha_key!r}")
    alpha = np.asarray(block[alpha_key], dtype=float)
    if alpha.shape != (m, m):
        raise ConfigError(f"{alpha_key} must be an {m}x{m} matrix, got shape {alpha.shape}")
    x0_support = block.get("x0_support", [-5.0, 5.0])
    return PriorConfig(
        m=m,
        dirichlet_alpha=alpha,
        beta_a=np.asarray(block.get("beta_a", 0.5), dtype=float),
        beta_b=np.asarray(block.get("beta_b", 0.5), dtype=float),
        gamma_a=float(block.get("gamma_a", 1e-3)),
        gamma_b=float(block.get("gamma_b", 1e-3)),
        poly_degree=int(block.get("poly_degree", 5)),
        horizon=np.asarray(block.get("horizon", [1] * m), dtype=int),
        x0_support=np.asarray(x0_support, dtype=float),
    )


def parse_sampler_block(block: dict, seed_override=None, scale=None) -> GibbsConfig:
    block = dict(block or {})
    if scale is not None:
        block.update(DESK_SCALE if scale == "desk" else FULL_SCALE)
    try:
        config = GibbsConfig(
            iterations=int(block.get("iterations", 10_000)),
            burn_in=int(block.get("burn_in", 5_000)),
            thinning=int(block.get("thinning", 1)),
            seed=int(seed_override if seed_override is not None else block.get("seed", 0)),
            slice_width=float(block.get("slice_width", 0.25)),
            max_stepout=int(block.get("max_stepout", 16)),
            checkpoint_interval=int(block.get("checkpoint_interval", 0)),
        )
    except ValueError as exc:
        raise ConfigError(f"bad sampler block: {exc}") from exc
    return config


def config_hash(doc: dict) -> str:
    canonical = json.dumps(doc, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canonical.encode()).hexdigest()


def write_manifest(out_dir, command: str, doc: dict, extra: dict) -> None:
    manifest = {
        "command": command,
        "config_hash": config_hash(doc),
        "config": doc,
        "version": __version__,
    }
    manifest.update(extra)
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=1, default=str)


# --- simulate --------------------------------------------------------------------

def cmd_simulate(doc: dict, out_dir, seed_override=None, allow_escape=False) -> MultiSeries:
    specs, horizons, selection, seed = parse_data_block(doc["data"])
    if seed_override is not None:
        seed = int(seed_override)
    rng = RngHandle(seed)
    obs, futs = [], []
    for j, ((poly, noise, n, x0), horizon) in enumerate(zip(specs, horizons)):
        try:
            series, future = simulate_series(poly, noise, n, x0, horizon, rng, series_index=j)
        except DivergenceError as exc:
            if not allow_escape or exc.prefix is None or exc.prefix.size < 2:
                raise
            logger.warning("series %d diverged at step %d; keeping the finite prefix",
                           j + 1, exc.index + 1)
            series, future = exc.prefix, np.empty(0)
        obs.append(series)
        futs.append(future)
    data = MultiSeries(
        series=obs,
        x0_true=[float(s[3]) for s in specs],
        maps_true=[s[0] for s in specs],
        noise_true=[s[1] for s in specs],
        futures_true=futs,
        selection_true=selection,
    )
    os.makedirs(out_dir, exist_ok=True)
    data.save_json(os.path.join(out_dir, "data.json"))
    data.save_csv(out_dir)
    write_manifest(out_dir, "simulate", doc, {"data_seed": seed})
    return data


# --- run -------------------------------------------------------------------------

SAMPLERS = {"pdgsbr": run_chain, "gsbr": run_gsbr, "parametric": run_parametric_gaussian}


def cmd_run(doc: dict, data_path, out_dir, sampler="pdgsbr", seed_override=None,
            scale=None, resume_path=None, alpha_key="dirichlet_alpha"):
    data = MultiSeries.load_json(data_path)
    prior = parse_prior_block(doc.get("prior", {}), data.m, alpha_key=alpha_key)
    config = parse_sampler_block(doc.get("sampler", {}), seed_override, scale)
    if sampler not in SAMPLERS:
        raise ConfigError(f"unknown sampler {sampler!r}")
    os.makedirs(out_dir, exist_ok=True)
    checkpoint_path = os.path.join(out_dir, "checkpoint.json")
    resume = None
    if resume_path:
        state, rng, _ = load_checkpoint(resume_path)
        resume = (state, rng)
    records = SAMPLERS[sampler](
        data, prior, config, checkpoint_path=checkpoint_path, resume=resume
    )
    write_trace_csv(os.path.join(out_dir, "trace.csv"), records)
    write_trace_jsonl(os.path.join(out_dir, "trace.jsonl"), records)
    write_manifest(out_dir, "run", doc, {
        "sampler": sampler,
        "chain_seed": config.seed,
        "data_path": os.path.basename(str(data_path)),
        "iterations": config.iterations,
        "burn_in": config.burn_in,
        "thinning": config.thinning,
        "alpha_key": alpha_key,
    })
    return records


# --- report ----------------------------------------------------------------------

def _write_grid_csv(path, grid_density) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["grid", "density"])
        for g, d in zip(grid_density.grid, grid_density.density):
            writer.writerow([repr(float(g)), repr(float(d))])


def _kde_with_bounds(samples, bounds):
    samples = np.asarray(samples, dtype=float)
    if bounds is not None:
        lo, hi = bounds
    else:
        # robust default range: central 99% of samples, padded by 4 bandwidths
        core = samples[(samples >= np.quantile(samples, 0.005))
                       & (samples <= np.quantile(samples, 0.995))]
        core = core if core.size >= 2 else samples
        h = silverman_bandwidth(core)
        lo, hi = core.min() - 4 * h, core.max() + 4 * h
        samples = core
    grid = np.linspace(lo, hi, 512)
    return kde(samples, grid=grid)


def cmd_report(trace_path, data_path, out_dir, kde_bounds=None) -> dict:
    records = read_trace_jsonl(trace_path)
    if not records:
        raise ConfigError(f"empty trace: {trace_path}")
    data = MultiSeries.load_json(data_path)
    m = len(records[0].theta)
    if data.m != m:
        raise ConfigError(f"trace has m={m} series but data has m={data.m}")
    os.makedirs(out_dir, exist_ok=True)
    summary = {}

    nonparametric = records[0].p is not None
    if nonparametric:
        mean_p = posterior_mean_matrix(records)
        np.savetxt(os.path.join(out_dir, "posterior_mean_p.csv"), mean_p,
                   delimiter=",", fmt="%.17g")
        lam_mean = np.mean([r.lam for r in records], axis=0)
        np.savetxt(os.path.join(out_dir, "posterior_mean_lambda.csv"), lam_mean,
                   delimiter=",", fmt="%.17g")
        summary["boi"] = {
            str(j + 1): boi(records, j, [l for l in range(m) if l != j]) for j in range(m)
        }
        summary["posterior_mean_p"] = mean_p.tolist()

    if data.maps_true is not None:
        table = pare_table(records, data)
        with open(os.path.join(out_dir, "pare_table.csv"), "w", newline="") as fh:
            writer = csv.writer(fh)
            degree = table["per_coefficient"].shape[1]
            writer.writerow(["series"] + [f"theta_{r}" for r in range(degree)] + ["mean"])
            for j in range(m):
                writer.writerow([j + 1] + [f"{v:.6g}" for v in table["per_coefficient"][j]]
                                + [f"{table['row_mean'][j]:.6g}"])
        summary["mean_pare"] = {str(j + 1): float(table["row_mean"][j]) for j in range(m)}

    for j in range(m):
        theta_samples = np.asarray([r.theta[j] for r in records])
        with open(os.path.join(out_dir, f"ergodic_theta_{j + 1}.csv"), "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow([f"theta_{r}" for r in range(theta_samples.shape[1])])
            running = np.column_stack(
                [ergodic_average(theta_samples[:, r]) for r in range(theta_samples.shape[1])]
            )
            for row in running:
                writer.writerow([repr(float(v)) for v in row])

        _write_grid_csv(os.path.join(out_dir, f"kde_noise_{j + 1}.csv"),
                        _kde_with_bounds([r.z_pred[j] for r in records], kde_bounds))
        _write_grid_csv(os.path.join(out_dir, f"kde_x0_{j + 1}.csv"),
                        _kde_with_bounds([r.x0[j] for r in records], None))
        future_samples = [float(r.future[j][0]) for r in records if len(r.future[j])]
        if future_samples:
            _write_grid_csv(os.path.join(out_dir, f"kde_future_{j + 1}.csv"),
                            _kde_with_bounds(future_samples, None))
            interval = hpdi(future_samples, 0.95)
            summary.setdefault("hpdi_future", {})[str(j + 1)] = {
                "lower": interval.lower, "upper": interval.upper,
                "width": interval.upper - interval.lower, "mass": interval.mass,
            }

    if nonparametric:
        with open(os.path.join(out_dir, "boi.json"), "w") as fh:
            json.dump({"boi": summary["boi"],
                       "posterior_mean_p": summary["posterior_mean_p"]}, fh, indent=1)
    if "hpdi_future" in summary:
        with open(os.path.join(out_dir, "hpdi.json"), "w") as fh:
            json.dump(summary["hpdi_future"], fh, indent=1)
    with open(os.path.join(out_dir, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=1)
    return summary


# --- reproduce ---------------------------------------------------------------------

def cmd_reproduce(experiment: str, scale: str, out_dir, doc=None) -> dict:
    """simulate -> run (weak prior) -> run (strong prior) -> report, then compare."""
    doc = doc if doc is not None else bundled_config(experiment)
    os.makedirs(out_dir, exist_ok=True)
    data_dir = os.path.join(out_dir, "data")
    data = cmd_simulate(doc, data_dir)
    data_path = os.path.join(data_dir, "data.json")

    base_seed = int(doc.get("sampler", {}).get("seed", 0))
    results = {}
    for label, alpha_key, seed in (
        ("weak", "dirichlet_alpha_weak", base_seed),
        ("strong", "dirichlet_alpha_strong", base_seed + 1),
    ):
        run_dir = os.path.join(out_dir, label)
        cmd_run(doc, data_path, run_dir, sampler="pdgsbr", seed_override=seed,
                scale=scale, alpha_key=alpha_key)
        results[label] = cmd_report(
            os.path.join(run_dir, "trace.jsonl"), data_path, run_dir,
            kde_bounds=doc.get("outputs", {}).get("kde_bounds"),
        )

    rep = doc.get("reproduce", {})
    short = int(rep.get("short_series", 2)) - 1
    donors = [int(v) - 1 for v in rep.get("donors", [1])]
    comparison = {"experiment": experiment, "scale": scale,
                  "short_series": short + 1, "donors": [d + 1 for d in donors]}
    lines = [f"experiment {experiment} ({scale} scale)",
             f"{'quantity':<28}{'weak':>12}{'strong':>12}"]
    for label in ("weak", "strong"):
        summary = results[label]
        comparison[f"boi_{label}"] = float(
            sum(summary["posterior_mean_p"][short][d] for d in donors)
        )
        comparison[f"mean_pare_{label}"] = summary.get("mean_pare", {})
        comparison[f"hpdi_width_{label}"] = summary.get("hpdi_future", {}).get(
            str(short + 1), {}).get("width")
    lines.append(f"{'BoI (short series)':<28}{comparison['boi_weak']:>12.4f}"
                 f"{comparison['boi_strong']:>12.4f}")
    for j in range(data.m):
        weak_pare = comparison["mean_pare_weak"].get(str(j + 1), float("nan"))
        strong_pare = comparison["mean_pare_strong"].get(str(j + 1), float("nan"))
        lines.append(f"{f'mean PARE series {j + 1} (%)':<28}{weak_pare:>12.3f}{strong_pare:>12.3f}")
    if comparison["hpdi_width_weak"] is not None:
        lines.append(f"{'HPDI width (short future)':<28}"
                     f"{comparison['hpdi_width_weak']:>12.5f}"
                     f"{comparison['hpdi_width_strong']:>12.5f}")
    print("\n".join(lines))
    with open(os.path.join(out_dir, "comparison.json"), "w") as fh:
        json.dump(comparison, fh, indent=1)
    write_manifest(out_dir, "reproduce", doc, {"scale": scale})
    return comparison


# --- argument parsing --------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pdgsbr",
        description="Joint reconstruction and prediction of perturbed polynomial maps",
    )
    sub = parser.add_subparsers(dest="verb", required=True)

    p_sim = sub.add_parser("simulate", help="generate synthetic multi-series data")
    p_sim.add_argument("--config", required=True)
    p_sim.add_argument("--seed", type=int, default=None)
    p_sim.add_argument("--out", default=None)
    p_sim.add_argument("--allow-escape", action="store_true")

    p_run = sub.add_parser("run", help="run one Gibbs chain")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--data", required=True)
    p_run.add_argument("--out", default=None)
    p_run.add_argument("--sampler", choices=sorted(SAMPLERS), default="pdgsbr")
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--resume", default=None)

    p_rep = sub.add_parser("report", help="emit diagnostics from a trace")
    p_rep.add_argument("--trace", required=True)
    p_rep.add_argument("--data", required=True)
    p_rep.add_argument("--out", default=None)

    p_repr = sub.add_parser("reproduce", help="run a bundled borrowing experiment")
    p_repr.add_argument("experiment", choices=["4A", "4B", "4C", "4a", "4b", "4c"])
    p_repr.add_argument("--scale", choices=["desk", "full"], default="desk")
    p_repr.add_argument("--out", default=None)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(message)s", stream=sys.stderr)
    args = build_parser().parse_args(argv)
    try:
        if args.verb == "simulate":
            doc = load_config(args.config)
            out = args.out or doc.get("outputs", {}).get("directory", "out")
            cmd_simulate(doc, out, seed_override=args.seed, allow_escape=args.allow_escape)
        elif args.verb == "run":
            doc = load_config(args.config)
            out = args.out or doc.get("outputs", {}).get("directory", "out")
            cmd_run(doc, args.data, out, sampler=args.sampler,
                    seed_override=args.seed, resume_path=args.resume)
        elif args.verb == "report":
            out = args.out or os.path.dirname(os.path.abspath(args.trace))
            cmd_report(args.trace, args.data, out)
        elif args.verb == "reproduce":
            out = args.out or f"reproduce_{args.experiment.lower()}_{args.scale}"
            cmd_reproduce(args.experiment, args.scale, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as exc:
        print(f"numeric failure: {exc}; try a different data seed "
              "(or --allow-escape to keep finite prefixes)", file=sys.stderr)
        return EXIT_NUMERIC
    except SingularDesignError as exc:
        print(f"numeric failure: {exc}; the series may have too few distinct "
              "states for the polynomial degree", file=sys.stderr)
        return EXIT_NUMERIC
    except (ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
