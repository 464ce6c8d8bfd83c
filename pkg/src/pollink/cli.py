"""Command-line front end.

Subcommands map onto the toolkit's reproducible experiments:

* ``simulate-sweep``: synthesize a dispersive channel and write a probe
  sweep CSV.
* ``analyze-sweep``: derive rotation spectra and fidelity curves from a
  sweep file (one CSV per figure panel plus a JSON report).
* ``rate-fidelity``: simulated fidelity bounds against pair rate.
* ``longrun``: long-duration compensated distribution with uptime ledger.
* ``bounds``: standalone fidelity bounds from a counts JSON.
* ``gen-config``: write the annotated default configuration.

Every stochastic subcommand is deterministic under (config, seed).
Exit codes: 0 success, 2 bad configuration or input, 3 simulation failure.
"""

from __future__ import annotations

import argparse
import copy
import json
import os
import sys

import numpy as np

from . import apc, bounds as bounds_mod, channel as chan, dispersion, source as src
from ._backend import backend_name
from .errors import ConfigError, EstimationError, PolLinkError, SchemaError

DEFAULT_SEED = 20260101

DEFAULT_CONFIG = {
    "_doc": {
        "seed": "global seed; subcommand streams are derived from it",
        "out_dir": "output directory, created if missing",
        "rate_fidelity": "fidelity bounds vs through-fiber pair rate",
        "longrun": "long-duration compensated vs uncompensated distribution",
        "simulate_sweep": "synthetic dispersive channel probe sweep",
        "analyze_sweep": "dispersion analysis of a sweep CSV",
    },
    "seed": DEFAULT_SEED,
    "out_dir": "pollink-out",
    "simulate_sweep": {
        "plates": 6,
        "dispersion_min_rad_per_nm": 0.002,
        "dispersion_max_rad_per_nm": 0.012,
        "timestamps": 1,
        "interval_s": 600.0,
        "noise": 0.0,
    },
    "analyze_sweep": {
        "lambda0_nm": 1300.0,
        "fwhm_list_nm": [0.0, 1.0, 2.0, 4.0, 6.0, 8.0, 10.0, 14.0, 20.0],
        "center_sweep_fwhm_nm": 10.0,
        "t_index": 0,
    },
    "rate_fidelity": {
        "rate_min_pairs_per_s": 2.0e4,
        "rate_max_pairs_per_s": 5.0e5,
        "n_rates": 20,
        "kappa_pairs_per_s": 5.5e6,
        "max_rate_pairs_per_s": 1.0e6,
        "dwell_s": 60.0,
        "n_bootstrap": 500,
        "detector_efficiencies": [0.68, 0.90],
        "loss_budget": None,
    },
    "longrun": {
        "duration_s": 1296000.0,
        "sampling_period_s": 240.0,
        "rate_pairs_per_s": 2.0e5,
        "kappa_pairs_per_s": 5.5e6,
        "max_rate_pairs_per_s": 1.0e6,
        "dwell_s": 25.0,
        "quantum_wavelength_nm": 1324.0,
        "trailing_hours": 0.0,
        "initial_channel_plates": 6,
        "polarimeter_noise": 0.005,
        "detector_efficiencies": [0.68, 0.90],
        "loss_budget": None,
        "apc": {
            "trigger_threshold": 0.99,
            "optimization_threshold": 0.99,
            "check_period_s": 20.0,
            "samples_per_probe": 10,
            "gradient_step_rad": 0.4,
            "fd_delta_rad": 0.05,
            "max_iterations": 24,
            "measurement_cost_s": 0.03,
            "iteration_cost_s": 0.04,
        },
        "drift": {
            "walk_rad_per_sqrt_hour": 0.02,
            "jump_rate_per_day": 2.0,
            "jump_magnitude_median_rad": 0.5,
            "jump_magnitude_sigma": 0.6,
            "decorrelation_nm": 15.0,
        },
    },
}


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


def _load_config(path: str | None) -> dict:
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                user = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
        if not isinstance(user, dict):
            raise ConfigError("config file must hold a JSON object")
        cfg = _merge(cfg, user)
    return cfg


def _out_dir(args, cfg) -> str:
    out = args.out or cfg["out_dir"]
    os.makedirs(out, exist_ok=True)
    return out


def _seed(args, cfg) -> int:
    return int(args.seed if args.seed is not None else cfg["seed"])


def _loss_budget(section) -> chan.LossBudget:
    pairs = section.get("loss_budget")
    if pairs is None:
        return chan.default_loss_budget()
    return chan.LossBudget.from_pairs([(e["name"], e["db"]) for e in pairs])


def _detectors(section) -> tuple[src.DetectorModel, src.DetectorModel]:
    eff = section.get("detector_efficiencies", [0.68, 0.90])
    return (src.DetectorModel(float(eff[0])), src.DetectorModel(float(eff[1])))


def _cmd_gen_config(args, cfg) -> int:
    text = json.dumps(DEFAULT_CONFIG, indent=2, sort_keys=True)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        path = os.path.join(args.out, "config.json")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
        print(path)
    else:
        print(text)
    return 0


def _cmd_simulate_sweep(args, cfg) -> int:
    section = cfg["simulate_sweep"]
    out = _out_dir(args, cfg)
    rng = np.random.default_rng(_seed(args, cfg))
    plates = int(args.plates if args.plates is not None else section["plates"])
    channel = chan.synth_dispersive_channel(
        plates,
        rng,
        dispersion_range_rad_per_nm=(
            float(section["dispersion_min_rad_per_nm"]),
            float(section["dispersion_max_rad_per_nm"]),
        ),
    )
    sweep = dispersion.simulate_sweep(
        channel,
        rng,
        n_timestamps=int(args.timestamps if args.timestamps is not None else section["timestamps"]),
        interval_s=float(section["interval_s"]),
        noise=float(args.noise if args.noise is not None else section["noise"]),
        label=f"{plates}-plate synthetic channel",
    )
    path = os.path.join(out, "sweep.csv")
    dispersion.save_sweep(sweep, path)
    print(path)
    return 0


def _cmd_analyze_sweep(args, cfg) -> int:
    section = cfg["analyze_sweep"]
    out = _out_dir(args, cfg)
    sweep = dispersion.load_sweep(args.sweep)
    lambda0 = float(args.lambda0 if args.lambda0 is not None else section["lambda0_nm"])
    if args.fwhm is not None:
        fwhm_list = [float(x) for x in args.fwhm.split(",")]
    else:
        fwhm_list = [float(x) for x in section["fwhm_list_nm"]]
    report = dispersion.analyze_sweep(
        sweep,
        lambda0_nm=lambda0,
        fwhm_grid_nm=fwhm_list,
        center_sweep_fwhm_nm=float(section["center_sweep_fwhm_nm"]),
        t_index=int(section["t_index"]),
    )
    written = dispersion.write_report(report, out)
    for name in written:
        print(os.path.join(out, name))
    return 0


RATE_FIDELITY_COLUMNS = ("rate", "lower", "upper", "sigma_l", "sigma_u", "theory_F")


def _cmd_rate_fidelity(args, cfg) -> int:
    section = cfg["rate_fidelity"]
    out = _out_dir(args, cfg)
    seed = _seed(args, cfg)
    n_rates = int(section["n_rates"])
    rate_min = float(section["rate_min_pairs_per_s"])
    rate_max = float(section["rate_max_pairs_per_s"])
    if n_rates < 1 or rate_min <= 0.0 or rate_max < rate_min:
        raise ConfigError("rate grid is malformed")
    rates = np.geomspace(rate_min, rate_max, n_rates)
    model = src.SourceModel(
        kappa_pairs_per_s=float(section["kappa_pairs_per_s"]),
        max_rate_pairs_per_s=float(section["max_rate_pairs_per_s"]),
    )
    detectors = _detectors(section)
    budget = _loss_budget(section)
    trans = chan.transmission(budget.total_db)
    plan = src.MeasurementPlan(dwell_s=float(section["dwell_s"]))
    n_boot = int(section["n_bootstrap"])
    streams = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n_rates)]

    rows = []
    for rate, rng in zip(rates, streams):
        state = src.state_at_rate(model, float(rate))
        counts = src.simulate_counts(state, float(rate), trans, detectors, plan, rng)
        result = bounds_mod.bounds_with_uncertainties(counts, rng, n_resamples=n_boot)
        theory = src.fidelity_from_gsi(src.gsi_at_rate(model, float(rate)))
        rows.append(
            (float(rate), result.lower, result.upper,
             result.sigma_lower, result.sigma_upper, theory)
        )

    path = os.path.join(out, "rate_fidelity.csv")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(",".join(RATE_FIDELITY_COLUMNS) + "\n")
        for row in rows:
            fh.write(",".join(f"{x:.10g}" for x in row) + "\n")
    print(path)
    return 0


def _cmd_longrun(args, cfg) -> int:
    section = cfg["longrun"]
    out = _out_dir(args, cfg)
    seed = _seed(args, cfg)
    rng = np.random.default_rng(seed)
    duration = float(args.duration if args.duration is not None else section["duration_s"])

    try:
        apc_cfg = apc.APCConfig(**section["apc"])
        drift = chan.DriftProcess(**section["drift"])
    except TypeError as exc:
        raise ConfigError(f"bad longrun config: {exc}") from None
    polarimeter = chan.PolarimeterModel(stokes_noise=float(section["polarimeter_noise"]))
    channel = chan.synth_dispersive_channel(
        int(section["initial_channel_plates"]),
        rng,
        loss=_loss_budget(section),
        drift=drift,
        polarimeter=polarimeter,
    )
    model = src.SourceModel(
        kappa_pairs_per_s=float(section["kappa_pairs_per_s"]),
        max_rate_pairs_per_s=float(section["max_rate_pairs_per_s"]),
    )
    plan = src.MeasurementPlan(dwell_s=float(section["dwell_s"]))
    result = apc.run_long_term(
        channel,
        apc_cfg,
        model,
        float(section["rate_pairs_per_s"]),
        plan,
        duration,
        float(section["sampling_period_s"]),
        rng,
        quantum_wavelength_nm=float(section["quantum_wavelength_nm"]),
        detectors=_detectors(section),
    )

    trailing = float(args.trailing_hours if args.trailing_hours is not None
                     else section["trailing_hours"])
    ts_path = os.path.join(out, "timeseries.csv")
    cyc_path = os.path.join(out, "cycles.csv")
    sum_path = os.path.join(out, "summary.json")
    apc.write_timeseries_csv(result, ts_path, trailing_hours=trailing)
    apc.write_cycles_csv(result, cyc_path)
    with open(sum_path, "w", encoding="utf-8") as fh:
        json.dump(result.summary(), fh, indent=2, sort_keys=True)
    for path in (ts_path, cyc_path, sum_path):
        print(path)
    return 0


def _cmd_bounds(args, cfg) -> int:
    counts = src.CoincidenceCounts.from_json(args.counts)
    rng = np.random.default_rng(_seed(args, cfg))
    result = bounds_mod.bounds_with_uncertainties(counts, rng)
    text = json.dumps(result.to_dict(), indent=2, sort_keys=True)
    print(text)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "bounds.json"), "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pollink",
        description="Polarization-entanglement link simulation and analysis toolkit",
    )
    parser.add_argument("--version", action="version",
                        version=f"pollink 0.1.0 ({backend_name()} kernels)")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON configuration file")
        p.add_argument("--seed", type=int, help="override the configured seed")
        p.add_argument("--out", help="output directory")

    p = sub.add_parser("gen-config", help="write annotated default configuration")
    common(p)
    p.set_defaults(func=_cmd_gen_config)

    p = sub.add_parser("simulate-sweep", help="synthesize a probe sweep CSV")
    common(p)
    p.add_argument("--plates", type=int, help="birefringent plate count")
    p.add_argument("--timestamps", type=int, help="number of sweep repetitions")
    p.add_argument("--noise", type=float, help="polarimeter noise per Stokes component")
    p.set_defaults(func=_cmd_simulate_sweep)

    p = sub.add_parser("analyze-sweep", help="dispersion analysis of a sweep CSV")
    common(p)
    p.add_argument("--sweep", required=True, help="sweep CSV path")
    p.add_argument("--lambda0", type=float, help="correction wavelength (nm)")
    p.add_argument("--fwhm", help="comma-separated spectral widths (nm)")
    p.set_defaults(func=_cmd_analyze_sweep)

    p = sub.add_parser("rate-fidelity", help="fidelity bounds vs pair rate")
    common(p)
    p.set_defaults(func=_cmd_rate_fidelity)

    p = sub.add_parser("longrun", help="long-duration compensated distribution")
    common(p)
    p.add_argument("--duration", type=float, help="simulated duration (s)")
    p.add_argument("--trailing-hours", type=float, dest="trailing_hours",
                   help="add trailing-average columns with this window")
    p.set_defaults(func=_cmd_longrun)

    p = sub.add_parser("bounds", help="fidelity bounds from a counts JSON")
    common(p)
    p.add_argument("--counts", required=True, help="counts JSON path")
    p.set_defaults(func=_cmd_bounds)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _load_config(args.config)
        return args.func(args, cfg)
    except (SchemaError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except EstimationError as exc:
        print(f"simulation failure: {exc}", file=sys.stderr)
        return 3
    except PolLinkError as exc:
        print(f"simulation failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
