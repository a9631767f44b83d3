"""Command-line front door: generate, evaluate, simulate, fixtures.

Exit codes: 0 success, 1 input error (bad files, bad config, bad
overrides), 2 pipeline error. Every subcommand's --help lists the config
keys it reads, rendered from the schema so the two cannot drift.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

import numpy as np

from .base import InputDataError
from .config import load_validated, schema_help
from .data_io import load_microdata, load_population
from .epidemic import EpiConfig, build_agents, run_ensemble
from .fixtures import build_fixture_inputs
from .metrics import canonical_person_frame, evaluate_population, export_plot_data
from .pipeline import PipelineError, generate

log = logging.getLogger("popforge")

_GEO_EXPORTS = (
    ("households", "HHID", "H_Lat", "H_Lon"),
    ("workplaces", "WorkPlaceID", "W_Lat", "W_Lon"),
    ("schools", "school_id", "school_lat", "school_long"),
    ("public_places", "public_place_id", "public_place_lat", "public_place_long"),
)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="popforge",
        description="synthetic population generation, evaluation and SIR simulation")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_text, with_config=True):
        p = sub.add_parser(
            name, help=help_text,
            epilog=schema_help(name) if with_config else None,
            formatter_class=argparse.RawDescriptionHelpFormatter)
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--verbose", action="store_true", help="log progress to stderr")
        if with_config:
            p.add_argument("--config", required=True, help="JSON config file")
            p.add_argument("--overrides", nargs="*", default=[], metavar="KEY=VALUE",
                           help="dotted config overrides, type-checked against the schema")
        return p

    gen = add("generate", "run the full population pipeline")
    gen.add_argument("--threads", type=int, default=None,
                     help="worker processes (overrides the config key)")
    add("evaluate", "score a population against its source microdata")
    add("simulate", "run the SIR model over a generated population")
    add("fixtures", "write the bundled desk-scale fixture inputs", with_config=False)
    return parser


def _cmd_generate(args) -> int:
    cfg = load_validated(args.config, "generate", args.overrides)
    result = generate(cfg, args.out, threads=args.threads)
    log.info("wrote %s rows to %s", result.rows, result.population_path)
    print(f"population: {result.population_path} ({result.rows} persons, "
          f"{result.households} households)")
    print(f"provenance: {result.provenance_path}")
    return 0


def _cmd_evaluate(args) -> int:
    cfg = load_validated(args.config, "evaluate", args.overrides)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    population = load_population(cfg["population_path"])
    sample = load_microdata(cfg["individuals_path"], cfg["households_path"])
    synth = canonical_person_frame(population)
    real = sample.persons[["age", "sex", "height", "weight"]]

    for col in list(cfg["numeric_columns"]) + list(cfg["categorical_columns"]):
        if col not in synth.columns:
            raise InputDataError(f"unknown evaluation column {col!r}; "
                                 f"available: {sorted(synth.columns)}")

    mlp_params = {"hidden_units": cfg["mlp_hidden_units"], "epochs": cfg["mlp_epochs"],
                  "batch_size": cfg["mlp_batch_size"],
                  "learning_rate": cfg["mlp_learning_rate"],
                  "momentum": cfg["mlp_momentum"]}
    report = evaluate_population(
        synth, real,
        numeric_columns=cfg["numeric_columns"],
        categorical_columns=cfg["categorical_columns"],
        efficacy_targets=cfg["efficacy_targets"],
        efficacy_models=cfg["efficacy_models"],
        train_fraction=cfg["train_fraction"],
        synth_train_size=cfg["synth_train_size"],
        mlp_params=mlp_params,
        seed=cfg["rng_seed"])
    report_path = out / "report.txt"
    report.write_text(report_path)
    print(f"report: {report_path}")

    export_plot_data(real, synth, list(cfg["numeric_columns"]), out / "plot_data",
                     bin_width=cfg["hist_bin_width"], scatter_cap=cfg["scatter_cap"],
                     seed=cfg["rng_seed"])
    _export_geo(population, out / "plot_data", cfg["geo_cap"], cfg["rng_seed"])
    print(f"plot data: {out / 'plot_data'}")
    return 0


def _export_geo(population, out_dir, cap, seed):
    from .base import derive_rng
    rng = derive_rng(seed, "geo-export")
    out_dir.mkdir(parents=True, exist_ok=True)
    for kind, id_col, lat_col, lon_col in _GEO_EXPORTS:
        sub = population[[id_col, lat_col, lon_col]].dropna()
        sub = sub[sub[id_col] != 0].drop_duplicates(subset=id_col)
        if len(sub) > cap:
            take = np.sort(rng.choice(len(sub), size=cap, replace=False))
            sub = sub.iloc[take]
        sub.rename(columns={id_col: "location_id", lat_col: "lat", lon_col: "lon"}) \
           .to_csv(out_dir / f"geo_{kind}.csv", index=False)


def _cmd_simulate(args) -> int:
    cfg = load_validated(args.config, "simulate", args.overrides)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        agents = build_agents(cfg["population_path"])
    except ValueError as exc:
        raise InputDataError(
            f"population file {cfg['population_path']} lacks required columns: {exc}") from exc

    base = EpiConfig(
        beta_child=cfg["beta_child"], beta_adult=cfg["beta_adult"],
        beta_elderly=cfg["beta_elderly"], child_age_max=cfg["child_age_max"],
        elderly_age_min=cfg["elderly_age_min"],
        recovery_mean_days=cfg["recovery_mean_days"], tick_hours=cfg["tick_hours"],
        initial_infected=cfg["initial_infected"],
        initial_infected_fraction=cfg["initial_infected_fraction"],
        lockdown_threshold=None, n_runs=cfg["n_runs"], max_days=cfg["max_days"],
        include_public_tick=cfg["include_public_tick"], rng_seed=cfg["rng_seed"])

    thresholds = cfg["lockdown_thresholds"]
    for threshold in thresholds:
        econf = dataclasses.replace(base, lockdown_threshold=threshold)
        label = "none" if threshold is None else f"{threshold:g}"
        dest = out if len(thresholds) == 1 else out / f"lockdown_{label}"
        log.info("simulating lockdown threshold %s", label)
        output = run_ensemble(agents, econf)
        paths = output.write(dest)
        print(f"lockdown {label}: {len(paths)} files in {dest}")
    return 0


def _cmd_fixtures(args) -> int:
    paths = build_fixture_inputs(args.out)
    print(f"fixture inputs: {len(paths)} files in {args.out}")
    return 0


_COMMANDS = {"generate": _cmd_generate, "evaluate": _cmd_evaluate,
             "simulate": _cmd_simulate, "fixtures": _cmd_fixtures}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _COMMANDS[args.command](args)
    except PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1 if isinstance(exc.cause, (InputDataError, FileNotFoundError)) else 2
    except (InputDataError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # anything else is a pipeline failure
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
