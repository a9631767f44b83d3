"""Config file handling: JSON with includes, typed schemas, dotted overrides.

Each subcommand owns one schema. A config file may name other files under
"include" (merged first, in order, relative to the including file); the
"config_version" key is checked and everything else must match the schema,
so unknown keys and badly typed overrides fail loudly. CLI --help text for
each subcommand is generated from these schemas and cannot drift.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

from .base import InputDataError

CONFIG_VERSION = 1
_META_KEYS = {"include", "config_version"}

ADHERENCE_LEVELS = [round(0.1 * k, 1) for k in range(11)]


@dataclass
class Field:
    type: str                  # int, float, str, bool, path, int_or_str,
    default: object = None     # int_or_null, float_or_null, list_float,
    required: bool = False     # list_float_or_null, list_str
    help: str = ""


GENERATE_SCHEMA = {
    "region_id": Field("str", required=True, help="region identifier; used in ids and provenance"),
    "district_name": Field("str", None, help="District column value (defaults to region_id)"),
    "state_name": Field("str", "", help="state name recorded for provenance"),
    "region_code": Field("int_or_null", None,
                         help="3-digit numeric id prefix; derived from region_id when null"),
    "individuals_path": Field("path", required=True, help="microdata individuals CSV"),
    "households_path": Field("path", required=True, help="microdata households CSV"),
    "marginals_path": Field("path", required=True, help="marginal totals CSV"),
    "grid_path": Field("path", required=True, help="grid population density CSV (X, Y, Z)"),
    "boundary_path": Field("path", required=True, help="region boundary GeoJSON"),
    "admin_units_path": Field("path", required=True, help="admin unit centers CSV"),
    "target_population": Field("int_or_str", "from_marginals",
                               help="person count to generate, or 'from_marginals'"),
    "n_workplaces": Field("int", 300, help="number of workplaces to generate"),
    "n_public_places": Field("int", 80, help="number of public places to generate"),
    "rng_seed": Field("int", 0, help="master seed; every random stream derives from it"),
    "ipu_tol": Field("float", 1e-3, help="weight-fit average relative deviation target"),
    "ipu_max_iter": Field("int", 2000, help="weight-fit epoch budget"),
    "cell_size_deg": Field("float", 1.0 / 120.0,
                           help="grid cell side in degrees (default 30 arc-seconds)"),
    "oversample_factor": Field("float", 1.5, help="rejection-sampling batch oversize factor"),
    "decay_form": Field("str", "reciprocal",
                        help="distance decay: reciprocal, exponential or power"),
    "decay_d_min": Field("float", 1e-4, help="distance floor for reciprocal/power decay"),
    "decay_rate": Field("float", 1.0, help="rate for exponential decay"),
    "decay_exponent": Field("float", 1.0, help="exponent for power decay"),
    "nearest_candidates": Field("int_or_null", 200,
                                help="restrict assignment draws to this many nearest locations; null = exact"),
    "adherence_choices": Field("list_float", ADHERENCE_LEVELS,
                               help="values the per-person adherence column is drawn from"),
    "essential_worker_rate": Field("float", 0.05, help="Bernoulli rate among workers"),
    "public_transport_value": Field("int", 1, help="constant PublicTransport_Jobs value"),
    "jitter_scale": Field("float", 0.1,
                          help="attribute jitter sigma as fraction of stratum std"),
    "min_stratum_size": Field("int", 20, help="minimum (age bin, sex) stratum size before merging"),
    "age_bin_width": Field("int", 5, help="attribute-conditioning age bin width in years"),
    "shard_persons": Field("int", 100_000, help="persons per generation shard"),
    "threads": Field("int_or_null", None, help="worker processes; null = machine parallelism"),
}

EVALUATE_SCHEMA = {
    "population_path": Field("path", required=True, help="generated population CSV"),
    "individuals_path": Field("path", required=True, help="source microdata individuals CSV"),
    "households_path": Field("path", required=True, help="source microdata households CSV"),
    "numeric_columns": Field("list_str", ["age", "height", "weight"],
                             help="columns scored with the KS statistic"),
    "categorical_columns": Field("list_str", ["sex"],
                                 help="columns scored with the chi-square test"),
    "efficacy_targets": Field("list_str", ["weight", "height"],
                              help="regression targets for the efficacy comparison"),
    "efficacy_models": Field("list_str", ["linear", "mlp"], help="models to compare"),
    "train_fraction": Field("float", 0.7, help="real-data train split fraction"),
    "synth_train_size": Field("int_or_null", None,
                              help="synthetic training rows; null matches the real training size"),
    "hist_bin_width": Field("float_or_null", 5.0,
                            help="histogram bin width for plot export; null = 40 equal bins"),
    "scatter_cap": Field("int", 10_000, help="max scatter points exported per source"),
    "geo_cap": Field("int", 10_000, help="max geographic points exported per kind"),
    "mlp_hidden_units": Field("int", 32, help="MLP hidden layer width"),
    "mlp_epochs": Field("int", 200, help="MLP training epochs"),
    "mlp_batch_size": Field("int", 64, help="MLP mini-batch size"),
    "mlp_learning_rate": Field("float", 0.01, help="MLP learning rate"),
    "mlp_momentum": Field("float", 0.9, help="MLP momentum"),
    "rng_seed": Field("int", 0, help="seed for splits, subsampling and MLP training"),
}

SIMULATE_SCHEMA = {
    "population_path": Field("path", required=True, help="generated population CSV"),
    "beta_child": Field("float", 0.15, help="per-tick transmission rate, ages <= child_age_max"),
    "beta_adult": Field("float", 0.22, help="per-tick transmission rate, adult band"),
    "beta_elderly": Field("float", 0.18, help="per-tick transmission rate, ages >= elderly_age_min"),
    "child_age_max": Field("int", 17, help="upper age of the child transmission band"),
    "elderly_age_min": Field("int", 65, help="lower age of the elderly transmission band"),
    "recovery_mean_days": Field("float", 7.0, help="mean of the exponential recovery time"),
    "tick_hours": Field("int", 12, help="tick length in hours; must divide 24"),
    "initial_infected": Field("int", 20, help="agents seeded infected at tick 0"),
    "initial_infected_fraction": Field("float_or_null", None,
                                       help="overrides initial_infected when set"),
    "lockdown_thresholds": Field("list_float_or_null", [None],
                                 help="active-infected fractions triggering lockdown; null = never"),
    "n_runs": Field("int", 20, help="replicates per threshold scenario"),
    "max_days": Field("int", 180, help="simulated horizon in days"),
    "include_public_tick": Field("bool", False,
                                 help="insert a public-place slot into the daily schedule"),
    "rng_seed": Field("int", 0, help="master seed for all replicates"),
}

SCHEMAS = {"generate": GENERATE_SCHEMA, "evaluate": EVALUATE_SCHEMA,
           "simulate": SIMULATE_SCHEMA}


def _coerce(value, ftype, key):
    def fail():
        raise InputDataError(f"config key {key!r}: cannot interpret {value!r} as {ftype}")

    if ftype == "int":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            fail()
        if float(value) != int(value):
            fail()
        return int(value)
    if ftype == "float":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            fail()
        return float(value)
    if ftype == "bool":
        if not isinstance(value, bool):
            fail()
        return value
    if ftype in ("str", "path"):
        if not isinstance(value, str):
            fail()
        return value
    if ftype == "int_or_str":
        if isinstance(value, str):
            return value
        return _coerce(value, "int", key)
    if ftype == "int_or_null":
        return None if value is None else _coerce(value, "int", key)
    if ftype == "float_or_null":
        return None if value is None else _coerce(value, "float", key)
    if ftype == "list_float":
        if not isinstance(value, list) or not value:
            fail()
        return [_coerce(v, "float", key) for v in value]
    if ftype == "list_float_or_null":
        if not isinstance(value, list) or not value:
            fail()
        return [None if v is None else _coerce(v, "float", key) for v in value]
    if ftype == "list_str":
        if not isinstance(value, list):
            fail()
        return [_coerce(v, "str", key) for v in value]
    raise AssertionError(f"unknown field type {ftype}")


def _read_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise InputDataError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise InputDataError(f"config file {path} is not valid JSON: {exc}") from None


def load_config_file(path) -> dict:
    """Read a config file, merging any includes first (depth-first, in order)."""
    doc = _read_json(path)
    if not isinstance(doc, dict):
        raise InputDataError(f"config file {path} must contain a JSON object")
    base = os.path.dirname(os.path.abspath(path))
    merged: dict = {}
    includes = doc.get("include", [])
    if isinstance(includes, str):
        includes = [includes]
    for inc in includes:
        merged.update(load_config_file(os.path.join(base, inc)))
    merged.update({k: v for k, v in doc.items() if k != "include"})
    merged["_base_dir"] = base
    return merged


def parse_override(text: str):
    if "=" not in text:
        raise InputDataError(f"override {text!r} must look like key=value")
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


def validate_config(raw: dict, kind: str, overrides=()) -> dict:
    """Apply overrides, check keys and types against the schema, resolve paths."""
    schema = SCHEMAS[kind]
    cfg = {k: v for k, v in raw.items() if k not in _META_KEYS and k != "_base_dir"}
    version = raw.get("config_version", CONFIG_VERSION)
    if version != CONFIG_VERSION:
        raise InputDataError(f"unsupported config_version {version}; expected {CONFIG_VERSION}")

    for text in overrides:
        key, value = parse_override(text)
        cfg[key] = value

    unknown = sorted(set(cfg) - set(schema))
    if unknown:
        raise InputDataError(f"unknown config keys for {kind!r}: {unknown}")

    out = {}
    base = raw.get("_base_dir", os.getcwd())
    for key, spec in schema.items():
        if key in cfg:
            value = _coerce(cfg[key], spec.type, key)
        elif spec.required:
            raise InputDataError(f"missing required config key {key!r} for {kind!r}")
        else:
            value = spec.default
        if spec.type == "path" and value is not None and not os.path.isabs(value):
            value = os.path.normpath(os.path.join(base, value))
        out[key] = value
    return out


def load_validated(path, kind: str, overrides=()) -> dict:
    return validate_config(load_config_file(path), kind, overrides)


def schema_help(kind: str) -> str:
    """Render the config keys a subcommand reads, for --help."""
    lines = [f"config keys ({kind}):"]
    for key, spec in SCHEMAS[kind].items():
        default = "required" if spec.required else f"default {spec.default!r}"
        lines.append(f"  {key} ({spec.type}, {default}): {spec.help}")
    return "\n".join(lines)
