"""Bundled desk-scale fixture inputs.

Builds a self-consistent input set: survey microdata with family structure,
a marginal table that is exactly the microdata category counts scaled by a
known factor (so the weight fit has a known exact answer and converges
tightly), a lattice density grid, an irregular district boundary that
clips part of the grid, admin unit centers, and ready-to-run config files
for all three subcommands.

Two structural choices keep the statistical acceptance checks meaningful
rather than seed-lucky: every household carries equal numbers of males and
females (so generated sex proportions are locked, not sampled), and
heights/weights follow age- and sex-dependent growth curves with moderate
noise (so regression metrics have real signal to preserve).

Everything is driven by one fixed seed; the emitted bytes are identical
across runs.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .base import derive_rng
from .data_io import COMORBIDITY_COLUMNS

FIXTURE_SEED = 1729

_SIZES = ((2, 408), (4, 492), (6, 300))
_RELIGIONS = (("Hindu", 0.42), ("Muslim", 0.33), ("Christian", 0.25))
_CASTES = (("General", 0.40), ("OBC", 0.34), ("SC", 0.26))
_ADULT_JOBS = (
    ("Homebound", 0.25), ("Construction", 0.11), ("Agriculture", 0.10),
    ("Teacher", 0.09), ("Retail trade", 0.08), ("Clerical", 0.07),
    ("Transport", 0.06), ("Tailoring", 0.05), ("Carpenters", 0.05),
    ("Labour nec", 0.05), ("Services", 0.05), ("Domestic work", 0.04),
)
_AGE_GROUPS = ("0-17", "18-39", "40-64", "65+")
_MARGINAL_SCALE = 100.0

_CENTER_LAT = 19.05
_CENTER_LON = 72.90
_CELL = 1.0 / 120.0
_GRID_N = 16


def _adult_height(sex, rng):
    mean = 166.0 if sex == "Male" else 153.0
    return float(np.clip(rng.normal(mean, 6.5), 130.0, 200.0))


def _child_height(age, sex, rng):
    adult = 166.0 if sex == "Male" else 153.0
    mean = 50.0 + (adult - 50.0) * np.sqrt(age / 18.0)
    return float(np.clip(rng.normal(mean, 5.0), 45.0, 190.0))


def _weight_for(age, height, rng):
    if age < 18:
        mean = 3.2 + 14.0 * (height / 100.0) ** 2 + 0.25 * age
        return float(max(rng.normal(mean, 2.2), 2.0))
    mean = 21.5 * (height / 100.0) ** 2 * (1.0 + 0.004 * (age - 40))
    return float(max(rng.normal(mean, 4.5), 30.0))


def _flags_for(age, rng):
    diabetes = rng.random() < min(max((age - 35) / 300.0, 0.0), 0.12)
    heart_p = 0.25 if diabetes else min(max((age - 45) / 600.0, 0.0), 0.05)
    return {
        "M_Fever": int(rng.random() < 0.02),
        "M_Diarrhea": int(rng.random() < 0.015),
        "M_Cataract": int(rng.random() < min(max((age - 55) / 400.0, 0.0), 0.08)),
        "M_Heart_disease": int(rng.random() < heart_p),
        "M_Diabetes": int(diabetes),
        "M_Leprosy": int(rng.random() < 0.002),
        "M_Cancer": int(rng.random() < 0.004),
        "M_Asthma": int(rng.random() < 0.03),
        "M_Paralysis": int(rng.random() < min(max((age - 60) / 900.0, 0.0), 0.03)),
        "M_Epilepsy": int(rng.random() < 0.008),
    }


def _weighted_pick(options, rng):
    labels = [o[0] for o in options]
    probs = np.array([o[1] for o in options])
    return labels[int(rng.choice(len(labels), p=probs / probs.sum()))]


def _household_ages(size, rng):
    """Member (age, role) pairs; one male and one female per pair by design."""
    ages = []
    if size == 2:
        base = int(rng.integers(21, 86))
        ages = [base, int(np.clip(base + rng.integers(-3, 4), 19, 90))]
    elif size == 4:
        base = int(rng.integers(25, 56))
        ages = [base, int(np.clip(base + rng.integers(-3, 4), 21, 60)),
                int(rng.integers(0, 18)), int(rng.integers(0, 18))]
    else:
        base = int(rng.integers(28, 56))
        ages = [base, int(np.clip(base + rng.integers(-3, 4), 23, 60)),
                int(rng.integers(0, 18)), int(rng.integers(0, 18)),
                int(np.clip(base + 38 + rng.integers(-2, 3), 66, 90)),
                int(np.clip(base + 38 + rng.integers(-2, 3), 66, 90))]
    return ages


def _job_for(age, rng):
    if age < 3:
        return "Homebound"
    if age < 18:
        return "Student"
    if rng.random() < 0.02:
        return "NA"
    return _weighted_pick(_ADULT_JOBS, rng)


def build_fixture_inputs(out_dir, seed: int = FIXTURE_SEED) -> dict:
    """Write the full fixture input set into out_dir; returns the path map."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = derive_rng(seed, "fixture")

    persons = []           # row dicts for individuals.csv
    households = []
    hh_no = 0
    for size, n_of_size in _SIZES:
        for _ in range(n_of_size):
            hh_no += 1
            hid = f"H{hh_no:04d}"
            religion = _weighted_pick(_RELIGIONS, rng)
            caste = _weighted_pick(_CASTES, rng)
            households.append({"household_id": hid, "psu": int(rng.integers(1, 26))})
            ages = _household_ages(size, rng)
            for k, age in enumerate(ages):
                sex = "Male" if k % 2 == 0 else "Female"
                height = _adult_height(sex, rng) if age >= 18 else _child_height(age, sex, rng)
                weight = _weight_for(age, height, rng)
                row = {
                    "person_id": f"P{len(persons) + 1:06d}",
                    "household_id": hid,
                    "age": age,
                    "sex": sex,
                    "religion": religion,
                    "caste": caste,
                    "height": f"{height:.2f}",
                    "weight": f"{weight:.2f}",
                    "job": _job_for(age, rng),
                }
                row.update(_flags_for(age, rng))
                persons.append(row)

    # ~2% missing height/weight cells, never both in the same row
    n_p = len(persons)
    missing_h = rng.choice(n_p, size=n_p // 50, replace=False)
    remaining = np.setdiff1d(np.arange(n_p), missing_h)
    missing_w = rng.choice(remaining, size=n_p // 50, replace=False)
    for i in missing_h:
        persons[i]["height"] = "NA"
    for i in missing_w:
        persons[i]["weight"] = "NA"

    paths = {}

    def write_csv(name, fieldnames, rows):
        path = out / name
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=fieldnames)
            writer.writeheader()
            writer.writerows(rows)
        paths[name] = path
        return path

    write_csv("individuals.csv",
              ["person_id", "household_id", "age", "sex", "religion", "caste",
               "height", "weight", "job"] + COMORBIDITY_COLUMNS, persons)
    write_csv("households.csv", ["household_id", "psu"], households)

    # marginals: exact microdata counts times a known factor, so the weight
    # fit is exactly feasible and its correct answer is uniform scaling
    marg_rows = []

    def add_table(attribute, counter):
        for category, count in counter:
            marg_rows.append({"attribute": attribute, "category": category,
                              "count": f"{count * _MARGINAL_SCALE:.1f}"})

    ages = np.array([p["age"] for p in persons])
    bins = [(0, 17), (18, 39), (40, 64), (65, 200)]
    add_table("age-group", [(label, int(((ages >= lo) & (ages <= hi)).sum()))
                            for label, (lo, hi) in zip(_AGE_GROUPS, bins)])
    for attr in ("sex", "religion", "caste"):
        vals = [p[attr] for p in persons]
        add_table(attr, [(c, vals.count(c)) for c in sorted(set(vals))])
    sizes = [s for s, n_of in _SIZES for _ in range(n_of)]
    add_table("household-size", [(str(s), sizes.count(s)) for s in sorted(set(sizes))])
    write_csv("marginals.csv", ["attribute", "category", "count"], marg_rows)

    # density grid: plateau plus a central bump, 16x16 centers
    grid_rows = []
    offsets = (np.arange(_GRID_N) - (_GRID_N - 1) / 2) * _CELL
    for la in offsets:
        for lo in offsets:
            z = 40.0 + 360.0 * np.exp(-(la ** 2 + lo ** 2) / (2 * 0.04 ** 2))
            z += float(rng.integers(0, 15))
            grid_rows.append({"X": f"{_CENTER_LAT + la:.6f}",
                              "Y": f"{_CENTER_LON + lo:.6f}",
                              "Z": f"{z:.1f}"})
    write_csv("grid.csv", ["X", "Y", "Z"], grid_rows)

    # irregular ten-vertex boundary that clips the grid corners
    radii = [0.062, 0.050, 0.068, 0.055, 0.045, 0.060, 0.052, 0.066, 0.048, 0.058]
    ring = []
    for k, r in enumerate(radii):
        theta = 2 * np.pi * k / len(radii) + 0.15
        ring.append([round(_CENTER_LON + r * np.sin(theta), 6),
                     round(_CENTER_LAT + r * np.cos(theta), 6)])
    ring.append(ring[0])
    boundary = {"type": "Feature", "properties": {"name": "Samplepur"},
                "geometry": {"type": "Polygon", "coordinates": [ring]}}
    bpath = out / "boundary.geojson"
    with open(bpath, "w", encoding="utf-8") as fh:
        json.dump(boundary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    paths["boundary.geojson"] = bpath

    unit_rows = []
    for k in range(6):
        theta = 2 * np.pi * k / 6 + 0.4
        unit_rows.append({"name": f"Ward_{k + 1:02d}",
                          "lat": f"{_CENTER_LAT + 0.03 * np.cos(theta):.6f}",
                          "lon": f"{_CENTER_LON + 0.03 * np.sin(theta):.6f}"})
    write_csv("admin_units.csv", ["name", "lat", "lon"], unit_rows)

    def write_config(name, payload):
        path = out / name
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
        paths[name] = path
        return path

    write_config("generate_config.json", {
        "config_version": 1,
        "region_id": "samplepur",
        "district_name": "Samplepur",
        "state_name": "Samplestate",
        "individuals_path": "individuals.csv",
        "households_path": "households.csv",
        "marginals_path": "marginals.csv",
        "grid_path": "grid.csv",
        "boundary_path": "boundary.geojson",
        "admin_units_path": "admin_units.csv",
        "target_population": 100_000,
        "n_workplaces": 300,
        "n_public_places": 80,
        "ipu_tol": 1e-6,
        "rng_seed": 42,
    })
    write_config("eval_config.json", {
        "config_version": 1,
        "population_path": "population.csv",
        "individuals_path": "individuals.csv",
        "households_path": "households.csv",
        "rng_seed": 42,
    })
    write_config("epi_config.json", {
        "config_version": 1,
        "population_path": "population.csv",
        "beta_child": 0.15,
        "beta_adult": 0.22,
        "beta_elderly": 0.18,
        "lockdown_thresholds": [0.01, 0.02, None],
        "n_runs": 20,
        "max_days": 150,
        "initial_infected": 20,
        "rng_seed": 1,
    })
    return paths
