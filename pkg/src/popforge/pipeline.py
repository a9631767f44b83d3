"""End-to-end population generation.

Recipe: fit household weights to the marginals, sample households to the
target scale, geolocate each household from the density grid, synthesize
individual attributes conditioned on age and sex, generate workplaces and
public places (schools are the Teacher-typed workplaces), assign external
locations by distance decay, and stream the 44-column table to disk.

Generation is sharded: each shard owns a person quota and an independent
RNG stream derived from (seed, shard index), produces its rows as one CSV
chunk, and chunks are written strictly in shard order. Output bytes are
therefore identical whether shards run sequentially or on a process pool,
and peak memory is bounded by the inputs plus a few shards, never by the
target population.
"""

from __future__ import annotations

import hashlib
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from zlib import crc32

import numpy as np
import pandas as pd

from . import __version__
from .assign import DecayFunction, assign_all
from .base import InputDataError, derive_rng
from .data_io import (COMORBIDITY_COLUMNS, POPULATION_COLUMNS, load_admin_units,
                      load_grid_density, load_marginals, load_microdata,
                      load_region_polygon)
from .density import DensityPointSampler
from .ipu import HouseholdWeightFitter, build_incidence, sample_household_indices
from .synth import (HOMEBOUND_LABEL, STUDENT_LABEL, JobTable, StratifiedResampler,
                    assign_jobs, build_job_table)

SHARD_STRIDE = 10 ** 7          # id headroom per shard (households and persons)
_PERSON_OFFSET = 5 * 10 ** 9    # Agent_ID block sits above the HHID block
_WORKPLACE_BASE = 2 * 10 ** 12
_PUBLIC_BASE = 3 * 10 ** 12


class PipelineError(RuntimeError):
    """A module error wrapped with the pipeline stage it occurred in."""

    def __init__(self, stage, cause):
        super().__init__(f"stage {stage!r}: {cause}")
        self.stage = stage
        self.cause = cause


def default_region_code(region_id: str) -> int:
    return crc32(region_id.encode("utf-8")) % 900 + 100


def attach_admin_units(points, units) -> np.ndarray:
    """Index of the nearest admin unit center for each (lat, lon) point.

    Ties resolve to the lowest unit index (argmin behaviour), so the
    mapping is deterministic.
    """
    units_xy = np.column_stack([np.asarray(units["lat"], dtype=float),
                                np.asarray(units["lon"], dtype=float)])
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    d2 = ((pts[:, None, :] - units_xy[None, :, :]) ** 2).sum(axis=2)
    return np.argmin(d2, axis=1)


def generate_locations(n_workplaces, n_public_places, job_table: JobTable,
                       sampler: DensityPointSampler, rng, region_code,
                       require_schools=True):
    """Generate the workplace and public-place tables (schools are a view).

    Workplace types are drawn with replacement proportionally to the job
    table weights; coordinates come from the density sampler. The school
    table is the subset of workplaces whose type is 'Teacher'.
    """
    if n_workplaces < 1 or n_public_places < 1:
        raise InputDataError("n_workplaces and n_public_places must be >= 1")
    drawable = [lab for lab, w in zip(job_table.labels, job_table.weights)
                if w > 0 and lab not in (STUDENT_LABEL, HOMEBOUND_LABEL)]
    if require_schools and "Teacher" not in drawable:
        raise InputDataError(
            "job table has no drawable 'Teacher' entry, so no schools can exist "
            "while the population contains students")

    picks = job_table.sample_workplace_types(n_workplaces, rng)
    types = np.array(job_table.labels, dtype=object)[picks]
    wp_pts = np.round(sampler.sample(n_workplaces, rng), 6)
    wp_ids = _WORKPLACE_BASE + region_code * 10 ** 6 + 1 + np.arange(n_workplaces)
    workplaces = pd.DataFrame({"location_id": wp_ids, "workplace_type": types,
                               "lat": wp_pts[:, 0], "lon": wp_pts[:, 1]})

    pub_pts = np.round(sampler.sample(n_public_places, rng), 6)
    pub_ids = _PUBLIC_BASE + region_code * 10 ** 6 + 1 + np.arange(n_public_places)
    public_places = pd.DataFrame({"location_id": pub_ids,
                                  "lat": pub_pts[:, 0], "lon": pub_pts[:, 1]})

    schools = workplaces[workplaces["workplace_type"] == "Teacher"].reset_index(drop=True)
    return workplaces, schools, public_places


@dataclass
class _ShardContext:
    """Everything a shard worker needs; immutable and picklable."""

    seed: int
    region_code: int
    district_name: str
    public_transport_value: int
    essential_worker_rate: float
    adherence_choices: np.ndarray
    nearest_candidates: int | None
    decay: DecayFunction
    weights: np.ndarray
    hh_sizes: np.ndarray
    hh_psu: np.ndarray
    hh_ptr: np.ndarray
    p_age: np.ndarray
    p_sex_code: np.ndarray
    p_rel_code: np.ndarray
    p_caste_code: np.ndarray
    sex_labels: list
    religion_labels: list
    caste_labels: list
    generator: StratifiedResampler
    job_table: JobTable
    sampler: DensityPointSampler
    admin_names: list
    admin_coords: np.ndarray
    wp_ids: np.ndarray
    wp_coords: np.ndarray
    school_ids: np.ndarray
    school_coords: np.ndarray
    pub_ids: np.ndarray
    pub_coords: np.ndarray


def _coords_for(ids, table_ids, table_coords, mask):
    """Look up (lat, lon) for assigned ids; NaN outside mask. Ids are sorted."""
    lat = np.full(len(ids), np.nan)
    lon = np.full(len(ids), np.nan)
    if mask.any():
        pos = np.searchsorted(table_ids, ids[mask])
        lat[mask] = table_coords[pos, 0]
        lon[mask] = table_coords[pos, 1]
    return lat, lon


def _generate_shard(ctx: _ShardContext, shard: int, quota: int):
    """Produce one shard's rows as a CSV text chunk (no header)."""
    rng = derive_rng(ctx.seed, "shard", shard)

    donors = sample_household_indices(ctx.weights, ctx.hh_sizes, quota, rng)
    n_hh = len(donors)
    sizes = ctx.hh_sizes[donors]
    n = int(sizes.sum())

    hh_base = ctx.region_code * 10 ** 10 + shard * SHARD_STRIDE
    hh_ids = hh_base + 1 + np.arange(n_hh)
    agent_ids = ctx.region_code * 10 ** 10 + _PERSON_OFFSET + shard * SHARD_STRIDE + 1 + np.arange(n)

    home = np.round(ctx.sampler.sample(n_hh, rng), 6)
    unit_idx = attach_admin_units(home, {"lat": ctx.admin_coords[:, 0],
                                         "lon": ctx.admin_coords[:, 1]})

    # expand sampled households to their member person rows
    starts = ctx.hh_ptr[donors]
    ends = np.cumsum(sizes)
    person_idx = np.arange(n) - np.repeat(ends - sizes, sizes) + np.repeat(starts, sizes)
    hh_row = np.repeat(np.arange(n_hh), sizes)

    ages = ctx.p_age[person_idx]
    sex_codes = ctx.p_sex_code[person_idx]
    sex_labels = np.array(ctx.sex_labels, dtype=object)[sex_codes]
    heights, weights, flags = ctx.generator.sample(ages, sex_labels, rng)
    heights = np.round(heights, 3)
    weights = np.round(weights, 3)

    job_labels, job_ids = assign_jobs(ages, ctx.job_table, rng)
    worker = (job_labels != HOMEBOUND_LABEL) & (job_labels != STUDENT_LABEL)

    essential = np.zeros(n, dtype=np.int64)
    n_workers = int(worker.sum())
    if n_workers:
        essential[worker] = (rng.random(n_workers) < ctx.essential_worker_rate).astype(np.int64)
    adherence = ctx.adherence_choices[rng.integers(0, len(ctx.adherence_choices), n)]

    persons = pd.DataFrame({"job_label": job_labels,
                            "lat": home[hh_row, 0], "lon": home[hh_row, 1]})
    locations_by_kind = {"workplace": (ctx.wp_ids, ctx.wp_coords),
                         "school": (ctx.school_ids, ctx.school_coords),
                         "public_place": (ctx.pub_ids, ctx.pub_coords)}
    work_ids, school_ids, public_ids = assign_all(
        persons, locations_by_kind, ctx.decay, rng, nearest_n=ctx.nearest_candidates)

    w_lat, w_lon = _coords_for(work_ids, ctx.wp_ids, ctx.wp_coords, work_ids != 0)
    s_lat, s_lon = _coords_for(school_ids, ctx.school_ids, ctx.school_coords, school_ids != 0)
    p_lat, p_lon = _coords_for(public_ids, ctx.pub_ids, ctx.pub_coords, public_ids != 0)

    frame = pd.DataFrame({
        "Age": ages,
        "SexLabel": sex_labels,
        "Sex": sex_codes + 1,
        "Height": heights,
        "Weight": weights,
        "HHID": hh_ids[hh_row],
        "HH_Size": sizes[hh_row],
        "H_Lat": home[hh_row, 0],
        "H_Lon": home[hh_row, 1],
        "District": ctx.district_name,
        "DistrictID": ctx.region_code,
        "AdminUnitName": np.array(ctx.admin_names, dtype=object)[unit_idx[hh_row]],
        "AdminUnitLatitude": ctx.admin_coords[unit_idx[hh_row], 0],
        "AdminUnitLongitude": ctx.admin_coords[unit_idx[hh_row], 1],
        "Religion": np.array(ctx.religion_labels, dtype=object)[ctx.p_rel_code[person_idx]],
        "ReligionID": ctx.p_rel_code[person_idx] + 1,
        "Caste": np.array(ctx.caste_labels, dtype=object)[ctx.p_caste_code[person_idx]],
        "CasteID": ctx.p_caste_code[person_idx] + 1,
        "JobLabel": job_labels,
        "JobID": job_ids,
        "WorkPlaceID": work_ids,
        "W_Lat": w_lat,
        "W_Lon": w_lon,
        "essential_worker": essential,
        "Adherence_to_Intervention": adherence,
        "PublicTransport_Jobs": np.full(n, ctx.public_transport_value, dtype=np.int64),
        "school_id": school_ids,
        "school_lat": s_lat,
        "school_long": s_lon,
        "public_place_id": public_ids,
        "public_place_lat": p_lat,
        "public_place_long": p_lon,
        "Agent_ID": agent_ids,
        "PSUID": ctx.hh_psu[donors][hh_row],
    })
    for j, col in enumerate(COMORBIDITY_COLUMNS):
        frame[col] = flags[:, j].astype(np.int64)
    frame = frame[POPULATION_COLUMNS]
    return frame.to_csv(index=False, header=False, na_rep=""), n, n_hh


_WORKER_CTX = None


def _init_worker(ctx):
    global _WORKER_CTX
    _WORKER_CTX = ctx


def _run_shard(args):
    shard, quota = args
    return _generate_shard(_WORKER_CTX, shard, quota)


@dataclass
class GenerationResult:
    out_dir: Path
    population_path: Path
    provenance_path: Path
    rows: int
    households: int
    workplaces: pd.DataFrame
    schools: pd.DataFrame
    public_places: pd.DataFrame
    provenance: dict


def _sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def generate(config: dict, out_dir, threads=None) -> GenerationResult:
    """Run the full pipeline for a validated generate config.

    Fully deterministic in (config, rng_seed): the population CSV and the
    provenance sidecar are byte-identical across runs, independent of the
    number of worker processes.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    seed = config["rng_seed"]

    try:
        sample = load_microdata(config["individuals_path"], config["households_path"])
        marginals = load_marginals(config["marginals_path"], config["region_id"])
        grid = load_grid_density(config["grid_path"], config["cell_size_deg"])
        polygon = load_region_polygon(config["boundary_path"])
        admin = load_admin_units(config["admin_units_path"])
    except Exception as exc:
        raise PipelineError("load_inputs", exc) from exc

    try:
        incidence = build_incidence(sample, marginals)
        fitter = HouseholdWeightFitter(tol=config["ipu_tol"],
                                       max_iter=config["ipu_max_iter"]).fit(incidence)
    except Exception as exc:
        raise PipelineError("fit_weights", exc) from exc

    try:
        generator = StratifiedResampler(
            jitter_scale=config["jitter_scale"],
            min_stratum_size=config["min_stratum_size"],
            age_bin_width=config["age_bin_width"]).fit(sample.persons)
        job_table = build_job_table(sample)
    except Exception as exc:
        raise PipelineError("fit_attributes", exc) from exc

    region_code = config["region_code"]
    if region_code is None:
        region_code = default_region_code(config["region_id"])

    try:
        sampler = DensityPointSampler(
            oversample_factor=config["oversample_factor"]).fit(grid, polygon)
        loc_rng = derive_rng(seed, "locations")
        workplaces, schools, public_places = generate_locations(
            config["n_workplaces"], config["n_public_places"], job_table,
            sampler, loc_rng, region_code)
    except Exception as exc:
        raise PipelineError("generate_locations", exc) from exc

    target = config["target_population"]
    if target == "from_marginals":
        target = int(round(marginals.person_total))
    if not isinstance(target, int) or target < 1:
        raise PipelineError("plan", InputDataError(
            f"target_population must be a positive integer, got {target!r}"))

    persons_df = sample.persons
    sex_labels = sorted(set(persons_df["sex"]))
    religion_labels = sorted(set(persons_df["religion"]))
    caste_labels = sorted(set(persons_df["caste"]))
    ctx = _ShardContext(
        seed=seed,
        region_code=region_code,
        district_name=config["district_name"] or config["region_id"],
        public_transport_value=config["public_transport_value"],
        essential_worker_rate=config["essential_worker_rate"],
        adherence_choices=np.asarray(config["adherence_choices"], dtype=float),
        nearest_candidates=config["nearest_candidates"],
        decay=DecayFunction(form=config["decay_form"], d_min=config["decay_d_min"],
                            rate=config["decay_rate"], exponent=config["decay_exponent"]),
        weights=fitter.weights_,
        hh_sizes=sample.households["size"].to_numpy(),
        hh_psu=sample.households["psu"].to_numpy(),
        hh_ptr=sample.hh_ptr,
        p_age=persons_df["age"].to_numpy(),
        p_sex_code=np.searchsorted(sex_labels, persons_df["sex"].to_numpy()),
        p_rel_code=np.searchsorted(religion_labels, persons_df["religion"].to_numpy()),
        p_caste_code=np.searchsorted(caste_labels, persons_df["caste"].to_numpy()),
        sex_labels=sex_labels,
        religion_labels=religion_labels,
        caste_labels=caste_labels,
        generator=generator,
        job_table=job_table,
        sampler=sampler,
        admin_names=list(admin["name"]),
        admin_coords=np.column_stack([admin["lat"].to_numpy(), admin["lon"].to_numpy()]),
        wp_ids=workplaces["location_id"].to_numpy(),
        wp_coords=workplaces[["lat", "lon"]].to_numpy(),
        school_ids=schools["location_id"].to_numpy(),
        school_coords=schools[["lat", "lon"]].to_numpy(),
        pub_ids=public_places["location_id"].to_numpy(),
        pub_coords=public_places[["lat", "lon"]].to_numpy(),
    )

    shard_persons = config["shard_persons"]
    quotas = []
    remaining = target
    while remaining > 0:
        q = min(shard_persons, remaining)
        quotas.append(q)
        remaining -= q
    if len(quotas) * SHARD_STRIDE >= _PERSON_OFFSET:
        raise PipelineError("plan", InputDataError(
            f"{len(quotas)} shards exceed the id headroom; raise shard_persons"))

    if threads is None:
        threads = config["threads"] or os.cpu_count() or 1
    threads = max(1, min(threads, len(quotas)))

    pop_path = out / "population.csv"
    rows = 0
    households = 0
    try:
        with open(pop_path, "w", newline="", encoding="utf-8") as fh:
            fh.write(",".join(POPULATION_COLUMNS) + "\n")
            if threads == 1:
                for shard, quota in enumerate(quotas):
                    text, n, n_hh = _generate_shard(ctx, shard, quota)
                    fh.write(text)
                    rows += n
                    households += n_hh
            else:
                window = 2 * threads
                with ProcessPoolExecutor(max_workers=threads, initializer=_init_worker,
                                         initargs=(ctx,)) as pool:
                    pending = {}
                    next_write = 0
                    for shard, quota in enumerate(quotas):
                        pending[shard] = pool.submit(_run_shard, (shard, quota))
                        while len(pending) >= window or (
                                shard == len(quotas) - 1 and pending):
                            text, n, n_hh = pending.pop(next_write).result()
                            fh.write(text)
                            rows += n
                            households += n_hh
                            next_write += 1
    except PipelineError:
        raise
    except Exception as exc:
        raise PipelineError("generate_households", exc) from exc

    workplaces.to_csv(out / "workplaces.csv", index=False)
    schools.to_csv(out / "schools.csv", index=False)
    public_places.to_csv(out / "public_places.csv", index=False)

    provenance = {
        "package_version": __version__,
        "library_versions": {"numpy": np.__version__, "pandas": pd.__version__},
        "rng_seed": seed,
        "config": {k: v for k, v in sorted(config.items())},
        "config_sha256": hashlib.sha256(
            json.dumps(config, sort_keys=True).encode("utf-8")).hexdigest(),
        "inputs": {name: _sha256_file(config[name])
                   for name in ("individuals_path", "households_path", "marginals_path",
                                "grid_path", "boundary_path", "admin_units_path")},
        "weight_fit": {"fit_delta": fitter.fit_delta_,
                       "iterations_used": fitter.iterations_used_,
                       "converged": fitter.converged_},
        "rows": rows,
        "households": households,
        "n_workplaces": len(workplaces),
        "n_schools": len(schools),
        "n_public_places": len(public_places),
    }
    prov_path = out / "provenance.json"
    with open(prov_path, "w", encoding="utf-8") as fh:
        json.dump(provenance, fh, indent=2, sort_keys=True)
        fh.write("\n")

    return GenerationResult(out_dir=out, population_path=pop_path,
                            provenance_path=prov_path, rows=rows,
                            households=households, workplaces=workplaces,
                            schools=schools, public_places=public_places,
                            provenance=provenance)
