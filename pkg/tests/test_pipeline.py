import hashlib
import json

import numpy as np
import pandas as pd
import pytest

from popforge.base import InputDataError, derive_rng
from popforge.config import validate_config
from popforge.data_io import load_population, points_in_polygon
from popforge.density import build_sampler
from popforge.pipeline import (PipelineError, attach_admin_units, generate,
                               generate_locations)
from popforge.synth import JobTable

from test_data_io import square
from test_density import lattice


def test_target_stop_rule_bound(gen_config, tmp_path):
    cfg = dict(gen_config)
    cfg["target_population"] = 1000
    res = generate(cfg, tmp_path / "out", threads=1)
    assert 1000 <= res.rows <= 1000 + 6        # max fixture household size is 6


def test_generate_deterministic_bytes(gen_config, tmp_path):
    cfg = dict(gen_config)
    cfg["target_population"] = 5000
    r1 = generate(cfg, tmp_path / "a", threads=1)
    r2 = generate(cfg, tmp_path / "b", threads=1)
    assert r1.population_path.read_bytes() == r2.population_path.read_bytes()
    assert r1.provenance_path.read_bytes() == r2.provenance_path.read_bytes()


def test_huge_target_accepted_as_config(fixture_paths):
    # Mumbai + Mumbai Suburban scale must validate; desk runs use less
    from popforge.config import load_config_file
    raw = load_config_file(str(fixture_paths["generate_config.json"]))
    cfg = validate_config(raw, "generate", ["target_population=12442373"])
    assert cfg["target_population"] == 12_442_373


def test_target_from_marginals(gen_config, tmp_path, microsample):
    # marginals at scale 1: the person total equals the microdata person count
    rows = ["attribute,category,count"]
    ages = microsample.persons["age"].to_numpy()
    for label, (lo, hi) in zip(("0-17", "18-39", "40-64", "65+"),
                               ((0, 17), (18, 39), (40, 64), (65, 200))):
        rows.append(f"age-group,{label},{((ages >= lo) & (ages <= hi)).sum()}")
    for attr in ("sex", "religion", "caste"):
        for cat, n in microsample.persons[attr].value_counts().items():
            rows.append(f"{attr},{cat},{n}")
    for size, n in microsample.households["size"].value_counts().items():
        rows.append(f"household-size,{size},{n}")
    marg_path = tmp_path / "marg1.csv"
    marg_path.write_text("\n".join(rows) + "\n")

    cfg = dict(gen_config)
    cfg["marginals_path"] = str(marg_path)
    cfg["target_population"] = "from_marginals"
    res = generate(cfg, tmp_path / "out", threads=1)
    assert res.rows >= microsample.n_persons
    assert res.rows <= microsample.n_persons + 6


def test_population_invariants(pop_10k):
    pop = load_population(pop_10k.population_path)

    assert pop["Agent_ID"].is_unique
    # all members of a household share coordinates, admin unit and size
    for col in ("H_Lat", "H_Lon", "AdminUnitName", "HH_Size", "PSUID"):
        assert (pop.groupby("HHID")[col].nunique() == 1).all()
    sizes = pop.groupby("HHID").size()
    assert (sizes == pop.groupby("HHID")["HH_Size"].first()).all()

    # age/job consistency
    under3 = pop[pop["Age"] < 3]
    assert (under3["WorkPlaceID"] == 0).all()
    assert (under3["school_id"] == 0).all()
    assert (under3["JobID"] == 0).all()
    minors = pop[(pop["Age"] >= 3) & (pop["Age"] < 18)]
    assert (minors["WorkPlaceID"] == 0).all()
    assert (minors["JobID"] == 199).all()
    assert (minors["school_id"] != 0).all()

    # completeness: every worker has a workplace, everyone a public place
    workers = pop[~pop["JobID"].isin([0, 199])]
    assert (workers["WorkPlaceID"] != 0).all()
    assert (pop["public_place_id"] != 0).all()


def test_referential_integrity(pop_10k):
    pop = load_population(pop_10k.population_path)
    wp_ids = set(pop_10k.workplaces["location_id"])
    school_ids = set(pop_10k.schools["location_id"])
    pub_ids = set(pop_10k.public_places["location_id"])
    assert set(pop.loc[pop["WorkPlaceID"] != 0, "WorkPlaceID"]) <= wp_ids
    assert set(pop.loc[pop["school_id"] != 0, "school_id"]) <= school_ids
    assert set(pop["public_place_id"]) <= pub_ids
    assert school_ids <= wp_ids                 # schools stay in the workplace table
    # coordinates column is missing exactly where the id is zero
    assert (pop["W_Lat"].isna() == (pop["WorkPlaceID"] == 0)).all()
    assert (pop["school_lat"].isna() == (pop["school_id"] == 0)).all()


def test_essential_and_adherence_columns(pop_10k, gen_config):
    pop = load_population(pop_10k.population_path)
    non_workers = pop[pop["JobID"].isin([0, 199])]
    assert (non_workers["essential_worker"] == 0).all()
    workers = pop[~pop["JobID"].isin([0, 199])]
    rate = workers["essential_worker"].mean()
    assert 0.03 < rate < 0.07                   # Bernoulli(0.05) among workers
    assert set(np.round(pop["Adherence_to_Intervention"].unique(), 1)) <= \
        set(gen_config["adherence_choices"])
    assert (pop["PublicTransport_Jobs"] == 1).all()


def test_attach_admin_units_cases():
    units = pd.DataFrame({"name": ["a", "b", "c"],
                          "lat": [0.0, 1.0, 2.0], "lon": [0.0, 0.0, 0.0]})
    # single unit: everyone assigned to it
    one = units.iloc[:1]
    idx = attach_admin_units(np.array([[5.0, 5.0], [-3.0, 2.0]]), one)
    assert idx.tolist() == [0, 0]
    # equidistant tie resolves to the lowest index
    idx = attach_admin_units(np.array([[0.5, 0.0]]), units)
    assert idx.tolist() == [0]
    # three units in a line match brute force
    rng = derive_rng(0, "admin")
    pts = rng.uniform(-1, 3, size=(200, 2))
    got = attach_admin_units(pts, units)
    uxy = units[["lat", "lon"]].to_numpy()
    brute = [int(np.argmin([np.hypot(p[0] - u[0], p[1] - u[1]) for u in uxy]))
             for p in pts]
    assert got.tolist() == brute


def half_teacher_table():
    return JobTable(labels=["Construction", "Homebound", "Student", "Teacher"],
                    ids=np.array([95, 0, 199, 1], dtype=np.int64),
                    weights=np.array([1.0, 0.0, 0.0, 1.0]))


def test_generate_locations_school_count_binomial():
    sampler = build_sampler(lattice(4, cell=0.25, origin=(0.125, 0.125)), square())
    wp, schools, pub = generate_locations(100, 10, half_teacher_table(), sampler,
                                          derive_rng(1, "locs"), region_code=500)
    assert 30 <= len(schools) <= 70
    assert len(pub) == 10
    assert points_in_polygon(wp[["lat", "lon"]].to_numpy(), square()).all()
    assert points_in_polygon(pub[["lat", "lon"]].to_numpy(), square()).all()


def test_generate_locations_all_teachers():
    table = JobTable(labels=["Homebound", "Student", "Teacher"],
                     ids=np.array([0, 199, 1], dtype=np.int64),
                     weights=np.array([0.0, 0.0, 1.0]))
    sampler = build_sampler(lattice(2, cell=0.5, origin=(0.25, 0.25)), square())
    wp, schools, _ = generate_locations(40, 5, table, sampler,
                                        derive_rng(2, "teachers"), region_code=500)
    assert len(schools) == len(wp) == 40


def test_generate_locations_requires_teacher():
    table = JobTable(labels=["Construction", "Homebound", "Student"],
                     ids=np.array([95, 0, 199], dtype=np.int64),
                     weights=np.array([1.0, 0.5, 0.0]))
    sampler = build_sampler(lattice(2, cell=0.5, origin=(0.25, 0.25)), square())
    with pytest.raises(InputDataError, match="Teacher"):
        generate_locations(10, 5, table, sampler, derive_rng(3, "nt"), region_code=500)


def test_pipeline_error_names_stage(gen_config, tmp_path):
    cfg = dict(gen_config)
    cfg["grid_path"] = str(tmp_path / "missing_grid.csv")
    with pytest.raises(PipelineError, match="load_inputs") as err:
        generate(cfg, tmp_path / "out", threads=1)
    assert "missing_grid.csv" in str(err.value)


def test_provenance_sidecar(pop_10k, gen_config):
    prov = json.loads(pop_10k.provenance_path.read_text())
    assert prov["rows"] == pop_10k.rows
    assert prov["rng_seed"] == gen_config["rng_seed"]
    assert set(prov["inputs"]) == {"individuals_path", "households_path",
                                   "marginals_path", "grid_path", "boundary_path",
                                   "admin_units_path"}
    for digest in prov["inputs"].values():
        assert len(digest) == 64
    recomputed = hashlib.sha256(
        json.dumps(prov["config"], sort_keys=True).encode()).hexdigest()
    assert recomputed == prov["config_sha256"]
    assert prov["weight_fit"]["converged"]


def test_location_files_written(pop_10k):
    out = pop_10k.out_dir
    wp = pd.read_csv(out / "workplaces.csv")
    schools = pd.read_csv(out / "schools.csv")
    assert set(schools["location_id"]) <= set(wp["location_id"])
    assert (wp[wp["workplace_type"] == "Teacher"]["location_id"].to_numpy()
            == schools["location_id"].to_numpy()).all()
    assert (pd.read_csv(out / "public_places.csv").columns
            == ["location_id", "lat", "lon"]).all()
