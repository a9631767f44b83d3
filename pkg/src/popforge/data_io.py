"""Loaders and writers for all external file formats.

Inputs are plain CSV (UTF-8, header row) and GeoJSON:

* individuals / households CSVs -> :class:`MicroSample`
* marginal totals CSV (attribute, category, count) -> :class:`MarginalSet`
* grid density CSV (X=lat, Y=lon, Z=count) -> :class:`GridDensity`
* boundary GeoJSON (Polygon/MultiPolygon, RFC 7946 lon/lat order) -> :class:`RegionPolygon`

Everything is loaded eagerly and validated before any object is returned,
so a malformed file never yields a half-populated structure. The output
side streams the synthetic population table (fixed 44-column schema) so
writing is O(one batch) in memory.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .base import InputDataError
from .validation import require_columns

MISSING_TOKENS = {"", "NA", "N/A", "na", "nan", "NaN", "null", "NULL"}

COMORBIDITY_COLUMNS = [
    "M_Fever", "M_Diarrhea", "M_Cataract", "M_Heart_disease", "M_Diabetes",
    "M_Leprosy", "M_Cancer", "M_Asthma", "M_Paralysis", "M_Epilepsy",
]

# Semantic field -> column name in the individuals/households CSVs, plus
# sanity bounds for numeric person fields. Override any entry via the
# schema_config argument of load_microdata.
DEFAULT_MICRODATA_SCHEMA = {
    "person_id": "person_id",
    "household_id": "household_id",
    "age": "age",
    "sex": "sex",
    "religion": "religion",
    "caste": "caste",
    "height": "height",
    "weight": "weight",
    "job": "job",
    "psu": "psu",
    "comorbidity_columns": list(COMORBIDITY_COLUMNS),
    "age_bounds": (0, 120),
    "height_bounds": (20.0, 272.0),
    "weight_bounds": (0.5, 400.0),
}

HOUSEHOLD_SIZE_ATTRIBUTE = "household-size"


@dataclass
class MicroSample:
    """Household-grouped survey microdata.

    persons is sorted by household; hh_ptr[k]:hh_ptr[k+1] slices the members
    of households.iloc[k]. Both frames are treated as immutable after load.
    """

    persons: pd.DataFrame
    households: pd.DataFrame
    hh_ptr: np.ndarray

    @property
    def n_persons(self) -> int:
        return len(self.persons)

    @property
    def n_households(self) -> int:
        return len(self.households)

    def household_members(self, k: int) -> pd.DataFrame:
        return self.persons.iloc[self.hh_ptr[k]:self.hh_ptr[k + 1]]


@dataclass
class MarginalSet:
    """Per-region target counts, one table per attribute (category order preserved)."""

    region_id: str
    tables: dict = field(default_factory=dict)

    @property
    def person_attributes(self):
        return [a for a in self.tables if a != HOUSEHOLD_SIZE_ATTRIBUTE]

    @property
    def person_total(self) -> float:
        attr = self.person_attributes[0]
        return float(sum(c for _, c in self.tables[attr]))

    @property
    def household_total(self) -> float:
        return float(sum(c for _, c in self.tables[HOUSEHOLD_SIZE_ATTRIBUTE]))


@dataclass
class GridDensity:
    """Lattice of (lat, lon, count) cells with side length cell_size degrees."""

    cells: np.ndarray          # (n, 2) center lat/lon
    z: np.ndarray              # (n,) person counts
    cell_size: float


@dataclass
class RegionPolygon:
    """One or more rings of (lat, lon) vertices; even-odd semantics, holes included."""

    rings: list                # list of (k, 2) float arrays, unclosed
    holes: list                # bool per ring

    def bounds(self):
        allv = np.vstack(self.rings)
        return allv.min(axis=0), allv.max(axis=0)


def _read_rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise InputDataError(f"{path}: empty file, header row required")
        return reader.fieldnames, list(reader)


def _parse_float_cell(token, row_no, column, path):
    token = (token or "").strip()
    if token in MISSING_TOKENS:
        return np.nan
    try:
        return float(token)
    except ValueError:
        raise InputDataError(
            f"{path}: unparseable numeric value {token!r} at data row {row_no}, "
            f"column {column!r}") from None


def load_microdata(individuals_path, households_path, schema_config=None) -> MicroSample:
    """Load and cross-validate the individuals and households CSVs.

    Every person must reference an existing household; missing height,
    weight or job cells become explicit missing values. Numeric sanity
    bounds and shared household religion/caste are checked (the latter is
    a warning only, matching how survey files actually behave).
    """
    schema = dict(DEFAULT_MICRODATA_SCHEMA)
    if schema_config:
        schema.update(schema_config)
    flag_cols = list(schema["comorbidity_columns"])

    hh_fields, hh_rows = _read_rows(households_path)
    if schema["household_id"] not in hh_fields:
        raise InputDataError(
            f"{households_path}: missing household id column {schema['household_id']!r}")
    hh_ids = []
    hh_psu = []
    seen = set()
    for i, row in enumerate(hh_rows, start=1):
        hid = (row.get(schema["household_id"]) or "").strip()
        if not hid:
            raise InputDataError(f"{households_path}: empty household id at data row {i}")
        if hid in seen:
            raise InputDataError(f"{households_path}: duplicate household id {hid!r}")
        seen.add(hid)
        hh_ids.append(hid)
        psu = (row.get(schema["psu"]) or "").strip()
        if psu in MISSING_TOKENS:
            hh_psu.append(0)
        else:
            hh_psu.append(int(_parse_float_cell(psu, i, schema["psu"], households_path)))

    ind_fields, ind_rows = _read_rows(individuals_path)
    needed = [schema[k] for k in ("person_id", "household_id", "age", "sex", "religion", "caste")]
    missing_cols = [c for c in needed if c not in ind_fields]
    if missing_cols:
        raise InputDataError(f"{individuals_path}: missing columns {missing_cols}")

    hh_index = {hid: k for k, hid in enumerate(hh_ids)}
    age_lo, age_hi = schema["age_bounds"]
    h_lo, h_hi = schema["height_bounds"]
    w_lo, w_hi = schema["weight_bounds"]

    records = []
    bad_refs = []
    for i, row in enumerate(ind_rows, start=1):
        hid = (row.get(schema["household_id"]) or "").strip()
        if hid not in hh_index:
            bad_refs.append(hid)
            continue
        age = _parse_float_cell(row[schema["age"]], i, schema["age"], individuals_path)
        if not np.isfinite(age) or not age_lo <= age <= age_hi:
            raise InputDataError(
                f"{individuals_path}: age {row[schema['age']]!r} out of bounds "
                f"[{age_lo}, {age_hi}] at data row {i}")
        height = _parse_float_cell(row.get(schema["height"], ""), i, schema["height"],
                                   individuals_path)
        if np.isfinite(height) and not h_lo <= height <= h_hi:
            raise InputDataError(
                f"{individuals_path}: height {height} out of bounds at data row {i}")
        weight = _parse_float_cell(row.get(schema["weight"], ""), i, schema["weight"],
                                   individuals_path)
        if np.isfinite(weight) and not w_lo <= weight <= w_hi:
            raise InputDataError(
                f"{individuals_path}: weight {weight} out of bounds at data row {i}")
        job = (row.get(schema["job"]) or "").strip()
        flags = []
        for c in flag_cols:
            tok = (row.get(c) or "0").strip()
            flags.append(0 if tok in MISSING_TOKENS else int(_parse_float_cell(
                tok, i, c, individuals_path)))
        records.append((
            (row.get(schema["person_id"]) or "").strip(), hid, hh_index[hid], int(age),
            (row.get(schema["sex"]) or "").strip(), (row.get(schema["religion"]) or "").strip(),
            (row.get(schema["caste"]) or "").strip(), height, weight,
            None if job in MISSING_TOKENS else job, flags,
        ))

    if bad_refs:
        uniq = sorted(set(bad_refs))
        raise InputDataError(
            f"{individuals_path}: {len(bad_refs)} person rows reference unknown "
            f"households: {uniq[:10]}")
    if not records:
        raise InputDataError(f"{individuals_path}: no person rows")

    records.sort(key=lambda r: r[2])  # stable: by household, then file order
    persons = pd.DataFrame({
        "person_id": [r[0] for r in records],
        "household_id": [r[1] for r in records],
        "hh_index": np.array([r[2] for r in records], dtype=np.int64),
        "age": np.array([r[3] for r in records], dtype=np.int64),
        "sex": [r[4] for r in records],
        "religion": [r[5] for r in records],
        "caste": [r[6] for r in records],
        "height": np.array([r[7] for r in records], dtype=float),
        "weight": np.array([r[8] for r in records], dtype=float),
        "job": [r[9] for r in records],
    })
    flag_mat = np.array([r[10] for r in records], dtype=np.int8)
    for j, c in enumerate(flag_cols):
        persons[c] = flag_mat[:, j]

    counts = np.bincount(persons["hh_index"].to_numpy(), minlength=len(hh_ids))
    empty = np.nonzero(counts == 0)[0]
    if empty.size:
        raise InputDataError(
            f"{households_path}: households with no members: "
            f"{[hh_ids[k] for k in empty[:10]]}")
    hh_ptr = np.concatenate([[0], np.cumsum(counts)])

    households = pd.DataFrame({
        "household_id": hh_ids,
        "size": counts.astype(np.int64),
        "psu": np.array(hh_psu, dtype=np.int64),
    })

    for attr in ("religion", "caste"):
        vals = persons[attr].to_numpy()
        firsts = vals[hh_ptr[:-1]]
        mixed = np.nonzero(np.array(
            [not (vals[hh_ptr[k]:hh_ptr[k + 1]] == firsts[k]).all()
             for k in range(len(hh_ids))]))[0]
        if mixed.size:
            warnings.warn(
                f"{mixed.size} households have members with differing {attr} "
                f"(e.g. {hh_ids[mixed[0]]!r}); keeping per-person values",
                stacklevel=2)

    return MicroSample(persons=persons, households=households, hh_ptr=hh_ptr)


def load_marginals(path, region_id) -> MarginalSet:
    """Load the (attribute, category, count) marginal table for one region.

    All person-attribute tables must describe the same population: their
    totals may differ by at most 0.5%. The household-size table is
    independent; an implied-person mismatch is only warned about.
    """
    fields, rows = _read_rows(path)
    require_columns(pd.DataFrame(columns=fields), ["attribute", "category", "count"], str(path))

    tables: dict = {}
    for i, row in enumerate(rows, start=1):
        attr = (row.get("attribute") or "").strip()
        cat = (row.get("category") or "").strip()
        count = _parse_float_cell(row.get("count"), i, "count", path)
        if not np.isfinite(count):
            raise InputDataError(f"{path}: missing count at data row {i}")
        if count < 0:
            raise InputDataError(
                f"{path}: negative count {count} for {attr}/{cat} at data row {i}")
        tables.setdefault(attr, [])
        if cat in dict(tables[attr]):
            raise InputDataError(f"{path}: duplicate category {attr}/{cat}")
        tables[attr].append((cat, float(count)))

    ms = MarginalSet(region_id=region_id, tables=tables)
    person_attrs = ms.person_attributes
    if not person_attrs:
        raise InputDataError(f"{path}: no person-attribute tables found")

    totals = {a: sum(c for _, c in tables[a]) for a in person_attrs}
    ref_attr = person_attrs[0]
    ref = totals[ref_attr]
    for a, t in totals.items():
        if ref > 0 and abs(t - ref) / ref > 0.005:
            raise InputDataError(
                f"{path}: person-attribute totals disagree beyond 0.5%: "
                f"{ref_attr}={ref:g} vs {a}={t:g}")

    if HOUSEHOLD_SIZE_ATTRIBUTE in tables:
        implied = sum(_category_lower_bound(cat) * c
                      for cat, c in tables[HOUSEHOLD_SIZE_ATTRIBUTE])
        if ref > 0 and abs(implied - ref) / ref > 0.005:
            warnings.warn(
                f"{path}: household-size table implies {implied:g} persons vs "
                f"person total {ref:g}; totals are treated as independent",
                stacklevel=2)
    return ms


def _category_lower_bound(label: str) -> float:
    lo, _ = parse_range_label(label)
    return lo


def parse_range_label(label: str):
    """Parse a category label like '18-39', '65+' or '4' into (lo, hi) inclusive."""
    s = label.strip()
    if s.endswith("+"):
        return float(s[:-1]), np.inf
    if "-" in s[1:]:
        head, tail = s.rsplit("-", 1)
        return float(head), float(tail)
    v = float(s)
    return v, v


def load_grid_density(path, cell_size: float) -> GridDensity:
    """Load the X (lat), Y (lon), Z (count) grid density CSV."""
    if not cell_size > 0:
        raise InputDataError(f"grid cell size must be > 0, got {cell_size}")
    fields, rows = _read_rows(path)
    for col in ("X", "Y", "Z"):
        if col not in fields:
            raise InputDataError(f"{path}: missing grid column {col!r}")
    lat = np.empty(len(rows))
    lon = np.empty(len(rows))
    z = np.empty(len(rows))
    for i, row in enumerate(rows):
        lat[i] = _parse_float_cell(row["X"], i + 1, "X", path)
        lon[i] = _parse_float_cell(row["Y"], i + 1, "Y", path)
        z[i] = _parse_float_cell(row["Z"], i + 1, "Z", path)
    if np.isnan(lat).any() or np.isnan(lon).any() or np.isnan(z).any():
        raise InputDataError(f"{path}: grid cells may not have missing coordinates or counts")
    if (z < 0).any():
        raise InputDataError(f"{path}: negative cell count at data row {int(np.argmax(z < 0)) + 1}")
    cells = np.column_stack([lat, lon])
    uniq = {(a, b) for a, b in cells}
    if len(uniq) != len(cells):
        raise InputDataError(f"{path}: duplicate (X, Y) grid cells")
    return GridDensity(cells=cells, z=z, cell_size=float(cell_size))


def load_region_polygon(path) -> RegionPolygon:
    """Load a boundary GeoJSON file (Polygon or MultiPolygon, any feature wrapping).

    GeoJSON stores [lon, lat]; coordinates are swapped to the (lat, lon)
    convention used everywhere else in this package.
    """
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)

    geometries = []

    def collect(node):
        t = node.get("type")
        if t == "FeatureCollection":
            for f in node.get("features", []):
                collect(f)
        elif t == "Feature":
            collect(node["geometry"])
        elif t in ("Polygon", "MultiPolygon"):
            geometries.append(node)
        else:
            raise InputDataError(f"{path}: unsupported GeoJSON type {t!r}")

    collect(doc)
    if not geometries:
        raise InputDataError(f"{path}: no Polygon/MultiPolygon geometry found")

    rings, holes = [], []
    for geom in geometries:
        polys = geom["coordinates"] if geom["type"] == "MultiPolygon" else [geom["coordinates"]]
        for poly in polys:
            for ring_idx, ring in enumerate(poly):
                arr = np.asarray(ring, dtype=float)
                if arr.ndim != 2 or arr.shape[1] != 2:
                    raise InputDataError(f"{path}: malformed ring coordinates")
                arr = arr[:, ::-1]  # lon,lat -> lat,lon
                if len(arr) >= 2 and np.array_equal(arr[0], arr[-1]):
                    arr = arr[:-1]
                if len(np.unique(arr, axis=0)) < 3:
                    raise InputDataError(f"{path}: ring with fewer than 3 distinct vertices")
                rings.append(np.ascontiguousarray(arr))
                holes.append(ring_idx > 0)
    return RegionPolygon(rings=rings, holes=holes)


def points_in_polygon(points, poly: RegionPolygon) -> np.ndarray:
    """Even-odd containment test for an (n, 2) array of (lat, lon) points.

    Points exactly on a ring edge count as inside (fixed tie rule). Holes
    fall out of the even-odd rule automatically.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    n = len(pts)
    inside = np.zeros(n, dtype=bool)
    on_edge = np.zeros(n, dtype=bool)
    py = pts[:, 0]  # lat
    px = pts[:, 1]  # lon

    for ring in poly.rings:
        y1 = ring[:, 0]
        x1 = ring[:, 1]
        y2 = np.roll(y1, -1)
        x2 = np.roll(x1, -1)
        # chunk over points to bound the broadcast at ~1e7 cells
        step = max(1, int(8_000_000 // max(len(ring), 1)))
        for s in range(0, n, step):
            e = min(n, s + step)
            PY = py[s:e, None]
            PX = px[s:e, None]
            straddle = (y1 > PY) != (y2 > PY)
            with np.errstate(divide="ignore", invalid="ignore"):
                x_at = (x2 - x1) * (PY - y1) / (y2 - y1) + x1
            crossings = (straddle & (PX < x_at)).sum(axis=1)
            inside[s:e] ^= (crossings % 2).astype(bool)
            cross = (x2 - x1) * (PY - y1) - (y2 - y1) * (PX - x1)
            within = ((PX >= np.minimum(x1, x2)) & (PX <= np.maximum(x1, x2)) &
                      (PY >= np.minimum(y1, y2)) & (PY <= np.maximum(y1, y2)))
            on_edge[s:e] |= ((cross == 0.0) & within).any(axis=1)

    return inside | on_edge


def point_in_polygon(p, poly: RegionPolygon) -> bool:
    return bool(points_in_polygon(np.asarray(p, dtype=float)[None, :], poly)[0])


def load_admin_units(path) -> pd.DataFrame:
    """Load the admin unit centers CSV (name, lat, lon)."""
    fields, rows = _read_rows(path)
    for col in ("name", "lat", "lon"):
        if col not in fields:
            raise InputDataError(f"{path}: missing admin unit column {col!r}")
    if not rows:
        raise InputDataError(f"{path}: admin unit list is empty")
    return pd.DataFrame({
        "name": [r["name"].strip() for r in rows],
        "lat": [_parse_float_cell(r["lat"], i + 1, "lat", path) for i, r in enumerate(rows)],
        "lon": [_parse_float_cell(r["lon"], i + 1, "lon", path) for i, r in enumerate(rows)],
    })


# The shipped 44-column output schema. The 10 comorbidity flags close the
# table; integer code columns sit next to their label columns.
POPULATION_COLUMNS = [
    "Age", "SexLabel", "Sex", "Height", "Weight", "HHID", "HH_Size",
    "H_Lat", "H_Lon", "District", "DistrictID",
    "AdminUnitName", "AdminUnitLatitude", "AdminUnitLongitude",
    "Religion", "ReligionID", "Caste", "CasteID",
    "JobLabel", "JobID", "WorkPlaceID", "W_Lat", "W_Lon",
    "essential_worker", "Adherence_to_Intervention", "PublicTransport_Jobs",
    "school_id", "school_lat", "school_long",
    "public_place_id", "public_place_lat", "public_place_long",
    "Agent_ID", "PSUID",
] + COMORBIDITY_COLUMNS

assert len(POPULATION_COLUMNS) == 44

_POPULATION_INT_COLUMNS = [
    "Age", "Sex", "HHID", "HH_Size", "DistrictID", "ReligionID", "CasteID",
    "JobID", "WorkPlaceID", "essential_worker", "PublicTransport_Jobs",
    "school_id", "public_place_id", "Agent_ID", "PSUID",
] + COMORBIDITY_COLUMNS
_POPULATION_FLOAT_COLUMNS = [
    "Height", "Weight", "H_Lat", "H_Lon", "AdminUnitLatitude", "AdminUnitLongitude",
    "W_Lat", "W_Lon", "Adherence_to_Intervention",
    "school_lat", "school_long", "public_place_lat", "public_place_long",
]


def write_population(batches, path) -> int:
    """Stream one or more population DataFrames to CSV.

    batches may be a single DataFrame or an iterable of them; each must
    carry exactly the 44 schema columns. Missing numeric cells serialize
    as empty strings. Returns the number of data rows written.
    """
    if isinstance(batches, pd.DataFrame):
        batches = [batches]
    rows = 0
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(",".join(POPULATION_COLUMNS) + "\n")
        for batch in batches:
            if list(batch.columns) != POPULATION_COLUMNS:
                raise RuntimeError(
                    "population batch does not match the 44-column schema "
                    f"(got {len(batch.columns)} columns); this is a pipeline bug")
            batch.to_csv(fh, header=False, index=False, na_rep="")
            rows += len(batch)
    return rows


def load_population(path, columns=None) -> pd.DataFrame:
    """Read a population CSV back with the schema dtypes (missing -> NaN)."""
    usecols = columns if columns is not None else POPULATION_COLUMNS
    unknown = [c for c in usecols if c not in POPULATION_COLUMNS]
    if unknown:
        raise InputDataError(f"unknown population columns requested: {unknown}")
    dtypes = {}
    for c in usecols:
        if c in _POPULATION_INT_COLUMNS:
            dtypes[c] = np.int64
        elif c in _POPULATION_FLOAT_COLUMNS:
            dtypes[c] = float
        else:
            dtypes[c] = str
    df = pd.read_csv(path, usecols=usecols, dtype=dtypes,
                     na_values=[""], keep_default_na=False)
    return df[usecols]
