"""Individual attribute synthesis conditioned on age and sex.

The neural conditional synthesizer of the original design sits behind the
:class:`ConditionalGenerator` interface; the reference implementation here
is a stratified resampler: training rows are grouped by (age bin, sex),
sampling copies a donor row from the matching stratum and perturbs numeric
values with a small Gaussian jitter scaled to the within-stratum spread.
Comorbidity flags are copied jointly from a single donor so co-occurrence
patterns survive. Any generator honouring the interface can be swapped in;
the evaluation metrics are the arbiter either way.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .base import InputDataError, ParamMixin, check_is_fitted
from .data_io import COMORBIDITY_COLUMNS

HOMEBOUND_LABEL = "Homebound"
HOMEBOUND_ID = 0
STUDENT_LABEL = "Student"
STUDENT_ID = 199

_AGE_BIN_TOP = 85  # final bin is open-ended: 85+


class ConditionalGenerator(ParamMixin):
    """Interface for attribute generators conditioned on (age, sex).

    Implementations must be fit before sampling and must succeed for any
    condition combination that appeared in training data.
    """

    condition_columns = ("age", "sex")
    target_columns = ("height", "weight", *COMORBIDITY_COLUMNS)

    def fit(self, persons):
        raise NotImplementedError

    def sample(self, ages, sexes, rng, return_donors=False):
        raise NotImplementedError


class StratifiedResampler(ConditionalGenerator):
    """Donor resampling from (age bin, sex) strata with jittered numerics.

    Parameters
    ----------
    jitter_scale : float
        Gaussian jitter sigma as a fraction of the within-stratum standard
        deviation; 0 reproduces donors exactly. Jitter is redrawn when it
        would push height or weight non-positive.
    min_stratum_size : int
        Strata smaller than this merge into the neighbouring age bin
        (cascading upward; a short tail folds back into the previous
        group, so only an undersized age extreme can remain small).
    age_bin_width : int
        Width of the conditioning age bins in years.
    """

    def __init__(self, jitter_scale=0.1, min_stratum_size=20, age_bin_width=5):
        self.jitter_scale = jitter_scale
        self.min_stratum_size = min_stratum_size
        self.age_bin_width = age_bin_width

    # -- fitting ---------------------------------------------------------

    def _bin_of(self, ages):
        top_bin = _AGE_BIN_TOP // self.age_bin_width
        return np.minimum(np.asarray(ages, dtype=np.int64) // self.age_bin_width, top_bin)

    def fit(self, persons):
        """Fit from a persons table with age, sex, height, weight and flag columns."""
        if len(persons) == 0:
            raise InputDataError("cannot fit attribute generator on an empty training set")
        ages = persons["age"].to_numpy()
        sexes = persons["sex"].to_numpy()
        heights = persons["height"].to_numpy(dtype=float)
        weights = persons["weight"].to_numpy(dtype=float)
        flags = persons[list(COMORBIDITY_COLUMNS)].to_numpy(dtype=np.int8)

        n_bins = _AGE_BIN_TOP // self.age_bin_width + 1
        bins = self._bin_of(ages)
        self.sex_categories_ = sorted(set(sexes))
        self.n_bins_ = n_bins

        # joint numeric pool: rows where both height and weight are present
        numeric_ok = np.isfinite(heights) & np.isfinite(weights)
        if not numeric_ok.any():
            raise InputDataError("no training rows carry both height and weight")

        self.group_of_bin_ = np.zeros((len(self.sex_categories_), n_bins), dtype=np.int64)
        self.groups_ = []
        for s_idx, sex in enumerate(self.sex_categories_):
            sex_rows = np.nonzero(sexes == sex)[0]
            per_bin = [sex_rows[bins[sex_rows] == b] for b in range(n_bins)]
            spans = self._merge_bins([len(p) for p in per_bin])
            for lo, hi in spans:
                rows = np.concatenate(per_bin[lo:hi + 1]) if hi >= lo else np.array([], int)
                g = len(self.groups_)
                self.group_of_bin_[s_idx, lo:hi + 1] = g
                num_rows = rows[numeric_ok[rows]] if rows.size else rows
                if num_rows.size == 0:
                    # documented fallback chain: sex-level joint pool, then global
                    fallback = sex_rows[numeric_ok[sex_rows]]
                    num_rows = fallback if fallback.size else np.nonzero(numeric_ok)[0]
                self.groups_.append({
                    "heights": heights[num_rows],
                    "weights": weights[num_rows],
                    "numeric_donor_rows": num_rows,
                    "flag_rows": rows if rows.size else num_rows,
                    "flags": flags[rows] if rows.size else flags[num_rows],
                    "sigma_h": float(heights[num_rows].std()) * self.jitter_scale,
                    "sigma_w": float(weights[num_rows].std()) * self.jitter_scale,
                })
        return self

    def _merge_bins(self, counts):
        """Greedy left-to-right grouping of consecutive bins to reach the size floor."""
        spans = []
        start = 0
        acc = 0
        for b, c in enumerate(counts):
            acc += c
            if acc >= self.min_stratum_size:
                spans.append((start, b))
                start = b + 1
                acc = 0
        if start < len(counts):
            if spans:
                lo, _ = spans.pop()
                spans.append((lo, len(counts) - 1))
            else:
                spans.append((0, len(counts) - 1))
        return spans

    # -- sampling --------------------------------------------------------

    def stratum_of(self, age, sex):
        """Group index serving a given (age, sex); exposes the fallback chain."""
        check_is_fitted(self, "groups_")
        s_idx = self.sex_categories_.index(sex)
        return int(self.group_of_bin_[s_idx, int(self._bin_of(age))])

    def sample(self, ages, sexes, rng, return_donors=False):
        """Sample (heights, weights, flags) for arrays of ages and sexes.

        Numeric values come from a donor row (height and weight jointly,
        preserving their correlation) plus truncated Gaussian jitter; the
        ten flags are copied together from an independently drawn donor of
        the same stratum.
        """
        check_is_fitted(self, "groups_")
        ages = np.atleast_1d(np.asarray(ages))
        sexes = np.atleast_1d(np.asarray(sexes))
        n = len(ages)
        sex_code = np.searchsorted(self.sex_categories_, sexes)
        group = self.group_of_bin_[sex_code, self._bin_of(ages)]

        heights = np.empty(n)
        weights = np.empty(n)
        flags = np.empty((n, len(COMORBIDITY_COLUMNS)), dtype=np.int8)
        num_donor = np.empty(n, dtype=np.int64)
        flag_donor = np.empty(n, dtype=np.int64)

        for g in np.unique(group):
            sel = np.nonzero(group == g)[0]
            grp = self.groups_[g]
            pick = rng.integers(0, len(grp["heights"]), size=len(sel))
            h = grp["heights"][pick]
            w = grp["weights"][pick]
            if self.jitter_scale > 0:
                h = _jitter_positive(h, grp["sigma_h"], rng)
                w = _jitter_positive(w, grp["sigma_w"], rng)
            heights[sel] = h
            weights[sel] = w
            num_donor[sel] = grp["numeric_donor_rows"][pick]
            fpick = rng.integers(0, len(grp["flags"]), size=len(sel))
            flags[sel] = grp["flags"][fpick]
            flag_donor[sel] = grp["flag_rows"][fpick]

        if return_donors:
            return heights, weights, flags, num_donor, flag_donor
        return heights, weights, flags

    # -- persistence ------------------------------------------------------
    #
    # Layout (format_version 1, single .npz file): a JSON "meta" blob with
    # parameters, sex categories and per-group sigmas, plus concatenated
    # pool arrays with offset vectors (group g owns slice offs[g]:offs[g+1]).

    def save(self, path):
        check_is_fitted(self, "groups_")
        offs = np.cumsum([0] + [len(g["heights"]) for g in self.groups_])
        foffs = np.cumsum([0] + [len(g["flags"]) for g in self.groups_])
        meta = {
            "format_version": 1,
            "params": self.get_params(),
            "sex_categories": self.sex_categories_,
            "n_bins": self.n_bins_,
            "sigmas": [[g["sigma_h"], g["sigma_w"]] for g in self.groups_],
        }
        np.savez_compressed(
            path,
            meta=np.bytes_(json.dumps(meta).encode("utf-8")),
            group_of_bin=self.group_of_bin_,
            pool_offsets=offs,
            pool_heights=np.concatenate([g["heights"] for g in self.groups_]),
            pool_weights=np.concatenate([g["weights"] for g in self.groups_]),
            pool_numeric_rows=np.concatenate([g["numeric_donor_rows"] for g in self.groups_]),
            flag_offsets=foffs,
            pool_flags=np.concatenate([g["flags"] for g in self.groups_]),
            pool_flag_rows=np.concatenate([g["flag_rows"] for g in self.groups_]),
        )

    @classmethod
    def load(cls, path):
        with np.load(path) as data:
            meta = json.loads(bytes(data["meta"]).decode("utf-8"))
            if meta["format_version"] != 1:
                raise InputDataError(
                    f"unsupported generator file version {meta['format_version']}")
            gen = cls(**meta["params"])
            gen.sex_categories_ = list(meta["sex_categories"])
            gen.n_bins_ = int(meta["n_bins"])
            gen.group_of_bin_ = data["group_of_bin"]
            offs = data["pool_offsets"]
            foffs = data["flag_offsets"]
            gen.groups_ = []
            for g, (sh, sw) in enumerate(meta["sigmas"]):
                gen.groups_.append({
                    "heights": data["pool_heights"][offs[g]:offs[g + 1]],
                    "weights": data["pool_weights"][offs[g]:offs[g + 1]],
                    "numeric_donor_rows": data["pool_numeric_rows"][offs[g]:offs[g + 1]],
                    "flags": data["pool_flags"][foffs[g]:foffs[g + 1]],
                    "flag_rows": data["pool_flag_rows"][foffs[g]:foffs[g + 1]],
                    "sigma_h": sh,
                    "sigma_w": sw,
                })
        return gen


def _jitter_positive(values, sigma, rng, max_rounds=100):
    if sigma <= 0:
        return values
    out = values + rng.normal(0.0, sigma, size=len(values))
    for _ in range(max_rounds):
        bad = out <= 0
        if not bad.any():
            return out
        out[bad] = values[bad] + rng.normal(0.0, sigma, size=int(bad.sum()))
    out[out <= 0] = values[out <= 0]  # donors are positive by load-time bounds
    return out


@dataclass
class JobTable:
    """Job labels with draw weights proportional to their microdata frequency.

    'Homebound' (id 0) is an ordinary drawable entry when it appears in the
    survey (non-working adults); 'Student' (id 199) is never drawn, it is
    assigned purely by the age rule. Both are always present in the table.
    """

    labels: list
    ids: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        if (self.weights < 0).any():
            raise InputDataError("job weights must be non-negative")
        if self.weights.sum() <= 0:
            raise InputDataError("job table has no positive weights")
        for special in (HOMEBOUND_LABEL, STUDENT_LABEL):
            if special not in self.labels:
                raise InputDataError(f"job table missing special label {special!r}")

    def id_of(self, label: str) -> int:
        return int(self.ids[self.labels.index(label)])

    def _draw(self, n, rng, exclude):
        keep = np.array([(w > 0 and lab not in exclude)
                         for lab, w in zip(self.labels, self.weights)])
        if not keep.any():
            raise InputDataError("no drawable job entries after exclusions")
        idx = np.nonzero(keep)[0]
        cum = np.cumsum(self.weights[idx])
        pick = idx[np.searchsorted(cum, rng.random(n) * cum[-1], side="right")]
        return pick

    def sample_job_ids(self, n, rng):
        """Draw adult job entries; Student is excluded, Homebound is drawable."""
        return self._draw(n, rng, exclude={STUDENT_LABEL})

    def sample_workplace_types(self, n, rng):
        """Draw workplace type entries; both special labels are excluded."""
        return self._draw(n, rng, exclude={STUDENT_LABEL, HOMEBOUND_LABEL})


def build_job_table(sample) -> JobTable:
    """Tabulate observed job labels from microdata with frequency weights."""
    jobs = [j for j in sample.persons["job"] if j is not None]
    counts: dict = {}
    for j in jobs:
        counts[j] = counts.get(j, 0) + 1
    counts.pop(STUDENT_LABEL, None)  # age rule owns Student; never drawable
    labels = sorted(counts)
    weights = [float(counts[lab]) for lab in labels]
    for special in (HOMEBOUND_LABEL, STUDENT_LABEL):
        if special not in labels:
            labels.append(special)
            weights.append(0.0)

    ids = []
    next_id = 1
    for lab in labels:
        if lab == HOMEBOUND_LABEL:
            ids.append(HOMEBOUND_ID)
        elif lab == STUDENT_LABEL:
            ids.append(STUDENT_ID)
        else:
            if next_id == STUDENT_ID:
                next_id += 1
            ids.append(next_id)
            next_id += 1
    if not any(w > 0 for w in weights):
        raise InputDataError("microdata contains no usable job labels")
    return JobTable(labels=labels, ids=np.array(ids, dtype=np.int64),
                    weights=np.array(weights, dtype=float))


def assign_job(age: int, table: JobTable, rng):
    """Age rule: under 3 Homebound, 3-17 Student, adults draw from the table."""
    if age < 3:
        return HOMEBOUND_LABEL, HOMEBOUND_ID
    if age < 18:
        return STUDENT_LABEL, STUDENT_ID
    k = int(table.sample_job_ids(1, rng)[0])
    return table.labels[k], int(table.ids[k])


def assign_jobs(ages, table: JobTable, rng):
    """Vectorized assign_job: returns (labels array, ids array)."""
    ages = np.asarray(ages)
    labels = np.empty(len(ages), dtype=object)
    ids = np.zeros(len(ages), dtype=np.int64)
    labels[:] = HOMEBOUND_LABEL
    student = (ages >= 3) & (ages < 18)
    labels[student] = STUDENT_LABEL
    ids[student] = STUDENT_ID
    adult = ages >= 18
    n_adult = int(adult.sum())
    if n_adult:
        picks = table.sample_job_ids(n_adult, rng)
        labels[adult] = np.array(table.labels, dtype=object)[picks]
        ids[adult] = table.ids[picks]
    return labels, ids
