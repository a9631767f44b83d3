"""Distance-decay assignment of external locations.

Workplaces, schools and public places are drawn with probability
proportional to f(distance) for a strictly decreasing f. Distances are
plain Euclidean in degree space; within a city the earth's curvature is
negligible and a geodesic metric would only rescale the weights.

For large candidate sets the draw can be restricted to the nearest
``nearest_n`` locations through a KD-tree (a documented approximation);
exact all-candidate weighting is the ``nearest_n=None`` switch used by the
verification tests.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.spatial import cKDTree

from .base import InputDataError, ParamMixin, check_is_fitted
from .synth import HOMEBOUND_LABEL, STUDENT_LABEL

_CHUNK = 50_000


def l2_distance(a, b) -> float:
    """Euclidean distance between two (lat, lon) points, in degrees."""
    return math.hypot(a[0] - b[0], a[1] - b[1])


class DecayFunction(ParamMixin):
    """Strictly decreasing distance weight.

    Forms: ``reciprocal`` 1/max(d, d_min) (default), ``exponential``
    exp(-rate*d), ``power`` max(d, d_min)**-exponent. The d_min floor keeps
    reciprocal and power forms finite when a candidate coincides with the
    origin.
    """

    FORMS = ("reciprocal", "exponential", "power")

    def __init__(self, form="reciprocal", d_min=1e-4, rate=1.0, exponent=1.0):
        if form not in self.FORMS:
            raise ValueError(f"unknown decay form {form!r}; choose from {self.FORMS}")
        if form in ("reciprocal", "power") and not d_min > 0:
            raise ValueError(f"d_min must be > 0 for the {form} form")
        if form == "exponential" and not rate > 0:
            raise ValueError("rate must be > 0 for the exponential form")
        if form == "power" and not exponent > 0:
            raise ValueError("exponent must be > 0 for the power form")
        self.form = form
        self.d_min = d_min
        self.rate = rate
        self.exponent = exponent

    def weights(self, distances) -> np.ndarray:
        d = np.asarray(distances, dtype=float)
        if self.form == "reciprocal":
            return 1.0 / np.maximum(d, self.d_min)
        if self.form == "exponential":
            return np.exp(-self.rate * d)
        return np.maximum(d, self.d_min) ** -self.exponent


def assign(home, candidates, decay: DecayFunction, rng) -> int:
    """Draw one candidate index for a single origin, probability ∝ f(distance).

    candidates is an (m, 2) array of (lat, lon); returns the row index of
    the chosen candidate.
    """
    cand = np.atleast_2d(np.asarray(candidates, dtype=float))
    if len(cand) == 0:
        raise InputDataError("assign called with an empty candidate list")
    d = np.hypot(cand[:, 0] - home[0], cand[:, 1] - home[1])
    w = decay.weights(d)
    cum = np.cumsum(w)
    return int(np.searchsorted(cum, rng.random() * cum[-1], side="right"))


class LocationAssigner(ParamMixin):
    """Bulk distance-decay assignment against one fixed location table."""

    def __init__(self, decay=None, nearest_n=200):
        self.decay = decay if decay is not None else DecayFunction()
        self.nearest_n = nearest_n

    def fit(self, location_ids, coords):
        ids = np.asarray(location_ids)
        coords = np.asarray(coords, dtype=float)
        if len(ids) == 0:
            raise InputDataError("cannot fit a location assigner with zero locations")
        self.ids_ = ids
        self.coords_ = coords
        if self.nearest_n is not None and len(ids) > self.nearest_n:
            self.tree_ = cKDTree(coords)
        else:
            self.tree_ = None
        return self

    def assign(self, origins, rng) -> np.ndarray:
        """Assign a location id to every (lat, lon) origin row."""
        check_is_fitted(self, "ids_")
        origins = np.atleast_2d(np.asarray(origins, dtype=float))
        out = np.empty(len(origins), dtype=self.ids_.dtype)
        for s in range(0, len(origins), _CHUNK):
            e = min(len(origins), s + _CHUNK)
            block = origins[s:e]
            if self.tree_ is not None:
                d, idx = self.tree_.query(block, k=self.nearest_n, workers=1)
            else:
                d = np.hypot(block[:, 0, None] - self.coords_[None, :, 0],
                             block[:, 1, None] - self.coords_[None, :, 1])
                idx = None
            w = self.decay.weights(d)
            cum = np.cumsum(w, axis=1)
            r = rng.random(len(block)) * cum[:, -1]
            pick = (cum < r[:, None]).sum(axis=1)
            np.clip(pick, 0, w.shape[1] - 1, out=pick)
            chosen = idx[np.arange(len(block)), pick] if idx is not None else pick
            out[s:e] = self.ids_[chosen]
        return out


def assign_all(persons, locations_by_kind, decay, rng, nearest_n=200):
    """Assign workplaces, schools and public places per job category.

    persons needs ``job_label``, ``lat`` and ``lon`` columns. Students get
    a school, workers (neither Homebound nor Student) get a workplace, and
    everyone gets a public place; ids stay 0 where a kind does not apply.
    locations_by_kind maps kind -> (ids, coords).

    Returns (workplace_ids, school_ids, public_ids) aligned with persons.
    """
    job = persons["job_label"].to_numpy()
    origins = np.column_stack([persons["lat"].to_numpy(), persons["lon"].to_numpy()])
    student = job == STUDENT_LABEL
    worker = (job != STUDENT_LABEL) & (job != HOMEBOUND_LABEL)

    n = len(persons)
    work_ids = np.zeros(n, dtype=np.int64)
    school_ids = np.zeros(n, dtype=np.int64)
    public_ids = np.zeros(n, dtype=np.int64)

    demands = (("workplace", worker, work_ids),
               ("school", student, school_ids),
               ("public_place", np.ones(n, dtype=bool), public_ids))
    for kind, mask, target in demands:
        if not mask.any():
            continue
        if kind not in locations_by_kind or len(locations_by_kind[kind][0]) == 0:
            raise InputDataError(
                f"no locations of kind {kind!r} available but "
                f"{int(mask.sum())} persons need one")
        ids, coords = locations_by_kind[kind]
        assigner = LocationAssigner(decay=decay, nearest_n=nearest_n).fit(ids, coords)
        target[mask] = assigner.assign(origins[mask], rng)
    return work_ids, school_ids, public_ids
