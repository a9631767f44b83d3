"""Household weight fitting and real-scale household sampling.

The fitter adjusts one non-negative weight per microdata household so that
weighted category counts simultaneously match household-level and
person-level marginal targets. Updates are multiplicative: constraints are
cycled in fixed order and, for constraint i, every household containing at
least one member in that category is scaled by target_i / current_i. One
epoch is one full cycle; convergence is judged on the average absolute
relative deviation across constraints. Weights start at 1.0.

Household and person marginals from real censuses are often mutually
inconsistent, so hitting max_iter is a warning, not an error: the best
weights seen across all epochs are returned, with the achieved deviation.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass

import numpy as np

from .base import InputDataError, ParamMixin, check_is_fitted, derive_rng
from .data_io import HOUSEHOLD_SIZE_ATTRIBUTE, MarginalSet, MicroSample, parse_range_label

# attribute name -> how to count household members per marginal category
DEFAULT_BINNING = {
    "sex": ("person_category", "sex"),
    "religion": ("person_category", "religion"),
    "caste": ("person_category", "caste"),
    "age-group": ("person_range", "age"),
    HOUSEHOLD_SIZE_ATTRIBUTE: ("household_size", None),
}


@dataclass
class IncidenceMatrix:
    """Constraint-by-household counts plus the aligned target vector."""

    constraints: list          # [(attribute, category), ...]
    a: np.ndarray              # (n_constraints, n_households) member counts
    targets: np.ndarray        # (n_constraints,)


@dataclass
class WeightVector:
    w: np.ndarray
    fit_delta: float
    iterations_used: int
    converged: bool


def build_incidence(sample: MicroSample, marginals: MarginalSet,
                    binning_config=None) -> IncidenceMatrix:
    """Build one incidence row per (attribute, category) in the marginal set.

    Raises if any marginal category has zero incidence across all
    households, since a multiplicative fit can never reach a positive
    target from a zero count.
    """
    binning = dict(DEFAULT_BINNING)
    if binning_config:
        binning.update(binning_config)

    hh_index = sample.persons["hh_index"].to_numpy()
    n_hh = sample.n_households
    constraints = []
    rows = []
    targets = []

    for attr, table in marginals.tables.items():
        if attr not in binning:
            raise InputDataError(
                f"no binning rule for marginal attribute {attr!r}; "
                f"known: {sorted(binning)}")
        kind, field = binning[attr]
        for category, target in table:
            if kind == "person_category":
                mask = (sample.persons[field].to_numpy() == category)
                row = np.bincount(hh_index[mask], minlength=n_hh)
            elif kind == "person_range":
                lo, hi = parse_range_label(category)
                vals = sample.persons[field].to_numpy()
                mask = (vals >= lo) & (vals <= hi)
                row = np.bincount(hh_index[mask], minlength=n_hh)
            elif kind == "household_size":
                lo, hi = parse_range_label(category)
                sizes = sample.households["size"].to_numpy()
                row = ((sizes >= lo) & (sizes <= hi)).astype(np.int64)
            else:
                raise InputDataError(f"unknown binning kind {kind!r} for {attr!r}")
            if not row.any():
                raise InputDataError(
                    f"infeasible constraint: marginal category {attr}/{category} "
                    "has zero incidence in the microdata")
            constraints.append((attr, category))
            rows.append(row)
            targets.append(target)

    return IncidenceMatrix(constraints=constraints,
                           a=np.array(rows, dtype=float),
                           targets=np.array(targets, dtype=float))


class HouseholdWeightFitter(ParamMixin):
    """Iterative multiplicative fitter for household weights.

    Parameters
    ----------
    tol : float
        Average absolute relative deviation at which to stop.
    max_iter : int
        Epoch budget; exhausting it keeps the best-seen weights and warns.

    Fitted attributes: ``weights_``, ``fit_delta_`` (best average deviation
    seen), ``deviations_`` (per-constraint, at the best epoch),
    ``iterations_used_``, ``converged_`` and ``history_`` (per-epoch,
    per-constraint deviations, for diagnostics export).
    """

    def __init__(self, tol=1e-3, max_iter=2000):
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, incidence: IncidenceMatrix, targets=None):
        a = np.asarray(incidence.a, dtype=float)
        t = np.asarray(incidence.targets if targets is None else targets, dtype=float)
        if a.ndim != 2 or len(t) != a.shape[0]:
            raise ValueError(f"incidence {a.shape} does not match {len(t)} targets")
        if (t <= 0).any():
            bad = incidence.constraints[int(np.argmax(t <= 0))]
            raise InputDataError(f"non-positive target for constraint {bad}")
        if (a.sum(axis=1) == 0).any():
            bad = incidence.constraints[int(np.argmax(a.sum(axis=1) == 0))]
            raise InputDataError(f"infeasible constraint {bad}: zero incidence")

        n_con, n_hh = a.shape
        masks = [a[i] > 0 for i in range(n_con)]
        w = np.ones(n_hh)
        history = []
        best_delta = np.inf
        best_w = w.copy()
        best_dev = None
        epoch = 0

        for epoch in range(1, self.max_iter + 1):
            for i in range(n_con):
                s = a[i] @ w
                w[masks[i]] *= t[i] / s
            if not np.isfinite(w).all():
                raise FloatingPointError(
                    f"non-finite household weight after epoch {epoch}; "
                    "targets are likely wildly inconsistent")
            dev = np.abs(a @ w - t) / t
            history.append(dev)
            delta = float(dev.mean())
            if delta < best_delta:
                best_delta = delta
                best_w = w.copy()
                best_dev = dev
            if delta <= self.tol:
                break
        else:
            warnings.warn(
                f"weight fit did not reach tol={self.tol:g} in {self.max_iter} "
                f"epochs (best average deviation {best_delta:.3e}); "
                "keeping best-seen weights", stacklevel=2)

        self.weights_ = best_w
        self.fit_delta_ = best_delta
        self.deviations_ = best_dev
        self.iterations_used_ = epoch
        self.converged_ = best_delta <= self.tol
        self.history_ = np.array(history)
        self.constraints_ = list(incidence.constraints)
        return self

    def export_diagnostics(self, path):
        """Write per-epoch per-constraint relative deviations as CSV."""
        check_is_fitted(self, "history_")
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch"] + [f"{a}/{c}" for a, c in self.constraints_] + ["avg"])
            for e, dev in enumerate(self.history_, start=1):
                writer.writerow([e] + [f"{d:.6e}" for d in dev] + [f"{dev.mean():.6e}"])


def ipu_fit(incidence: IncidenceMatrix, targets=None, tol=1e-3, max_iter=2000) -> WeightVector:
    """Functional wrapper around :class:`HouseholdWeightFitter`."""
    fitter = HouseholdWeightFitter(tol=tol, max_iter=max_iter).fit(incidence, targets)
    return WeightVector(w=fitter.weights_, fit_delta=fitter.fit_delta_,
                        iterations_used=fitter.iterations_used_,
                        converged=fitter.converged_)


_DRAW_BLOCK = 8192


def sample_household_indices(weights, sizes, target_persons: int, rng) -> np.ndarray:
    """Draw household indices with replacement, probability proportional to weight.

    Stops at the first household that brings the cumulative person count to
    target_persons or beyond, so the last household may overshoot.
    """
    weights = np.asarray(weights, dtype=float)
    sizes = np.asarray(sizes)
    if target_persons < 1:
        raise ValueError(f"target_persons must be >= 1, got {target_persons}")
    if (weights < 0).any() or not np.isfinite(weights).all():
        raise InputDataError("household weights must be finite and non-negative")
    total_w = weights.sum()
    if total_w <= 0:
        raise InputDataError("all household weights are zero; nothing to sample")

    cum = np.cumsum(weights)
    chunks = []
    persons = 0
    while persons < target_persons:
        u = rng.random(_DRAW_BLOCK) * total_w
        idx = np.searchsorted(cum, u, side="right")
        csum = persons + np.cumsum(sizes[idx])
        if csum[-1] >= target_persons:
            stop = int(np.searchsorted(csum, target_persons, side="left"))
            chunks.append(idx[:stop + 1])
            persons = int(csum[stop])
        else:
            chunks.append(idx)
            persons = int(csum[-1])
    return np.concatenate(chunks)


@dataclass
class HouseholdTemplate:
    """One sampled household: donor row plus fresh synthetic identifiers."""

    donor_index: int
    household_id: int
    person_ids: np.ndarray
    size: int


def sample_households(weights, sample: MicroSample, target_persons: int, rng_seed,
                      household_id_start: int = 1, person_id_start: int = 1):
    """Yield sampled households as templates carrying fresh ids.

    Every template is member-for-member identical to its donor microdata
    household; sampling never recombines individuals across households.
    """
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else derive_rng(rng_seed, "households")
    if isinstance(weights, WeightVector):
        weights = weights.w
    sizes = sample.households["size"].to_numpy()
    donors = sample_household_indices(weights, sizes, target_persons, rng)
    hh_id = household_id_start
    pid = person_id_start
    for donor in donors:
        size = int(sizes[donor])
        yield HouseholdTemplate(donor_index=int(donor), household_id=hh_id,
                                person_ids=np.arange(pid, pid + size), size=size)
        hh_id += 1
        pid += size
