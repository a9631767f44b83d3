import numpy as np
import pandas as pd
import pytest
from scipy.stats import chi2

from popforge.assign import (DecayFunction, LocationAssigner, assign, assign_all,
                             l2_distance)
from popforge.base import InputDataError, derive_rng


def test_l2_distance_examples():
    assert l2_distance((0, 0), (3, 4)) == 5.0
    assert l2_distance((1.2, -3.4), (1.2, -3.4)) == 0.0
    # independent hand computation: sqrt(0.05^2 + 0.079^2)
    d = l2_distance((19.024, 72.911), (19.074, 72.832))
    assert abs(d - 0.09349) < 5e-6


def test_decay_forms_strictly_decreasing():
    xs = np.linspace(0.0, 3.0, 50)
    for form in DecayFunction.FORMS:
        f = DecayFunction(form=form)
        w = f.weights(xs)
        assert (w > 0).all() and np.isfinite(w).all()
        tail = w[xs > f.d_min]
        assert (np.diff(tail) < 0).all()


def test_decay_validation():
    with pytest.raises(ValueError, match="unknown decay form"):
        DecayFunction(form="banana")
    with pytest.raises(ValueError, match="d_min"):
        DecayFunction(form="reciprocal", d_min=0.0)


def test_single_candidate_always_chosen():
    rng = derive_rng(0, "single")
    for _ in range(20):
        assert assign((0.0, 0.0), [(5.0, 5.0)], DecayFunction(), rng) == 0


def test_two_candidate_probabilities():
    # distances 1 and 2, reciprocal decay: weights 1 and 1/2 -> 2/3 and 1/3
    rng = derive_rng(1, "two-cand")
    cands = np.array([[1.0, 0.0], [2.0, 0.0]])
    picks = np.array([assign((0.0, 0.0), cands, DecayFunction(), rng)
                      for _ in range(100_000)])
    share0 = (picks == 0).mean()
    assert abs(share0 - 2 / 3) < 0.01
    assert abs((1 - share0) - 1 / 3) < 0.01


def test_colocated_candidate_uses_floor():
    rng = derive_rng(2, "floor")
    cands = np.array([[0.0, 0.0], [1.0, 0.0]])   # first sits on the home point
    idx = assign((0.0, 0.0), cands, DecayFunction(d_min=1e-4), rng)
    assert idx in (0, 1)
    w = DecayFunction(d_min=1e-4).weights(np.array([0.0]))
    assert np.isfinite(w).all() and w[0] == 1e4


def test_empty_candidates_error():
    with pytest.raises(InputDataError, match="empty"):
        assign((0, 0), np.empty((0, 2)), DecayFunction(), derive_rng(0, "e"))


def test_bulk_assigner_matches_exact_mode():
    rng = np.random.default_rng(3)
    coords = rng.uniform(0, 1, size=(50, 2))
    ids = np.arange(100, 150)
    origins = rng.uniform(0, 1, size=(2000, 2))
    exact = LocationAssigner(nearest_n=None).fit(ids, coords)
    pruned = LocationAssigner(nearest_n=50).fit(ids, coords)   # covers all candidates
    a = exact.assign(origins, derive_rng(4, "bulk"))
    b = pruned.assign(origins, derive_rng(4, "bulk"))
    assert np.array_equal(a, b)
    assert set(a) <= set(ids)


def test_nearest_candidate_pruning_path():
    rng = np.random.default_rng(5)
    coords = rng.uniform(0, 1, size=(500, 2))
    ids = np.arange(500)
    assigner = LocationAssigner(nearest_n=20).fit(ids, coords)
    origins = np.full((3000, 2), 0.5)
    got = assigner.assign(origins, derive_rng(6, "prune"))
    # only the 20 nearest locations to (0.5, 0.5) can ever be drawn
    d = np.hypot(coords[:, 0] - 0.5, coords[:, 1] - 0.5)
    nearest = set(ids[np.argsort(d)[:20]])
    assert set(got) <= nearest


def test_assignment_frequencies_chi_square():
    cands = np.array([[0.5, 0.0], [1.0, 0.0], [1.5, 0.0], [2.0, 0.0], [3.0, 0.0]])
    decay = DecayFunction()
    w = decay.weights(np.hypot(cands[:, 0], cands[:, 1]))
    p = w / w.sum()
    assigner = LocationAssigner(decay=decay, nearest_n=None).fit(np.arange(5), cands)
    got = assigner.assign(np.zeros((100_000, 2)), derive_rng(7, "chisq"))
    counts = np.bincount(got, minlength=5)
    expected = p * 100_000
    stat = ((counts - expected) ** 2 / expected).sum()
    assert stat < chi2.isf(0.01, df=4)


def test_monotonicity_moving_candidate_farther():
    decay = DecayFunction()
    fixed = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    freqs = []
    for dist in (0.5, 1.5, 3.0):
        cands = np.vstack([[dist, 0.0], fixed])
        assigner = LocationAssigner(decay=decay, nearest_n=None).fit(np.arange(4), cands)
        got = assigner.assign(np.zeros((50_000, 2)), derive_rng(8, "mono"))
        freqs.append((got == 0).mean())
    noise = 3 * np.sqrt(0.25 / 50_000)
    assert freqs[0] > freqs[1] - noise > freqs[2] - 2 * noise
    assert freqs[0] > freqs[2]


def persons_frame(jobs):
    n = len(jobs)
    return pd.DataFrame({"job_label": jobs,
                         "lat": np.zeros(n), "lon": np.linspace(0, 1, n)})


def locations():
    return {
        "workplace": (np.array([201, 202]), np.array([[0.1, 0.1], [0.2, 0.9]])),
        "school": (np.array([201]), np.array([[0.1, 0.1]])),
        "public_place": (np.array([301, 302]), np.array([[0.5, 0.1], [0.5, 0.9]])),
    }


def test_assign_all_routing():
    persons = persons_frame(["Homebound", "Student", "Construction"])
    work, school, public = assign_all(persons, locations(), DecayFunction(),
                                      derive_rng(9, "routing"))
    assert work[0] == 0 and school[0] == 0 and public[0] != 0    # homebound
    assert work[1] == 0 and school[1] == 201 and public[1] != 0  # student
    assert work[2] in (201, 202) and school[2] == 0              # worker
    assert (public != 0).all()                                   # everyone


def test_assign_all_missing_kind_named():
    persons = persons_frame(["Student"])
    locs = locations()
    locs["school"] = (np.array([], dtype=np.int64), np.empty((0, 2)))
    with pytest.raises(InputDataError, match="school"):
        assign_all(persons, locs, DecayFunction(), derive_rng(10, "missing"))
