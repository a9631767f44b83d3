"""Synthetic-population quality metrics and plot-data export.

KS scores (1 minus the two-sample sup distance) grade continuous columns,
a goodness-of-fit chi-square against the real sample's proportions grades
categorical ones, and the train-on-synthetic/test-on-real regression
comparison measures whether model relationships survive synthesis. At the
sample sizes involved here p-values for the KS test would be degenerate,
so only the raw statistic is reported for it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy.stats import chi2

from .base import InputDataError, derive_rng
from .regressors import ClosedFormLinear, GradientDescentRegressor, r2_score


def ks_score(real, synth) -> float:
    """1 - sup|ECDF_real - ECDF_synth|; 1.0 means identical empirical distributions."""
    real = np.asarray(real, dtype=float)
    synth = np.asarray(synth, dtype=float)
    real = real[np.isfinite(real)]
    synth = synth[np.isfinite(synth)]
    if len(real) == 0 or len(synth) == 0:
        raise InputDataError("ks_score requires two non-empty samples")
    xs = np.sort(real)
    ys = np.sort(synth)
    grid = np.concatenate([xs, ys])
    f_real = np.searchsorted(xs, grid, side="right") / len(xs)
    f_synth = np.searchsorted(ys, grid, side="right") / len(ys)
    d = float(np.max(np.abs(f_real - f_synth)))
    return 1.0 - d


def chi_square_pvalue(real, synth) -> float:
    """Goodness-of-fit p-value of synth counts against real proportions.

    Expected counts are the real sample's category proportions scaled to
    the synthetic sample size; degrees of freedom are categories - 1.
    Categories with zero expected count (present only in synth) are merged
    into the smallest-expected real category before testing.
    """
    real = pd.Series(real).dropna()
    synth = pd.Series(synth).dropna()
    if len(real) == 0 or len(synth) == 0:
        raise InputDataError("chi_square_pvalue requires two non-empty samples")
    cats = sorted(set(real.unique()) | set(synth.unique()), key=str)
    if len(cats) < 2:
        raise InputDataError("chi-square test needs at least 2 categories")
    real_counts = real.value_counts()
    synth_counts = synth.value_counts()
    expected = np.array([real_counts.get(c, 0) / len(real) * len(synth) for c in cats])
    observed = np.array([synth_counts.get(c, 0) for c in cats], dtype=float)

    zero = expected == 0
    if zero.any():
        pos = np.nonzero(~zero)[0]
        if len(pos) < 2:
            raise InputDataError("fewer than 2 categories with positive expected count")
        sink = pos[np.argmin(expected[pos])]
        observed[sink] += observed[zero].sum()
        observed = observed[~zero]
        expected = expected[~zero]

    stat = float(((observed - expected) ** 2 / expected).sum())
    return float(chi2.sf(stat, df=len(expected) - 1))


_EFFICACY_FEATURES = ("age", "sex", "height", "weight")


def _design_matrix(df, target_column, sex_categories):
    other = "weight" if target_column == "height" else "height"
    cols = [df["age"].to_numpy(dtype=float)]
    sex = df["sex"].to_numpy()
    for cat in sex_categories:
        cols.append((sex == cat).astype(float))
    cols.append(df[other].to_numpy(dtype=float))
    return np.column_stack(cols), df[target_column].to_numpy(dtype=float)


def ml_efficacy(real_train, real_test, synth_train, target_column,
                model="linear", mlp_params=None, seed=0):
    """Train on real and on synthetic, score both on the real test set (R²).

    Frames need age, sex, height and weight columns; the features are age,
    one-hot sex, and whichever of height/weight is not the target.
    """
    if target_column not in ("height", "weight"):
        raise ValueError(f"target must be height or weight, got {target_column!r}")
    for name, df in (("real_train", real_train), ("real_test", real_test),
                     ("synth_train", synth_train)):
        missing = [c for c in _EFFICACY_FEATURES if c not in df.columns]
        if missing:
            raise InputDataError(f"{name} missing feature columns {missing}")
    y_test = real_test[target_column].to_numpy(dtype=float)
    if np.var(y_test) == 0:
        raise InputDataError(f"degenerate {target_column} variance in the test set")

    sex_categories = sorted(set(real_train["sex"]) | set(real_test["sex"])
                            | set(synth_train["sex"]))

    def make_model():
        if model == "linear":
            return ClosedFormLinear()
        if model == "mlp":
            return GradientDescentRegressor(seed=seed, **(mlp_params or {}))
        raise ValueError(f"unknown model {model!r}; choose 'linear' or 'mlp'")

    x_test, _ = _design_matrix(real_test, target_column, sex_categories)
    scores = []
    for train in (real_train, synth_train):
        x_tr, y_tr = _design_matrix(train, target_column, sex_categories)
        est = make_model().fit(x_tr, y_tr)
        scores.append(r2_score(y_test, est.predict(x_test)))
    return scores[0], scores[1]


@dataclass
class EvalReport:
    ks_scores: dict = field(default_factory=dict)
    cs_pvalues: dict = field(default_factory=dict)
    ml_efficacy: dict = field(default_factory=dict)       # (target, model) -> (real, synth)
    sample_sizes: dict = field(default_factory=dict)

    def write_text(self, path):
        """Fixed section and key order, 4-decimal formatting."""
        lines = ["[ks_scores]"]
        for col in sorted(self.ks_scores):
            lines.append(f"{col} = {self.ks_scores[col]:.4f}")
        lines.append("[chi_square_pvalues]")
        for col in sorted(self.cs_pvalues):
            lines.append(f"{col} = {self.cs_pvalues[col]:.4f}")
        lines.append("[ml_efficacy]")
        for target, model in sorted(self.ml_efficacy):
            real, synth = self.ml_efficacy[(target, model)]
            lines.append(f"{target}.{model}.real_trained = {real:.4f}")
            lines.append(f"{target}.{model}.synth_trained = {synth:.4f}")
        lines.append("[sample_sizes]")
        for k in sorted(self.sample_sizes):
            lines.append(f"{k} = {self.sample_sizes[k]}")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")


def export_plot_data(real, synth, columns, out_dir, bin_width=None,
                     scatter_cap=10_000, seed=0):
    """Write the CSVs needed to redraw the standard comparison figures.

    Per numeric column: a shared-bin histogram (real and synthetic counts)
    and quartile summaries; per column pair: capped, seeded scatter
    samples. Returns the list of files written.
    """
    from pathlib import Path
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for col in columns:
        for name, df in (("real", real), ("synthetic", synth)):
            if col not in df.columns:
                raise InputDataError(f"column {col!r} not present in the {name} table")
    rng = derive_rng(seed, "plot-export")
    written = []

    qrows = []
    for col in columns:
        rv = real[col].to_numpy(dtype=float)
        sv = synth[col].to_numpy(dtype=float)
        rv = rv[np.isfinite(rv)]
        sv = sv[np.isfinite(sv)]
        lo = min(rv.min(), sv.min())
        hi = max(rv.max(), sv.max())
        if bin_width:
            width = bin_width[col] if isinstance(bin_width, dict) else bin_width
            edges = np.arange(np.floor(lo / width) * width, hi + width, width)
        else:
            edges = np.linspace(lo, hi, 41)
        rc, _ = np.histogram(rv, bins=edges)
        sc, _ = np.histogram(sv, bins=edges)
        hist = pd.DataFrame({"bin_lo": edges[:-1], "bin_hi": edges[1:],
                             "real_count": rc, "synthetic_count": sc})
        f = out / f"hist_{col}.csv"
        hist.to_csv(f, index=False)
        written.append(f)
        q_r = np.percentile(rv, [25, 50, 75])
        q_s = np.percentile(sv, [25, 50, 75])
        qrows.append([col, *q_r, *q_s])

    qdf = pd.DataFrame(qrows, columns=["column", "real_q1", "real_median", "real_q3",
                                       "synthetic_q1", "synthetic_median", "synthetic_q3"])
    f = out / "quartiles.csv"
    qdf.to_csv(f, index=False)
    written.append(f)

    for i, a in enumerate(columns):
        for b in columns[i + 1:]:
            parts = []
            for name, df in (("real", real), ("synthetic", synth)):
                sub = df[[a, b]].dropna()
                if len(sub) > scatter_cap:
                    take = rng.choice(len(sub), size=scatter_cap, replace=False)
                    take.sort()
                    sub = sub.iloc[take]
                parts.append(pd.DataFrame({"source": name,
                                           a: sub[a].to_numpy(),
                                           b: sub[b].to_numpy()}))
            f = out / f"scatter_{a}_{b}.csv"
            pd.concat(parts, ignore_index=True).to_csv(f, index=False)
            written.append(f)
    return written


# population CSV column -> canonical metric column
_POP_TO_CANONICAL = {"Age": "age", "SexLabel": "sex", "Height": "height", "Weight": "weight"}


def canonical_person_frame(population_df) -> pd.DataFrame:
    """Project a 44-column population table onto the metric columns."""
    missing = [c for c in _POP_TO_CANONICAL if c not in population_df.columns]
    if missing:
        raise InputDataError(f"population table missing columns {missing}")
    return population_df[list(_POP_TO_CANONICAL)].rename(columns=_POP_TO_CANONICAL)


def evaluate_population(population_df, microdata_persons, numeric_columns=("age", "height", "weight"),
                        categorical_columns=("sex",), efficacy_targets=("weight", "height"),
                        efficacy_models=("linear", "mlp"), train_fraction=0.7,
                        synth_train_size=None, mlp_params=None, seed=0) -> EvalReport:
    """Full metric sweep of a synthetic population against its source microdata.

    Both inputs are canonical person frames (age/sex/height/weight). The
    real frame is split once into train/test for the efficacy comparison;
    the synthetic training set is a seeded subsample matched in size to the
    real training set unless synth_train_size says otherwise.
    """
    rng = derive_rng(seed, "evaluate")
    report = EvalReport()
    report.sample_sizes["real"] = len(microdata_persons)
    report.sample_sizes["synthetic"] = len(population_df)

    for col in numeric_columns:
        report.ks_scores[col] = ks_score(microdata_persons[col], population_df[col])
    for col in categorical_columns:
        report.cs_pvalues[col] = chi_square_pvalue(microdata_persons[col], population_df[col])

    real_full = microdata_persons.dropna(subset=["height", "weight"]).reset_index(drop=True)
    order = rng.permutation(len(real_full))
    n_train = int(len(real_full) * train_fraction)
    real_train = real_full.iloc[order[:n_train]].reset_index(drop=True)
    real_test = real_full.iloc[order[n_train:]].reset_index(drop=True)

    synth_full = population_df.dropna(subset=["height", "weight"]).reset_index(drop=True)
    want = synth_train_size or min(len(synth_full), len(real_train))
    take = rng.choice(len(synth_full), size=min(want, len(synth_full)), replace=False)
    synth_train = synth_full.iloc[np.sort(take)].reset_index(drop=True)
    report.sample_sizes["real_train"] = len(real_train)
    report.sample_sizes["real_test"] = len(real_test)
    report.sample_sizes["synth_train"] = len(synth_train)

    for target in efficacy_targets:
        for model in efficacy_models:
            report.ml_efficacy[(target, model)] = ml_efficacy(
                real_train, real_test, synth_train, target,
                model=model, mlp_params=mlp_params, seed=seed)
    return report
