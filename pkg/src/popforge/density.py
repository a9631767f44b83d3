"""Density-weighted geolocation sampling inside a region boundary.

Two-stage scheme: a grid cell is drawn with replacement proportionally to
its population count, then a point is placed uniformly inside that cell's
square and rejected if it falls outside the boundary polygon. Batches are
oversampled relative to the remaining deficit so the expected number of
rounds stays small, with an explicit acceptance-rate floor guarding
against degenerate grid/polygon pairs.
"""

from __future__ import annotations

import numpy as np

from .base import InputDataError, ParamMixin, check_is_fitted
from .data_io import GridDensity, RegionPolygon, points_in_polygon


class DensityPointSampler(ParamMixin):
    """Weighted cell draw + uniform in-cell noise + polygon rejection.

    Parameters
    ----------
    oversample_factor : float
        Each batch draws ceil(oversample_factor * deficit) candidates; must
        exceed 1 so rejection cannot stall.
    min_acceptance : float
        Error out if, after at least one full-size batch, the overall
        acceptance rate sits below this floor.

    Fit binds a grid and a polygon: cells whose centers lie inside the
    polygon are retained (boundary cells are handled by rejection alone,
    so partial overlap needs no area bookkeeping).
    """

    def __init__(self, oversample_factor=1.5, min_acceptance=1e-3):
        self.oversample_factor = oversample_factor
        self.min_acceptance = min_acceptance

    def fit(self, grid: GridDensity, polygon: RegionPolygon):
        if not self.oversample_factor > 1.0:
            raise ValueError(f"oversample_factor must be > 1, got {self.oversample_factor}")
        keep = points_in_polygon(grid.cells, polygon)
        if not keep.any():
            raise InputDataError("no grid cell centers fall inside the region polygon")
        weights = grid.z[keep]
        if weights.sum() <= 0:
            raise InputDataError("all grid cells inside the polygon have zero population")
        self.cells_ = grid.cells[keep]
        self.weights_ = weights
        self.cum_weights_ = np.cumsum(weights)
        self.cell_size_ = grid.cell_size
        self.polygon_ = polygon
        return self

    @property
    def n_cells_(self) -> int:
        check_is_fitted(self, "cells_")
        return len(self.cells_)

    def sample(self, n: int, rng, return_cell_indices=False, stats=None):
        """Return exactly n accepted (lat, lon) points (and optionally their cells).

        Pass a dict as ``stats`` to receive the candidate and pass counts
        ("drawn", "passed"), e.g. to measure the boundary acceptance rate.
        """
        check_is_fitted(self, "cells_")
        if n < 1:
            raise ValueError(f"n must be >= 1, got {n}")
        if not isinstance(rng, np.random.Generator):
            rng = np.random.default_rng(rng)

        half = self.cell_size_ / 2.0
        total = self.cum_weights_[-1]
        points = np.empty((n, 2))
        cells = np.empty(n, dtype=np.int64)
        accepted = 0
        passed = 0
        drawn = 0
        while accepted < n:
            deficit = n - accepted
            k = int(np.ceil(self.oversample_factor * deficit))
            u = rng.random(k) * total
            idx = np.searchsorted(self.cum_weights_, u, side="right")
            noise = rng.uniform(-half, half, size=(k, 2))
            cand = self.cells_[idx] + noise
            ok = points_in_polygon(cand, self.polygon_)
            take = min(int(ok.sum()), deficit)
            sel = np.nonzero(ok)[0][:take]
            points[accepted:accepted + take] = cand[sel]
            cells[accepted:accepted + take] = idx[sel]
            accepted += take
            passed += int(ok.sum())
            drawn += k
            if drawn >= max(10_000, 10 * n) and passed / drawn < self.min_acceptance:
                raise InputDataError(
                    f"acceptance rate {passed / drawn:.2e} below floor "
                    f"{self.min_acceptance:g}; grid and polygon barely overlap")
        if stats is not None:
            stats["drawn"] = drawn
            stats["passed"] = passed
        if return_cell_indices:
            return points, cells
        return points


def build_sampler(grid: GridDensity, polygon: RegionPolygon,
                  oversample_factor=1.5) -> DensityPointSampler:
    return DensityPointSampler(oversample_factor=oversample_factor).fit(grid, polygon)


def sample_points(sampler: DensityPointSampler, n: int, rng_seed):
    return sampler.sample(n, rng_seed)
