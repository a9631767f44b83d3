"""popforge: real-scale geolocated synthetic populations with household structure."""

__version__ = "0.1.0"

from .assign import DecayFunction, LocationAssigner, assign, assign_all, l2_distance
from .base import InputDataError, NotFittedError, derive_rng
from .data_io import (COMORBIDITY_COLUMNS, POPULATION_COLUMNS, GridDensity,
                      MarginalSet, MicroSample, RegionPolygon, load_admin_units,
                      load_grid_density, load_marginals, load_microdata,
                      load_population, load_region_polygon, point_in_polygon,
                      points_in_polygon, write_population)
from .density import DensityPointSampler, build_sampler, sample_points
from .epidemic import AgentPopulation, EpiConfig, SimOutput, build_agents, run_ensemble
from .fixtures import build_fixture_inputs
from .ipu import (HouseholdWeightFitter, IncidenceMatrix, WeightVector,
                  build_incidence, ipu_fit, sample_household_indices,
                  sample_households)
from .metrics import (EvalReport, chi_square_pvalue, evaluate_population,
                      export_plot_data, ks_score, ml_efficacy)
from .pipeline import (GenerationResult, PipelineError, attach_admin_units,
                       generate, generate_locations)
from .synth import (JobTable, StratifiedResampler, assign_job, assign_jobs,
                    build_job_table)

__all__ = [
    "AgentPopulation", "COMORBIDITY_COLUMNS", "DecayFunction",
    "DensityPointSampler", "EpiConfig", "EvalReport", "GenerationResult",
    "GridDensity", "HouseholdWeightFitter", "IncidenceMatrix", "InputDataError",
    "JobTable", "LocationAssigner", "MarginalSet", "MicroSample",
    "NotFittedError", "POPULATION_COLUMNS", "PipelineError", "RegionPolygon",
    "SimOutput", "StratifiedResampler", "WeightVector", "assign", "assign_all",
    "assign_job", "assign_jobs", "attach_admin_units", "build_agents",
    "build_fixture_inputs", "build_incidence", "build_job_table",
    "build_sampler", "chi_square_pvalue", "derive_rng", "evaluate_population",
    "export_plot_data", "generate", "generate_locations", "ipu_fit",
    "ks_score", "l2_distance", "load_admin_units", "load_grid_density",
    "load_marginals", "load_microdata", "load_population",
    "load_region_polygon", "ml_efficacy", "point_in_polygon",
    "points_in_polygon", "run_ensemble", "sample_household_indices",
    "sample_households", "sample_points", "write_population",
]
