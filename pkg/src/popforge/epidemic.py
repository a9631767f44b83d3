"""Agent-based SIR simulation over a generated population.

Agents alternate between home and their day location (workplace for
workers, school for students, home for the homebound) on a fixed tick
grid. Transmission is location-mediated: a susceptible agent at location L
is infected this tick with probability 1 - exp(-beta_age * I_L / N_L),
where the occupancy tallies are frozen at the start of the tick
(synchronous update). Infected agents recover with the per-tick hazard of
an exponential recovery time.

A lockdown, once the active-infected fraction reaches the configured
threshold, is latched permanently: every agent resolves one adherence coin
at onset, and adherent non-essential agents stay home for all subsequent
ticks. Essential workers and non-adherent agents keep their schedules.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .base import derive_rng
from .data_io import load_population

S, I, R = 0, 1, 2

SERIES_COLUMNS = ["tick", "S", "I", "R", "cum_recovered", "lockdown_active"]


@dataclass
class EpiConfig:
    beta_child: float = 0.15
    beta_adult: float = 0.22
    beta_elderly: float = 0.18
    child_age_max: int = 17
    elderly_age_min: int = 65
    recovery_mean_days: float = 7.0
    tick_hours: int = 12
    initial_infected: int = 20
    initial_infected_fraction: float | None = None
    lockdown_threshold: float | None = None
    n_runs: int = 20
    max_days: int = 180
    include_public_tick: bool = False
    rng_seed: int = 0

    def __post_init__(self):
        for name in ("beta_child", "beta_adult", "beta_elderly"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.recovery_mean_days <= 0:
            raise ValueError("recovery_mean_days must be > 0")
        if 24 % self.tick_hours != 0:
            raise ValueError(f"tick_hours must divide 24, got {self.tick_hours}")
        if self.lockdown_threshold is not None and not 0 < self.lockdown_threshold < 1:
            raise ValueError("lockdown_threshold must lie in (0, 1)")

    @property
    def ticks_per_day(self) -> int:
        return 24 // self.tick_hours

    @property
    def recovery_prob_per_tick(self) -> float:
        return float(-np.expm1(-self.tick_hours / (24.0 * self.recovery_mean_days)))

    def beta_for_ages(self, ages) -> np.ndarray:
        beta = np.full(len(ages), self.beta_adult)
        beta[ages <= self.child_age_max] = self.beta_child
        beta[ages >= self.elderly_age_min] = self.beta_elderly
        return beta


_SIM_COLUMNS = ["Age", "HHID", "WorkPlaceID", "school_id", "public_place_id",
                "essential_worker", "Adherence_to_Intervention"]


@dataclass
class AgentPopulation:
    """Population projected to the arrays the simulator needs.

    Location references are contiguous codes over the union of homes,
    day locations and public places.
    """

    n: int
    ages: np.ndarray
    home: np.ndarray           # location code per agent
    day: np.ndarray            # workplace/school code, or home code
    public: np.ndarray         # public place code, or home code when absent
    essential: np.ndarray      # bool
    adherence: np.ndarray      # float in [0, 1]
    n_locations: int


def build_agents(population) -> AgentPopulation:
    """Build simulation arrays from a population table (or its CSV path)."""
    if isinstance(population, (str, bytes)) or hasattr(population, "__fspath__"):
        population = load_population(population, columns=_SIM_COLUMNS)
    df = population
    n = len(df)
    hh = df["HHID"].to_numpy()
    home_codes, _ = pd.factorize(hh)
    n_home = home_codes.max() + 1

    work = df["WorkPlaceID"].to_numpy()
    school = df["school_id"].to_numpy()
    day_raw = np.where(work != 0, work, school)
    ext_codes, _ = pd.factorize(day_raw[day_raw != 0])
    day = home_codes.copy()
    n_ext = int(ext_codes.max() + 1) if len(ext_codes) else 0
    day[day_raw != 0] = n_home + ext_codes

    pub_raw = df["public_place_id"].to_numpy()
    pub_codes, _ = pd.factorize(pub_raw[pub_raw != 0])
    public = home_codes.copy()
    n_pub = int(pub_codes.max() + 1) if len(pub_codes) else 0
    public[pub_raw != 0] = n_home + n_ext + pub_codes

    return AgentPopulation(
        n=n,
        ages=df["Age"].to_numpy(),
        home=home_codes.astype(np.int64),
        day=day.astype(np.int64),
        public=public.astype(np.int64),
        essential=df["essential_worker"].to_numpy().astype(bool),
        adherence=df["Adherence_to_Intervention"].to_numpy(dtype=float),
        n_locations=int(n_home + n_ext + n_pub),
    )


def build_schedules(agents: AgentPopulation, config: EpiConfig) -> np.ndarray:
    """Location code per (agent, tick-of-day) slot.

    First half of the day's ticks at the day location, second half at home;
    with include_public_tick the last daytime slot moves to the public
    place. The homebound sit at home in every slot by construction (their
    day location is home).
    """
    tpd = config.ticks_per_day
    slots = np.empty((agents.n, tpd), dtype=np.int64)
    day_slots = tpd // 2
    for t in range(tpd):
        if t < day_slots:
            slots[:, t] = agents.day
        else:
            slots[:, t] = agents.home
    if config.include_public_tick and day_slots >= 1:
        slots[:, day_slots - 1] = agents.public
    return slots


@dataclass
class SimState:
    compartment: np.ndarray
    tick: int = 0
    lockdown_active: bool = False
    stay_home: np.ndarray | None = None
    records: list = field(default_factory=list)


def apply_lockdown(state: SimState, agents: AgentPopulation, rng) -> SimState:
    """Latch the lockdown: resolve each agent's adherence coin once.

    An agent stays home for all remaining ticks iff a single uniform draw
    falls below its adherence value and it is not an essential worker.
    """
    coins = rng.random(agents.n) < agents.adherence
    state.stay_home = coins & ~agents.essential
    state.lockdown_active = True
    return state


def step(state: SimState, agents: AgentPopulation, schedule: np.ndarray,
         config: EpiConfig, beta: np.ndarray, rng) -> SimState:
    """One synchronous tick: infections and recoveries from frozen tallies."""
    loc = schedule[:, state.tick % config.ticks_per_day]
    if state.lockdown_active and state.stay_home is not None:
        loc = np.where(state.stay_home, agents.home, loc)

    comp = state.compartment
    infected = comp == I
    n_loc = np.bincount(loc, minlength=agents.n_locations)
    i_loc = np.bincount(loc[infected], minlength=agents.n_locations)
    with np.errstate(invalid="ignore"):
        frac = np.where(n_loc > 0, i_loc / np.maximum(n_loc, 1), 0.0)

    at_risk = (comp == S) & (frac[loc] > 0)
    new_infected = np.zeros(agents.n, dtype=bool)
    k = int(at_risk.sum())
    if k:
        p = -np.expm1(-beta[at_risk] * frac[loc[at_risk]])
        new_infected[at_risk] = rng.random(k) < p

    recovering = np.zeros(agents.n, dtype=bool)
    m = int(infected.sum())
    if m:
        recovering[infected] = rng.random(m) < config.recovery_prob_per_tick

    comp[new_infected] = I
    comp[recovering] = R
    state.tick += 1
    return state


def run_single(agents: AgentPopulation, config: EpiConfig, rng) -> pd.DataFrame:
    """One full replicate; returns the per-tick time series."""
    beta = config.beta_for_ages(agents.ages)
    schedule = build_schedules(agents, config)

    n_seed = config.initial_infected
    if config.initial_infected_fraction is not None:
        n_seed = max(1, int(round(config.initial_infected_fraction * agents.n)))
    n_seed = min(n_seed, agents.n)
    comp = np.zeros(agents.n, dtype=np.int8)
    comp[rng.choice(agents.n, size=n_seed, replace=False)] = I
    state = SimState(compartment=comp)

    total_ticks = config.max_days * config.ticks_per_day
    rows = np.empty((total_ticks, 6), dtype=np.int64)
    for t in range(total_ticks):
        n_i = int((state.compartment == I).sum())
        if (config.lockdown_threshold is not None and not state.lockdown_active
                and n_i / agents.n >= config.lockdown_threshold):
            apply_lockdown(state, agents, rng)
        step(state, agents, schedule, config, beta, rng)
        n_s = int((state.compartment == S).sum())
        n_i = int((state.compartment == I).sum())
        n_r = agents.n - n_s - n_i
        rows[t] = (t + 1, n_s, n_i, n_r, n_r, int(state.lockdown_active))
    return pd.DataFrame(rows, columns=SERIES_COLUMNS)


@dataclass
class SimOutput:
    runs: list                  # per-run DataFrames, equal length
    mean: pd.DataFrame          # ensemble mean per tick

    @property
    def peak_active_mean(self) -> float:
        return float(self.mean["I"].max())

    def write(self, out_dir):
        from pathlib import Path
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = []
        for k, run in enumerate(self.runs, start=1):
            p = out / f"run_{k:02d}.csv"
            run.to_csv(p, index=False)
            paths.append(p)
        p = out / "ensemble_mean.csv"
        self.mean.to_csv(p, index=False)
        paths.append(p)
        return paths


def run_ensemble(population, config: EpiConfig) -> SimOutput:
    """n_runs independent replicates with seeds derived from the master seed."""
    agents = population if isinstance(population, AgentPopulation) else build_agents(population)
    runs = []
    for k in range(config.n_runs):
        rng = derive_rng(config.rng_seed, "epi-run", k)
        runs.append(run_single(agents, config, rng))
    stacked = np.stack([r.to_numpy(dtype=float) for r in runs])
    mean = pd.DataFrame(stacked.mean(axis=0), columns=SERIES_COLUMNS)
    return SimOutput(runs=runs, mean=mean)
