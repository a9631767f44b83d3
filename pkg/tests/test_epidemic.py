import dataclasses

import numpy as np
import pandas as pd
import pytest

from popforge.base import derive_rng
from popforge.epidemic import (AgentPopulation, EpiConfig, SimState, apply_lockdown,
                               build_agents, build_schedules, run_ensemble,
                               run_single, step)


def mini_population():
    """Three agents: a worker, a homebound toddler, a student."""
    return pd.DataFrame({
        "Age": [40, 2, 10],
        "HHID": [11, 11, 12],
        "WorkPlaceID": [900, 0, 0],
        "school_id": [0, 0, 800],
        "public_place_id": [700, 700, 701],
        "essential_worker": [0, 0, 0],
        "Adherence_to_Intervention": [1.0, 1.0, 1.0],
    })


def test_build_schedules_day_night():
    agents = build_agents(mini_population())
    config = EpiConfig(tick_hours=12)
    slots = build_schedules(agents, config)
    assert slots.shape == (3, 2)
    worker, toddler, student = slots
    assert worker[0] != agents.home[0] and worker[1] == agents.home[0]   # [work, home]
    assert toddler[0] == agents.home[1] and toddler[1] == agents.home[1]  # [home, home]
    assert student[0] != agents.home[2] and student[1] == agents.home[2]  # [school, home]


def test_public_tick_flag():
    agents = build_agents(mini_population())
    slots = build_schedules(agents, EpiConfig(tick_hours=6, include_public_tick=True))
    assert slots.shape == (3, 4)
    assert slots[0, 1] == agents.public[0]     # last daytime slot moved to public


def isolated_agents(n, age=30):
    return AgentPopulation(n=n, ages=np.full(n, age), home=np.arange(n),
                           day=np.arange(n), public=np.arange(n),
                           essential=np.zeros(n, dtype=bool),
                           adherence=np.zeros(n), n_locations=n)


def test_zero_beta_is_absorbing():
    config = EpiConfig(beta_child=0, beta_adult=0, beta_elderly=0,
                       initial_infected=50, max_days=60, n_runs=1, rng_seed=4)
    out = run_ensemble(isolated_agents(500), config)
    run = out.runs[0]
    assert run["I"].iloc[-1] == 0
    assert (run[["S", "I", "R"]].sum(axis=1) == 500).all()
    assert run["S"].iloc[-1] == 450            # no one was ever infected


def test_no_initial_infected_is_fixed_point():
    config = EpiConfig(beta_child=0, beta_adult=0, beta_elderly=0,
                       initial_infected=0, max_days=10, n_runs=1)
    config = dataclasses.replace(config, initial_infected=0)
    agents = isolated_agents(100)
    out = run_ensemble(agents, config)
    run = out.runs[0]
    assert (run["S"] == 100).all() and (run["I"] == 0).all()


def test_per_tick_infection_probability():
    # 400k two-person locations, one infected + one susceptible each; a single
    # synchronous tick matches 1 - exp(-beta * I/N) with I/N = 1/2
    m = 400_000
    agents = AgentPopulation(
        n=2 * m, ages=np.full(2 * m, 30), home=np.repeat(np.arange(m), 2),
        day=np.repeat(np.arange(m), 2), public=np.repeat(np.arange(m), 2),
        essential=np.zeros(2 * m, dtype=bool), adherence=np.zeros(2 * m),
        n_locations=m)
    config = EpiConfig(tick_hours=12)
    beta = config.beta_for_ages(agents.ages)
    schedule = build_schedules(agents, config)
    comp = np.zeros(2 * m, dtype=np.int8)
    comp[::2] = 1
    state = SimState(compartment=comp)
    step(state, agents, schedule, config, beta, derive_rng(5, "mc-infection"))
    p_emp = (state.compartment[1::2] != 0).mean()
    p_theory = 1.0 - np.exp(-config.beta_adult * 0.5)
    assert abs(p_emp - p_theory) / p_theory < 0.01


def test_recovery_hazard_small_scale():
    agents = isolated_agents(10_000)
    config = EpiConfig(beta_adult=0, beta_child=0, beta_elderly=0, tick_hours=1,
                       recovery_mean_days=7.0, max_days=120)
    beta = config.beta_for_ages(agents.ages)
    schedule = build_schedules(agents, config)
    rng = derive_rng(6, "recovery-small")
    state = SimState(compartment=np.ones(agents.n, dtype=np.int8))
    ticks = np.zeros(agents.n, dtype=np.int64)
    t = 0
    while (state.compartment == 1).any() and t < 120 * 24:
        before = state.compartment == 1
        step(state, agents, schedule, config, beta, rng)
        t += 1
        ticks[before & (state.compartment == 2)] = t
    mean_days = ticks.mean() / 24.0
    assert abs(mean_days - 7.0) / 7.0 < 0.05


def test_lockdown_coin_fraction():
    n = 100_000
    agents = AgentPopulation(n=n, ages=np.full(n, 30), home=np.arange(n),
                             day=np.arange(n), public=np.arange(n),
                             essential=np.zeros(n, dtype=bool),
                             adherence=np.full(n, 0.5), n_locations=n)
    state = SimState(compartment=np.zeros(n, dtype=np.int8))
    apply_lockdown(state, agents, derive_rng(7, "coins"))
    assert abs(state.stay_home.mean() - 0.5) < 0.01


def test_lockdown_adherence_extremes_and_essential():
    n = 1000
    agents = AgentPopulation(n=n, ages=np.full(n, 30), home=np.arange(n),
                             day=np.arange(n) + n, public=np.arange(n),
                             essential=np.zeros(n, dtype=bool),
                             adherence=np.ones(n), n_locations=2 * n)
    state = SimState(compartment=np.zeros(n, dtype=np.int8))
    apply_lockdown(state, agents, derive_rng(8, "all-home"))
    assert state.stay_home.all()               # adherence 1.0: everyone home

    agents.adherence = np.zeros(n)
    state2 = SimState(compartment=np.zeros(n, dtype=np.int8))
    apply_lockdown(state2, agents, derive_rng(9, "none-home"))
    assert not state2.stay_home.any()          # adherence 0.0: schedules unchanged

    agents.adherence = np.ones(n)
    agents.essential = np.ones(n, dtype=bool)
    state3 = SimState(compartment=np.zeros(n, dtype=np.int8))
    apply_lockdown(state3, agents, derive_rng(10, "essential"))
    assert not state3.stay_home.any()          # essential workers keep schedules


def test_lockdown_latched(pop_10k):
    config = EpiConfig(lockdown_threshold=0.01, n_runs=1, max_days=120, rng_seed=3)
    out = run_ensemble(str(pop_10k.population_path), config)
    flag = out.runs[0]["lockdown_active"].to_numpy()
    first = int(np.argmax(flag == 1))
    assert flag[first:].all()                  # never lifts once fired


def test_ensemble_single_run_mean_identity():
    agents = isolated_agents(200)
    config = EpiConfig(initial_infected=5, max_days=30, n_runs=1, rng_seed=11)
    out = run_ensemble(agents, config)
    assert np.array_equal(out.mean.to_numpy(dtype=float),
                          out.runs[0].to_numpy(dtype=float))


def test_different_seeds_different_trajectories(pop_10k):
    config = EpiConfig(n_runs=1, max_days=40, rng_seed=1)
    a = run_ensemble(str(pop_10k.population_path), config)
    b = run_ensemble(str(pop_10k.population_path),
                     dataclasses.replace(config, rng_seed=2))
    assert not a.runs[0].equals(b.runs[0])


def test_determinism_bit_identical(pop_10k):
    config = EpiConfig(n_runs=3, max_days=40, rng_seed=9, lockdown_threshold=0.02)
    a = run_ensemble(str(pop_10k.population_path), config)
    b = run_ensemble(str(pop_10k.population_path), config)
    for ra, rb in zip(a.runs, b.runs):
        assert ra.equals(rb)


def test_conservation_and_monotone_recovered(pop_10k):
    config = EpiConfig(n_runs=3, max_days=60, rng_seed=5)
    out = run_ensemble(str(pop_10k.population_path), config)
    n = out.runs[0][["S", "I", "R"]].iloc[0].sum()
    for run in out.runs:
        assert (run[["S", "I", "R"]].sum(axis=1) == n).all()
        assert (run["cum_recovered"].diff().dropna() >= 0).all()


def test_sim_output_files(tmp_path, pop_10k):
    config = EpiConfig(n_runs=2, max_days=10, rng_seed=0)
    out = run_ensemble(str(pop_10k.population_path), config)
    paths = out.write(tmp_path / "sim")
    assert len(paths) == 3                      # 2 runs + ensemble mean
    df = pd.read_csv(paths[0])
    assert list(df.columns) == ["tick", "S", "I", "R", "cum_recovered", "lockdown_active"]


def test_config_validation():
    with pytest.raises(ValueError, match="divide 24"):
        EpiConfig(tick_hours=7)
    with pytest.raises(ValueError, match="lockdown_threshold"):
        EpiConfig(lockdown_threshold=1.5)
    with pytest.raises(ValueError, match="beta_adult"):
        EpiConfig(beta_adult=-0.1)
