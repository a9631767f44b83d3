import time

import pytest

from popforge.config import load_validated
from popforge.data_io import load_marginals, load_microdata
from popforge.fixtures import build_fixture_inputs
from popforge.pipeline import generate


@pytest.fixture(scope="session")
def fixture_paths(tmp_path_factory):
    d = tmp_path_factory.mktemp("inputs")
    return build_fixture_inputs(d)


@pytest.fixture(scope="session")
def gen_config(fixture_paths):
    return load_validated(str(fixture_paths["generate_config.json"]), "generate")


@pytest.fixture(scope="session")
def microsample(fixture_paths):
    return load_microdata(fixture_paths["individuals.csv"], fixture_paths["households.csv"])


@pytest.fixture(scope="session")
def marginals(fixture_paths):
    return load_marginals(fixture_paths["marginals.csv"], "samplepur")


@pytest.fixture(scope="session")
def pop_100k(gen_config, tmp_path_factory):
    """The shipped fixture config run as-is (100k persons); returns (result, wall seconds)."""
    out = tmp_path_factory.mktemp("pop100k")
    t0 = time.perf_counter()
    result = generate(gen_config, out, threads=1)
    return result, time.perf_counter() - t0


@pytest.fixture(scope="session")
def pop_10k(gen_config, tmp_path_factory):
    out = tmp_path_factory.mktemp("pop10k")
    cfg = dict(gen_config)
    cfg["target_population"] = 10_000
    return generate(cfg, out, threads=1)
