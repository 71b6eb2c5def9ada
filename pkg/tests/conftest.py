import numpy as np
import pytest

from obsfmm import covmodel
from obsfmm.boxtree import build_tree
from obsfmm.harness import GridSpec, generate_grid

SMALL_GRID = GridSpec(lat_count=24, lon_count=24)


@pytest.fixture(scope="session")
def small_obs():
    return generate_grid(SMALL_GRID)


@pytest.fixture(scope="session")
def small_tree(small_obs):
    return build_tree(small_obs, 3)


@pytest.fixture(scope="session")
def soar_model(small_obs):
    corr = covmodel.CorrelationFunction("soar", 80.0)
    return covmodel.build_covariance(covmodel.build_correlation(corr, small_obs), 1.0, corr)


@pytest.fixture(scope="session")
def soar_inverse(soar_model):
    return covmodel.inverse_weighting(soar_model)


@pytest.fixture(scope="session")
def scattered():
    """Irregular points with a generic singular spectrum (no grid symmetry)."""
    from obsfmm.boxtree import ObservationSet

    rng = np.random.default_rng(42)
    obs = ObservationSet(rng.uniform(54, 60, 400), rng.uniform(-6, 6, 400))
    corr = covmodel.CorrelationFunction("soar", 80.0)
    model = covmodel.build_covariance(covmodel.build_correlation(corr, obs), 1.0, corr)
    model = covmodel.recondition_rr(model, 1000.0)
    return obs, build_tree(obs, 3), covmodel.inverse_weighting(model)


_VERDICTS = {}


@pytest.fixture(scope="session")
def verdict():
    """Record one acceptance line: ``verdict(key, ok, detail)``."""
    def record(key, ok, detail=""):
        _VERDICTS[key] = (bool(ok), detail)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    order = sorted(_VERDICTS, key=lambda k: (int(k.rstrip("abcd")), k))
    for key in order:
        ok, detail = _VERDICTS[key]
        terminalreporter.write_line(f"criterion {key}: {'PASS' if ok else 'FAIL'}  {detail}")
