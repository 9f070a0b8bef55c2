import warnings

import numpy as np
import pytest

from stochrb.config import quick_config
from stochrb.experiments import cmd_offline
from stochrb.fem import assemble_operators, build_mesh
from stochrb.random_field import build_kl_2d


@pytest.fixture(scope="session")
def kl5():
    return build_kl_2d(1.0, 5)


@pytest.fixture(scope="session")
def ops8(kl5):
    return assemble_operators(build_mesh(8), kl5, -1000.0, 200.0)


@pytest.fixture(scope="session")
def ops16(kl5):
    return assemble_operators(build_mesh(16), kl5, -1000.0, 200.0)


@pytest.fixture(scope="session")
def quick_artifact_path(tmp_path_factory):
    path = tmp_path_factory.mktemp("art") / "quick.npz"
    cmd_offline(quick_config(), path)
    return path


@pytest.fixture()
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(autouse=True)
def _quiet_rank_warnings():
    with warnings.catch_warnings():
        warnings.filterwarnings("ignore", message="POD .*numerical rank", category=RuntimeWarning)
        yield


ACCEPTANCE_KEY = pytest.StashKey[list]()


@pytest.fixture(scope="session")
def acceptance_report(request):
    lines = request.config.stash.setdefault(ACCEPTANCE_KEY, [])

    def record(number, passed, detail):
        line = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
        lines.append(line)
        print(line)

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
