import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from qdswap.config import bundled_config_path, load_config  # noqa: E402

# pass/fail lines collected by the acceptance suite
ACCEPTANCE: dict[int, str] = {}


@pytest.fixture(scope="session")
def cal_cfg():
    return load_config(bundled_config_path("calibrated.toml"))


@pytest.fixture(scope="session")
def cal_x_cfg():
    return load_config(bundled_config_path("calibrated-swap-x.toml"))


@pytest.fixture(scope="session")
def cal_scenario(cal_cfg):
    return cal_cfg.swap_scenario()


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
