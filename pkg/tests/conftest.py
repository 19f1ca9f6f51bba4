import sys
from pathlib import Path

import pytest

from rydsim.ryx import parse_file

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"
sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture
def two_atom_doc():
    return parse_file(CONFIGS / "two_atom.ryx")


@pytest.fixture
def phase_doc():
    return parse_file(CONFIGS / "phase.ryx")


@pytest.fixture
def spectroscopy_doc():
    return parse_file(CONFIGS / "spectroscopy.ryx")


@pytest.fixture
def configs_dir():
    return CONFIGS


def pytest_terminal_summary(terminalreporter):
    import acceptance_log

    if not acceptance_log.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(acceptance_log.RESULTS):
        terminalreporter.write_line(acceptance_log.line(number))
