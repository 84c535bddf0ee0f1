import sys
from pathlib import Path

import pytest
from hypothesis import settings

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("suite", deadline=None, max_examples=50)
settings.load_profile("suite")


@pytest.fixture()
def cfg():
    from longtake.config import PipelineConfig

    return PipelineConfig()


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    from acceptance_report import LINES

    if LINES:
        terminalreporter.section("acceptance criteria")
        for line in LINES:
            terminalreporter.write_line(line)
