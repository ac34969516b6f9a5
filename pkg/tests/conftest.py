import pytest

from franson.experiment import ExperimentConfig

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def small_cfg(tmp_path):
    return ExperimentConfig(n_pairs=20_000, output_dir=str(tmp_path / "out"))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
