import pytest

from riskscope.pipeline import Pipeline, PipelineConfig
from riskscope.synth import write_fixture

FIXTURE_SEED = 7


def pytest_terminal_summary(terminalreporter):
    """Echo the acceptance pass/fail lines after capture ends."""
    import sys

    lines: list[str] = []
    for name, module in sys.modules.items():
        if name.rpartition(".")[2] == "test_acceptance":
            lines.extend(getattr(module, "PASS_LINES", []))
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def fixture_dir(tmp_path_factory):
    """Bundled 20-call synthetic fixture: corpus + market inputs + config."""
    directory = tmp_path_factory.mktemp("fixture")
    write_fixture(directory, seed=FIXTURE_SEED)
    return directory


@pytest.fixture(scope="session")
def pipeline_run(fixture_dir):
    """One full `run all` against the fixture, shared across tests."""
    config = PipelineConfig.from_file(fixture_dir / "config.json")
    pipe = Pipeline(config)
    reports = pipe.run("all")
    return fixture_dir, pipe, reports
