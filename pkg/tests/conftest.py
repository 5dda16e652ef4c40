import pytest

from dvfs_energy import model


@pytest.fixture(scope="session")
def table():
    return model.default_table()


@pytest.fixture(scope="session")
def canonical(table):
    return model.canonical_model(table)


@pytest.fixture
def flat_model():
    # beta=1, cc_k=0, constant voltage, no leakage: energy independent of f.
    return model.EnergyModel(
        model.TimeModelParams(1.0, 0.0, 1.0),
        model.PowerModelParams(0.0, 0.0, 1.0),
        model.LinearVF(0.0, 1.0),
        (0.2, 1.6),
    )


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
