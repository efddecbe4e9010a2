import pytest

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def record_criterion():
    """Call ``record(name)`` inside an acceptance test; the verdict is printed at the end."""
    names = []

    def record(name):
        names.append(name)

    yield record
    # only reached when the test body returned without raising
    for name in names:
        ACCEPTANCE_LINES.append(f"PASS  {name}")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker and report.when == "call" and report.failed:
        ACCEPTANCE_LINES.append(f"FAIL  {marker.args[0]}")


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(name): acceptance criterion covered by this test")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
