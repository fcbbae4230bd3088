import pytest

from flitelite.columnar import DataType, Field, Schema, batch_from_arrays, build_array

# One line per acceptance criterion is printed after the run so the result
# of each numbered check is visible in plain pytest output. Tests opt in
# with @pytest.mark.criterion(n); the outcome is taken from the report so
# a crashed check still produces its FAIL line.
_CRITERIA = {}
_NOTES = {}


def pytest_configure(config):
    config.addinivalue_line(
        "markers", "criterion(number): record this test as numbered acceptance check"
    )


@pytest.fixture
def criterion_note():
    """Attach measured detail text to the criterion's summary line."""

    def note(number: int, text: str) -> None:
        _NOTES[number] = text

    return note


def _skip_reason(report) -> str:
    if isinstance(report.longrepr, tuple):
        reason = report.longrepr[2]
        if reason.startswith("Skipped: "):
            reason = reason[len("Skipped: "):]
        return reason
    return ""


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number = marker.args[0]
    if report.when == "setup" and report.skipped:
        _CRITERIA[number] = ("SKIP", _skip_reason(report))
    elif report.when == "call":
        if report.passed:
            _CRITERIA[number] = ("PASS", _NOTES.get(number, ""))
        elif report.skipped:
            _CRITERIA[number] = ("SKIP", _skip_reason(report) or _NOTES.get(number, ""))
        else:
            lines = report.longreprtext.strip().splitlines()
            tail = lines[-1][:200] if lines else ""
            detail = "; ".join(part for part in (_NOTES.get(number, ""), tail) if part)
            _CRITERIA[number] = ("FAIL", detail)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        status, detail = _CRITERIA[number]
        line = f"ACCEPTANCE CRITERION {number}: {status}"
        if detail:
            line += f" - {detail}"
        terminalreporter.write_line(line)


@pytest.fixture
def reference_schema():
    return Schema(
        [
            Field("X", DataType.INT32, nullable=True),
            Field("Y", DataType.UTF8),
            Field("Z", DataType.FLOAT64),
        ]
    )


@pytest.fixture
def reference_batch(reference_schema):
    fx, fy, fz = reference_schema.fields
    return batch_from_arrays(
        reference_schema,
        [
            build_array(fx, [555, 56565, None]),
            build_array(fy, ["Arrow", "Data", "!"]),
            build_array(fz, [5.7866, 0.0, 3.14]),
        ],
    )
