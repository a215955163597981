"""Shared pytest hooks: a one-line-per-criterion acceptance summary."""

import pytest


def pytest_terminal_summary(terminalreporter):
    lines = []
    for outcome in ("passed", "failed", "error"):
        for report in terminalreporter.stats.get(outcome, []):
            props = dict(getattr(report, "user_properties", ()))
            if "criterion" in props and (report.when == "call" or outcome == "error"):
                status = "PASS" if outcome == "passed" else "FAIL"
                lines.append((props["criterion"], f"{props['criterion']}: {status}  {props.get('detail', '')}".rstrip()))
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)


@pytest.fixture
def criterion(record_property):
    """Tag a test as an acceptance criterion; call with the id, then .detail(text) to annotate the summary line."""

    class Tag:
        def __call__(self, name):
            record_property("criterion", name)
            return self

        def detail(self, text):
            record_property("detail", text)

    return Tag()
