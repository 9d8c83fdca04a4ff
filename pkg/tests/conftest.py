import pytest

from thinker.dataset import QAItem
from thinker.task import Stage


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One pass/fail line per acceptance criterion at the end of the run."""
    lines = []
    for status in ("passed", "failed", "error"):
        for report in terminalreporter.stats.get(status, []):
            if "test_acceptance" in getattr(report, "nodeid", ""):
                name = report.nodeid.split("::")[-1]
                lines.append((name, status.upper()))
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for name, status in sorted(lines):
        terminalreporter.write_line(f"{name}: {status}")


@pytest.fixture
def item():
    return QAItem(id="q1", question="Compute 3 + 4.", answer="7")


def fixture_map(item_id: str, fast: str, verify: str, slow: str = "\\boxed{7}",
                summary: str = "\\boxed{7}") -> dict:
    return {
        (Stage.FAST_THINKING, item_id): fast,
        (Stage.VERIFICATION, item_id): verify,
        (Stage.SLOW_THINKING, item_id): slow,
        (Stage.SUMMARIZATION, item_id): summary,
    }
