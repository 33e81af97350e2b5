import numpy as np
import pytest

_LINES: list[str] = []


class Report:
    """Collects one pass/fail line per acceptance criterion."""

    def line(self, label: str, value, tolerance, passed: bool, note: str = "") -> bool:
        tag = "PASS" if passed else "FAIL"
        text = f"[{tag}] {label}: value={_fmt(value)} tolerance={_fmt(tolerance)}"
        if note:
            text += f" ({note})"
        _LINES.append(text)
        print(text)
        return passed


def _fmt(x):
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.4g}"
    return str(x)


@pytest.fixture
def report():
    return Report()


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in _LINES:
            terminalreporter.write_line(line)
