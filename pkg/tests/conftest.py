import re
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

_LINES = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[_LINES] = {}


class Criterion:
    def __init__(self, number: int, lines: dict):
        self.number = number
        self._lines = lines

    def record(self, passed: bool, detail: str) -> bool:
        line = f"criterion {self.number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
        self._lines[self.number] = line
        print(line)
        return passed


@pytest.fixture
def criterion(request):
    m = re.match(r"test_criterion_(\d+)", request.node.name)
    number = int(m.group(1))
    lines = request.config.stash[_LINES]
    yield Criterion(number, lines)
    if number not in lines:
        lines[number] = f"criterion {number:2d}: FAIL  raised before a verdict was recorded"


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_LINES, {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for k in sorted(lines):
            terminalreporter.write_line(lines[k])
