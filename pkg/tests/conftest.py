import sys
import warnings
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from driftfem.assembly import MeshPecletWarning  # noqa: E402
from driftfem.mesh import build_structured_mesh  # noqa: E402


@pytest.fixture(autouse=True)
def _quiet_peclet():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", MeshPecletWarning)
        yield


@pytest.fixture(scope="session")
def mesh8():
    return build_structured_mesh(8, 8)


@pytest.fixture(scope="session")
def mesh16():
    return build_structured_mesh(16, 16)


@pytest.fixture(scope="session")
def mesh32():
    return build_structured_mesh(32, 32)


_ACCEPTANCE_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE_KEY] = []


@pytest.fixture
def acceptance(request):
    """Record one pass/fail line per acceptance criterion; lines are echoed in the terminal summary."""
    lines = request.config.stash[_ACCEPTANCE_KEY]

    def record(number, title, ok, detail=""):
        line = f"criterion {number:>2} [{'PASS' if ok else 'FAIL'}] {title}" + (f" -- {detail}" if detail else "")
        lines.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
