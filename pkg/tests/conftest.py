import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from pepaflow.netmodels import REGISTRY, architecture, instantiate  # noqa: E402
from pepaflow.parser import parse_model  # noqa: E402
from pepaflow.syntax import bind_parameters  # noqa: E402


@pytest.fixture(params=sorted(REGISTRY))
def arch_id(request):
    return request.param


def small_instance(arch_id, n=1, which="basic", **overrides):
    arch = architecture(arch_id)
    return instantiate(arch_id, arch.config(which, n, **overrides))


def concrete(text, **values):
    return bind_parameters(parse_model(text), values)


_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def acceptance(request):
    """Record one summary line per acceptance criterion."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, [])

    def record(number, ok, detail):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        lines.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
