import random

import pytest

from ctxswitch import reference_circuit
from ctxswitch.randgen import random_circuit

_ACCEPTANCE: list[tuple[str, bool, str]] = []


@pytest.fixture
def ring3():
    return reference_circuit("ring3")


@pytest.fixture
def acceptance_log():
    def record(name: str, ok: bool, detail: str = "") -> None:
        line = f"[{'PASS' if ok else 'FAIL'}] {name}" + (f": {detail}" if detail else "")
        print(line)
        _ACCEPTANCE.append((name, ok, detail))

    return record


def corpus(n: int, seed: int, **kwargs):
    rng = random.Random(seed)
    return [random_circuit(rng, **kwargs) for _ in range(n)]


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in _ACCEPTANCE:
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {name}" + (f": {detail}" if detail else ""))
