import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

import discd.cli
import discd.protocol

# criterion number -> (passed, detail), filled in by test_acceptance
ACCEPTANCE: dict[int, tuple[bool, str]] = {}

_real_run = discd.protocol.run


def _checked_run(dataset, cfg):
    log = _real_run(dataset, cfg)
    problems = discd.protocol.check_log(log, dataset.node_assignment)
    assert not problems, problems[:5]
    return log


@pytest.fixture(autouse=True)
def _every_run_is_checked(monkeypatch):
    # conservation invariants hold on every protocol run made by any test
    monkeypatch.setattr(discd.protocol, "run", _checked_run)
    monkeypatch.setattr(discd.cli, "run", _checked_run)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
