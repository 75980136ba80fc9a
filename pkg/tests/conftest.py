import re

import numpy as np
import pytest

from streid import Dataset, Role


def make_dataset(rows, dim=3, camera_count=None, role=Role.GALLERY, seed=0):
    """rows: (person_id, camera, time) tuples; person_id -1 marks a distractor."""
    rng = np.random.default_rng(seed)
    pids = [r[0] for r in rows]
    return Dataset.from_arrays(
        rng.standard_normal((len(rows), dim)) + 0.1,
        cameras=[r[1] for r in rows],
        timestamps=[r[2] for r in rows],
        person_ids=pids,
        camera_count=camera_count,
        role=role,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_CRITERION = re.compile(r"test_c(\d+)_")


def pytest_terminal_summary(terminalreporter):
    lines = []
    for outcome in ("passed", "failed", "skipped", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            nodeid = getattr(rep, "nodeid", "")
            m = _CRITERION.search(nodeid)
            if "test_acceptance" not in nodeid or not m or rep.when not in ("call", "setup"):
                continue
            if outcome == "skipped" or rep.when == "call" or outcome in ("failed", "error"):
                lines.append((int(m.group(1)), outcome.upper(), nodeid.split("::")[-1]))
    if lines:
        terminalreporter.section("acceptance criteria")
        for n, outcome, name in sorted(set(lines)):
            verdict = {"PASSED": "PASS", "FAILED": "FAIL", "ERROR": "FAIL"}.get(outcome, outcome)
            terminalreporter.write_line(f"criterion {n:2d}: {verdict:7s} {name}")
