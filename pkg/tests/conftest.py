from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, max_examples=60,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def is_solid_box(data: np.ndarray) -> bool:
    """True when the occupied cells form one filled axis-aligned block."""
    idx = np.argwhere(data)
    if not len(idx):
        return False
    lo, hi = idx.min(axis=0), idx.max(axis=0) + 1
    return int(data.sum()) == int(np.prod(hi - lo))


_VERDICTS = []


@pytest.fixture
def verdict():
    """Print and remember one PASS/FAIL line for an acceptance criterion."""
    def record(label: str, ok: bool, detail: str = "") -> bool:
        line = f"[{'PASS' if ok else 'FAIL'}] {label}" + (f": {detail}" if detail else "")
        print(line)
        _VERDICTS.append(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance")
        for line in _VERDICTS:
            terminalreporter.write_line(line)
