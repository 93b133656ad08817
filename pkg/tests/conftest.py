import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def disk_mask(radius: float, size: int | None = None, center=None) -> np.ndarray:
    size = size or int(2 * radius + 21)
    c = (size - 1) / 2 if center is None else center
    cx, cy = (c, c) if np.isscalar(c) else c
    yy, xx = np.mgrid[0:size, 0:size]
    return (xx - cx) ** 2 + (yy - cy) ** 2 <= radius ** 2


@pytest.fixture
def disk():
    return disk_mask


# acceptance results, printed after the run
CRITERIA: dict[int, str] = {}


def record(n: int, ok: bool, detail: str) -> bool:
    CRITERIA[n] = f"CRITERION {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    return ok


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for n in sorted(CRITERIA):
            terminalreporter.write_line(CRITERIA[n])
