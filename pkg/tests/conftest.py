import numpy as np
import pytest

from oldroyd_splash.grid import build_reference_grid


def circle(n, r=1.0, c=(0.0, 0.0)):
    th = 2 * np.pi * np.arange(n) / n
    return np.column_stack([c[0] + r * np.cos(th), c[1] + r * np.sin(th)])


@pytest.fixture(scope="session")
def unit_grid():
    return build_reference_grid(circle(32), 32)


@pytest.fixture(scope="session")
def offset_grid():
    # lower half-plane disk, clear of the branch point
    return build_reference_grid(circle(32, 0.6, (1.5, -1.0)), 32)


# acceptance criteria report their verdicts here; printed once at the end
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: int(k[1:])):
        ok, title, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"{key:>3} {'PASS' if ok else 'FAIL'}  {title}: {detail}")
