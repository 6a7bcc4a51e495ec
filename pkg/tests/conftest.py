import os
from pathlib import Path

import pytest

from coopg2.cache import CACHE_ENV, Store

REPO = Path(__file__).resolve().parents[1]


def pytest_addoption(parser):
    parser.addoption("--run-slow", action="store_true", default=False,
                     help="run the hours-long robustness checks (also enabled by COOPG2_RUN_SLOW=1)")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--run-slow") or os.environ.get("COOPG2_RUN_SLOW") == "1":
        return
    skip = pytest.mark.skip(reason="slow; use --run-slow or COOPG2_RUN_SLOW=1")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


@pytest.fixture(scope="session")
def cache_dir() -> Path:
    """Persistent PT cache shared across test runs (process tensors take minutes to build)."""
    path = Path(os.environ.get(CACHE_ENV) or REPO / ".cache" / "coopg2")
    path.mkdir(parents=True, exist_ok=True)
    return path


@pytest.fixture(scope="session")
def store(cache_dir) -> Store:
    return Store(cache_dir)


@pytest.fixture(scope="session")
def fig2a():
    from coopg2.presets import preset

    return preset("fig2a")


@pytest.fixture(scope="session")
def spc_curve(fig2a, store):
    """Full-scale superohmic g2 with equal pump and decay lifetimes of 1.76 ns."""
    from coopg2.dynamics import g2_curve

    return g2_curve(fig2a.experiment("spc").scenario(fig2a.numerics), store)


@pytest.fixture(scope="session")
def ohmic_curve(fig2a, store):
    from coopg2.dynamics import g2_curve

    return g2_curve(fig2a.experiment("ohmic").scenario(fig2a.numerics), store)


ACCEPTANCE_LINES: list = []


@pytest.fixture
def report():
    """Record one pass/fail line per acceptance criterion and return the verdict."""

    def _report(number: int, ok: bool, detail: str) -> bool:
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return _report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
