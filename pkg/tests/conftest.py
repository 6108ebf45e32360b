import json
from importlib import resources
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from gmprog.frontend import compile_source

settings.register_profile("default", deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

BENCH_DIR = Path(str(resources.files("gmprog") / "benchmarks"))
CORPUS = sorted(p.stem for p in BENCH_DIR.glob("*.prob"))
DISCRETE = ["twocoins", "grass", "murdermistery", "burglar", "noisyor"]


def bench_source(name: str) -> str:
    return (BENCH_DIR / f"{name}.prob").read_text()


def bench_sidecar(name: str) -> dict:
    return json.loads((BENCH_DIR / f"{name}.json").read_text())


def bench_cfg(name: str):
    side = bench_sidecar(name)
    return compile_source(bench_source(name), side.get("define"))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_spd(rng, d, scale=1.0):
    a = rng.normal(size=(d, d))
    return scale * (a @ a.T + 0.3 * np.eye(d))


# one summary line per acceptance criterion, printed even under output capture
ACCEPTANCE: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[key])
