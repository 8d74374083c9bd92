import math

import pytest

from mdiqkd import config, pipeline
from mdiqkd.forward import ScenarioConfig
from mdiqkd.model import DetectionConfig, LinkConfig, SourceConfig

ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def ideal_scenario(mu=(0.3, 0.04, 0.0), loss=(5.0, 5.0), overlap=1.0, dark=0.0, noise=0.0) -> ScenarioConfig:
    det = DetectionConfig(dark_rate=dark, noise_rate=noise, visibility=overlap)
    return ScenarioConfig(SourceConfig(mu=mu), SourceConfig(mu=mu), LinkConfig(*loss), det)


@pytest.fixture
def ideal():
    return ideal_scenario()


@pytest.fixture(scope="session")
def lab_config():
    return config.bundled("lab")


@pytest.fixture(scope="session")
def lab(lab_config):
    """Bundled lab fit with intensity-independent states, at 19.5 dB."""
    return pipeline.decoy_consistent(lab_config.scenario)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")


def close(a, b, rel=0.0, abs_=0.0):
    return math.isclose(a, b, rel_tol=rel, abs_tol=abs_)
