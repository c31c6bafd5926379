import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from mcpt.atomic import FieldVector
from mcpt.model import IonModel, paper_laser_settings

settings.register_profile(
    "mcpt",
    deadline=None,
    max_examples=30,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture],
)
settings.load_profile("mcpt")


@pytest.fixture(scope="session")
def paper_model():
    """Four-laser setup with the 493 nm laser off, lasers x-polarized."""
    return IonModel(paper_laser_settings())


@pytest.fixture(scope="session")
def paper_model_493():
    return IonModel(paper_laser_settings(with_493=True))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    from helpers import ACCEPTANCE

    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        parts = ACCEPTANCE[n]
        verdict = "PASS" if all(ok for _, ok, _ in parts) else "FAIL"
        detail = "; ".join(f"{p}: {'ok' if ok else 'FAILED'} ({d})" for p, ok, d in parts)
        terminalreporter.write_line(f"CRITERION {n:2d} {verdict}  {detail}")
