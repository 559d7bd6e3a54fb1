import math
import os
import sys

import numpy as np
import pytest
from hypothesis import settings

sys.path.insert(0, os.path.dirname(__file__))

from etc_lab import bounds, plants  # noqa: E402

settings.register_profile("repo", derandomize=True, deadline=None, max_examples=60)
settings.load_profile("repo")

_ACCEPTANCE = []


@pytest.fixture(scope="session")
def lure():
    """Certificate, Lyapunov pair, plant and bounds of the Lur'e benchmark."""
    consts, lyap = plants.lure_certificate()
    plant = plants.lure_plant()
    lip = plant.lipschitz
    th = bounds.tau_hat(consts, lip)
    return dict(consts=consts, lyap=lyap, plant=plant, lip=lip, tau_hat=th, error_coeffs=bounds.lemma5_ab(consts, lip, th))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.failed):
        return
    if "test_acceptance.py" not in report.nodeid:
        return
    props = dict(report.user_properties)
    if "criterion" not in props:
        return
    _ACCEPTANCE.append((props["criterion"], props.get("title", ""), report.outcome, props.get("measured", "")))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num, title, outcome, measured in sorted(_ACCEPTANCE, key=lambda r: r[0]):
        mark = "PASS" if outcome == "passed" else "FAIL"
        line = f"[{mark}] criterion {num:2d}: {title}"
        if measured:
            line += f" -- {measured}"
        terminalreporter.write_line(line)


def finite(x):
    return x is not None and math.isfinite(x)
