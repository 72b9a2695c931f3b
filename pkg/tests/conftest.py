import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from chasd.backend import PatchGeometry, ToyBackendSpec, VisualGrid, build_toy_backend  # noqa: E402


@pytest.fixture(scope="session")
def backend():
    return build_toy_backend(ToyBackendSpec(seed=7))


def random_instance(seed, geometry=None, vocab_size=32, eos=0):
    """A random (prompt, visual) pair that avoids EOS inside the prompt."""
    g = np.random.default_rng(seed)
    geometry = geometry or ToyBackendSpec().geometry
    length = int(g.integers(2, 7))
    prompt = [int(t) for t in g.integers(1, vocab_size, size=length)]
    return prompt, VisualGrid(g.normal(size=geometry.shape), geometry)


@pytest.fixture
def small_geometry():
    return PatchGeometry(2, 2, 3, 3, 1)


_criteria: dict[int, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion this test gates")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    if report.when == "call" or (report.when == "setup" and not report.passed):
        _criteria[number] = (title, "PASS" if report.passed else "FAIL")


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        title, status = _criteria[number]
        terminalreporter.write_line(f"[{status}] {number:2d}. {title}")
