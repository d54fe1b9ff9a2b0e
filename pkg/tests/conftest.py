"""Shared fixtures and the acceptance-criteria terminal summary.

Tests marked ``@pytest.mark.acceptance(n, description)`` are release
gates; after the run a summary section prints one PASS/FAIL line per
criterion (plus any measured values the test recorded via
``record_note``).
"""

import sys
from pathlib import Path

import numpy as np
import pytest

TESTS_DIR = Path(__file__).parent
sys.path.insert(0, str(TESTS_DIR))

from synthimg import corpus, smooth_image  # noqa: E402

from phg.imaging import ImageBuffer  # noqa: E402

_results: dict[int, tuple[str, bool, float]] = {}
_notes: dict[int, str] = {}


def record_note(criterion: int, text: str) -> None:
    """Attach a measured-values note to one criterion's summary line."""
    _notes[criterion] = text


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is not None and rep.when == "call":
        num, desc = marker.args
        _results[num] = (desc, rep.passed, rep.duration)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_results):
        desc, passed, duration = _results[num]
        verdict = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"criterion {num:2d}: {verdict}  ({duration:6.2f}s)  {desc}")
        if num in _notes:
            terminalreporter.write_line(f"              {_notes[num]}")


# ---------------------------------------------------------------------------
# Image fixtures


@pytest.fixture(scope="session")
def corpus50() -> list[ImageBuffer]:
    """50 deterministic synthetic photographs, mixed sizes, some RGB."""
    return [ImageBuffer.from_array(a) for a in corpus(50)]


@pytest.fixture(scope="session")
def small_gray() -> ImageBuffer:
    return ImageBuffer.from_array(smooth_image(421, 40, 30))


@pytest.fixture(scope="session")
def small_rgb() -> ImageBuffer:
    return ImageBuffer.from_array(smooth_image(422, 40, 30, rgb=True))


@pytest.fixture(scope="session")
def data_dir() -> Path:
    return TESTS_DIR / "data"


def constant_image(value: int, width: int = 64, height: int = 64) -> ImageBuffer:
    return ImageBuffer.from_array(np.full((height, width), value, dtype=np.uint8))
