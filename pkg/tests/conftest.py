import os

import pytest
from hypothesis import HealthCheck, settings

from shopflow.config import load_config
from shopflow.evalkit.scene import demo_scene, generate_scene

settings.register_profile(
    "default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(scope="session")
def demo_cfg():
    return load_config("demo")


@pytest.fixture(scope="session")
def demo_rendered():
    return generate_scene(demo_scene())


@pytest.fixture(scope="session")
def demo_frames(demo_rendered):
    return list(demo_rendered.frames())


_ACCEPTANCE: list[str] = []


@pytest.fixture
def verdict(capsys):
    """``verdict(n, title, ok, detail)`` prints and records one PASS/FAIL line, then asserts."""

    def record(n, title, ok, detail=""):
        line = f"[criterion {n}] {'PASS' if ok else 'FAIL'}  {title}" + (f"  ({detail})" if detail else "")
        _ACCEPTANCE.append(line)
        with capsys.disabled():
            print("\n" + line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip("]"))):
            terminalreporter.write_line(line)
