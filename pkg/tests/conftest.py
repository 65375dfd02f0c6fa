import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from crowdsize.geometry import SceneConfig
from crowdsize.sim import field_for
from crowdsize.spatial import UniformDensity, build_sobol_cloud, canonical_suite

ACCEPTANCE_LINES: list[str] = []


def record(criterion: str, passed: bool, detail: str) -> None:
    ACCEPTANCE_LINES.append(f"[{'PASS' if passed else 'FAIL'}] {criterion}: {detail}")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def cfg():
    return SceneConfig(rho=0.25, r_max=14.5)


@pytest.fixture(scope="session")
def uniform(cfg):
    return UniformDensity(cfg, name="uniform")


@pytest.fixture(scope="session")
def cloud14(cfg):
    return build_sobol_cloud(cfg, 14)


@pytest.fixture(scope="session")
def suite():
    return canonical_suite()


@pytest.fixture(scope="session")
def field_cache(tmp_path_factory):
    return tmp_path_factory.mktemp("fields")


@pytest.fixture(scope="session")
def uniform_field(uniform, field_cache):
    return field_for(uniform, 14, cache_dir=field_cache)


@pytest.fixture(scope="session")
def suite_fields(suite, field_cache):
    return {d.name: field_for(d, 14, cache_dir=field_cache) for d in suite}
