import numpy as np
import pytest

from nmretarget.synthetic_fixtures import FixtureSpec, make_fixture
from nmretarget.gradcheck_suite import tiny_domains, tiny_model

MINIMAL_BVH = """HIERARCHY
ROOT root
{
  OFFSET 0 0 0
  CHANNELS 6 Xposition Yposition Zposition Zrotation Xrotation Yrotation
  JOINT child
  {
    OFFSET 0 10 0
    CHANNELS 3 Zrotation Xrotation Yrotation
    End Site
    {
      OFFSET 0 5 0
    }
  }
}
MOTION
Frames: 1
Frame Time: 0.02
0 0 0 0 0 0 0 0 0
"""


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def minimal_bvh():
    return MINIMAL_BVH


@pytest.fixture(scope="session")
def small_fixture():
    return make_fixture(FixtureSpec(motions=3, frames=80, heldout=1))


@pytest.fixture(scope="session")
def default_fixture():
    return make_fixture(FixtureSpec(heldout=4))


@pytest.fixture
def tiny():
    return tiny_model(np.random.default_rng(7))


@pytest.fixture
def tiny_doms():
    return tiny_domains()


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
