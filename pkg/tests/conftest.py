import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from sokotl import levels


@pytest.fixture(scope="session")
def set1():
    return levels.generate(seed=11, box_count=1, count=10)


@pytest.fixture(scope="session")
def set2():
    return levels.generate(seed=12, box_count=2, count=8)


@pytest.fixture(scope="session")
def set3():
    return levels.generate(seed=13, box_count=3, count=6)


@pytest.fixture(scope="session")
def trivial_set():
    c = levels.GenConstraints(min_len=3, max_len=5)
    return levels.generate(seed=21, box_count=1, count=10, constraints=c)
