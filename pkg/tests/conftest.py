import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))  # make oracles importable

from teleosim.parsing import parse_robot, parse_scene

ASSETS = Path(__file__).resolve().parents[1] / "src" / "teleosim" / "assets"
GOLDEN = Path(__file__).resolve().parents[1] / "fixtures" / "golden"


def load_robot(name: str):
    return parse_robot((ASSETS / f"{name}.robot").read_text())


def load_scene(name: str):
    return parse_scene((ASSETS / f"{name}.scene").read_text())


@pytest.fixture(scope="session")
def planar1():
    return load_robot("planar1")


@pytest.fixture(scope="session")
def planar2():
    return load_robot("planar2")


@pytest.fixture(scope="session")
def dualarm7():
    return load_robot("dualarm7")


@pytest.fixture(scope="session")
def sort_bolts():
    return load_scene("sort_bolts")


@pytest.fixture(scope="session")
def mug_basket():
    return load_scene("mug_basket")
