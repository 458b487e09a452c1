import numpy as np
import pytest

from uavtrack.types import BBox, Detection, FeatureMap, GridGeometry


def random_unit(rng, d):
    v = rng.standard_normal(d)
    return v / np.linalg.norm(v)


def planted_map(geom, plants, rng=None, background=0.0):
    """Feature map with each (x, y, vector) written at one cell; background is zero or small noise."""
    if background and rng is not None:
        values = rng.standard_normal((geom.height, geom.width, geom.embed_dim)) * background / np.sqrt(geom.embed_dim)
    else:
        values = np.zeros((geom.height, geom.width, geom.embed_dim))
    for x, y, v in plants:
        values[y, x] = v
    return FeatureMap(geom, values)


def det(cx, cy, w=4.0, h=4.0, conf=0.9, emb=None, cls=0, dim=8):
    if emb is None:
        emb = np.eye(dim)[0]
    return Detection.create(BBox(cx, cy, w, h), conf, cls, emb)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_geom():
    return GridGeometry(height=24, width=32, embed_dim=8, stride=4)


ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda l: int(l.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
