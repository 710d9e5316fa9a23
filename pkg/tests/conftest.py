"""
Configuración compartida de pytest: ruta del repositorio, fixtures y marca slow
"""

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from models.config import FastTabConfig  # noqa: E402
from models.grid import GridSpec, SpanGrid  # noqa: E402
from models.sample import Sample  # noqa: E402
from modules.numerics import Rng  # noqa: E402


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="ejecutar pruebas lentas")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: prueba lenta, solo con --runslow")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="requiere --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def rng():
    return Rng(1234)


@pytest.fixture
def toy_config():
    return FastTabConfig.toy()


@pytest.fixture
def toy_model(toy_config):
    from modules.pipeline import FastTabModel

    return FastTabModel(toy_config, Rng(0))


@pytest.fixture
def blank_sample():
    """Muestra 2×2 simple sobre un lienzo blanco de 32×32"""
    grid = GridSpec(R=2, C=2, H_hdr=1, y=np.array([0.0, 0.5, 1.0]), x=np.array([0.0, 0.5, 1.0]))
    return Sample(id="blank", image=np.ones((3, 32, 32), dtype=np.float32), grid=grid,
                  spans=SpanGrid.simple(2, 2), text_boxes=[(2, 2, 10, 8), (18, 20, 30, 28)])


@pytest.fixture
def synth_sample():
    from modules.data import generate_sample
    from models.config import Caps

    return generate_sample(0, seed=7, caps=Caps(R_max=4, C_max=4, RS_max=2, CS_max=2))
