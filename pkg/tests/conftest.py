from importlib import resources
from pathlib import Path

import pytest

from taskbal import kernels

DATA = Path(str(resources.files("taskbal") / "data"))

BACKENDS = ["python"]
try:
    kernels.backend_module("cython")
    BACKENDS.insert(0, "cython")
except ImportError:
    pass


@pytest.fixture
def data_dir() -> Path:
    return DATA


@pytest.fixture(params=BACKENDS)
def backend(request):
    previous = kernels.set_backend(request.param)
    yield request.param
    kernels.set_backend(previous)
