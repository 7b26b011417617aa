import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent))

from viewconsist import _kernels_np

try:
    from viewconsist import _kernels
    _BACKENDS = [_kernels_np, _kernels]
except ImportError:
    _BACKENDS = [_kernels_np]


@pytest.fixture(params=_BACKENDS, ids=lambda m: m.__name__.rsplit(".", 1)[-1])
def kernel_backend(request):
    """Run a test against every available kernel backend."""
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)
