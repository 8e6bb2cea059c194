import numpy as np
import pytest

from downbench import probes, rng
from downbench.imagecore import Raster


@pytest.fixture(scope="session")
def small_manifest(tmp_path_factory):
    """Manifest of six 128-px probes, for fast pipeline-level tests."""
    out = tmp_path_factory.mktemp("corpus-small")
    return probes.write_corpus(out, count=6, size=128)


@pytest.fixture(scope="session")
def acceptance_manifest(tmp_path_factory):
    """The 30-image 256-px corpus the acceptance criteria run on."""
    out = tmp_path_factory.mktemp("corpus-acceptance")
    return probes.write_corpus(out, count=30, size=256)


@pytest.fixture()
def gen():
    return rng.stream(2024, "tests")


def rand_raster(gen, h=16, w=16, channels=3) -> Raster:
    return Raster(gen.random((h, w, channels)))
