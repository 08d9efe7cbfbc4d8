import numpy as np
import pytest

from subseg import synthgen


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_dataset(tmp_path_factory):
    """A tiny generated dataset shared by pipeline-level tests."""
    out = tmp_path_factory.mktemp("smallset")
    cfg = synthgen.SynthConfig(
        n_images=10, image_w=128, image_h=128, anomaly_probability=0.5,
        anomaly_area_fraction=(0.01, 0.04), rng_seed=7,
    )
    manifest_path, records = synthgen.generate_dataset(cfg, out, train_fraction=0.6)
    return manifest_path, records
