import pytest

from mtlshare.arch import BackboneConfig
from mtlshare.data import MultiTaskDataset, SyntheticTaskSpec, gen_synthetic_pair


@pytest.fixture(scope="session")
def small_tasks():
    return list(gen_synthetic_pair(SyntheticTaskSpec(dim=8, n_classes=3, samples_a=120, samples_b=60, noise=0.3, seed=5)))


@pytest.fixture
def small_backbone(small_tasks):
    return BackboneConfig.dense_variant(8, tuple(t.n_classes for t in small_tasks), hidden=12, depth=2)


@pytest.fixture
def make_mtds(small_tasks):
    def make(seed=0, batch_size=8):
        return MultiTaskDataset(small_tasks, batch_size=batch_size, seed=seed)

    return make
