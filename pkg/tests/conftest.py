import os
import tempfile

# Логи тестов не должны попадать в рабочий каталог
os.environ.setdefault("GAH_LOG_DIR", os.path.join(tempfile.gettempdir(), "gah-test-logs"))

import numpy as np
import pytest

from src.frontend.dataset import collate, generate_dataset, prepare_samples
from src.models.layers import ModelDims
from src.utils.config import GeneratorConfig, OptimizerConfig, RunConfig


def pytest_collection_modifyitems(config, items):
    if os.getenv("GAH_RUN_SLOW") == "1":
        return
    skip_slow = pytest.mark.skip(reason="длительный тест: установите GAH_RUN_SLOW=1")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_dims():
    return ModelDims(N=3, T=4, d_v=2, d=8, K=8, A=3, C_act=2, layers=2)


def make_tiny_run(model_kind: str = "stvh", **overrides) -> RunConfig:
    params = dict(
        model_kind=model_kind, N=3, T=4, d_v=2, d=8, K=8, layers=2, A=3, C_act=2, P=2,
        epochs=1, batch_size=4, seed=11, validation_fraction=0.25, map_k=3,
        optimizer=OptimizerConfig(schedule={1: 1e-3}),
        generator=GeneratorConfig(train_samples=8, test_samples=4, map_size=8, clips_per_video=2),
    )
    params.update(overrides)
    return RunConfig(**params)


@pytest.fixture
def tiny_run():
    return make_tiny_run()


@pytest.fixture
def tiny_dataset(tiny_run):
    return generate_dataset(tiny_run.generator, tiny_run.seed, threads=1)


@pytest.fixture
def tiny_samples(tiny_dataset):
    return prepare_samples(tiny_dataset.split("train"))


@pytest.fixture
def tiny_batch(tiny_samples):
    return collate(tiny_samples[:2])
