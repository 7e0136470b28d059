from pathlib import Path

import pytest

from blockft.ingest import ingest_many, read_experiment_pairs

FIXTURES = Path(__file__).parent / "fixtures"

TABLE_FILES = (
    FIXTURES / "reference_scores_experiments_1_2.csv",
    FIXTURES / "reference_scores_experiments_3_4.csv",
)


@pytest.fixture(scope="session")
def experiment_pairs():
    return read_experiment_pairs(FIXTURES / "experiments.csv")


@pytest.fixture(scope="session")
def reference_table(experiment_pairs):
    table, flags = ingest_many(TABLE_FILES, experiment_pairs)
    return table, flags


@pytest.fixture(scope="session")
def tiny_dataset():
    from blockft.phantom import make_role_dataset

    return make_role_dataset("ph1-12", n_train=24, n_test=6, image_size=(64, 64), seed=5)


@pytest.fixture(scope="session")
def pretrained_checkpoint(tiny_dataset):
    """A small shared pre-trained checkpoint for fine-tuning tests."""
    from blockft.training import TrainConfig, pretrain
    from blockft.unet import UNetConfig, build_unet

    cfg = TrainConfig(epochs_pretrain=2, batch_size=8, seed=3)
    model = build_unet(UNetConfig((64, 64), 8), seed=3)
    ckpt, _ = pretrain(model, tiny_dataset.train, cfg, dataset_name="ph1-12")
    return ckpt
