import json

import numpy as np
import pytest
import torch

from blockft.checkpoints import restore_model
from blockft.errors import DivergedRunError, ValidationError
from blockft.schemes import ALL_BLOCKS, Scheme
from blockft.training import (
    BN_FROZEN_STATS,
    BN_POPULATION_STATS,
    DEFAULT_RESIZE,
    AutoencoderTrainConfig,
    TrainConfig,
    append_ledger,
    finetune,
    pretrain,
    train_autoencoder,
)
from blockft.unet import AutoencoderConfig, UNetConfig, block_partition, build_unet

FAST = dict(epochs_pretrain=1, epochs_finetune=1, batch_size=8)


class TestConfigFidelity:
    def test_reference_defaults(self):
        cfg = TrainConfig()
        assert cfg.batch_size == 16
        assert cfg.lr_pretrain == 1e-4
        assert cfg.lr_finetune == 1e-6
        assert cfg.optimizer == "adam"
        assert cfg.loss == "cross_entropy"
        assert cfg.bn_policy == BN_POPULATION_STATS
        assert DEFAULT_RESIZE == (256, 256)

    def test_overrides_are_tracked(self):
        cfg = TrainConfig(batch_size=8, lr_finetune=1e-4)
        assert cfg.overrides() == {"batch_size": 8, "lr_finetune": 1e-4}
        assert TrainConfig().overrides() == {}

    def test_autoencoder_protocol_defaults(self):
        cfg = AutoencoderTrainConfig()
        assert cfg.epochs == 5
        assert cfg.batch_size == 16
        assert cfg.lr == 1e-3

    def test_json_round_trip(self):
        cfg = TrainConfig(seed=9, epochs_finetune=2)
        assert TrainConfig.from_json_dict(cfg.to_json_dict()) == cfg

    def test_invalid_configs(self):
        with pytest.raises(ValidationError):
            TrainConfig(optimizer="sgd")
        with pytest.raises(ValidationError):
            TrainConfig(bn_policy="Auto")
        with pytest.raises(ValidationError):
            AutoencoderTrainConfig(loss="dice")


class TestPretrain:
    def test_empty_data_rejected(self):
        model = build_unet(UNetConfig((64, 64), 8), seed=0)
        with pytest.raises(ValidationError):
            pretrain(model, [], TrainConfig())

    def test_zero_epochs_keeps_initialization(self, tiny_dataset):
        cfg = TrainConfig(epochs_pretrain=0, batch_size=8, seed=1)
        model = build_unet(UNetConfig((64, 64), 8), seed=1)
        init = {k: v.clone() for k, v in model.state_dict().items()}
        ckpt, run = pretrain(model, tiny_dataset.train, cfg)
        assert run.epoch_losses == []
        restored = restore_model(ckpt)
        for k, v in restored.state_dict().items():
            assert torch.equal(v, init[k])

    def test_deterministic_per_seed(self, tiny_dataset):
        cfg = TrainConfig(seed=3, **FAST)
        runs = []
        for _ in range(2):
            model = build_unet(UNetConfig((64, 64), 8), seed=3)
            ckpt, run = pretrain(model, tiny_dataset.train, cfg)
            runs.append((ckpt, run))
        assert runs[0][1].epoch_losses == runs[1][1].epoch_losses
        assert all(torch.equal(runs[0][0].params[k], runs[1][0].params[k])
                   for k in runs[0][0].params)

    def test_loss_decreases_when_overfitting_small_set(self, tiny_dataset):
        cfg = TrainConfig(epochs_pretrain=6, batch_size=8, seed=2)
        model = build_unet(UNetConfig((64, 64), 8), seed=2)
        _, run = pretrain(model, tiny_dataset.train[:10], cfg)
        assert run.epoch_losses[-1] < run.epoch_losses[0]


class TestFinetune:
    def test_freezing_contract_encoder_two(self, tiny_dataset, pretrained_checkpoint):
        cfg = TrainConfig(epochs_finetune=2, lr_finetune=1e-4, batch_size=8, seed=5)
        ckpt, _ = finetune(pretrained_checkpoint, Scheme.parse("e-2"), tiny_dataset.train, cfg)
        before = block_partition(restore_model(pretrained_checkpoint))
        after = block_partition(restore_model(ckpt))
        for block in ALL_BLOCKS:
            changed = any(
                not torch.equal(p_b, p_a)
                for (_, p_b), (_, p_a) in zip(before[block], after[block])
            )
            if str(block) in ("E1", "E2"):
                assert changed, f"trainable block {block} did not move"
            else:
                assert not changed, f"frozen block {block} moved"

    def test_full_scheme_zero_lr_is_identity_on_params(self, tiny_dataset, pretrained_checkpoint):
        cfg = TrainConfig(epochs_finetune=1, lr_finetune=0.0, batch_size=8, seed=5)
        ckpt, _ = finetune(pretrained_checkpoint, Scheme.parse("Full"), tiny_dataset.train, cfg)
        for k in ckpt.params:
            if "running_" in k:
                continue  # population policy keeps updating running statistics
            assert torch.equal(ckpt.params[k], pretrained_checkpoint.params[k])

    def test_gradient_flow_reaches_every_trainable_block(self, tiny_dataset, pretrained_checkpoint):
        cfg = TrainConfig(epochs_finetune=1, lr_finetune=1e-4, batch_size=32, seed=6)
        ckpt, _ = finetune(pretrained_checkpoint, Scheme.parse("Full"),
                           tiny_dataset.train[:8], cfg)
        before = block_partition(restore_model(pretrained_checkpoint))
        after = block_partition(restore_model(ckpt))
        for block in ALL_BLOCKS:
            assert any(
                not torch.equal(p_b, p_a)
                for (_, p_b), (_, p_a) in zip(before[block], after[block])
            ), f"no parameter changed in trainable block {block}"

    def test_frozen_stats_policy_keeps_buffers(self, tiny_dataset, pretrained_checkpoint):
        cfg = TrainConfig(epochs_finetune=1, lr_finetune=1e-4, batch_size=8, seed=7,
                          bn_policy=BN_FROZEN_STATS)
        ckpt, _ = finetune(pretrained_checkpoint, Scheme.parse("e-1"), tiny_dataset.train, cfg)
        for k in ckpt.params:
            if "running_" in k:
                assert torch.equal(ckpt.params[k], pretrained_checkpoint.params[k])

    def test_population_policy_moves_buffers(self, tiny_dataset, pretrained_checkpoint):
        cfg = TrainConfig(epochs_finetune=1, lr_finetune=1e-4, batch_size=8, seed=7,
                          bn_policy=BN_POPULATION_STATS)
        ckpt, _ = finetune(pretrained_checkpoint, Scheme.parse("e-1"), tiny_dataset.train, cfg)
        moved = [k for k in ckpt.params
                 if "running_" in k and not torch.equal(ckpt.params[k],
                                                        pretrained_checkpoint.params[k])]
        assert moved

    def test_deterministic_per_seed(self, tiny_dataset, pretrained_checkpoint):
        cfg = TrainConfig(epochs_finetune=1, lr_finetune=1e-4, batch_size=8, seed=11)
        a, run_a = finetune(pretrained_checkpoint, Scheme.parse("d-2"), tiny_dataset.train, cfg)
        b, run_b = finetune(pretrained_checkpoint, Scheme.parse("d-2"), tiny_dataset.train, cfg)
        assert run_a.epoch_losses == run_b.epoch_losses
        assert all(torch.equal(a.params[k], b.params[k]) for k in a.params)

    def test_diverged_run_carries_epoch(self, tiny_dataset, pretrained_checkpoint):
        cfg = TrainConfig(epochs_finetune=3, lr_finetune=1e18, batch_size=8, seed=1)
        with pytest.raises(DivergedRunError) as exc:
            finetune(pretrained_checkpoint, Scheme.parse("Full"), tiny_dataset.train, cfg)
        assert exc.value.epoch >= 0

    def test_empty_data_rejected(self, pretrained_checkpoint):
        with pytest.raises(ValidationError):
            finetune(pretrained_checkpoint, Scheme.parse("e-1"), [], TrainConfig())


class TestAutoencoderTraining:
    def test_difficulty_score_is_final_epoch_loss(self, tiny_dataset):
        cfg = AutoencoderTrainConfig(epochs=2, batch_size=8, seed=0)
        _, err, run = train_autoencoder(tiny_dataset.train, AutoencoderConfig((64, 64)), cfg)
        assert err == run.epoch_losses[-1]
        assert run.final_loss == err

    def test_all_zero_images_drive_error_toward_zero(self):
        from blockft.labels import FrameSample

        frames = [FrameSample(np.zeros((64, 64), np.float32), np.zeros((64, 64), np.uint8))
                  for _ in range(12)]
        cfg = AutoencoderTrainConfig(epochs=6, batch_size=4, lr=3e-3, seed=0)
        _, err, run = train_autoencoder(frames, AutoencoderConfig((64, 64)), cfg)
        assert err < run.epoch_losses[0]
        assert err < 0.01

    def test_noisier_variant_scores_higher(self, tiny_dataset):
        from blockft.labels import FrameSample

        rng = np.random.default_rng(0)
        noisy = [
            FrameSample(
                np.clip(f.image + rng.normal(0, 0.25, f.image.shape), 0, 1).astype(np.float32),
                f.labels,
            )
            for f in tiny_dataset.train
        ]
        cfg = AutoencoderTrainConfig(epochs=3, batch_size=8, seed=1)
        _, err_clean, _ = train_autoencoder(tiny_dataset.train, AutoencoderConfig((64, 64)), cfg)
        _, err_noisy, _ = train_autoencoder(noisy, AutoencoderConfig((64, 64)), cfg)
        assert err_noisy > err_clean

    def test_deterministic_per_seed(self, tiny_dataset):
        cfg = AutoencoderTrainConfig(epochs=1, batch_size=8, seed=4)
        _, a, _ = train_autoencoder(tiny_dataset.train, AutoencoderConfig((64, 64)), cfg)
        _, b, _ = train_autoencoder(tiny_dataset.train, AutoencoderConfig((64, 64)), cfg)
        assert a == b


def test_ledger_appends_json_lines(tmp_path, tiny_dataset):
    cfg = TrainConfig(seed=3, **FAST)
    model = build_unet(UNetConfig((64, 64), 8), seed=3)
    _, run = pretrain(model, tiny_dataset.train[:8], cfg, dataset_name="ph1-12")
    ledger = tmp_path / "runs.jsonl"
    append_ledger(ledger, run)
    append_ledger(ledger, run)
    lines = ledger.read_text().splitlines()
    assert len(lines) == 2
    rec = json.loads(lines[0])
    assert rec["kind"] == "pretrain"
    assert rec["dataset"] == "ph1-12"
    assert rec["config"]["batch_size"] == 8
    assert rec["overrides"] == {"epochs_pretrain": 1, "epochs_finetune": 1,
                                "batch_size": 8, "seed": 3}
