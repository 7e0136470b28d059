import json
from pathlib import Path

import pytest

from blockft.errors import DivergedRunError, ValidationError
from blockft.experiment import ExperimentSpec, run_experiment
from blockft.phantom import make_role_dataset
from blockft.schemes import Scheme
from blockft.training import TrainConfig
from blockft.unet import UNetConfig

MICRO_TRAIN = TrainConfig(epochs_pretrain=1, epochs_finetune=1, lr_finetune=1e-4,
                          batch_size=8, seed=10)


@pytest.fixture(scope="module")
def datasets():
    out = {}
    for role, seed in (("ph1-12", 1), ("h50", 2), ("p12", 4)):
        b = make_role_dataset(role, n_train=12, n_test=4, image_size=(64, 64), seed=seed)
        out[b.name] = b
    return out


@pytest.fixture(scope="module")
def micro_spec():
    return ExperimentSpec(
        experiment_id="t1",
        pt_dataset="ph1-12",
        ft_dataset="h50",
        schemes=(Scheme.parse("e-1"), Scheme.parse("e-2"), Scheme.parse("d-4")),
        n_runs=1,
        train_config=MICRO_TRAIN,
        model_config=UNetConfig((64, 64), 8),
    )


@pytest.fixture(scope="module")
def completed(micro_spec, datasets, tmp_path_factory):
    out = tmp_path_factory.mktemp("exp")
    bundle = run_experiment(micro_spec, datasets, out)
    return bundle, out


class TestSpecValidation:
    def test_pt_equals_ft_rejected(self):
        with pytest.raises(ValidationError):
            ExperimentSpec("x", "a", "a")

    def test_empty_schemes_rejected(self):
        with pytest.raises(ValidationError):
            ExperimentSpec("x", "a", "b", schemes=())

    def test_seed_count_must_match_runs(self):
        with pytest.raises(ValidationError):
            ExperimentSpec("x", "a", "b", n_runs=3, seeds=(1,))

    def test_default_seeds_derived_from_config(self):
        spec = ExperimentSpec("x", "a", "b", n_runs=3, train_config=TrainConfig(seed=7))
        assert spec.seeds == (7, 8, 9)

    def test_json_round_trip(self, micro_spec):
        back = ExperimentSpec.from_json_dict(micro_spec.to_json_dict())
        assert back.to_json_dict() == micro_spec.to_json_dict()

    def test_unregistered_dataset_rejected(self, micro_spec, datasets, tmp_path):
        spec = ExperimentSpec("x", "nope", "h50", n_runs=1, train_config=MICRO_TRAIN)
        with pytest.raises(ValidationError):
            run_experiment(spec, datasets, tmp_path)


class TestRun:
    def test_counts_and_artifacts(self, completed, micro_spec):
        bundle, out = completed
        # 1 pretraining + 3 fine-tunings
        assert bundle.new_train_runs == 4
        assert not bundle.partial
        assert (out / "score_table.csv").exists()
        assert (out / "analysis.json").exists()
        assert (out / "spec.json").exists()
        ledger_lines = Path(bundle.ledger_path).read_text().splitlines()
        assert len(ledger_lines) == 4

    def test_exclusion_invariant(self, completed):
        bundle, _ = completed
        for row in bundle.table.rows:
            assert "ph1-12" not in row.per_dataset
        assert "ph1-12" not in bundle.table.dataset_order

    def test_single_run_has_zero_std(self, completed):
        bundle, _ = completed
        for row in bundle.table.rows:
            assert all(c.std == 0.0 for c in row.per_dataset.values())
            assert row.ootd.std == 0.0
            assert row.ootd.n_runs == 1

    def test_run_ootd_traceable_to_cells(self, completed):
        bundle, out = completed
        ledger_ids = {json.loads(line)["run_id"]
                      for line in Path(bundle.ledger_path).read_text().splitlines()}
        for cell_file in (out / "cells").glob("*.json"):
            cell = json.loads(cell_file.read_text())
            assert cell["run_id"] in ledger_ids

    def test_resume_is_idempotent(self, completed, micro_spec, datasets):
        bundle, out = completed
        again = run_experiment(micro_spec, datasets, out)
        assert again.new_train_runs == 0
        ledger_lines = Path(again.ledger_path).read_text().splitlines()
        assert len(ledger_lines) == 4  # untouched

    def test_spec_echo_contains_full_train_config(self, completed):
        _, out = completed
        echo = json.loads((out / "spec.json").read_text())
        assert echo["train_config"]["batch_size"] == 8
        assert echo["train_config"]["lr_pretrain"] == 1e-4
        assert echo["train_config"]["bn_policy"] == "PopulationStats"

    def test_fresh_rerun_reproduces_scores_bit_for_bit(self, completed, micro_spec,
                                                       datasets, tmp_path):
        _, out = completed
        again = run_experiment(micro_spec, datasets, tmp_path / "fresh")
        assert again.new_train_runs == 4
        assert (tmp_path / "fresh" / "score_table.csv").read_bytes() == (
            out / "score_table.csv"
        ).read_bytes()


class TestPartialFailure:
    def test_diverged_cell_marks_bundle_partial(self, datasets, tmp_path, monkeypatch):
        import blockft.experiment as exp_mod

        real_finetune = exp_mod.finetune

        def flaky(ckpt, scheme, samples, cfg, dataset_name=""):
            if str(scheme) == "e-2":
                raise DivergedRunError("non-finite loss at epoch 0", epoch=0)
            return real_finetune(ckpt, scheme, samples, cfg, dataset_name)

        monkeypatch.setattr(exp_mod, "finetune", flaky)
        spec = ExperimentSpec(
            "t2", "ph1-12", "h50",
            schemes=(Scheme.parse("e-1"), Scheme.parse("e-2")),
            n_runs=1, train_config=MICRO_TRAIN, model_config=UNetConfig((64, 64), 8),
        )
        bundle = run_experiment(spec, datasets, tmp_path)
        assert bundle.partial
        assert any("diverged" in f for f in bundle.flags)
        cell = json.loads((tmp_path / "cells" / f"e-2_s{spec.seeds[0]}.json").read_text())
        assert cell["status"] == "failed"
        schemes_present = {str(r.scheme) for r in bundle.table.rows}
        assert schemes_present == {"e-1"}
