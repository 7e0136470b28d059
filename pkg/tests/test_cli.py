import json

import pytest

from blockft.cli import main
from conftest import FIXTURES, TABLE_FILES


def run_cli(*args):
    return main([str(a) for a in args])


@pytest.fixture(scope="module")
def data_root(tmp_path_factory):
    """A micro registry written through the generate-data command."""
    root = tmp_path_factory.mktemp("data")
    cfg = tmp_path_factory.mktemp("cfg") / "datasets.json"
    entries = [
        {"role": "ph1-12", "n_train": 10, "n_test": 4, "image_size": [64, 64], "seed": 1},
        {"role": "h50", "n_train": 10, "n_test": 4, "image_size": [64, 64], "seed": 2},
        {"role": "p12", "n_train": 8, "n_test": 4, "image_size": [64, 64], "seed": 3},
    ]
    cfg.write_text(json.dumps(entries))
    assert run_cli("generate-data", "--out", root, "--config", cfg) == 0
    return root


def test_generate_data_writes_dataset_dirs(data_root):
    assert (data_root / "ph1-12" / "descriptor.json").exists()
    assert (data_root / "h50" / "img_00000.png").exists()


def test_pretrain_finetune_evaluate_chain(data_root, tmp_path):
    ck = tmp_path / "pre.pt"
    assert run_cli(
        "pretrain", "--dataset", data_root / "ph1-12", "--out", ck,
        "--epochs", 1, "--batch-size", 8, "--seed", 4,
        "--ledger", tmp_path / "runs.jsonl",
    ) == 0
    ft = tmp_path / "ft.pt"
    assert run_cli(
        "finetune", "--checkpoint", ck, "--scheme", "e-2", "--dataset", data_root / "h50",
        "--out", ft, "--epochs", 1, "--batch-size", 8, "--lr", 1e-4, "--seed", 4,
    ) == 0
    assert run_cli("evaluate", "--checkpoint", ft, "--dataset", data_root / "p12") == 0
    ledger = (tmp_path / "runs.jsonl").read_text().splitlines()
    assert len(ledger) == 1


def test_ingest_select_stats_report_plot(tmp_path):
    out = tmp_path / "ingested"
    assert run_cli(
        "ingest-tables", *TABLE_FILES,
        "--experiments", FIXTURES / "experiments.csv", "--out", out,
    ) == 0
    flags = json.loads((out / "ingest_flags.json").read_text())["flags"]
    assert len(flags) == 1

    table = out / "score_table.csv"
    exps = FIXTURES / "experiments.csv"
    assert run_cli("select", "--table", table, "--experiments", exps, "--experiment", "2") == 0
    assert run_cli("stats", "--table", table, "--experiments", exps,
                   "--out", tmp_path / "stats.json") == 0
    assert json.loads((tmp_path / "stats.json").read_text())["alpha"] == 0.05

    rep = tmp_path / "report"
    assert run_cli("report", "--table", table, "--experiments", exps, "--out", rep) == 0
    assert (rep / "score_table_wide.csv").exists()
    assert (rep / "selection.csv").exists()
    assert (rep / "stats.json").exists()

    figs = tmp_path / "figs"
    assert run_cli("plot", "--table", table, "--experiments", exps, "--out", figs,
                   "--formats", "png") == 0
    assert (figs / "encoder_ootd.png").exists()
    assert (figs / "decoder_ootd.png").exists()


def test_run_experiment_template_and_execution(data_root, tmp_path):
    cfg = tmp_path / "exp.json"
    assert run_cli("run-experiment", "--config", cfg, "--write-template") == 0
    spec = json.loads(cfg.read_text())
    assert spec["train_config"]["batch_size"] == 16
    assert spec["train_config"]["lr_finetune"] == 1e-6

    spec.update({
        "experiment_id": "cli-1", "pt_dataset": "ph1-12", "ft_dataset": "h50",
        "schemes": ["e-1", "d-4"], "n_runs": 1, "seeds": [],
    })
    spec["train_config"].update({"epochs_pretrain": 1, "epochs_finetune": 1,
                                 "batch_size": 8, "lr_finetune": 1e-4})
    spec["model_config"] = {"input_size": [64, 64], "base_channels": 8, "n_classes": 5}
    cfg.write_text(json.dumps(spec))
    out = tmp_path / "exp-out"
    assert run_cli("run-experiment", "--config", cfg, "--data", data_root, "--out", out) == 0
    assert (out / "score_table.csv").exists()
    assert (out / "ledger.jsonl").exists()


def test_difficulty_command(data_root, tmp_path):
    assert run_cli(
        "difficulty", "--data", data_root, "--datasets", "ph1-12", "h50",
        "--epochs", 1, "--batch-size", 8, "--out", tmp_path / "difficulty.json",
        "--pt", "ph1-12", "--ft", "h50",
    ) == 0
    payload = json.loads((tmp_path / "difficulty.json").read_text())
    assert set(payload["per_dataset"]) == {"ph1-12", "h50"}
    assert all(len(v) == 5 for v in payload["values"].values())


def test_partial_experiment_exits_two(data_root, tmp_path, monkeypatch):
    import blockft.experiment as exp_mod
    from blockft.errors import DivergedRunError

    real_finetune = exp_mod.finetune

    def flaky(ckpt, scheme, samples, cfg, dataset_name=""):
        if str(scheme) == "d-4":
            raise DivergedRunError("non-finite loss at epoch 0", epoch=0)
        return real_finetune(ckpt, scheme, samples, cfg, dataset_name)

    monkeypatch.setattr(exp_mod, "finetune", flaky)
    cfg = tmp_path / "exp.json"
    cfg.write_text(json.dumps({
        "experiment_id": "cli-partial", "pt_dataset": "ph1-12", "ft_dataset": "h50",
        "schemes": ["e-1", "d-4"], "n_runs": 1, "seeds": [5],
        "train_config": {"epochs_pretrain": 1, "epochs_finetune": 1,
                         "batch_size": 8, "lr_finetune": 1e-4, "seed": 5},
        "model_config": {"input_size": [64, 64], "base_channels": 8, "n_classes": 5},
    }))
    code = run_cli("run-experiment", "--config", cfg, "--data", data_root,
                   "--out", tmp_path / "out")
    assert code == 2


def test_validation_errors_exit_one(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("experiment,scheme,dataset,mean,std,n_runs\n9,e-1,h50,0.5,0.0,3\n")
    assert run_cli(
        "ingest-tables", bad, "--experiments", FIXTURES / "experiments.csv",
        "--out", tmp_path / "o",
    ) == 1
    assert run_cli("generate-data", "--out", tmp_path / "d", "--config", _bad_role(tmp_path)) == 1


def _bad_role(tmp_path):
    cfg = tmp_path / "bad_role.json"
    cfg.write_text(json.dumps([{"role": "mystery", "n_train": 1, "n_test": 1}]))
    return cfg
