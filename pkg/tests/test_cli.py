import csv
import json

import pytest

from oodbench.cli import main
from oodbench.data import Dataset
from oodbench.metrics import DecoyEntry, DecoySet, EntryKind, MetricReport, write_decoy_table
from oodbench.splits import SplitManifest
from oodbench.synthetic import GeneratorSpec, generate, write_dataset_csv


@pytest.fixture()
def sandbox(tmp_path):
    """A data directory with CSV inputs plus a config tuned for speed."""
    spec = GeneratorSpec(
        n_clusters=2,
        cluster_sizes=(30, 30),
        embedding_dim=6,
        ligand_dim=0,
        label_model="global_linear",
        noise_std=0.1,
        seed=7,
    )
    dataset, _ = generate(spec)
    data_dir = tmp_path / "data"
    paths = write_dataset_csv(dataset, data_dir)

    decoys = [
        DecoySet(
            "dock-1",
            (
                DecoyEntry("a", EntryKind.NATIVE_POSE, score=2.0, rmsd_to_native=0.4),
                DecoyEntry("b", EntryKind.DECOY_POSE, score=1.0, rmsd_to_native=5.0),
            ),
        ),
        DecoySet(
            "screen-1",
            (
                DecoyEntry("x", EntryKind.ACTIVE, score=3.0),
                DecoyEntry("y", EntryKind.INACTIVE, score=1.0),
                DecoyEntry("z", EntryKind.INACTIVE, score=0.0),
            ),
        ),
    ]
    write_decoy_table(decoys, data_dir / "decoys.csv")

    config = {
        "schema_version": 1,
        "seed": 7,
        "data": {
            "complex_table": "complexes.csv",
            "interaction_embeddings": "interaction_embeddings.csv",
            "interaction_dim": 6,
        },
        "split": {
            "targets": {"tgt": dataset.cluster_ids[-1]},
            "k": 2,
            "n_bins": 4,
            "n_holdout": 5,
        },
        "scorer": {
            "hidden_sizes": [8],
            "dropout_rate": 0.0,
            "learning_rate": 5e-3,
            "max_epochs": 6,
            "patience": 6,
            "batch_size": 16,
        },
        "training": {"target": "tgt", "track_curves": True},
        "finetune": {"finetune_epochs": 2},
        "evaluation": {"decoy_table": "decoys.csv"},
        "projection": {"perplexity": 8.0, "max_iter": 250},
    }
    config_path = data_dir / "config.json"
    config_path.write_text(json.dumps(config, indent=1))

    workspace = tmp_path / "ws"
    workspace.mkdir()
    return {
        "config": config_path,
        "workspace": workspace,
        "dataset": dataset,
        "paths": paths,
        "raw": config,
    }


def run(sandbox, *argv):
    return main([*argv, "--config", str(sandbox["config"]), "--workspace", str(sandbox["workspace"])])


def runs_named(sandbox, command):
    root = sandbox["workspace"] / "runs"
    return sorted(p for p in root.iterdir() if p.name.endswith(f"-{command}"))


def test_full_pipeline_produces_every_artifact(sandbox, capsys):
    assert run(sandbox, "ingest") == 0
    assert run(sandbox, "split") == 0
    assert run(sandbox, "train", "--regime", "skf") == 0
    assert run(sandbox, "evaluate") == 0
    assert run(sandbox, "report") == 0
    assert run(sandbox, "project") == 0
    assert run(sandbox, "finetune") == 0
    assert run(sandbox, "evaluate", "--run", "0007-finetune") == 0

    names = sorted(p.name for p in (sandbox["workspace"] / "runs").iterdir())
    assert names == [
        "0001-ingest",
        "0002-split",
        "0003-train",
        "0004-evaluate",
        "0005-report",
        "0006-project",
        "0007-finetune",
        "0008-evaluate",
    ]
    ws = sandbox["workspace"] / "runs"
    assert (ws / "0001-ingest" / "dataset.json").exists()
    assert (ws / "0001-ingest" / "ingest_report.json").exists()
    assert (ws / "0002-split" / "split_manifest.json").exists()
    assert (ws / "0003-train" / "ensemble" / "ensemble.json").exists()
    assert (ws / "0003-train" / "curves.csv").exists()
    assert (ws / "0004-evaluate" / "predictions_tgt.csv").exists()
    assert (ws / "0004-evaluate" / "metric_report.json").exists()
    assert (ws / "0005-report" / "metric_report.csv").exists()
    assert (ws / "0006-project" / "projection.png").exists()
    assert (ws / "0006-project" / "projection.csv").exists()
    assert (ws / "0007-finetune" / "ensemble" / "ensemble.json").exists()

    # every run wrote a record that names its outputs
    for run_dir in ws.iterdir():
        record = json.loads((run_dir / "run.json").read_text())
        assert record["run_id"] == run_dir.name
        assert record["seed"] == 7
        for name in record["outputs"]:
            assert (run_dir / name).exists()

    # the split honored the config
    manifest = SplitManifest.load(ws / "0002-split" / "split_manifest.json")
    assert manifest.k == 2
    assert len(manifest.holdout_ids("tgt")) == 5
    assert len(manifest.test_ids("tgt")) == 30

    # prediction files cover exactly the reporting test ids
    with (ws / "0004-evaluate" / "predictions_tgt.csv").open() as handle:
        rows = list(csv.DictReader(handle))
    assert sorted(r["complex_id"] for r in rows) == sorted(manifest.reporting_test_ids("tgt"))

    # decoy metrics made it into the report
    report = MetricReport.load(ws / "0004-evaluate" / "metric_report.json")
    assert report.docking["success_rate"] == 1.0
    assert "ef_0.005" in report.screening

    # the printed report table carries the aggregate rows
    assert run(sandbox, "report", "--run", "0004-evaluate") == 0
    out = capsys.readouterr().out
    assert "Avg" in out and "Min" in out

    # the second evaluate (fine-tuned member) differs from the ensemble's
    first = (ws / "0004-evaluate" / "predictions_tgt.csv").read_text()
    second = (ws / "0008-evaluate" / "predictions_tgt.csv").read_text()
    assert first != second


def test_train_val_regime_and_curve_artifacts(sandbox):
    assert run(sandbox, "ingest") == 0
    assert run(sandbox, "split") == 0
    assert run(sandbox, "train", "--regime", "val") == 0
    train_dir = runs_named(sandbox, "train")[-1]
    record = json.loads((train_dir / "run.json").read_text())
    assert record["regime"] == "val"
    assert record["target"] == "tgt"
    with (train_dir / "curves.csv").open() as handle:
        rows = list(csv.DictReader(handle))
    assert rows, "expected learning-curve rows"
    assert set(rows[0]) == {"eval_set", "epoch_pct", "n_members", "mean_pearson", "std_pearson"}


def test_evaluate_before_training_is_a_prerequisite_error(sandbox, capsys):
    assert run(sandbox, "evaluate") == 2
    assert "no completed train" in capsys.readouterr().err
    assert run(sandbox, "split") == 2  # needs an ingest run first


def test_val_regime_requires_a_target(sandbox, capsys):
    assert run(sandbox, "ingest") == 0
    assert run(sandbox, "split") == 0
    assert run(sandbox, "train", "--regime", "val", "--set", "training.target=null") == 1
    assert "config error at training.target" in capsys.readouterr().err


def test_unknown_config_key_is_rejected(sandbox, capsys):
    assert run(sandbox, "ingest", "--set", "data.tabel=typo.csv") == 1
    err = capsys.readouterr().err
    assert "config error at data" in err and "tabel" in err


def test_wrong_schema_version_is_rejected(sandbox, capsys):
    assert run(sandbox, "ingest", "--set", "schema_version=99") == 1
    assert "config error at schema_version" in capsys.readouterr().err


def test_missing_config_file_is_rejected(sandbox, tmp_path, capsys):
    code = main(
        ["ingest", "--config", str(tmp_path / "nope.json"), "--workspace", str(sandbox["workspace"])]
    )
    assert code == 1
    assert "does not exist" in capsys.readouterr().err


def test_corrupt_member_file_is_an_internal_error(sandbox, capsys):
    assert run(sandbox, "ingest") == 0
    assert run(sandbox, "split") == 0
    assert run(sandbox, "train", "--regime", "skf") == 0
    member = next((runs_named(sandbox, "train")[-1] / "ensemble").glob("member_*.scorer"))
    member.write_bytes(member.read_bytes()[:-32])
    assert run(sandbox, "evaluate") == 3
    assert "truncated or corrupt" in capsys.readouterr().err


def test_set_overrides_reach_the_pipeline(sandbox):
    assert run(sandbox, "ingest") == 0
    assert run(sandbox, "split", "--set", "split.k=3", "--set", "split.n_holdout=4") == 0
    manifest = SplitManifest.load(runs_named(sandbox, "split")[-1] / "split_manifest.json")
    assert manifest.k == 3
    assert len(manifest.holdout_ids("tgt")) == 4


def test_workspace_env_variable_is_honored(sandbox, monkeypatch, tmp_path):
    env_ws = tmp_path / "env-ws"
    env_ws.mkdir()
    monkeypatch.setenv("OODBENCH_WORKSPACE", str(env_ws))
    assert main(["ingest", "--config", str(sandbox["config"])]) == 0
    assert (env_ws / "runs" / "0001-ingest" / "dataset.json").exists()


def test_explicit_run_ids_select_inputs(sandbox):
    assert run(sandbox, "ingest") == 0
    assert run(sandbox, "split") == 0
    # second split; training should accept the first one when asked
    assert run(sandbox, "split", "--set", "split.n_holdout=6") == 0
    assert (
        run(
            sandbox,
            "train",
            "--regime",
            "skf",
            "--dataset-run",
            "0001-ingest",
            "--split-run",
            "0002-split",
        )
        == 0
    )
    record = json.loads((runs_named(sandbox, "train")[-1] / "run.json").read_text())
    assert record["split_run"] == "0002-split"
    manifest = SplitManifest.load(sandbox["workspace"] / "runs" / "0002-split" / "split_manifest.json")
    assert record["manifest_ref"] == manifest.digest()


def test_dataset_store_round_trips_through_ingest(sandbox):
    assert run(sandbox, "ingest") == 0
    stored = Dataset.load(runs_named(sandbox, "ingest")[-1] / "dataset.json")
    original = sandbox["dataset"]
    assert stored.ids == original.ids
    assert [r.pk_value for r in stored] == [r.pk_value for r in original]


def test_usage_errors_exit_one(capsys):
    assert main(["not-a-command"]) == 1
    assert main([]) == 1
    assert main(["--version"]) == 0
    capsys.readouterr()
