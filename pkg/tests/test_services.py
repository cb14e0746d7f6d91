import json

import pytest

from src.models.schemas import TaskSpec, TrainHyper
from src.services import DataService, TrainingService
from src.training.checkpoint import load_checkpoint
from src.utils.errors import DivergenceError
from tests.helpers import small_config


def quick_task():
    return TaskSpec(kind="local_parity", seq_len=6, n_train=32, n_test=16)


def test_training_service_writes_artifacts(tmp_path):
    cfg = small_config(masks=[["band2", "band2"]] * 2)
    result = TrainingService().run(quick_task(), cfg, TrainHyper(epochs=2, batch_size=8), 7, tmp_path / "run",
                                   progress=False)
    out = tmp_path / "run"
    lines = (out / "metrics.csv").read_text().splitlines()
    assert lines[0] == "epoch,train_acc,test_acc,loss"
    assert [line.split(",")[0] for line in lines[1:]] == ["1", "2"]
    assert (out / "positions.csv").read_text().splitlines()[0] == "position,test_acc"
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["status"] == "complete" and manifest["seed"] == 7
    assert manifest["outputs"] == {"checkpoint": "checkpoint.npz", "metrics": "metrics.csv", "positions": "positions.csv"}
    model, task = load_checkpoint(out / "checkpoint.npz")
    assert model.config == cfg and task == quick_task()
    assert result.checkpoint_path == str(out / "checkpoint.npz")


def test_training_reruns_are_byte_identical(tmp_path):
    cfg = small_config()
    hyper = TrainHyper(epochs=2, batch_size=8)
    for name in ("a", "b"):
        TrainingService().run(quick_task(), cfg, hyper, 13, tmp_path / name, progress=False)
    for artifact in ("metrics.csv", "positions.csv", "checkpoint.npz"):
        assert (tmp_path / "a" / artifact).read_bytes() == (tmp_path / "b" / artifact).read_bytes()


def test_diverged_run_keeps_partial_metrics(tmp_path):
    out = tmp_path / "diverged"
    with pytest.raises(DivergenceError):
        TrainingService().run(quick_task(), small_config(), TrainHyper(epochs=3, lr=1e300), 1, out, progress=False)
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["status"] == "diverged" and "non-finite" in manifest["error"]
    assert (out / "metrics.csv").read_text().splitlines()[0] == "epoch,train_acc,test_acc,loss"
    assert not (out / "checkpoint.npz").exists()


def test_data_service_writes_jsonl(tmp_path):
    task = TaskSpec(kind="first_token_broadcast", seq_len=5, vocab_size=3, n_train=4, n_test=2, seed=3)
    path = DataService().generate(task, tmp_path / "data")
    records = [json.loads(line) for line in path.read_text().splitlines()]
    assert len(records) == 6
    assert all(r["labels"] == [int(r["tokens"][0])] * 5 for r in records)
    assert records[0]["edges"] == [[0, 1], [0, 2], [0, 3], [0, 4]]
    manifest = json.loads((tmp_path / "data" / "manifest.json").read_text())
    assert manifest["status"] == "complete" and manifest["inputs"]["label_rule"] == "label[i] = tok[0]"


def test_data_service_empty_dataset(tmp_path):
    task = TaskSpec(kind="copy", seq_len=4, vocab_size=3, n_train=0, n_test=0)
    path = DataService().generate(task, tmp_path / "empty")
    assert path.read_text() == ""
    assert json.loads((tmp_path / "empty" / "manifest.json").read_text())["outputs"] == {"data": "data.jsonl"}
