import json

import numpy as np
import pytest

from warga.cli import ExperimentConfig, main, parse_seeds, read_embedding, write_embedding

FAST = ["--epochs", "8", "--eval-every", "4", "--kmeans-restarts", "2"]
SEED_FILES = {"checkpoint.json", "embedding.txt", "embedding.npy", "losses.csv", "metrics.json",
              "timing.json"}


@pytest.fixture(scope="module")
def sbm_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("sbm")
    assert main(["synth", "--blocks", "12,12", "--p-in", "0.5", "--p-out", "0.05", "--seed", "1",
                 "--out", str(d)]) == 0
    return d


def _read(path):
    return json.loads(path.read_text(encoding="utf-8"))


def test_parse_seeds():
    assert parse_seeds("0..3") == [0, 1, 2, 3]
    assert parse_seeds("4") == [4]
    assert parse_seeds("1,5,2") == [1, 5, 2]
    with pytest.raises(ValueError):
        ExperimentConfig(data="d", train=None, seeds=[1, 1], out="o")
    with pytest.raises(ValueError):
        ExperimentConfig(data="d", train=None, seeds=[], out="o")


def test_embedding_text_roundtrip(tmp_path):
    z = np.random.default_rng(0).standard_normal((5, 3))
    write_embedding(tmp_path / "e.txt", z)
    assert np.array_equal(read_embedding(tmp_path / "e.txt"), z)
    assert np.array_equal(np.load(tmp_path / "e.npy"), z)
    assert (tmp_path / "e.txt").read_text().splitlines()[0] == "5 3"


def test_synth_manifest(sbm_dir):
    m = _read(sbm_dir / "manifest.json")
    assert m["n_nodes"] == 24 and m["n_classes"] == 2 and m["n_features"] == 24


def test_train_writes_artifacts_and_is_deterministic(sbm_dir, tmp_path):
    for run in ("a", "b"):
        assert main(["train", "--data", str(sbm_dir), "--out", str(tmp_path / run),
                     "--seeds", "0..1", *FAST]) == 0
    for run in ("a", "b"):
        out = tmp_path / run
        assert {"config.json", "report.json", "report.txt"} <= {p.name for p in out.iterdir()}
        for s in (0, 1):
            assert SEED_FILES <= {p.name for p in (out / f"seed_{s}").iterdir()}
    for s in (0, 1):
        a = (tmp_path / "a" / f"seed_{s}" / "metrics.json").read_bytes()
        assert a == (tmp_path / "b" / f"seed_{s}" / "metrics.json").read_bytes()
    cfg = _read(tmp_path / "a" / "config.json")
    assert cfg["train"]["epochs"] == 8 and cfg["seeds"] == [0, 1] and "version" in cfg
    m = _read(tmp_path / "a" / "seed_0" / "metrics.json")
    assert set(m) == {"seed", "split_seed", "model", "test", "val", "clustering"}
    assert set(m["clustering"]) == {"acc", "nmi", "ari"}
    rep = _read(tmp_path / "a" / "report.json")
    assert len(rep["per_seed"]) == 2 and set(rep["mean"]) == {"auc", "ap", "acc", "nmi", "ari"}
    losses = (tmp_path / "a" / "seed_0" / "losses.csv").read_text().splitlines()
    assert len(losses) == 9 and losses[0].startswith("epoch,")


def test_eval_reproduces_training_metrics(sbm_dir, tmp_path):
    assert main(["train", "--data", str(sbm_dir), "--out", str(tmp_path / "r"), *FAST]) == 0
    run = tmp_path / "r" / "seed_0"
    assert main(["eval", "--run", str(run), "--data", str(sbm_dir),
                 "--out", str(tmp_path / "eval.json")]) == 0
    assert _read(tmp_path / "eval.json") == _read(run / "metrics.json")


def test_eval_missing_checkpoint_exits_cleanly(sbm_dir, tmp_path, caplog):
    assert main(["eval", "--run", str(tmp_path / "nothing"), "--data", str(sbm_dir)]) == 1
    assert "checkpoint not found" in caplog.text


def test_config_file_and_flag_precedence(sbm_dir, tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"epochs": 3, "hidden": 8, "lam": 0.5}))
    assert main(["train", "--data", str(sbm_dir), "--out", str(tmp_path / "r"),
                 "--config", str(cfg), "--hidden", "6", "--kmeans-restarts", "1"]) == 0
    t = _read(tmp_path / "r" / "config.json")["train"]
    assert (t["epochs"], t["hidden"], t["lam"]) == (3, 6, 0.5)
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"epochz": 3}))
    assert main(["train", "--data", str(sbm_dir), "--out", str(tmp_path / "x"),
                 "--config", str(bad)]) == 1


def test_baseline_model_via_cli(sbm_dir, tmp_path):
    assert main(["train", "--data", str(sbm_dir), "--out", str(tmp_path / "v"), "--model", "vgae",
                 *FAST]) == 0
    assert _read(tmp_path / "v" / "seed_0" / "metrics.json")["model"] == "vgae"


def test_one_cell_sweep_equals_train(sbm_dir, tmp_path):
    args = ["--data", str(sbm_dir), "--seeds", "0..1", *FAST]
    assert main(["sweep", "--out", str(tmp_path / "s"), "--first", "8", "--second", "4", *args]) == 0
    assert main(["train", "--out", str(tmp_path / "t"), "--hidden", "8", "--embed", "4", *args]) == 0
    grid = _read(tmp_path / "s" / "sweep.json")
    rep = _read(tmp_path / "t" / "report.json")
    assert grid["auc"] == [[rep["mean"]["auc"]]] and grid["ap"] == [[rep["mean"]["ap"]]]


def test_sweep_grid_populated(sbm_dir, tmp_path):
    assert main(["sweep", "--data", str(sbm_dir), "--out", str(tmp_path / "s"),
                 "--first", "4,8", "--second", "2,4,6", "--epochs", "3", "--kmeans-restarts", "1"]) == 0
    grid = _read(tmp_path / "s" / "sweep.json")
    for metric in ("auc", "ap"):
        v = np.asarray(grid[metric])
        assert v.shape == (2, 3) and np.all(np.isfinite(v))
        rows = (tmp_path / "s" / f"sweep_{metric}.csv").read_text().splitlines()
        assert len(rows) == 3 and rows[0] == "first\\second,2,4,6"


def test_prepare_unknown_layout_exits_cleanly(tmp_path):
    (tmp_path / "raw").mkdir()
    assert main(["prepare", str(tmp_path / "raw"), str(tmp_path / "out")]) == 1


def test_parallel_workers_match_sequential(sbm_dir, tmp_path):
    args = ["--data", str(sbm_dir), "--seeds", "0..1", *FAST]
    assert main(["train", "--out", str(tmp_path / "seq"), *args]) == 0
    assert main(["train", "--out", str(tmp_path / "par"), "--workers", "2", *args]) == 0
    for s in (0, 1):
        a = (tmp_path / "seq" / f"seed_{s}" / "metrics.json").read_bytes()
        assert a == (tmp_path / "par" / f"seed_{s}" / "metrics.json").read_bytes()
