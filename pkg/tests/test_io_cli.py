import json

import numpy as np
import pytest

from rolt import io
from rolt.cli import main
from rolt.datasim import BenchmarkSpec, make_benchmark
from rolt.trainer import TrainConfig, train

SMALL = BenchmarkSpec(base_count=200, test_per_class=50)


def test_embeddings_round_trip(tmp_path, rng):
    x = rng.standard_normal((7, 3))
    io.write_embeddings(tmp_path / "e.f64", x)
    assert io.read_embeddings(tmp_path / "e.f64").tobytes() == x.tobytes()
    raw = (tmp_path / "e.f64").read_bytes()
    assert len(raw) == 16 + 7 * 3 * 8


def test_truncated_embeddings(tmp_path, rng):
    io.write_embeddings(tmp_path / "e.f64", rng.standard_normal((4, 2)))
    data = (tmp_path / "e.f64").read_bytes()
    (tmp_path / "e.f64").write_bytes(data[:-8])
    with pytest.raises(ValueError):
        io.read_embeddings(tmp_path / "e.f64")


def test_dataset_round_trip(tmp_path):
    train_ds, _ = make_benchmark(10, 0.3, 0, SMALL)
    io.write_dataset(train_ds, tmp_path / "d")
    back = io.read_dataset(tmp_path / "d")
    assert back.fingerprint() == train_ds.fingerprint()
    assert np.array_equal(back.true_labels, train_ds.true_labels)
    assert (tmp_path / "d" / "noisy_labels.csv").read_text().split()[0] == str(train_ds.noisy_labels[0] + 1)


def test_csv_embeddings_accepted(tmp_path):
    d = tmp_path / "d"
    d.mkdir()
    (d / "meta.json").write_text(json.dumps({"K": 2, "N": 3, "D": 2}))
    (d / "embeddings.csv").write_text("1,0\n0,1\n1,1\n")
    (d / "noisy_labels.csv").write_text("1\n2\n2\n")
    ds = io.read_dataset(d)
    assert ds.noisy_labels.tolist() == [0, 1, 1] and ds.true_labels is None


def test_zero_labels_rejected(tmp_path):
    d = tmp_path / "d"
    d.mkdir()
    (d / "meta.json").write_text(json.dumps({"K": 2}))
    (d / "embeddings.csv").write_text("1,0\n")
    (d / "noisy_labels.csv").write_text("0\n")
    with pytest.raises(ValueError):
        io.read_dataset(d)


def test_checkpoint_and_exports(tmp_path):
    train_ds, test = make_benchmark(10, 0.3, 0, SMALL)
    res = train(train_ds, TrainConfig(warmup_epochs=2, robust_epochs=2), test)
    io.save_model(res.model, tmp_path / "m.json")
    m = io.load_model(tmp_path / "m.json")
    assert np.array_equal(m.weights, res.model.weights)
    io.save_prototypes(res.prototypes, tmp_path / "p.json")
    assert np.array_equal(io.load_prototypes(tmp_path / "p.json").centers, res.prototypes.centers)
    out = res.last_output
    io.write_split_csv(tmp_path / "s.csv", train_ds.noisy_labels, out.split.is_clean(), out.detection)
    labels, flag = io.read_split_csv(tmp_path / "s.csv")
    assert np.array_equal(labels, train_ds.noisy_labels) and np.array_equal(flag, out.split.is_clean())
    io.write_labels_csv(tmp_path / "l.csv", train_ds.noisy_labels, out.targets)
    flag2, soft = io.read_labels_csv(tmp_path / "l.csv")
    assert np.array_equal(soft, out.targets.targets) and np.array_equal(flag2, flag)
    io.write_gmm_json(tmp_path / "g.json", out.detection.fits)
    fits = io.read_gmm_json(tmp_path / "g.json")
    assert np.array_equal(fits[0].means, out.detection.fits[0].means)
    io.write_report_csv(tmp_path / "r.csv", res.report, 10)
    rows = io.read_report_csv(tmp_path / "r.csv")
    assert len(rows) == 4 and float(rows[-1]["loss"]) == res.report.last().loss


def test_cli_end_to_end(tmp_path, capsys):
    data = tmp_path / "data"
    assert main(["simulate", "--base", "200", "--rho", "10", "--gamma", "0.3", "--test-per-class", "50", "--out", str(data)]) == 0
    assert main(["detect", "--data", str(data), "--out", str(tmp_path / "det")]) == 0
    assert (tmp_path / "det" / "split.csv").exists() and (tmp_path / "det" / "gmm.json").exists()
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"warmup_epochs": 3, "robust_epochs": 2}))
    assert main(["train", "--data", str(data), "--config", str(cfg), "--out", str(tmp_path / "run")]) == 0
    for name in ("report.csv", "model.json", "prototypes.json", "split.csv", "labels.csv", "run.json"):
        assert (tmp_path / "run" / name).exists()
    assert main(["eval", "--run", str(tmp_path / "run")]) == 0
    metrics = json.loads((tmp_path / "run" / "metrics.json").read_text())
    assert 0 <= metrics["erm_acc"] <= 1 and "det_overall_precision" in metrics
    assert "erm_acc" in capsys.readouterr().out


def test_cli_sweep_and_report(tmp_path):
    grid = tmp_path / "grid.json"
    grid.write_text(
        json.dumps(
            {
                "rho": [10],
                "gamma": [0.3],
                "methods": ["erm", "rolt"],
                "seeds": [0],
                "config": {"warmup_epochs": 2, "robust_epochs": 2},
                "benchmark": {"base_count": 200, "test_per_class": 50},
            }
        )
    )
    out = tmp_path / "sweep"
    assert main(["sweep", "--grid", str(grid), "--out", str(out)]) == 0
    assert len(list((out / "runs").glob("*/metrics.json"))) == 2
    assert main(["report", "--grid", str(out)]) == 0
    for name in ("table.csv", "table1.csv", "per_class_recall.csv", "detection_per_class.csv"):
        assert (out / name).exists()
    header = (out / "table1.csv").read_text().splitlines()[0]
    assert header == "method,rho10_gamma0.3"


def test_cli_rejects_unknown_config(tmp_path):
    data = tmp_path / "data"
    main(["simulate", "--base", "50", "--rho", "2", "--test-per-class", "5", "--out", str(data)])
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"epochs": 3}))
    with pytest.raises(ValueError):
        main(["train", "--data", str(data), "--config", str(cfg), "--out", str(tmp_path / "r")])
