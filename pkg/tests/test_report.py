import json

import pytest

from mier.report import (
    RunRecord,
    build_comparison,
    discover_runs,
    format_table,
    write_comparison_csv,
)
from mier.training import MetricsRecord, write_metrics_csv


def fake_run(tmp_path, name, seed, mier, accuracy, entropy, bound):
    run_dir = tmp_path / name
    run_dir.mkdir(parents=True)
    final = {
        "epoch": 9, "test_accuracy": accuracy,
        "mean_classifier_entropy": entropy, "elbo_bound": bound,
        "mi_estimate": 0.1, "objective_value": 0.0, "lr": 0.0,
        "kl_weight": 1.0,
    }
    (run_dir / "summary.json").write_text(json.dumps({
        "seed": seed, "mier_enabled": mier, "epochs": 10, "best_epoch": 9,
        "best_val_accuracy": accuracy, "eval_z_samples": 100, "final": final,
    }))
    records = [MetricsRecord(epoch=e, test_accuracy=accuracy,
                             mean_classifier_entropy=entropy, elbo_bound=bound,
                             mi_estimate=0.1, objective_value=-1.0, lr=3e-4,
                             kl_weight=1.0) for e in range(3)]
    write_metrics_csv(records, run_dir / "metrics.csv")
    return run_dir


def test_discover_sorts_and_reads_history(tmp_path):
    fake_run(tmp_path, "m1", seed=1, mier=True, accuracy=0.9, entropy=0.2,
             bound=-1.5)
    fake_run(tmp_path, "b1", seed=1, mier=False, accuracy=0.8, entropy=0.9,
             bound=-1.4)
    runs = discover_runs([tmp_path])
    assert [r.arm for r in runs] == ["baseline", "mier"]
    assert len(runs[0].history) == 3


def test_comparison_rows_and_medians(tmp_path):
    fake_run(tmp_path, "b1", 1, False, 0.80, 0.9, -1.40)
    fake_run(tmp_path, "b2", 2, False, 0.84, 0.8, -1.44)
    fake_run(tmp_path, "b3", 3, False, 0.90, 0.7, -1.50)
    fake_run(tmp_path, "m1", 1, True, 0.85, 0.4, -1.42)
    fake_run(tmp_path, "m2", 2, True, 0.88, 0.3, -1.46)
    fake_run(tmp_path, "m3", 3, True, 0.95, 0.2, -1.52)
    rows = build_comparison(discover_runs([tmp_path]))
    assert len(rows) == 4
    medians = rows[-1]
    assert medians["seed"] == "median"
    assert medians["accuracy_baseline"] == pytest.approx(0.84)
    assert medians["accuracy_mier"] == pytest.approx(0.88)
    assert medians["entropy_mier"] == pytest.approx(0.3)


def test_missing_arm_leaves_blank_cells(tmp_path):
    fake_run(tmp_path, "b1", 5, False, 0.8, 0.9, -1.4)
    rows = build_comparison(discover_runs([tmp_path]))
    assert rows[0]["accuracy_mier"] is None
    table = format_table(rows)
    assert "0.8000" in table and "-" in table
    write_comparison_csv(rows, tmp_path / "cmp.csv")
    lines = (tmp_path / "cmp.csv").read_text().splitlines()
    assert lines[1].split(",")[2] == ""


def test_empty_directories_rejected(tmp_path):
    (tmp_path / "empty").mkdir()
    with pytest.raises(FileNotFoundError):
        discover_runs([tmp_path / "empty"])


def test_run_record_arm_labels():
    record = RunRecord(path=None, seed=0, mier_enabled=True, final={},
                       history=[])
    assert record.arm == "mier"
