import json
from pathlib import Path

import pytest

from advlab.cli import main
from advlab.reportio import ingest_prediction_log

GOLDEN_DIR = Path(__file__).resolve().parent / "goldens"

FAST_CONFIG = {
    "seed": 11,
    "train_per_class": 40,
    "source_per_class": 8,
    "epochs": 60,
    "batch_size": 16,
    "cw": {"kappa": 20.0, "max_iters": 80},
}


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    """One trained+attacked experiment shared by the read-only CLI tests."""
    out = tmp_path_factory.mktemp("exp")
    cfg = out / "config.json"
    cfg.write_text(json.dumps(FAST_CONFIG), encoding="utf-8")
    assert main(["train", "--config", str(cfg), "--out", str(out)]) == 0
    assert main(["attack", "--config", str(cfg), "--out", str(out)]) == 0
    return out, cfg


def test_train_writes_checkpoints_and_summary(workdir):
    out, _ = workdir
    names = {p.name for p in (out / "checkpoints").iterdir()}
    assert names == {"mlp-a.ckpt", "mlp-b.ckpt", "mlp-c.ckpt"}
    summary = json.loads((out / "train_summary.json").read_text())
    assert all(acc >= 0.95 for acc in summary["train_accuracy"].values())


def test_attack_writes_log_and_meta(workdir):
    out, _ = workdir
    records = ingest_prediction_log(out / "prediction_log.csv")
    assert records
    meta = json.loads((out / "attack_meta.json").read_text())
    assert meta["sources_attempted"] > 0
    assert sum(meta["source_class_counts"].values()) == meta["sources_attempted"]


def test_attack_then_report_pipeline_closure(workdir, tmp_path):
    out, _ = workdir
    rep = tmp_path / "rep"
    assert main(["report", "--log", str(out / "prediction_log.csv"),
                 "--hierarchy", "fixture", "--out", str(rep)]) == 0
    produced = {p.name for p in rep.iterdir()}
    assert "collection_report.csv" in produced
    assert "topk_misclassification.csv" in produced
    assert any(n.startswith("transfer_matrix_pgd_untargeted") for n in produced)
    root_row = (rep / "collection_report.csv").read_text().splitlines()[1]
    assert root_row.split(",")[6] == "100.0"


def test_rerun_is_byte_identical(tmp_path):
    cfg = tmp_path / "config.json"
    cfg.write_text(json.dumps(FAST_CONFIG), encoding="utf-8")
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert main(["train", "--config", str(cfg), "--out", str(out)]) == 0
        assert main(["attack", "--config", str(cfg), "--out", str(out)]) == 0
        assert main(["report", "--log", str(out / "prediction_log.csv"),
                     "--hierarchy", "fixture", "--out", str(out / "rep")]) == 0
        outs.append(out)
    a, b = outs
    for rel in ["prediction_log.csv", "train_summary.json", "attack_meta.json",
                "checkpoints/mlp-a.ckpt", "rep/collection_report.csv",
                "rep/topk_misclassification.csv", "rep/collection_report.json"]:
        assert (a / rel).read_bytes() == (b / rel).read_bytes(), rel


def test_report_matches_oracle_goldens(tmp_path):
    rep = tmp_path / "rep"
    assert main(["report", "--log", str(GOLDEN_DIR / "fixture_log.csv"),
                 "--hierarchy", "fixture", "--out", str(rep)]) == 0
    expected = GOLDEN_DIR / "expected"
    names = sorted(p.name for p in expected.iterdir())
    assert names == sorted(p.name for p in rep.iterdir())
    for name in names:
        assert (rep / name).read_bytes() == (expected / name).read_bytes(), name


def test_epsilon_zero_attack_produces_empty_log(tmp_path, capsys):
    cfg_doc = dict(FAST_CONFIG, pgd={"epsilon": 0.0, "max_iters": 5}, cw=None)
    cfg = tmp_path / "config.json"
    cfg.write_text(json.dumps(cfg_doc), encoding="utf-8")
    assert main(["train", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    assert main(["attack", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    assert ingest_prediction_log(tmp_path / "prediction_log.csv") == []
    assert "0/" in capsys.readouterr().out


def test_report_on_empty_log_exits_zero(tmp_path):
    log = tmp_path / "empty.csv"
    log.write_text("item_id,true_class,source_model,attack,target_model,"
                   "clean_top_k,adv_pred,target_class\n", encoding="utf-8")
    rep = tmp_path / "rep"
    assert main(["report", "--log", str(log), "--hierarchy", "fixture",
                 "--out", str(rep)]) == 0
    lines = (rep / "collection_report.csv").read_text().splitlines()
    assert len(lines) == 8  # header + 7 fixture collections, all zero
    assert lines[1].split(",")[6] == "—"


def test_missing_checkpoint_exit_code(tmp_path, capsys):
    cfg = tmp_path / "config.json"
    cfg.write_text(json.dumps(FAST_CONFIG), encoding="utf-8")
    code = main(["attack", "--config", str(cfg), "--out", str(tmp_path)])
    assert code == 1
    assert "mlp-a.ckpt" in capsys.readouterr().err


def test_bad_config_exit_code(tmp_path, capsys):
    cfg = tmp_path / "config.json"
    cfg.write_text(json.dumps({"unknown_key": 5}), encoding="utf-8")
    assert main(["train", "--config", str(cfg), "--out", str(tmp_path)]) == 1
    assert "unknown config keys" in capsys.readouterr().err


def test_inconsistent_log_exit_code(tmp_path, capsys):
    log = tmp_path / "log.csv"
    log.write_text("item_id,true_class,source_model,attack,target_model,"
                   "clean_top_k,adv_pred,target_class\n"
                   "a,1,s,PGD,t,2;1,0,\n", encoding="utf-8")
    assert main(["report", "--log", str(log), "--hierarchy", "fixture",
                 "--out", str(tmp_path / "rep")]) == 1
    assert "line 2" in capsys.readouterr().err


def test_usage_error_exit_code():
    assert main(["report"]) == 1  # --log is required


def test_duplicate_zoo_aborts_attack(tmp_path, capsys):
    cfg_doc = dict(FAST_CONFIG, models=[
        {"name": "dup-a", "hidden": [16], "seed": 101},
        {"name": "dup-b", "hidden": [16], "seed": 101},
    ])
    cfg = tmp_path / "config.json"
    cfg.write_text(json.dumps(cfg_doc), encoding="utf-8")
    assert main(["train", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    assert main(["attack", "--config", str(cfg), "--out", str(tmp_path)]) == 1
    err = capsys.readouterr().err
    assert "dup-a" in err and "dup-b" in err


def test_zero_epoch_training_writes_untrained_checkpoints(tmp_path):
    cfg = tmp_path / "config.json"
    cfg.write_text(json.dumps(dict(FAST_CONFIG, epochs=0)), encoding="utf-8")
    assert main(["train", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    from advlab.models import load_model

    model = load_model(tmp_path / "checkpoints" / "mlp-a.ckpt")
    assert model.epochs_trained == 0
    assert abs(model.final_train_accuracy - 1 / 8) < 0.15


def test_training_divergence_exit_code(tmp_path, capsys):
    cfg = tmp_path / "config.json"
    cfg.write_text(json.dumps({"lr": 1e308, "epochs": 3, "train_per_class": 10}),
                   encoding="utf-8")
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        assert main(["train", "--config", str(cfg), "--out", str(tmp_path)]) == 2
    assert "mlp-a" in capsys.readouterr().err


def test_ingest_round_trip(workdir, tmp_path, capsys):
    out, _ = workdir
    src = out / "prediction_log.csv"
    dst = tmp_path / "normalized.csv"
    assert main(["ingest", "--log", str(src), "--out", str(dst)]) == 0
    assert dst.read_bytes() == src.read_bytes()
    assert "records" in capsys.readouterr().out


def test_verify_quick_passes(capsys):
    assert main(["verify", "--quick", "--seed", "5"]) == 0
    out = capsys.readouterr().out
    assert out.count("[PASS]") == 3
    assert "seed=5" in out


def test_targeted_mode_produces_target_column(tmp_path):
    cfg_doc = dict(FAST_CONFIG, source_per_class=4, cw=None)
    cfg = tmp_path / "config.json"
    cfg.write_text(json.dumps(cfg_doc), encoding="utf-8")
    assert main(["train", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    assert main(["attack", "--config", str(cfg), "--out", str(tmp_path),
                 "--mode", "targeted"]) == 0
    records = ingest_prediction_log(tmp_path / "prediction_log.csv")
    assert records and all(r.target_class == (r.true_class + 1) % 8 for r in records)
