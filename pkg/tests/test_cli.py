import json
import os

import numpy as np
import pytest

from dytag.cli import main


@pytest.fixture
def tiny_config_path(tmp_path):
    cfg = {
        "train": {
            "iota": 20.0, "seed": 0, "batch_size": 40, "max_epochs": 2,
            "patience": 5, "lr": 1e-3, "alpha": 0.2, "k_neighbors": 4,
            "L_behaviors": 4, "d_t": 6, "d_internal": 8, "d_struct": 12,
            "attn_heads": 2, "ffn_hidden": 10, "dropout": 0.1,
            "decoder_hidden": 10,
        },
        "synth": {
            "num_nodes": 30, "num_communities": 3, "num_events": 240,
            "feat_dim": 6, "seed": 0,
        },
    }
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg))
    return str(path)


@pytest.fixture
def data_dir(tiny_config_path, tmp_path):
    out = str(tmp_path / "data")
    assert main(["gen-synth", "--config", tiny_config_path, "--out", out]) == 0
    return out


def test_gen_synth_writes_dataset(data_dir):
    for name in ("edges.csv", "node_feats.fbin", "edge_feats.fbin",
                 "ground_truth.json"):
        assert os.path.exists(os.path.join(data_dir, name))


def test_train_then_eval_roundtrip(tiny_config_path, data_dir, tmp_path, capsys):
    run = str(tmp_path / "run")
    assert main(["train", "--config", tiny_config_path, "--data", data_dir,
                 "--out", run]) == 0
    hist = open(os.path.join(run, "history.csv")).read().strip().split("\n")
    assert hist[0] == "epoch,train_loss,align_loss,dev_auc"
    assert len(hist) == 3  # one row per epoch
    report = json.load(open(os.path.join(run, "report.json")))
    assert report["seed"] == 0
    assert set(report["input_hashes"]) == {"edges.csv", "node_feats.fbin",
                                           "edge_feats.fbin"}
    assert report["config"]["train"]["alpha"] == 0.2

    out2 = str(tmp_path / "eval")
    assert main(["eval", "--config", tiny_config_path, "--data", data_dir,
                 "--params", os.path.join(run, "params.npz"),
                 "--out", out2]) == 0
    final = json.loads(capsys.readouterr().out.strip().split("\n")[-1])
    assert 0.0 <= final["transductive_auc"] <= 1.0


def test_train_deterministic_artifacts(tiny_config_path, data_dir, tmp_path):
    runs = []
    for name in ("a", "b"):
        out = str(tmp_path / name)
        assert main(["train", "--config", tiny_config_path, "--data", data_dir,
                     "--out", out]) == 0
        runs.append((open(os.path.join(out, "history.csv"), "rb").read(),
                     open(os.path.join(out, "report.json"), "rb").read()))
    assert runs[0][0] == runs[1][0]
    assert runs[0][1] == runs[1][1]


def test_unknown_config_key_rejected(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"train": {"iota": 1.0, "learning_rate": 0.1}}))
    code = main(["train", "--config", str(path), "--data", "x", "--out", "y"])
    assert code == 1
    assert "learning_rate" in capsys.readouterr().err


def test_unknown_top_level_key_rejected(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"trian": {}}))
    assert main(["gen-synth", "--config", str(path), "--out", "z"]) == 1
    assert "trian" in capsys.readouterr().err


def test_unknown_subcommand_exits_1(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 1


def test_missing_data_is_runtime_failure(tiny_config_path, tmp_path):
    code = main(["train", "--config", tiny_config_path,
                 "--data", str(tmp_path / "nowhere"), "--out", str(tmp_path / "o")])
    assert code == 2


def test_seed_override_changes_artifacts(tiny_config_path, data_dir, tmp_path):
    outs = []
    for seed in ("0", "99"):
        out = str(tmp_path / f"s{seed}")
        assert main(["train", "--config", tiny_config_path, "--data", data_dir,
                     "--out", out, "--seed", seed]) == 0
        outs.append(open(os.path.join(out, "history.csv")).read())
    assert outs[0] != outs[1]


def test_variant_flag(tiny_config_path, data_dir, tmp_path):
    out = str(tmp_path / "v")
    assert main(["train", "--config", tiny_config_path, "--data", data_dir,
                 "--out", out, "--variant", "structural_only"]) == 0
    report = json.load(open(os.path.join(out, "report.json")))
    assert report["config"]["train"]["ablation_variant"] == "structural_only"
    hist = open(os.path.join(out, "history.csv")).read()
    align_vals = [float(line.split(",")[2]) for line in hist.strip().split("\n")[1:]]
    assert all(v == 0.0 for v in align_vals)


def test_grad_check_command(capsys):
    assert main(["grad-check", "--seed", "3"]) == 0
    out = capsys.readouterr().out
    assert "max relative gradient error" in out


def test_mi_check_command(capsys):
    assert main(["mi-check", "--trials", "50"]) == 0
    out = capsys.readouterr().out
    assert "max |lhs - rhs|" in out


def test_analyze_kde_orig_mode(tiny_config_path, data_dir, tmp_path):
    out = str(tmp_path / "kde")
    assert main(["analyze-kde", "--config", tiny_config_path, "--data", data_dir,
                 "--out", out]) == 0
    for name in ("textual", "temporal", "structural"):
        path = os.path.join(out, f"kde_{name}_orig.csv")
        assert os.path.exists(path)
        lines = open(path).read().strip().split("\n")
        assert lines[0] == "x,density"
        assert len(lines) > 10


def test_analyze_kde_token_mode(tiny_config_path, data_dir, tmp_path):
    run = str(tmp_path / "run")
    assert main(["train", "--config", tiny_config_path, "--data", data_dir,
                 "--out", run]) == 0
    out = str(tmp_path / "kde")
    assert main(["analyze-kde", "--config", tiny_config_path, "--data", data_dir,
                 "--params", os.path.join(run, "params.npz"), "--out", out]) == 0
    for name in ("textual", "temporal", "structural", "fused"):
        assert os.path.exists(os.path.join(out, f"kde_{name}_token.csv"))


def test_alpha_sweep_csv_shape(tiny_config_path, data_dir, tmp_path):
    out = str(tmp_path / "sweep")
    assert main(["alpha-sweep", "--config", tiny_config_path, "--data", data_dir,
                 "--out", out]) == 0
    lines = open(os.path.join(out, "alpha_sweep.csv")).read().strip().split("\n")
    assert lines[0] == "alpha,inductive_auc"
    assert len(lines) == 6
    alphas = [float(line.split(",")[0]) for line in lines[1:]]
    assert alphas == [0.1, 0.2, 0.3, 0.4, 0.5]


def test_train_edge_classification_task(tiny_config_path, data_dir, tmp_path):
    cfg = json.load(open(tiny_config_path))
    cfg["train"]["task"] = "edge_class"
    cfg["train"]["max_epochs"] = 1
    path = tmp_path / "edge.json"
    path.write_text(json.dumps(cfg))
    out = str(tmp_path / "edge_run")
    assert main(["train", "--config", str(path), "--data", data_dir,
                 "--out", out]) == 0
    report = json.load(open(os.path.join(out, "report.json")))
    assert 0.0 <= report["metrics"]["weighted_precision"] <= 1.0


def test_ablate_csv_lists_all_variants(tiny_config_path, data_dir, tmp_path):
    from dytag.model import VARIANTS
    out = str(tmp_path / "abl")
    assert main(["ablate", "--config", tiny_config_path, "--data", data_dir,
                 "--out", out]) == 0
    lines = open(os.path.join(out, "ablation.csv")).read().strip().split("\n")
    assert lines[0] == "variant,inductive_auc"
    assert [line.split(",")[0] for line in lines[1:]] == list(VARIANTS)
