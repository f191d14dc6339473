import json

import pytest

from convemo import model as M
from convemo.checkpoint import load_params, save_params
from convemo.cli import main
from convemo.data import load_dataset


def run(*argv) -> int:
    return main(list(argv))


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("synthdata")
    code = run("synth", "--out", str(out), "--seed", "3",
               "--dialogues", "12", "4", "4", "--length", "3", "5",
               "--d-x", "8", "--d-cs", "6")
    assert code == 0
    return out


def test_synth_writes_loadable_dataset(synth_dir):
    dataset = load_dataset(synth_dir / "manifest.json")
    assert len(dataset.train) == 12
    assert len(dataset.val) == 4
    assert len(dataset.test) == 4
    assert (synth_dir / "config.json").exists()


def test_synth_is_reproducible(tmp_path):
    for sub in ("a", "b"):
        assert run("synth", "--out", str(tmp_path / sub), "--seed", "11",
                   "--dialogues", "5", "2", "2") == 0
    for name in ("train.jsonl", "val.jsonl", "test.jsonl", "manifest.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_train_writes_artifacts_and_checkpoint_reloads(synth_dir, tmp_path):
    out = tmp_path / "run"
    code = run("train", "--manifest", str(synth_dir / "manifest.json"),
               "--out", str(out), "--seed", "1", "--hidden", "8",
               "--epochs", "2", "--lr", "0.003")
    assert code == 0
    assert (out / "checkpoint.bin").exists()
    history = json.loads((out / "history.json").read_text())
    assert len(history) == 2
    report = json.loads((out / "report.json").read_text())
    assert 0.0 <= report["accuracy"] <= 1.0

    # save/load equivalence: the reloaded checkpoint reproduces the report
    params = load_params(out / "checkpoint.bin")
    from convemo.training import evaluate
    dataset = load_dataset(synth_dir / "manifest.json")
    again = evaluate(params, dataset.test, dataset.manifest)
    assert again.to_dict() == report


def test_train_zero_epochs_equals_seeded_init(synth_dir, tmp_path):
    out = tmp_path / "zero"
    code = run("train", "--manifest", str(synth_dir / "manifest.json"),
               "--out", str(out), "--seed", "5", "--hidden", "8", "--epochs", "0")
    assert code == 0
    dims = M.ModelDims(d_x=8, d_cs=6, hidden=8, num_classes=4)
    expected = M.init_params(dims, seed=5)
    save_params(expected, tmp_path / "init.bin")
    assert (out / "checkpoint.bin").read_bytes() == (tmp_path / "init.bin").read_bytes()


def test_missing_manifest_exits_2(tmp_path, capsys):
    code = run("train", "--manifest", str(tmp_path / "nope.json"),
               "--out", str(tmp_path / "o"))
    assert code == 2
    assert "error" in capsys.readouterr().err


def test_missing_required_flag_exits_2(tmp_path):
    assert run("train", "--out", str(tmp_path / "o")) == 2


def test_manifest_without_required_splits_exits_2(synth_dir, tmp_path):
    partial = json.loads((synth_dir / "manifest.json").read_text())
    del partial["splits"]["test"]
    bad = tmp_path / "partial.json"
    bad.write_text(json.dumps(partial))
    for name in ("train.jsonl", "val.jsonl"):
        (tmp_path / name).write_bytes((synth_dir / name).read_bytes())
    assert run("train", "--manifest", str(bad), "--out", str(tmp_path / "o")) == 2


def test_eval_prints_report(synth_dir, tmp_path, capsys):
    out = tmp_path / "trained"
    assert run("train", "--manifest", str(synth_dir / "manifest.json"),
               "--out", str(out), "--seed", "1", "--hidden", "8",
               "--epochs", "1", "--lr", "0.003") == 0
    capsys.readouterr()
    code = run("eval", "--manifest", str(synth_dir / "manifest.json"),
               "--checkpoint", str(out / "checkpoint.bin"), "--split", "val")
    assert code == 0
    payload = json.loads(capsys.readouterr().out)
    assert "accuracy" in payload and "per_class" in payload


def test_eval_unknown_split_exits_2(synth_dir, tmp_path):
    out = tmp_path / "trained2"
    assert run("train", "--manifest", str(synth_dir / "manifest.json"),
               "--out", str(out), "--seed", "1", "--hidden", "8",
               "--epochs", "0") == 0
    assert run("eval", "--manifest", str(synth_dir / "manifest.json"),
               "--checkpoint", str(out / "checkpoint.bin"),
               "--split", "holdout") == 2


def test_gradcheck_passes_by_default(capsys):
    assert run("gradcheck", "--hidden", "4", "--seed", "0") == 0
    assert "passed" in capsys.readouterr().out


def test_gradcheck_zero_tolerance_fails():
    assert run("gradcheck", "--hidden", "4", "--tolerance", "0") == 1


def test_gradcheck_detects_corrupted_backward():
    from convemo.autodiff import inject_backward_fault
    with inject_backward_fault("gru_step"):
        code = run("gradcheck", "--hidden", "4")
    assert code == 1
    with inject_backward_fault("softmax"):   # attention path
        code = run("gradcheck", "--hidden", "4")
    assert code == 1


def test_ablate_emits_four_rows_and_is_deterministic(synth_dir, tmp_path, capsys):
    outs = []
    for sub in ("a", "b"):
        out = tmp_path / sub
        code = run("ablate", "--manifest", str(synth_dir / "manifest.json"),
                   "--out", str(out), "--seed", "2", "--hidden", "8",
                   "--epochs", "1", "--lr", "0.003")
        assert code == 0
        outs.append(json.loads((out / "ablation.json").read_text()))
    table = capsys.readouterr().out
    assert len(outs[0]) == 4
    assert [row["variant"] for row in outs[0]] == \
        ["full", "no-speaker-cs", "no-listener-cs", "no-both-cs"]
    assert outs[0] == outs[1]
    assert "no-listener-cs" in table


def test_config_file_precedence(synth_dir, tmp_path):
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps({
        "manifest": str(synth_dir / "manifest.json"),
        "out": str(tmp_path / "fromcfg"),
        "epochs": 0, "hidden": 8, "seed": 1,
    }))
    # config file alone
    assert run("train", "--config", str(cfg_path)) == 0
    assert json.loads((tmp_path / "fromcfg" / "history.json").read_text()) == []
    # flag overrides the config file's epochs
    assert run("train", "--config", str(cfg_path), "--epochs", "1",
               "--out", str(tmp_path / "flagwins")) == 0
    history = json.loads((tmp_path / "flagwins" / "history.json").read_text())
    assert len(history) == 1
    echoed = json.loads((tmp_path / "flagwins" / "config.json").read_text())
    assert echoed["epochs"] == 1


def test_config_file_unknown_key_exits_2(tmp_path):
    cfg_path = tmp_path / "bad.json"
    cfg_path.write_text(json.dumps({"banana": 1}))
    assert run("train", "--config", str(cfg_path)) == 2


def test_console_script_installed():
    import shutil
    import subprocess
    exe = shutil.which("convemo")
    assert exe is not None
    proc = subprocess.run([exe, "gradcheck", "--hidden", "3"],
                          capture_output=True, text=True, timeout=300)
    assert proc.returncode == 0, proc.stderr
