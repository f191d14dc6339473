import json

import numpy as np
import pytest

from convemo_extractor.config import (
    COMMONSENSE_DIM,
    DEFAULT_COMMONSENSE_MODEL,
    DEFAULT_UTTERANCE_MODEL,
    RELATIONS,
    UTTERANCE_DIM,
    CheckpointUnavailable,
    ExtractionConfig,
    ExtractionError,
)
from convemo_extractor.cli import main
from convemo_extractor.pipeline import run_extraction


def make_config(generic_csv, tmp_path, tiny_lm, tiny_cs, **overrides):
    defaults = dict(dataset="csv", transcript_path=str(generic_csv),
                    output_path=str(tmp_path / "out.jsonl"),
                    utterance_model=tiny_lm, commonsense_model=tiny_cs,
                    finetune_epochs=1, extract_batch_size=4, seed=0)
    defaults.update(overrides)
    return ExtractionConfig(**defaults)


def test_relation_list_is_pinned():
    assert list(RELATIONS) == ["cs_intent", "cs_effect_speaker", "cs_react_speaker",
                               "cs_effect_listener", "cs_react_listener"]
    with pytest.raises(ExtractionError, match="relation list is fixed"):
        ExtractionConfig(dataset="csv", transcript_path="x", output_path="y",
                         relations={"cs_intent": "xIntent"})


def test_default_checkpoints_target_full_scale_models():
    assert DEFAULT_UTTERANCE_MODEL == "roberta-large"   # 1024-d activations
    assert DEFAULT_COMMONSENSE_MODEL == "openai-gpt"    # 768-d activations
    assert (UTTERANCE_DIM, COMMONSENSE_DIM) == (1024, 768)


def test_extraction_output_validates_under_consumer_loader(
        generic_csv, tmp_path, tiny_lm_dir, tiny_cs_dir):
    config = make_config(generic_csv, tmp_path, tiny_lm_dir, tiny_cs_dir)
    path, class_names = run_extraction(config)
    assert class_names == ["happy", "sad", "angry"]

    # The wire format is the interface to the emotion model; its loader is the
    # authority on validity.
    from convemo.data import group_conversations, read_records
    records = read_records(path)
    assert len(records) == 7
    convs = group_conversations(records, num_classes=len(class_names))
    assert sorted(c.dialogue_id for c in convs) == ["d0", "d1"]
    rec = records[0]
    assert rec.features.d_x == 16      # tiny stand-in hidden size
    assert rec.features.d_cs == 12
    assert rec.features.x.data.dtype == np.float64
    assert rec.label == 0


def test_extraction_is_deterministic(generic_csv, tmp_path, tiny_lm_dir, tiny_cs_dir):
    a = make_config(generic_csv, tmp_path, tiny_lm_dir, tiny_cs_dir,
                    output_path=str(tmp_path / "a.jsonl"))
    b = make_config(generic_csv, tmp_path, tiny_lm_dir, tiny_cs_dir,
                    output_path=str(tmp_path / "b.jsonl"))
    run_extraction(a)
    run_extraction(b)
    assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()


def test_no_finetune_still_writes_valid_but_different_features(
        generic_csv, tmp_path, tiny_lm_dir, tiny_cs_dir):
    tuned = make_config(generic_csv, tmp_path, tiny_lm_dir, tiny_cs_dir,
                        output_path=str(tmp_path / "tuned.jsonl"))
    raw = make_config(generic_csv, tmp_path, tiny_lm_dir, tiny_cs_dir,
                      output_path=str(tmp_path / "raw.jsonl"), finetune=False)
    run_extraction(tuned)
    run_extraction(raw)
    from convemo.data import read_records
    tuned_records = read_records(tmp_path / "tuned.jsonl")
    raw_records = read_records(tmp_path / "raw.jsonl")
    assert len(tuned_records) == len(raw_records) == 7
    # fine-tuning must actually move the encoder
    assert not np.allclose(tuned_records[0].features.x.data,
                           raw_records[0].features.x.data)
    # but the commonsense channels are untouched by it
    assert np.array_equal(tuned_records[0].features.cs_intent.data,
                          raw_records[0].features.cs_intent.data)


def test_residual_head_reads_first_plus_penultimate():
    import torch
    from convemo_extractor.utterance_features import ClassificationHead

    torch.manual_seed(0)
    hidden = [torch.randn(2, 5, 8) for _ in range(5)]   # embeddings + 4 layers
    head = ClassificationHead(8, 3, residual=True)
    plain = ClassificationHead(8, 3, residual=False)
    assert torch.equal(head.features(hidden), hidden[-2][:, 0] + hidden[1][:, 0])
    assert torch.equal(plain.features(hidden), hidden[-1][:, 0])


def test_missing_checkpoint_fails_with_instructions(generic_csv, tmp_path, tiny_cs_dir):
    config = make_config(generic_csv, tmp_path, "/nonexistent/model-dir", tiny_cs_dir)
    with pytest.raises(CheckpointUnavailable, match="--lm-model"):
        run_extraction(config)


def test_cli_writes_features_and_manifest(generic_csv, tmp_path, tiny_lm_dir, tiny_cs_dir):
    out = tmp_path / "feat" / "train.jsonl"
    manifest = tmp_path / "feat" / "manifest.json"
    code = main(["--dataset", "csv", "--transcripts", str(generic_csv),
                 "--out", str(out), "--manifest", str(manifest), "--split", "train",
                 "--lm-model", tiny_lm_dir, "--cs-model", tiny_cs_dir,
                 "--epochs", "1", "--batch-size", "4"])
    assert code == 0
    payload = json.loads(manifest.read_text())
    assert payload["splits"] == {"train": "train.jsonl"}
    assert payload["class_names"] == ["happy", "sad", "angry"]

    # the manifest + features drive the consumer end to end
    from convemo.data import load_dataset
    dataset = load_dataset(manifest)
    assert sum(len(c.records) for c in dataset.splits["train"]) == 7


def test_cli_missing_model_exits_2(generic_csv, tmp_path, tiny_cs_dir, capsys):
    code = main(["--dataset", "csv", "--transcripts", str(generic_csv),
                 "--out", str(tmp_path / "x.jsonl"),
                 "--lm-model", "/nope", "--cs-model", tiny_cs_dir])
    assert code == 2
    assert "download" in capsys.readouterr().err.lower()


def test_discrete_generation_dump(tiny_gen_dir):
    from convemo_extractor.commonsense_features import generate_commonsense_text
    a = generate_commonsense_text(tiny_gen_dir, "i am so happy", "cs_intent",
                                  max_new_tokens=4)
    b = generate_commonsense_text(tiny_gen_dir, "i am so happy", "cs_intent",
                                  max_new_tokens=4)
    assert isinstance(a, str)
    assert a == b   # greedy decoding is deterministic
    with pytest.raises(KeyError):
        generate_commonsense_text(tiny_gen_dir, "x", "cs_mood")
