"""Extraction configuration and per-dataset presets."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

# The five commonsense relations, in feature-file key order. Relation phrases
# follow the knowledge graph's naming (X = speaker, o = others/listeners).
RELATIONS = {
    "cs_intent": "xIntent",
    "cs_effect_speaker": "xEffect",
    "cs_react_speaker": "xReact",
    "cs_effect_listener": "oEffect",
    "cs_react_listener": "oReact",
}

# Default pretrained checkpoints. The large LM yields 1024-d utterance vectors
# (24 layers, hidden 1024); the commonsense encoder yields 768-d vectors.
DEFAULT_UTTERANCE_MODEL = "roberta-large"
DEFAULT_COMMONSENSE_MODEL = "openai-gpt"
UTTERANCE_DIM = 1024
COMMONSENSE_DIM = 768


class ExtractionError(RuntimeError):
    pass


class CheckpointUnavailable(ExtractionError):
    """A pretrained checkpoint could not be loaded; message carries remedy steps."""


@dataclass
class ExtractionConfig:
    dataset: str                      # preset name: meld, emorynlp, iemocap, dailydialog, csv, jsonl
    transcript_path: str              # split transcript in the dataset's native format
    output_path: str                  # feature file to write (record-per-line)
    utterance_model: str = DEFAULT_UTTERANCE_MODEL
    commonsense_model: str = DEFAULT_COMMONSENSE_MODEL
    finetune: bool = True
    finetune_lr: float = 1e-5
    finetune_batch_size: int = 32
    finetune_epochs: int = 1
    seed: int = 0
    max_length: int = 128
    extract_batch_size: int = 16
    device: str = "cpu"
    residual_head: Optional[bool] = None   # None = follow the dataset preset
    relations: dict[str, str] = field(default_factory=lambda: dict(RELATIONS))

    def __post_init__(self):
        if self.relations != RELATIONS:
            raise ExtractionError(
                "the relation list is fixed: intent, effect-on-speaker, reaction-of-speaker, "
                f"effect-on-listeners, reaction-of-listeners (got {sorted(self.relations)})")
        if self.finetune_batch_size < 1 or self.finetune_epochs < 0:
            raise ExtractionError("fine-tune batch size must be >= 1 and epochs >= 0")
