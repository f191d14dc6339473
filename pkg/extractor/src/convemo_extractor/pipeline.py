"""End-to-end extraction: transcripts in, feature file out."""

from __future__ import annotations

from pathlib import Path

from .commonsense_features import extract_commonsense_features
from .config import ExtractionConfig
from .transcripts import PRESETS, class_names_for, read_transcripts
from .utterance_features import finetune_and_extract_utterance_features
from .writer import write_feature_file


def run_extraction(config: ExtractionConfig) -> tuple[Path, list[str]]:
    """Extract one split; returns the written path and the class vocabulary."""
    rows = read_transcripts(config.dataset, config.transcript_path)
    class_names = class_names_for(config.dataset, rows)
    residual = (PRESETS[config.dataset].residual_head
                if config.residual_head is None else config.residual_head)
    x = finetune_and_extract_utterance_features(config, rows, class_names, residual)
    commonsense = extract_commonsense_features(config, rows)
    write_feature_file(config.output_path, rows, class_names, x, commonsense)
    return Path(config.output_path), class_names
