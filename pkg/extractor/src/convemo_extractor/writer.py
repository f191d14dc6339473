"""Feature-file and manifest output in the emotion model's wire formats.

The record-per-line format: one JSON object per utterance with keys
dialogue_id, turn, speaker, label (class index), x, and the five commonsense
vectors cs_intent, cs_effect_speaker, cs_react_speaker, cs_effect_listener,
cs_react_listener. Vector payloads are float32 values, which survive the
consumer's float64 widening exactly.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .config import RELATIONS, ExtractionError
from .transcripts import PRESETS, TranscriptUtterance


def write_feature_file(path, rows: list[TranscriptUtterance], class_names: list[str],
                       x: np.ndarray, commonsense: dict[str, np.ndarray]) -> None:
    if x.shape[0] != len(rows):
        raise ExtractionError(f"feature rows {x.shape[0]} != utterances {len(rows)}")
    for key in RELATIONS:
        if commonsense[key].shape[0] != len(rows):
            raise ExtractionError(f"{key} rows {commonsense[key].shape[0]} != {len(rows)}")
    label_index = {name: idx for idx, name in enumerate(class_names)}
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for idx, row in enumerate(rows):
            obj = {
                "dialogue_id": row.dialogue_id,
                "turn": row.turn,
                "speaker": row.speaker,
                "label": label_index[row.label],
                "x": [float(v) for v in x[idx]],
            }
            for key in RELATIONS:
                obj[key] = [float(v) for v in commonsense[key][idx]]
            fh.write(json.dumps(obj) + "\n")


def write_manifest(path, dataset: str, class_names: list[str],
                   split_files: dict[str, str]) -> None:
    preset = PRESETS[dataset]
    payload = {
        "class_names": class_names,
        "splits": split_files,
        "micro_f1_excluded": preset.micro_f1_excluded,
        "coarse_grouping": preset.coarse_grouping,
        "headline_metric": preset.headline_metric,
    }
    Path(path).write_text(json.dumps(payload, indent=2) + "\n")
