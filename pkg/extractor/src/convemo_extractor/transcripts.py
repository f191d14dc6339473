"""Transcript readers for the benchmark datasets' native distribution formats.

Every reader yields TranscriptUtterance rows; turns are renumbered to be
contiguous per dialogue after any label filtering, in source order.

Formats:
  meld / emorynlp  CSV as distributed (Utterance / Speaker / Emotion plus
                   Dialogue_ID resp. Scene_ID and Utterance_ID columns)
  dailydialog      dialogues_text.txt with __eou__ separators; labels come
                   from the parallel dialogues_emotion.txt (digits 0-6)
  iemocap          session tree: */dialog/transcriptions/*.txt plus
                   */dialog/EmoEvaluation/*.txt; keeps the six-label subset
                   used in the ERC literature
  csv              generic CSV with columns dialogue_id, turn, speaker,
                   label, text
  jsonl            one JSON object per line with those same keys
"""

from __future__ import annotations

import csv
import json
import re
from dataclasses import dataclass
from pathlib import Path

from .config import ExtractionError


@dataclass
class TranscriptUtterance:
    dialogue_id: str
    turn: int
    speaker: str
    label: str
    text: str


@dataclass
class DatasetPreset:
    class_names: list[str]
    headline_metric: str
    micro_f1_excluded: list[str]
    residual_head: bool
    coarse_grouping: dict[str, str] | None = None


EMORYNLP_GROUPING = {
    "joyful": "positive", "peaceful": "positive", "powerful": "positive",
    "scared": "negative", "mad": "negative", "sad": "negative",
    "neutral": "neutral",
}

DAILYDIALOG_CLASSES = ["neutral", "anger", "disgust", "fear", "happiness",
                       "sadness", "surprise"]

PRESETS = {
    "iemocap": DatasetPreset(
        class_names=["happy", "sad", "neutral", "angry", "excited", "frustrated"],
        headline_metric="weighted_f1", micro_f1_excluded=[], residual_head=False),
    "dailydialog": DatasetPreset(
        class_names=DAILYDIALOG_CLASSES,
        headline_metric="micro_f1", micro_f1_excluded=["neutral"], residual_head=False),
    "meld": DatasetPreset(
        class_names=["neutral", "surprise", "fear", "sadness", "joy", "disgust", "anger"],
        headline_metric="weighted_f1", micro_f1_excluded=[], residual_head=True),
    "emorynlp": DatasetPreset(
        class_names=["neutral", "joyful", "peaceful", "powerful", "scared", "mad", "sad"],
        headline_metric="weighted_f1", micro_f1_excluded=[], residual_head=True,
        coarse_grouping=EMORYNLP_GROUPING),
    "csv": DatasetPreset(class_names=[], headline_metric="weighted_f1",
                         micro_f1_excluded=[], residual_head=False),
    "jsonl": DatasetPreset(class_names=[], headline_metric="weighted_f1",
                           micro_f1_excluded=[], residual_head=False),
}

# IEMOCAP evaluation codes for the six classes the emotion model is trained on.
IEMOCAP_CODE_TO_NAME = {
    "hap": "happy", "sad": "sad", "neu": "neutral",
    "ang": "angry", "exc": "excited", "fru": "frustrated",
}


def read_transcripts(dataset: str, path) -> list[TranscriptUtterance]:
    path = Path(path)
    if dataset not in PRESETS:
        raise ExtractionError(f"unknown dataset preset {dataset!r}; known: {sorted(PRESETS)}")
    if not path.exists():
        raise ExtractionError(f"transcript path not found: {path}")
    if dataset in ("meld", "emorynlp"):
        dialogue_col = "Dialogue_ID" if dataset == "meld" else "Scene_ID"
        rows = _read_benchmark_csv(path, dialogue_col)
    elif dataset == "dailydialog":
        rows = _read_dailydialog(path)
    elif dataset == "iemocap":
        rows = _read_iemocap(path)
    elif dataset == "csv":
        rows = _read_generic_csv(path)
    else:
        rows = _read_generic_jsonl(path)
    return _renumber(rows)


def _renumber(rows: list[TranscriptUtterance]) -> list[TranscriptUtterance]:
    order: dict[str, list[TranscriptUtterance]] = {}
    for row in rows:
        order.setdefault(row.dialogue_id, []).append(row)
    out = []
    for dialogue_id, utterances in order.items():
        utterances.sort(key=lambda u: u.turn)
        for new_turn, utt in enumerate(utterances):
            utt.turn = new_turn
            out.append(utt)
    return out


def _read_benchmark_csv(path: Path, dialogue_col: str) -> list[TranscriptUtterance]:
    rows = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        required = {"Utterance", "Speaker", "Emotion", dialogue_col, "Utterance_ID"}
        missing = required - set(reader.fieldnames or [])
        if missing:
            raise ExtractionError(f"{path}: missing columns {sorted(missing)}")
        for line in reader:
            rows.append(TranscriptUtterance(
                dialogue_id=str(line[dialogue_col]),
                turn=int(line["Utterance_ID"]),
                speaker=str(line["Speaker"]),
                label=str(line["Emotion"]).strip().lower(),
                text=str(line["Utterance"])))
    return rows


def _read_dailydialog(path: Path) -> list[TranscriptUtterance]:
    """``path`` is the dialogues_text.txt file; labels are read from the
    dialogues_emotion.txt file next to it."""
    emotion_path = path.parent / path.name.replace("text", "emotion")
    if emotion_path == path or not emotion_path.exists():
        raise ExtractionError(
            f"expected the label file next to {path} "
            f"(e.g. dialogues_emotion.txt beside dialogues_text.txt)")
    texts = path.read_text(encoding="utf-8").splitlines()
    labels = emotion_path.read_text(encoding="utf-8").splitlines()
    rows = []
    for idx, (text_line, label_line) in enumerate(zip(texts, labels)):
        utterances = [u.strip() for u in text_line.split("__eou__") if u.strip()]
        codes = label_line.split()
        if len(utterances) != len(codes):
            raise ExtractionError(
                f"{path}: dialogue {idx} has {len(utterances)} utterances "
                f"but {len(codes)} labels")
        for turn, (utt, code) in enumerate(zip(utterances, codes)):
            rows.append(TranscriptUtterance(
                dialogue_id=f"dd-{idx}", turn=turn,
                speaker="A" if turn % 2 == 0 else "B",   # dyadic alternating
                label=DAILYDIALOG_CLASSES[int(code)], text=utt))
    return rows


_IEMOCAP_TRANSCRIPT = re.compile(r"^(\S+)\s+\[[\d.]+-[\d.]+\]:\s*(.*)$")
_IEMOCAP_EVAL = re.compile(r"^\[[\d.]+\s*-\s*[\d.]+\]\t(\S+)\t(\w+)\t")


def _read_iemocap(root: Path) -> list[TranscriptUtterance]:
    """Walk Session*/dialog/{transcriptions,EmoEvaluation} trees, keeping the
    utterances carrying one of the six modeled emotion codes."""
    transcript_files = sorted(root.glob("**/dialog/transcriptions/*.txt"))
    if not transcript_files:
        raise ExtractionError(
            f"{root}: no */dialog/transcriptions/*.txt found; point --transcripts at "
            f"the dataset root (the directory holding the Session folders)")
    labels: dict[str, str] = {}
    for eval_file in root.glob("**/dialog/EmoEvaluation/*.txt"):
        for line in eval_file.read_text(encoding="utf-8", errors="replace").splitlines():
            match = _IEMOCAP_EVAL.match(line)
            if match and match.group(2) in IEMOCAP_CODE_TO_NAME:
                labels[match.group(1)] = IEMOCAP_CODE_TO_NAME[match.group(2)]
    rows = []
    for transcript in transcript_files:
        dialogue_id = transcript.stem                     # e.g. Ses01F_impro01
        for line in transcript.read_text(encoding="utf-8", errors="replace").splitlines():
            match = _IEMOCAP_TRANSCRIPT.match(line.strip())
            if not match:
                continue
            utt_id, text = match.groups()
            if utt_id not in labels:
                continue                                  # unlabeled or excluded code
            speaker = "F" if utt_id.split("_")[-1].startswith("F") else "M"
            rows.append(TranscriptUtterance(
                dialogue_id=dialogue_id, turn=len(rows), speaker=speaker,
                label=labels[utt_id], text=text))
    return rows


def _read_generic_csv(path: Path) -> list[TranscriptUtterance]:
    rows = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        required = {"dialogue_id", "turn", "speaker", "label", "text"}
        missing = required - set(reader.fieldnames or [])
        if missing:
            raise ExtractionError(f"{path}: missing columns {sorted(missing)}")
        for line in reader:
            rows.append(TranscriptUtterance(
                dialogue_id=str(line["dialogue_id"]), turn=int(line["turn"]),
                speaker=str(line["speaker"]), label=str(line["label"]).strip().lower(),
                text=str(line["text"])))
    return rows


def _read_generic_jsonl(path: Path) -> list[TranscriptUtterance]:
    rows = []
    for line_no, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            rows.append(TranscriptUtterance(
                dialogue_id=str(obj["dialogue_id"]), turn=int(obj["turn"]),
                speaker=str(obj["speaker"]), label=str(obj["label"]).strip().lower(),
                text=str(obj["text"])))
        except (json.JSONDecodeError, KeyError, ValueError) as exc:
            raise ExtractionError(f"{path}:{line_no}: bad transcript record ({exc})") from exc
    return rows


def class_names_for(dataset: str, rows: list[TranscriptUtterance]) -> list[str]:
    """Preset class vocabulary, or first-appearance order for generic inputs."""
    preset = PRESETS[dataset]
    if preset.class_names:
        known = set(preset.class_names)
        for row in rows:
            if row.label not in known:
                raise ExtractionError(
                    f"label {row.label!r} not in the {dataset} vocabulary {preset.class_names}")
        return list(preset.class_names)
    names: list[str] = []
    for row in rows:
        if row.label not in names:
            names.append(row.label)
    return names
