"""Feature-file ingestion, dataset manifests, label regrouping, and the
synthetic conversation generator.

Wire formats
------------

Text (one JSON object per line, extension ``.jsonl``). Keys:

    dialogue_id   string
    turn          0-based integer, contiguous within a dialogue
    speaker       string (mapped to dense per-dialogue indices at load time)
    label         class index into the manifest's class_names
    x             utterance feature vector (list of decimal floats)
    cs_intent, cs_effect_speaker, cs_react_speaker,
    cs_effect_listener, cs_react_listener
                  the five commonsense vectors, equal lengths
    shifted       optional boolean diagnostic emitted by the synthetic
                  generator (utterance classifiable only via propagated
                  listener commonsense); absent for real data

Binary (extension ``.bin``), for large float32 feature dumps. Little-endian:

    bytes 0..12   magic b"CONVEMO-FEAT\\n"
    u32           format version (1)
    u32 d_x, u32 d_cs, u32 record count
    per record:
        u16 + bytes   dialogue_id (UTF-8)
        u32           turn
        u16 + bytes   speaker (UTF-8)
        u32           label
        u8            flags: bit0 = shifted key present, bit1 = shifted value
        f32 x d_x     x
        f32 x d_cs x5 cs_intent, cs_effect_speaker, cs_react_speaker,
                      cs_effect_listener, cs_react_listener

Values are widened to float64 on load. The manifest is a single JSON file,
see :class:`DatasetManifest`.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .model import FeatureBundle
from .autodiff import Tensor

TEXT_KEYS = ("dialogue_id", "turn", "speaker", "label", "x", "cs_intent",
             "cs_effect_speaker", "cs_react_speaker", "cs_effect_listener",
             "cs_react_listener")
VECTOR_KEYS = TEXT_KEYS[4:]
BINARY_MAGIC = b"CONVEMO-FEAT\n"
BINARY_VERSION = 1

# EmoryNLP's documented 7-to-3 coarse grouping.
EMORYNLP_COARSE_GROUPING = {
    "joyful": "positive", "peaceful": "positive", "powerful": "positive",
    "scared": "negative", "mad": "negative", "sad": "negative",
    "neutral": "neutral",
}

HEADLINE_METRICS = ("accuracy", "weighted_f1", "macro_f1", "micro_f1")


class ParseError(ValueError):
    """A feature file could not be decoded; message carries file and line."""


class ValidationError(ValueError):
    """Decoded records violate a dataset invariant; message names the field."""


@dataclass
class UtteranceRecord:
    dialogue_id: str
    turn: int
    speaker: str
    label: int
    features: FeatureBundle
    shifted: Optional[bool] = None


@dataclass
class Conversation:
    dialogue_id: str
    records: list[UtteranceRecord]
    speakers: list[str]           # first-appearance order

    def speaker_index(self, turn: int) -> int:
        return self.speakers.index(self.records[turn].speaker)

    def model_input(self) -> list[tuple[FeatureBundle, int]]:
        return [(rec.features, self.speakers.index(rec.speaker)) for rec in self.records]

    def labels(self) -> list[int]:
        return [rec.label for rec in self.records]


@dataclass
class DatasetManifest:
    class_names: list[str]
    splits: dict[str, str]                     # split name -> feature file path
    micro_f1_excluded: list[str] = field(default_factory=list)
    coarse_grouping: Optional[dict[str, str]] = None
    headline_metric: str = "weighted_f1"
    base_dir: Path = field(default_factory=Path)

    def __post_init__(self):
        for name in self.micro_f1_excluded:
            if name not in self.class_names:
                raise ValidationError(f"micro_f1_excluded class {name!r} not in class_names")
        if self.coarse_grouping is not None:
            for fine in self.class_names:
                if fine not in self.coarse_grouping:
                    raise ValidationError(f"coarse_grouping missing class {fine!r}")
            for fine in self.coarse_grouping:
                if fine not in self.class_names:
                    raise ValidationError(f"coarse_grouping maps unknown class {fine!r}")
        if self.headline_metric not in HEADLINE_METRICS:
            raise ValidationError(f"headline_metric must be one of {HEADLINE_METRICS}")

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    def excluded_indices(self) -> set[int]:
        return {self.class_names.index(name) for name in self.micro_f1_excluded}

    def split_path(self, split: str) -> Path:
        return self.base_dir / self.splits[split]

    @classmethod
    def load(cls, path) -> "DatasetManifest":
        path = Path(path)
        try:
            raw = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: invalid manifest JSON ({exc})") from exc
        try:
            return cls(
                class_names=list(raw["class_names"]),
                splits=dict(raw["splits"]),
                micro_f1_excluded=list(raw.get("micro_f1_excluded", [])),
                coarse_grouping=raw.get("coarse_grouping"),
                headline_metric=raw.get("headline_metric", "weighted_f1"),
                base_dir=path.parent,
            )
        except KeyError as exc:
            raise ParseError(f"{path}: manifest missing key {exc}") from exc

    def save(self, path) -> None:
        payload = {
            "class_names": self.class_names,
            "splits": self.splits,
            "micro_f1_excluded": self.micro_f1_excluded,
            "coarse_grouping": self.coarse_grouping,
            "headline_metric": self.headline_metric,
        }
        Path(path).write_text(json.dumps(payload, indent=2) + "\n")


# ---------------------------------------------------------------------------
# Record serialization


def _vector(value, key: str, path, line_no: int) -> np.ndarray:
    try:
        arr = np.array(value, dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise ParseError(f"{path}:{line_no}: {key} is not a numeric vector") from exc
    if arr.ndim != 1 or arr.size == 0:
        raise ParseError(f"{path}:{line_no}: {key} must be a non-empty flat vector")
    return arr.reshape(1, -1)


def _record_from_obj(obj: dict, path, line_no: int) -> UtteranceRecord:
    for key in TEXT_KEYS:
        if key not in obj:
            raise ParseError(f"{path}:{line_no}: missing key {key!r}")
    try:
        turn = int(obj["turn"])
        label = int(obj["label"])
        dialogue_id = str(obj["dialogue_id"])
        speaker = str(obj["speaker"])
    except (TypeError, ValueError) as exc:
        raise ParseError(f"{path}:{line_no}: bad scalar field ({exc})") from exc
    vectors = {key: _vector(obj[key], key, path, line_no) for key in VECTOR_KEYS}
    shifted = obj.get("shifted")
    if shifted is not None:
        shifted = bool(shifted)
    features = FeatureBundle(
        x=Tensor(vectors["x"]),
        cs_intent=Tensor(vectors["cs_intent"]),
        cs_effect_speaker=Tensor(vectors["cs_effect_speaker"]),
        cs_react_speaker=Tensor(vectors["cs_react_speaker"]),
        cs_effect_listener=Tensor(vectors["cs_effect_listener"]),
        cs_react_listener=Tensor(vectors["cs_react_listener"]),
    )
    return UtteranceRecord(dialogue_id=dialogue_id, turn=turn, speaker=speaker,
                           label=label, features=features, shifted=shifted)


def _record_to_obj(rec: UtteranceRecord) -> dict:
    obj = {
        "dialogue_id": rec.dialogue_id,
        "turn": rec.turn,
        "speaker": rec.speaker,
        "label": rec.label,
        "x": rec.features.x.data[0].tolist(),
        "cs_intent": rec.features.cs_intent.data[0].tolist(),
        "cs_effect_speaker": rec.features.cs_effect_speaker.data[0].tolist(),
        "cs_react_speaker": rec.features.cs_react_speaker.data[0].tolist(),
        "cs_effect_listener": rec.features.cs_effect_listener.data[0].tolist(),
        "cs_react_listener": rec.features.cs_react_listener.data[0].tolist(),
    }
    if rec.shifted is not None:
        obj["shifted"] = rec.shifted
    return obj


def read_records(path) -> list[UtteranceRecord]:
    """Read one feature file (text or binary, sniffed by magic bytes)."""
    path = Path(path)
    if not path.exists():
        raise ParseError(f"feature file not found: {path}")
    with path.open("rb") as fh:
        head = fh.read(len(BINARY_MAGIC))
    if head == BINARY_MAGIC:
        return _read_binary(path)
    return _read_text(path)


def _read_text(path: Path) -> list[UtteranceRecord]:
    records = []
    with path.open("r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"{path}:{line_no}: invalid JSON ({exc.msg})") from exc
            if not isinstance(obj, dict):
                raise ParseError(f"{path}:{line_no}: record is not an object")
            records.append(_record_from_obj(obj, path, line_no))
    return records


def write_records(records: Sequence[UtteranceRecord], path, binary: bool = False) -> None:
    path = Path(path)
    if binary:
        _write_binary(records, path)
        return
    with path.open("w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(_record_to_obj(rec)) + "\n")


def _write_binary(records: Sequence[UtteranceRecord], path: Path) -> None:
    if records:
        d_x = records[0].features.d_x
        d_cs = records[0].features.d_cs
    else:
        d_x = d_cs = 0
    chunks = [BINARY_MAGIC, struct.pack("<IIII", BINARY_VERSION, d_x, d_cs, len(records))]
    for rec in records:
        for text in (rec.dialogue_id,):
            encoded = text.encode("utf-8")
            chunks.append(struct.pack("<H", len(encoded)))
            chunks.append(encoded)
        chunks.append(struct.pack("<I", rec.turn))
        encoded = rec.speaker.encode("utf-8")
        chunks.append(struct.pack("<H", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<I", rec.label))
        flags = 0
        if rec.shifted is not None:
            flags |= 1
            if rec.shifted:
                flags |= 2
        chunks.append(struct.pack("<B", flags))
        chunks.append(rec.features.x.data.astype("<f4").tobytes())
        for vec in rec.features.channels():
            chunks.append(vec.data.astype("<f4").tobytes())
    path.write_bytes(b"".join(chunks))


def _read_binary(path: Path) -> list[UtteranceRecord]:
    blob = path.read_bytes()
    pos = len(BINARY_MAGIC)

    def take(n: int) -> bytes:
        nonlocal pos
        if pos + n > len(blob):
            raise ParseError(f"{path}: truncated binary feature file")
        out = blob[pos:pos + n]
        pos += n
        return out

    version, d_x, d_cs, count = struct.unpack("<IIII", take(16))
    if version != BINARY_VERSION:
        raise ParseError(f"{path}: unsupported binary format version {version}")
    records = []
    for _ in range(count):
        dialogue_id = take(struct.unpack("<H", take(2))[0]).decode("utf-8")
        turn = struct.unpack("<I", take(4))[0]
        speaker = take(struct.unpack("<H", take(2))[0]).decode("utf-8")
        label = struct.unpack("<I", take(4))[0]
        flags = struct.unpack("<B", take(1))[0]
        shifted = bool(flags & 2) if flags & 1 else None
        x = np.frombuffer(take(4 * d_x), dtype="<f4").astype(np.float64).reshape(1, -1)
        channels = [np.frombuffer(take(4 * d_cs), dtype="<f4").astype(np.float64).reshape(1, -1)
                    for _ in range(5)]
        features = FeatureBundle(x=Tensor(x), cs_intent=Tensor(channels[0]),
                                 cs_effect_speaker=Tensor(channels[1]),
                                 cs_react_speaker=Tensor(channels[2]),
                                 cs_effect_listener=Tensor(channels[3]),
                                 cs_react_listener=Tensor(channels[4]))
        records.append(UtteranceRecord(dialogue_id=dialogue_id, turn=turn, speaker=speaker,
                                       label=label, features=features, shifted=shifted))
    if pos != len(blob):
        raise ParseError(f"{path}: trailing bytes after last record")
    return records


# ---------------------------------------------------------------------------
# Dataset assembly and validation


def group_conversations(records: Sequence[UtteranceRecord], num_classes: int) -> list[Conversation]:
    """Group records by dialogue_id (first-appearance order), enforce invariants."""
    by_dialogue: dict[str, list[UtteranceRecord]] = {}
    for rec in records:
        by_dialogue.setdefault(rec.dialogue_id, []).append(rec)

    d_x: Optional[int] = None
    d_cs: Optional[int] = None
    conversations = []
    for dialogue_id, recs in by_dialogue.items():
        recs = sorted(recs, key=lambda r: r.turn)
        turns = [r.turn for r in recs]
        if turns != list(range(len(recs))):
            raise ValidationError(
                f"dialogue {dialogue_id!r}: field 'turn' not contiguous 0..{len(recs) - 1} (got {turns})")
        speakers: list[str] = []
        for rec in recs:
            if not 0 <= rec.label < num_classes:
                raise ValidationError(
                    f"dialogue {dialogue_id!r} turn {rec.turn}: field 'label' {rec.label} "
                    f"out of range for {num_classes} classes")
            if d_x is None:
                d_x, d_cs = rec.features.d_x, rec.features.d_cs
            if rec.features.d_x != d_x:
                raise ValidationError(
                    f"dialogue {dialogue_id!r} turn {rec.turn}: field 'x' has dimension "
                    f"{rec.features.d_x}, expected {d_x}")
            for key, vec in zip(VECTOR_KEYS[1:], rec.features.channels()):
                if vec.data.shape[1] != d_cs:
                    raise ValidationError(
                        f"dialogue {dialogue_id!r} turn {rec.turn}: field {key!r} has dimension "
                        f"{vec.data.shape[1]}, expected {d_cs}")
            if rec.speaker not in speakers:
                speakers.append(rec.speaker)
        conversations.append(Conversation(dialogue_id=dialogue_id, records=recs, speakers=speakers))
    return conversations


@dataclass
class Dataset:
    manifest: DatasetManifest
    splits: dict[str, list[Conversation]]

    @property
    def train(self) -> list[Conversation]:
        return self.splits["train"]

    @property
    def val(self) -> list[Conversation]:
        return self.splits["val"]

    @property
    def test(self) -> list[Conversation]:
        return self.splits["test"]


def load_dataset(manifest) -> Dataset:
    """Load every split named by the manifest into validated conversations."""
    if not isinstance(manifest, DatasetManifest):
        manifest = DatasetManifest.load(manifest)
    splits = {}
    for split in manifest.splits:
        records = read_records(manifest.split_path(split))
        splits[split] = group_conversations(records, manifest.num_classes)
    return Dataset(manifest=manifest, splits=splits)


def regroup_labels(records: Iterable[UtteranceRecord], class_names: Sequence[str],
                   grouping: dict[str, str]) -> tuple[list[UtteranceRecord], list[str]]:
    """Remap fine labels to coarse ones; returns new records and coarse names.

    Coarse class order follows first appearance while scanning class_names.
    """
    coarse_names: list[str] = []
    fine_to_coarse: dict[int, int] = {}
    for idx, fine in enumerate(class_names):
        if fine not in grouping:
            raise ValidationError(f"coarse_grouping missing class {fine!r}")
        coarse = grouping[fine]
        if coarse not in coarse_names:
            coarse_names.append(coarse)
        fine_to_coarse[idx] = coarse_names.index(coarse)

    remapped = []
    for rec in records:
        if rec.label not in fine_to_coarse:
            raise ValidationError(f"record label {rec.label} has no coarse mapping")
        remapped.append(UtteranceRecord(dialogue_id=rec.dialogue_id, turn=rec.turn,
                                        speaker=rec.speaker, label=fine_to_coarse[rec.label],
                                        features=rec.features, shifted=rec.shifted))
    return remapped, coarse_names


# ---------------------------------------------------------------------------
# Synthetic conversations


@dataclass
class SynthConfig:
    """Generator settings. Defaults give the desk-scale verification dataset.

    Emotion labels follow a per-speaker Markov chain of *intended* classes
    (stay with probability markov_stay, otherwise uniform over the rest).
    Each non-first turn of a speaker shifts with probability p_shift: a
    shifted turn's label is drawn uniformly over all classes and its
    utterance vector carries noise only; the signal identifying it is written
    into the *previous* utterance's cs_react_listener channel instead. The
    cs_intent channel carries the speaker's intended next class, which equals
    the realized label only for unshifted turns, so shifted turns are
    classifiable only by propagating listener commonsense from the prior step.
    """

    seed: int = 0
    num_dialogues: dict[str, int] = field(
        default_factory=lambda: {"train": 300, "val": 50, "test": 50})
    speaker_choices: tuple[int, ...] = (2, 3)
    length_range: tuple[int, int] = (4, 10)
    num_classes: int = 4
    p_shift: float = 0.3
    noise_scale: float = 0.1
    d_x: int = 24
    d_cs: int = 16
    markov_stay: float = 0.4

    def validate(self) -> None:
        if self.num_classes < 2:
            raise ValidationError("num_classes must be at least 2")
        if not 0.0 <= self.p_shift <= 1.0:
            raise ValidationError("p_shift must lie in [0, 1]")
        if not 0.0 <= self.markov_stay <= 1.0:
            raise ValidationError("markov_stay must lie in [0, 1]")
        if self.noise_scale < 0:
            raise ValidationError("noise_scale must be non-negative")
        if self.length_range[0] < 1 or self.length_range[1] < self.length_range[0]:
            raise ValidationError("length_range must be a non-empty positive range")
        if min(self.speaker_choices) < 1:
            raise ValidationError("speaker_choices must be positive")
        if self.d_x < 1 or self.d_cs < 1:
            raise ValidationError("feature dimensions must be positive")
        if any(n < 0 for n in self.num_dialogues.values()):
            raise ValidationError("num_dialogues must be non-negative")


@dataclass
class SynthStats:
    eligible_turns: int = 0      # turns where the shift Bernoulli was drawn
    shifted_turns: int = 0


def synth_generate(config: SynthConfig) -> tuple[dict[str, list[UtteranceRecord]],
                                                 DatasetManifest, SynthStats]:
    """Deterministically generate records per split plus a matching manifest."""
    config.validate()
    rng = np.random.Generator(np.random.PCG64(config.seed))
    c = config.num_classes

    embeddings = rng.normal(size=(c, config.d_x))
    embeddings /= np.linalg.norm(embeddings, axis=1, keepdims=True)
    projection = rng.normal(size=(config.d_x, config.d_cs)) / np.sqrt(config.d_x)

    def cs_vec(class_idx: int) -> list[float]:
        clean = embeddings[class_idx] @ projection
        return (clean + config.noise_scale * rng.normal(size=config.d_cs)).tolist()

    def markov_next(current: int) -> int:
        if rng.random() < config.markov_stay:
            return current
        options = [k for k in range(c) if k != current]
        return int(options[rng.integers(len(options))])

    stats = SynthStats()
    splits: dict[str, list[UtteranceRecord]] = {}
    for split, count in config.num_dialogues.items():
        records: list[UtteranceRecord] = []
        for d in range(count):
            dialogue_id = f"{split}-{d:05d}"
            m = int(config.speaker_choices[rng.integers(len(config.speaker_choices))])
            length = int(rng.integers(config.length_range[0], config.length_range[1] + 1))
            # No immediate self-replies: the previous turn's listener channel can
            # always reach the next speaker's state.
            order = [int(rng.integers(m))]
            for _ in range(length - 1):
                others = [k for k in range(m) if k != order[-1]]
                order.append(int(others[rng.integers(len(others))]))

            pending_intent: dict[int, int] = {}
            dialogue_records: list[UtteranceRecord] = []
            for t in range(length):
                speaker = order[t]
                first_turn = speaker not in pending_intent
                intended = int(rng.integers(c)) if first_turn else pending_intent[speaker]
                if first_turn:
                    shifted = False
                else:
                    stats.eligible_turns += 1
                    shifted = bool(rng.random() < config.p_shift)
                    stats.shifted_turns += int(shifted)
                label = int(rng.integers(c)) if shifted else intended

                noise = config.noise_scale * rng.normal(size=config.d_x)
                x = noise if shifted else embeddings[label] + noise
                if shifted:
                    # The only signal carrying a shifted label lives in the
                    # prior record's listener-reaction channel.
                    dialogue_records[t - 1].features.cs_react_listener = Tensor(cs_vec(label))

                # The chain runs over intended classes; a shift is an excursion
                # that neither the speaker's own channels nor the intent stream
                # reveal (this turn's channels describe the intended class).
                pending_intent[speaker] = markov_next(intended)
                features = FeatureBundle(
                    x=Tensor(x.tolist()),
                    cs_intent=Tensor(cs_vec(pending_intent[speaker])),
                    cs_effect_speaker=Tensor(cs_vec(intended)),
                    cs_react_speaker=Tensor(cs_vec(intended)),
                    cs_effect_listener=Tensor(cs_vec(intended)),
                    cs_react_listener=Tensor(cs_vec(intended)),
                )
                dialogue_records.append(UtteranceRecord(
                    dialogue_id=dialogue_id, turn=t, speaker=f"spk{speaker}",
                    label=label, features=features, shifted=shifted))
            records.extend(dialogue_records)
        splits[split] = records

    manifest = DatasetManifest(
        class_names=[f"class{k}" for k in range(c)],
        splits={split: f"{split}.jsonl" for split in config.num_dialogues},
        micro_f1_excluded=[],
        coarse_grouping=None,
        headline_metric="accuracy",
    )
    return splits, manifest, stats


def write_synth_dataset(config: SynthConfig, out_dir) -> tuple[Path, SynthStats]:
    """Generate and write a synthetic dataset; returns the manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    splits, manifest, stats = synth_generate(config)
    for split, records in splits.items():
        write_records(records, out_dir / manifest.splits[split])
    manifest.base_dir = out_dir
    manifest_path = out_dir / "manifest.json"
    manifest.save(manifest_path)
    return manifest_path, stats
