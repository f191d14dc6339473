"""Feature extraction for the conversational emotion model: pretrained-LM
utterance vectors plus five commonsense relation vectors per utterance,
written in the model's feature-file format."""

from .commonsense_features import extract_commonsense_features, generate_commonsense_text
from .config import (
    COMMONSENSE_DIM,
    DEFAULT_COMMONSENSE_MODEL,
    DEFAULT_UTTERANCE_MODEL,
    RELATIONS,
    UTTERANCE_DIM,
    CheckpointUnavailable,
    ExtractionConfig,
    ExtractionError,
)
from .pipeline import run_extraction
from .transcripts import PRESETS, TranscriptUtterance, class_names_for, read_transcripts
from .utterance_features import finetune_and_extract_utterance_features
from .writer import write_feature_file, write_manifest

__version__ = "0.1.0"
