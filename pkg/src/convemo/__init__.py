"""Commonsense-aware emotion recognition in conversation.

A trainable recurrent state machine over dialogue turns: per-utterance
features plus five commonsense channels drive shared context, per-participant
internal/external/intent states, and a global emotion state, classified per
utterance. Built on a small reverse-mode autodiff engine; everything is
deterministic given a seed.
"""

from .autodiff import (
    DimensionError,
    NonFiniteError,
    Tape,
    Tensor,
    UsageError,
    backward,
    check_gradients,
)
from .cells import GruParams, LinearParams, gru_step, linear, soft_attention
from .checkpoint import CheckpointError, load_params, save_params
from .data import (
    Conversation,
    Dataset,
    DatasetManifest,
    FeatureBundle,
    ParseError,
    SynthConfig,
    UtteranceRecord,
    ValidationError,
    load_dataset,
    read_records,
    regroup_labels,
    synth_generate,
    write_records,
    write_synth_dataset,
)
from .metrics import EvalReport, build_report, macro_f1, micro_f1_excluding, weighted_f1
from .model import (
    Ablation,
    CellSet,
    ConversationState,
    ModelDims,
    ModelParams,
    ParticipantStates,
    forward,
    init_params,
    predict,
    step,
)
from .training import (
    AdamState,
    TrainConfig,
    TrainingDiverged,
    TrainResult,
    adam_init,
    adam_update,
    evaluate,
    run_gradcheck,
    train,
)

__version__ = "0.1.0"
