"""Per-utterance recurrent state machine for conversational emotion recognition.

Each utterance carries a context-independent feature vector plus five
commonsense channels (intent / effect / reaction, split between the speaker
and the listeners). A step updates, in this fixed order:

  1. attention over the context history, queried by the utterance vector
     (zero vector when there is no history yet)
  2. the shared context state (input: utterance + speaker's previous
     internal and external states)
  3. every participant's internal state (speaker consumes effect-on-speaker,
     listeners consume effect-on-listeners)
  4. every participant's external state (speaker: reaction-of-speaker,
     listeners: reaction-of-listeners; both also see attention + utterance)
  5. the speaker's intent state (intent channel + fresh internal state);
     listener intent states are carried over untouched
  6. the global emotion state (utterance + the speaker's fresh internal,
     external, and intent states), from which the classifier reads logits

All participants share one parameter set per state kind, so participant
identity is positional only. All initial states are zero vectors.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import autodiff
from .autodiff import Tensor, UsageError, concat, zeros
from .cells import (
    GruParams,
    LinearParams,
    gru_step,
    init_gru,
    init_linear,
    linear,
    soft_attention,
)

UNIDIRECTIONAL = "unidirectional"
BIDIRECTIONAL = "bidirectional"


@dataclass
class FeatureBundle:
    """Input vectors for one utterance: utterance feature + 5 commonsense channels."""

    x: Tensor
    cs_intent: Tensor          # intent of speaker
    cs_effect_speaker: Tensor
    cs_react_speaker: Tensor
    cs_effect_listener: Tensor
    cs_react_listener: Tensor

    @property
    def d_x(self) -> int:
        return self.x.data.shape[1]

    @property
    def d_cs(self) -> int:
        return self.cs_intent.data.shape[1]

    def channels(self) -> list[Tensor]:
        return [self.cs_intent, self.cs_effect_speaker, self.cs_react_speaker,
                self.cs_effect_listener, self.cs_react_listener]


@dataclass
class Ablation:
    """Zero out speaker-side (intent/effect/reaction of speaker) and/or
    listener-side (effect/reaction of listeners) commonsense inputs."""

    no_speaker_cs: bool = False
    no_listener_cs: bool = False


@dataclass
class ParticipantStates:
    """Per-participant hidden rows; index = participant index within the dialogue."""

    internal: list[Tensor]
    external: list[Tensor]
    intent: list[Tensor]

    @classmethod
    def initial(cls, num_participants: int, hidden: int) -> "ParticipantStates":
        return cls(
            internal=[zeros(1, hidden) for _ in range(num_participants)],
            external=[zeros(1, hidden) for _ in range(num_participants)],
            intent=[zeros(1, hidden) for _ in range(num_participants)],
        )


@dataclass
class ConversationState:
    context_history: list[Tensor]
    attention: Tensor
    emotion: Tensor
    participants: ParticipantStates

    @classmethod
    def initial(cls, num_participants: int, hidden: int) -> "ConversationState":
        return cls(
            context_history=[],
            attention=zeros(1, hidden),
            emotion=zeros(1, hidden),
            participants=ParticipantStates.initial(num_participants, hidden),
        )


@dataclass(frozen=True)
class ModelDims:
    d_x: int
    d_cs: int
    hidden: int
    num_classes: int
    bidirectional: bool = False

    @property
    def mode(self) -> str:
        return BIDIRECTIONAL if self.bidirectional else UNIDIRECTIONAL


@dataclass
class CellSet:
    """One directional parameter set: the five state cells plus the attention map."""

    gru_c: GruParams
    gru_q: GruParams   # internal state
    gru_r: GruParams   # external state
    gru_i: GruParams   # intent state
    gru_e: GruParams   # emotion state
    attn_proj: LinearParams

    @classmethod
    def init(cls, dims: ModelDims, rng: np.random.Generator) -> "CellSet":
        h, dx, dcs = dims.hidden, dims.d_x, dims.d_cs
        return cls(
            gru_c=init_gru(dx + 2 * h, h, rng),
            gru_q=init_gru(h + dcs, h, rng),
            gru_r=init_gru(h + dx + dcs, h, rng),
            gru_i=init_gru(dcs + h, h, rng),
            gru_e=init_gru(dx + 3 * h, h, rng),
            attn_proj=init_linear(h, dx, rng),
        )

    def named_tensors(self, prefix: str = "") -> list[tuple[str, Tensor]]:
        out = []
        for cell_name in ("gru_c", "gru_q", "gru_r", "gru_i", "gru_e"):
            cell: GruParams = getattr(self, cell_name)
            out.append((f"{prefix}{cell_name}.input_weights", cell.input_weights))
            out.append((f"{prefix}{cell_name}.hidden_weights", cell.hidden_weights))
            out.append((f"{prefix}{cell_name}.biases", cell.biases))
        out.append((f"{prefix}attn_proj.weight", self.attn_proj.weight))
        out.append((f"{prefix}attn_proj.bias", self.attn_proj.bias))
        return out


@dataclass
class ModelParams:
    """All trainable parameters. ``reverse`` is present in bidirectional mode only."""

    dims: ModelDims
    cells: CellSet
    classifier: LinearParams
    reverse: Optional[CellSet] = None

    def named_tensors(self) -> list[tuple[str, Tensor]]:
        named = self.cells.named_tensors()
        if self.reverse is not None:
            named += self.reverse.named_tensors("reverse.")
        named.append(("classifier.weight", self.classifier.weight))
        named.append(("classifier.bias", self.classifier.bias))
        return named

    def zero_grads(self) -> None:
        for _, t in self.named_tensors():
            t.grad = None

    def copy(self) -> "ModelParams":
        clone = init_params(self.dims, seed=0)
        for (_, src), (_, dst) in zip(self.named_tensors(), clone.named_tensors()):
            dst.data = src.data.copy()
        return clone


def init_params(dims: ModelDims, seed: int) -> ModelParams:
    rng = np.random.Generator(np.random.PCG64(seed))
    cells = CellSet.init(dims, rng)
    reverse = CellSet.init(dims, rng) if dims.bidirectional else None
    classifier_in = 2 * dims.hidden if dims.bidirectional else dims.hidden
    classifier = init_linear(classifier_in, dims.num_classes, rng)
    return ModelParams(dims=dims, cells=cells, classifier=classifier, reverse=reverse)


def _masked(channel: Tensor, off: bool) -> Tensor:
    return zeros(*channel.data.shape) if off else channel


def step(state: ConversationState, cells: CellSet, feats: FeatureBundle,
         speaker: int, ablation: Optional[Ablation] = None) -> ConversationState:
    """Advance one utterance, returning the successor state.

    Listener intent tensors are carried over by reference, so the frozen-intent
    contract holds bit for bit.
    """
    ablation = ablation or Ablation()
    num_participants = len(state.participants.internal)
    if not 0 <= speaker < num_participants:
        raise UsageError(f"speaker index {speaker} out of range for {num_participants} participants")

    x = feats.x
    cs_intent = _masked(feats.cs_intent, ablation.no_speaker_cs)
    cs_effect_spk = _masked(feats.cs_effect_speaker, ablation.no_speaker_cs)
    cs_react_spk = _masked(feats.cs_react_speaker, ablation.no_speaker_cs)
    cs_effect_lis = _masked(feats.cs_effect_listener, ablation.no_listener_cs)
    cs_react_lis = _masked(feats.cs_react_listener, ablation.no_listener_cs)

    prev = state.participants

    if state.context_history:
        attention, _ = soft_attention(state.context_history, x, cells.attn_proj)
    else:
        attention = zeros(1, cells.gru_c.hidden_size)

    context_prev = state.context_history[-1] if state.context_history \
        else zeros(1, cells.gru_c.hidden_size)
    context = gru_step(cells.gru_c,
                       context_prev,
                       concat([x, prev.internal[speaker], prev.external[speaker]]))

    internal_in_speaker = concat([attention, cs_effect_spk])
    internal_in_listener = concat([attention, cs_effect_lis])
    internal = [gru_step(cells.gru_q, prev.internal[j],
                         internal_in_speaker if j == speaker else internal_in_listener)
                for j in range(num_participants)]

    external_in_speaker = concat([attention, x, cs_react_spk])
    external_in_listener = concat([attention, x, cs_react_lis])
    external = [gru_step(cells.gru_r, prev.external[j],
                         external_in_speaker if j == speaker else external_in_listener)
                for j in range(num_participants)]

    intent = list(prev.intent)
    intent[speaker] = gru_step(cells.gru_i, prev.intent[speaker],
                               concat([cs_intent, internal[speaker]]))

    emotion = gru_step(cells.gru_e, state.emotion,
                       concat([x, internal[speaker], external[speaker], intent[speaker]]))

    return ConversationState(
        context_history=state.context_history + [context],
        attention=attention,
        emotion=emotion,
        participants=ParticipantStates(internal=internal, external=external, intent=intent),
    )


def _emotion_trajectory(conv: Sequence[tuple[FeatureBundle, int]], cells: CellSet,
                        hidden: int, ablation: Optional[Ablation]) -> list[Tensor]:
    num_participants = max(speaker for _, speaker in conv) + 1
    state = ConversationState.initial(num_participants, hidden)
    emotions = []
    for feats, speaker in conv:
        state = step(state, cells, feats, speaker, ablation)
        emotions.append(state.emotion)
    return emotions


def forward(conv: Sequence[tuple[FeatureBundle, int]], params: ModelParams,
            mode: Optional[str] = None, ablation: Optional[Ablation] = None,
            dropout_mask: Optional[Tensor] = None) -> list[Tensor]:
    """Run the recurrence over a conversation and return per-utterance logits.

    In bidirectional mode a second, independent parameter set consumes the
    reversed utterance order; position t is classified from the concatenation
    of both directions' emotion states. ``dropout_mask``, when given, is
    multiplied onto each classifier input (off by default; training utility).
    """
    if len(conv) == 0:
        raise UsageError("forward requires a non-empty conversation")
    mode = mode or params.dims.mode
    if mode not in (UNIDIRECTIONAL, BIDIRECTIONAL):
        raise UsageError(f"unknown mode {mode!r}")
    if (mode == BIDIRECTIONAL) != params.dims.bidirectional:
        raise UsageError(f"parameters were initialized for {params.dims.mode} mode")

    hidden = params.dims.hidden
    emotions = _emotion_trajectory(conv, params.cells, hidden, ablation)

    if mode == BIDIRECTIONAL:
        reversed_emotions = _emotion_trajectory(list(reversed(conv)), params.reverse,
                                                hidden, ablation)
        emotions = [concat([fwd, bwd])
                    for fwd, bwd in zip(emotions, reversed(reversed_emotions))]

    logits = []
    for emotion in emotions:
        if dropout_mask is not None:
            emotion = autodiff.mul(emotion, dropout_mask)
        logits.append(linear(params.classifier, emotion))
    return logits


def predict(logits: Tensor) -> int:
    """Argmax class index; ties break toward the lowest index."""
    return int(np.argmax(logits.data[0]))


def make_dropout_mask(hidden: int, rate: float, rng: np.random.Generator,
                      bidirectional: bool = False) -> Optional[Tensor]:
    """Inverted-dropout mask for the classifier input, or None when rate is 0."""
    if rate <= 0.0:
        return None
    width = 2 * hidden if bidirectional else hidden
    keep = (rng.random((1, width)) >= rate).astype(np.float64)
    return Tensor(keep / (1.0 - rate))
