"""Context-independent utterance features from a pretrained language model.

The model is first fine-tuned as a sentence classifier on (utterance, emotion
label) pairs: the classification-token activation feeds a small feedforward
head. Afterwards the feature vector for each utterance is the average of the
final four layers' classification-token activations (1024-d for the default
large LM).

For the MELD/EmoryNLP presets the head instead reads the sum of the first and
penultimate layers' classification-token activations, which stabilizes
fine-tuning on those datasets.
"""

from __future__ import annotations

import numpy as np
import torch
from torch import nn

from .config import CheckpointUnavailable, ExtractionConfig
from .transcripts import TranscriptUtterance

_INSTRUCTIONS = (
    "could not load pretrained checkpoint {name!r}: {err}. Download it on a "
    "machine with access (e.g. `huggingface-cli download {name}`) and pass the "
    "local directory via --lm-model / --cs-model."
)


def load_pretrained(name: str):
    from transformers import AutoModel, AutoTokenizer
    try:
        tokenizer = AutoTokenizer.from_pretrained(name)
        model = AutoModel.from_pretrained(name)
    except (OSError, ValueError) as exc:
        raise CheckpointUnavailable(_INSTRUCTIONS.format(name=name, err=exc)) from exc
    return tokenizer, model


class ClassificationHead(nn.Module):
    """Small feedforward classifier over the classification-token activation."""

    def __init__(self, hidden_size: int, num_classes: int, residual: bool):
        super().__init__()
        self.residual = residual
        self.dense = nn.Linear(hidden_size, hidden_size)
        self.out = nn.Linear(hidden_size, num_classes)

    def features(self, hidden_states) -> torch.Tensor:
        # hidden_states[0] is the embedding output; [1] the first layer.
        if self.residual:
            return hidden_states[-2][:, 0, :] + hidden_states[1][:, 0, :]
        return hidden_states[-1][:, 0, :]

    def forward(self, hidden_states) -> torch.Tensor:
        return self.out(torch.tanh(self.dense(self.features(hidden_states))))


def _batches(items, size):
    for start in range(0, len(items), size):
        yield items[start:start + size]


def finetune_and_extract_utterance_features(
        config: ExtractionConfig,
        rows: list[TranscriptUtterance],
        class_names: list[str],
        residual_head: bool) -> np.ndarray:
    """Returns one float32 feature row per input utterance, in input order."""
    torch.manual_seed(config.seed)
    tokenizer, model = load_pretrained(config.utterance_model)
    device = torch.device(config.device)
    model.to(device)

    if config.finetune and config.finetune_epochs > 0:
        _finetune(config, rows, class_names, tokenizer, model, residual_head, device)

    model.eval()
    features = []
    with torch.no_grad():
        for batch in _batches(rows, config.extract_batch_size):
            encoded = tokenizer([r.text for r in batch], return_tensors="pt",
                                padding=True, truncation=True,
                                max_length=config.max_length).to(device)
            hidden_states = model(**encoded, output_hidden_states=True).hidden_states
            # average of the final four layers at the classification token
            stacked = torch.stack([layer[:, 0, :] for layer in hidden_states[-4:]])
            features.append(stacked.mean(dim=0).cpu().numpy())
    return np.concatenate(features, axis=0).astype(np.float32)


def _finetune(config, rows, class_names, tokenizer, model, residual_head, device):
    head = ClassificationHead(model.config.hidden_size, len(class_names), residual_head)
    head.to(device)
    optimizer = torch.optim.Adam(list(model.parameters()) + list(head.parameters()),
                                 lr=config.finetune_lr)
    label_index = {name: idx for idx, name in enumerate(class_names)}
    targets = torch.tensor([label_index[r.label] for r in rows], dtype=torch.long)
    loss_fn = nn.CrossEntropyLoss()
    generator = torch.Generator().manual_seed(config.seed)

    model.train()
    head.train()
    for _ in range(config.finetune_epochs):
        order = torch.randperm(len(rows), generator=generator).tolist()
        for indices in _batches(order, config.finetune_batch_size):
            batch = [rows[i] for i in indices]
            encoded = tokenizer([r.text for r in batch], return_tensors="pt",
                                padding=True, truncation=True,
                                max_length=config.max_length).to(device)
            hidden_states = model(**encoded, output_hidden_states=True).hidden_states
            logits = head(hidden_states)
            loss = loss_fn(logits, targets[indices].to(device))
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
