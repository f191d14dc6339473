"""Commonsense relation features from a pretrained knowledge-transformer.

The generative decoder is discarded: each utterance is concatenated with a
relation phrase, run through the encoder stack, and the final time-step's
activation is kept (768-d for the default base model). Five relations per
utterance: speaker intent, effect on speaker, reaction of speaker, effect on
listeners, reaction of listeners.
"""

from __future__ import annotations

import numpy as np
import torch

from .config import CheckpointUnavailable, ExtractionConfig, RELATIONS
from .transcripts import TranscriptUtterance
from .utterance_features import load_pretrained


def extract_commonsense_features(
        config: ExtractionConfig,
        rows: list[TranscriptUtterance]) -> dict[str, np.ndarray]:
    """Returns {feature_key: float32 array [n, d_cs]} for the five relations."""
    torch.manual_seed(config.seed)
    tokenizer, model = load_pretrained(config.commonsense_model)
    device = torch.device(config.device)
    model.to(device)
    model.eval()

    outputs: dict[str, list[np.ndarray]] = {key: [] for key in RELATIONS}
    with torch.no_grad():
        for row in rows:
            for key, relation in RELATIONS.items():
                encoded = tokenizer(f"{row.text} {relation}", return_tensors="pt",
                                    truncation=True, max_length=config.max_length)
                encoded = {k: v.to(device) for k, v in encoded.items()
                           if k in ("input_ids", "attention_mask")}
                hidden = model(**encoded).last_hidden_state
                outputs[key].append(hidden[0, -1, :].cpu().numpy())
    return {key: np.stack(vecs).astype(np.float32) for key, vecs in outputs.items()}


def generate_commonsense_text(model_name: str, utterance: str, relation_key: str,
                              max_new_tokens: int = 12, device: str = "cpu") -> str:
    """Greedy discrete inference for one relation; debugging aid only, the
    model consumes the continuous activations."""
    from transformers import AutoModelForCausalLM, AutoTokenizer
    if relation_key not in RELATIONS:
        raise KeyError(f"unknown relation {relation_key!r}")
    try:
        tokenizer = AutoTokenizer.from_pretrained(model_name)
        model = AutoModelForCausalLM.from_pretrained(model_name)
    except (OSError, ValueError) as exc:
        raise CheckpointUnavailable(f"could not load {model_name!r}: {exc}") from exc
    model.to(device)
    model.eval()
    encoded = tokenizer(f"{utterance} {RELATIONS[relation_key]}", return_tensors="pt")
    with torch.no_grad():
        generated = model.generate(encoded["input_ids"].to(device),
                                   max_new_tokens=max_new_tokens, do_sample=False,
                                   pad_token_id=tokenizer.pad_token_id
                                   or tokenizer.eos_token_id)
    new_tokens = generated[0, encoded["input_ids"].shape[1]:]
    return tokenizer.decode(new_tokens, skip_special_tokens=True).strip()
