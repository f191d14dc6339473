"""Differentiable building blocks: GRU cell, linear layer, soft attention.

The GRU follows the standard gated formulation, fixed here because it is the
convention the oracle tests and gradient checks verify against:

    z = sigmoid(W_z y + U_z h + b_z)          update gate
    r = sigmoid(W_r y + U_r h + b_r)          reset gate
    hc = tanh(W_c y + U_c (r * h) + b_c)      candidate (reset applied to h
                                              before the hidden matmul)
    h_new = (1 - z) * h + z * hc

Gate blocks are stored stacked in the fixed order (z, r, candidate).

gru_step and linear run as fused tape kernels (one entry each) with
hand-derived backward rules; both are covered by central-difference checks.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .autodiff import (
    DimensionError,
    Tensor,
    UsageError,
    _checked,
    _stable_sigmoid,
    _wrap,
    matmul,
    record,
    softmax,
    tanh,
    transpose,
    vstack,
)


@dataclass
class GruParams:
    """GRU weights: input_weights [3H,I], hidden_weights [3H,H], biases [1,3H]."""

    input_weights: Tensor
    hidden_weights: Tensor
    biases: Tensor

    @property
    def hidden_size(self) -> int:
        return self.hidden_weights.data.shape[1]

    @property
    def input_size(self) -> int:
        return self.input_weights.data.shape[1]


@dataclass
class LinearParams:
    """Affine map parameters: weight [out,in], bias [1,out]."""

    weight: Tensor
    bias: Tensor


def init_gru(input_size: int, hidden_size: int, rng: np.random.Generator) -> GruParams:
    # Uniform in [-1/sqrt(H), 1/sqrt(H)], the conventional scale-stable choice.
    bound = 1.0 / np.sqrt(hidden_size)
    return GruParams(
        input_weights=Tensor(rng.uniform(-bound, bound, (3 * hidden_size, input_size))),
        hidden_weights=Tensor(rng.uniform(-bound, bound, (3 * hidden_size, hidden_size))),
        biases=Tensor(rng.uniform(-bound, bound, (1, 3 * hidden_size))),
    )


def init_linear(input_size: int, output_size: int, rng: np.random.Generator) -> LinearParams:
    bound = 1.0 / np.sqrt(input_size)
    return LinearParams(
        weight=Tensor(rng.uniform(-bound, bound, (output_size, input_size))),
        bias=Tensor(rng.uniform(-bound, bound, (1, output_size))),
    )


def linear(p: LinearParams, x: Tensor) -> Tensor:
    """Affine map x W^T + b for x of shape [k,in]; bias broadcasts over rows."""
    w, b = p.weight.data, p.bias.data
    if x.data.ndim != 2 or x.data.shape[1] != w.shape[1]:
        raise DimensionError(f"linear input {x.data.shape} vs weight {w.shape}")
    out = _wrap(_checked("linear", x.data @ w.T + b))
    xd = x.data

    def bwd(g):
        return (g @ w, g.T @ xd, g.sum(axis=0, keepdims=True))

    record("linear", out, (x, p.weight, p.bias), bwd)
    return out


def gru_step(p: GruParams, h_prev: Tensor, y: Tensor) -> Tensor:
    """One GRU update; the new hidden state is also the cell output.

    Rows evolve independently, so [k,H] states with [k,I] inputs take one step
    for k sequences at once.
    """
    hidden = p.hidden_size
    if h_prev.data.shape[1] != hidden:
        raise DimensionError(f"gru_step state width {h_prev.data.shape} vs H={hidden}")
    if y.data.shape != (h_prev.data.shape[0], p.input_size):
        raise DimensionError(
            f"gru_step input {y.data.shape}, expected ({h_prev.data.shape[0]}, {p.input_size})")

    w, u, b = p.input_weights.data, p.hidden_weights.data, p.biases.data
    hd, yd = h_prev.data, y.data
    uz, ur, uc = u[:hidden], u[hidden:2 * hidden], u[2 * hidden:]

    gates_in = yd @ w.T + b                      # [k,3H]
    hz = hd @ uz.T
    hr = hd @ ur.T
    z = _stable_sigmoid(gates_in[:, :hidden] + hz)
    r = _stable_sigmoid(gates_in[:, hidden:2 * hidden] + hr)
    rh = r * hd
    hc = np.tanh(gates_in[:, 2 * hidden:] + rh @ uc.T)
    out = _wrap(_checked("gru_step", (1.0 - z) * hd + z * hc))

    def bwd(g):
        dz = g * (hc - hd)
        dhc = g * z
        dh = g * (1.0 - z)
        da_c = dhc * (1.0 - hc * hc)             # pre-tanh
        drh = da_c @ uc
        duc = da_c.T @ rh
        dr = drh * hd
        dh += drh * r
        da_z = dz * z * (1.0 - z)                # pre-sigmoid
        da_r = dr * r * (1.0 - r)
        dh += da_z @ uz + da_r @ ur
        duz = da_z.T @ hd
        dur = da_r.T @ hd
        dgates = np.concatenate([da_z, da_r, da_c], axis=1)
        dw = dgates.T @ yd
        dy = dgates @ w
        db = dgates.sum(axis=0, keepdims=True)
        du = np.concatenate([duz, dur, duc], axis=0)
        return dh, dy, dw, du, db

    record("gru_step", out, (h_prev, y, p.input_weights, p.hidden_weights, p.biases), bwd)
    return out


def soft_attention(history: Sequence[Tensor], query: Tensor,
                   p: LinearParams) -> tuple[Tensor, Tensor]:
    """Pool the context history into one vector, weighted against ``query``.

    Each history entry c_i (a [1,D_c] row) is projected to u_i = tanh(W c_i + b);
    weights are the softmax over scores u_i . query, and the pooled vector is
    the weighted sum of the raw history entries. Returns (pooled, weights).

    The caller handles the empty-history case (the first utterance has no
    context to attend over).
    """
    if len(history) == 0:
        raise UsageError("soft_attention requires a non-empty history")
    if p.weight.data.shape[0] != query.data.shape[1]:
        raise DimensionError(
            f"attention projection maps to {p.weight.data.shape[0]}, query has {query.data.shape[1]}")
    stacked = vstack(history)                    # [t-1, D_c]
    projected = tanh(linear(p, stacked))         # [t-1, D_x]
    scores = transpose(matmul(projected, transpose(query)))  # [1, t-1]
    weights = softmax(scores)
    pooled = matmul(weights, stacked)            # [1, D_c]
    return pooled, weights
