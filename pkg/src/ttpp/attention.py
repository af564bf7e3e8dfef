"""Temporal transformer aggregation.

The current chunk feature queries the history of earlier chunk features
through multi-head scaled dot-product attention; the attended summary is
added back onto the (position-encoded) query through a shortcut, giving a
single aggregated vector per observed window.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .tensor import Parameter, Tensor, concat, glorot, matmul, mul, softmax


@dataclass
class TTMParams:
    """Per-head query/key/value projections plus the output projection.

    Heads project d_m down to d_k = d_m / n_heads; the concatenated head
    outputs are mapped back to d_m by `wo`.
    """

    wq: list[Parameter]
    wk: list[Parameter]
    wv: list[Parameter]
    wo: Parameter

    @property
    def n_heads(self) -> int:
        return len(self.wq)

    @property
    def d_m(self) -> int:
        return self.wq[0].shape[0]

    def parameters(self) -> list[Parameter]:
        return [*self.wq, *self.wk, *self.wv, self.wo]


def init_ttm_params(d_m: int, n_heads: int, rng, prefix: str = "ttm") -> TTMParams:
    if d_m % n_heads != 0:
        raise ValueError(f"n_heads={n_heads} must divide d_m={d_m}")
    d_k = d_m // n_heads
    wq = [Parameter(f"{prefix}.q{i}", glorot(rng, d_m, d_k)) for i in range(n_heads)]
    wk = [Parameter(f"{prefix}.k{i}", glorot(rng, d_m, d_k)) for i in range(n_heads)]
    wv = [Parameter(f"{prefix}.v{i}", glorot(rng, d_m, d_k)) for i in range(n_heads)]
    wo = Parameter(f"{prefix}.o", glorot(rng, d_m, d_m))
    return TTMParams(wq, wk, wv, wo)


def positional_encoding(length: int, d_m: int) -> np.ndarray:
    """Sinusoidal position table of shape (length, d_m).

    Entry (pos, i) is sin(pos / 10000**(i/d_m)) for even i and
    cos(pos / 10000**(i/d_m)) for odd i. The exponent uses i directly, so
    adjacent sin/cos dimensions run at slightly different frequencies
    (unlike the classic pairing that shares one frequency per 2i).
    """
    if length < 1 or d_m < 2:
        raise ValueError(f"need length >= 1 and d_m >= 2, got {length}, {d_m}")
    pos = np.arange(length, dtype=np.float64)[:, None]
    i = np.arange(d_m, dtype=np.float64)[None, :]
    angle = pos / np.power(10000.0, i / d_m)
    table = np.where(np.arange(d_m) % 2 == 0, np.sin(angle), np.cos(angle))
    return table


def attention(q: Tensor, k: Tensor, v: Tensor, scale_dim: int | None = None):
    """softmax(Q K^T / sqrt(scale_dim)) V.

    `scale_dim` defaults to the query width; multi-head callers pass the
    full model width so projected heads keep the same temperature.
    Returns (output, weights); weight rows sum to 1.
    """
    if k.shape[0] == 0:
        raise ValueError("attention: empty memory (need at least one key row)")
    if scale_dim is None:
        scale_dim = q.shape[-1]
    scores = mul(matmul(q, k.T), 1.0 / math.sqrt(scale_dim))
    weights = softmax(scores)
    return matmul(weights, v), weights


def multi_head(query: Tensor, memory: Tensor, params: TTMParams):
    """Concat per-head attention outputs and project back to d_m.

    Returns (output 1 x d_m, weights (n_heads, memory_len) ndarray).
    """
    if memory.shape[0] < 1:
        raise ValueError("multi_head: empty memory (need t >= 2 observed chunks)")
    d_m = query.shape[-1]
    heads = []
    weights = np.empty((params.n_heads, memory.shape[0]))
    for i in range(params.n_heads):
        h, w = attention(
            matmul(query, params.wq[i].value),
            matmul(memory, params.wk[i].value),
            matmul(memory, params.wv[i].value),
            scale_dim=d_m,
        )
        heads.append(h)
        weights[i] = w.data[0]
    out = matmul(concat(heads, axis=-1), params.wo.value)
    return out, weights


def aggregate(f_seq: Tensor, params: TTMParams, pe: np.ndarray, shortcut: bool = True):
    """Aggregate T observed chunk features into one vector.

    Position rows are added to all T inputs; the last (position-encoded)
    row queries the earlier T-1 rows as memory, and the attended output is
    added back onto the query. Returns (1 x d_m summary,
    (n_heads, T-1) attention weights).
    """
    t = f_seq.shape[0]
    if t < 2:
        raise ValueError(f"aggregate: sequence too short, need T >= 2, got {t}")
    if pe.shape[0] < t or pe.shape[1] != f_seq.shape[1]:
        raise ValueError(
            f"aggregate: position table {pe.shape} cannot cover input {f_seq.shape}"
        )
    x = f_seq + Tensor(pe[:t])
    query = x[t - 1 : t]
    memory = x[: t - 1]
    attended, weights = multi_head(query, memory, params)
    out = attended + query if shortcut else attended
    return out, weights
