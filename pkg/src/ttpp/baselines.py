"""Alternative aggregators and predictors for the comparison grid.

Aggregation: a 3-layer strided temporal convolution stack, or a
single-layer LSTM encoder. Prediction: an LSTM decoder seeded with the
aggregated vector, or a single-shot block that predicts any one horizon
directly from a one-hot horizon tag. All share the interfaces of the
transformer aggregator and progressive predictor so every pairing
composes without special cases.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .prediction import (
    PredictionBlockParams,
    Rollout,
    classify,
    init_block_params,
    prediction_block,
)
from .tensor import (
    Parameter,
    Tensor,
    concat,
    glorot,
    matmul,
    mul,
    relu,
    reshape,
    sigmoid,
    take,
    tanh,
)

CONV_LAYERS = 3
CONV_KERNEL = 3
CONV_STRIDE = 2
CONV_PAD = 1  # symmetric zero rows per layer


@dataclass
class Conv1DStack:
    """Three temporal conv layers, each kernel 3, stride 2, d_m -> d_m."""

    weights: list[Parameter]  # each (3*d_m, d_m)
    biases: list[Parameter]  # each (d_m,)

    @property
    def d_m(self) -> int:
        return self.weights[0].shape[1]

    def parameters(self) -> list[Parameter]:
        return [*self.weights, *self.biases]


def init_conv1d_params(d_m: int, rng, prefix: str = "conv1d") -> Conv1DStack:
    weights = [
        Parameter(f"{prefix}.w{i}", glorot(rng, CONV_KERNEL * d_m, d_m))
        for i in range(CONV_LAYERS)
    ]
    biases = [
        Parameter(f"{prefix}.b{i}", np.zeros(d_m)) for i in range(CONV_LAYERS)
    ]
    return Conv1DStack(weights, biases)


def _conv_out_len(length: int) -> int:
    return (length + 2 * CONV_PAD - CONV_KERNEL) // CONV_STRIDE + 1


def conv1d_lengths(t: int) -> list[int]:
    """Temporal lengths after each conv layer, e.g. 8 -> [4, 2, 1]."""
    lengths = []
    for _ in range(CONV_LAYERS):
        t = _conv_out_len(t)
        lengths.append(t)
    return lengths


def conv1d_aggregate(f_seq: Tensor, params: Conv1DStack, shortcut: bool = True) -> Tensor:
    """Reduce the T x d_m window to 1 x d_m through three strided convs.

    Each layer zero-pads one row top and bottom; ReLU sits between layers.
    With the default T=8 the lengths run 8 -> 4 -> 2 -> 1. Any T not
    reducing to exactly 1 is rejected.
    """
    t = f_seq.shape[0]
    if conv1d_lengths(t)[-1] != 1 or min(conv1d_lengths(t)) < 1:
        raise ValueError(
            f"conv1d_aggregate: T={t} does not reduce to length 1 "
            f"(lengths {conv1d_lengths(t)})"
        )
    d_m = f_seq.shape[1]
    x = f_seq
    for layer in range(CONV_LAYERS):
        length = x.shape[0]
        out_len = _conv_out_len(length)
        padded = concat([Tensor(np.zeros((CONV_PAD, d_m))), x, Tensor(np.zeros((CONV_PAD, d_m)))], axis=0)
        rows = np.concatenate(
            [np.arange(j * CONV_STRIDE, j * CONV_STRIDE + CONV_KERNEL) for j in range(out_len)]
        )
        windows = reshape(take(padded, rows), (out_len, CONV_KERNEL * d_m))
        x = matmul(windows, params.weights[layer].value) + params.biases[layer].value
        if layer < CONV_LAYERS - 1:
            x = relu(x)
    if shortcut:
        x = x + f_seq[t - 1 : t]
    return x


@dataclass
class GateParams:
    w_x: Parameter
    w_h: Parameter
    b: Parameter

    def parameters(self) -> list[Parameter]:
        return [self.w_x, self.w_h, self.b]


@dataclass
class LSTMParams:
    """Input/forget/cell/output gates, each with x-weights, h-weights, bias."""

    input: GateParams
    forget: GateParams
    cell: GateParams
    output: GateParams

    @property
    def d_h(self) -> int:
        return self.input.w_h.shape[0]

    @property
    def d_in(self) -> int:
        return self.input.w_x.shape[0]

    def parameters(self) -> list[Parameter]:
        return [
            *self.input.parameters(),
            *self.forget.parameters(),
            *self.cell.parameters(),
            *self.output.parameters(),
        ]


def init_lstm_params(d_in: int, d_h: int, rng, prefix: str = "lstm") -> LSTMParams:
    def gate(name: str) -> GateParams:
        return GateParams(
            w_x=Parameter(f"{prefix}.{name}_wx", glorot(rng, d_in, d_h)),
            w_h=Parameter(f"{prefix}.{name}_wh", glorot(rng, d_h, d_h)),
            b=Parameter(f"{prefix}.{name}_b", np.zeros(d_h)),
        )

    return LSTMParams(gate("i"), gate("f"), gate("g"), gate("o"))


def lstm_cell(x: Tensor, h: Tensor, c: Tensor, params: LSTMParams):
    def gate_pre(g: GateParams) -> Tensor:
        return matmul(x, g.w_x.value) + matmul(h, g.w_h.value) + g.b.value

    i = sigmoid(gate_pre(params.input))
    f = sigmoid(gate_pre(params.forget))
    g = tanh(gate_pre(params.cell))
    o = sigmoid(gate_pre(params.output))
    c_new = mul(f, c) + mul(i, g)
    h_new = mul(o, tanh(c_new))
    return h_new, c_new


def lstm_encode(f_seq: Tensor, params: LSTMParams, shortcut: bool = True) -> Tensor:
    """Run the recurrence over the window; the final hidden state is the summary.

    The hidden width must equal the feature width so the optional shortcut
    (+ last observed feature) stays well-typed.
    """
    d_m = f_seq.shape[1]
    if params.d_h != d_m or params.d_in != d_m:
        raise ValueError(
            f"lstm_encode: needs d_h = d_in = d_m, got d_h={params.d_h}, "
            f"d_in={params.d_in}, d_m={d_m}"
        )
    t = f_seq.shape[0]
    h = Tensor(np.zeros((1, d_m)))
    c = Tensor(np.zeros((1, d_m)))
    for step in range(t):
        h, c = lstm_cell(f_seq[step : step + 1], h, c, params)
    if shortcut:
        h = h + f_seq[t - 1 : t]
    return h


def lstm_decode(
    s_t: Tensor,
    f_t: Tensor,
    classifier: Parameter,
    params: LSTMParams,
    horizon: int,
) -> Rollout:
    """Decode l steps: hidden starts at s_t, each hidden state is a feature.

    Step inputs are previous predicted feature (+) previous probability;
    the first step consumes f_t (+) its classified probability. The shared
    classifier scores every hidden state.
    """
    if horizon < 1:
        raise ValueError(f"rollout horizon must be >= 1, got {horizon}")
    h = s_t
    c = Tensor(np.zeros((1, params.d_h)))
    p = classify(f_t, classifier)
    x = concat([f_t, p], axis=-1)
    features = []
    probs = []
    for _ in range(horizon):
        h, c = lstm_cell(x, h, c, params)
        p = classify(h, classifier)
        features.append(h)
        probs.append(p)
        x = concat([h, p], axis=-1)
    return Rollout(concat(features, axis=0), concat(probs, axis=0))


@dataclass
class SSPParams:
    """One block predicting any single horizon, tagged by a one-hot slot."""

    block: PredictionBlockParams
    classifier: Parameter
    horizon: int

    def parameters(self) -> list[Parameter]:
        return [*self.block.parameters(), self.classifier]


def init_ssp_params(
    d_m: int, n_classes: int, horizon: int, rng, prefix: str = "ssp"
) -> SSPParams:
    in_dim = 2 * d_m + n_classes + horizon
    return SSPParams(
        block=init_block_params(in_dim, d_m, rng, f"{prefix}.block"),
        classifier=Parameter(f"{prefix}.classifier", glorot(rng, d_m, n_classes)),
        horizon=horizon,
    )


def ssp_predict(
    s_t: Tensor,
    f_t: Tensor,
    p_t: Tensor,
    params: SSPParams,
    tau: int,
    mode: str = "eval",
    rng=None,
    rate: float = 0.1,
):
    """Predict the single horizon tau with no chaining.

    The block input is s_t (+) f_t (+) p_t (+) onehot(tau); every horizon
    is independent, so they can be computed in any order.
    """
    if not 1 <= tau <= params.horizon:
        raise ValueError(f"tau={tau} outside 1..{params.horizon}")
    tag = np.zeros((1, params.horizon))
    tag[0, tau - 1] = 1.0
    x = concat([s_t, f_t, p_t, Tensor(tag)], axis=-1)
    feature = prediction_block(x, params.block, mode, rng, rate)
    return feature, classify(feature, params.classifier)


def ssp_rollout(
    s_t: Tensor,
    f_t: Tensor,
    params: SSPParams,
    horizon: int,
    mode: str = "eval",
    rng=None,
    rate: float = 0.1,
) -> Rollout:
    if horizon < 1 or horizon > params.horizon:
        raise ValueError(f"horizon={horizon} outside 1..{params.horizon}")
    p_t = classify(f_t, params.classifier)
    features = []
    probs = []
    for tau in range(1, horizon + 1):
        f, p = ssp_predict(s_t, f_t, p_t, params, tau, mode, rng, rate)
        features.append(f)
        probs.append(p)
    return Rollout(concat(features, axis=0), concat(probs, axis=0))
