"""Progressive multi-step prediction.

From the aggregated history vector and the current feature, an initial
block predicts the next chunk feature; a single shared block then chains
forward, each step consuming the aggregated history again (skip
connection) plus its own previous feature and probability predictions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import (
    Parameter,
    Tensor,
    concat,
    dropout,
    glorot,
    layer_norm,
    matmul,
    relu,
    softmax,
)


@dataclass
class PredictionBlockParams:
    """Two FC layers (in -> d_m/2 -> d_m) plus layer-norm gain/bias."""

    fc1_w: Parameter
    fc1_b: Parameter
    fc2_w: Parameter
    fc2_b: Parameter
    ln_gain: Parameter
    ln_bias: Parameter

    @property
    def in_dim(self) -> int:
        return self.fc1_w.shape[0]

    @property
    def out_dim(self) -> int:
        return self.fc2_w.shape[1]

    def parameters(self) -> list[Parameter]:
        return [self.fc1_w, self.fc1_b, self.fc2_w, self.fc2_b, self.ln_gain, self.ln_bias]


@dataclass
class PPMParams:
    """Initial block, the shared progressive block, and the classifier.

    The progressive block is one parameter set reused by every step after
    the first; the classifier is a bias-free d_m x C matrix shared by the
    current frame and all predicted steps.
    """

    initial: PredictionBlockParams
    progressive: PredictionBlockParams
    classifier: Parameter

    def parameters(self) -> list[Parameter]:
        return [
            *self.initial.parameters(),
            *self.progressive.parameters(),
            self.classifier,
        ]


@dataclass
class Rollout:
    """l predicted (feature, probability) pairs, stacked row-wise."""

    features: Tensor  # (horizon, d_m)
    probs: Tensor  # (horizon, n_classes)

    @property
    def horizon(self) -> int:
        return self.features.shape[0]


def init_block_params(in_dim: int, d_m: int, rng, prefix: str) -> PredictionBlockParams:
    if d_m % 2 != 0:
        raise ValueError(f"d_m must be even, got {d_m}")
    hidden = d_m // 2
    return PredictionBlockParams(
        fc1_w=Parameter(f"{prefix}.fc1_w", glorot(rng, in_dim, hidden)),
        fc1_b=Parameter(f"{prefix}.fc1_b", np.zeros(hidden)),
        fc2_w=Parameter(f"{prefix}.fc2_w", glorot(rng, hidden, d_m)),
        fc2_b=Parameter(f"{prefix}.fc2_b", np.zeros(d_m)),
        ln_gain=Parameter(f"{prefix}.ln_gain", np.ones(d_m)),
        ln_bias=Parameter(f"{prefix}.ln_bias", np.zeros(d_m)),
    )


def init_ppm_params(d_m: int, n_classes: int, rng, prefix: str = "ppm") -> PPMParams:
    in_dim = 2 * d_m + n_classes
    return PPMParams(
        initial=init_block_params(in_dim, d_m, rng, f"{prefix}.initial"),
        progressive=init_block_params(in_dim, d_m, rng, f"{prefix}.progressive"),
        classifier=Parameter(f"{prefix}.classifier", glorot(rng, d_m, n_classes)),
    )


def classify(f: Tensor, w_c: Parameter) -> Tensor:
    """Bias-free linear classifier followed by softmax."""
    return softmax(matmul(f, w_c.value))


def prediction_block(
    x: Tensor,
    params: PredictionBlockParams,
    mode: str = "eval",
    rng=None,
    rate: float = 0.1,
) -> Tensor:
    """fc1 -> ReLU -> fc2 -> layer norm -> dropout."""
    if x.shape[-1] != params.in_dim:
        raise ValueError(
            f"prediction_block: input extent {x.shape[-1]} != expected {params.in_dim}"
        )
    h = relu(matmul(x, params.fc1_w.value) + params.fc1_b.value)
    y = matmul(h, params.fc2_w.value) + params.fc2_b.value
    y = layer_norm(y, params.ln_gain, params.ln_bias)
    return dropout(y, rate, mode, rng)


def _roll(
    s_t: Tensor,
    f_t: Tensor,
    params: PPMParams,
    horizon: int,
    mode: str,
    rng,
    rate: float,
    feed_features: bool,
) -> Rollout:
    if horizon < 1:
        raise ValueError(f"rollout horizon must be >= 1, got {horizon}")
    d_m = s_t.shape[-1]
    p = classify(f_t, params.classifier)
    x = concat([s_t, f_t, p], axis=-1)
    f = prediction_block(x, params.initial, mode, rng, rate)
    p = classify(f, params.classifier)
    features = [f]
    probs = [p]
    zero_slot = Tensor(np.zeros((1, d_m)))
    for _ in range(horizon - 1):
        feat_in = f if feed_features else zero_slot
        x = concat([s_t, feat_in, p], axis=-1)
        f = prediction_block(x, params.progressive, mode, rng, rate)
        p = classify(f, params.classifier)
        features.append(f)
        probs.append(p)
    return Rollout(concat(features, axis=0), concat(probs, axis=0))


def rollout(
    s_t: Tensor,
    f_t: Tensor,
    params: PPMParams,
    horizon: int,
    mode: str = "eval",
    rng=None,
    rate: float = 0.1,
) -> Rollout:
    """Chain l future (feature, probability) predictions from (s_t, f_t).

    Step 1 uses the initial block on s_t (+) f_t (+) p_t; every later step
    reuses the shared progressive block on s_t (+) previous predicted
    feature (+) previous predicted probability. Concatenation order is
    (history, feature, probability) throughout.
    """
    return _roll(s_t, f_t, params, horizon, mode, rng, rate, feed_features=True)


def rollout_without_features(
    s_t: Tensor,
    f_t: Tensor,
    params: PPMParams,
    horizon: int,
    mode: str = "eval",
    rng=None,
    rate: float = 0.1,
) -> Rollout:
    """Ablated rollout: steps past the first zero out the feature slot.

    The chained input keeps the block's extent by substituting zeros where
    the previous predicted feature would go, so only the probability (and
    the aggregated history) carries information forward.
    """
    return _roll(s_t, f_t, params, horizon, mode, rng, rate, feed_features=False)
