"""Aggregator x predictor composition, parameter counting, checkpoints.

Any aggregator (ttm, conv1d, lstm) pairs with any predictor (ppm, ssp,
lstm) through one interface: the aggregator turns a T x d_m window into a
1 x d_m summary, the predictor turns (summary, current feature) into a
rollout of future (feature, probability) pairs.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, replace

import numpy as np

from . import attention, baselines, prediction
from .tensor import Parameter, Tensor, glorot

AGGREGATORS = ("ttm", "conv1d", "lstm")
PREDICTORS = ("ppm", "ssp", "lstm")
PPM_VARIANTS = ("full", "no_feature")

CHECKPOINT_MAGIC = b"TTPPCKPT"
CHECKPOINT_VERSION = 1


@dataclass
class ModelConfig:
    """Architecture hyperparameters for one aggregator/predictor pairing."""

    aggregator: str = "ttm"
    predictor: str = "ppm"
    ppm_variant: str = "full"
    d_m: int = 16
    n_heads: int = 4
    n_classes: int = 4
    seq_len: int = 8
    horizon: int = 8
    dropout: float = 0.1

    def __post_init__(self):
        if self.aggregator not in AGGREGATORS:
            raise ValueError(f"aggregator must be one of {AGGREGATORS}, got {self.aggregator!r}")
        if self.predictor not in PREDICTORS:
            raise ValueError(f"predictor must be one of {PREDICTORS}, got {self.predictor!r}")
        if self.ppm_variant not in PPM_VARIANTS:
            raise ValueError(f"ppm_variant must be one of {PPM_VARIANTS}, got {self.ppm_variant!r}")
        if self.d_m % self.n_heads != 0:
            raise ValueError(f"n_heads={self.n_heads} must divide d_m={self.d_m}")
        if self.d_m % 2 != 0:
            raise ValueError(f"d_m must be even, got {self.d_m}")
        if self.seq_len < 2:
            raise ValueError(f"seq_len must be >= 2, got {self.seq_len}")
        if self.horizon < 1:
            raise ValueError(f"horizon must be >= 1, got {self.horizon}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must be in [0, 1), got {self.dropout}")

    @property
    def name(self) -> str:
        tag = f"{self.aggregator}-{self.predictor}"
        if self.predictor == "ppm" and self.ppm_variant == "no_feature":
            tag += "-nofp"
        return tag


class AnticipationModel:
    """One trained (or trainable) aggregator/predictor pair."""

    def __init__(self, config: ModelConfig, rng=None, seed: int = 0):
        if rng is None:
            rng = np.random.default_rng(seed)
        self.config = config
        c = config
        if c.aggregator == "ttm":
            self.agg_params = attention.init_ttm_params(c.d_m, c.n_heads, rng)
            self.pe = attention.positional_encoding(c.seq_len, c.d_m)
        elif c.aggregator == "conv1d":
            self.agg_params = baselines.init_conv1d_params(c.d_m, rng)
            self.pe = None
        else:
            self.agg_params = baselines.init_lstm_params(c.d_m, c.d_m, rng, prefix="enc")
            self.pe = None
        if c.predictor == "ppm":
            self.pred_params = prediction.init_ppm_params(c.d_m, c.n_classes, rng)
        elif c.predictor == "ssp":
            self.pred_params = baselines.init_ssp_params(c.d_m, c.n_classes, c.horizon, rng)
        else:
            self.pred_params = DecoderParams(
                lstm=baselines.init_lstm_params(c.d_m + c.n_classes, c.d_m, rng, prefix="dec"),
                classifier=Parameter("dec.classifier", glorot(rng, c.d_m, c.n_classes)),
            )

    def parameters(self) -> list[Parameter]:
        return [*self.agg_params.parameters(), *self.pred_params.parameters()]

    def param_count(self) -> int:
        return sum(p.size for p in self.parameters())

    def aggregate(self, f_seq: Tensor):
        """Returns (1 x d_m summary, attention weights or None)."""
        c = self.config
        if c.aggregator == "ttm":
            return attention.aggregate(f_seq, self.agg_params, self.pe)
        if c.aggregator == "conv1d":
            return baselines.conv1d_aggregate(f_seq, self.agg_params), None
        return baselines.lstm_encode(f_seq, self.agg_params), None

    def predict(self, s_t: Tensor, f_t: Tensor, mode: str = "eval", rng=None) -> prediction.Rollout:
        c = self.config
        if c.predictor == "ppm":
            roll = (
                prediction.rollout
                if c.ppm_variant == "full"
                else prediction.rollout_without_features
            )
            return roll(s_t, f_t, self.pred_params, c.horizon, mode, rng, c.dropout)
        if c.predictor == "ssp":
            return baselines.ssp_rollout(
                s_t, f_t, self.pred_params, c.horizon, mode, rng, c.dropout
            )
        return baselines.lstm_decode(
            s_t, f_t, self.pred_params.classifier, self.pred_params.lstm, c.horizon
        )

    def anticipate(self, observed: np.ndarray, mode: str = "eval", rng=None):
        """Full forward pass on one observed window.

        Returns (Rollout, attention weights or None). The predictor sees
        the raw last observed feature; positional encoding stays internal
        to the transformer aggregator.
        """
        f_seq = Tensor(observed)
        if f_seq.shape[0] != self.config.seq_len:
            raise ValueError(
                f"anticipate: window length {f_seq.shape[0]} != configured "
                f"seq_len {self.config.seq_len}"
            )
        s_t, weights = self.aggregate(f_seq)
        f_t = f_seq[self.config.seq_len - 1 : self.config.seq_len]
        return self.predict(s_t, f_t, mode, rng), weights

    def scorer(self):
        """Adapter for metrics.evaluate_horizons: (sequence, t) -> (l, C) scores."""
        seq_len = self.config.seq_len

        def score(sequence, t: int) -> np.ndarray:
            window = np.asarray(sequence.features[t - seq_len + 1 : t + 1], dtype=np.float64)
            roll, _ = self.anticipate(window)
            return roll.probs.data

        return score

    def state_dict(self) -> dict[str, np.ndarray]:
        return {p.name: p.value.data.copy() for p in self.parameters()}

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        params = {p.name: p for p in self.parameters()}
        missing = sorted(set(params) - set(state))
        extra = sorted(set(state) - set(params))
        if missing or extra:
            raise ValueError(f"checkpoint mismatch: missing={missing}, unexpected={extra}")
        for name, p in params.items():
            arr = np.asarray(state[name], dtype=np.float64)
            if arr.shape != p.shape:
                raise ValueError(
                    f"checkpoint mismatch: {name} has shape {arr.shape}, expected {p.shape}"
                )
            p.value.data = arr.copy()
            p.momentum = np.zeros_like(p.value.data)


@dataclass
class DecoderParams:
    lstm: baselines.LSTMParams
    classifier: Parameter

    def parameters(self) -> list[Parameter]:
        return [*self.lstm.parameters(), self.classifier]


# closed-form parameter counts


def ttm_count(d_m: int) -> int:
    # n heads of 3 projections d_m x (d_m/n) collapse to 3 d_m^2, plus the
    # output projection d_m x d_m
    return 4 * d_m * d_m


def block_count(in_dim: int, d_m: int) -> int:
    hidden = d_m // 2
    return in_dim * hidden + hidden + hidden * d_m + d_m + 2 * d_m


def ppm_count(d_m: int, n_classes: int) -> int:
    return 2 * block_count(2 * d_m + n_classes, d_m) + d_m * n_classes


def ssp_count(d_m: int, n_classes: int, horizon: int) -> int:
    return block_count(2 * d_m + n_classes + horizon, d_m) + d_m * n_classes


def lstm_count(d_in: int, d_h: int) -> int:
    return 4 * (d_in * d_h + d_h * d_h + d_h)


def encoder_lstm_count(d_m: int) -> int:
    return lstm_count(d_m, d_m)


def decoder_lstm_count(d_m: int, n_classes: int) -> int:
    return lstm_count(d_m + n_classes, d_m) + d_m * n_classes


def conv1d_count(d_m: int) -> int:
    return baselines.CONV_LAYERS * (baselines.CONV_KERNEL * d_m * d_m + d_m)


def model_count(config: ModelConfig) -> int:
    """Closed-form total for a config; matches the built model exactly."""
    c = config
    agg = {
        "ttm": ttm_count(c.d_m),
        "conv1d": conv1d_count(c.d_m),
        "lstm": encoder_lstm_count(c.d_m),
    }[c.aggregator]
    pred = {
        "ppm": ppm_count(c.d_m, c.n_classes),
        "ssp": ssp_count(c.d_m, c.n_classes, c.horizon),
        "lstm": decoder_lstm_count(c.d_m, c.n_classes),
    }[c.predictor]
    return agg + pred


def grid_configs(base: ModelConfig) -> list[ModelConfig]:
    """The full 3 x 3 pairing grid plus the feature-free rollout ablation."""
    cells = [
        replace(base, aggregator=a, predictor=p, ppm_variant="full")
        for a in AGGREGATORS
        for p in PREDICTORS
    ]
    cells.append(replace(base, aggregator="ttm", predictor="ppm", ppm_variant="no_feature"))
    return cells


# checkpoint format: magic, u16 version, u32 count, then per parameter
# u16 name length + utf8 name, u8 ndim, u32 dims, float64 little-endian data


def save_checkpoint(model: AnticipationModel, path) -> None:
    with open(path, "wb") as fh:
        params = model.parameters()
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<HI", CHECKPOINT_VERSION, len(params)))
        for p in params:
            name = p.name.encode("utf-8")
            fh.write(struct.pack("<H", len(name)))
            fh.write(name)
            fh.write(struct.pack("<B", p.value.data.ndim))
            for dim in p.value.data.shape:
                fh.write(struct.pack("<I", dim))
            fh.write(p.value.data.astype("<f8").tobytes())


def load_checkpoint(path) -> dict[str, np.ndarray]:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:8] != CHECKPOINT_MAGIC:
        raise ValueError(f"not a checkpoint file: bad magic at offset 0 in {path}")
    version, count = struct.unpack_from("<HI", blob, 8)
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version} at offset 8")
    offset = 14
    state: dict[str, np.ndarray] = {}
    for _ in range(count):
        try:
            (name_len,) = struct.unpack_from("<H", blob, offset)
            offset += 2
            name = blob[offset : offset + name_len].decode("utf-8")
            offset += name_len
            (ndim,) = struct.unpack_from("<B", blob, offset)
            offset += 1
            shape = struct.unpack_from(f"<{ndim}I", blob, offset)
            offset += 4 * ndim
            n = int(np.prod(shape)) if ndim else 1
            end = offset + 8 * n
            if end > len(blob):
                raise struct.error("short read")
            arr = np.frombuffer(blob[offset:end], dtype="<f8").reshape(shape)
            offset = end
        except (struct.error, UnicodeDecodeError) as exc:
            raise ValueError(f"truncated/corrupt checkpoint at offset {offset}: {exc}") from exc
        state[name] = arr.copy()
    return state


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()
