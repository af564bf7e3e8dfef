"""Command-line harness: data generation, training, evaluation, grids.

Configuration is a flat key = value text file overridden by repeated
--set key=value flags; precedence is flags > file > defaults. Every run
funnels its randomness through seeds recorded in the output manifest, so
identical invocations produce identical files.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import data as datamod
from . import metrics as metricsmod
from .model import (
    AnticipationModel,
    ModelConfig,
    file_sha256,
    grid_configs,
    load_checkpoint,
    model_count,
    save_checkpoint,
)
from .training import TrainConfig, train, write_history_csv

DEFAULTS: dict[str, object] = {
    "model.aggregator": "ttm",
    "model.predictor": "ppm",
    "model.ppm_variant": "full",
    "model.d_m": 16,
    "model.n_heads": 4,
    "model.classes": 4,
    "model.seq_len": 8,
    "model.horizon": 8,
    "model.dropout": 0.1,
    "train.lr": 0.001,
    "train.momentum": 0.9,
    "train.batch_size": 32,
    "train.epochs": 10,
    "train.lam": 1.0,
    "train.seed": 0,
    "data.source": "synthetic",
    "data.dir": "",
    "data.n_train": 12,
    "data.n_eval": 6,
    "data.length": 40,
    "data.noise_sigma": 0.4,
    "data.duration_mean": 3.0,
    "data.duration_law": "fixed",
    "data.seed": 0,
    "eval.metric": "acc",
}

HELDOUT_SEED_OFFSET = 7919


def parse_config_file(path) -> dict[str, str]:
    values: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            values[key] = value
    return values


def resolve_config(config_path=None, overrides=()) -> dict[str, object]:
    resolved = dict(DEFAULTS)
    pending: dict[str, str] = {}
    if config_path:
        pending.update(parse_config_file(config_path))
    for item in overrides:
        if "=" not in item:
            raise ValueError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        pending[key.strip()] = value.strip()
    for key, value in pending.items():
        if key not in DEFAULTS:
            raise ValueError(f"unknown config key {key!r}")
        default = DEFAULTS[key]
        if isinstance(default, bool):
            resolved[key] = value.lower() in ("1", "true", "yes")
        elif isinstance(default, int):
            resolved[key] = int(value)
        elif isinstance(default, float):
            resolved[key] = float(value)
        else:
            resolved[key] = value
    return resolved


def model_config(rc: dict[str, object]) -> ModelConfig:
    return ModelConfig(
        aggregator=rc["model.aggregator"],
        predictor=rc["model.predictor"],
        ppm_variant=rc["model.ppm_variant"],
        d_m=rc["model.d_m"],
        n_heads=rc["model.n_heads"],
        n_classes=rc["model.classes"],
        seq_len=rc["model.seq_len"],
        horizon=rc["model.horizon"],
        dropout=rc["model.dropout"],
    )


def train_config(rc: dict[str, object]) -> TrainConfig:
    return TrainConfig(
        lr=rc["train.lr"],
        momentum=rc["train.momentum"],
        batch_size=rc["train.batch_size"],
        epochs=rc["train.epochs"],
        lam=rc["train.lam"],
        seed=rc["train.seed"],
        horizon=rc["model.horizon"],
        seq_len=rc["model.seq_len"],
    )


def synthetic_config(rc: dict[str, object]) -> datamod.SyntheticConfig:
    return datamod.standard_synthetic_config(
        n_classes=rc["model.classes"],
        d_m=rc["model.d_m"],
        seed=rc["data.seed"],
        noise_sigma=rc["data.noise_sigma"],
        duration_mean=rc["data.duration_mean"],
        duration_law=rc["data.duration_law"],
    )


def load_dir(path) -> list[datamod.FeatureSequence]:
    files = sorted(Path(path).glob("*.feat"))
    if not files:
        raise FileNotFoundError(f"no .feat files under {path}")
    return [datamod.load_features(f) for f in files]


def training_sequences(rc, data_dir=None) -> list[datamod.FeatureSequence]:
    if data_dir or rc["data.source"] == "files":
        return load_dir(data_dir or rc["data.dir"])
    cfg = synthetic_config(rc)
    return datamod.gen_synthetic(cfg, rc["data.n_train"], rc["data.length"])


def heldout_sequences(rc, data_dir=None) -> list[datamod.FeatureSequence]:
    if data_dir or rc["data.source"] == "files":
        return load_dir(data_dir or rc["data.dir"])
    cfg = synthetic_config(rc)
    cfg = replace(cfg, seed=cfg.seed + HELDOUT_SEED_OFFSET)
    return datamod.gen_synthetic(cfg, rc["data.n_eval"], rc["data.length"])


def samples_from(sequences, seq_len: int, horizon: int):
    samples = []
    for seq in sequences:
        samples.extend(datamod.make_samples(seq, seq_len, horizon))
    return samples


def write_manifest(out_dir: Path, rc, outputs) -> None:
    manifest = {
        "seed": rc["train.seed"],
        "config": {k: rc[k] for k in sorted(rc)},
        "outputs": {name: file_sha256(out_dir / name) for name in outputs},
    }
    with open(out_dir / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def cmd_gen(args) -> int:
    rc = resolve_config(args.config, args.set or [])
    cfg = synthetic_config(rc)
    out = Path(args.out_dir)
    (out / "train").mkdir(parents=True, exist_ok=True)
    (out / "heldout").mkdir(parents=True, exist_ok=True)
    train_seqs = datamod.gen_synthetic(cfg, rc["data.n_train"], rc["data.length"])
    held_cfg = replace(cfg, seed=cfg.seed + HELDOUT_SEED_OFFSET)
    held_seqs = datamod.gen_synthetic(held_cfg, rc["data.n_eval"], rc["data.length"])
    for seq in train_seqs:
        datamod.save_features(seq, out / "train" / f"{seq.video_id}.feat")
    for seq in held_seqs:
        datamod.save_features(seq, out / "heldout" / f"{seq.video_id}.feat")
    print(
        f"wrote {len(train_seqs)} train + {len(held_seqs)} heldout sequences "
        f"of length {rc['data.length']} to {out}"
    )
    return 0


def cmd_train(args) -> int:
    rc = resolve_config(args.config, args.set or [])
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    sequences = training_sequences(rc, args.data)
    mc = model_config(rc)
    tc = train_config(rc)
    samples = samples_from(sequences, mc.seq_len, mc.horizon)
    model = AnticipationModel(mc, seed=tc.seed)
    history = train(model, samples, tc)
    save_checkpoint(model, out / "checkpoint.bin")
    write_history_csv(history, out / "history.csv")
    write_manifest(out, rc, ["checkpoint.bin", "history.csv"])
    last = history[-1]
    print(
        f"trained {mc.name} for {tc.epochs} epochs on {len(samples)} samples: "
        f"total loss {last.total_loss:.4f}, horizon-1 accuracy {last.train_acc_h1:.3f}"
    )
    return 0


def _load_model(rc, checkpoint) -> AnticipationModel:
    path = Path(checkpoint)
    if not path.exists():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    model = AnticipationModel(model_config(rc), seed=rc["train.seed"])
    model.load_state(load_checkpoint(path))
    return model


def cmd_eval(args) -> int:
    rc = resolve_config(args.config, args.set or [])
    model = _load_model(rc, args.checkpoint)
    sequences = heldout_sequences(rc, args.data)
    report = metricsmod.evaluate_horizons(
        model.scorer(),
        sequences,
        horizon=model.config.horizon,
        seq_len=model.config.seq_len,
        metric=rc["eval.metric"],
    )
    metricsmod.write_report_csv({model.config.name: report}, args.out)
    print(
        f"{model.config.name}: {rc['eval.metric']} per horizon "
        f"{[round(float(v), 4) for v in report.means]}, avg {report.average:.4f}"
    )
    return 0


def cmd_grid(args) -> int:
    rc = resolve_config(args.config, args.set or [])
    train_seqs = training_sequences(rc, args.data)
    held_seqs = heldout_sequences(rc, args.heldout_data or args.data)
    mc = model_config(rc)
    tc = train_config(rc)
    samples = samples_from(train_seqs, mc.seq_len, mc.horizon)
    reports = {}
    for idx, cell in enumerate(grid_configs(mc)):
        cell_seed = int(
            np.random.SeedSequence([tc.seed, idx]).generate_state(1)[0] % (2**31)
        )
        model = AnticipationModel(cell, seed=cell_seed)
        train(model, samples, replace(tc, seed=cell_seed))
        reports[cell.name] = metricsmod.evaluate_horizons(
            model.scorer(),
            held_seqs,
            horizon=cell.horizon,
            seq_len=cell.seq_len,
            metric=rc["eval.metric"],
        )
        print(f"{cell.name}: avg {reports[cell.name].average:.4f}")
    metricsmod.write_report_csv(reports, args.out)
    print(f"wrote {len(reports)} method rows to {args.out}")
    return 0


def cmd_dump_attention(args) -> int:
    rc = resolve_config(args.config, args.set or [])
    model = _load_model(rc, args.checkpoint)
    if model.config.aggregator != "ttm":
        raise ValueError("attention dumps need a transformer aggregator (model.aggregator=ttm)")
    sequences = heldout_sequences(rc, args.data)
    seq_len = model.config.seq_len
    from .tensor import Tensor

    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write("video_id,t,head,memory_pos,weight\n")
        for seq in sequences:
            feats = seq.features.astype(np.float64)
            for t in range(seq_len - 1, len(seq)):
                window = Tensor(feats[t - seq_len + 1 : t + 1])
                _, weights = model.aggregate(window)
                for head in range(weights.shape[0]):
                    for m in range(weights.shape[1]):
                        pos = t - seq_len + 1 + m
                        fh.write(f"{seq.video_id},{t},{head},{pos},{float(weights[head, m])!r}\n")
    print(f"wrote attention weights for {len(sequences)} sequences to {args.out}")
    return 0


def cmd_param_count(args) -> int:
    rc = resolve_config(args.config, args.set or [])
    base = model_config(rc)
    rows = []
    for cell in grid_configs(base):
        if cell.ppm_variant != "full":
            continue  # the ablation shares ppm parameter shapes
        rows.append((cell.name, model_count(cell)))
    lines = ["method,params"] + [f"{name},{count}" for name, count in rows]
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    print(text, end="")
    ttpp = dict(rows)["ttm-ppm"]
    ed = dict(rows)["lstm-lstm"]
    print(f"# ttm-ppm uses {ttpp} parameters vs {ed} for lstm-lstm "
          f"({100 * (1 - ttpp / ed):.1f}% fewer)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ttpp", description="action anticipation lab: train, evaluate, compare"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="flat key = value config file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override one config key (repeatable)")

    p = sub.add_parser("gen", help="write synthetic feature files")
    common(p)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="train one model, persist checkpoint + history")
    common(p)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--data", help="directory of .feat files (overrides data source)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="emit a per-horizon report CSV")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--data", help="directory of .feat files")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("grid", help="train/evaluate the aggregator x predictor matrix")
    common(p)
    p.add_argument("--out", required=True)
    p.add_argument("--data", help="training .feat directory")
    p.add_argument("--heldout-data", help="evaluation .feat directory")
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("dump-attention", help="per-head attention weight CSV")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--data", help="directory of .feat files")
    p.set_defaults(func=cmd_dump_attention)

    p = sub.add_parser("param-count", help="closed-form parameter counts per method")
    common(p)
    p.add_argument("--out", help="optional CSV path")
    p.set_defaults(func=cmd_param_count)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except SystemExit as exc:  # argparse error paths
        return int(exc.code or 0)
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
