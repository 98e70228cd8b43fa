"""Encoder training loop: seeded shuffling, Adam with per-epoch exponential
learning-rate decay, best-validation checkpointing, and a JSON-lines log.

Log lines contain only the epoch index, learning rate, and loss components
(no wall-clock data), so two identical single-threaded runs write identical
logs byte for byte.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import RunConfig
from .data import Dataset
from .errors import ConfigError, DataError, NumericsError
from .losses import LossBreakdown, evaluate_total_loss, total_loss_and_grad
from .model import GoyaModel
from .nn import FLOAT
from .optim import Adam


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    lr: float
    train: LossBreakdown
    val: LossBreakdown


@dataclass(frozen=True)
class TrainingResult:
    best_checkpoint: Path
    final_checkpoint: Path
    log_path: Path
    best_epoch: int
    best_val_total: float
    history: tuple[EpochStats, ...]


class _Split:
    """Float64 training views of one dataset."""

    def __init__(self, ds: Dataset, cfg: RunConfig, name: str) -> None:
        loss = cfg.loss
        if len(ds) < 2:
            raise DataError(f"{name} split needs at least 2 records, got {len(ds)}")
        if ds.d_img != cfg.arch.input_dim:
            raise ConfigError(
                f"{name} split has d_img={ds.d_img} but the model expects "
                f"input_dim={cfg.arch.input_dim}"
            )
        if loss.lambda_c > 0.0 and ds.texts is None:
            raise ConfigError(f"content loss enabled but {name} split stores no text embeddings")
        needs_styles = loss.lambda_s > 0.0 or (loss.lambda_sc > 0.0 and loss.use_classifier)
        if needs_styles and (ds.style_ids < 0).any():
            bad = int(np.flatnonzero(ds.style_ids < 0)[0])
            raise DataError(f"{name} split record {bad} has unknown style but style losses are on")
        if needs_styles and ds.n_styles > cfg.arch.n_styles:
            raise ConfigError(
                f"{name} split declares {ds.n_styles} styles but the classifier "
                f"has {cfg.arch.n_styles} outputs"
            )
        self.images = ds.images.astype(FLOAT)
        self.texts = None if ds.texts is None else ds.texts.astype(FLOAT)
        self.style_ids = ds.style_ids.astype(np.int64)

    def batch(self, idx: np.ndarray):
        texts = None if self.texts is None else self.texts[idx]
        return self.images[idx], texts, self.style_ids[idx]


def _mean_breakdown(parts: list[LossBreakdown]) -> LossBreakdown:
    n = len(parts)
    return LossBreakdown(
        total=sum(p.total for p in parts) / n,
        content=sum(p.content for p in parts) / n,
        style=sum(p.style for p in parts) / n,
        style_ce=sum(p.style_ce for p in parts) / n,
        batch_size=sum(p.batch_size for p in parts),
    )


def _log_line(stats: EpochStats) -> str:
    return json.dumps({
        "epoch": stats.epoch,
        "lr": stats.lr,
        "train_total": stats.train.total,
        "train_content": stats.train.content,
        "train_style": stats.train.style,
        "train_ce": stats.train.style_ce,
        "val_total": stats.val.total,
        "val_content": stats.val.content,
        "val_style": stats.val.style,
        "val_ce": stats.val.style_ce,
    })


def run_training(cfg: RunConfig, train_ds: Dataset, val_ds: Dataset, out_dir) -> TrainingResult:
    """Train the encoders and return checkpoint paths plus per-epoch stats.

    Writes ``best.gckp`` (lowest validation total), ``final.gckp``, and
    ``train_log.jsonl`` under ``out_dir``. All randomness (init, shuffles)
    derives from cfg.rng_seed.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    train = _Split(train_ds, cfg, "train")
    val = _Split(val_ds, cfg, "val")

    model_seq, shuffle_seq = np.random.SeedSequence(cfg.rng_seed).spawn(2)
    model = GoyaModel(cfg.arch, rng_seed=model_seq)
    shuffle_rng = np.random.default_rng(shuffle_seq)
    opt = Adam(model.named_parameters(), lr=cfg.optim.lr, beta1=cfg.optim.beta1,
               beta2=cfg.optim.beta2, eps=cfg.optim.eps, lr_decay=cfg.optim.lr_decay)

    n = train.images.shape[0]
    batch = min(cfg.optim.batch_size, n)
    history: list[EpochStats] = []
    best_epoch = -1
    best_val = np.inf
    best_params: dict[str, np.ndarray] | None = None
    log_path = out_dir / "train_log.jsonl"

    with open(log_path, "w", encoding="utf-8") as log:
        for epoch in range(cfg.optim.epochs):
            opt.set_epoch(epoch)
            order = shuffle_rng.permutation(n)
            train_parts = []
            for start in range(0, n, batch):
                idx = order[start : start + batch]
                g, t, y = train.batch(idx)
                part = total_loss_and_grad(model, g, t, y, cfg.loss)
                if not np.isfinite(part.total):
                    raise NumericsError(
                        f"non-finite training loss at epoch {epoch}, batch {start // batch}"
                    )
                opt.step(model.named_gradients())
                train_parts.append(part)
            val_parts = []
            m = val.images.shape[0]
            for start in range(0, m, batch):
                idx = np.arange(start, min(start + batch, m))
                g, t, y = val.batch(idx)
                val_parts.append(evaluate_total_loss(model, g, t, y, cfg.loss))
            stats = EpochStats(epoch=epoch, lr=opt.lr,
                               train=_mean_breakdown(train_parts),
                               val=_mean_breakdown(val_parts))
            history.append(stats)
            log.write(_log_line(stats) + "\n")
            if stats.val.total < best_val:
                best_val = stats.val.total
                best_epoch = epoch
                best_params = {k: v.copy() for k, v in model.named_parameters().items()}

    final_path = out_dir / "final.gckp"
    model.save(final_path, {"epoch": cfg.optim.epochs - 1, "run_config": cfg.to_dict()})
    best_path = out_dir / "best.gckp"
    for name, p in model.named_parameters().items():
        p[...] = best_params[name]
    model.save(best_path, {"epoch": best_epoch, "run_config": cfg.to_dict()})
    return TrainingResult(
        best_checkpoint=best_path,
        final_checkpoint=final_path,
        log_path=log_path,
        best_epoch=best_epoch,
        best_val_total=float(best_val),
        history=tuple(history),
    )
