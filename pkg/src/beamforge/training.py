"""Offline training: step learning-rate schedule, random mini-batch epochs,
periodic validation, best/final checkpoints and the CSV loss log.
"""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .airmodel import ConfigError, ScenarioConfig
from .core import derive_stream
from .dataset import Dataset, encode_input, next_minibatch, split_train_val
from .neuralnet import (AdamState, ArchitectureSpec, NetworkParameters, adam_step, init_params,
                        network_backward, network_forward, sample_losses, save_checkpoint,
                        sigmoid_ce_loss)

log = logging.getLogger(__name__)

LOG_HEADER = ["epoch", "train_loss", "val_loss", "lr", "seconds"]

# stream keys under the master seed; tuples keep them apart from record streams
INIT_STREAM = (0x7EA1, 1)
BATCH_STREAM = (0x7EA1, 2)

EVAL_CHUNK = 1024


@dataclass(frozen=True)
class TrainingConfig:
    epochs: int = 6000
    batches_per_epoch: int = 500
    batch_size: int = 128
    lr_initial: float = 0.01
    lr_decay_factor: float = 5.0
    lr_decay_every: int = 1000
    seed: int = 0
    preset: str = "nps1"
    validation_every: int = 10

    def __post_init__(self):
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        for name in ("batches_per_epoch", "batch_size", "lr_decay_every", "validation_every"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if not self.lr_initial > 0:
            raise ConfigError("lr_initial must be > 0")
        if not self.lr_decay_factor > 0:
            raise ConfigError("lr_decay_factor must be > 0")


@dataclass
class TrainingLogRow:
    epoch: int
    train_loss: float
    val_loss: float
    lr: float
    seconds: float


@dataclass
class TrainingResult:
    final: NetworkParameters
    best: NetworkParameters
    best_val_loss: float
    rows: list[TrainingLogRow] = field(default_factory=list)


def learning_rate(epoch, cfg: TrainingConfig | None = None):
    """Piecewise-constant rate ``lr_initial / factor ** (epoch // decay_every)``."""
    cfg = cfg or TrainingConfig()
    if epoch < 0:
        raise ValueError("epoch must be >= 0")
    return cfg.lr_initial / cfg.lr_decay_factor ** (epoch // cfg.lr_decay_every)


def predict_logits(params: NetworkParameters, inputs):
    """Logits for a (B, 2M) input batch, evaluated in fixed-size chunks."""
    out = [network_forward(inputs[i:i + EVAL_CHUNK], params)[0]
           for i in range(0, len(inputs), EVAL_CHUNK)]
    return np.concatenate(out, axis=0)


def validate(params: NetworkParameters, val: Dataset):
    """Mean sigmoid cross-entropy over every validation record."""
    if len(val) == 0:
        raise ValueError("validation set is empty")
    if params.arch.input_len != 2 * val.cfg.n_measurements or \
            params.arch.output_dim != val.cfg.n_antennas:
        raise ValueError("network dimensions do not match the validation data")
    logits = predict_logits(params, encode_input(val.r))
    return float(np.mean(sample_losses(logits, val.labels())))


def _check_dims(scenario: ScenarioConfig, ds: Dataset):
    a, b = scenario, ds.cfg
    dims = ("n_antennas", "n_rf", "n_slots", "n_users", "n_paths")
    bad = [d for d in dims if getattr(a, d) != getattr(b, d)]
    if bad:
        raise ConfigError("dataset dimensions differ from scenario: " +
                          ", ".join(f"{d} {getattr(b, d)} != {getattr(a, d)}" for d in bad))


def write_log(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LOG_HEADER)
        for r in rows:
            w.writerow([r.epoch, repr(r.train_loss), repr(r.val_loss), repr(r.lr),
                        f"{r.seconds:.3f}"])


def train(cfg: TrainingConfig, scenario: ScenarioConfig, ds: Dataset, out_path=None,
          log_path=None, best_path=None, timing=True) -> TrainingResult:
    """Train a network on ``ds`` and optionally persist checkpoints and the log.

    A log row is written every ``validation_every`` epochs and after the last
    epoch. ``train_loss`` is the mean batch loss over the epochs since the
    previous row. With ``timing=False`` the ``seconds`` column is zero, which
    makes the log a pure function of its inputs.
    """
    _check_dims(scenario, ds)
    arch = ArchitectureSpec.from_preset(cfg.preset, 2 * scenario.n_measurements,
                                        scenario.n_antennas)
    train_set, val_set = split_train_val(ds, cfg.seed)
    if cfg.batch_size > len(train_set):
        raise ConfigError(f"batch_size {cfg.batch_size} exceeds training set size {len(train_set)}")
    params = init_params(arch, derive_stream(cfg.seed, INIT_STREAM))
    state = AdamState.zeros_like(params)
    rng = derive_stream(cfg.seed, BATCH_STREAM)

    best = params.copy()
    best_val = validate(params, val_set)
    rows = []
    pending = []
    t0 = time.perf_counter()
    for epoch in range(cfg.epochs):
        lr = learning_rate(epoch, cfg)
        for _ in range(cfg.batches_per_epoch):
            x, q = next_minibatch(train_set, rng, cfg.batch_size)
            logits, cache = network_forward(x, params)
            pending.append(sigmoid_ce_loss(logits, q))
            adam_step(params, network_backward(cache, params, q), state, lr)
        done = epoch + 1
        if done % cfg.validation_every == 0 or done == cfg.epochs:
            val = validate(params, val_set)
            secs = time.perf_counter() - t0 if timing else 0.0
            rows.append(TrainingLogRow(done, float(np.mean(pending)), val, lr, secs))
            pending = []
            log.info("epoch %d train %.5f val %.5f lr %g", done, rows[-1].train_loss, val, lr)
            if val < best_val:
                best_val = val
                best = params.copy()

    if out_path is not None:
        save_checkpoint(params, out_path)
    if best_path is not None:
        save_checkpoint(best, best_path)
    if log_path is not None:
        write_log(rows, log_path)
    return TrainingResult(params, best, best_val, rows)
