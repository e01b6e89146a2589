"""Seeded training runs: Adam + early stopping on validation loss, with
best-epoch restore and reproducible records.

A run is deterministic given its config: data comes from the task seed,
initialization and batch order from per-seed child streams.  Divergent seeds
(non-finite loss) are recorded as failed rather than raised, with an optional
bounded number of restarts from a fresh init stream.

``RunRecord.canonical()`` is the timing-free view of a record; repeating a
run with the same config must reproduce it bit for bit.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field, asdict

import numpy as np

from . import autograd as ag
from .linalg import NonFiniteError, Rng
from .models import forward
from .params import ModelConfig, ModelParams, config_from_dict, config_to_dict, init_params
from .tasks import Dataset, SequenceBatch, TaskSpec, generate

_INIT_STREAM = 101
_SHUFFLE_STREAM = 102
_READOUT_STREAM = 103


@dataclass(frozen=True)
class TrainSettings:
    lr: float = 1e-3
    batch_size: int = 128
    max_epochs: int = 2000
    patience: int = 100
    clip: float | None = None
    seeds: tuple[int, ...] = (0, 1, 2)
    train_h0: bool = True
    masked_loss: bool = False
    max_restarts: int = 0

    def __post_init__(self):
        if self.patience > self.max_epochs:
            raise ValueError("patience must not exceed max_epochs")
        if not self.seeds:
            raise ValueError("at least one seed is required")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["seeds"] = list(self.seeds)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainSettings":
        d = dict(d)
        d["seeds"] = tuple(d["seeds"])
        return cls(**d)


def desk_settings(**overrides) -> TrainSettings:
    """Small budgets for laptop-scale runs (the package default)."""
    return TrainSettings(**overrides)


def paper_scale_settings(**overrides) -> TrainSettings:
    """Full-protocol budgets: longer patience, more epochs."""
    base = dict(lr=1e-3, batch_size=128, max_epochs=10000, patience=400, seeds=(0, 1, 2, 3, 4))
    base.update(overrides)
    return TrainSettings(**base)


@dataclass(frozen=True)
class RunConfig:
    task: TaskSpec
    model: ModelConfig
    train: TrainSettings = field(default_factory=TrainSettings)
    readout: bool = True

    def to_dict(self) -> dict:
        return {
            "task": self.task.to_dict(),
            "model": config_to_dict(self.model),
            "train": self.train.to_dict(),
            "readout": self.readout,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        return cls(
            task=TaskSpec.from_dict(d["task"]),
            model=config_from_dict(d["model"]),
            train=TrainSettings.from_dict(d.get("train", {})),
            readout=d.get("readout", True),
        )

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class SeedResult:
    seed: int
    best_val: float
    test_at_best: float
    best_epoch: int
    epochs_run: int
    diverged: bool
    restarts: int
    train_curve: list[float]
    val_curve: list[float]
    wall_time: float

    def canonical(self) -> dict:
        d = asdict(self)
        d.pop("wall_time")
        return d


@dataclass
class RunRecord:
    config: RunConfig
    config_hash: str
    param_count: int
    seed_results: list[SeedResult]

    @property
    def test_losses(self) -> list[float]:
        return [r.test_at_best for r in self.seed_results if not r.diverged]

    @property
    def mean_test(self) -> float:
        vals = self.test_losses
        return float(np.mean(vals)) if vals else float("nan")

    @property
    def std_test(self) -> float:
        vals = self.test_losses
        return float(np.std(vals)) if vals else float("nan")

    @property
    def best_test(self) -> float:
        vals = self.test_losses
        return float(min(vals)) if vals else float("nan")

    def canonical(self) -> dict:
        """Timing-free content; identical configs must reproduce this exactly."""
        return {
            "config": self.config.to_dict(),
            "config_hash": self.config_hash,
            "param_count": self.param_count,
            "seeds": [r.canonical() for r in self.seed_results],
        }

    def to_dict(self) -> dict:
        d = self.canonical()
        d["wall_times"] = [r.wall_time for r in self.seed_results]
        d["aggregate"] = {"mean_test": self.mean_test, "std_test": self.std_test}
        return d


def _epoch_eval(params: ModelParams, head, batchset: SequenceBatch, mask, eval_batch: int = 512) -> float:
    total, count = 0.0, 0
    for start in range(0, batchset.batch, eval_batch):
        xb = batchset.inputs[start : start + eval_batch]
        yb = batchset.targets[start : start + eval_batch]
        trace = forward(params, xb)
        loss = ag.loss_mse(trace, yb, head, mask)
        total += loss * xb.shape[0]
        count += xb.shape[0]
    return total / count


def _single_attempt(
    config: RunConfig, data: Dataset, seed: int, attempt: int
) -> tuple[float, float, int, int, bool, list[float], list[float]]:
    ts = config.train
    rng = Rng(seed, (attempt,))
    params = init_params(config.model, rng.split(_INIT_STREAM))
    d_out = data.train.targets.shape[2]
    head = None
    if config.readout:
        head = ag.init_readout(config.model.hidden, d_out, rng.split(_READOUT_STREAM))
    elif config.model.hidden != d_out:
        raise ValueError(
            f"readout disabled but hidden={config.model.hidden} != d_out={d_out}"
        )
    shuffle = rng.split(_SHUFFLE_STREAM)
    mask = data.train.mask if ts.masked_loss else None

    arrays = [a for _, a in ag.iter_param_arrays(params, head, ts.train_h0)]
    state = ag.AdamState.for_arrays(arrays)

    best_val = float("inf")
    best_epoch = 0
    best_params = params.copy()
    best_head = None if head is None else head.copy()
    bad_epochs = 0
    train_curve: list[float] = []
    val_curve: list[float] = []
    diverged = False

    n_train = data.train.batch
    for epoch in range(1, ts.max_epochs + 1):
        order = shuffle.permutation(n_train)
        epoch_loss, seen = 0.0, 0
        try:
            for start in range(0, n_train, ts.batch_size):
                idx = order[start : start + ts.batch_size]
                xb = data.train.inputs[idx]
                yb = data.train.targets[idx]
                loss, grads = ag.backward(params, xb, yb, head, mask)
                if not np.isfinite(loss):
                    raise NonFiniteError("non-finite training loss")
                if ts.clip is not None:
                    ag.clip_gradients(grads, ts.clip, config.model.first_order_free, ts.train_h0)
                garrays = [
                    g
                    for _, g in ag.iter_grad_arrays(
                        grads, config.model.first_order_free, ts.train_h0
                    )
                ]
                ag.adam_step(arrays, garrays, state, lr=ts.lr)
                epoch_loss += loss * len(idx)
                seen += len(idx)
            val_loss = _epoch_eval(params, head, data.val, mask)
            if not np.isfinite(val_loss):
                raise NonFiniteError("non-finite validation loss")
        except NonFiniteError:
            diverged = True
            break
        train_curve.append(epoch_loss / seen)
        val_curve.append(val_loss)
        if val_loss < best_val:
            best_val = val_loss
            best_epoch = epoch
            best_params = params.copy()
            best_head = None if head is None else head.copy()
            bad_epochs = 0
        else:
            bad_epochs += 1
            if bad_epochs >= ts.patience:
                break

    if diverged or best_epoch == 0:
        return float("inf"), float("inf"), 0, len(train_curve), True, train_curve, val_curve

    test_loss = _epoch_eval(best_params, best_head, data.test, mask)
    return best_val, test_loss, best_epoch, len(train_curve), False, train_curve, val_curve


def train_one(config: RunConfig, seed: int, data: Dataset | None = None) -> SeedResult:
    """Train with one seed; on divergence retry up to train.max_restarts times."""
    if data is None:
        data = generate(config.task)
    start = time.perf_counter()
    restarts = 0
    while True:
        best_val, test, best_epoch, epochs, diverged, tcurve, vcurve = _single_attempt(
            config, data, seed, restarts
        )
        if not diverged or restarts >= config.train.max_restarts:
            break
        restarts += 1
    wall = time.perf_counter() - start
    return SeedResult(
        seed=seed,
        best_val=best_val,
        test_at_best=test,
        best_epoch=best_epoch,
        epochs_run=epochs,
        diverged=diverged,
        restarts=restarts,
        train_curve=tcurve,
        val_curve=vcurve,
        wall_time=wall,
    )


def run(config: RunConfig) -> RunRecord:
    """Train every seed in the config and aggregate."""
    data = generate(config.task)
    params = init_params(config.model, Rng(0))
    results = [train_one(config, seed, data) for seed in config.train.seeds]
    return RunRecord(
        config=config,
        config_hash=config.config_hash(),
        param_count=params.n_weights(include_h0=False),
        seed_results=results,
    )
