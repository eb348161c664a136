"""Objectives, the RMSprop training loop and early stopping."""
from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import diffcore as dc
from .dataset import (
    Dataset,
    InteractionTables,
    RatingRecord,
    Statistics,
    build_interaction_tables,
    compute_statistics,
    split,
)
from .diffcore import RMSprop, Tape
from .evaluation import auc, predict_ratings, ranking_labels, rmse
from .model import ModelParams, forward_batch
from .sampling import build_sample, node_dropout_sample
from .social_graph import DEFAULT_DELTA, RelationshipGraph, build_graph

__all__ = [
    "PreparedData", "TrainConfig", "TrainHistory", "batch_loss", "fit", "node_dropout_sample",
    "prepare_data", "ranking_labels", "train_epoch",
]

TASKS = ("rating", "ranking")


@dataclass
class TrainConfig:
    task: str = "rating"
    epochs: int = 100
    batch_size: int = 128
    learning_rate: float = 1e-3
    rho: float = 0.9
    eps: float = 1e-8
    dropout_k: int = 30
    threshold: float = 4.0
    delta: float = DEFAULT_DELTA
    seed: int = 0
    patience: int = 10
    val_fraction: float = 0.1
    threads: int = 1
    hide_target: bool = False

    def validate(self, r_min: float = 1.0, r_max: float = 5.0) -> "TrainConfig":
        problems = []
        if self.task not in TASKS:
            problems.append(f"task must be one of {TASKS}, got {self.task!r}")
        if self.epochs < 0:
            problems.append("epochs must be >= 0")
        if self.batch_size < 1:
            problems.append("batch_size must be >= 1")
        if self.learning_rate <= 0:
            problems.append("learning_rate must be > 0")
        if not 0.0 <= self.rho < 1.0:
            problems.append("rho must lie in [0, 1)")
        if self.eps < 0:
            problems.append("eps must be >= 0")
        if self.dropout_k < 1:
            problems.append("dropout_k must be >= 1")
        if not r_min <= self.threshold <= r_max:
            problems.append(f"threshold {self.threshold} outside rating scale [{r_min}, {r_max}]")
        if self.delta < 0:
            problems.append("delta must be >= 0")
        if self.patience < 1:
            problems.append("patience must be >= 1")
        if not 0.0 <= self.val_fraction < 1.0:
            problems.append("val_fraction must lie in [0, 1)")
        if self.threads < 1:
            problems.append("threads must be >= 1")
        if problems:
            raise ValueError("; ".join(problems))
        return self


@dataclass
class TrainHistory:
    train_loss: list[float] = field(default_factory=list)
    val_metric: list[float] = field(default_factory=list)
    seconds: list[float] = field(default_factory=list)
    best_epoch: int = 0

    def __len__(self) -> int:
        return len(self.train_loss)


@dataclass
class PreparedData:
    """Everything derived from the training ratings, plus the held-out parts."""

    train: list[RatingRecord]
    val: list[RatingRecord]
    test: list[RatingRecord]
    stats: Statistics
    tables: InteractionTables
    graph: RelationshipGraph
    num_users: int
    num_items: int
    levels: int


def prepare_data(data: Dataset, test_fraction: float, val_fraction: float, seed: int,
                 delta: float = DEFAULT_DELTA) -> PreparedData:
    """Split off test (and validation) ratings, then derive means, tables and graph from the rest.

    ``test_fraction == 0`` keeps every rating for training; ``val_fraction == 0``
    validates on the training ratings themselves.
    """
    if test_fraction > 0:
        train, test = split(data.ratings, test_fraction, seed)
    else:
        train, test = list(data.ratings), []
    if val_fraction > 0:
        train, val = split(train, val_fraction, seed + 1)
    else:
        val = list(train)
    stats = compute_statistics(train)
    tables = build_interaction_tables(train, stats, data.levels)
    graph = build_graph(tables, data.trust, delta)
    return PreparedData(train, val, test, stats, tables, graph, data.num_users, data.num_items, data.levels)


def batch_loss(params: ModelParams, stats: Statistics, batch: Sequence[RatingRecord], samples, task: str,
               threshold: float, scale: float = 1.0) -> dc.Tensor:
    """Mean objective over ``batch`` times ``scale``: half squared error, or binary cross-entropy."""
    users = [r.user for r in batch]
    items = [r.item for r in batch]
    ratings = np.array([r.rating for r in batch])
    pred = forward_batch(params, stats, users, items, samples)
    if task == "rating":
        loss = dc.mse_loss(pred, ratings)
    else:
        loss = dc.mul(dc.bce_with_logits(pred, ranking_labels(ratings, threshold)), 1.0 / len(batch))
    return loss if scale == 1.0 else dc.mul(loss, scale)


def _accumulate(params, stats, batch, samples, config: TrainConfig, pool: ThreadPoolExecutor | None) -> float:
    """Populate parameter gradients of the batch-mean loss; return the summed per-example loss."""
    n = len(batch)
    if pool is None or n < 2 * config.threads:
        tape = Tape()
        with tape:
            loss = batch_loss(params, stats, batch, samples, config.task, config.threshold)
        tape.backward(loss)
        return loss.item() * n

    bounds = np.linspace(0, n, config.threads + 1).astype(int)

    def work(lo: int, hi: int):
        buf: dict[str, np.ndarray] = {}
        tape = Tape()
        with tape:
            loss = batch_loss(params, stats, batch[lo:hi], samples[lo:hi], config.task, config.threshold,
                              scale=(hi - lo) / n)
        tape.backward(loss, into=buf)
        return loss.item() * n, buf

    total = 0.0
    # reduce in chunk order so results do not depend on thread scheduling
    for part_loss, buf in pool.map(lambda b: work(*b), zip(bounds[:-1], bounds[1:])):
        total += part_loss
        for name, g in buf.items():
            params[name].grad += g
    return total


def train_epoch(params: ModelParams, optimizer: RMSprop, data: PreparedData, config: TrainConfig, epoch: int,
                pool: ThreadPoolExecutor | None = None) -> float:
    """One pass over the training ratings; returns the mean per-example loss."""
    rng = np.random.default_rng([config.seed, epoch])
    order = rng.permutation(len(data.train))
    total = 0.0
    for start in range(0, len(order), config.batch_size):
        batch = [data.train[i] for i in order[start:start + config.batch_size]]
        samples = [build_sample(data.tables, data.graph, r.user, r.item, config.dropout_k, rng,
                                hide_target=config.hide_target) for r in batch]
        total += _accumulate(params, data.stats, batch, samples, config, pool)
        optimizer.step()
    return total / max(len(order), 1)


def validation_metric(params: ModelParams, data: PreparedData, config: TrainConfig) -> float:
    """RMSE for the rating task (lower is better), AUC for ranking (higher is better)."""
    preds = predict_ratings(params, data.stats, data.tables, data.graph, data.val)
    ratings = np.array([r.rating for r in data.val])
    if config.task == "rating":
        return rmse(preds, ratings)
    labels = ranking_labels(ratings, config.threshold)
    if labels.min() == labels.max():
        # single-class validation set: fall back to negative mean log-loss
        with dc.no_record():
            return -dc.bce_with_logits(preds, labels).item() / len(labels)
    return auc(preds, labels)


def fit(params: ModelParams, data: PreparedData, config: TrainConfig,
        log: Callable[[int, float, float, float], None] | None = None) -> tuple[ModelParams, TrainHistory]:
    """Train with early stopping; ``params`` ends holding the best-validation values."""
    if not data.val:
        raise ValueError("validation set is empty")
    optimizer = RMSprop(list(params), lr=config.learning_rate, rho=config.rho, eps=config.eps)
    optimizer.zero_grad()
    history = TrainHistory()
    lower_is_better = config.task == "rating"
    best_value: float | None = None
    best_state = params.snapshot()
    stale = 0
    pool = ThreadPoolExecutor(config.threads) if config.threads > 1 else None
    try:
        for epoch in range(1, config.epochs + 1):
            t0 = time.perf_counter()
            loss = train_epoch(params, optimizer, data, config, epoch, pool)
            if not np.isfinite(loss):
                raise FloatingPointError(f"training loss became {loss} at epoch {epoch}")
            metric = validation_metric(params, data, config)
            seconds = time.perf_counter() - t0
            history.train_loss.append(loss)
            history.val_metric.append(metric)
            history.seconds.append(seconds)
            if log is not None:
                log(epoch, loss, metric, seconds)
            improved = best_value is None or (metric < best_value if lower_is_better else metric > best_value)
            if improved:
                best_value, best_state, stale = metric, params.snapshot(), 0
                history.best_epoch = epoch
            else:
                stale += 1
                if stale >= config.patience:
                    break
    finally:
        if pool is not None:
            pool.shutdown()
    params.load(best_state)
    return params, history
