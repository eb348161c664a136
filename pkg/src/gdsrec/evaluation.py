"""Rating and ranking metrics and the held-out evaluation driver."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import expit
from scipy.stats import rankdata

from . import diffcore as dc
from .dataset import InteractionTables, RatingRecord, Statistics
from .model import ModelParams, forward_batch
from .sampling import build_sample
from .social_graph import RelationshipGraph


def _errors(preds, targets) -> np.ndarray:
    p = np.asarray(preds, dtype=np.float64).reshape(-1)
    t = np.asarray(targets, dtype=np.float64).reshape(-1)
    if p.shape != t.shape:
        raise ValueError(f"{p.size} predictions for {t.size} targets")
    if p.size == 0:
        raise ValueError("no predictions to score")
    return p - t


def mae(preds, targets) -> float:
    return float(np.mean(np.abs(_errors(preds, targets))))


def rmse(preds, targets) -> float:
    e = _errors(preds, targets)
    return float(np.sqrt(np.mean(e * e)))


def auc(scores, labels) -> float:
    """Probability that a random positive outscores a random negative (ties count half)."""
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    y = np.asarray(labels).reshape(-1).astype(bool)
    if s.shape != y.shape:
        raise ValueError(f"{s.size} scores for {y.size} labels")
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs both classes; got a single class")
    ranks = rankdata(s)  # average ranks give the half-credit tie rule
    return float((ranks[y].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def ranking_labels(ratings, threshold: float) -> np.ndarray:
    """1 where the rating reaches the threshold, else 0."""
    return (np.asarray(ratings, dtype=np.float64) >= threshold).astype(np.int64)


def predict_ratings(params: ModelParams, stats: Statistics, tables: InteractionTables, graph: RelationshipGraph,
                    examples: Sequence[RatingRecord], batch_size: int = 512) -> np.ndarray:
    """Deterministic full-list predictions (no dropout, no tape, no RNG)."""
    out = np.empty(len(examples))
    with dc.no_record():
        for start in range(0, len(examples), batch_size):
            chunk = examples[start:start + batch_size]
            users = [r.user for r in chunk]
            items = [r.item for r in chunk]
            samples = [build_sample(tables, graph, u, v) for u, v in zip(users, items)]
            out[start:start + len(chunk)] = forward_batch(params, stats, users, items, samples).value
    return out


@dataclass
class EvalReport:
    task: str
    mae: float
    rmse: float
    auc: float | None
    n_examples: int
    cold_user_count: int
    cold_item_count: int

    def as_lines(self) -> list[str]:
        lines = [f"task={self.task}", f"mae={self.mae!r}", f"rmse={self.rmse!r}"]
        if self.auc is not None:
            lines.append(f"auc={self.auc!r}")
        lines += [f"n_examples={self.n_examples}", f"cold_user_count={self.cold_user_count}",
                  f"cold_item_count={self.cold_item_count}"]
        return lines

    def summary(self) -> str:
        text = f"{self.task}: MAE {self.mae:.4f}  RMSE {self.rmse:.4f}"
        if self.auc is not None:
            text += f"  AUC {self.auc:.4f}"
        return text + (f"  ({self.n_examples} examples, {self.cold_user_count} cold users, "
                       f"{self.cold_item_count} cold items)")


def report_from_predictions(preds: np.ndarray, examples: Sequence[RatingRecord], stats: Statistics,
                            task: str = "rating", threshold: float | None = None) -> EvalReport:
    targets = np.array([r.rating for r in examples])
    score = None
    if task == "ranking":
        if threshold is None:
            raise ValueError("ranking evaluation needs a threshold")
        score = auc(expit(preds), ranking_labels(targets, threshold))
    cold_users = {r.user for r in examples if r.user not in stats.user_mean}
    cold_items = {r.item for r in examples if r.item not in stats.item_mean}
    return EvalReport(task, mae(preds, targets), rmse(preds, targets), score, len(examples),
                      len(cold_users), len(cold_items))


def evaluate(params: ModelParams, stats: Statistics, tables: InteractionTables, graph: RelationshipGraph,
             test: Sequence[RatingRecord], task: str = "rating", threshold: float | None = None) -> EvalReport:
    if not test:
        raise ValueError("empty test set")
    preds = predict_ratings(params, stats, tables, graph, test)
    return report_from_predictions(preds, test, stats, task, threshold)


def null_auc_std(scores, labels, n_perm: int = 1000, seed: int = 0) -> tuple[float, float]:
    """Mean and std of AUC under random label permutations."""
    rng = np.random.default_rng(seed)
    labels = np.asarray(labels)
    draws = [auc(scores, rng.permutation(labels)) for _ in range(n_perm)]
    return float(np.mean(draws)), float(np.std(draws))


def benchmark_predictions(stats: Statistics, examples: Sequence[RatingRecord]) -> np.ndarray:
    return np.array([stats.benchmark(r.user, r.item) for r in examples])

