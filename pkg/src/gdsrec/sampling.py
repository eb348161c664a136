"""Node dropout: cap every interaction/neighbor list at ``K`` random entries."""
from __future__ import annotations

from typing import Sequence, TypeVar

import numpy as np

from .dataset import InteractionTables
from .model import Group, NeighborSample
from .social_graph import RelationshipGraph, normalize_strengths

T = TypeVar("T")


def _keep(n: int, k: int | None, rng: np.random.Generator | None) -> np.ndarray | None:
    if k is None or n <= k:
        return None
    if k < 1:
        raise ValueError(f"dropout cap must be >= 1, got {k}")
    return np.sort(rng.choice(n, size=k, replace=False))


def node_dropout_sample(items: Sequence[T], k: int, rng: np.random.Generator) -> Sequence[T]:
    """The whole list if it has at most ``k`` entries, else a uniform ``k``-subset in original order."""
    if k < 1:
        raise ValueError(f"dropout cap must be >= 1, got {k}")
    keep = _keep(len(items), k, rng)
    if keep is None:
        return items
    if isinstance(items, np.ndarray):
        return items[keep]
    return [items[i] for i in keep]


def _sample_group(group: Group, k: int | None, rng) -> Group:
    keep = _keep(len(group[0]), k, rng)
    return group if keep is None else (group[0][keep], group[1][keep])


def _without(group: Group, entity: int) -> Group:
    mask = group[0] != entity
    return group if mask.all() else (group[0][mask], group[1][mask])


def build_sample(tables: InteractionTables, graph: RelationshipGraph, user: int, item: int,
                 k: int | None = None, rng: np.random.Generator | None = None,
                 hide_target: bool = False) -> NeighborSample:
    """Lists for predicting ``(user, item)``; ``k=None`` keeps everything (evaluation).

    ``hide_target`` drops the pair being predicted from the user's and the
    item's own lists, so a training example cannot read its own rating.
    """
    own_items, own_users = tables.user_arrays(user), tables.item_arrays(item)
    if hide_target:
        own_items, own_users = _without(own_items, item), _without(own_users, user)
    items_of_user = _sample_group(own_items, k, rng)
    users_of_item = _sample_group(own_users, k, rng)
    neighbors = graph.of(user)
    keep = _keep(len(neighbors), k, rng)
    if keep is not None:
        neighbors = [neighbors[i] for i in keep]
    social = normalize_strengths(neighbors)
    neighbor_items = [_sample_group(tables.user_arrays(nb), k, rng) for nb, _ in social]
    return NeighborSample(items_of_user, users_of_item, social, neighbor_items)
