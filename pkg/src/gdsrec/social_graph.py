"""Explicit social-connection strengths from co-rating agreement."""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Mapping, Sequence

from .dataset import InteractionTables, TrustPair

DEFAULT_DELTA = 1.0


def relationship_coefficient(ratings_i: Mapping[int, float], ratings_j: Mapping[int, float], delta: float) -> int:
    """One plus the number of co-rated items whose two ratings differ by at most ``delta``."""
    if len(ratings_j) < len(ratings_i):
        ratings_i, ratings_j = ratings_j, ratings_i
    agree = 0
    for item, r_i in ratings_i.items():
        r_j = ratings_j.get(item)
        if r_j is not None and abs(r_i - r_j) <= delta:
            agree += 1
    return 1 + agree


@dataclass(frozen=True)
class Neighbor:
    user: int
    strength: int


@dataclass
class RelationshipGraph:
    neighbors: dict[int, list[Neighbor]]
    delta: float = DEFAULT_DELTA

    def of(self, user: int) -> list[Neighbor]:
        return self.neighbors.get(user, [])

    def degree(self, user: int) -> int:
        return len(self.neighbors.get(user, ()))

    def edges(self):
        for u in sorted(self.neighbors):
            for nb in self.neighbors[u]:
                yield u, nb.user, nb.strength

    def strength_histogram(self) -> Counter:
        return Counter(t for _, _, t in self.edges())


def build_graph(tables: InteractionTables, trust: Sequence[TrustPair], delta: float = DEFAULT_DELTA) -> RelationshipGraph:
    """Attach a strength to every directed trust pair; ``i``'s list holds ``j``."""
    cache: dict[int, dict[int, float]] = {}

    def ratings(u: int) -> dict[int, float]:
        r = cache.get(u)
        if r is None:
            r = cache[u] = tables.ratings_of_user(u)
        return r

    neighbors: dict[int, list[Neighbor]] = {}
    for src, dst in trust:
        t = relationship_coefficient(ratings(src), ratings(dst), delta)
        neighbors.setdefault(src, []).append(Neighbor(dst, t))
    return RelationshipGraph(neighbors, delta)


def lambda_weights(graph: RelationshipGraph, user: int) -> list[tuple[int, float]]:
    """Strengths of ``user``'s neighbors normalised to sum to one."""
    return normalize_strengths(graph.of(user))


def normalize_strengths(neighbors: Sequence[Neighbor]) -> list[tuple[int, float]]:
    total = sum(nb.strength for nb in neighbors)
    return [(nb.user, nb.strength / total) for nb in neighbors]
