"""Planted-community synthetic data.

Users and items are split into ``communities`` groups.  A rating is::

    round(center + user_bias + item_bias + affinity[community(u), group(v)] + noise)

clipped to the scale, and trust edges only join users of the same
community, so a user's neighbors carry real information about how the
user will rate an item.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass
class SynthData:
    ratings: list[tuple[int, int, float]]
    trust: list[tuple[int, int]]
    user_community: np.ndarray
    item_group: np.ndarray

    def write(self, out_dir: str | Path) -> tuple[Path, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        ratings_path, trust_path = out / "ratings.txt", out / "trust.txt"
        ratings_path.write_text("".join(f"{u} {v} {r:g}\n" for u, v, r in self.ratings), encoding="utf-8")
        trust_path.write_text("".join(f"{a} {b}\n" for a, b in self.trust), encoding="utf-8")
        return ratings_path, trust_path


def generate(n_users: int, n_items: int, n_ratings: int, n_trust: int, seed: int = 0,
             communities: int = 4, scale: tuple[float, float] = (1.0, 5.0),
             bias_std: float = 0.5, affinity_std: float = 1.0, noise_std: float = 0.3) -> SynthData:
    """Draw a data set; raw ids are 1-based so they differ from the dense ids."""
    for name, value in (("n_users", n_users), ("n_items", n_items), ("n_ratings", n_ratings)):
        if value <= 0:
            raise ValueError(f"{name} must be positive")
    if n_trust < 0:
        raise ValueError("n_trust must be >= 0")
    if n_ratings > n_users * n_items:
        raise ValueError("more ratings requested than user-item pairs")
    rng = np.random.default_rng(seed)
    c = min(communities, n_users, n_items)
    user_community = rng.permutation(np.arange(n_users) % c)
    item_group = rng.permutation(np.arange(n_items) % c)
    user_bias = rng.normal(0.0, bias_std, n_users)
    item_bias = rng.normal(0.0, bias_std, n_items)
    affinity = rng.normal(0.0, affinity_std, (c, c))
    lo, hi = scale
    center = 0.5 * (lo + hi)

    cells = np.sort(rng.choice(n_users * n_items, size=n_ratings, replace=False))
    users, items = np.divmod(cells, n_items)
    raw = (center + user_bias[users] + item_bias[items] + affinity[user_community[users], item_group[items]]
           + rng.normal(0.0, noise_std, n_ratings))
    values = np.clip(np.rint(raw), lo, hi)
    ratings = [(int(u) + 1, int(v) + 1, float(r)) for u, v, r in zip(users, items, values)]

    trust: list[tuple[int, int]] = []
    if n_trust:
        same = user_community[:, None] == user_community[None, :]
        np.fill_diagonal(same, False)
        src, dst = np.nonzero(same)
        take = np.sort(rng.choice(len(src), size=min(n_trust, len(src)), replace=False))
        trust = [(int(src[i]) + 1, int(dst[i]) + 1) for i in take]
    return SynthData(ratings, trust, user_community, item_group)
