"""Rating/trust loading, splitting, statistics and the decentralized interaction view.

File formats (UTF-8 text, one record per line, fields separated by any run
of spaces or tabs, blank lines and lines starting with ``#`` ignored)::

    ratings:  <user> <item> <rating>
    trust:    <source user> <target user>

Raw ids are opaque tokens; they are remapped to dense 0-based integers in
order of first appearance in the ratings file.
"""
from __future__ import annotations

import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np

log = logging.getLogger(__name__)

DEFAULT_SCALE = (1.0, 5.0)


class DataError(ValueError):
    """Malformed or inconsistent input data."""

    def __init__(self, message: str, path: str | Path | None = None, line: int | None = None):
        self.path = None if path is None else str(path)
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(where + message)


class RatingRecord(NamedTuple):
    user: int
    item: int
    rating: float


class TrustPair(NamedTuple):
    source: int
    target: int


class IdMap:
    """Bidirectional map between raw id tokens and dense 0-based ids."""

    def __init__(self, raw_ids: Iterable[str] = ()):
        self._to_dense: dict[str, int] = {}
        self._to_raw: list[str] = []
        for raw in raw_ids:
            self.add(raw)

    def add(self, raw: str) -> int:
        idx = self._to_dense.get(raw)
        if idx is None:
            idx = self._to_dense[raw] = len(self._to_raw)
            self._to_raw.append(raw)
        return idx

    def encode(self, raw: str) -> int | None:
        return self._to_dense.get(raw)

    def decode(self, idx: int) -> str:
        return self._to_raw[idx]

    def __contains__(self, raw: str) -> bool:
        return raw in self._to_dense

    def __len__(self) -> int:
        return len(self._to_raw)

    @property
    def raw_ids(self) -> list[str]:
        return list(self._to_raw)


def scale_levels(r_min: float, r_max: float) -> int:
    """Number of distinct difference indices on a rating scale."""
    return int(math.ceil(r_max - r_min)) + 1


@dataclass
class Dataset:
    ratings: list[RatingRecord]
    trust: list[TrustPair]
    users: IdMap
    items: IdMap
    r_min: float = DEFAULT_SCALE[0]
    r_max: float = DEFAULT_SCALE[1]

    @property
    def num_users(self) -> int:
        return len(self.users)

    @property
    def num_items(self) -> int:
        return len(self.items)

    @property
    def levels(self) -> int:
        return scale_levels(self.r_min, self.r_max)


@dataclass
class TrustLoadReport:
    kept: int = 0
    self_loops: int = 0
    unknown_users: int = 0
    duplicates: int = 0


def _data_lines(path: Path):
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if text and not text.startswith("#"):
                yield lineno, text.split()


def load_ratings(path: str | Path, scale: tuple[float, float] = DEFAULT_SCALE) -> tuple[list[RatingRecord], IdMap, IdMap]:
    path = Path(path)
    if not path.is_file():
        raise DataError("ratings file not found", path)
    r_min, r_max = scale
    users, items = IdMap(), IdMap()
    seen: set[tuple[int, int]] = set()
    records: list[RatingRecord] = []
    for lineno, fields in _data_lines(path):
        if len(fields) != 3:
            raise DataError(f"expected '<user> <item> <rating>', got {len(fields)} fields", path, lineno)
        try:
            rating = float(fields[2])
        except ValueError:
            raise DataError(f"rating {fields[2]!r} is not a number", path, lineno) from None
        if not math.isfinite(rating) or rating < r_min or rating > r_max:
            raise DataError(f"rating out of range [{r_min}, {r_max}]: {fields[2]}", path, lineno)
        u, v = users.add(fields[0]), items.add(fields[1])
        if (u, v) in seen:
            raise DataError(f"duplicate rating for user {fields[0]} item {fields[1]}", path, lineno)
        seen.add((u, v))
        records.append(RatingRecord(u, v, rating))
    return records, users, items


def load_trust(path: str | Path, users: IdMap) -> tuple[list[TrustPair], TrustLoadReport]:
    """Read directed trust pairs, dropping self-loops, duplicates and unknown users."""
    path = Path(path)
    if not path.is_file():
        raise DataError("trust file not found", path)
    report = TrustLoadReport()
    seen: set[TrustPair] = set()
    pairs: list[TrustPair] = []
    for lineno, fields in _data_lines(path):
        if len(fields) != 2:
            raise DataError(f"expected '<user> <user>', got {len(fields)} fields", path, lineno)
        if fields[0] == fields[1]:
            report.self_loops += 1
            continue
        a, b = users.encode(fields[0]), users.encode(fields[1])
        if a is None or b is None:
            report.unknown_users += 1
            continue
        pair = TrustPair(a, b)
        if pair in seen:
            report.duplicates += 1
            continue
        seen.add(pair)
        pairs.append(pair)
    report.kept = len(pairs)
    if report.self_loops or report.unknown_users:
        log.warning("%s: dropped %d self-loops and %d pairs with unknown users",
                    path, report.self_loops, report.unknown_users)
    return pairs, report


def load_dataset(ratings_path, trust_path=None, scale: tuple[float, float] = DEFAULT_SCALE) -> Dataset:
    ratings, users, items = load_ratings(ratings_path, scale)
    trust: list[TrustPair] = []
    if trust_path is not None:
        trust, _ = load_trust(trust_path, users)
    return Dataset(ratings, trust, users, items, float(scale[0]), float(scale[1]))


def split(ratings: Sequence[RatingRecord], test_fraction: float, seed: int) -> tuple[list[RatingRecord], list[RatingRecord]]:
    """Uniform random holdout; both parts keep the input order."""
    if not 0.0 < test_fraction < 1.0:
        raise ValueError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    n = len(ratings)
    if n < 2:
        raise ValueError("need at least 2 ratings to split")
    n_test = int(math.floor(test_fraction * n + 0.5))
    perm = np.random.default_rng(seed).permutation(n)
    in_test = np.zeros(n, dtype=bool)
    in_test[perm[:n_test]] = True
    train = [r for r, t in zip(ratings, in_test) if not t]
    test = [r for r, t in zip(ratings, in_test) if t]
    return train, test


@dataclass
class Statistics:
    user_mean: dict[int, float]
    item_mean: dict[int, float]
    global_mean: float

    def user_mean_of(self, user: int) -> float:
        return self.user_mean.get(user, self.global_mean)

    def item_mean_of(self, item: int) -> float:
        return self.item_mean.get(item, self.global_mean)

    def benchmark(self, user: int, item: int) -> float:
        """Bias-only prediction: mean of the user and item averages."""
        return 0.5 * (self.user_mean_of(user) + self.item_mean_of(item))


def compute_statistics(train: Sequence[RatingRecord]) -> Statistics:
    if not train:
        raise ValueError("cannot compute statistics of an empty training set")
    by_user: dict[int, list[float]] = defaultdict(list)
    by_item: dict[int, list[float]] = defaultdict(list)
    for r in train:
        by_user[r.user].append(r.rating)
        by_item[r.item].append(r.rating)
    # fsum is correctly rounded, so the means do not depend on input order
    return Statistics(
        user_mean={u: math.fsum(v) / len(v) for u, v in sorted(by_user.items())},
        item_mean={i: math.fsum(v) / len(v) for i, v in sorted(by_item.items())},
        global_mean=math.fsum(r.rating for r in train) / len(train),
    )


def _diff_index(r: float, mean: float, levels: int) -> int:
    return min(max(int(math.ceil(abs(r - mean))), 0), levels - 1)


def user_diff_index(r: float, item_mean: float, levels: int = 5) -> int:
    """Index of a user-side interaction: ceil(|r - item mean|), clamped to the table."""
    return _diff_index(r, item_mean, levels)


def item_diff_index(r: float, user_mean: float, levels: int = 5) -> int:
    """Index of an item-side interaction: ceil(|r - user mean|), clamped to the table."""
    return _diff_index(r, user_mean, levels)


class Interaction(NamedTuple):
    other: int
    diff: int
    rating: float


@dataclass
class InteractionTables:
    """Per-user and per-item interaction lists carrying difference indices.

    ``by_user[u]`` holds ``(item, user-side diff, rating)``;
    ``by_item[v]`` holds ``(user, item-side diff, rating)``.
    """

    by_user: dict[int, list[Interaction]]
    by_item: dict[int, list[Interaction]]
    levels: int
    _user_arrays: dict[int, tuple[np.ndarray, np.ndarray]] = field(default_factory=dict, repr=False)
    _item_arrays: dict[int, tuple[np.ndarray, np.ndarray]] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        for src, dst in ((self.by_user, self._user_arrays), (self.by_item, self._item_arrays)):
            for key, rows in src.items():
                dst[key] = (np.array([r.other for r in rows], dtype=np.int64),
                            np.array([r.diff for r in rows], dtype=np.int64))

    _EMPTY = (np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64))

    def of_user(self, user: int) -> list[Interaction]:
        return self.by_user.get(user, [])

    def of_item(self, item: int) -> list[Interaction]:
        return self.by_item.get(item, [])

    def user_arrays(self, user: int) -> tuple[np.ndarray, np.ndarray]:
        """(item ids, diff indices) rated by ``user``."""
        return self._user_arrays.get(user, self._EMPTY)

    def item_arrays(self, item: int) -> tuple[np.ndarray, np.ndarray]:
        """(user ids, diff indices) who rated ``item``."""
        return self._item_arrays.get(item, self._EMPTY)

    def ratings_of_user(self, user: int) -> dict[int, float]:
        return {r.other: r.rating for r in self.of_user(user)}


def build_interaction_tables(train: Sequence[RatingRecord], stats: Statistics, levels: int = 5) -> InteractionTables:
    by_user: dict[int, list[Interaction]] = defaultdict(list)
    by_item: dict[int, list[Interaction]] = defaultdict(list)
    for r in train:
        by_user[r.user].append(Interaction(r.item, user_diff_index(r.rating, stats.item_mean_of(r.item), levels), r.rating))
        by_item[r.item].append(Interaction(r.user, item_diff_index(r.rating, stats.user_mean_of(r.user), levels), r.rating))
    return InteractionTables(dict(by_user), dict(by_item), levels)
