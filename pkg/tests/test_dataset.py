import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gdsrec.dataset import (
    DataError,
    IdMap,
    RatingRecord,
    build_interaction_tables,
    compute_statistics,
    item_diff_index,
    load_dataset,
    load_ratings,
    load_trust,
    scale_levels,
    split,
    user_diff_index,
)


def write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


# -- loading ----------------------------------------------------------------

def test_first_seen_dense_remapping(tmp_path):
    records, users, items = load_ratings(write(tmp_path, "r.txt", "7 9 4.0\n7 3 2.0"))
    assert records == [RatingRecord(0, 0, 4.0), RatingRecord(0, 1, 2.0)]
    assert users.raw_ids == ["7"] and items.raw_ids == ["9", "3"]


def test_empty_file(tmp_path):
    records, users, items = load_ratings(write(tmp_path, "r.txt", ""))
    assert records == [] and len(users) == 0 and len(items) == 0


def test_comments_blank_lines_and_tabs(tmp_path):
    records, _, _ = load_ratings(write(tmp_path, "r.txt", "# header\n\n  a\tb\t3\n# c d 1\nb a 5\n"))
    assert [r.rating for r in records] == [3.0, 5.0]


def test_rating_out_of_range(tmp_path):
    with pytest.raises(DataError, match="rating out of range") as info:
        load_ratings(write(tmp_path, "r.txt", "7 9 4\n7 9 9.0"), (1, 5))
    assert info.value.line == 2


@pytest.mark.parametrize("text,line", [("1 2\n", 1), ("1 2 3\n1 2 x\n", 2), ("1 2 3 4\n", 1), ("1 2 nan\n", 1)])
def test_parse_failures_report_line(tmp_path, text, line):
    with pytest.raises(DataError) as info:
        load_ratings(write(tmp_path, "r.txt", text))
    assert info.value.line == line and str(info.value.path).endswith("r.txt")


def test_duplicate_pair_rejected(tmp_path):
    with pytest.raises(DataError, match="duplicate"):
        load_ratings(write(tmp_path, "r.txt", "1 2 3\n1 2 4\n"))


def test_trust_both_directions_kept(tmp_path):
    _, users, _ = load_ratings(write(tmp_path, "r.txt", "7 1 3\n8 1 4\n"))
    pairs, report = load_trust(write(tmp_path, "t.txt", "7 8\n8 7\n"), users)
    assert [(p.source, p.target) for p in pairs] == [(0, 1), (1, 0)]
    assert report.kept == 2


def test_trust_self_loop_dropped(tmp_path):
    _, users, _ = load_ratings(write(tmp_path, "r.txt", "7 1 3\n"))
    pairs, report = load_trust(write(tmp_path, "t.txt", "7 7\n"), users)
    assert pairs == [] and report.self_loops == 1


def test_trust_unknown_user_dropped(tmp_path):
    _, users, _ = load_ratings(write(tmp_path, "r.txt", "7 1 3\n8 1 3\n"))
    pairs, report = load_trust(write(tmp_path, "t.txt", "7 999\n7 8\n7 8\n"), users)
    assert len(pairs) == 1 and report.unknown_users == 1 and report.duplicates == 1


def test_trust_parse_failure(tmp_path):
    _, users, _ = load_ratings(write(tmp_path, "r.txt", "7 1 3\n"))
    with pytest.raises(DataError) as info:
        load_trust(write(tmp_path, "t.txt", "7\n"), users)
    assert info.value.line == 1


def test_load_dataset_levels(tmp_path):
    data = load_dataset(write(tmp_path, "r.txt", "1 1 1\n2 2 10\n"), None, (1, 10))
    assert data.num_users == 2 and data.levels == 10 and data.trust == []


@given(st.lists(st.text("abcxyz0123", min_size=1, max_size=4), max_size=30))
def test_idmap_round_trip(raw):
    ids = IdMap()
    dense = [ids.add(r) for r in raw]
    assert [ids.decode(d) for d in dense] == raw
    assert sorted(set(dense)) == list(range(len(set(raw))))


def test_scale_levels():
    assert scale_levels(1, 5) == 5
    assert scale_levels(0.5, 5) == 6


# -- split ------------------------------------------------------------------

def ten():
    return [RatingRecord(i, i, 3.0) for i in range(10)]


def test_split_sizes():
    train, test = split(ten(), 0.2, 1)
    assert len(train) == 8 and len(test) == 2


def test_split_deterministic():
    assert split(ten(), 0.2, 1) == split(ten(), 0.2, 1)


def test_split_seed_changes_membership():
    memberships = {tuple(r.user for r in split(ten(), 0.2, seed)[1]) for seed in range(1, 6)}
    assert len(memberships) > 1


@given(st.integers(2, 60), st.floats(0.01, 0.99), st.integers(0, 10**6))
def test_split_partition(n, frac, seed):
    ratings = [RatingRecord(i, 0, 1.0) for i in range(n)]
    train, test = split(ratings, frac, seed)
    assert len(test) == math.floor(frac * n + 0.5)
    assert sorted(train + test) == ratings and not set(train) & set(test)


@pytest.mark.parametrize("frac", [0.0, 1.0, -0.1, 1.5])
def test_split_fraction_out_of_range(frac):
    with pytest.raises(ValueError):
        split(ten(), frac, 0)


# -- statistics -------------------------------------------------------------

def test_two_point_mean():
    stats = compute_statistics([RatingRecord(0, 0, 4.0), RatingRecord(0, 1, 2.0)])
    assert stats.user_mean[0] == 3.0


def test_constant_data():
    stats = compute_statistics([RatingRecord(u, v, 5.0) for u in range(3) for v in range(2)])
    assert set(stats.user_mean.values()) == {5.0} == set(stats.item_mean.values())
    assert stats.global_mean == 5.0


def test_cold_item_falls_back_to_global_mean():
    stats = compute_statistics([RatingRecord(0, 0, 4.0), RatingRecord(1, 0, 1.0)])
    assert stats.item_mean_of(7) == stats.global_mean == 2.5
    assert stats.user_mean_of(5) == 2.5


def test_empty_train_rejected():
    with pytest.raises(ValueError):
        compute_statistics([])


@settings(max_examples=50)
@given(st.lists(st.tuples(st.integers(0, 5), st.integers(0, 5), st.sampled_from([1.0, 1.5, 2.0, 3.3, 5.0])),
                min_size=1, max_size=30, unique_by=lambda t: t[:2]),
       st.randoms())
def test_statistics_permutation_invariant(rows, rnd):
    ratings = [RatingRecord(*r) for r in rows]
    shuffled = ratings[:]
    rnd.shuffle(shuffled)
    a, b = compute_statistics(ratings), compute_statistics(shuffled)
    assert a == b
    assert all(1.0 <= m <= 5.0 for m in list(a.user_mean.values()) + list(a.item_mean.values()))


# -- difference indices ------------------------------------------------------

def test_user_diff_examples():
    assert user_diff_index(3, 3.8) == 1
    assert user_diff_index(4.2, 4.2) == 0
    assert user_diff_index(1, 5) == 4


def test_item_diff_examples():
    assert item_diff_index(5, 2.5) == 3
    assert item_diff_index(2.7, 2.7) == 0
    assert item_diff_index(2, 2.2) == 1


def test_diff_index_bounds_exhaustive():
    grid = np.arange(1.0, 5.0 + 1e-9, 0.5)
    means = np.linspace(1.0, 5.0, 401)
    for r, m in itertools.product(grid, means):
        for fn in (user_diff_index, item_diff_index):
            assert 0 <= fn(r, m, 5) <= 4


def test_diff_index_clamps_corrupt_input():
    assert user_diff_index(40.0, 1.0, 5) == 4


@given(st.integers(1, 5), st.integers(1, 5))
def test_integer_diff_is_exact(r, m):
    assert user_diff_index(r, m) == abs(r - m) == item_diff_index(r, m)


# -- interaction tables --------------------------------------------------------

def test_single_rating_table():
    train = [RatingRecord(0, 0, 4.0)]
    tables = build_interaction_tables(train, compute_statistics(train))
    assert [tuple(x) for x in tables.of_user(0)] == [(0, 0, 4.0)]


def test_two_users_one_item():
    train = [RatingRecord(0, 0, 5.0), RatingRecord(1, 0, 3.0)]
    tables = build_interaction_tables(train, compute_statistics(train))
    assert [x.diff for x in tables.of_user(0)] == [1] and [x.diff for x in tables.of_user(1)] == [1]


def test_absent_user_empty():
    train = [RatingRecord(0, 0, 5.0)]
    tables = build_interaction_tables(train, compute_statistics(train))
    assert tables.of_user(3) == [] and len(tables.user_arrays(3)[0]) == 0


def test_tables_cover_training_ratings():
    rng = np.random.default_rng(0)
    train = [RatingRecord(u, v, float(rng.integers(1, 6))) for u in range(6) for v in range(5) if rng.random() < 0.5]
    stats = compute_statistics(train)
    tables = build_interaction_tables(train, stats)
    by_user = sorted((u, x.other, x.rating) for u, rows in tables.by_user.items() for x in rows)
    by_item = sorted((x.other, v, x.rating) for v, rows in tables.by_item.items() for x in rows)
    assert by_user == by_item == sorted(train)
    for r in train:
        (row,) = [x for x in tables.of_user(r.user) if x.other == r.item]
        assert row.diff == user_diff_index(r.rating, stats.item_mean[r.item])
        (col,) = [x for x in tables.of_item(r.item) if x.other == r.user]
        assert col.diff == item_diff_index(r.rating, stats.user_mean[r.user])
