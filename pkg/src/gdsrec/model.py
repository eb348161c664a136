"""GDSRec parameters and forward computation.

Prediction for user ``u`` and item ``v``::

    r_hat = (E(u) + E(v)) / 2 + f(u, v)
    f     = (rp(u, v) + sum_k lambda_uk * rp(k, v)) / 2     # u has social neighbors
    f     = rp(u, v)                                        # otherwise

where ``rp`` is a three-layer head over the user and item offsets ``h_u``,
``h_v``.  Each offset is an attention-weighted sum of interaction encodings
(entity embedding joined with a rating-difference embedding, passed
through a small MLP), followed by an affine map and tanh.

Two equivalent paths are provided: per-example functions that mirror the
equations one vector at a time, and :func:`forward_batch`, which evaluates
a whole mini-batch on one tape with segment-wise softmax and sums.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Iterator, Mapping, Sequence

import numpy as np

from . import diffcore as dc
from .dataset import Statistics
from .diffcore import Parameter, Tensor

Group = tuple[np.ndarray, np.ndarray]  # (entity ids, diff indices)


@dataclass(frozen=True)
class ModelDims:
    dim: int = 64
    levels: int = 5
    attn_hidden: int = 64
    mlp_hidden: int = 0  # 0 means "same as dim"

    def __post_init__(self):
        if self.mlp_hidden == 0:
            object.__setattr__(self, "mlp_hidden", self.dim)
        for name, value in asdict(self).items():
            if int(value) != value or value <= 0:
                raise ValueError(f"ModelDims.{name} must be a positive integer, got {value}")


@dataclass
class NeighborSample:
    """Interaction and social lists used for one (user, item) prediction."""

    items_of_user: Group
    users_of_item: Group
    social_neighbors: list[tuple[int, float]] = field(default_factory=list)
    neighbor_items: list[Group] = field(default_factory=list)


class ModelParams:
    """Ordered registry of every trainable tensor."""

    def __init__(self, dims: ModelDims, num_users: int, num_items: int):
        self.dims = dims
        self.num_users = num_users
        self.num_items = num_items
        self._params: dict[str, Parameter] = {}
        for name, shape, _ in self.layout():
            self._params[name] = Parameter(np.zeros(shape), name)

    def layout(self) -> list[tuple[str, tuple[int, ...], str]]:
        """(name, shape, init kind) for every parameter in registration order."""
        D, S, A, H = self.dims.dim, self.dims.levels, self.dims.attn_hidden, self.dims.mlp_hidden
        entries = [
            ("user_emb", (self.num_users, D), "embed"),
            ("item_emb", (self.num_items, D), "embed"),
            ("user_diff_emb", (S, D), "embed"),
            ("item_diff_emb", (S, D), "embed"),
        ]
        for side in ("user", "item"):
            entries += [
                (f"{side}_mlp.W1", (H, 2 * D), "weight"), (f"{side}_mlp.b1", (H,), "bias"),
                (f"{side}_mlp.W2", (D, H), "weight"), (f"{side}_mlp.b2", (D,), "bias"),
            ]
        for side in ("user", "item"):
            entries += [
                (f"{side}_attn.W1", (A, 2 * D), "weight"), (f"{side}_attn.b1", (A,), "bias"),
                (f"{side}_attn.w2", (A,), "weight"), (f"{side}_attn.b2", (), "bias"),
            ]
        for side in ("user", "item"):
            entries += [(f"{side}_agg.W", (D, D), "weight"), (f"{side}_agg.b", (D,), "bias")]
        entries += [
            ("head.W1", (D, 2 * D), "weight"), ("head.b1", (D,), "bias"),
            ("head.W2", (D, D), "weight"), ("head.b2", (D,), "bias"),
            ("head.w", (D,), "weight"),
        ]
        return entries

    def __getitem__(self, name: str) -> Parameter:
        return self._params[name]

    def __iter__(self) -> Iterator[Parameter]:
        return iter(self._params.values())

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return list(self._params)

    def arrays(self) -> list[tuple[str, np.ndarray]]:
        return [(name, p.value) for name, p in self._params.items()]

    def snapshot(self) -> dict[str, np.ndarray]:
        return {name: p.value.copy() for name, p in self._params.items()}

    def load(self, arrays: Mapping[str, np.ndarray]) -> None:
        missing = set(self._params) - set(arrays)
        extra = set(arrays) - set(self._params)
        if missing or extra:
            raise ValueError(f"parameter set mismatch: missing {sorted(missing)}, unexpected {sorted(extra)}")
        for name, p in self._params.items():
            arr = np.asarray(arrays[name], dtype=np.float64)
            if arr.shape != p.shape:
                raise ValueError(f"{name}: shape {arr.shape} does not match expected {p.shape}")
            p.value[...] = arr

    def zero_(self) -> None:
        for p in self:
            p.value[...] = 0.0


def init_params(dims: ModelDims, num_users: int, num_items: int, seed: int = 0) -> ModelParams:
    """Embeddings ~ N(0, 0.1^2), weights Glorot-uniform, biases zero."""
    if num_users <= 0 or num_items <= 0:
        raise ValueError("need at least one user and one item")
    params = ModelParams(dims, num_users, num_items)
    rng = np.random.default_rng(seed)
    for name, shape, kind in params.layout():
        p = params[name]
        if kind == "embed":
            p.value[...] = rng.normal(0.0, 0.1, size=shape)
        elif kind == "weight":
            fan_out, fan_in = (shape[0], shape[1]) if len(shape) == 2 else (1, shape[0])
            bound = math.sqrt(6.0 / (fan_in + fan_out))
            p.value[...] = rng.uniform(-bound, bound, size=shape)
    return params


# -- shared building blocks (work on one vector or a stack of rows) --------

def _side_tables(side: str) -> tuple[str, str]:
    # user-side interactions embed the *item*; item-side ones embed the *user*
    return ("item_emb", "user_diff_emb") if side == "user" else ("user_emb", "item_diff_emb")


def _anchor_table(side: str) -> str:
    return "user_emb" if side == "user" else "item_emb"


def _encode(params: ModelParams, side: str, others, diffs) -> Tensor:
    ent, diff = _side_tables(side)
    x = dc.concat(dc.embedding_lookup(params[ent], others), dc.embedding_lookup(params[diff], diffs))
    hidden = dc.relu_op(dc.affine(params[f"{side}_mlp.W1"], x, params[f"{side}_mlp.b1"]))
    return dc.affine(params[f"{side}_mlp.W2"], hidden, params[f"{side}_mlp.b2"])


def _score(params: ModelParams, side: str, encoded: Tensor, anchor: Tensor) -> Tensor:
    pre = dc.affine(params[f"{side}_attn.W1"], dc.concat(encoded, anchor), params[f"{side}_attn.b1"])
    return dc.add(dc.dot(params[f"{side}_attn.w2"], dc.relu_op(pre)), params[f"{side}_attn.b2"])


def _squash(params: ModelParams, side: str, aggregate) -> Tensor:
    return dc.tanh_op(dc.affine(params[f"{side}_agg.W"], aggregate, params[f"{side}_agg.b"]))


def _head(params: ModelParams, h_u: Tensor, h_v: Tensor) -> Tensor:
    z1 = dc.tanh_op(dc.affine(params["head.W1"], dc.concat(h_u, h_v), params["head.b1"]))
    z2 = dc.tanh_op(dc.affine(params["head.W2"], z1, params["head.b2"]))
    return dc.dot(params["head.w"], z2)


# -- per-example path -----------------------------------------------------

def encode_user_interaction(params: ModelParams, item: int, diff_index: int) -> Tensor:
    return _encode(params, "user", item, diff_index)


def encode_item_interaction(params: ModelParams, user: int, diff_index: int) -> Tensor:
    return _encode(params, "item", user, diff_index)


def attention_weights(params: ModelParams, side: str, encoded: Sequence[Tensor], anchor: Tensor) -> list[Tensor]:
    """Softmax-normalised attention of each encoded interaction against ``anchor``."""
    if not encoded:
        raise ValueError("attention over an empty interaction list")
    return dc.softmax_over_set([_score(params, side, x, anchor) for x in encoded])


def _offset(params: ModelParams, side: str, anchor_id: int, group: Group) -> Tensor:
    others, diffs = group
    if len(others) == 0:
        return _squash(params, side, np.zeros(params.dims.dim))
    encoded = [_encode(params, side, int(o), int(d)) for o, d in zip(others, diffs)]
    anchor = dc.embedding_lookup(params[_anchor_table(side)], int(anchor_id))
    weights = attention_weights(params, side, encoded, anchor)
    return _squash(params, side, dc.weighted_sum(weights, encoded))


def user_offset(params: ModelParams, user: int, items_of_user: Group) -> Tensor:
    return _offset(params, "user", user, items_of_user)


def item_offset(params: ModelParams, item: int, users_of_item: Group) -> Tensor:
    return _offset(params, "item", item, users_of_item)


def preference_rating(params: ModelParams, h_u: Tensor, h_v: Tensor) -> Tensor:
    return _head(params, h_u, h_v)


def social_preference_term(params: ModelParams, h_v: Tensor, sample: NeighborSample) -> Tensor | None:
    """Strength-weighted neighbor preference ratings, or ``None`` without neighbors."""
    if not sample.social_neighbors:
        return None
    terms = []
    for (nb, lam), group in zip(sample.social_neighbors, sample.neighbor_items):
        rp = preference_rating(params, user_offset(params, nb, group), h_v)
        terms.append(dc.mul(rp, lam))
    total = terms[0]
    for t in terms[1:]:
        total = dc.add(total, t)
    return total


def predict_rating(params: ModelParams, stats: Statistics, user: int, item: int, sample: NeighborSample) -> Tensor:
    h_u = user_offset(params, user, sample.items_of_user)
    h_v = item_offset(params, item, sample.users_of_item)
    own = preference_rating(params, h_u, h_v)
    social = social_preference_term(params, h_v, sample)
    f = own if social is None else dc.mul(dc.add(own, social), 0.5)
    return dc.add(f, stats.benchmark(user, item))


def predict_ranking_score(params: ModelParams, stats: Statistics, user: int, item: int, sample: NeighborSample) -> Tensor:
    return dc.sigmoid_op(predict_rating(params, stats, user, item, sample))


# -- batched path ---------------------------------------------------------

def _offsets_batch(params: ModelParams, side: str, anchors: np.ndarray, groups: Sequence[Group]) -> Tensor:
    """Offsets for many anchors at once; row ``i`` equals ``_offset(anchors[i], groups[i])``."""
    m = len(anchors)
    sizes = np.fromiter((len(g[0]) for g in groups), dtype=np.int64, count=m)
    if sizes.sum() == 0:
        return _squash(params, side, np.zeros((m, params.dims.dim)))
    seg = np.repeat(np.arange(m), sizes)
    others = np.concatenate([g[0] for g in groups]).astype(np.int64)
    diffs = np.concatenate([g[1] for g in groups]).astype(np.int64)
    encoded = _encode(params, side, others, diffs)
    anchor_rows = dc.embedding_lookup(params[_anchor_table(side)], np.asarray(anchors, dtype=np.int64)[seg])
    weights = dc.segment_softmax(_score(params, side, encoded, anchor_rows), seg, m)
    aggregate = dc.segment_sum(dc.mul(encoded, dc.reshape(weights, (-1, 1))), seg, m)
    return _squash(params, side, aggregate)


def forward_batch(params: ModelParams, stats: Statistics, users: Sequence[int], items: Sequence[int],
                  samples: Sequence[NeighborSample]) -> Tensor:
    """Predicted ratings ``[B]`` for a batch of (user, item) pairs."""
    B = len(users)
    anchors: list[int] = []
    groups: list[Group] = []
    node_example: list[int] = []
    own_node = np.empty(B, dtype=np.int64)
    nb_node: list[int] = []
    nb_example: list[int] = []
    nb_lambda: list[float] = []
    for b, (u, s) in enumerate(zip(users, samples)):
        own_node[b] = len(anchors)
        anchors.append(u)
        groups.append(s.items_of_user)
        node_example.append(b)
        for (k, lam), g in zip(s.social_neighbors, s.neighbor_items):
            nb_node.append(len(anchors))
            nb_example.append(b)
            nb_lambda.append(lam)
            anchors.append(k)
            groups.append(g)
            node_example.append(b)

    h_users = _offsets_batch(params, "user", np.asarray(anchors), groups)
    h_items = _offsets_batch(params, "item", np.asarray(items), [s.users_of_item for s in samples])
    rp = _head(params, h_users, dc.take(h_items, np.asarray(node_example)))
    own = dc.take(rp, own_node)

    bench = np.array([stats.benchmark(u, v) for u, v in zip(users, items)])
    if not nb_node:
        return dc.add(own, bench)
    has_social = np.zeros(B, dtype=bool)
    has_social[nb_example] = True
    weighted = dc.mul(dc.take(rp, np.asarray(nb_node)), np.asarray(nb_lambda))
    social = dc.segment_sum(weighted, np.asarray(nb_example), B)
    # f = (own + social) / 2 with neighbors, own alone without
    f = dc.add(dc.mul(own, np.where(has_social, 0.5, 1.0)), dc.mul(social, 0.5))
    return dc.add(f, bench)
