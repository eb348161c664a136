"""Straight-from-the-equations reference evaluator in plain Python.

Nothing here imports the package under test.  Parameters arrive as a
``{name: numpy array}`` mapping and are turned into nested lists; every
quantity (means, difference indices, relationship strengths, weights,
encodings, attention, offsets, head) is recomputed from the raw rating
triples with ``math`` and list arithmetic.
"""
from __future__ import annotations

import math


def _lst(a):
    return a.tolist() if hasattr(a, "tolist") else a


def matvec(W, x):
    return [sum(w * xi for w, xi in zip(row, x)) for row in W]


def vadd(a, b):
    return [x + y for x, y in zip(a, b)]


def relu(v):
    return [x if x > 0.0 else 0.0 for x in v]


def tanh(v):
    return [math.tanh(x) for x in v]


def dot(a, b):
    return sum(x * y for x, y in zip(a, b))


class Oracle:
    """Predicted ratings for a fixed training set, trust list and parameter set."""

    def __init__(self, ratings, trust, params, r_min=1.0, r_max=5.0, delta=1.0):
        self.P = {k: _lst(v) for k, v in params.items()}
        self.S = int(math.ceil(r_max - r_min)) + 1
        self.delta = delta
        self.ratings = [(int(u), int(v), float(r)) for u, v, r in ratings]
        self.trust = [(int(a), int(b)) for a, b in trust]
        users, items = {}, {}
        for u, v, r in self.ratings:
            users.setdefault(u, []).append(r)
            items.setdefault(v, []).append(r)
        self.E_u = {u: sum(rs) / len(rs) for u, rs in users.items()}
        self.E_v = {v: sum(rs) / len(rs) for v, rs in items.items()}
        self.g = sum(r for _, _, r in self.ratings) / len(self.ratings)

    # means with the global fallback for entities that have no training rating
    def Eu(self, u):
        return self.E_u.get(u, self.g)

    def Ev(self, v):
        return self.E_v.get(v, self.g)

    def diff(self, r, mean):
        return min(max(int(math.ceil(abs(r - mean))), 0), self.S - 1)

    def R_u(self, u):
        """[(item, ceil|r - E(v)|)] for every training rating of ``u``."""
        return [(v, self.diff(r, self.Ev(v))) for uu, v, r in self.ratings if uu == u]

    def R_v(self, v):
        """[(user, ceil|r - E(u)|)] for every training rating of ``v``."""
        return [(u, self.diff(r, self.Eu(u))) for u, vv, r in self.ratings if vv == v]

    def T(self, i, j):
        ri = {v: r for u, v, r in self.ratings if u == i}
        rj = {v: r for u, v, r in self.ratings if u == j}
        return 1 + sum(1 for k in ri if k in rj and abs(ri[k] - rj[k]) <= self.delta)

    def neighbors(self, i):
        """[(k, lambda_ik)] in trust-file order."""
        ks = [b for a, b in self.trust if a == i]
        Ts = [self.T(i, k) for k in ks]
        return [(k, t / sum(Ts)) for k, t in zip(ks, Ts)]

    # -- network pieces -------------------------------------------------
    def encode(self, side, other, d):
        P = self.P
        if side == "user":
            x = P["item_emb"][other] + P["user_diff_emb"][d]
        else:
            x = P["user_emb"][other] + P["item_diff_emb"][d]
        hidden = relu(vadd(matvec(P[f"{side}_mlp.W1"], x), P[f"{side}_mlp.b1"]))
        return vadd(matvec(P[f"{side}_mlp.W2"], hidden), P[f"{side}_mlp.b2"])

    def attention(self, side, encoded, anchor):
        P = self.P
        scores = [dot(P[f"{side}_attn.w2"], relu(vadd(matvec(P[f"{side}_attn.W1"], x + anchor),
                                                      P[f"{side}_attn.b1"]))) + P[f"{side}_attn.b2"]
                  for x in encoded]
        top = max(scores)
        ex = [math.exp(s - top) for s in scores]
        return [e / sum(ex) for e in ex]

    def offset(self, side, anchor_id, group):
        P = self.P
        D = len(P[f"{side}_agg.b"])
        if not group:
            agg = [0.0] * D
        else:
            encoded = [self.encode(side, o, d) for o, d in group]
            anchor = P["user_emb" if side == "user" else "item_emb"][anchor_id]
            eta = self.attention(side, encoded, anchor)
            agg = [sum(e * x[c] for e, x in zip(eta, encoded)) for c in range(D)]
        return tanh(vadd(matvec(P[f"{side}_agg.W"], agg), P[f"{side}_agg.b"]))

    def h_u(self, u):
        return self.offset("user", u, self.R_u(u))

    def h_v(self, v):
        return self.offset("item", v, self.R_v(v))

    def rp(self, hu, hv):
        P = self.P
        z1 = tanh(vadd(matvec(P["head.W1"], hu + hv), P["head.b1"]))
        z2 = tanh(vadd(matvec(P["head.W2"], z1), P["head.b2"]))
        return dot(P["head.w"], z2)

    def f(self, u, v):
        hv = self.h_v(v)
        own = self.rp(self.h_u(u), hv)
        nbrs = self.neighbors(u)
        if not nbrs:
            return own
        return 0.5 * (own + sum(lam * self.rp(self.h_u(k), hv) for k, lam in nbrs))

    def predict(self, u, v):
        return 0.5 * (self.Eu(u) + self.Ev(v)) + self.f(u, v)

    def score(self, u, v):
        return 1.0 / (1.0 + math.exp(-self.predict(u, v)))

    # -- objectives -------------------------------------------------------
    def mse(self, pairs):
        return sum((self.predict(u, v) - r) ** 2 for u, v, r in pairs) / (2.0 * len(pairs))

    def bce(self, pairs, threshold):
        total = 0.0
        for u, v, r in pairs:
            y = 1.0 if r >= threshold else 0.0
            p = min(max(self.score(u, v), 1e-12), 1.0 - 1e-12)
            total -= y * math.log(p) + (1.0 - y) * math.log(1.0 - p)
        return total
