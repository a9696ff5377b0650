"""Single-domain recommendation backbones: dot-product matrix
factorisation and mean-of-layers graph propagation over a bipartite
interaction graph, trained with hand-derived gradients.
"""

from __future__ import annotations

import numpy as np

from .corpus import InteractionSet
from .embeddings import (EmbeddingTable, ROLE_ITEM_TARGET,
                         ROLE_USER_TARGET_PHASE1, init_embeddings)
from .graph import BipartiteGraph, build_graph, propagate
from .losses import bce_loss, bpr_loss
from .optim import Adam, GradBuffer

BACKBONE_MF = "mf"
BACKBONE_LIGHTGCN = "lightgcn"
LOSS_BCE = "bce"
LOSS_BPR = "bpr"

LOSS_FNS = {LOSS_BCE: bce_loss, LOSS_BPR: bpr_loss}


def mf_score(u_vec: np.ndarray, i_vec: np.ndarray) -> float:
    """Dot-product relevance score."""
    u = np.asarray(u_vec)
    i = np.asarray(i_vec)
    if u.shape != i.shape:
        raise ValueError("user and item vectors must have equal dimension")
    return float(np.dot(u, i))


def row_dots(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.einsum("ij,ij->i", a, b)


def sample_negatives(rng: np.random.Generator, n_items: int,
                     train_row: np.ndarray, count: int = 1) -> np.ndarray:
    """Uniform rejection sampling over items outside the user's train row."""
    if count < 1:
        raise ValueError("count must be >= 1")
    if train_row.size >= n_items:
        raise ValueError("user interacted with every item; cannot sample negatives")
    out = np.empty(count, dtype=np.int64)
    filled = 0
    while filled < count:
        cand = rng.integers(0, n_items, size=count - filled)
        if train_row.size:
            pos = np.searchsorted(train_row, cand)
            pos = np.minimum(pos, train_row.size - 1)
            good = cand[train_row[pos] != cand]
        else:
            good = cand
        out[filled:filled + good.size] = good
        filled += good.size
    return out


def sample_negatives_batch(rng: np.random.Generator, n_items: int,
                           train_rows, users: np.ndarray) -> np.ndarray:
    """One negative per batch entry, drawn in batch order."""
    return np.array([sample_negatives(rng, n_items, train_rows[u], 1)[0]
                     for u in users], dtype=np.int64)


class SingleDomainModel:
    """A backbone over one user/item index space."""

    def __init__(self, users: EmbeddingTable, items: EmbeddingTable,
                 backbone: str, graph: BipartiteGraph | None = None):
        if backbone not in (BACKBONE_MF, BACKBONE_LIGHTGCN):
            raise ValueError(f"unknown backbone {backbone!r}")
        if backbone == BACKBONE_LIGHTGCN and graph is None:
            raise ValueError("lightgcn backbone requires a graph")
        if users.dim != items.dim:
            raise ValueError("user and item tables must share one dimension")
        self.users = users
        self.items = items
        self.backbone = backbone
        self.graph = graph

    @classmethod
    def create(cls, n_users: int, n_items: int, dim: int, seed, *,
               backbone: str = BACKBONE_MF,
               train: InteractionSet | None = None, k_layers: int = 2,
               dtype=np.float32, user_role: str = ROLE_USER_TARGET_PHASE1,
               item_role: str = ROLE_ITEM_TARGET) -> "SingleDomainModel":
        if not isinstance(seed, np.random.SeedSequence):
            seed = np.random.SeedSequence(seed)
        user_seed, item_seed = seed.spawn(2)
        users = init_embeddings(n_users, dim, user_seed, role=user_role,
                                dtype=dtype)
        items = init_embeddings(n_items, dim, item_seed, role=item_role,
                                dtype=dtype)
        graph = None
        if backbone == BACKBONE_LIGHTGCN:
            if train is None:
                raise ValueError("lightgcn backbone needs train interactions")
            graph = build_graph(train, k_layers)
        return cls(users, items, backbone, graph)

    @property
    def n_users(self) -> int:
        return self.users.rows

    @property
    def n_items(self) -> int:
        return self.items.rows

    def params(self) -> dict[str, np.ndarray]:
        return {"user": self.users.values, "item": self.items.values}

    def propagated(self) -> tuple[np.ndarray, np.ndarray]:
        if self.backbone == BACKBONE_MF:
            return self.users.values, self.items.values
        return propagate(self.graph, self.users.values, self.items.values)

    def make_scorer(self):
        """Read-only per-user scorer over all items."""
        user_final, item_final = self.propagated()
        item_t = item_final.T.copy()
        return lambda user: user_final[user] @ item_t

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: value.copy() for name, value in self.params().items()}

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        for name, value in self.params().items():
            value[...] = state[name]

    def assert_finite(self, context: str = "") -> None:
        self.users.assert_finite(context)
        self.items.assert_finite(context)


def single_domain_forward_backward(model: SingleDomainModel,
                                   users: np.ndarray, pos_items: np.ndarray,
                                   neg_items: np.ndarray,
                                   loss_kind: str) -> tuple[float, GradBuffer]:
    """Forward scores, loss, and hand-derived gradients for one batch."""
    if users.size == 0:
        raise ValueError("batch must be non-empty")
    loss_fn = LOSS_FNS[loss_kind]
    buf = GradBuffer(model.params())

    if model.backbone == BACKBONE_MF:
        user_vals = model.users.values
        item_vals = model.items.values
        u_vecs = user_vals[users]
        pos_scores = row_dots(u_vecs, item_vals[pos_items])
        neg_scores = row_dots(u_vecs, item_vals[neg_items])
        loss, d_pos, d_neg = loss_fn(pos_scores, neg_scores)
        d_user = d_pos[:, None] * item_vals[pos_items] \
            + d_neg[:, None] * item_vals[neg_items]
        buf.add_rows("user", users, d_user)
        buf.add_rows("item", pos_items, d_pos[:, None] * u_vecs)
        buf.add_rows("item", neg_items, d_neg[:, None] * u_vecs)
        return loss, buf

    user_final, item_final = model.propagated()
    u_vecs = user_final[users]
    pos_scores = row_dots(u_vecs, item_final[pos_items])
    neg_scores = row_dots(u_vecs, item_final[neg_items])
    loss, d_pos, d_neg = loss_fn(pos_scores, neg_scores)
    d_user_final = np.zeros_like(user_final, dtype=np.float64)
    d_item_final = np.zeros_like(item_final, dtype=np.float64)
    np.add.at(d_user_final, users,
              d_pos[:, None] * item_final[pos_items]
              + d_neg[:, None] * item_final[neg_items])
    np.add.at(d_item_final, pos_items, d_pos[:, None] * u_vecs)
    np.add.at(d_item_final, neg_items, d_neg[:, None] * u_vecs)
    # The adjacency is symmetric, so the backward pass through the
    # propagation is the propagation itself.
    d_user0, d_item0 = propagate(model.graph, d_user_final, d_item_final)
    buf.add_rows("user", np.arange(model.n_users), d_user0)
    buf.add_rows("item", np.arange(model.n_items), d_item0)
    return loss, buf


def train_step_single_domain(model: SingleDomainModel, optimizer: Adam,
                             users: np.ndarray, pos_items: np.ndarray,
                             train_rows, loss_kind: str,
                             rng: np.random.Generator) -> float:
    """Sample negatives, compute gradients, apply one optimizer step."""
    neg_items = sample_negatives_batch(rng, model.n_items, train_rows, users)
    loss, buf = single_domain_forward_backward(model, users, pos_items,
                                               neg_items, loss_kind)
    optimizer.step(buf.grads())
    return loss
