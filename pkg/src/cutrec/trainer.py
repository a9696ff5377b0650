"""Two-phase training orchestration.

Phase one trains a single-domain backbone on the target domain and
freezes its user embeddings as the similarity source. Phase two trains a
fresh backbone on both domains jointly: source interactions score against
raw base embeddings, target interactions against transformed user
embeddings, and a contrastive term ties the transformed representations
to the frozen phase-one similarity structure.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .backbone import (BACKBONE_LIGHTGCN, BACKBONE_MF, SingleDomainModel,
                       row_dots, sample_negatives_batch,
                       single_domain_forward_backward)
from .checkpoint import Checkpoint
from .config import TrainingConfig
from .contrastive import contrastive_loss, total_loss
from .corpus import CrossDomainDataset, InteractionSet, SplitDataset
from .embeddings import (EmbeddingTable, ROLE_ITEM_SOURCE, ROLE_ITEM_TARGET,
                         ROLE_USER_OVERLAP, ROLE_USER_SOURCE_ONLY,
                         ROLE_USER_TARGET_ONLY, ROLE_USER_TARGET_PHASE1,
                         empty_table, init_embeddings)
from .errors import ConfigError, TrainingDivergedError
from .evaluation import evaluate_full
from .graph import build_graph, propagate
from .losses import bce_loss, bpr_loss
from .optim import Adam, GradBuffer
from .similarity import PairSets, SimilarityOracle, extract_pairs
from .transform import TransformLayer

logger = logging.getLogger(__name__)

LOSS_FNS = {"bce": bce_loss, "bpr": bpr_loss}

# Seed-stream labels: phase-1 and phase-2 streams must not collide.
_STREAM_TARGET_INIT = 0
_STREAM_TARGET_TRAIN = 1
_STREAM_TRANSFER_INIT = 2
_STREAM_TRANSFER_TRAIN = 3


@dataclass(frozen=True)
class LossBreakdown:
    """Per-step loss components and their weighted combination."""

    target: float
    source: float
    contrastive: float
    total: float


class EarlyStopper:
    """Stops after ``patience`` consecutive epochs without improvement."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best = -np.inf
        self.best_epoch: int | None = None
        self._since_best = 0

    def update(self, value: float, epoch: int) -> bool:
        if value > self.best:
            self.best = value
            self.best_epoch = epoch
            self._since_best = 0
            return True
        self._since_best += 1
        return False

    @property
    def should_stop(self) -> bool:
        return self._since_best >= self.patience


def positive_pairs(inter: InteractionSet) -> tuple[np.ndarray, np.ndarray]:
    users = np.repeat(np.arange(inter.n_users),
                      [row.size for row in inter.rows])
    items = (np.concatenate(inter.rows) if users.size
             else np.array([], dtype=np.int64))
    return users, items


def _batches(order: np.ndarray, batch_size: int):
    for start in range(0, order.size, batch_size):
        yield order[start:start + batch_size]


def _recycling_batches(n: int, batch_size: int, rng: np.random.Generator):
    """Infinite batch stream; each pass over the data is reshuffled."""
    while True:
        order = rng.permutation(n)
        for batch in _batches(order, batch_size):
            yield batch


@dataclass
class TargetPhaseResult:
    model: SingleDomainModel
    frozen: EmbeddingTable
    oracle: SimilarityOracle
    best_epoch: int
    valid_history: list[float]


def run_target_phase(ds: CrossDomainDataset, target_split: SplitDataset,
                     config: TrainingConfig) -> TargetPhaseResult:
    """Train the phase-one backbone on the target domain, early-stopping
    on validation NDCG@10; freeze the best-epoch user embeddings and
    build the similarity oracle from them (or from training history under
    the corresponding ablation)."""
    train = target_split.train
    model = SingleDomainModel.create(
        ds.target.n_users, ds.target.n_items, config.embedding_dim,
        np.random.SeedSequence([config.seed, _STREAM_TARGET_INIT]),
        backbone=config.backbone, train=train, k_layers=config.k_layers)
    optimizer = Adam(model.params(), lr=config.lr,
                     weight_decay=config.weight_decay)
    shuffle_rng, negative_rng = (
        np.random.default_rng(s) for s in
        np.random.SeedSequence([config.seed, _STREAM_TARGET_TRAIN]).spawn(2))

    users, items = positive_pairs(train)
    stopper = EarlyStopper(config.patience)
    best_state = model.state_dict()
    history: list[float] = []
    for epoch in range(1, config.max_epochs + 1):
        order = shuffle_rng.permutation(users.size)
        epoch_loss = 0.0
        for batch in _batches(order, config.batch_size):
            batch_users = users[batch]
            batch_items = items[batch]
            neg_items = sample_negatives_batch(negative_rng, model.n_items,
                                               train.rows, batch_users)
            try:
                loss, buf = single_domain_forward_backward(
                    model, batch_users, batch_items, neg_items,
                    config.loss_kind)
                optimizer.step(buf.grads())
            except TrainingDivergedError as err:
                raise TrainingDivergedError(
                    f"target phase epoch {epoch}: {err}") from err
            epoch_loss += loss
        metric = evaluate_full(model.make_scorer(), target_split,
                               k=10, part="valid").means["ndcg"]
        history.append(metric)
        if stopper.update(metric, epoch):
            best_state = model.state_dict()
        logger.debug("target phase epoch %d: loss=%.4f valid ndcg@10=%.4f",
                     epoch, epoch_loss, metric)
        if stopper.should_stop:
            break
    model.load_state(best_state)
    model.assert_finite("target phase end")

    frozen = EmbeddingTable(ROLE_USER_TARGET_PHASE1,
                            model.users.values.copy())
    frozen.values.setflags(write=False)
    if config.history_similarity:
        oracle = SimilarityOracle.from_history(train, config.gamma)
    else:
        oracle = SimilarityOracle.from_embeddings(frozen, config.gamma)
    return TargetPhaseResult(model, frozen, oracle,
                             stopper.best_epoch or 0, history)


class CutModel:
    """Phase-two model: partitioned user tables, per-domain item tables,
    optional per-domain graphs, and the user transformation layer.

    Target-domain scoring always applies the transform to the user's base
    embedding; source-domain scoring uses the raw base embedding. Item
    embeddings are never transformed.
    """

    def __init__(self, config: TrainingConfig, tables: dict[str, EmbeddingTable],
                 transform: TransformLayer | None,
                 graph_target=None, graph_source=None):
        self.config = config
        self.tables = tables
        self.transform = transform
        self.graph_target = graph_target
        self.graph_source = graph_source
        dims = {t.dim for t in tables.values()}
        if len(dims) != 1:
            raise ValueError("all tables must share one embedding dimension")

    # -- construction --------------------------------------------------

    @classmethod
    def build(cls, ds: CrossDomainDataset, target_split: SplitDataset,
              source_split: SplitDataset, config: TrainingConfig, *,
              frozen: EmbeddingTable | None = None,
              dtype=np.float32) -> "CutModel":
        a, b, c = ds.n_target_only, ds.n_overlap, ds.n_source_only
        dim = config.embedding_dim
        seeds = np.random.SeedSequence(
            [config.seed, _STREAM_TRANSFER_INIT]).spawn(6)

        def table(rows: int, seed, role: str) -> EmbeddingTable:
            if rows == 0:
                return empty_table(dim, role=role, dtype=dtype)
            return init_embeddings(rows, dim, seed, role=role, dtype=dtype)

        tables = {
            ROLE_USER_TARGET_ONLY: table(a, seeds[0], ROLE_USER_TARGET_ONLY),
            ROLE_USER_OVERLAP: table(b, seeds[1], ROLE_USER_OVERLAP),
            ROLE_USER_SOURCE_ONLY: table(c, seeds[2], ROLE_USER_SOURCE_ONLY),
            ROLE_ITEM_TARGET: table(ds.target.n_items, seeds[3],
                                    ROLE_ITEM_TARGET),
            ROLE_ITEM_SOURCE: table(ds.source.n_items, seeds[4],
                                    ROLE_ITEM_SOURCE),
        }
        if config.warm_start:
            if frozen is None:
                raise ConfigError("warm_start requires frozen phase-one "
                                  "embeddings")
            warm = frozen.values.astype(dtype)
            tables[ROLE_USER_TARGET_ONLY].values[...] = warm[:a]
            tables[ROLE_USER_OVERLAP].values[...] = warm[a:]

        transform = None
        if not config.effective_no_transform:
            transform = TransformLayer.create(
                dim, seeds[5], init=config.transform_init, dtype=dtype)

        graph_target = graph_source = None
        if config.backbone == BACKBONE_LIGHTGCN:
            graph_target = build_graph(target_split.train, config.k_layers)
            graph_source = build_graph(source_split.train, config.k_layers)
        return cls(config, tables, transform, graph_target, graph_source)

    # -- parameter access ----------------------------------------------

    @property
    def dim(self) -> int:
        return self.tables[ROLE_ITEM_TARGET].dim

    @property
    def n_target_only(self) -> int:
        return self.tables[ROLE_USER_TARGET_ONLY].rows

    @property
    def n_overlap(self) -> int:
        return self.tables[ROLE_USER_OVERLAP].rows

    @property
    def n_target_users(self) -> int:
        return self.n_target_only + self.n_overlap

    @property
    def n_source_users(self) -> int:
        return self.n_overlap + self.tables[ROLE_USER_SOURCE_ONLY].rows

    def params(self) -> dict[str, np.ndarray]:
        out = {role: tbl.values for role, tbl in self.tables.items()}
        if self.transform is not None:
            out["transform-weight"] = self.transform.weight
            out["transform-bias"] = self.transform.bias
        return out

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: value.copy() for name, value in self.params().items()}

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        for name, value in self.params().items():
            value[...] = state[name]

    def assert_finite(self, context: str = "") -> None:
        for tbl in self.tables.values():
            tbl.assert_finite(context)

    # -- forward helpers -------------------------------------------------

    def gather_target(self, users: np.ndarray) -> np.ndarray:
        """Base (untransformed) embeddings for target-local user indices."""
        a = self.n_target_only
        out = np.empty((users.size, self.dim),
                       dtype=self.tables[ROLE_ITEM_TARGET].values.dtype)
        in_target_only = users < a
        out[in_target_only] = \
            self.tables[ROLE_USER_TARGET_ONLY].values[users[in_target_only]]
        out[~in_target_only] = \
            self.tables[ROLE_USER_OVERLAP].values[users[~in_target_only] - a]
        return out

    def scatter_target(self, buf: GradBuffer, users: np.ndarray,
                       grads: np.ndarray) -> None:
        a = self.n_target_only
        in_target_only = users < a
        if in_target_only.any():
            buf.add_rows(ROLE_USER_TARGET_ONLY, users[in_target_only],
                         grads[in_target_only])
        if (~in_target_only).any():
            buf.add_rows(ROLE_USER_OVERLAP, users[~in_target_only] - a,
                         grads[~in_target_only])

    def gather_source(self, users: np.ndarray) -> np.ndarray:
        """Raw base embeddings for source-local user indices."""
        b = self.n_overlap
        out = np.empty((users.size, self.dim),
                       dtype=self.tables[ROLE_ITEM_SOURCE].values.dtype)
        in_overlap = users < b
        out[in_overlap] = self.tables[ROLE_USER_OVERLAP].values[users[in_overlap]]
        out[~in_overlap] = \
            self.tables[ROLE_USER_SOURCE_ONLY].values[users[~in_overlap] - b]
        return out

    def scatter_source(self, buf: GradBuffer, users: np.ndarray,
                       grads: np.ndarray) -> None:
        b = self.n_overlap
        in_overlap = users < b
        if in_overlap.any():
            buf.add_rows(ROLE_USER_OVERLAP, users[in_overlap],
                         grads[in_overlap])
        if (~in_overlap).any():
            buf.add_rows(ROLE_USER_SOURCE_ONLY, users[~in_overlap] - b,
                         grads[~in_overlap])

    def target_base_all(self) -> np.ndarray:
        return np.vstack([self.tables[ROLE_USER_TARGET_ONLY].values,
                          self.tables[ROLE_USER_OVERLAP].values])

    def source_base_all(self) -> np.ndarray:
        return np.vstack([self.tables[ROLE_USER_OVERLAP].values,
                          self.tables[ROLE_USER_SOURCE_ONLY].values])

    def apply_transform(self, x: np.ndarray) -> np.ndarray:
        return x if self.transform is None else self.transform.apply(x)

    def backprop_transform(self, buf: GradBuffer, users: np.ndarray,
                           base: np.ndarray, d_out: np.ndarray) -> None:
        """Chain a gradient on transformed target-user vectors into the
        transform parameters and the base embedding rows."""
        if self.transform is None:
            self.scatter_target(buf, users, d_out)
            return
        buf.add_dense("transform-weight", d_out.T @ base)
        buf.add_dense("transform-bias", d_out.sum(axis=0))
        self.scatter_target(buf, users, d_out @ self.transform.weight)

    def _scatter_target_all(self, buf: GradBuffer, base_all: np.ndarray,
                            d_out: np.ndarray) -> None:
        a = self.n_target_only
        if self.transform is None:
            if a:
                buf.add_rows(ROLE_USER_TARGET_ONLY, np.arange(a), d_out[:a])
            if self.n_overlap:
                buf.add_rows(ROLE_USER_OVERLAP, np.arange(self.n_overlap),
                             d_out[a:])
            return
        buf.add_dense("transform-weight", d_out.T @ base_all)
        buf.add_dense("transform-bias", d_out.sum(axis=0))
        d_base = d_out @ self.transform.weight
        if a:
            buf.add_rows(ROLE_USER_TARGET_ONLY, np.arange(a), d_base[:a])
        if self.n_overlap:
            buf.add_rows(ROLE_USER_OVERLAP, np.arange(self.n_overlap),
                         d_base[a:])

    def make_target_scorer(self):
        """Read-only scorer over all target items, target scoring path."""
        transformed = self.apply_transform(self.target_base_all())
        items = self.tables[ROLE_ITEM_TARGET].values
        if self.config.backbone == BACKBONE_LIGHTGCN:
            user_final, item_final = propagate(self.graph_target,
                                               transformed, items)
        else:
            user_final, item_final = transformed, items
        item_t = item_final.T.copy()
        return lambda user: user_final[user] @ item_t

    # -- persistence -----------------------------------------------------

    def to_checkpoint(self, step: int = 0) -> Checkpoint:
        order = [ROLE_USER_TARGET_ONLY, ROLE_USER_OVERLAP,
                 ROLE_USER_SOURCE_ONLY, ROLE_ITEM_TARGET, ROLE_ITEM_SOURCE]
        hyper = {"model_kind": "cut", "training": self.config.to_dict()}
        return Checkpoint([self.tables[r] for r in order], hyper, step,
                          self.transform)

    @classmethod
    def from_checkpoint(cls, ckpt: Checkpoint, target_split: SplitDataset,
                        source_split: SplitDataset) -> "CutModel":
        config = TrainingConfig.from_dict(ckpt.hyper["training"])
        tables = {tbl.role: tbl for tbl in ckpt.tables}
        graph_target = graph_source = None
        if config.backbone == BACKBONE_LIGHTGCN:
            graph_target = build_graph(target_split.train, config.k_layers)
            graph_source = build_graph(source_split.train, config.k_layers)
        return cls(config, tables, ckpt.transform, graph_target, graph_source)


def transfer_forward_backward(model: CutModel, src_users: np.ndarray,
                              src_pos: np.ndarray, src_neg: np.ndarray,
                              tgt_users: np.ndarray, tgt_pos: np.ndarray,
                              tgt_neg: np.ndarray,
                              pairs: PairSets | None
                              ) -> tuple[LossBreakdown, GradBuffer]:
    """One combined-objective forward/backward pass (no optimizer step).

    ``pairs`` must be None when the contrastive term is disabled.
    """
    config = model.config
    if src_users.size == 0 or tgt_users.size == 0:
        raise ValueError("both domain batches must be non-empty")
    loss_fn = LOSS_FNS[config.loss_kind]
    alpha = config.alpha
    lam = config.contrastive_weight
    buf = GradBuffer(model.params())

    src_items = model.tables[ROLE_ITEM_SOURCE].values
    tgt_items = model.tables[ROLE_ITEM_TARGET].values

    if config.backbone == BACKBONE_MF:
        # -- source domain, raw base embeddings --
        src_base = model.gather_source(src_users)
        l_source, d_pos, d_neg = loss_fn(row_dots(src_base, src_items[src_pos]),
                                         row_dots(src_base, src_items[src_neg]))
        d_src = alpha * (d_pos[:, None] * src_items[src_pos]
                         + d_neg[:, None] * src_items[src_neg])
        model.scatter_source(buf, src_users, d_src)
        buf.add_rows(ROLE_ITEM_SOURCE, src_pos,
                     alpha * d_pos[:, None] * src_base)
        buf.add_rows(ROLE_ITEM_SOURCE, src_neg,
                     alpha * d_neg[:, None] * src_base)

        # -- target domain, transformed user embeddings --
        tgt_base = model.gather_target(tgt_users)
        tgt_repr = model.apply_transform(tgt_base)
        l_target, d_pos, d_neg = loss_fn(row_dots(tgt_repr, tgt_items[tgt_pos]),
                                         row_dots(tgt_repr, tgt_items[tgt_neg]))
        weight = 1.0 - alpha
        d_repr = weight * (d_pos[:, None] * tgt_items[tgt_pos]
                           + d_neg[:, None] * tgt_items[tgt_neg])
        buf.add_rows(ROLE_ITEM_TARGET, tgt_pos,
                     weight * d_pos[:, None] * tgt_repr)
        buf.add_rows(ROLE_ITEM_TARGET, tgt_neg,
                     weight * d_neg[:, None] * tgt_repr)
        model.backprop_transform(buf, tgt_users, tgt_base, d_repr)

        # -- contrastive regulariser on transformed batch users --
        l_contrastive = 0.0
        if pairs is not None:
            pair_base = model.gather_target(pairs.users)
            pair_repr = model.apply_transform(pair_base)
            l_contrastive, d_repr_c = contrastive_loss(
                pair_repr, pairs, config.temperature,
                normalize=config.normalized_contrastive)
            if pairs.n_similar:
                model.backprop_transform(buf, pairs.users, pair_base,
                                         lam * d_repr_c)
    else:
        # -- source domain over the source graph --
        src_base_all = model.source_base_all()
        src_user_final, src_item_final = propagate(
            model.graph_source, src_base_all, src_items)
        l_source, d_pos, d_neg = loss_fn(
            row_dots(src_user_final[src_users], src_item_final[src_pos]),
            row_dots(src_user_final[src_users], src_item_final[src_neg]))
        d_uf = np.zeros_like(src_user_final, dtype=np.float64)
        d_if = np.zeros_like(src_item_final, dtype=np.float64)
        np.add.at(d_uf, src_users,
                  alpha * (d_pos[:, None] * src_item_final[src_pos]
                           + d_neg[:, None] * src_item_final[src_neg]))
        np.add.at(d_if, src_pos,
                  alpha * d_pos[:, None] * src_user_final[src_users])
        np.add.at(d_if, src_neg,
                  alpha * d_neg[:, None] * src_user_final[src_users])
        d_u0, d_i0 = propagate(model.graph_source, d_uf, d_if)
        b = model.n_overlap
        if b:
            buf.add_rows(ROLE_USER_OVERLAP, np.arange(b), d_u0[:b])
        if d_u0.shape[0] - b:
            buf.add_rows(ROLE_USER_SOURCE_ONLY,
                         np.arange(d_u0.shape[0] - b), d_u0[b:])
        buf.add_rows(ROLE_ITEM_SOURCE, np.arange(d_i0.shape[0]), d_i0)

        # -- target domain over the target graph, layer 0 transformed --
        tgt_base_all = model.target_base_all()
        tgt_repr_all = model.apply_transform(tgt_base_all)
        tgt_user_final, tgt_item_final = propagate(
            model.graph_target, tgt_repr_all, tgt_items)
        l_target, d_pos, d_neg = loss_fn(
            row_dots(tgt_user_final[tgt_users], tgt_item_final[tgt_pos]),
            row_dots(tgt_user_final[tgt_users], tgt_item_final[tgt_neg]))
        weight = 1.0 - alpha
        d_uf = np.zeros_like(tgt_user_final, dtype=np.float64)
        d_if = np.zeros_like(tgt_item_final, dtype=np.float64)
        np.add.at(d_uf, tgt_users,
                  weight * (d_pos[:, None] * tgt_item_final[tgt_pos]
                            + d_neg[:, None] * tgt_item_final[tgt_neg]))
        np.add.at(d_if, tgt_pos,
                  weight * d_pos[:, None] * tgt_user_final[tgt_users])
        np.add.at(d_if, tgt_neg,
                  weight * d_neg[:, None] * tgt_user_final[tgt_users])
        d_u0, d_i0 = propagate(model.graph_target, d_uf, d_if)
        buf.add_rows(ROLE_ITEM_TARGET, np.arange(d_i0.shape[0]), d_i0)
        model._scatter_target_all(buf, tgt_base_all, d_u0)

        l_contrastive = 0.0
        if pairs is not None:
            pair_repr = tgt_repr_all[pairs.users]
            l_contrastive, d_repr_c = contrastive_loss(
                pair_repr, pairs, config.temperature,
                normalize=config.normalized_contrastive)
            if pairs.n_similar:
                model.backprop_transform(buf, pairs.users,
                                         tgt_base_all[pairs.users],
                                         lam * d_repr_c)

    l_all = total_loss(l_target, l_source, l_contrastive, alpha, lam)
    return LossBreakdown(l_target, l_source, l_contrastive, l_all), buf


def transfer_step(model: CutModel, optimizer: Adam,
                  oracle: SimilarityOracle | None,
                  src_users: np.ndarray, src_pos: np.ndarray,
                  tgt_users: np.ndarray, tgt_pos: np.ndarray,
                  src_train_rows, tgt_train_rows,
                  rng_src: np.random.Generator,
                  rng_tgt: np.random.Generator) -> LossBreakdown:
    """Negative sampling, pair extraction, combined gradients, one Adam
    step over all touched parameters."""
    config = model.config
    src_neg = sample_negatives_batch(
        rng_src, model.tables[ROLE_ITEM_SOURCE].rows, src_train_rows, src_users)
    tgt_neg = sample_negatives_batch(
        rng_tgt, model.tables[ROLE_ITEM_TARGET].rows, tgt_train_rows, tgt_users)
    pairs = None
    if not config.effective_no_contrastive:
        if oracle is None:
            raise ConfigError("contrastive training requires a similarity oracle")
        pairs = extract_pairs(tgt_users, oracle)
    breakdown, buf = transfer_forward_backward(
        model, src_users, src_pos, src_neg, tgt_users, tgt_pos, tgt_neg, pairs)
    optimizer.step(buf.grads())
    return breakdown


@dataclass
class TransferPhaseResult:
    model: CutModel
    best_epoch: int
    valid_history: list[float]
    step_count: int


def run_transfer_phase(ds: CrossDomainDataset, target_split: SplitDataset,
                       source_split: SplitDataset, config: TrainingConfig,
                       oracle: SimilarityOracle | None = None, *,
                       frozen: EmbeddingTable | None = None
                       ) -> TransferPhaseResult:
    """Train the phase-two model on paired source/target batch streams.

    Epochs follow the target stream; the source stream reshuffles and
    recycles. Early-stops on target validation NDCG@10 and returns the
    best-validation model.
    """
    if not config.effective_no_contrastive and oracle is None:
        raise ConfigError("transfer phase needs a similarity oracle unless "
                          "the contrastive term is disabled")
    model = CutModel.build(ds, target_split, source_split, config,
                           frozen=frozen)
    optimizer = Adam(model.params(), lr=config.lr,
                     weight_decay=config.weight_decay)
    streams = np.random.SeedSequence(
        [config.seed, _STREAM_TRANSFER_TRAIN]).spawn(4)
    shuffle_rng, source_rng, neg_src_rng, neg_tgt_rng = (
        np.random.default_rng(s) for s in streams)

    tgt_users_all, tgt_items_all = positive_pairs(target_split.train)
    src_users_all, src_items_all = positive_pairs(source_split.train)
    if src_users_all.size == 0:
        raise ValueError("source training split is empty")
    source_stream = _recycling_batches(src_users_all.size, config.batch_size,
                                       source_rng)

    stopper = EarlyStopper(config.patience)
    best_state = model.state_dict()
    history: list[float] = []
    for epoch in range(1, config.max_epochs + 1):
        order = shuffle_rng.permutation(tgt_users_all.size)
        for batch in _batches(order, config.batch_size):
            src_batch = next(source_stream)
            try:
                transfer_step(
                    model, optimizer, oracle,
                    src_users_all[src_batch], src_items_all[src_batch],
                    tgt_users_all[batch], tgt_items_all[batch],
                    source_split.train.rows, target_split.train.rows,
                    neg_src_rng, neg_tgt_rng)
            except TrainingDivergedError as err:
                raise TrainingDivergedError(
                    f"transfer phase epoch {epoch}: {err}") from err
        metric = evaluate_full(model.make_target_scorer(), target_split,
                               k=10, part="valid").means["ndcg"]
        history.append(metric)
        if stopper.update(metric, epoch):
            best_state = model.state_dict()
        logger.debug("transfer phase epoch %d: valid ndcg@10=%.4f",
                     epoch, metric)
        if stopper.should_stop:
            break
    model.load_state(best_state)
    model.assert_finite("transfer phase end")
    return TransferPhaseResult(model, stopper.best_epoch or 0, history,
                               optimizer.step_count)
