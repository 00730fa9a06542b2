"""Training loops for the three tasks.

Every loop records an epoch-0 row computed before any update, then one row
per training epoch.  All randomness comes from a single seeded generator, so
a fixed seed reproduces the metric tables bit for bit.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..export import COMPONENT_CATEGORIES, NODE_KINDS, GraphTensors
from . import autograd as ag
from .models import CGVAE, Aggregator, GraphAutoEncoder, SageClassifier, bce, collate, cross_entropy
from .optim import Adam, TrainingDivergence


@dataclass
class MetricRow:
    epoch: int
    split: str
    loss: float
    score: float  # accuracy for classification, ROC-AUC for link prediction, nan otherwise


def metrics_csv(rows) -> str:
    lines = ["epoch,split,loss,accuracy_or_auc"]
    lines += [f"{r.epoch},{r.split},{r.loss!r},{r.score!r}" for r in rows]
    return "\n".join(lines) + "\n"


class FeatureScaler:
    """Column standardization fitted on training rows; constant columns pass through centred."""

    def __init__(self, X):
        X = np.asarray(X, dtype=float)
        self.mean = X.mean(axis=0)
        std = X.std(axis=0)
        self.std = np.where(std > 1e-12, std, 1.0)

    def __call__(self, X):
        return (X - self.mean) / self.std

    def inverse(self, X):
        return X * self.std + self.mean


def _check_finite(loss, epoch):
    if not np.isfinite(loss):
        raise TrainingDivergence(f"non-finite loss at epoch {epoch}")


def _batches(rng, n, size):
    order = rng.permutation(n)
    return [order[i:i + size] for i in range(0, n, size)]


# -- classification -------------------------------------------------------------------------

@dataclass
class ClassifierConfig:
    epochs: int = 20
    lr: float = 1e-2
    hidden: int = 64
    batch_size: int = 10
    train_fraction: float = 0.7
    aggregator: str = "mean"
    seed: int = 0


@dataclass
class ClassifierResult:
    model: SageClassifier
    metrics: list
    scaler: FeatureScaler
    train_index: np.ndarray
    test_index: np.ndarray

    def final(self, split):
        return [r for r in self.metrics if r.split == split][-1]


def split_indices(n, fraction, rng):
    order = rng.permutation(n)
    n_train = int(round(fraction * n))
    return np.sort(order[:n_train]), np.sort(order[n_train:])


def train_classifier(graphs: list[GraphTensors], config: ClassifierConfig | None = None) -> ClassifierResult:
    config = config or ClassifierConfig()
    labels = np.array([g.graph_label for g in graphs])
    classes = np.unique(labels)
    if len(classes) < 2:
        raise ValueError("classification needs at least two classes")
    rng = np.random.default_rng(config.seed)
    train_idx, test_idx = split_indices(len(graphs), config.train_fraction, rng)
    scaler = FeatureScaler(np.concatenate([graphs[i].X for i in train_idx]))
    model = SageClassifier(graphs[0].F, int(labels.max()) + 1, config.hidden, config.aggregator, config.seed)
    opt = Adam(model.params, config.lr)
    # evaluation batches are fixed chunks; one huge block-diagonal batch would be quadratic
    evals = {split: [collate([graphs[i] for i in idx[k:k + config.batch_size]], scaler)
                     for k in range(0, len(idx), config.batch_size)]
             for split, idx in (("train", train_idx), ("test", test_idx))}
    metrics = []

    def evaluate(epoch):
        for split, batches in evals.items():
            if not batches:
                continue
            logits = np.concatenate([model.forward(b).data for b in batches])
            labels = np.concatenate([b.labels for b in batches])
            loss = cross_entropy(ag.Tensor(logits), labels).item()
            _check_finite(loss, epoch)
            acc = float(np.mean(np.argmax(logits, axis=1) == labels))
            metrics.append(MetricRow(epoch, split, loss, acc))

    evaluate(0)
    for epoch in range(1, config.epochs + 1):
        for chunk in _batches(rng, len(train_idx), config.batch_size):
            batch = collate([graphs[train_idx[i]] for i in chunk], scaler)
            opt.zero_grad()
            loss = model.loss(batch)
            _check_finite(loss.item(), epoch)
            loss.backward()
            opt.step()
        evaluate(epoch)
    return ClassifierResult(model, metrics, scaler, train_idx, test_idx)


# -- conditional generation -----------------------------------------------------------------

@dataclass
class CGVAEConfig:
    epochs: int = 100
    lr: float = 1e-3
    hidden: int = 64
    z_dim: int = 32
    emb_dim: int = 16
    beta: float = 1.0
    batch_size: int = 10
    seed: int = 0


@dataclass
class CGVAEResult:
    model: CGVAE
    epoch_loss: list
    metrics: list
    scaler: FeatureScaler


def train_cgvae(graphs: list[GraphTensors], n_categories: int, config: CGVAEConfig | None = None) -> CGVAEResult:
    config = config or CGVAEConfig()
    widths = {g.F for g in graphs}
    if len(widths) != 1:
        raise ValueError(f"all graphs must share the feature width, got {sorted(widths)}")
    if any(g.categories.size and g.categories.max() >= n_categories for g in graphs):
        raise ValueError("graph categories outside the vocabulary")
    rng = np.random.default_rng(config.seed)
    scaler = FeatureScaler(np.concatenate([g.X for g in graphs]))
    model = CGVAE(widths.pop(), n_categories, config.hidden, config.z_dim, config.emb_dim, config.beta, config.seed)
    opt = Adam(model.params, config.lr)
    chunks = _batches(rng, len(graphs), config.batch_size)
    epoch_loss, metrics = [], []

    def record(epoch, parts):
        parts = np.array(parts)
        mean = parts.mean(axis=0)
        _check_finite(mean[0], epoch)
        epoch_loss.append(float(mean[0]))
        for name, value in zip(("total", "mse", "bce", "kl"), mean):
            metrics.append(MetricRow(epoch, name, float(value), float("nan")))

    parts = []
    for chunk in chunks:
        batch = collate([graphs[i] for i in chunk], scaler)
        parts.append([t.item() for t in model.losses(batch, rng)])
    record(0, parts)
    for epoch in range(1, config.epochs + 1):
        parts = []
        for chunk in _batches(rng, len(graphs), config.batch_size):
            batch = collate([graphs[i] for i in chunk], scaler)
            opt.zero_grad()
            total, *rest = model.losses(batch, rng)
            _check_finite(total.item(), epoch)
            total.backward()
            opt.step()
            parts.append([total.item()] + [t.item() for t in rest])
        record(epoch, parts)
    return CGVAEResult(model, epoch_loss, metrics, scaler)


def generate_scene(model: CGVAE, categories, seed=0, scaler: FeatureScaler | None = None) -> GraphTensors:
    """Sample a graph whose nodes carry the requested category ids."""
    categories = np.asarray(categories, dtype=int)
    n = categories.size
    if n == 0:
        return GraphTensors(np.zeros((0, model.feat_dim)), np.zeros((0, 0)), [], categories)
    rng = np.random.default_rng(seed)
    Z = ag.Tensor(rng.standard_normal((n, model.z_dim)))
    Xhat, P = model.decode(Z, categories)
    A = (P.data > 0.5).astype(float)
    A = np.maximum(A, A.T)
    np.fill_diagonal(A, 0.0)
    X = Xhat.data if scaler is None else scaler.inverse(Xhat.data)
    n_pseudo = len(COMPONENT_CATEGORIES)
    kinds = [NODE_KINDS[1 + c] if c < n_pseudo else "entity" for c in categories]
    return GraphTensors(X, A, kinds, categories)


def reconstruction_bce(model: CGVAE, graph: GraphTensors, scaler=None) -> float:
    """Adjacency BCE when decoding a graph from its own posterior means."""
    batch = collate([graph], scaler)
    mu, _ = model.encode(batch.X, batch.agg, batch.categories)
    _, P = model.decode(mu, batch.categories)
    return bce(P, batch.A, 1.0 - np.eye(graph.N)).item()


# -- link prediction ------------------------------------------------------------------------

@dataclass
class LinkPredConfig:
    epochs: int = 100
    lr: float = 1e-2
    hidden: int = 64
    z_dim: int = 32
    batch_size: int = 256
    holdout: float = 0.1
    seed: int = 0


@dataclass
class LinkPredResult:
    model: GraphAutoEncoder
    epoch_loss: list
    auc: list
    metrics: list
    test_pos: np.ndarray
    test_neg: np.ndarray
    test_scores: tuple = field(default=(None, None))


def roc_auc(pos_scores, neg_scores) -> float:
    """Probability a random positive outscores a random negative (ties count half)."""
    pos = np.asarray(pos_scores, dtype=float).reshape(-1)
    neg = np.asarray(neg_scores, dtype=float).reshape(-1)
    if pos.size == 0 or neg.size == 0:
        raise ValueError("AUC needs at least one positive and one negative score")
    scores = np.concatenate([pos, neg])
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(scores.size)
    sorted_scores = scores[order]
    i = 0
    while i < scores.size:
        j = i
        while j + 1 < scores.size and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    rank_sum = ranks[: pos.size].sum()
    return float((rank_sum - pos.size * (pos.size + 1) / 2) / (pos.size * neg.size))


def _pair_keys(pairs, n):
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    lo, hi = pairs.min(axis=1), pairs.max(axis=1)
    return lo * n + hi


def sample_non_edges(rng, n, count, forbidden_keys) -> np.ndarray:
    """``count`` distinct unordered pairs ``(i, j)``, ``i != j``, whose keys are not forbidden."""
    forbidden = set(int(k) for k in forbidden_keys)
    chosen, keys = [], set()
    while len(chosen) < count:
        draw = rng.integers(0, n, (2 * (count - len(chosen)) + 8, 2))
        for i, j in draw:
            if i == j:
                continue
            key = int(min(i, j)) * n + int(max(i, j))
            if key in forbidden or key in keys:
                continue
            keys.add(key)
            chosen.append((int(i), int(j)))
            if len(chosen) == count:
                break
    return np.array(chosen, dtype=int).reshape(-1, 2)


def train_linkpred(X, edges, config: LinkPredConfig | None = None) -> LinkPredResult:
    """Fit the graph autoencoder on all but a held-out share of ``edges``.

    ``X`` holds one feature row per node and ``edges`` the positive pairs.
    Each epoch walks the training positives in mini-batches, each paired
    with an equal number of freshly sampled non-edges.
    """
    config = config or LinkPredConfig()
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    pos = np.unique(np.sort(np.asarray(edges, dtype=int).reshape(-1, 2), axis=1), axis=0)
    if len(pos) == 0:
        raise ValueError("link prediction needs at least one positive edge")
    rng = np.random.default_rng(config.seed)
    perm = rng.permutation(len(pos))
    n_test = max(1, int(round(config.holdout * len(pos))))
    test_pos, train_pos = pos[perm[:n_test]], pos[perm[n_test:]]
    all_keys = _pair_keys(pos, n)
    test_neg = sample_non_edges(rng, n, n_test, all_keys)
    forbidden = np.concatenate([all_keys, _pair_keys(test_neg, n)])

    agg = Aggregator.from_edges(train_pos, n)
    scaler = FeatureScaler(X)
    Xs = scaler(X)
    model = GraphAutoEncoder(X.shape[1], config.hidden, config.z_dim, config.seed)
    opt = Adam(model.params, config.lr)
    epoch_loss, aucs, metrics = [], [], []

    def batch_loss(chunk):
        # supervised edges are hidden from message passing, as held-out edges are
        visible = np.ones(len(train_pos), dtype=bool)
        visible[chunk] = False
        neg = sample_non_edges(rng, n, len(chunk), forbidden)
        pairs = np.concatenate([train_pos[chunk], neg])
        target = np.concatenate([np.ones(len(chunk)), np.zeros(len(neg))])[:, None]
        E = model.embed_nodes(Xs, Aggregator.from_edges(train_pos[visible], n))
        return bce(model.edge_probs(E, pairs), target)

    def held_out():
        E = model.embed_nodes(Xs, agg)
        sp = model.edge_probs(E, test_pos).data.ravel()
        sn = model.edge_probs(E, test_neg).data.ravel()
        return roc_auc(sp, sn), (sp, sn)

    def record(epoch, loss):
        _check_finite(loss, epoch)
        auc, scores = held_out()
        epoch_loss.append(loss)
        aucs.append(auc)
        metrics.append(MetricRow(epoch, "train", loss, float("nan")))
        metrics.append(MetricRow(epoch, "test", float("nan"), auc))
        return scores

    chunks = _batches(rng, len(train_pos), config.batch_size)
    scores = record(0, float(np.mean([batch_loss(c).item() for c in chunks])))
    for epoch in range(1, config.epochs + 1):
        losses = []
        for chunk in _batches(rng, len(train_pos), config.batch_size):
            opt.zero_grad()
            loss = batch_loss(chunk)
            _check_finite(loss.item(), epoch)
            loss.backward()
            opt.step()
            losses.append(loss.item())
        scores = record(epoch, float(np.mean(losses)))
    return LinkPredResult(model, epoch_loss, aucs, metrics, test_pos, test_neg, scores)
