"""Graph layers, losses and the three models: classifier, CGVAE, link autoencoder."""
from __future__ import annotations

from functools import cached_property

import numpy as np

from . import autograd as ag
from .autograd import ShapeError, Tensor, parameter

LOGVAR_CLAMP = 20.0
BCE_EPS = 1e-7


def glorot(rng, fan_in, fan_out):
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return parameter(rng.uniform(-bound, bound, (fan_in, fan_out)))


def mean_adjacency(A) -> np.ndarray:
    """Row-normalized adjacency; isolated nodes get an all-zero row."""
    A = np.asarray(A, dtype=float)
    deg = A.sum(axis=1, keepdims=True)
    return np.divide(A, deg, out=np.zeros_like(A), where=deg > 0)


class Aggregator:
    """Row-normalized adjacency kept as coordinate lists.

    Block-diagonal batches of small graphs also keep the padded dense blocks,
    since one batched matmul beats a scattered sum there.
    """

    __slots__ = ("rows", "cols", "weights", "n", "blocks", "mask")
    BLOCK_LIMIT = 256

    def __init__(self, A, normalized=False):
        A = np.asarray(A, dtype=float)
        rows, cols = np.nonzero(A)
        self._set(rows, cols, A[rows, cols], A.shape[0], normalized)

    def _set(self, rows, cols, values, n, normalized):
        self.n, self.rows, self.cols = n, rows, cols
        self.blocks = self.mask = None
        if not normalized and rows.size:
            deg = np.bincount(rows, values, minlength=n)
            values = values / deg[rows]
        self.weights = values

    @classmethod
    def block_diagonal(cls, mats):
        """Aggregator of a block-diagonal stack, without forming the dense stack."""
        rows, cols, vals, start = [], [], [], 0
        for A in mats:
            r, c = np.nonzero(A)
            rows.append(r + start)
            cols.append(c + start)
            vals.append(A[r, c])
            start += A.shape[0]
        out = cls.__new__(cls)
        cat = (lambda xs, dt: np.concatenate(xs).astype(dt)) if mats else (lambda xs, dt: np.zeros(0, dt))
        out._set(cat(rows, int), cat(cols, int), cat(vals, float), start, False)
        m = max((A.shape[0] for A in mats), default=0)
        if 0 < m <= cls.BLOCK_LIMIT:
            out.blocks = np.zeros((len(mats), m, m))
            out.mask = np.zeros((len(mats), m), dtype=bool)
            for k, A in enumerate(mats):
                n = A.shape[0]
                out.blocks[k, :n, :n] = mean_adjacency(A)
                out.mask[k, :n] = True
        return out

    @classmethod
    def from_edges(cls, pairs, n):
        """Aggregator of an undirected graph given as ``(i, j)`` pairs."""
        pairs = np.asarray(pairs, dtype=int).reshape(-1, 2)
        A = np.zeros((n, n))
        A[pairs[:, 0], pairs[:, 1]] = A[pairs[:, 1], pairs[:, 0]] = 1.0
        return cls(A)

    def __call__(self, X) -> Tensor:
        if self.blocks is not None:
            return ag.block_matmul(self.blocks, self.mask, X)
        return ag.scatter_rows(self.rows, self.cols, self.weights, self.n, X)

    def dense(self) -> np.ndarray:
        out = np.zeros((self.n, self.n))
        out[self.rows, self.cols] = self.weights
        return out


# -- layers ---------------------------------------------------------------------------------

def sage_conv(X, A, W_self, W_neigh, activation=True, normalized=False) -> Tensor:
    """GraphSAGE with a mean aggregator: ``relu(X W_self + mean_nbrs(X) W_neigh)``.

    ``A`` is a constant adjacency; pass ``normalized=True`` if it has already
    been through :func:`mean_adjacency`.
    """
    X = ag.as_tensor(X)
    n = X.shape[0]
    if not isinstance(A, Aggregator):
        A = np.asarray(A.data if isinstance(A, Tensor) else A, dtype=float)
        if A.shape != (n, n):
            raise ShapeError(f"sage_conv: adjacency {A.shape} for {n} nodes")
        A = Aggregator(A, normalized)
    elif A.n != n:
        raise ShapeError(f"sage_conv: aggregator over {A.n} nodes for {n} nodes")
    if W_self.shape[0] != X.shape[1] or W_neigh.shape != W_self.shape:
        raise ShapeError(f"sage_conv: features {X.shape} with weights {W_self.shape}, {W_neigh.shape}")
    out = X @ W_self + A(X) @ W_neigh
    return ag.relu(out) if activation else out


def attention_conv(X, A, W_self, W_neigh, a_src, a_dst, activation=True) -> Tensor:
    """Single-head attention aggregator in place of the neighbour mean."""
    X = ag.as_tensor(X)
    A = np.asarray(A, dtype=float)
    H = X @ W_neigh
    scores = ag.leaky_relu((H @ a_src) + ag.transpose(H @ a_dst))
    alpha = ag.softmax(scores + ag.Tensor((A - 1.0) * 1e9)) * ag.Tensor(A)
    out = X @ W_self + alpha @ H
    return ag.relu(out) if activation else out


def linear(X, W, b=None) -> Tensor:
    out = X @ W
    return out + b if b is not None else out


# -- losses ---------------------------------------------------------------------------------

def _same_shape(op, a, b):
    if a.shape != b.shape:
        raise ShapeError(f"{op}: prediction {a.shape} vs target {b.shape}")


def mse(pred, target) -> Tensor:
    target = ag.as_tensor(target)
    _same_shape("mse", pred, target)
    return ag.mean(ag.square(pred - target))


def bce(pred, target, mask=None) -> Tensor:
    """Mean binary cross entropy over entries where ``mask`` is 1."""
    target = np.asarray(target.data if isinstance(target, Tensor) else target, dtype=float)
    _same_shape("bce", pred, target)
    p = ag.clip(pred, BCE_EPS, 1.0 - BCE_EPS)
    ll = ag.mul(ag.log(p), target) + ag.mul(ag.log(1.0 - p), 1.0 - target)
    if mask is None:
        return -ag.mean(ll)
    mask = np.asarray(mask, dtype=float)
    return -ag.sum(ag.mul(ll, mask)) / mask.sum()


def kl_divergence(mu, logvar) -> Tensor:
    """KL(N(mu, exp(logvar)) || N(0, 1)), averaged over entries."""
    _same_shape("kl", mu, logvar)
    return -0.5 * ag.mean(1.0 + logvar - ag.square(mu) - ag.exp(logvar))


def cross_entropy(logits, labels) -> Tensor:
    labels = np.asarray(labels, dtype=int)
    if logits.data.ndim != 2 or labels.shape != (logits.shape[0],):
        raise ShapeError(f"cross_entropy: logits {logits.shape} with labels {labels.shape}")
    onehot = np.zeros(logits.shape)
    onehot[np.arange(len(labels)), labels] = 1.0
    return -ag.sum(ag.mul(ag.log_softmax(logits), onehot)) / len(labels)


def reparameterize(mu, logvar, rng) -> Tensor:
    """``mu + exp(logvar / 2) * eps`` with ``eps ~ N(0, 1)`` drawn from ``rng``."""
    _same_shape("reparameterize", mu, logvar)
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    eps = rng.standard_normal(mu.shape)
    std = ag.exp(0.5 * ag.clip(logvar, -LOGVAR_CLAMP, LOGVAR_CLAMP))
    return mu + std * eps


# -- batching --------------------------------------------------------------------------------

class GraphBatch:
    """Several graphs stacked block-diagonally.

    The dense adjacency ``A`` and the same-graph mask ``block_mask`` are
    only built when a model asks for them.
    """

    def __init__(self, graphs, X, agg, pool, categories, labels):
        self.graphs = list(graphs)
        self.X, self.agg, self.pool = X, agg, pool
        self.categories, self.labels = categories, labels
        self.sizes = [g.N for g in self.graphs]

    def _stack(self, block_of):
        n = int(np.sum(self.sizes))
        out = np.zeros((n, n))
        start = 0
        for g in self.graphs:
            out[start:start + g.N, start:start + g.N] = block_of(g)
            start += g.N
        return out

    @cached_property
    def A(self) -> np.ndarray:
        return self._stack(lambda g: g.A)

    @cached_property
    def block_mask(self) -> np.ndarray:
        return self._stack(lambda g: 1.0)


def collate(graphs, feature_transform=None) -> GraphBatch:
    sizes = [g.N for g in graphs]
    n = int(np.sum(sizes))
    X = np.concatenate([g.X for g in graphs], axis=0) if graphs else np.zeros((0, 0))
    if feature_transform is not None:
        X = feature_transform(X)
    pool = np.zeros((len(graphs), n))
    start = 0
    for k, g in enumerate(graphs):
        pool[k, start:start + g.N] = 1.0 / g.N
        start += g.N
    labels = None
    if graphs and all(g.graph_label is not None for g in graphs):
        labels = np.array([g.graph_label for g in graphs], dtype=int)
    cats = np.concatenate([g.categories for g in graphs]) if graphs else np.zeros(0, dtype=int)
    return GraphBatch(graphs, X, Aggregator.block_diagonal([g.A for g in graphs]), pool, cats, labels)


# -- models ----------------------------------------------------------------------------------

class Model:
    params: dict

    def parameters(self):
        return list(self.params.values())

    def state_dict(self):
        return {k: v.data.copy() for k, v in self.params.items()}

    def load_state_dict(self, state):
        for k, v in state.items():
            if self.params[k].shape != v.shape:
                raise ShapeError(f"parameter {k}: shape {v.shape} does not match {self.params[k].shape}")
            self.params[k].data = np.array(v, dtype=float)


class SageClassifier(Model):
    """Two GraphSAGE layers, mean pooling over each graph, linear head."""

    def __init__(self, in_dim, n_classes, hidden=64, aggregator="mean", seed=0):
        if aggregator not in ("mean", "attention"):
            raise ValueError(f"unknown aggregator {aggregator!r}")
        rng = np.random.default_rng(seed)
        self.aggregator = aggregator
        self.params = {
            "conv1.W_self": glorot(rng, in_dim, hidden),
            "conv1.W_neigh": glorot(rng, in_dim, hidden),
            "conv2.W_self": glorot(rng, hidden, hidden),
            "conv2.W_neigh": glorot(rng, hidden, hidden),
            "head.W": glorot(rng, hidden, n_classes),
            "head.b": parameter(np.zeros((1, n_classes))),
        }
        if aggregator == "attention":
            for layer in ("conv1", "conv2"):
                self.params[f"{layer}.a_src"] = glorot(rng, hidden, 1)
                self.params[f"{layer}.a_dst"] = glorot(rng, hidden, 1)

    def _conv(self, layer, H, batch):
        p = self.params
        if self.aggregator == "attention":
            return attention_conv(H, batch.A, p[f"{layer}.W_self"], p[f"{layer}.W_neigh"],
                                  p[f"{layer}.a_src"], p[f"{layer}.a_dst"])
        return sage_conv(H, batch.agg, p[f"{layer}.W_self"], p[f"{layer}.W_neigh"], normalized=True)

    def forward(self, batch: GraphBatch) -> Tensor:
        H = self._conv("conv1", ag.Tensor(batch.X), batch)
        H = self._conv("conv2", H, batch)
        pooled = ag.Tensor(batch.pool) @ H
        return linear(pooled, self.params["head.W"], self.params["head.b"])

    def loss(self, batch: GraphBatch) -> Tensor:
        return cross_entropy(self.forward(batch), batch.labels)


class CGVAE(Model):
    """Conditional graph VAE.

    Encoder: concat(X, embed(categories)) -> GraphSAGE -> per-node mu and
    log-variance (one GraphSAGE head each).  Decoder input is
    concat(Z, embed(categories)); one MLP rebuilds node features, another
    maps to node embeddings whose pairwise inner products through a sigmoid
    give edge probabilities.
    """

    def __init__(self, feat_dim, n_categories, hidden=64, z_dim=32, emb_dim=16, beta=1.0, seed=0):
        rng = np.random.default_rng(seed)
        self.feat_dim, self.n_categories, self.z_dim, self.emb_dim = feat_dim, n_categories, z_dim, emb_dim
        self.beta = beta
        d_in, d_dec = feat_dim + emb_dim, z_dim + emb_dim
        self.params = {
            "embed": parameter(rng.normal(0.0, 1.0, (n_categories, emb_dim))),
            "enc.W_self": glorot(rng, d_in, hidden),
            "enc.W_neigh": glorot(rng, d_in, hidden),
            "mu.W_self": glorot(rng, hidden, z_dim),
            "mu.W_neigh": glorot(rng, hidden, z_dim),
            "logvar.W_self": glorot(rng, hidden, z_dim),
            "logvar.W_neigh": glorot(rng, hidden, z_dim),
            "decx.W1": glorot(rng, d_dec, hidden),
            "decx.b1": parameter(np.zeros((1, hidden))),
            "decx.W2": glorot(rng, hidden, feat_dim),
            "decx.b2": parameter(np.zeros((1, feat_dim))),
            "deca.W1": glorot(rng, d_dec, hidden),
            "deca.b1": parameter(np.zeros((1, hidden))),
            "deca.W2": glorot(rng, hidden, hidden),
            "deca.offset": parameter(np.zeros((1, 1))),
        }

    def embed(self, categories) -> Tensor:
        categories = np.asarray(categories, dtype=int)
        if categories.size and (categories.min() < 0 or categories.max() >= self.n_categories):
            raise KeyError("category id outside the model's vocabulary")
        return ag.lookup_rows(self.params["embed"], categories)

    def encode(self, X, agg, categories):
        p = self.params
        H = ag.concat([ag.as_tensor(X), self.embed(categories)])
        H = sage_conv(H, agg, p["enc.W_self"], p["enc.W_neigh"], normalized=True)
        mu = sage_conv(H, agg, p["mu.W_self"], p["mu.W_neigh"], activation=False, normalized=True)
        logvar = sage_conv(H, agg, p["logvar.W_self"], p["logvar.W_neigh"], activation=False, normalized=True)
        return mu, ag.clip(logvar, -LOGVAR_CLAMP, LOGVAR_CLAMP)

    def decode(self, Z, categories):
        p = self.params
        Zhat = ag.concat([Z, self.embed(categories)])
        Xhat = linear(ag.relu(linear(Zhat, p["decx.W1"], p["decx.b1"])), p["decx.W2"], p["decx.b2"])
        E = ag.relu(linear(Zhat, p["deca.W1"], p["deca.b1"])) @ p["deca.W2"]
        P = ag.sigmoid(E @ ag.transpose(E) + p["deca.offset"])
        return Xhat, P

    def losses(self, batch: GraphBatch, rng):
        """Returns ``(total, mse, bce, kl)`` tensors for one batch."""
        mu, logvar = self.encode(batch.X, batch.agg, batch.categories)
        Z = reparameterize(mu, logvar, rng)
        Xhat, P = self.decode(Z, batch.categories)
        rec_x = mse(Xhat, batch.X)
        rec_a = bce(P, batch.A, batch.block_mask - np.eye(len(batch.A)))
        kl = kl_divergence(mu, logvar)
        return rec_x + rec_a + self.beta * kl, rec_x, rec_a, kl

    def loss(self, batch: GraphBatch, rng) -> Tensor:
        return self.losses(batch, rng)[0]


class GraphAutoEncoder(Model):
    """Deterministic two-layer GraphSAGE encoder with an inner-product edge decoder."""

    def __init__(self, feat_dim, hidden=64, z_dim=32, seed=0):
        rng = np.random.default_rng(seed)
        self.params = {
            "enc1.W_self": glorot(rng, feat_dim, hidden),
            "enc1.W_neigh": glorot(rng, feat_dim, hidden),
            "enc2.W_self": glorot(rng, hidden, z_dim),
            "enc2.W_neigh": glorot(rng, hidden, z_dim),
            "dec.W1": glorot(rng, z_dim, hidden),
            "dec.b1": parameter(np.zeros((1, hidden))),
            "dec.W2": glorot(rng, hidden, hidden),
            "dec.offset": parameter(np.zeros((1, 1))),
        }

    def embed_nodes(self, X, agg) -> Tensor:
        p = self.params
        H = sage_conv(ag.as_tensor(X), agg, p["enc1.W_self"], p["enc1.W_neigh"], normalized=True)
        Z = sage_conv(H, agg, p["enc2.W_self"], p["enc2.W_neigh"], activation=False, normalized=True)
        return ag.relu(linear(Z, p["dec.W1"], p["dec.b1"])) @ p["dec.W2"]

    def adjacency(self, X, agg) -> Tensor:
        E = self.embed_nodes(X, agg)
        return ag.sigmoid(E @ ag.transpose(E) + self.params["dec.offset"])

    def edge_probs(self, E: Tensor, pairs) -> Tensor:
        pairs = np.asarray(pairs, dtype=int).reshape(-1, 2)
        src = ag.lookup_rows(E, pairs[:, 0])
        dst = ag.lookup_rows(E, pairs[:, 1])
        return ag.sigmoid(ag.sum(src * dst, axis=1, keepdims=True) + self.params["dec.offset"])
