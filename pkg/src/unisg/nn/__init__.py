"""Minimal dense autodiff engine and the graph models built on it."""
from .autograd import ShapeError, Tensor, gradient_check, parameter
from .models import (
    CGVAE,
    Aggregator,
    GraphAutoEncoder,
    GraphBatch,
    SageClassifier,
    attention_conv,
    bce,
    collate,
    cross_entropy,
    kl_divergence,
    mean_adjacency,
    mse,
    reparameterize,
    sage_conv,
)
from .optim import Adam, TrainingDivergence, adam_step
from .train import (
    CGVAEConfig,
    ClassifierConfig,
    LinkPredConfig,
    MetricRow,
    generate_scene,
    metrics_csv,
    roc_auc,
    train_cgvae,
    train_classifier,
    train_linkpred,
)
