"""The three learning tasks, run per representation form with repeats.

Each run writes a metrics CSV (``epoch,split,loss,accuracy_or_auc``).  With
several repeats there is one file per run plus a ``_mean`` file averaging
the runs row by row.  Repeat ``k`` uses seed ``seed + k`` for data, split
and initialization alike.
"""
from __future__ import annotations

import os
from dataclasses import asdict, dataclass, field

import numpy as np

from .datasets import classification_dataset, cube_features, gen_cube_stack, gen_or_dataset
from .export import Vocabulary, export_tensors
from .nn.train import (
    CGVAEConfig,
    ClassifierConfig,
    LinkPredConfig,
    MetricRow,
    generate_scene,
    metrics_csv,
    train_cgvae,
    train_classifier,
    train_linkpred,
)
from .xform import ALL_FORMS, Form

TASKS = ("classify", "generate", "linkpred")
DEFAULT_EPOCHS = {"classify": 20, "generate": 100, "linkpred": 100}


@dataclass
class ExperimentConfig:
    task: str = "classify"
    forms: tuple = (Form.MATRIX,)
    seed: int = 0
    epochs: int | None = None
    repeats: int = 1
    lr: float | None = None
    hidden: int = 64
    n_per_class: int = 50
    n_scenes: int = 100
    n_cubes: int = 1000
    mesh_width: int = 64
    aggregator: str = "mean"

    def __post_init__(self):
        if self.task not in TASKS:
            raise ValueError(f"unknown task {self.task!r}; choose from {', '.join(TASKS)}")
        self.forms = tuple(Form(f) for f in self.forms)
        if self.epochs is None:
            self.epochs = DEFAULT_EPOCHS[self.task]
        if self.repeats < 1 or self.epochs < 0:
            raise ValueError("repeats must be >= 1 and epochs >= 0")


@dataclass
class RunResult:
    task: str
    form: Form
    seed: int
    metrics: list
    summary: dict = field(default_factory=dict)


def _lr(config, default):
    return default if config.lr is None else config.lr


def run_classify(config: ExperimentConfig, form, seed) -> RunResult:
    data = classification_dataset(config.n_per_class, seed=seed)
    vocab = Vocabulary.from_scenes([s for s, _ in data])
    graphs = [export_tensors(s, form, vocab, config.mesh_width, label) for s, label in data]
    cfg = ClassifierConfig(epochs=config.epochs, lr=_lr(config, ClassifierConfig.lr), hidden=config.hidden,
                           aggregator=config.aggregator, seed=seed)
    res = train_classifier(graphs, cfg)
    summary = {
        "train_loss": res.final("train").loss,
        "train_accuracy": res.final("train").score,
        "test_accuracy": res.final("test").score,
    }
    return RunResult("classify", form, seed, res.metrics, summary)


def run_generate(config: ExperimentConfig, form, seed) -> RunResult:
    scenes = gen_or_dataset(config.n_scenes, seed)
    vocab = Vocabulary.from_scenes(scenes)
    graphs = [export_tensors(s, form, vocab, config.mesh_width) for s in scenes]
    cfg = CGVAEConfig(epochs=config.epochs, lr=_lr(config, CGVAEConfig.lr), hidden=config.hidden, seed=seed)
    res = train_cgvae(graphs, len(vocab), cfg)
    sample = generate_scene(res.model, graphs[0].categories, seed, res.scaler)
    summary = {
        "loss_epoch0": res.epoch_loss[0],
        "loss_final": res.epoch_loss[-1],
        "loss_ratio": res.epoch_loss[-1] / res.epoch_loss[0],
        "sample_nodes": sample.N,
        "sample_edges": int(sample.A.sum() // 2),
    }
    return RunResult("generate", form, seed, res.metrics, summary)


def cube_task(n_cubes, seed, form):
    """Feature rows and on-top-of edges (as row indices) for one cube stack."""
    scene, on_top = gen_cube_stack(n_cubes, seed)
    X, ids = cube_features(scene, form)
    row = {eid: i for i, eid in enumerate(ids)}
    return X, np.array([(row[a], row[b]) for a, b in on_top], dtype=int).reshape(-1, 2)


def run_linkpred(config: ExperimentConfig, form, seed) -> RunResult:
    X, edges = cube_task(config.n_cubes, seed, form)
    cfg = LinkPredConfig(epochs=config.epochs, lr=_lr(config, LinkPredConfig.lr), hidden=config.hidden, seed=seed)
    res = train_linkpred(X, edges, cfg)
    summary = {
        "loss_epoch0": res.epoch_loss[0],
        "loss_epoch15": res.epoch_loss[min(15, len(res.epoch_loss) - 1)],
        "loss_final": res.epoch_loss[-1],
        "auc_final": res.auc[-1],
    }
    return RunResult("linkpred", form, seed, res.metrics, summary)


RUNNERS = {"classify": run_classify, "generate": run_generate, "linkpred": run_linkpred}


def mean_metrics(runs) -> list:
    """Row-wise mean of several runs' metric tables (same epochs and splits)."""
    tables = [r.metrics for r in runs]
    keys = [(m.epoch, m.split) for m in tables[0]]
    if any([(m.epoch, m.split) for m in t] != keys for t in tables):
        raise ValueError("runs have different metric layouts")
    out = []
    for i, (epoch, split) in enumerate(keys):
        loss = float(np.mean([t[i].loss for t in tables]))
        score = float(np.mean([t[i].score for t in tables]))
        out.append(MetricRow(epoch, split, loss, score))
    return out


def run_experiment(config: ExperimentConfig, out_dir=None, log=None) -> list[RunResult]:
    """Run every form and repeat in sequence; write CSVs if ``out_dir`` is given."""
    results = []
    runner = RUNNERS[config.task]
    for form in config.forms:
        runs = [runner(config, form, config.seed + k) for k in range(config.repeats)]
        results.extend(runs)
        if log is not None:
            for r in runs:
                log(format_summary(r))
        if out_dir is not None:
            _write_runs(out_dir, config, form, runs)
    if out_dir is not None:
        _write_summary(out_dir, results)
    return results


def format_summary(r: RunResult) -> str:
    fields = " ".join(f"{k}={v:.6g}" if isinstance(v, float) else f"{k}={v}" for k, v in r.summary.items())
    return f"{r.task} form={r.form.value} seed={r.seed} {fields}"


def _write(path, text):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _write_runs(out_dir, config, form, runs):
    os.makedirs(out_dir, exist_ok=True)
    stem = f"{config.task}_{form.value}"
    if len(runs) == 1:
        _write(os.path.join(out_dir, f"{stem}.csv"), metrics_csv(runs[0].metrics))
        return
    for k, r in enumerate(runs):
        _write(os.path.join(out_dir, f"{stem}_run{k}.csv"), metrics_csv(r.metrics))
    _write(os.path.join(out_dir, f"{stem}_mean.csv"), metrics_csv(mean_metrics(runs)))


def _write_summary(out_dir, results):
    keys = sorted({k for r in results for k in r.summary})
    lines = [",".join(["task", "form", "seed"] + keys)]
    for r in results:
        vals = [repr(r.summary[k]) if k in r.summary else "" for k in keys]
        lines.append(",".join([r.task, r.form.value, str(r.seed)] + vals))
    _write(os.path.join(out_dir, "summary.csv"), "\n".join(lines) + "\n")


def config_dict(config: ExperimentConfig) -> dict:
    d = asdict(config)
    d["forms"] = ",".join(f.value for f in config.forms)
    return d


__all__ = ["ALL_FORMS", "ExperimentConfig", "RunResult", "TASKS", "cube_task", "mean_metrics", "run_experiment"]
