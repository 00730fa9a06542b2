"""
Telling two rooms apart
=======================

Fifty noisy copies of an operating room and fifty of a living room, exported
as graphs and fed to a two-layer GraphSAGE classifier.  A 70/30 split, twenty
epochs.
"""
from unisg.datasets import classification_dataset
from unisg.export import Vocabulary, export_tensors
from unisg.nn.train import ClassifierConfig, train_classifier
from unisg.xform import Form

data = classification_dataset(50, seed=0)
vocab = Vocabulary.from_scenes([s for s, _ in data])

for form in (Form.MATRIX, Form.PGA_MOTOR):
    graphs = [export_tensors(s, form, vocab, 64, label) for s, label in data]
    result = train_classifier(graphs, ClassifierConfig(seed=0))
    print(f"{form.value}: N={graphs[0].N} nodes, F={graphs[0].F} features")
    for row in result.metrics:
        if row.epoch % 5 == 0:
            print(f"  epoch {row.epoch:2d} {row.split:5s} loss {row.loss:.4f} accuracy {row.score:.2f}")
