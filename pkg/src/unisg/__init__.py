"""Unified scene graphs: geometric-algebra transforms, an ECS scene model,
a text scene format, graph tensor export and a small graph-learning engine."""
from .ga import CGA, PGA, Algebra, Multivector
from .scenegraph import (
    ActionDataComponent,
    InfoComponent,
    MeshFeatureComponent,
    Scene,
    SceneError,
    TRSComponent,
)
from .sceneio import SceneDocument, SceneParseError, load, parse, save, serialize
from .export import GraphTensors, Vocabulary, export_tensors
from .xform import ALL_FORMS, Form, InvalidTransform, NonRigidTransform, TransformRepr, convert

__version__ = "0.1.0"
