"""Scene health checks used by ``unisg validate``."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .scenegraph import Scene
from .xform import ALL_FORMS, InvalidTransform, NonRigidTransform, apply, convert

TOLERANCE = 1e-9
# fixed probe points: corners of a unit cube plus the origin
PROBES = np.array([[x, y, z] for x in (-1.0, 1.0) for y in (-1.0, 1.0) for z in (-1.0, 1.0)] + [[0.0, 0.0, 0.0]])


@dataclass
class AuditReport:
    max_deviation: float = 0.0
    violations: list = field(default_factory=list)  # (entity path, message)
    checked: int = 0

    @property
    def ok(self) -> bool:
        return not self.violations and self.max_deviation <= TOLERANCE

    def note(self, path, message):
        self.violations.append((path, message))


def _scaled_error(a, b):
    return float(np.max(np.abs(a - b)) / max(1.0, float(np.max(np.abs(a)))))


def form_agreement(x) -> tuple[float, list]:
    """Largest disagreement between applying ``x`` natively and through every other form.

    Forms that cannot hold the transform (non-uniform scale in a rigid form)
    are skipped.  Errors relative to max(1, |p|) so large coordinates are
    not penalized for rounding in the last place.
    """
    ref = apply(x, PROBES)
    worst, skipped = 0.0, []
    for form in ALL_FORMS:
        try:
            y = convert(x, form)
        except NonRigidTransform:
            skipped.append(form)
            continue
        worst = max(worst, _scaled_error(ref, apply(y, PROBES)))
    return worst, skipped


def check_tree(scene: Scene, report: AuditReport) -> None:
    if not scene.entities:
        return
    roots = [e for e in scene.entities.values() if e.parent is None]
    if len(roots) != 1 or roots[0].id != scene.root:
        report.note("/", f"expected exactly one root, found {len(roots)}")
    seen = list(scene.iter_depth_first())
    if sorted(seen) != sorted(scene.entities) or len(set(seen)) != len(seen):
        report.note("/", "hierarchy does not reach every entity exactly once")
    for ent in scene.entities.values():
        if ent.parent is not None and ent.id not in scene.entities[ent.parent].children:
            report.note(scene.path(ent.id), "parent does not list this entity as a child")
        for c in ent.children:
            if scene.entities.get(c) is None or scene.entities[c].parent != ent.id:
                report.note(scene.path(ent.id), f"child {c} does not point back")


def audit(scene: Scene, reference: Scene | None = None) -> AuditReport:
    report = AuditReport()
    check_tree(scene, report)
    if report.violations:
        return report
    for eid in scene.iter_depth_first():
        path = scene.path(eid)
        slots = scene.components[eid]
        trs = slots.get("trs")
        if trs is not None:
            report.checked += 1
            try:
                dev, _ = form_agreement(trs.repr)
            except (InvalidTransform, ValueError) as exc:
                report.note(path, f"invalid transform: {exc}")
                continue
            report.max_deviation = max(report.max_deviation, dev)
            if dev > TOLERANCE:
                report.note(path, f"forms disagree by {dev:.3g}")
        info = scene.get(eid, "info")
        if info is not None and info.child_type_counts != scene.census(eid):
            report.note(path, "info census out of date")
        action = slots.get("action")
        if action is not None:
            missing = [r for r in action.refs if r not in scene.entities]
            if missing:
                report.note(path, f"action refers to missing entities {missing}")
    if reference is not None and not report.violations:
        compare_world(scene, reference, report)
    return report


def compare_world(scene: Scene, reference: Scene, report: AuditReport) -> None:
    """World placements must match the reference entity by entity, in document order."""
    mine, theirs = list(scene.iter_depth_first()), list(reference.iter_depth_first())
    if len(mine) != len(theirs):
        report.note("/", f"reference has {len(theirs)} entities, scene has {len(mine)}")
        return
    probes = np.hstack([PROBES, np.ones((len(PROBES), 1))])
    for a, b in zip(mine, theirs):
        pa = probes @ scene.world_transform(a).T
        pb = probes @ reference.world_transform(b).T
        dev = _scaled_error(pb[:, :3], pa[:, :3])
        report.max_deviation = max(report.max_deviation, dev)
        if dev > TOLERANCE:
            report.note(scene.path(a), f"world placement differs from reference by {dev:.3g}")
