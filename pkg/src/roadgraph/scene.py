"""Scene containers: object nodes, relationship edges, frames, and validity checks."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional

from .taxonomy import (
    ObjectClass,
    RelationshipType,
    class_index,
    orientation_valid,
    type_index,
)


class ValidationError(ValueError):
    """Raised when a container fails its structural invariants."""


@dataclass(frozen=True)
class ObjectNode:
    """One traffic object in a single frame, in the ego bird's-eye frame.

    Positions are metres relative to the ego vehicle; velocities and
    accelerations are world values expressed in the ego-aligned axes.
    """

    id: int
    obj_class: ObjectClass
    x: float
    y: float
    vx: float = 0.0
    vy: float = 0.0
    ax: float = 0.0
    ay: float = 0.0
    yaw: float = 0.0
    pitch: float = 0.0
    roll: float = 0.0
    group_id: Optional[int] = None

    def one_hot(self) -> tuple[float, float, float, float]:
        vec = [0.0, 0.0, 0.0, 0.0]
        vec[class_index(self.obj_class)] = 1.0
        return tuple(vec)

    def kinematics(self) -> tuple[float, ...]:
        return (self.x, self.y, self.vx, self.vy, self.ax, self.ay,
                self.yaw, self.pitch, self.roll)

    def speed(self) -> float:
        return math.hypot(self.vx, self.vy)


@dataclass(frozen=True)
class RelationshipEdge:
    """Directed, typed relationship between two nodes of one frame."""

    subject_id: int
    object_id: int
    rel: RelationshipType
    confidence: float = 1.0


@dataclass
class SceneGraph:
    """All objects and their pairwise relationships at one time step."""

    frame_index: int
    timestamp_s: float
    nodes: list[ObjectNode] = field(default_factory=list)
    edges: list[RelationshipEdge] = field(default_factory=list)

    def node_by_id(self) -> dict[int, ObjectNode]:
        return {n.id: n for n in self.nodes}

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SceneGraph):
            return NotImplemented
        return (self.frame_index, self.timestamp_s, self.nodes, self.edges) == (
            other.frame_index, other.timestamp_s, other.nodes, other.edges)


@dataclass(frozen=True)
class RelationshipInterval:
    """A (subject, object, type) relation over time.

    The relation is fully on over frames [b, c); [a, b) and [c, d] are the
    uncertainty ramps used for loss weighting.  Crisp annotations have
    a == b and c == d.
    """

    subject_id: int
    object_id: int
    rel: RelationshipType
    a: float
    b: float
    c: float
    d: float

    def active_at(self, frame: float) -> bool:
        return self.b <= frame < self.c

    def covers(self, frame: float) -> bool:
        """Whether the frame falls in the weighting window [a, d].

        A degenerate end ramp (c == d) excludes its single point, so crisp
        intervals cover exactly their active span.
        """
        if frame < self.a or frame > self.d:
            return False
        if self.c == self.d and frame >= self.c:
            return False
        return True

    def pair(self) -> frozenset:
        return frozenset((self.subject_id, self.object_id))


@dataclass
class Scene:
    """An episode: ordered frames plus the relationship intervals labelling it."""

    scene_id: str
    frames: list[SceneGraph] = field(default_factory=list)
    intervals: list[RelationshipInterval] = field(default_factory=list)

    def n_frames(self) -> int:
        return len(self.frames)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Scene):
            return NotImplemented
        return (self.scene_id, self.frames, self.intervals) == (
            other.scene_id, other.frames, other.intervals)


@dataclass(frozen=True)
class Violation:
    """One broken invariant, pointing at the frame and entity that broke it."""

    scene_id: str
    rule: str
    frame_index: Optional[int] = None
    subject: str = ""
    detail: str = ""

    def __str__(self) -> str:
        loc = f" frame {self.frame_index}" if self.frame_index is not None else ""
        return f"[{self.scene_id}{loc}] {self.rule}: {self.subject} {self.detail}".rstrip()


_KINEMATIC_FIELDS = ("x", "y", "vx", "vy", "ax", "ay", "yaw", "pitch", "roll")


def _validate_frame(scene_id: str, g: SceneGraph, out: list[Violation]) -> None:
    seen: set[int] = set()
    for n in g.nodes:
        if n.id in seen:
            out.append(Violation(scene_id, "duplicate node id", g.frame_index, f"node {n.id}"))
        seen.add(n.id)
        for name in _KINEMATIC_FIELDS:
            if not math.isfinite(getattr(n, name)):
                out.append(Violation(scene_id, "non-finite kinematics", g.frame_index,
                                     f"node {n.id}", name))
        if not (-math.pi < n.yaw <= math.pi):
            out.append(Violation(scene_id, "yaw out of range", g.frame_index, f"node {n.id}",
                                 f"yaw={n.yaw!r}"))
    by_id = g.node_by_id()
    labelled_pairs: set[tuple[int, int]] = set()
    for e in g.edges:
        where = f"edge {e.subject_id}->{e.object_id}"
        if e.subject_id == e.object_id:
            out.append(Violation(scene_id, "self-edge", g.frame_index, where))
            continue
        if e.subject_id not in by_id or e.object_id not in by_id:
            out.append(Violation(scene_id, "edge references missing node", g.frame_index, where))
            continue
        if not 0.0 <= e.confidence <= 1.0:
            out.append(Violation(scene_id, "confidence out of range", g.frame_index, where,
                                 f"confidence={e.confidence!r}"))
        if not orientation_valid(by_id[e.subject_id].obj_class,
                                 by_id[e.object_id].obj_class, e.rel):
            out.append(Violation(scene_id, "relationship invalid for class pair",
                                 g.frame_index, where, e.rel.value))
        if e.rel is not RelationshipType.NO_RELATION:
            key = (e.subject_id, e.object_id)
            if key in labelled_pairs:
                out.append(Violation(scene_id, "duplicate labelled pair", g.frame_index, where))
            labelled_pairs.add(key)


def validate_scene(scene: Scene) -> list[Violation]:
    """Check every structural invariant; violations are data, not exceptions."""
    out: list[Violation] = []
    last_index: Optional[int] = None
    spacing: Optional[float] = None
    for g in scene.frames:
        if last_index is not None and g.frame_index <= last_index:
            out.append(Violation(scene.scene_id, "frame index not increasing", g.frame_index))
        last_index = g.frame_index
        _validate_frame(scene.scene_id, g, out)
    for prev, cur in zip(scene.frames, scene.frames[1:]):
        step = cur.timestamp_s - prev.timestamp_s
        if spacing is None:
            spacing = step
            if step <= 0:
                out.append(Violation(scene.scene_id, "timestamp not increasing", cur.frame_index))
        elif abs(step - spacing) > 1e-9:
            out.append(Violation(scene.scene_id, "timestamp spacing not uniform",
                                 cur.frame_index, detail=f"step={step!r}"))

    n_frames = len(scene.frames)
    known_ids = set()
    classes: dict[int, ObjectClass] = {}
    for g in scene.frames:
        for n in g.nodes:
            known_ids.add(n.id)
            classes.setdefault(n.id, n.obj_class)
    for i, itv in enumerate(scene.intervals):
        where = f"interval {i} ({itv.rel.value} {itv.subject_id}->{itv.object_id})"
        if not itv.a <= itv.b <= itv.c <= itv.d:
            out.append(Violation(scene.scene_id, "breakpoint order", None, where,
                                 f"a={itv.a} b={itv.b} c={itv.c} d={itv.d}"))
        if itv.a < 0 or itv.d > n_frames:
            out.append(Violation(scene.scene_id, "interval outside scene", None, where))
        if itv.subject_id == itv.object_id:
            out.append(Violation(scene.scene_id, "self-edge", None, where))
        elif itv.subject_id not in known_ids or itv.object_id not in known_ids:
            out.append(Violation(scene.scene_id, "interval references missing node", None, where))
        elif not orientation_valid(classes[itv.subject_id], classes[itv.object_id], itv.rel):
            out.append(Violation(scene.scene_id, "relationship invalid for class pair",
                                 None, where, itv.rel.value))
    return out


def _mean(values: Iterable[float]) -> float:
    values = list(values)
    return sum(values) / len(values)


def collapse_groups_with_mapping(g: SceneGraph) -> tuple[SceneGraph, dict[int, int]]:
    """Collapse shared-group nodes into supernodes; also return the id mapping."""
    groups: dict[int, list[ObjectNode]] = {}
    for n in g.nodes:
        if n.group_id is not None:
            groups.setdefault(n.group_id, []).append(n)

    mapping: dict[int, int] = {n.id: n.id for n in g.nodes}
    new_nodes: list[ObjectNode] = []
    consumed: set[int] = set()
    for gid, members in groups.items():
        if len({m.obj_class for m in members}) > 1:
            raise ValidationError(f"group {gid} spans multiple object classes")
        super_id = min(m.id for m in members)
        for m in members:
            mapping[m.id] = super_id
            consumed.add(m.id)
        new_nodes.append(ObjectNode(
            id=super_id,
            obj_class=members[0].obj_class,
            x=_mean(m.x for m in members),
            y=_mean(m.y for m in members),
            vx=_mean(m.vx for m in members),
            vy=_mean(m.vy for m in members),
            ax=_mean(m.ax for m in members),
            ay=_mean(m.ay for m in members),
            yaw=_mean(m.yaw for m in members),
            pitch=_mean(m.pitch for m in members),
            roll=_mean(m.roll for m in members),
            group_id=gid,
        ))
    for n in g.nodes:
        if n.id not in consumed:
            new_nodes.append(n)
    new_nodes.sort(key=lambda n: n.id)

    # Re-target edges, drop the self-edges that intra-group edges become, and
    # keep the best edge per (subject, object) pair.
    best: dict[tuple[int, int], RelationshipEdge] = {}
    order: list[tuple[int, int]] = []
    for e in g.edges:
        s, o = mapping[e.subject_id], mapping[e.object_id]
        if s == o:
            continue
        moved = replace(e, subject_id=s, object_id=o)
        key = (s, o)
        if key not in best:
            best[key] = moved
            order.append(key)
        else:
            kept = best[key]
            if (moved.confidence, -type_index(moved.rel)) > (kept.confidence, -type_index(kept.rel)):
                best[key] = moved
    new_edges = [best[k] for k in order]
    return SceneGraph(g.frame_index, g.timestamp_s, new_nodes, new_edges), mapping


def collapse_groups(g: SceneGraph) -> SceneGraph:
    """Collapse each group of same-class nodes into one mean-state supernode."""
    collapsed, _ = collapse_groups_with_mapping(g)
    return collapsed
