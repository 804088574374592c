"""Geometric relationship labelling: threshold rules over sampled trajectories.

The labeller re-derives relationship intervals from per-frame object states
alone, scanning every unordered pair and applying prioritised threshold rules.
Thresholds are shared, documented constants; the generator promises enough
margin around every threshold that observation noise cannot flip a rule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations
from typing import Optional

from .scene import ObjectNode, RelationshipInterval, Scene
from .taxonomy import ObjectClass, RelationshipType

# Straight two-lane road along +x.  The ego drives lane 0; lane 1 carries
# adjacent or oncoming traffic.
LANE_WIDTH = 3.5
LANE_CENTERS = (0.0, 3.5)
ROAD_MIN = LANE_CENTERS[0] - LANE_WIDTH / 2
ROAD_MAX = LANE_CENTERS[1] + LANE_WIDTH / 2


@dataclass(frozen=True)
class RuleThresholds:
    """Tunable geometric thresholds behind every relationship rule."""

    lane_tol: float = 1.5            # same-lane lateral half-width
    heading_tol_rad: float = math.radians(15.0)
    follow_gap: float = 25.0
    follow_ratio_lo: float = 0.8
    follow_ratio_hi: float = 1.2
    same_lane_gap: float = 50.0
    approach_closing: float = 1.0
    approach_dist: float = 30.0
    band_min: float = 1.5            # adjacent-lane passing band
    band_max: float = 6.0
    pass_window: float = 25.0
    overtake_ratio: float = 1.2
    stop_speed: float = 0.5
    min_moving_speed: float = 0.5    # speed floor for ratio-based rules
    wfc_dist: float = 10.0           # waiting-for-crossing lookahead
    crossing_speed: float = 0.3      # lateral speed that counts as crossing
    group_dist: float = 4.0
    group_speed: float = 1.0
    group_min_frames: int = 4
    behind_gap: float = 15.0
    behind_lat: float = 2.0
    strip_tol: float = 1.2           # on-lane lateral strip half-width
    onlane_dist: float = 30.0
    waiting_sign_dist: float = 4.0
    waiting_sign_speed: float = 0.3
    react_decel: float = 0.5
    react_dist: float = 20.0
    stop_sign_dist: float = 5.0
    wait_sign_dist: float = 12.0
    avoid_dist: float = 20.0
    avoid_lateral_speed: float = 0.3
    sign_lat_max: float = 6.0        # roadside signs only


DEFAULT_THRESHOLDS = RuleThresholds()


def wrap_angle(a: float) -> float:
    while a > math.pi:
        a -= 2 * math.pi
    while a <= -math.pi:
        a += 2 * math.pi
    return a


def rel_long(p: ObjectNode, q: ObjectNode) -> float:
    """Longitudinal offset of q in p's heading frame (positive = ahead)."""
    return (q.x - p.x) * math.cos(p.yaw) + (q.y - p.y) * math.sin(p.yaw)


def rel_lat(p: ObjectNode, q: ObjectNode) -> float:
    """Lateral offset of q in p's heading frame (positive = left)."""
    return -(q.x - p.x) * math.sin(p.yaw) + (q.y - p.y) * math.cos(p.yaw)


def heading_delta(p: ObjectNode, q: ObjectNode) -> float:
    return abs(wrap_angle(p.yaw - q.yaw))


def distance(p: ObjectNode, q: ObjectNode) -> float:
    return math.hypot(q.x - p.x, q.y - p.y)


def closing_speed(p: ObjectNode, q: ObjectNode) -> float:
    """Rate at which the pair distance shrinks (positive = approaching)."""
    dx, dy = q.x - p.x, q.y - p.y
    dvx, dvy = q.vx - p.vx, q.vy - p.vy
    dist = math.hypot(dx, dy)
    if dist <= 1e-9:
        return 0.0
    return -(dx * dvx + dy * dvy) / dist

def nearest_lane(y: float) -> float:
    return min(LANE_CENTERS, key=lambda c: abs(y - c))


def on_road(y: float) -> bool:
    return ROAD_MIN <= y <= ROAD_MAX


def on_lane_strip(n: ObjectNode, th: RuleThresholds) -> bool:
    return abs(n.y - nearest_lane(n.y)) < th.strip_tol


def long_accel(n: ObjectNode) -> float:
    return n.ax * math.cos(n.yaw) + n.ay * math.sin(n.yaw)


def crossing_active(n: ObjectNode, th: RuleThresholds) -> bool:
    return on_road(n.y) and abs(n.vy) > th.crossing_speed


def moving_toward_road(n: ObjectNode, th: RuleThresholds) -> bool:
    if n.y < ROAD_MIN:
        return n.vy > th.crossing_speed
    if n.y > ROAD_MAX:
        return n.vy < -th.crossing_speed
    return False


Label = tuple[RelationshipType, int, int]  # (type, subject id, object id)


def _group(a: ObjectNode, b: ObjectNode, th: RuleThresholds,
           rel: RelationshipType) -> Optional[Label]:
    if (distance(a, b) < th.group_dist
            and abs(a.speed() - b.speed()) < th.group_speed
            and heading_delta(a, b) < th.heading_tol_rad):
        subject = min(a, b, key=lambda n: n.id)
        other = b if subject is a else a
        return (rel, subject.id, other.id)
    return None


def _following(rear: ObjectNode, front: ObjectNode, th: RuleThresholds) -> bool:
    if heading_delta(rear, front) >= th.heading_tol_rad:
        return False
    if abs(rel_lat(rear, front)) >= th.lane_tol:
        return False
    gap = rel_long(rear, front)
    if not 0.0 < gap <= th.follow_gap:
        return False
    front_speed = front.speed()
    if front_speed < th.min_moving_speed:
        return False
    ratio = rear.speed() / front_speed
    return th.follow_ratio_lo <= ratio <= th.follow_ratio_hi


def _waiting_to_cross(waiter: ObjectNode, mover: ObjectNode,
                      th: RuleThresholds) -> bool:
    return (waiter.speed() < th.stop_speed
            and 0.0 < rel_long(waiter, mover) <= th.wfc_dist
            and crossing_active(mover, th))


def _behind(subject: ObjectNode, obj: ObjectNode, th: RuleThresholds) -> bool:
    gap = -rel_long(obj, subject)  # how far the subject trails the object
    return 0.0 < gap <= th.behind_gap and abs(rel_lat(obj, subject)) < th.behind_lat


def _vehicle_vehicle(ni: ObjectNode, nj: ObjectNode, th: RuleThresholds,
                     band: Optional[Label], allow_group: bool) -> Optional[Label]:
    if allow_group:
        g = _group(ni, nj, th, RelationshipType.VEHICLE_GROUP)
        if g:
            return g
    if band:
        return band
    for rear, front in ((ni, nj), (nj, ni)):
        if _following(rear, front, th):
            return (RelationshipType.FOLLOWING, rear.id, front.id)
    for waiter, mover in ((ni, nj), (nj, ni)):
        if _waiting_to_cross(waiter, mover, th):
            return (RelationshipType.VEHICLE_WAITING_TO_CROSS, mover.id, waiter.id)
    if closing_speed(ni, nj) > th.approach_closing and distance(ni, nj) < th.approach_dist:
        return (RelationshipType.APPROACHING, ni.id, nj.id)
    if (heading_delta(ni, nj) < th.heading_tol_rad
            and abs(rel_lat(ni, nj)) < th.lane_tol
            and 0.0 < abs(rel_long(ni, nj)) <= th.same_lane_gap):
        return (RelationshipType.SAME_LANE, ni.id, nj.id)
    return None


def _human_vehicle(h: ObjectNode, v: ObjectNode, th: RuleThresholds) -> Optional[Label]:
    ahead = rel_long(v, h)
    if _waiting_to_cross(v, h, th):
        return (RelationshipType.HUMAN_WAITING_TO_CROSS, h.id, v.id)
    if abs(h.y - nearest_lane(v.y)) < th.strip_tol and 0.0 < ahead <= th.onlane_dist:
        return (RelationshipType.HUMAN_ON_LANE, h.id, v.id)
    if moving_toward_road(h, th) and 0.0 < ahead <= th.onlane_dist:
        return (RelationshipType.HUMAN_MAY_INTERSECT, h.id, v.id)
    if _behind(h, v, th):
        return (RelationshipType.HUMAN_BEHIND_VEHICLE, h.id, v.id)
    return None


def _vehicle_obstacle(v: ObjectNode, o: ObjectNode, th: RuleThresholds,
                      band: Optional[Label]) -> Optional[Label]:
    if (0.0 < rel_long(v, o) <= th.avoid_dist
            and abs(rel_lat(v, o)) < th.band_max
            and abs(v.vy) > th.avoid_lateral_speed):
        return (RelationshipType.VEHICLE_AVOIDING_OBSTACLE, v.id, o.id)
    return band


def _vehicle_sign(v: ObjectNode, s: ObjectNode, th: RuleThresholds) -> Optional[Label]:
    if not on_lane_strip(v, th) or abs(rel_lat(v, s)) > th.sign_lat_max:
        return None
    ahead = rel_long(v, s)
    speed = v.speed()
    if speed >= th.stop_speed:
        if long_accel(v) <= -th.react_decel and 0.0 < ahead <= th.react_dist:
            return (RelationshipType.VEHICLE_REACTING_TO_SIGN, v.id, s.id)
        return None
    if 0.0 < ahead <= th.stop_sign_dist:
        return (RelationshipType.VEHICLE_STOPPED_AT_SIGN, v.id, s.id)
    if th.stop_sign_dist < ahead <= th.wait_sign_dist:
        return (RelationshipType.VEHICLE_WAITING_AT_SIGN, v.id, s.id)
    return None


def classify_pair(ni: ObjectNode, nj: ObjectNode, th: RuleThresholds,
                  band: Optional[Label] = None, allow_group: bool = True
                  ) -> Optional[Label]:
    """Label one node pair at one frame; first matching rule wins."""
    a, b = sorted((ni, nj), key=lambda n: n.id)
    ca, cb = a.obj_class, b.obj_class
    C = ObjectClass
    if (ca, cb) == (C.VEHICLE, C.VEHICLE):
        return _vehicle_vehicle(a, b, th, band, allow_group)
    if {ca, cb} == {C.HUMAN, C.VEHICLE}:
        h, v = (a, b) if ca is C.HUMAN else (b, a)
        return _human_vehicle(h, v, th)
    if (ca, cb) == (C.HUMAN, C.HUMAN):
        return _group(a, b, th, RelationshipType.HUMAN_GROUP) if allow_group else None
    if (ca, cb) == (C.OBSTACLE, C.OBSTACLE):
        return _group(a, b, th, RelationshipType.OBSTACLE_GROUP) if allow_group else None
    if {ca, cb} == {C.HUMAN, C.OBSTACLE}:
        h, o = (a, b) if ca is C.HUMAN else (b, a)
        if _behind(h, o, th):
            return (RelationshipType.HUMAN_BEHIND_OBSTACLE, h.id, o.id)
        return None
    if {ca, cb} == {C.HUMAN, C.TRAFFIC_SIGN}:
        h, s = (a, b) if ca is C.HUMAN else (b, a)
        if distance(h, s) < th.waiting_sign_dist and h.speed() < th.waiting_sign_speed:
            return (RelationshipType.HUMAN_WAITING_AT_SIGN, h.id, s.id)
        return None
    if {ca, cb} == {C.VEHICLE, C.OBSTACLE}:
        v, o = (a, b) if ca is C.VEHICLE else (b, a)
        return _vehicle_obstacle(v, o, th, band)
    if {ca, cb} == {C.VEHICLE, C.TRAFFIC_SIGN}:
        v, s = (a, b) if ca is C.VEHICLE else (b, a)
        return _vehicle_sign(v, s, th)
    if {ca, cb} == {C.OBSTACLE, C.TRAFFIC_SIGN}:
        o, s = (a, b) if ca is C.OBSTACLE else (b, a)
        if _behind(o, s, th):
            return (RelationshipType.OBSTACLE_BEHIND_SIGN, o.id, s.id)
        return None
    return None


def _band_applies(classes: set[ObjectClass]) -> bool:
    return (ObjectClass.VEHICLE in classes
            and classes <= {ObjectClass.VEHICLE, ObjectClass.OBSTACLE})


def _band_labels(states: list[tuple[Optional[ObjectNode], Optional[ObjectNode]]],
                 th: RuleThresholds) -> list[Optional[Label]]:
    """Passing/overtaking labels from maximal adjacent-band runs.

    A run of frames with the pair in the lateral band and within the passing
    window qualifies only if the longitudinal offset changes sign inside it;
    the passer is whichever object trailed at the start of the run.
    """
    n = len(states)
    in_band = [False] * n
    longs = [0.0] * n
    for f, (a, b) in enumerate(states):
        if a is None or b is None:
            continue
        lng = rel_long(a, b)
        lat = abs(rel_lat(a, b))
        longs[f] = lng
        in_band[f] = th.band_min <= lat < th.band_max and abs(lng) <= th.pass_window
    out: list[Optional[Label]] = [None] * n
    f = 0
    while f < n:
        if not in_band[f]:
            f += 1
            continue
        start = f
        while f < n and in_band[f]:
            f += 1
        run = range(start, f)
        has_pos = any(longs[k] > 0 for k in run)
        has_neg = any(longs[k] < 0 for k in run)
        if not (has_pos and has_neg):
            continue
        a0, b0 = states[start]
        rear, front = (a0, b0) if longs[start] > 0 else (b0, a0)
        if rear.obj_class is ObjectClass.OBSTACLE or front.obj_class is ObjectClass.OBSTACLE:
            vehicle = rear if rear.obj_class is ObjectClass.VEHICLE else front
            obstacle = front if vehicle is rear else rear
            label = (RelationshipType.VEHICLE_PASSING_OBSTACLE, vehicle.id, obstacle.id)
        else:
            aligned = heading_delta(rear, front) < th.heading_tol_rad
            front_speed = front.speed()
            if (aligned and front_speed >= th.min_moving_speed
                    and rear.speed() >= th.overtake_ratio * front_speed):
                label = (RelationshipType.OVERTAKING, rear.id, front.id)
            else:
                label = (RelationshipType.PASSING_BY, rear.id, front.id)
        for k in run:
            out[k] = label
    return out


_GROUP_TYPES = {
    RelationshipType.HUMAN_GROUP,
    RelationshipType.VEHICLE_GROUP,
    RelationshipType.OBSTACLE_GROUP,
}


def _demote_short_groups(labels: list[Optional[Label]],
                         states: list[tuple[Optional[ObjectNode], Optional[ObjectNode]]],
                         bands: list[Optional[Label]],
                         th: RuleThresholds) -> None:
    f = 0
    n = len(labels)
    while f < n:
        label = labels[f]
        if label is None or label[0] not in _GROUP_TYPES:
            f += 1
            continue
        start = f
        while f < n and labels[f] == label:
            f += 1
        if f - start < th.group_min_frames:
            for k in range(start, f):
                a, b = states[k]
                labels[k] = classify_pair(a, b, th, bands[k], allow_group=False)


def _merge_runs(labels: list[Optional[Label]], out: list[RelationshipInterval]) -> None:
    f = 0
    n = len(labels)
    while f < n:
        label = labels[f]
        if label is None:
            f += 1
            continue
        start = f
        while f < n and labels[f] == label:
            f += 1
        rel, subj, obj = label
        out.append(RelationshipInterval(subj, obj, rel,
                                        float(start), float(start), float(f), float(f)))


def oracle_label(scene: Scene, th: RuleThresholds = DEFAULT_THRESHOLDS
                 ) -> list[RelationshipInterval]:
    """Recompute crisp relationship intervals from the stored trajectories.

    Existing intervals on the scene are ignored.  Output intervals are crisp
    (a == b, c == d) with the end exclusive, sorted by pair then start frame.
    """
    frames = scene.frames
    if not frames:
        return []
    maps = [g.node_by_id() for g in frames]
    all_ids = sorted({i for m in maps for i in m})
    intervals: list[RelationshipInterval] = []
    for i, j in combinations(all_ids, 2):
        states = [(m.get(i), m.get(j)) for m in maps]
        classes = {m[i].obj_class for m in maps if i in m} | \
                  {m[j].obj_class for m in maps if j in m}
        if _band_applies(classes):
            bands = _band_labels(states, th)
        else:
            bands = [None] * len(states)
        labels: list[Optional[Label]] = []
        for f, (a, b) in enumerate(states):
            if a is None or b is None:
                labels.append(None)
            else:
                labels.append(classify_pair(a, b, th, bands[f]))
        _demote_short_groups(labels, states, bands, th)
        _merge_runs(labels, intervals)
    return intervals
