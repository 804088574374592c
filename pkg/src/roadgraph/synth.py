"""Deterministic rule-based generator of traffic episodes with ground truth.

Scenes are built from scripted maneuver templates on a straight two-lane
road.  Ground-truth intervals are derived analytically: constant-velocity
pairs go through a closed-form threshold-crossing deriver, and multi-segment
actors (braking ego, lane-changing overtaker, crossing pedestrian) carry
hand-solved phase boundaries.  Every threshold crossing is checked to sit
clear of the frame grid and of the observation-noise budget, with rejection
resampling, so the geometric labeller reproduces the scripted intervals
exactly despite positional noise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from itertools import combinations
from typing import Callable, Optional

import numpy as np

from .labeling import (
    DEFAULT_THRESHOLDS,
    LANE_CENTERS,
    ROAD_MAX,
    ROAD_MIN,
    RuleThresholds,
)
from .scene import (
    ObjectNode,
    RelationshipEdge,
    RelationshipInterval,
    Scene,
    SceneGraph,
)
from .taxonomy import ObjectClass, RelationshipType

NOISE_CLIP_SIGMA = 2.0   # positional noise is clipped at this many sigmas
VEL_EPS = 1e-6           # float guard for exact (velocity/heading) thresholds

R = RelationshipType
C = ObjectClass


class MarginError(RuntimeError):
    """A drawn configuration violates the label-margin guarantees; redraw."""


class InfeasibleConfigError(ValueError):
    """The generator config cannot produce the requested scenarios."""


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

DEFAULT_WEIGHTS = {
    "following": 0.26,
    "approaching": 0.20,
    "crossing": 0.18,
    "group": 0.14,
    "passing_by": 0.12,
    "overtaking": 0.10,
}


@dataclass
class GenConfig:
    n_scenes: int = 100
    duration_s: float = 20.0
    hz: float = 2.0
    n_vehicles: tuple[int, int] = (0, 3)
    n_humans: tuple[int, int] = (0, 3)
    n_obstacles: tuple[int, int] = (0, 4)
    n_signs: tuple[int, int] = (0, 1)
    scenario_weights: dict[str, float] = field(
        default_factory=lambda: dict(DEFAULT_WEIGHTS))
    noise_sigma: float = 0.1
    seed: int = 0

    def n_frames(self) -> int:
        return int(round(self.duration_s * self.hz))

    def validate(self) -> None:
        if self.n_scenes < 1:
            raise InfeasibleConfigError("n_scenes must be >= 1")
        if self.n_frames() < 2:
            raise InfeasibleConfigError("duration_s * hz must give at least 2 frames")
        for name in ("n_vehicles", "n_humans", "n_obstacles", "n_signs"):
            lo, hi = getattr(self, name)
            if lo < 0 or hi < lo:
                raise InfeasibleConfigError(f"{name} range invalid: {(lo, hi)}")
        unknown = set(self.scenario_weights) - set(DEFAULT_WEIGHTS)
        if unknown:
            raise InfeasibleConfigError(f"unknown scenario weights: {sorted(unknown)}")
        weights = [self.scenario_weights.get(k, 0.0) for k in DEFAULT_WEIGHTS]
        if any(w < 0 for w in weights):
            raise InfeasibleConfigError("scenario weights must be nonnegative")
        if not any(w > 0 for w in weights) and self._any_objects():
            raise InfeasibleConfigError("scenario weights must not all be zero")
        if self.noise_sigma < 0:
            raise InfeasibleConfigError("noise_sigma must be nonnegative")

    def _any_objects(self) -> bool:
        return any(getattr(self, n)[1] > 0
                   for n in ("n_vehicles", "n_humans", "n_obstacles", "n_signs"))


# ---------------------------------------------------------------------------
# trajectories
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Segment:
    """Constant-acceleration motion from t0 until the next segment starts."""

    t0: float
    x0: float
    y0: float
    vx: float
    vy: float
    ax: float = 0.0
    ay: float = 0.0

    def state(self, t: float) -> tuple[float, float, float, float]:
        dt = t - self.t0
        x = self.x0 + self.vx * dt + 0.5 * self.ax * dt * dt
        y = self.y0 + self.vy * dt + 0.5 * self.ay * dt * dt
        return x, y, self.vx + self.ax * dt, self.vy + self.ay * dt


@dataclass
class MovingObject:
    obj_id: int
    obj_class: ObjectClass
    yaw: float
    segments: list[Segment]
    group_id: Optional[int] = None
    noisy: bool = True  # ego and static furniture are observed exactly

    def segment_at(self, t: float) -> Segment:
        current = self.segments[0]
        for seg in self.segments[1:]:
            if t >= seg.t0 - 1e-12:
                current = seg
            else:
                break
        return current

    def state_at(self, t: float) -> tuple[float, float, float, float, float, float]:
        seg = self.segment_at(t)
        x, y, vx, vy = seg.state(t)
        return x, y, vx, vy, seg.ax, seg.ay

    def is_linear(self) -> bool:
        return (len(self.segments) == 1
                and self.segments[0].ax == 0.0 and self.segments[0].ay == 0.0)


def _cruise(obj_id: int, obj_class: ObjectClass, x: float, y: float,
            vx: float, vy: float = 0.0, yaw: float = 0.0,
            noisy: bool = True, group_id: Optional[int] = None) -> MovingObject:
    return MovingObject(obj_id, obj_class, yaw,
                        [Segment(0.0, x, y, vx, vy)], group_id, noisy)


def _static(obj_id: int, obj_class: ObjectClass, x: float, y: float,
            noisy: bool = False, group_id: Optional[int] = None) -> MovingObject:
    return _cruise(obj_id, obj_class, x, y, 0.0, 0.0, 0.0, noisy, group_id)


# ---------------------------------------------------------------------------
# frame/claim bookkeeping with margin checks
# ---------------------------------------------------------------------------

Range = tuple[float, float]


def _intersect(a: list[Range], b: list[Range]) -> list[Range]:
    out: list[Range] = []
    i = j = 0
    while i < len(a) and j < len(b):
        lo = max(a[i][0], b[j][0])
        hi = min(a[i][1], b[j][1])
        if lo < hi:
            out.append((lo, hi))
        if a[i][1] < b[j][1]:
            i += 1
        else:
            j += 1
    return out


class FrameGrid:
    """Frame sampling plus the crossing-clearance checks every claim needs."""

    def __init__(self, n_frames: int, hz: float):
        self.n_frames = n_frames
        self.hz = hz
        self.t_end = (n_frames - 1) / hz

    def times(self) -> list[float]:
        return [f / self.hz for f in range(self.n_frames)]

    def check_crossing(self, t: float, rate: float, budget: float) -> None:
        """A predicate flips at time t.  The nearest sampled frame must sit
        far enough away that clipped observation noise cannot flip it back."""
        nearest = min(max(round(t * self.hz), 0), self.n_frames - 1)
        clearance = abs(t - nearest / self.hz)
        if clearance * self.hz < 0.08:
            raise MarginError(f"crossing at t={t:.4f}s sits on the frame grid")
        if abs(rate) * clearance < budget * 1.05:
            raise MarginError(
                f"crossing at t={t:.4f}s too shallow: rate={rate:.3f}, budget={budget:.3f}")

    def check_const(self, value: float, bound: float, budget: float) -> None:
        if abs(value - bound) < max(budget * 1.05, VEL_EPS):
            raise MarginError(f"constant value {value:.4f} too close to bound {bound:.4f}")

    def frames_in(self, lo: float, hi: float) -> tuple[int, int]:
        """Half-open frame range [start, end) covered by the time window."""
        start = 0 if lo <= 0 else int(math.floor(lo * self.hz)) + 1
        end = self.n_frames if hi >= self.t_end else int(math.ceil(hi * self.hz))
        return max(start, 0), min(end, self.n_frames)

    def window_claim(self, subj: int, obj: int, rel: RelationshipType,
                     t_on: float, t_off: float) -> Optional[RelationshipInterval]:
        start, end = self.frames_in(t_on, t_off)
        if start >= end:
            return None
        return RelationshipInterval(subj, obj, rel,
                                    float(start), float(start), float(end), float(end))


def _pair_budget(a: MovingObject, b: MovingObject, sigma: float) -> float:
    clip = NOISE_CLIP_SIGMA * sigma
    return clip * (int(a.noisy) + int(b.noisy)) * 1.1 + 0.02


# ---------------------------------------------------------------------------
# closed-form claim derivation for constant-velocity pairs
# ---------------------------------------------------------------------------


class _LinearPair:
    """Relative geometry of two constant-velocity objects, in closed form."""

    def __init__(self, a: MovingObject, b: MovingObject, grid: FrameGrid,
                 th: RuleThresholds, budget: float):
        assert a.is_linear() and b.is_linear()
        self.a, self.b, self.grid, self.th, self.budget = a, b, grid, th, budget
        sa, sb = a.segments[0], b.segments[0]
        self.px = sb.x0 - sa.x0
        self.py = sb.y0 - sa.y0
        self.vx = sb.vx - sa.vx
        self.vy = sb.vy - sa.vy
        self.speed_a = math.hypot(sa.vx, sa.vy)
        self.speed_b = math.hypot(sb.vx, sb.vy)

    # --- scalar linear quantities -----------------------------------------
    def rel_long_from(self, p: MovingObject) -> tuple[float, float]:
        """(value at t=0, slope) of the other object's longitudinal offset."""
        sign = 1.0 if p is self.a else -1.0
        cos, sin = math.cos(p.yaw), math.sin(p.yaw)
        return (sign * (self.px * cos + self.py * sin),
                sign * (self.vx * cos + self.vy * sin))

    def rel_lat_from(self, p: MovingObject) -> tuple[float, float]:
        sign = 1.0 if p is self.a else -1.0
        cos, sin = math.cos(p.yaw), math.sin(p.yaw)
        return (sign * (-self.px * sin + self.py * cos),
                sign * (-self.vx * sin + self.vy * cos))

    def long_at(self, t: float) -> float:
        v0, slope = self.rel_long_from(self.a)
        return v0 + slope * t

    # --- range builders with margin checks --------------------------------
    def linear_between(self, value0: float, slope: float, lo: float, hi: float,
                       budget: Optional[float] = None) -> list[Range]:
        grid, T = self.grid, self.grid.t_end
        budget = self.budget if budget is None else budget
        if abs(slope) < 1e-12:
            if lo < value0 < hi:
                grid.check_const(value0, lo, budget)
                grid.check_const(value0, hi, budget)
                return [(0.0, T)]
            grid.check_const(value0, lo, budget)
            grid.check_const(value0, hi, budget)
            return []
        t1, t2 = sorted(((lo - value0) / slope, (hi - value0) / slope))
        for t in (t1, t2):
            grid.check_crossing(t, slope, budget)
        lo_t, hi_t = max(t1, 0.0), min(t2, T)
        return [(lo_t, hi_t)] if lo_t < hi_t else []

    def dist_lt(self, radius: float) -> list[Range]:
        grid, T = self.grid, self.grid.t_end
        pp = self.px ** 2 + self.py ** 2
        pv = self.px * self.vx + self.py * self.vy
        vv = self.vx ** 2 + self.vy ** 2
        if vv < 1e-12:
            dist = math.sqrt(pp)
            grid.check_const(dist, radius, self.budget)
            return [(0.0, T)] if dist < radius else []
        # dist^2(t) = vv t^2 + 2 pv t + pp
        disc = pv * pv - vv * (pp - radius * radius)
        t_min = -pv / vv
        if disc <= 0:
            if 0.0 <= t_min <= T:
                min_dist = math.sqrt(max(pp - pv * pv / vv, 0.0))
                grid.check_const(min_dist, radius, self.budget)
            return []
        t1 = (-pv - math.sqrt(disc)) / vv
        t2 = (-pv + math.sqrt(disc)) / vv
        for t in (t1, t2):
            rate = abs(pv + vv * t) / radius
            grid.check_crossing(t, rate, self.budget)
        lo_t, hi_t = max(t1, 0.0), min(t2, T)
        return [(lo_t, hi_t)] if lo_t < hi_t else []

    def closing_value(self, t: float) -> float:
        dx, dy = self.px + self.vx * t, self.py + self.vy * t
        dist = math.hypot(dx, dy)
        if dist < 1e-9:
            return 0.0
        return -(dx * self.vx + dy * self.vy) / dist

    def closing_gt(self, thr: float) -> list[Range]:
        grid, T = self.grid, self.grid.t_end
        pp = self.px ** 2 + self.py ** 2
        pv = self.px * self.vx + self.py * self.vy
        vv = self.vx ** 2 + self.vy ** 2
        if vv < 1e-12:
            return []  # relatively static: closing speed is zero
        # need L(t) = -(pv + vv t) > 0 and L^2 > thr^2 dist^2
        approach: list[Range] = []
        t_turn = -pv / vv
        if t_turn > 0:
            approach = [(0.0, min(t_turn, T))] if min(t_turn, T) > 0 else []
        if not approach:
            return []
        qa = vv * (vv - thr * thr)
        qb = 2 * pv * (vv - thr * thr)
        qc = pv * pv - thr * thr * pp
        roots: list[float] = []
        if abs(qa) > 1e-12:
            disc_q = qb * qb - 4 * qa * qc
            if disc_q >= 0:
                root = math.sqrt(disc_q)
                roots = sorted(((-qb - root) / (2 * qa), (-qb + root) / (2 * qa)))
        elif abs(qb) > 1e-12:
            roots = [-qc / qb]
        ranges: list[Range] = []
        probe = sorted(set([0.0, T] + [t for t in roots if 0.0 < t < T]))
        segments = list(zip(probe, probe[1:])) or [(0.0, T)]
        for lo, hi in segments:
            mid = (lo + hi) / 2
            if self.closing_value(mid) > thr:
                ranges.append((lo, hi))
        merged: list[Range] = []
        for lo, hi in ranges:
            if merged and abs(merged[-1][1] - lo) < 1e-12:
                merged[-1] = (merged[-1][0], hi)
            else:
                merged.append((lo, hi))
        dt = 1e-4
        for t in roots:
            if -1.0 < t < T + 1.0:
                rate = abs(self.closing_value(t + dt) - self.closing_value(t - dt)) / (2 * dt)
                dx, dy = self.px + self.vx * t, self.py + self.vy * t
                dist = max(math.hypot(dx, dy), 1e-6)
                sensitivity = 2.0 * math.sqrt(vv) / dist
                grid.check_crossing(t, rate, self.budget * sensitivity)
        return _intersect(merged, approach)

    def y_ranges(self, obj: MovingObject, lo: float, hi: float) -> list[Range]:
        seg = obj.segments[0]
        budget = (NOISE_CLIP_SIGMA * 0.1 * 1.1 + 0.02) if obj.noisy else 0.02
        return self.linear_between(seg.y0, seg.vy, lo, hi, budget)


def _frames_from_ranges(ranges: list[Range], grid: FrameGrid) -> set[int]:
    frames: set[int] = set()
    for lo, hi in ranges:
        start, end = grid.frames_in(lo, hi)
        frames.update(range(start, end))
    return frames


def _runs(frames: set[int]) -> list[tuple[int, int]]:
    if not frames:
        return []
    ordered = sorted(frames)
    runs = []
    start = prev = ordered[0]
    for f in ordered[1:]:
        if f == prev + 1:
            prev = f
            continue
        runs.append((start, prev + 1))
        start = prev = f
    runs.append((start, prev + 1))
    return runs


Label = tuple[RelationshipType, int, int]


def _labels_to_intervals(labels: list[Optional[Label]]) -> list[RelationshipInterval]:
    out: list[RelationshipInterval] = []
    f, n = 0, len(labels)
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
    return out


def derive_linear_pair(a: MovingObject, b: MovingObject, grid: FrameGrid,
                       th: RuleThresholds, sigma: float) -> list[RelationshipInterval]:
    """Analytic relationship claims for a constant-velocity pair.

    Mirrors the labeller's rule set and priorities, but from closed-form
    crossing times on the true (noise-free) trajectories, raising MarginError
    whenever a crossing sits too close to a sampled frame for the noise clip.
    """
    first, second = sorted((a, b), key=lambda o: o.obj_id)
    pair = _LinearPair(first, second, grid, th, _pair_budget(a, b, sigma))
    ca, cb = first.obj_class, second.obj_class
    ordered_rules: list[tuple[set[int], Label]] = []

    def add(frames: set[int], rel: RelationshipType, subj: MovingObject,
            obj: MovingObject) -> None:
        if frames:
            ordered_rules.append((frames, (rel, subj.obj_id, obj.obj_id)))

    def group_frames(rel: RelationshipType) -> None:
        grid_ = pair.grid
        grid_.check_const(abs(pair.speed_a - pair.speed_b), th.group_speed, VEL_EPS)
        grid_.check_const(_heading_delta(first, second), th.heading_tol_rad, VEL_EPS)
        if (abs(pair.speed_a - pair.speed_b) >= th.group_speed
                or _heading_delta(first, second) >= th.heading_tol_rad):
            return
        frames = _frames_from_ranges(pair.dist_lt(th.group_dist), grid_)
        kept: set[int] = set()
        for start, end in _runs(frames):
            if end - start >= th.group_min_frames:
                kept.update(range(start, end))
        add(kept, rel, first, second)

    def band_frames() -> None:
        lat0, lat_slope = pair.rel_lat_from(first)
        lat_ranges = pair.linear_between(lat0, lat_slope, th.band_min, th.band_max)
        lat_ranges += pair.linear_between(lat0, lat_slope, -th.band_max, -th.band_min)
        lat_ranges.sort()
        long0, long_slope = pair.rel_long_from(first)
        window = pair.linear_between(long0, long_slope, -th.pass_window, th.pass_window)
        frames = _frames_from_ranges(_intersect(lat_ranges, window), pair.grid)
        for start, end in _runs(frames):
            t_first, t_last = start / grid.hz, (end - 1) / grid.hz
            l_first, l_last = pair.long_at(t_first), pair.long_at(t_last)
            pair.grid.check_const(l_first, 0.0, pair.budget)
            pair.grid.check_const(l_last, 0.0, pair.budget)
            if not (l_first > 0) ^ (l_last > 0):
                continue
            rear, front = (first, second) if l_first > 0 else (second, first)
            if C.OBSTACLE in (ca, cb):
                vehicle = rear if rear.obj_class is C.VEHICLE else front
                obstacle = second if vehicle is first else first
                label = (R.VEHICLE_PASSING_OBSTACLE, vehicle.obj_id, obstacle.obj_id)
            else:
                rear_speed = pair.speed_a if rear is first else pair.speed_b
                front_speed = pair.speed_b if rear is first else pair.speed_a
                aligned = _heading_delta(rear, front) < th.heading_tol_rad
                if front_speed >= th.min_moving_speed:
                    pair.grid.check_const(rear_speed, th.overtake_ratio * front_speed, VEL_EPS)
                if (aligned and front_speed >= th.min_moving_speed
                        and rear_speed >= th.overtake_ratio * front_speed):
                    label = (R.OVERTAKING, rear.obj_id, front.obj_id)
                else:
                    label = (R.PASSING_BY, rear.obj_id, front.obj_id)
            ordered_rules.append((set(range(start, end)), label))

    def following_frames(rear: MovingObject, front: MovingObject) -> None:
        if _heading_delta(rear, front) >= th.heading_tol_rad:
            return
        front_speed = pair.speed_a if front is first else pair.speed_b
        rear_speed = pair.speed_b if front is first else pair.speed_a
        if front_speed < th.min_moving_speed:
            return
        ratio = rear_speed / front_speed
        pair.grid.check_const(ratio, th.follow_ratio_lo, VEL_EPS)
        pair.grid.check_const(ratio, th.follow_ratio_hi, VEL_EPS)
        if not th.follow_ratio_lo <= ratio <= th.follow_ratio_hi:
            return
        gap0, gap_slope = pair.rel_long_from(rear)
        gaps = pair.linear_between(gap0, gap_slope, 0.0, th.follow_gap)
        lat0, lat_slope = pair.rel_lat_from(rear)
        lats = pair.linear_between(lat0, lat_slope, -th.lane_tol, th.lane_tol)
        add(_frames_from_ranges(_intersect(gaps, lats), pair.grid),
            R.FOLLOWING, rear, front)

    def waiting_frames(waiter: MovingObject, mover: MovingObject,
                       rel: RelationshipType) -> None:
        waiter_speed = pair.speed_a if waiter is first else pair.speed_b
        mover_vy = mover.segments[0].vy
        pair.grid.check_const(waiter_speed, th.stop_speed, VEL_EPS)
        pair.grid.check_const(abs(mover_vy), th.crossing_speed, VEL_EPS)
        if waiter_speed >= th.stop_speed or abs(mover_vy) <= th.crossing_speed:
            return
        long0, long_slope = pair.rel_long_from(waiter)
        ahead = pair.linear_between(long0, long_slope, 0.0, th.wfc_dist)
        road = pair.y_ranges(mover, ROAD_MIN, ROAD_MAX)
        add(_frames_from_ranges(_intersect(ahead, road), pair.grid),
            rel, mover, waiter)

    def approaching_frames() -> None:
        frames = _frames_from_ranges(
            _intersect(pair.closing_gt(th.approach_closing),
                       pair.dist_lt(th.approach_dist)), pair.grid)
        add(frames, R.APPROACHING, first, second)

    def same_lane_frames() -> None:
        if _heading_delta(first, second) >= th.heading_tol_rad:
            return
        lat0, lat_slope = pair.rel_lat_from(first)
        lats = pair.linear_between(lat0, lat_slope, -th.lane_tol, th.lane_tol)
        long0, long_slope = pair.rel_long_from(first)
        fore = pair.linear_between(long0, long_slope, 0.0, th.same_lane_gap)
        rear = pair.linear_between(long0, long_slope, -th.same_lane_gap, 0.0)
        frames = _frames_from_ranges(_intersect(lats, sorted(fore + rear)), pair.grid)
        add(frames, R.SAME_LANE, first, second)

    def behind_frames(subject: MovingObject, obj: MovingObject,
                      rel: RelationshipType) -> None:
        long0, long_slope = pair.rel_long_from(obj)
        gaps = pair.linear_between(long0, long_slope, -th.behind_gap, 0.0)
        lat0, lat_slope = pair.rel_lat_from(obj)
        lats = pair.linear_between(lat0, lat_slope, -th.behind_lat, th.behind_lat)
        add(_frames_from_ranges(_intersect(gaps, lats), pair.grid), rel, subject, obj)

    if (ca, cb) == (C.VEHICLE, C.VEHICLE):
        group_frames(R.VEHICLE_GROUP)
        band_frames()
        following_frames(first, second)
        following_frames(second, first)
        waiting_frames(first, second, R.VEHICLE_WAITING_TO_CROSS)
        waiting_frames(second, first, R.VEHICLE_WAITING_TO_CROSS)
        approaching_frames()
        same_lane_frames()
    elif {ca, cb} == {C.HUMAN, C.VEHICLE}:
        h, v = (first, second) if ca is C.HUMAN else (second, first)
        waiting_frames(v, h, R.HUMAN_WAITING_TO_CROSS)
        # on-lane: human inside the strip of the vehicle's (constant) lane
        lane = min(LANE_CENTERS, key=lambda c_: abs(v.segments[0].y0 - c_))
        strip = pair.y_ranges(h, lane - th.strip_tol, lane + th.strip_tol)
        long0, long_slope = pair.rel_long_from(v)
        ahead = pair.linear_between(long0, long_slope, 0.0, th.onlane_dist)
        add(_frames_from_ranges(_intersect(strip, ahead), pair.grid),
            R.HUMAN_ON_LANE, h, v)
        hseg = h.segments[0]
        pair.grid.check_const(abs(hseg.vy), th.crossing_speed, VEL_EPS)
        toward: list[Range] = []
        if hseg.vy > th.crossing_speed:
            toward = pair.y_ranges(h, -1e9, ROAD_MIN)
        elif hseg.vy < -th.crossing_speed:
            toward = pair.y_ranges(h, ROAD_MAX, 1e9)
        add(_frames_from_ranges(_intersect(toward, ahead), pair.grid),
            R.HUMAN_MAY_INTERSECT, h, v)
        behind_frames(h, v, R.HUMAN_BEHIND_VEHICLE)
    elif (ca, cb) == (C.HUMAN, C.HUMAN):
        group_frames(R.HUMAN_GROUP)
    elif (ca, cb) == (C.OBSTACLE, C.OBSTACLE):
        group_frames(R.OBSTACLE_GROUP)
    elif {ca, cb} == {C.HUMAN, C.OBSTACLE}:
        h, o = (first, second) if ca is C.HUMAN else (second, first)
        behind_frames(h, o, R.HUMAN_BEHIND_OBSTACLE)
    elif {ca, cb} == {C.HUMAN, C.TRAFFIC_SIGN}:
        h, s = (first, second) if ca is C.HUMAN else (second, first)
        pair.grid.check_const(math.hypot(h.segments[0].vx, h.segments[0].vy),
                              th.waiting_sign_speed, VEL_EPS)
        if math.hypot(h.segments[0].vx, h.segments[0].vy) < th.waiting_sign_speed:
            add(_frames_from_ranges(pair.dist_lt(th.waiting_sign_dist), pair.grid),
                R.HUMAN_WAITING_AT_SIGN, h, s)
        else:
            pair.dist_lt(th.waiting_sign_dist)  # margin check only
    elif {ca, cb} == {C.VEHICLE, C.OBSTACLE}:
        v, o = (first, second) if ca is C.VEHICLE else (second, first)
        vseg = v.segments[0]
        pair.grid.check_const(abs(vseg.vy), th.avoid_lateral_speed, VEL_EPS)
        if abs(vseg.vy) > th.avoid_lateral_speed:
            long0, long_slope = pair.rel_long_from(v)
            ahead = pair.linear_between(long0, long_slope, 0.0, th.avoid_dist)
            lat0, lat_slope = pair.rel_lat_from(v)
            lats = pair.linear_between(lat0, lat_slope, -th.band_max, th.band_max)
            add(_frames_from_ranges(_intersect(ahead, lats), pair.grid),
                R.VEHICLE_AVOIDING_OBSTACLE, v, o)
        band_frames()
    elif {ca, cb} == {C.VEHICLE, C.TRAFFIC_SIGN}:
        v, s = (first, second) if ca is C.VEHICLE else (second, first)
        vseg = v.segments[0]
        lane = min(LANE_CENTERS, key=lambda c_: abs(vseg.y0 - c_))
        on_strip = pair.y_ranges(v, lane - th.strip_tol, lane + th.strip_tol)
        lat0, lat_slope = pair.rel_lat_from(v)
        near = pair.linear_between(lat0, lat_slope, -th.sign_lat_max, th.sign_lat_max)
        speed = math.hypot(vseg.vx, vseg.vy)
        pair.grid.check_const(speed, th.stop_speed, VEL_EPS)
        if speed < th.stop_speed:  # linear vehicles never decelerate: no "reacting"
            long0, long_slope = pair.rel_long_from(v)
            stop = pair.linear_between(long0, long_slope, 0.0, th.stop_sign_dist)
            wait = pair.linear_between(long0, long_slope,
                                       th.stop_sign_dist, th.wait_sign_dist)
            base = _intersect(on_strip, near)
            add(_frames_from_ranges(_intersect(base, stop), pair.grid),
                R.VEHICLE_STOPPED_AT_SIGN, v, s)
            add(_frames_from_ranges(_intersect(base, wait), pair.grid),
                R.VEHICLE_WAITING_AT_SIGN, v, s)
    elif {ca, cb} == {C.OBSTACLE, C.TRAFFIC_SIGN}:
        o, s = (first, second) if ca is C.OBSTACLE else (second, first)
        behind_frames(o, s, R.OBSTACLE_BEHIND_SIGN)

    labels: list[Optional[Label]] = [None] * grid.n_frames
    for frames, label in ordered_rules:
        for f in frames:
            if labels[f] is None:
                labels[f] = label
    return _labels_to_intervals(labels)


def _heading_delta(a: MovingObject, b: MovingObject) -> float:
    d = abs(a.yaw - b.yaw) % (2 * math.pi)
    return min(d, 2 * math.pi - d)


# ---------------------------------------------------------------------------
# scenario templates
# ---------------------------------------------------------------------------


@dataclass
class _Draft:
    objects: list[MovingObject]
    bespoke: dict[frozenset, list[RelationshipInterval]] = field(default_factory=dict)
    allow_ambient: bool = False
    prop_keepout_x: list[tuple[float, float]] = field(default_factory=list)


def _caps(cfg: GenConfig) -> dict[ObjectClass, int]:
    return {
        C.VEHICLE: cfg.n_vehicles[1],
        C.HUMAN: cfg.n_humans[1],
        C.OBSTACLE: cfg.n_obstacles[1],
        C.TRAFFIC_SIGN: cfg.n_signs[1],
    }


def _claim(subj: int, obj: int, rel: RelationshipType, grid: FrameGrid,
           t_on: float, t_off: float) -> list[RelationshipInterval]:
    made = grid.window_claim(subj, obj, rel, t_on, t_off)
    return [made] if made else []


def _template_following(rng, grid: FrameGrid, th: RuleThresholds, cfg: GenConfig,
                        caps: dict) -> _Draft:
    v0 = rng.uniform(8.0, 14.0)
    ego = _cruise(0, C.VEHICLE, 0.0, 0.0, v0, noisy=False)
    objects = [ego]
    with_follower = caps[C.VEHICLE] >= 2 and rng.random() < 0.5
    if with_follower:
        gap_a = rng.uniform(13.5, 17.5)
        gap_b = rng.uniform(13.5, 17.5)
        objects.append(_cruise(1, C.VEHICLE, gap_a, 0.0, v0))
        objects.append(_cruise(2, C.VEHICLE, -gap_b, 0.0, v0))
    else:
        objects.append(_cruise(1, C.VEHICLE, rng.uniform(8.0, 18.0), 0.0, v0))
    return _Draft(objects, allow_ambient=True)


def _template_group(rng, grid: FrameGrid, th: RuleThresholds, cfg: GenConfig,
                    caps: dict) -> _Draft:
    v0 = rng.uniform(8.0, 14.0)
    ego = _cruise(0, C.VEHICLE, 0.0, 0.0, v0, noisy=False)
    objects = [ego]
    variants = []
    if caps[C.HUMAN] >= 2:
        variants.append("walkers")
    if caps[C.VEHICLE] >= 2 and caps[C.HUMAN] >= 1:
        variants.append("parked")
    if caps[C.VEHICLE] >= 3:
        variants.append("convoy")
    if caps[C.OBSTACLE] >= 2:
        variants.append("cones")
    if not variants:
        raise InfeasibleConfigError("group scenario needs two same-class objects")
    variant = variants[int(rng.integers(0, len(variants)))]
    next_id = 1
    base_x = v0 * rng.uniform(4.0, 10.0)

    if variant == "walkers":
        m = min(2 + int(rng.integers(0, 2)), caps[C.HUMAN])
        offsets = [(0.0, 0.0), (1.9, -0.5), (0.7, -1.1)][:m]
        gid = next_id if rng.random() < 0.5 else None
        for dx, dy in offsets:
            objects.append(_cruise(next_id, C.HUMAN, base_x + dx, -2.8 + dy, 1.3,
                                   noisy=True, group_id=gid))
            next_id += 1
    elif variant == "parked":
        parked = _static(next_id, C.VEHICLE, base_x, -2.7, noisy=True)
        objects.append(parked)
        next_id += 1
        m = min(1 + int(rng.integers(0, 2)), caps[C.HUMAN])
        hx = base_x - rng.uniform(2.5, 4.5)
        for k in range(m):
            objects.append(_static(next_id, C.HUMAN, hx - k * rng.uniform(1.6, 3.0),
                                   -3.1, noisy=True))
            next_id += 1
    elif variant == "convoy":
        spacing = rng.uniform(3.0, 3.5)
        lead_gap = rng.uniform(8.0, 20.0)
        gid = next_id if rng.random() < 0.5 else None
        objects.append(_cruise(next_id, C.VEHICLE, lead_gap, 3.5, v0, group_id=gid))
        next_id += 1
        objects.append(_cruise(next_id, C.VEHICLE, lead_gap - spacing, 3.5, v0,
                               group_id=gid))
        next_id += 1
    else:  # cones
        k = min(2 + int(rng.integers(0, 3)), caps[C.OBSTACLE])
        spacing = 2.3
        gid = next_id if rng.random() < 0.5 else None
        for i in range(k):
            objects.append(_static(next_id, C.OBSTACLE, base_x + i * spacing, -2.9,
                                   group_id=gid))
            next_id += 1
        if caps[C.TRAFFIC_SIGN] >= 1 and rng.random() < 0.6:
            objects.append(_static(next_id, C.TRAFFIC_SIGN,
                                   base_x + (k - 1) * spacing + rng.uniform(6.0, 9.0),
                                   -2.9))
            next_id += 1
        if caps[C.HUMAN] >= 1 and rng.random() < 0.5:
            objects.append(_static(next_id, C.HUMAN, base_x - rng.uniform(2.2, 4.0),
                                   -2.9, noisy=True))
            next_id += 1
    return _Draft(objects, allow_ambient=True)


def _template_passing_by(rng, grid: FrameGrid, th: RuleThresholds, cfg: GenConfig,
                         caps: dict) -> _Draft:
    if caps[C.OBSTACLE] >= 1 and caps[C.VEHICLE] >= 2 and rng.random() < 0.45:
        return _avoid_variant(rng, grid, th, cfg)
    v0 = rng.uniform(8.0, 11.0)
    ego = _cruise(0, C.VEHICLE, 0.0, 0.0, v0, noisy=False)
    oncoming = _cruise(1, C.VEHICLE, rng.uniform(65.0, 95.0), 3.5, -rng.uniform(8.0, 11.0),
                       yaw=math.pi)
    return _Draft([ego, oncoming], allow_ambient=True)


def _lane_change_segments(x0: float, vx: float, y_from: float, y_to: float,
                          t_start: float, vy_c: float = 2.8,
                          ramp_s: float = 0.5) -> list[Segment]:
    """Trapezoidal lateral velocity profile covering |y_to - y_from| metres."""
    sign = 1.0 if y_to > y_from else -1.0
    accel = vy_c / ramp_s
    ramp_dy = 0.5 * vy_c * ramp_s
    cruise_dy = abs(y_to - y_from) - 2 * ramp_dy
    cruise_s = cruise_dy / vy_c
    t1 = t_start + ramp_s
    t2 = t1 + cruise_s
    t3 = t2 + ramp_s

    def x_at(t):
        return x0 + vx * t

    segs = [
        Segment(t_start, x_at(t_start), y_from, vx, 0.0, 0.0, sign * accel),
        Segment(t1, x_at(t1), y_from + sign * ramp_dy, vx, sign * vy_c),
        Segment(t2, x_at(t2), y_to - sign * ramp_dy, vx, sign * vy_c, 0.0, -sign * accel),
        Segment(t3, x_at(t3), y_to, vx, 0.0),
    ]
    return segs


def _lat_cross_time(t_start: float, y_from: float, y_to: float, y_cross: float,
                    vy_c: float = 2.8, ramp_s: float = 0.5) -> float:
    """Time the trapezoidal profile crosses y_cross (must fall in the cruise)."""
    sign = 1.0 if y_to > y_from else -1.0
    ramp_dy = 0.5 * vy_c * ramp_s
    covered = (y_cross - y_from) * sign
    if not ramp_dy <= covered <= abs(y_to - y_from) - ramp_dy:
        raise MarginError("lateral crossing outside the constant-rate phase")
    return t_start + ramp_s + (covered - ramp_dy) / vy_c


def _template_overtaking(rng, grid: FrameGrid, th: RuleThresholds, cfg: GenConfig,
                         caps: dict) -> _Draft:
    v0 = rng.uniform(8.0, 10.0)
    ratio = rng.uniform(max(1.3, 1.0 + 2.8 / v0), 1.45)
    vb = v0 * ratio
    dv = vb - v0
    d0 = rng.uniform(30.5, 34.0)
    g_out = rng.uniform(11.0, 13.0)
    g_in = rng.uniform(10.0, 12.0)

    ego = _cruise(0, C.VEHICLE, 0.0, 0.0, v0, noisy=False)
    t_out = (d0 - g_out) / dv
    t_in = (d0 + g_in) / dv
    if t_in < t_out + 2.0:
        raise MarginError("lane changes overlap")
    segs = [Segment(0.0, -d0, 0.0, vb, 0.0)]
    segs += _lane_change_segments(-d0, vb, 0.0, 3.5, t_out)[0:]
    segs += _lane_change_segments(-d0, vb, 3.5, 0.0, t_in)
    overtaker = MovingObject(1, C.VEHICLE, 0.0, segs)

    budget = _pair_budget(ego, overtaker, cfg.noise_sigma)
    t_app = (d0 - 30.0) / dv
    t_c1 = _lat_cross_time(t_out, 0.0, 3.5, th.band_min)
    t_c2 = _lat_cross_time(t_in, 3.5, 0.0, th.band_min)
    t_50out = (d0 + th.same_lane_gap) / dv
    grid.check_crossing(t_app, dv, budget)
    grid.check_crossing(t_c1, 2.8, budget)
    grid.check_crossing(t_c2, 2.8, budget)
    grid.check_crossing(t_50out, dv, budget)
    long_at_c2 = -d0 + dv * t_c2
    if long_at_c2 > th.pass_window - 0.6 or t_c2 > grid.t_end - 0.75:
        raise MarginError("overtake finishes too late")

    claims = (_claim(0, 1, R.SAME_LANE, grid, 0.0, t_app)
              + _claim(0, 1, R.APPROACHING, grid, t_app, t_c1)
              + _claim(1, 0, R.OVERTAKING, grid, t_c1, t_c2)
              + _claim(0, 1, R.SAME_LANE, grid, t_c2, t_50out))
    return _Draft([ego, overtaker], bespoke={frozenset((0, 1)): claims})


def _template_approaching(rng, grid: FrameGrid, th: RuleThresholds, cfg: GenConfig,
                          caps: dict) -> _Draft:
    va = rng.uniform(6.5, 9.0)
    dv = rng.uniform(3.8, min(5.2, 14.0 - va))
    v0 = va + dv
    d0 = rng.uniform(52.0, 56.0)
    g_br = rng.uniform(13.0, 15.0)
    g_f = rng.uniform(9.0, 11.0)
    a_dec = dv * dv / (2.0 * (g_br - g_f))
    t_br = (d0 - g_br) / dv
    t_match = t_br + dv / a_dec
    x_br = v0 * t_br
    x_match = x_br + v0 * (t_match - t_br) - 0.5 * a_dec * (t_match - t_br) ** 2
    ego = MovingObject(0, C.VEHICLE, 0.0, [
        Segment(0.0, 0.0, 0.0, v0, 0.0),
        Segment(t_br, x_br, 0.0, v0, 0.0, -a_dec, 0.0),
        Segment(t_match, x_match, 0.0, va, 0.0),
    ], noisy=False)
    lead = _cruise(1, C.VEHICLE, d0, 0.0, va)

    budget = _pair_budget(ego, lead, cfg.noise_sigma)
    t50 = (d0 - th.same_lane_gap) / dv
    t30 = (d0 - th.approach_dist) / dv
    t12 = t_br + (v0 - th.follow_ratio_hi * va) / a_dec
    grid.check_crossing(t50, dv, budget)
    grid.check_crossing(t30, dv, budget)
    grid.check_crossing(t12, a_dec / va, 1e-9)
    grid.check_crossing(t_br, 1.0, 0.0)
    if 0.2 * va < th.approach_closing + 0.25:
        raise MarginError("closing speed too low at the following handoff")
    if not t50 < t30 < t_br < t12 < t_match < grid.t_end - 1.0:
        raise MarginError("approach phases out of order")

    claims = (_claim(0, 1, R.SAME_LANE, grid, t50, t30)
              + _claim(0, 1, R.APPROACHING, grid, t30, t12)
              + _claim(0, 1, R.FOLLOWING, grid, t12, 1e9))
    return _Draft([ego, lead], bespoke={frozenset((0, 1)): claims})


def _avoid_variant(rng, grid: FrameGrid, th: RuleThresholds, cfg: GenConfig) -> _Draft:
    v0 = rng.uniform(8.0, 8.8)
    gap_a = rng.uniform(14.0, 18.0)
    d_sw = rng.uniform(1.9 * v0, 19.4)
    t_sw = rng.uniform(3.0, 6.0)
    y_o = 1.15
    x_o = v0 * t_sw + gap_a + d_sw

    ego = _cruise(0, C.VEHICLE, 0.0, 0.0, v0, noisy=False)
    d_back = rng.uniform(8.0, 10.0)
    t_ret = t_sw + (d_sw + d_back) / v0
    segs = [Segment(0.0, gap_a, 0.0, v0, 0.0)]
    segs += _lane_change_segments(gap_a, v0, 0.0, 3.5, t_sw)
    segs += _lane_change_segments(gap_a, v0, 3.5, 0.0, t_ret)
    actor = MovingObject(1, C.VEHICLE, 0.0, segs)
    obstacle = _static(2, C.OBSTACLE, x_o, y_o)

    b_eo = _pair_budget(ego, actor, cfg.noise_sigma)
    b_ao = _pair_budget(actor, obstacle, cfg.noise_sigma)
    ramp_s, vy_c, accel = 0.5, 2.8, 5.6
    # actor-vs-ego: following pauses while the actor sits outside the lane strip
    t_lat1 = _lat_cross_time(t_sw, 0.0, 3.5, th.lane_tol)
    t_lat2 = _lat_cross_time(t_ret, 3.5, 0.0, th.lane_tol)
    grid.check_crossing(t_lat1, vy_c, b_eo)
    grid.check_crossing(t_lat2, vy_c, b_eo)
    max_return_closing = (3.5 * vy_c) / math.hypot(gap_a, 0.0)
    if max_return_closing > th.approach_closing - 0.15:
        raise MarginError("return swerve closes too fast on the ego")
    # actor-vs-obstacle: swerve (avoiding) then adjacent-band pass
    t_av0 = t_sw + th.avoid_lateral_speed / accel
    t_av1 = t_sw + 2 * ramp_s + (3.5 - 2 * 0.5 * vy_c * ramp_s) / vy_c \
        - th.avoid_lateral_speed / accel
    grid.check_crossing(t_av0, accel, 0.0)
    grid.check_crossing(t_av1, accel, 0.0)
    if t_sw + d_sw / v0 < t_av1 + 0.2:
        raise MarginError("actor reaches the obstacle before settling")
    t_b1 = _lat_cross_time(t_sw, 0.0, 3.5, y_o + th.band_min)
    t_b2 = _lat_cross_time(t_ret, 3.5, 0.0, y_o + th.band_min)
    grid.check_crossing(t_b1, vy_c, b_ao)
    grid.check_crossing(t_b2, vy_c, b_ao)
    t_w_in = t_sw + (d_sw - th.pass_window) / v0  # enters |long|<=25 before swerve
    if t_w_in > t_b1:
        raise MarginError("pass window opens after the band")
    if t_b2 > grid.t_end - 0.5:
        raise MarginError("avoid manoeuvre finishes too late")

    claims_eo = (_claim(0, 1, R.FOLLOWING, grid, 0.0, t_lat1)
                 + _claim(0, 1, R.FOLLOWING, grid, t_lat2, 1e9))
    claims_ao = (_claim(1, 2, R.VEHICLE_AVOIDING_OBSTACLE, grid, t_av0, t_av1)
                 + _claim(1, 2, R.VEHICLE_PASSING_OBSTACLE, grid, t_av1, t_b2))
    return _Draft([ego, actor, obstacle],
                  bespoke={frozenset((0, 1)): claims_eo, frozenset((1, 2)): claims_ao})


def _braking_ego(rng, v0: float, a_dec: float) -> tuple[MovingObject, float, float, float, float]:
    t_br = rng.uniform(4.0, 5.5)
    t_05 = t_br + (v0 - 0.5) / a_dec
    t_stop = t_br + v0 / a_dec
    x_br = v0 * t_br
    x_stop = x_br + v0 * v0 / (2.0 * a_dec)
    ego = MovingObject(0, C.VEHICLE, 0.0, [
        Segment(0.0, 0.0, 0.0, v0, 0.0),
        Segment(t_br, x_br, 0.0, v0, 0.0, -a_dec, 0.0),
        Segment(t_stop, x_stop, 0.0, 0.0, 0.0),
    ], noisy=False)
    return ego, t_br, t_05, t_stop, x_stop


def _template_crossing(rng, grid: FrameGrid, th: RuleThresholds, cfg: GenConfig,
                       caps: dict) -> _Draft:
    sign_variant = caps[C.TRAFFIC_SIGN] >= 1 and caps[C.HUMAN] >= 1
    vehicle_variant = caps[C.VEHICLE] >= 2
    if sign_variant and (not vehicle_variant or rng.random() < 0.65):
        return _crossing_sign_variant(rng, grid, th, cfg)
    if vehicle_variant:
        return _crossing_vehicle_variant(rng, grid, th, cfg)
    raise InfeasibleConfigError(
        "crossing scenario needs a sign plus a human, or two vehicles")


def _crossing_sign_variant(rng, grid: FrameGrid, th: RuleThresholds,
                           cfg: GenConfig) -> _Draft:
    v0 = rng.uniform(8.0, 8.6)
    a_dec = rng.uniform(2.45, 2.7)
    stop_close = rng.random() < 0.55
    d_stop = rng.uniform(2.8, 4.2) if stop_close else rng.uniform(6.2, 7.8)
    if v0 * v0 / (2 * a_dec) + d_stop > th.react_dist - 0.5:
        raise MarginError("brake distance exceeds the reaction window")
    ego, t_br, t_05, t_stop, x_stop = _braking_ego(rng, v0, a_dec)
    x_sign = x_stop + d_stop
    sign = _static(1, C.TRAFFIC_SIGN, x_sign, -2.8)

    vy = 1.9
    x_h = x_sign - 0.8
    t_c0 = t_stop + rng.uniform(0.8, 1.4)
    t_pause = t_c0 + 3.1 / vy
    t_res = t_pause + rng.uniform(0.9, 1.4)
    t_exit = t_res + ROAD_MAX / vy
    t_fin = t_res + 6.2 / vy
    human = MovingObject(2, C.HUMAN, math.pi / 2, [
        Segment(0.0, x_h, -3.1, 0.0, 0.0),
        Segment(t_c0, x_h, -3.1, 0.0, vy),
        Segment(t_pause, x_h, 0.0, 0.0, 0.0),
        Segment(t_res, x_h, 0.0, 0.0, vy),
        Segment(t_fin, x_h, 6.2, 0.0, 0.0),
    ])

    b_h = _pair_budget(ego, human, cfg.noise_sigma)
    for t in (t_br, t_05, t_c0, t_pause, t_res, t_fin):
        grid.check_crossing(t, 1.0, 0.0)
    t_edge = t_c0 + (ROAD_MIN + 3.1) / vy
    grid.check_crossing(t_edge, vy, b_h)
    grid.check_crossing(t_exit, vy, b_h)
    if t_exit > grid.t_end - 0.3:
        raise MarginError("crossing finishes too late")

    stop_rel = R.VEHICLE_STOPPED_AT_SIGN if stop_close else R.VEHICLE_WAITING_AT_SIGN
    claims_es = (_claim(0, 1, R.VEHICLE_REACTING_TO_SIGN, grid, t_br, t_05)
                 + _claim(0, 1, stop_rel, grid, t_05, 1e9))
    claims_eh = (_claim(2, 0, R.HUMAN_MAY_INTERSECT, grid, t_c0, t_edge)
                 + _claim(2, 0, R.HUMAN_WAITING_TO_CROSS, grid, t_edge, t_pause)
                 + _claim(2, 0, R.HUMAN_ON_LANE, grid, t_pause, t_res)
                 + _claim(2, 0, R.HUMAN_WAITING_TO_CROSS, grid, t_res, t_exit))
    claims_hs = (_claim(2, 1, R.HUMAN_WAITING_AT_SIGN, grid, 0.0, t_c0)
                 + _claim(2, 1, R.HUMAN_WAITING_AT_SIGN, grid, t_pause, t_res))
    return _Draft([ego, sign, human],
                  bespoke={frozenset((0, 1)): claims_es,
                           frozenset((0, 2)): claims_eh,
                           frozenset((1, 2)): claims_hs})


def _crossing_vehicle_variant(rng, grid: FrameGrid, th: RuleThresholds,
                              cfg: GenConfig) -> _Draft:
    v0 = rng.uniform(8.0, 8.6)
    a_dec = rng.uniform(2.45, 2.7)
    # keep the closing-speed handoff strictly before the road edge (see below)
    d_v = rng.uniform(7.9, 8.5)
    ego, t_br, t_05, t_stop, x_stop = _braking_ego(rng, v0, a_dec)
    x_c = x_stop + d_v
    vy = 4.5
    y_start = -34.0
    t_c0 = t_05 + rng.uniform(0.3, 0.7)
    y_stop = 8.0
    t_cstop = t_c0 + (y_stop - y_start) / vy
    crosser = MovingObject(1, C.VEHICLE, math.pi / 2, [
        Segment(0.0, x_c, y_start, 0.0, 0.0),
        Segment(t_c0, x_c, y_start, 0.0, vy),
        Segment(t_cstop, x_c, y_stop, 0.0, 0.0),
    ])

    budget = _pair_budget(ego, crosser, cfg.noise_sigma)
    y30 = math.sqrt(th.approach_dist ** 2 - d_v ** 2)
    y_cl = d_v / math.sqrt(vy * vy - th.approach_closing ** 2)
    t_d30 = t_c0 + (-y_start - y30) / vy
    t_cl1 = t_c0 + (-y_start - y_cl) / vy
    t_ce = t_c0 + (-y_start + ROAD_MIN) / vy
    t_cx = t_c0 + (-y_start + ROAD_MAX) / vy
    if t_cl1 >= t_ce:  # approaching must hand off before the road edge
        raise MarginError("closing-speed handoff after road entry")
    grid.check_crossing(t_d30, (y30 / th.approach_dist) * vy, budget)
    closing_sensitivity = 2 * vy / math.hypot(d_v, y_cl)
    closing_rate = vy * (d_v ** 2) * vy / (math.hypot(d_v, y_cl) ** 3)
    grid.check_crossing(t_cl1, closing_rate, budget * closing_sensitivity)
    grid.check_crossing(t_ce, vy, budget)
    grid.check_crossing(t_cx, vy, budget)
    for t in (t_br, t_05, t_c0, t_cstop):
        grid.check_crossing(t, 1.0, 0.0)
    if t_cx > grid.t_end - 0.3:
        raise MarginError("vehicle crossing finishes too late")

    claims = (_claim(0, 1, R.APPROACHING, grid, t_d30, t_cl1)
              + _claim(1, 0, R.VEHICLE_WAITING_TO_CROSS, grid, t_ce, t_cx))
    return _Draft([ego, crosser], bespoke={frozenset((0, 1)): claims},
                  prop_keepout_x=[(x_c - 9.0, x_c + 9.0)])


_TEMPLATES: dict[str, Callable] = {
    "following": _template_following,
    "approaching": _template_approaching,
    "crossing": _template_crossing,
    "group": _template_group,
    "passing_by": _template_passing_by,
    "overtaking": _template_overtaking,
}

_MIN_SECONDS = {"following": 2.0, "group": 3.0, "passing_by": 8.0,
                "approaching": 16.0, "overtaking": 16.0, "crossing": 16.0}


def _template_feasible(name: str, cfg: GenConfig) -> bool:
    caps = _caps(cfg)
    if (cfg.n_frames() - 1) / cfg.hz < _MIN_SECONDS[name]:
        return False
    if name in ("following", "approaching", "overtaking", "passing_by"):
        return caps[C.VEHICLE] >= 1
    if name == "crossing":
        return (caps[C.TRAFFIC_SIGN] >= 1 and caps[C.HUMAN] >= 1) or caps[C.VEHICLE] >= 2
    if name == "group":
        return (caps[C.HUMAN] >= 2 or caps[C.VEHICLE] >= 3 or caps[C.OBSTACLE] >= 2
                or (caps[C.VEHICLE] >= 2 and caps[C.HUMAN] >= 1))
    return False


# ---------------------------------------------------------------------------
# ambient traffic, props, and scene assembly
# ---------------------------------------------------------------------------


def _add_ambient(draft: _Draft, rng, cfg: GenConfig, next_id: int) -> int:
    used_vehicles = sum(1 for o in draft.objects if o.obj_class is C.VEHICLE) - 1
    room = cfg.n_vehicles[1] - used_vehicles
    if not draft.allow_ambient or room <= 0:
        return next_id
    count = int(rng.integers(0, min(room, 2) + 1))
    if count == 0:
        return next_id
    v0 = math.hypot(draft.objects[0].segments[0].vx, draft.objects[0].segments[0].vy)
    rear = min(o.segments[0].x0 for o in draft.objects
               if o.obj_class is C.VEHICLE and abs(o.segments[0].y0) < 1.0)
    for _ in range(count):
        rear -= rng.uniform(26.0, 40.0)
        draft.objects.append(_cruise(next_id, C.VEHICLE, rear, 0.0, v0))
        next_id += 1
    return next_id


def _add_props(draft: _Draft, rng, cfg: GenConfig, grid: FrameGrid, next_id: int) -> int:
    caps = _caps(cfg)
    used = {cls: sum(1 for o in draft.objects if o.obj_class is cls) for cls in caps}
    used[C.VEHICLE] -= 1  # the ego does not count against the cap
    slots = []
    slots += [C.OBSTACLE] * max(0, min(caps[C.OBSTACLE] - used[C.OBSTACLE], 2))
    slots += [C.TRAFFIC_SIGN] * max(0, min(caps[C.TRAFFIC_SIGN] - used[C.TRAFFIC_SIGN], 1))
    if not slots:
        return next_id
    count = int(rng.integers(0, len(slots) + 1))
    v0 = math.hypot(draft.objects[0].segments[0].vx, draft.objects[0].segments[0].vy)
    reach = max(v0, 1.0) * grid.t_end
    xs: list[float] = []
    for cls in slots[:count]:
        for _ in range(40):
            x = rng.uniform(15.0, max(40.0, reach))
            if all(abs(x - prev) >= 17.0 for prev in xs) and \
                    all(not lo <= x <= hi for lo, hi in draft.prop_keepout_x):
                break
        else:
            continue
        xs.append(x)
        side = 1.0 if rng.random() < 0.5 else -1.0
        draft.objects.append(_static(next_id, cls, x, side * rng.uniform(13.0, 22.0)))
        next_id += 1
    return next_id


def _prop_pair_silent(a: MovingObject, b: MovingObject, grid: FrameGrid) -> bool:
    """Scripted-versus-prop pairs must stay laterally clear of every rule.

    Far-off-road props can never satisfy a rule as long as the actor keeps
    enough lateral clearance; a crossing actor is clear when it holds a fixed
    longitudinal offset instead (no pass-window sign change is possible).
    """
    prop, actor = (a, b) if abs(a.segments[0].y0) >= 13.0 else (b, a)
    times = grid.times()
    min_dy = min(abs(prop.segments[0].y0 - actor.state_at(t)[1]) for t in times)
    if actor.obj_class is C.HUMAN:
        return min_dy >= 4.8
    if min_dy >= 6.8:
        return True
    actor_moves_in_x = any(abs(actor.state_at(t)[2]) > 1e-9 for t in times)
    min_dx = min(abs(prop.segments[0].x0 - actor.state_at(t)[0]) for t in times)
    return not actor_moves_in_x and min_dx >= 7.5


def _is_prop(o: MovingObject) -> bool:
    return abs(o.segments[0].y0) >= 13.0 and o.is_linear()


def _scene_claims(draft: _Draft, grid: FrameGrid, th: RuleThresholds,
                  cfg: GenConfig) -> list[RelationshipInterval]:
    claims: list[RelationshipInterval] = []
    for a, b in combinations(draft.objects, 2):
        key = frozenset((a.obj_id, b.obj_id))
        if key in draft.bespoke:
            claims.extend(draft.bespoke[key])
        elif a.is_linear() and b.is_linear():
            claims.extend(derive_linear_pair(a, b, grid, th, cfg.noise_sigma))
        elif _is_prop(a) or _is_prop(b):
            if not _prop_pair_silent(a, b, grid):
                raise MarginError("scripted object strays into a prop's rule range")
        else:
            raise RuntimeError(
                f"pair ({a.obj_id}, {b.obj_id}) has no claim source")
    return claims


def _assemble_scene(scene_id: str, draft: _Draft, grid: FrameGrid,
                    claims: list[RelationshipInterval], cfg: GenConfig,
                    noise_rng) -> Scene:
    clip = NOISE_CLIP_SIGMA * cfg.noise_sigma
    ego = draft.objects[0]
    frames = []
    for f in range(grid.n_frames):
        t = f / grid.hz
        ego_x = ego.state_at(t)[0]
        nodes = []
        for obj in sorted(draft.objects, key=lambda o: o.obj_id):
            x, y, vx, vy, ax, ay = obj.state_at(t)
            if obj is ego:
                rel_x, rel_y = 0.0, 0.0
            else:
                rel_x, rel_y = x - ego_x, y
            if obj.noisy and cfg.noise_sigma > 0:
                nx, ny = noise_rng.normal(0.0, cfg.noise_sigma, size=2)
                rel_x += float(np.clip(nx, -clip, clip))
                rel_y += float(np.clip(ny, -clip, clip))
            nodes.append(ObjectNode(obj.obj_id, obj.obj_class, rel_x, rel_y,
                                    vx, vy, ax, ay, obj.yaw, 0.0, 0.0, obj.group_id))
        edges = []
        seen_pairs = set()
        for itv in claims:
            if itv.active_at(f):
                key = (itv.subject_id, itv.object_id)
                if key in seen_pairs:
                    raise RuntimeError(f"overlapping claims for pair {key} at frame {f}")
                seen_pairs.add(key)
                edges.append(RelationshipEdge(itv.subject_id, itv.object_id, itv.rel, 1.0))
        frames.append(SceneGraph(f, t, nodes, edges))
    ordered = sorted(claims, key=lambda i: (i.subject_id, i.object_id, i.rel.value, i.b))
    return Scene(scene_id, frames, ordered)


def generate_scene(cfg: GenConfig, scene_seed: int) -> Scene:
    """One deterministic scripted episode; identical inputs give identical scenes."""
    cfg.validate()
    grid = FrameGrid(cfg.n_frames(), cfg.hz)
    th = DEFAULT_THRESHOLDS
    rng = np.random.default_rng(np.random.SeedSequence((abs(cfg.seed), abs(scene_seed))))
    scene_id = f"scene-{scene_seed:05d}"

    if not cfg._any_objects():
        ego = _cruise(0, C.VEHICLE, 0.0, 0.0, 10.0, noisy=False)
        return _assemble_scene(scene_id, _Draft([ego]), grid, [], cfg, rng)

    names = [n for n in DEFAULT_WEIGHTS if cfg.scenario_weights.get(n, 0.0) > 0]
    for name in names:
        if not _template_feasible(name, cfg):
            raise InfeasibleConfigError(
                f"scenario '{name}' is infeasible with the configured object counts/frames")
    weights = np.array([cfg.scenario_weights[n] for n in names])
    template = names[int(rng.choice(len(names), p=weights / weights.sum()))]

    last_error: Optional[Exception] = None
    for _ in range(120):
        try:
            draft = _TEMPLATES[template](rng, grid, th, cfg, _caps(cfg))
            next_id = max(o.obj_id for o in draft.objects) + 1
            next_id = _add_ambient(draft, rng, cfg, next_id)
            _add_props(draft, rng, cfg, grid, next_id)
            claims = _scene_claims(draft, grid, th, cfg)
            return _assemble_scene(scene_id, draft, grid, claims, cfg, rng)
        except MarginError as exc:
            last_error = exc
    raise RuntimeError(f"could not satisfy margin checks for '{template}': {last_error}")


def marginal_stats(scenes: list[Scene]) -> dict[RelationshipType, int]:
    """Labelled pair-frame counts per relationship type."""
    counts: dict[RelationshipType, int] = {}
    for scene in scenes:
        for itv in scene.intervals:
            active = max(0, int(math.ceil(itv.c)) - int(math.ceil(itv.b)))
            counts[itv.rel] = counts.get(itv.rel, 0) + active
    return counts


def jitter_annotations(intervals: list[RelationshipInterval], n_frames: int,
                       seed: int, min_gap: float = 3.0, max_gap: float = 7.0
                       ) -> list[RelationshipInterval]:
    """Widen crisp boundaries by an annotator-style uncertainty gap.

    Each boundary gets a gap drawn uniformly from [min_gap, max_gap] frames,
    split evenly around the crisp edge, shifted back inside the scene when it
    would stick out, and clamped so the ordering a <= b <= c <= d survives.
    """
    if min_gap > max_gap:
        raise ValueError("min_gap must not exceed max_gap")
    if min_gap < 0:
        raise ValueError("gaps must be nonnegative")
    rng = np.random.default_rng(seed)
    out = []
    for itv in intervals:
        g_start = float(rng.uniform(min_gap, max_gap))
        g_end = float(rng.uniform(min_gap, max_gap))
        a, b = itv.b - g_start / 2.0, itv.b + g_start / 2.0
        if a < 0.0:
            b += -a
            a = 0.0
        c, d = itv.c - g_end / 2.0, itv.c + g_end / 2.0
        top = float(n_frames)
        if d > top:
            c -= d - top
            d = top
        mid = (itv.b + itv.c) / 2.0
        b = min(b, mid)
        c = max(c, mid)
        a = min(a, b)
        d = max(d, c)
        out.append(replace(itv, a=a, b=b, c=c, d=d))
    return out


def generate_dataset(cfg: GenConfig, name: str = "synthetic") -> "Dataset":
    """Generate cfg.n_scenes scenes, seeded 0..n-1 under the config seed."""
    from .dataset import Dataset

    cfg.validate()
    scenes = [generate_scene(cfg, i) for i in range(cfg.n_scenes)]
    meta = {
        "name": name,
        "generator_seed": cfg.seed,
        "scene_count": len(scenes),
        "frame_count": sum(len(s.frames) for s in scenes),
        "interval_count": sum(len(s.intervals) for s in scenes),
    }
    return Dataset(scenes, meta)


def jitter_dataset(dataset: "Dataset", seed: int, min_gap: float = 3.0,
                   max_gap: float = 7.0) -> "Dataset":
    """Copy of the dataset with annotator-style jitter on every interval."""
    from .dataset import Dataset

    scenes = []
    for idx, scene in enumerate(dataset.scenes):
        child = int(np.random.default_rng((abs(seed), idx)).integers(0, 2 ** 31))
        jittered = jitter_annotations(scene.intervals, len(scene.frames), child,
                                      min_gap, max_gap)
        scenes.append(Scene(scene.scene_id, scene.frames, jittered))
    meta = {**dataset.meta, "jitter": {"seed": seed, "min_gap": min_gap,
                                       "max_gap": max_gap}}
    return Dataset(scenes, meta)
