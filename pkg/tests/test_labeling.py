import math

import pytest

from roadgraph.labeling import (
    DEFAULT_THRESHOLDS,
    classify_pair,
    closing_speed,
    heading_delta,
    oracle_label,
    rel_lat,
    rel_long,
)
from roadgraph.scene import ObjectNode, Scene, SceneGraph
from roadgraph.taxonomy import ObjectClass, RelationshipType

TH = DEFAULT_THRESHOLDS
H, V, O, T = (ObjectClass.HUMAN, ObjectClass.VEHICLE,
              ObjectClass.OBSTACLE, ObjectClass.TRAFFIC_SIGN)
R = RelationshipType


def node(i, cls, x, y, vx=0.0, vy=0.0, ax=0.0, ay=0.0, yaw=0.0):
    return ObjectNode(i, cls, x, y, vx, vy, ax, ay, yaw)


def test_projection_helpers_respect_heading():
    p = node(0, V, 0.0, 0.0, yaw=math.pi / 2)
    q = node(1, V, 3.0, 4.0)
    assert rel_long(p, q) == pytest.approx(4.0)
    assert rel_lat(p, q) == pytest.approx(-3.0)
    assert heading_delta(p, q) == pytest.approx(math.pi / 2)


def test_closing_speed_sign():
    a = node(0, V, 0.0, 0.0, vx=10.0)
    b = node(1, V, 20.0, 0.0, vx=6.0)
    assert abs(closing_speed(a, b) - 4.0) < 1e-12
    assert closing_speed(b, a) == closing_speed(a, b)


def test_following_beats_same_lane():
    rear = node(0, V, 0.0, 0.0, vx=10.0)
    front = node(1, V, 12.0, 0.0, vx=10.0)
    assert classify_pair(rear, front, TH) == (R.FOLLOWING, 0, 1)


def test_same_lane_when_too_far_to_follow():
    rear = node(0, V, 0.0, 0.0, vx=10.0)
    front = node(1, V, 40.0, 0.0, vx=10.0)
    assert classify_pair(rear, front, TH) == (R.SAME_LANE, 0, 1)


def test_following_requires_similar_speed():
    rear = node(0, V, 0.0, 0.0, vx=14.0)
    front = node(1, V, 12.0, 0.0, vx=9.0)
    # ratio 1.56: approaching instead (closing 5 m/s, distance 12 m)
    assert classify_pair(rear, front, TH) == (R.APPROACHING, 0, 1)


def test_group_beats_following():
    a = node(0, V, 0.0, 0.0, vx=10.0)
    b = node(1, V, 3.3, 0.0, vx=10.0)
    assert classify_pair(a, b, TH) == (R.VEHICLE_GROUP, 0, 1)


def test_waiting_for_crossing_vehicle():
    waiter = node(0, V, 0.0, 0.0, vx=0.0)
    mover = node(1, V, 7.0, 1.0, vy=4.0, yaw=math.pi / 2)
    assert classify_pair(waiter, mover, TH) == (R.VEHICLE_WAITING_TO_CROSS, 1, 0)


def test_human_vehicle_priorities():
    veh_stopped = node(0, V, 0.0, 0.0)
    crossing = node(1, H, 4.0, -1.0, vy=1.9)
    assert classify_pair(crossing, veh_stopped, TH) == (R.HUMAN_WAITING_TO_CROSS, 1, 0)

    veh_moving = node(0, V, 0.0, 0.0, vx=10.0)
    on_lane = node(1, H, 8.0, 0.3)
    assert classify_pair(on_lane, veh_moving, TH) == (R.HUMAN_ON_LANE, 1, 0)

    approaching_road = node(1, H, 8.0, -3.0, vy=1.4)
    assert classify_pair(approaching_road, veh_moving, TH) == (R.HUMAN_MAY_INTERSECT, 1, 0)

    behind = node(1, H, -4.0, -1.0)
    assert classify_pair(behind, veh_moving, TH) == (R.HUMAN_BEHIND_VEHICLE, 1, 0)


def test_human_sign_waiting():
    h = node(0, H, 0.0, -3.0)
    s = node(1, T, 1.0, -2.8)
    assert classify_pair(h, s, TH) == (R.HUMAN_WAITING_AT_SIGN, 0, 1)
    walking = node(0, H, 0.0, -3.0, vx=1.5)
    assert classify_pair(walking, s, TH) is None


def test_vehicle_sign_bands():
    s = node(1, T, 10.0, -2.8)
    braking = node(0, V, 0.0, 0.0, vx=6.0, ax=-2.5)
    assert classify_pair(braking, s, TH) == (R.VEHICLE_REACTING_TO_SIGN, 0, 1)
    stopped_near = node(0, V, 6.5, 0.0)
    assert classify_pair(stopped_near, s, TH) == (R.VEHICLE_STOPPED_AT_SIGN, 0, 1)
    stopped_far = node(0, V, 0.5, 0.0)
    assert classify_pair(stopped_far, s, TH) == (R.VEHICLE_WAITING_AT_SIGN, 0, 1)
    off_road_vehicle = node(0, V, 6.5, -2.7)
    assert classify_pair(off_road_vehicle, s, TH) is None


def test_obstacle_behind_sign_and_human_behind_obstacle():
    o = node(0, O, 0.0, -2.9)
    s = node(1, T, 7.0, -2.9)
    assert classify_pair(o, s, TH) == (R.OBSTACLE_BEHIND_SIGN, 0, 1)
    worker = node(2, H, -3.0, -2.9)
    assert classify_pair(worker, o, TH) == (R.HUMAN_BEHIND_OBSTACLE, 2, 0)


def test_avoiding_requires_lateral_motion():
    o = node(1, O, 15.0, 1.15)
    swerving = node(0, V, 0.0, 0.5, vx=8.0, vy=2.0)
    assert classify_pair(swerving, o, TH) == (R.VEHICLE_AVOIDING_OBSTACLE, 0, 1)
    straight = node(0, V, 0.0, 0.5, vx=8.0)
    assert classify_pair(straight, o, TH) is None


def _linear_scene(builder, n_frames=12):
    frames = []
    for f in range(n_frames):
        frames.append(SceneGraph(f, f * 0.5, builder(f * 0.5), []))
    return Scene("lab", frames, [])


def test_band_run_labels_overtaking():
    def build(t):
        # overtaker passes one lane to the left at 1.5x speed
        return [node(0, V, 10.0 * t, 0.0, vx=10.0),
                node(1, V, -12.0 + 15.0 * t, 3.5, vx=15.0)]

    got = oracle_label(_linear_scene(build))
    kinds = {i.rel for i in got}
    assert R.OVERTAKING in kinds
    ot = next(i for i in got if i.rel is R.OVERTAKING)
    assert (ot.subject_id, ot.object_id) == (1, 0)


def test_band_without_sign_change_is_not_a_pass():
    def build(t):
        return [node(0, V, 10.0 * t, 0.0, vx=10.0),
                node(1, V, 15.0 + 10.0 * t, 3.5, vx=10.0)]

    got = oracle_label(_linear_scene(build))
    assert all(i.rel not in (R.PASSING_BY, R.OVERTAKING) for i in got)


def test_oncoming_pass_is_passing_by_not_overtaking():
    def build(t):
        return [node(0, V, 10.0 * t, 0.0, vx=10.0),
                node(1, V, 70.0 - 10.0 * t, 3.5, vx=-10.0, yaw=math.pi)]

    got = oracle_label(_linear_scene(build))
    kinds = {i.rel for i in got}
    assert R.PASSING_BY in kinds
    assert R.OVERTAKING not in kinds


def test_parked_vehicle_pass_is_passing_by():
    def build(t):
        return [node(0, V, -20.0 + 10.0 * t, 0.0, vx=10.0),
                node(1, V, 0.0, 2.7)]

    got = oracle_label(_linear_scene(build, n_frames=10))
    assert {i.rel for i in got} == {R.PASSING_BY}
