"""Object classes and the semantic relationship taxonomy for road scenes."""

from __future__ import annotations

from enum import Enum


class ObjectClass(Enum):
    """High-level category of a traffic object."""

    HUMAN = "human"
    VEHICLE = "vehicle"
    OBSTACLE = "obstacle"
    TRAFFIC_SIGN = "traffic_sign"


CLASS_ORDER: tuple[ObjectClass, ...] = (
    ObjectClass.HUMAN,
    ObjectClass.VEHICLE,
    ObjectClass.OBSTACLE,
    ObjectClass.TRAFFIC_SIGN,
)

NUM_CLASSES = len(CLASS_ORDER)


def class_index(c: ObjectClass) -> int:
    return CLASS_ORDER.index(c)


class RelationshipType(Enum):
    """Pairwise semantic relationship between two traffic objects.

    Every member except NO_RELATION is tied to exactly one (subject class,
    object class) pair; see RELATION_ENDPOINTS.
    """

    HUMAN_GROUP = "human_group"
    HUMAN_BEHIND_VEHICLE = "human_behind_vehicle"
    HUMAN_ON_LANE = "human_on_lane"
    HUMAN_WAITING_TO_CROSS = "human_waiting_to_cross"
    HUMAN_MAY_INTERSECT = "human_may_intersect"
    HUMAN_BEHIND_OBSTACLE = "human_behind_obstacle"
    HUMAN_WAITING_AT_SIGN = "human_waiting_at_sign"
    VEHICLE_GROUP = "vehicle_group"
    SAME_LANE = "same_lane"
    FOLLOWING = "following"
    APPROACHING = "approaching"
    VEHICLE_WAITING_TO_CROSS = "vehicle_waiting_to_cross"
    PASSING_BY = "passing_by"
    OVERTAKING = "overtaking"
    VEHICLE_PASSING_OBSTACLE = "vehicle_passing_obstacle"
    VEHICLE_AVOIDING_OBSTACLE = "vehicle_avoiding_obstacle"
    VEHICLE_WAITING_AT_SIGN = "vehicle_waiting_at_sign"
    VEHICLE_STOPPED_AT_SIGN = "vehicle_stopped_at_sign"
    VEHICLE_REACTING_TO_SIGN = "vehicle_reacting_to_sign"
    OBSTACLE_GROUP = "obstacle_group"
    OBSTACLE_BEHIND_SIGN = "obstacle_behind_sign"
    NO_RELATION = "no_relation"


_H = ObjectClass.HUMAN
_V = ObjectClass.VEHICLE
_O = ObjectClass.OBSTACLE
_T = ObjectClass.TRAFFIC_SIGN

# Canonical (subject class, object class) per relationship.  For cross-class
# relationships the subject class is fixed by convention (the human waits to
# cross, the vehicle reacts to the sign, ...); for same-class relationships
# the instance-level subject is decided by geometry or the lower node id.
RELATION_ENDPOINTS: dict[RelationshipType, tuple[ObjectClass, ObjectClass]] = {
    RelationshipType.HUMAN_GROUP: (_H, _H),
    RelationshipType.HUMAN_BEHIND_VEHICLE: (_H, _V),
    RelationshipType.HUMAN_ON_LANE: (_H, _V),
    RelationshipType.HUMAN_WAITING_TO_CROSS: (_H, _V),
    RelationshipType.HUMAN_MAY_INTERSECT: (_H, _V),
    RelationshipType.HUMAN_BEHIND_OBSTACLE: (_H, _O),
    RelationshipType.HUMAN_WAITING_AT_SIGN: (_H, _T),
    RelationshipType.VEHICLE_GROUP: (_V, _V),
    RelationshipType.SAME_LANE: (_V, _V),
    RelationshipType.FOLLOWING: (_V, _V),
    RelationshipType.APPROACHING: (_V, _V),
    RelationshipType.VEHICLE_WAITING_TO_CROSS: (_V, _V),
    RelationshipType.PASSING_BY: (_V, _V),
    RelationshipType.OVERTAKING: (_V, _V),
    RelationshipType.VEHICLE_PASSING_OBSTACLE: (_V, _O),
    RelationshipType.VEHICLE_AVOIDING_OBSTACLE: (_V, _O),
    RelationshipType.VEHICLE_WAITING_AT_SIGN: (_V, _T),
    RelationshipType.VEHICLE_STOPPED_AT_SIGN: (_V, _T),
    RelationshipType.VEHICLE_REACTING_TO_SIGN: (_V, _T),
    RelationshipType.OBSTACLE_GROUP: (_O, _O),
    RelationshipType.OBSTACLE_BEHIND_SIGN: (_O, _T),
}

TYPE_ORDER: tuple[RelationshipType, ...] = tuple(RelationshipType)
NUM_RELATIONSHIP_TYPES = len(TYPE_ORDER)

_TYPE_INDEX = {t: i for i, t in enumerate(TYPE_ORDER)}
NO_RELATION_INDEX = _TYPE_INDEX[RelationshipType.NO_RELATION]


def type_index(t: RelationshipType) -> int:
    return _TYPE_INDEX[t]


def _build_valid_table() -> dict[frozenset, frozenset]:
    table: dict[frozenset, frozenset] = {}
    for ca in CLASS_ORDER:
        for cb in CLASS_ORDER:
            key = frozenset((ca, cb))
            if key in table:
                continue
            members = {
                t
                for t, (s, o) in RELATION_ENDPOINTS.items()
                if {s, o} == set(key)
            }
            members.add(RelationshipType.NO_RELATION)
            table[key] = frozenset(members)
    return table


_VALID_BY_PAIR = _build_valid_table()


def valid_relationships(ci: ObjectClass, cj: ObjectClass) -> frozenset[RelationshipType]:
    """Relationship types allowed between the two classes, in either role.

    The lookup is symmetric in the class pair and always includes NO_RELATION.
    """
    return _VALID_BY_PAIR[frozenset((ci, cj))]


def orientation_valid(
    subject_class: ObjectClass, object_class: ObjectClass, rel: RelationshipType
) -> bool:
    """Whether a directed edge (subject, object) may carry this relationship."""
    if rel is RelationshipType.NO_RELATION:
        return True
    return RELATION_ENDPOINTS[rel] == (subject_class, object_class)


# Merge used when rendering compact confusion matrices: the three "behind"
# variants collapse into a single row/column.
COMMON_BEHIND_MERGE: dict[RelationshipType, str] = {
    RelationshipType.HUMAN_BEHIND_VEHICLE: "common_behind",
    RelationshipType.HUMAN_BEHIND_OBSTACLE: "common_behind",
    RelationshipType.OBSTACLE_BEHIND_SIGN: "common_behind",
}
