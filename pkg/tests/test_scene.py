from __future__ import annotations

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from twinroom.scene import (
    DuplicateId,
    MalformedRoom,
    NonPositiveExtent,
    NormalizedHit,
    ObjectCategory,
    OutOfRange,
    PairingError,
    Ray,
    Room,
    SceneError,
    SceneObject,
    denormalize_hit,
    height_map,
    load_room,
    normalize_hit,
    objects_in_fov,
    objects_in_radius,
    raycast,
    room_hash,
    support_height_at,
    validate_pairing,
)


def box(oid, pos, size, yaw=0.0, category=ObjectCategory.Table, **kw):
    return SceneObject(
        id=oid, category=category, position=np.array(pos, dtype=float),
        yaw=yaw, size=np.array(size, dtype=float), **kw,
    )


def make_room(objects, half=10.0, rid="r"):
    doc = {
        "id": rid,
        "extents": {"min": [-half, -half], "max": [half, half]},
        "objects": [],
    }
    room = load_room(doc)
    return Room(id=room.id, extents=room.extents, objects=tuple(objects))


# bounded so generated boxes always fit inside the 10m test extents
positions = st.tuples(
    st.floats(-7, 7), st.floats(0.1, 2.5), st.floats(-7, 7)
)
sizes = st.tuples(st.floats(0.2, 3), st.floats(0.2, 3), st.floats(0.2, 3))
yaws = st.floats(-math.pi, math.pi)


@st.composite
def rooms(draw, max_objects=5):
    n = draw(st.integers(1, max_objects))
    objs = []
    for i in range(n):
        objs.append(
            box(
                f"o{i}",
                draw(positions),
                draw(sizes),
                yaw=draw(yaws),
                category=draw(st.sampled_from(list(ObjectCategory))),
            )
        )
    return make_room(objs)


# --- raycast ------------------------------------------------------------


def penetration_depths(room, points):
    """Per-point depth inside the nearest-surface box, <= 0 when outside.

    Independent of the slab test: computes local coordinates for every
    (point, object) pair and takes min over axes of half - |local|.
    """
    pts = np.asarray(points, dtype=float)
    best = np.full(len(pts), -np.inf)
    for o in room.objects:
        dx = pts[:, 0] - o.position[0]
        dy = pts[:, 1] - o.position[1]
        dz = pts[:, 2] - o.position[2]
        lx = dx * o.cos_yaw - dz * o.sin_yaw
        lz = dx * o.sin_yaw + dz * o.cos_yaw
        half = o.size * 0.5
        depth = np.minimum(
            np.minimum(half[0] - np.abs(lx), half[1] - np.abs(dy)),
            half[2] - np.abs(lz),
        )
        best = np.maximum(best, depth)
    return best


def on_surface(obj, point, tol=1e-6):
    local = obj.to_local(point)
    half = obj.size * 0.5
    inside = all(abs(local[a]) <= half[a] + tol for a in range(3))
    touching = any(abs(abs(local[a]) - half[a]) <= tol for a in range(3))
    return inside and touching


def test_raycast_axis_aligned_known():
    room = make_room([box("b", (0, 0.5, 0), (1, 1, 1))])
    hit = raycast(room, Ray(origin=(-5, 0.5, 0), direction=(1, 0, 0)))
    assert hit is not None and hit.object_id == "b"
    assert hit.distance == pytest.approx(4.5, abs=1e-12)
    np.testing.assert_allclose(hit.world_point, [-0.5, 0.5, 0], atol=1e-12)


def test_raycast_rotated_known():
    # square of half-extent 1 rotated 45 degrees presents a corner at
    # distance sqrt(2) from its center toward the incoming ray
    room = make_room([box("b", (0, 0.5, 0), (2, 1, 2), yaw=math.pi / 4)])
    hit = raycast(room, Ray(origin=(-5, 0.5, 0), direction=(1, 0, 0)))
    assert hit is not None
    assert hit.distance == pytest.approx(5 - math.sqrt(2), abs=1e-9)


def test_raycast_from_inside_hits_exit_surface():
    room = make_room([box("b", (0, 1, 0), (2, 2, 2))])
    hit = raycast(room, Ray(origin=(0, 1, 0), direction=(1, 0, 0)))
    assert hit is not None
    assert hit.distance == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(hit.world_point, [1, 1, 0], atol=1e-12)


def test_raycast_miss_returns_none():
    room = make_room([box("b", (0, 0.5, 0), (1, 1, 1))])
    assert raycast(room, Ray(origin=(-5, 5.0, 0), direction=(1, 0, 0))) is None


def test_raycast_distance_tie_breaks_by_id():
    # two coincident boxes: both faces at exactly the same distance
    room = make_room(
        [box("zz", (0, 0.5, 0), (1, 1, 1)), box("aa", (0, 0.5, 0), (1, 1, 1))]
    )
    hit = raycast(room, Ray(origin=(-5, 0.5, 0), direction=(1, 0, 0)))
    assert hit.object_id == "aa"


def test_ray_requires_unit_direction():
    with pytest.raises(SceneError):
        Ray(origin=(0, 0, 0), direction=(1, 1, 0))


@settings(max_examples=60, deadline=None)
@given(
    room=rooms(),
    origin=st.tuples(st.floats(-9, 9), st.floats(0, 4), st.floats(-9, 9)),
    direction=st.tuples(st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1)),
)
def test_raycast_against_marching_oracle(room, origin, direction):
    d = np.array(direction)
    n = np.linalg.norm(d)
    if n < 1e-3:
        return
    d = d / n
    o = np.asarray(origin, dtype=float)
    if penetration_depths(room, o[None, :])[0] > 0:
        return  # oracle below assumes an exterior start
    ray = Ray(origin=o, direction=d)
    hit = raycast(room, ray)

    step = 1e-3
    if hit is None:
        ts = np.arange(step, 30.0, step)
        # a graze shallower than half a step can legitimately be missed by
        # the march, so only penetrations beyond one step count as a miss
        samples = o[None, :] + ts[:, None] * d[None, :]
        assert penetration_depths(room, samples).max() <= step
    else:
        assert on_surface(room.object(hit.object_id), hit.world_point)
        assert hit.distance == pytest.approx(
            float(np.linalg.norm(hit.world_point - o)), abs=1e-9
        )
        if hit.distance > 2 * step:
            ts = np.arange(step, hit.distance - step, step)
            samples = o[None, :] + ts[:, None] * d[None, :]
            assert penetration_depths(room, samples).max() <= step


# --- normalized coordinates ---------------------------------------------


def test_normalize_rotated_known_values():
    # yaw pi/2 turns the local x axis onto world -z; walk one corner through
    obj = box("b", (2, 1, 3), (2, 1, 4), yaw=math.pi / 2)
    world = denormalize_hit(obj, (1.0, 0.5, 0.0))
    np.testing.assert_allclose(world, [0, 1, 2], atol=1e-12)
    hit = normalize_hit(obj, world)
    assert hit.uvw == pytest.approx((1.0, 0.5, 0.0), abs=1e-12)


def test_same_uvw_lands_proportionally_on_paired_sizes():
    a = box("a", (0, 0.5, 0), (1, 1, 1))
    b = box("b", (10, 1, 10), (4, 2, 2), yaw=0.3)
    uvw = (0.25, 0.75, 0.5)
    pa = a.to_local(denormalize_hit(a, uvw))
    pb = b.to_local(denormalize_hit(b, uvw))
    np.testing.assert_allclose(pa / a.size, pb / b.size, atol=1e-12)


@settings(max_examples=100, deadline=None)
@given(
    pos=positions,
    size=sizes,
    yaw=yaws,
    uvw=st.tuples(st.floats(0, 1), st.floats(0, 1), st.floats(0, 1)),
)
def test_normalize_denormalize_round_trip(pos, size, yaw, uvw):
    obj = box("b", pos, size, yaw=yaw)
    world = denormalize_hit(obj, uvw)
    back = normalize_hit(obj, world)
    np.testing.assert_allclose(back.uvw, uvw, atol=1e-9)
    np.testing.assert_allclose(denormalize_hit(obj, back), world, atol=1e-9)


def test_normalize_rejects_point_outside_tolerance():
    obj = box("b", (0, 0.5, 0), (1, 1, 1))
    with pytest.raises(OutOfRange):
        normalize_hit(obj, (0.51, 0.5, 0))  # 1cm out, tolerance is 0.1mm
    hit = normalize_hit(obj, (0.50005, 0.5, 0))  # inside tolerance: clamped
    assert hit.u == 1.0


def test_normalized_hit_validates_range():
    with pytest.raises(OutOfRange):
        NormalizedHit(object_id="b", u=1.2, v=0.5, w=0.5)
    with pytest.raises(OutOfRange):
        denormalize_hit(box("b", (0, 0.5, 0), (1, 1, 1)), (-0.1, 0.5, 0.5))


# --- support heights and height maps ------------------------------------


def test_support_height_prefers_seat_over_box_top():
    chair = box(
        "c", (0, 0.5, 0), (0.5, 1.0, 0.5), category=ObjectCategory.Chair,
        sittable=True, sit_height=0.45,
    )
    assert chair.support_height == 0.45  # backrest top (1.0) must not win
    table = box("t", (0, 0.4, 0), (1, 0.8, 1))
    assert table.support_height == pytest.approx(0.8)


def test_support_height_at_known_room():
    room = make_room(
        [
            box("t", (0, 0.4, 0), (1, 0.8, 1)),
            box(
                "c", (0.2, 0.5, 0), (0.5, 1.0, 0.5), category=ObjectCategory.Chair,
                sittable=True, sit_height=0.45,
            ),
            box("sunken", (5, -2.0, 5), (1, 1, 1)),
        ]
    )
    assert support_height_at(room, 0.0, 0.0) == pytest.approx(0.8)  # overlap: max
    assert support_height_at(room, 0.4, 0.0) == pytest.approx(0.8)
    assert support_height_at(room, 3.0, 3.0) == 0.0
    assert support_height_at(room, 5.0, 5.0) == 0.0  # below-floor top clamps to 0


@settings(max_examples=60, deadline=None)
@given(
    room=rooms(),
    cx=st.floats(-8, 8),
    cz=st.floats(-8, 8),
    radius=st.floats(0.3, 2.5),
    cell=st.floats(0.05, 0.4),
)
def test_height_map_matches_pointwise_oracle(room, cx, cz, radius, cell):
    hm = height_map(room, (cx, 0, cz), radius, cell)
    n = int(math.floor(radius / cell + 1e-9))
    assert hm.heights.shape == (2 * n + 1, 2 * n + 1)
    assert hm.half_n == n
    for i in range(2 * n + 1):
        for j in range(2 * n + 1):
            ox = (i - n) * cell
            oz = (j - n) * cell
            inside = math.hypot(ox, oz) <= radius + 1e-9
            assert bool(hm.valid[i, j]) == inside
            if inside:
                want = support_height_at(room, cx + ox, cz + oz)
                assert hm.heights[i, j] == pytest.approx(want, abs=1e-12)
            else:
                assert hm.heights[i, j] == 0.0


def test_height_map_rejects_bad_geometry():
    room = make_room([box("b", (0, 0.5, 0), (1, 1, 1))])
    with pytest.raises(OutOfRange):
        height_map(room, (0, 0, 0), -1.0, 0.1)
    with pytest.raises(OutOfRange):
        height_map(room, (0, 0, 0), 1.0, 0.0)


# --- spatial queries ------------------------------------------------------


@settings(max_examples=80, deadline=None)
@given(
    room=rooms(),
    eye=st.tuples(st.floats(-9, 9), st.floats(0, 3), st.floats(-9, 9)),
    fwd=st.tuples(st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1)),
    half_angle=st.floats(0.1, 3.0),
)
def test_objects_in_fov_matches_angle_oracle(room, eye, fwd, half_angle):
    f = np.array(fwd)
    n = np.linalg.norm(f)
    if n < 1e-3:
        return
    f = f / n
    got = objects_in_fov(room, eye, f, half_angle)

    expected = {}
    for o in room.objects:
        v = o.position - np.asarray(eye, dtype=float)
        dist = float(np.linalg.norm(v))
        if dist < 1e-9:
            expected[o.id] = dist
            continue
        cosang = float(np.dot(v, f)) / dist
        if abs(cosang - math.cos(half_angle)) < 1e-9:
            return  # boundary case: either answer is defensible
        if math.acos(max(-1.0, min(1.0, cosang))) <= half_angle:
            expected[o.id] = dist

    assert {oid for oid, _ in got} == set(expected)
    dists = [d for _, d in got]
    assert dists == sorted(dists)
    for oid, d in got:
        assert d == pytest.approx(expected[oid], abs=1e-9)


def test_objects_in_radius_known_and_sorted():
    room = make_room(
        [
            box("near", (1, 0.5, 0), (0.5, 1, 0.5)),
            box("mid", (0, 3.0, 2), (0.5, 1, 0.5)),  # height is ignored
            box("far", (6, 0.5, 6), (0.5, 1, 0.5)),
        ]
    )
    got = objects_in_radius(room, (0, 0, 0), 2.5)
    assert [oid for oid, _ in got] == ["near", "mid"]
    assert got[0][1] == pytest.approx(1.0)
    assert got[1][1] == pytest.approx(2.0)
    with pytest.raises(OutOfRange):
        objects_in_radius(room, (0, 0, 0), 0.0)


# --- hashing ---------------------------------------------------------------


def test_room_hash_ignores_object_order():
    a = box("a", (1, 0.5, 1), (1, 1, 1))
    b = box("b", (-1, 0.5, -1), (1, 1, 1), yaw=0.4)
    assert room_hash(make_room([a, b])) == room_hash(make_room([b, a]))


def test_room_hash_sensitive_to_content():
    base = make_room([box("a", (1, 0.5, 1), (1, 1, 1))])
    h = room_hash(base)
    assert h != room_hash(make_room([box("a", (1, 0.5, 1.0000001), (1, 1, 1))]))
    assert h != room_hash(make_room([box("a", (1, 0.5, 1), (1, 1, 1), pair_id="x")]))
    assert h != room_hash(make_room([box("b", (1, 0.5, 1), (1, 1, 1))]))
    assert h != room_hash(
        make_room(
            [box("a", (1, 0.5, 1), (1, 1, 1), sittable=True, sit_height=0.5)]
        )
    )


def test_room_hash_stable_across_loads():
    doc = {
        "id": "r",
        "extents": {"min": [0, 0], "max": [4, 3]},
        "objects": [
            {
                "id": "desk", "category": "Table", "position": [2, 0.4, 1],
                "yaw": 0.0, "size": [1.2, 0.8, 0.6],
            }
        ],
    }
    assert room_hash(load_room(doc)) == room_hash(load_room(json.dumps(doc)))


# --- loading and validation -------------------------------------------------


def room_doc(**over):
    doc = {
        "id": "r",
        "extents": {"min": [0, 0], "max": [5, 4]},
        "objects": [
            {
                "id": "desk", "category": "Table", "position": [2, 0.4, 1],
                "yaw": 0.0, "size": [1.2, 0.8, 0.6],
            }
        ],
    }
    doc.update(over)
    return doc


def test_load_room_round_trips_fields():
    room = load_room(room_doc())
    assert room.id == "r"
    assert room.extents.width == 5 and room.extents.depth == 4
    desk = room.object("desk")
    assert desk.category is ObjectCategory.Table
    assert desk.pair_id is None and not desk.sittable
    assert load_room(room) is room


def test_load_room_rejects_duplicate_ids():
    doc = room_doc()
    doc["objects"].append(dict(doc["objects"][0]))
    with pytest.raises(DuplicateId):
        load_room(doc)


def test_load_room_rejects_object_outside_extents():
    doc = room_doc()
    doc["objects"][0]["position"] = [4.9, 0.4, 1]  # corner pokes past x=5
    with pytest.raises(MalformedRoom):
        load_room(doc)


def test_load_room_rejects_bad_objects():
    for patch, err in [
        ({"size": [0, 1, 1]}, NonPositiveExtent),
        ({"category": "Spaceship"}, MalformedRoom),
        ({"sittable": True}, MalformedRoom),  # sittable without sit_height
        ({"sittable": True, "sit_height": 1.5}, MalformedRoom),
        ({"position": [1, 2]}, MalformedRoom),
    ]:
        doc = room_doc()
        doc["objects"][0].update(patch)
        with pytest.raises(err):
            load_room(doc)


def test_load_room_rejects_degenerate_extents():
    with pytest.raises(NonPositiveExtent):
        load_room(room_doc(extents={"min": [0, 0], "max": [0, 4]}, objects=[]))


def test_load_room_rejects_missing_fields_and_bad_sources():
    with pytest.raises(MalformedRoom):
        load_room({"extents": {"min": [0, 0], "max": [1, 1]}})  # no id
    with pytest.raises(MalformedRoom):
        load_room("{not json")
    with pytest.raises(MalformedRoom):
        load_room("/nonexistent/room.json")
    with pytest.raises(MalformedRoom):
        load_room(42)


def test_validate_pairing_checks_both_directions():
    local = load_room(room_doc())
    remote_doc = {
        "id": "q",
        "extents": {"min": [0, 0], "max": [5, 4]},
        "objects": [
            {
                "id": "desk_q", "category": "Table", "position": [1, 0.4, 1],
                "yaw": 0.0, "size": [1.0, 0.8, 0.6], "pair_id": "desk",
            }
        ],
    }
    remote = load_room(remote_doc)
    validate_pairing(local, remote)  # one-sided reference is fine

    dangling = dict(remote_doc)
    dangling["objects"] = [dict(remote_doc["objects"][0], pair_id="ghost")]
    with pytest.raises(PairingError, match="ghost"):
        validate_pairing(local, load_room(dangling))

    doc = room_doc()
    doc["objects"][0]["pair_id"] = "desk_q"
    doc["objects"][0]["category"] = "Screen"
    with pytest.raises(PairingError):
        validate_pairing(load_room(doc), remote)


def test_with_extra_adds_transient_objects():
    room = load_room(room_doc())
    head = box("@partner-head", (20, 1.6, 20), (0.25, 0.25, 0.25))
    view = room.with_extra([head])
    assert view.object("@partner-head") is head  # outside extents is allowed
    assert len(view.objects) == len(room.objects) + 1
    assert len(room.objects) == 1  # original untouched
    with pytest.raises(DuplicateId):
        view2 = room.with_extra([box("desk", (1, 0.5, 1), (1, 1, 1))])
        del view2
