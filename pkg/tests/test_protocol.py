from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from twinroom.placement import FeatureVector, PlacementPose
from twinroom.protocol import (
    Bye,
    FeaturePacket,
    Hello,
    MsgType,
    Phase,
    PlacementAnnounce,
    PoseUpdate,
    ProtocolError,
    Session,
    StateChange,
    TargetUpdate,
    TickRegression,
    Truncated,
    WireTransform,
    decode_all,
    decode_frame,
    encode_frame,
    f32,
)
from twinroom.scene import HeightMap, ObjectCategory
from twinroom.states import Effector, UserState

# every float here is drawn as an exact float32 so decode == encode input
wire_floats = st.floats(
    width=32, allow_nan=False, allow_infinity=False, min_value=-1e6, max_value=1e6
)
vec3 = st.tuples(wire_floats, wire_floats, wire_floats)
vec4 = st.tuples(wire_floats, wire_floats, wire_floats, wire_floats)
ticks = st.integers(0, 2**32 - 1)
transforms = st.builds(WireTransform, position=vec3, orientation=vec4)


@st.composite
def height_maps(draw):
    half_n = draw(st.integers(0, 3))
    side = 2 * half_n + 1
    heights = np.array(
        draw(
            st.lists(
                wire_floats, min_size=side * side, max_size=side * side
            )
        )
    ).reshape(side, side)
    valid = np.array(
        draw(st.lists(st.booleans(), min_size=side * side, max_size=side * side))
    ).reshape(side, side)
    return HeightMap(
        center=np.array(draw(vec3)),
        radius=draw(st.floats(width=32, min_value=0.125, max_value=8)),
        cell_size=draw(st.floats(width=32, min_value=0.015625, max_value=1)),
        heights=heights,
        valid=valid,
    )


category_tables = st.dictionaries(
    st.sampled_from(list(ObjectCategory)), wire_floats, max_size=len(ObjectCategory)
)


@st.composite
def feature_vectors(draw):
    return FeatureVector(
        interpersonal=draw(st.one_of(st.none(), vec3)),
        pose_accommodation=draw(height_maps()),
        visual_attention=draw(category_tables),
        spatial=draw(category_tables),
    )


messages = st.one_of(
    st.builds(
        Hello,
        app_version=st.integers(0, 0xFFFF),
        room_hash=st.integers(0, 2**64 - 1),
        skeleton=st.tuples(*([wire_floats] * 13)),
    ),
    st.builds(
        PoseUpdate,
        tick=ticks,
        root=transforms,
        head=transforms,
        left_hand=transforms,
        right_hand=transforms,
        left_foot=transforms,
        right_foot=transforms,
        fingers=st.binary(max_size=64),
    ),
    st.builds(StateChange, tick=ticks, state=st.sampled_from(list(UserState))),
    st.builds(
        TargetUpdate,
        tick=ticks,
        effector=st.sampled_from(list(Effector)),
        active=st.booleans(),
        object_id=st.text(max_size=40),
        uvw=vec3,
    ),
    st.builds(
        PlacementAnnounce,
        tick=ticks,
        x=wire_floats,
        z=wire_floats,
        yaw=wire_floats,
        pose=st.sampled_from(list(PlacementPose)),
    ),
    st.builds(FeaturePacket, tick=ticks, features=feature_vectors()),
    st.just(Bye()),
)


# --- codec ---------------------------------------------------------------


@settings(max_examples=150, deadline=None)
@given(messages)
def test_codec_round_trip(msg):
    data = encode_frame(msg)
    decoded, end = decode_frame(data)
    assert end == len(data)
    assert decoded == msg
    assert encode_frame(decoded) == data  # stable re-encode


@settings(max_examples=40, deadline=None)
@given(st.lists(messages, min_size=1, max_size=6), st.data())
def test_stream_decodes_across_arbitrary_splits(msgs, data):
    stream = b"".join(encode_frame(m) for m in msgs)
    cut = data.draw(st.integers(0, len(stream)))
    collected = []
    buf = bytearray(stream[:cut])
    for chunk in (stream[cut:],):
        buf.extend(chunk)
    offset = 0
    while True:
        try:
            msg, offset = decode_frame(buf, offset)
        except Truncated:
            break
        collected.append(msg)
    assert collected == msgs
    assert decode_all(stream) == msgs


def test_every_truncation_point_raises_truncated():
    msg = TargetUpdate(
        tick=7, effector=Effector.RightHand, active=True,
        object_id="screen", uvw=(0.25, 0.5, 0.0),
    )
    data = encode_frame(msg)
    for cut in range(len(data)):
        with pytest.raises(Truncated):
            decode_frame(data[:cut])


def test_corrupted_frames_are_rejected():
    data = bytearray(encode_frame(StateChange(tick=1, state=UserState.Solo)))
    bad_magic = bytes([data[0] ^ 0xFF]) + bytes(data[1:])
    with pytest.raises(ProtocolError, match="magic"):
        decode_frame(bad_magic)

    bad_version = bytes(data[:2]) + bytes([99]) + bytes(data[3:])
    with pytest.raises(ProtocolError, match="version"):
        decode_frame(bad_version)

    bad_type = bytes(data[:3]) + bytes([0xEE]) + bytes(data[4:])
    with pytest.raises(ProtocolError, match="message type"):
        decode_frame(bad_type)

    bad_state = bytes(data[:-1]) + bytes([9])
    with pytest.raises(ProtocolError, match="state code"):
        decode_frame(bad_state)


def test_oversized_payload_is_rejected():
    inner = encode_frame(Bye())
    padded = inner + b"\x00"
    # fix up the declared length so the extra byte lands inside the payload
    import struct

    magic, version, code, _ = struct.unpack_from("<2sBBI", padded)
    forged = struct.pack("<2sBBI", magic, version, code, 1) + b"\x00"
    with pytest.raises(ProtocolError, match="unread"):
        decode_frame(forged)


def test_decode_all_rejects_trailing_garbage():
    stream = encode_frame(Bye()) + b"T"
    with pytest.raises(Truncated):
        decode_all(stream)


def test_f32_quantization_contract():
    assert f32(0.1) == 0.10000000149011612
    assert f32(f32(0.1)) == f32(0.1)
    assert f32(1.5) == 1.5  # exactly representable values pass through


def test_hello_validates_skeleton_length():
    with pytest.raises(ProtocolError):
        Hello(app_version=1, room_hash=0, skeleton=(1.0,) * 12)
    with pytest.raises(ProtocolError):
        WireTransform(position=(1, 2), orientation=(1, 0, 0, 0))


# --- session --------------------------------------------------------------


SKELETON = tuple(float(i) for i in range(13))


def pose_at(tick):
    t = WireTransform(position=(0.0, 0.9, 0.0), orientation=(1.0, 0.0, 0.0, 0.0))
    return PoseUpdate(
        tick=tick, root=t, head=t, left_hand=t, right_hand=t,
        left_foot=t, right_foot=t,
    )


def linked_pair():
    a = Session(app_version=1, room_hash=0xA, skeleton=SKELETON)
    b = Session(app_version=1, room_hash=0xB, skeleton=SKELETON)
    b.feed(a.hello_frame())
    a.feed(b.hello_frame())
    return a, b


def test_handshake_reaches_live_in_both_orders():
    a = Session(1, 0xA, SKELETON)
    b = Session(1, 0xB, SKELETON)
    ha = a.hello_frame()
    assert a.phase is Phase.Handshake  # local hello alone is not enough
    got = b.feed(ha)
    assert isinstance(got[0], Hello) and got[0].room_hash == 0xA
    assert b.phase is Phase.Handshake  # remote hello alone is not enough
    a.feed(b.hello_frame())
    assert a.phase is Phase.Live and b.phase is Phase.Live


def test_hello_can_only_be_sent_once():
    a = Session(1, 0xA, SKELETON)
    a.hello_frame()
    with pytest.raises(ProtocolError):
        a.hello_frame()


def test_duplicate_inbound_hello_closes():
    a, b = linked_pair()
    rogue = encode_frame(Hello(app_version=1, room_hash=0xB, skeleton=SKELETON))
    with pytest.raises(ProtocolError, match="duplicate"):
        a.feed(rogue)
    assert a.phase is Phase.Closed


def test_tick_requires_live_phase():
    a = Session(1, 0xA, SKELETON)
    with pytest.raises(ProtocolError):
        a.tick(0, pose_at(0), UserState.Solo)


def test_tick_emits_exactly_one_pose_and_dedups_state():
    a, b = linked_pair()
    frames = a.tick(0, pose_at(0), UserState.Solo)
    assert len(frames) == 1  # Solo is the assumed initial state: no change
    frames = a.tick(1, pose_at(1), UserState.Solo)
    assert len(frames) == 1
    frames = a.tick(2, pose_at(2), UserState.Locomotion)
    assert len(frames) == 2
    frames = a.tick(3, pose_at(3), UserState.Locomotion)
    assert len(frames) == 1  # unchanged state is not repeated
    assert a.sent["PoseUpdate"] == 4
    assert a.sent["StateChange"] == 1


def test_target_updates_dedup_at_f32_resolution():
    a, b = linked_pair()
    t0 = {Effector.Head: ("screen", (0.1, 0.5, 0.0)),
          Effector.LeftHand: None, Effector.RightHand: None}
    frames = a.tick(0, pose_at(0), UserState.Solo, targets=t0)
    assert len(frames) == 2  # pose + one activation
    # same point, but computed with double rounding noise below f32 steps
    t1 = {Effector.Head: ("screen", (f32(0.1), 0.5, 0.0)),
          Effector.LeftHand: None, Effector.RightHand: None}
    frames = a.tick(1, pose_at(1), UserState.Solo, targets=t1)
    assert len(frames) == 1  # deduplicated
    t2 = {Effector.Head: None, Effector.LeftHand: None, Effector.RightHand: None}
    frames = a.tick(2, pose_at(2), UserState.Solo, targets=t2)
    assert len(frames) == 2  # explicit drop
    drop = decode_all(frames[1])[0]
    assert isinstance(drop, TargetUpdate) and not drop.active


def test_outbound_ticks_must_increase():
    a, _ = linked_pair()
    a.tick(5, pose_at(5), UserState.Solo)
    with pytest.raises(ProtocolError, match="not after"):
        a.tick(5, pose_at(5), UserState.Solo)
    with pytest.raises(ProtocolError, match="pose update tick"):
        a.tick(6, pose_at(7), UserState.Solo)


def test_placement_announce_tick_must_match():
    a, _ = linked_pair()
    with pytest.raises(ProtocolError, match="placement tick"):
        a.tick(
            0, pose_at(0), UserState.Solo,
            placement=PlacementAnnounce(
                tick=3, x=0.0, z=0.0, yaw=0.0, pose=PlacementPose.Standing
            ),
        )


def test_inbound_batch_rules():
    a, b = linked_pair()
    # a batch must lead with its pose update
    rogue = encode_frame(StateChange(tick=0, state=UserState.Locomotion))
    with pytest.raises(ProtocolError, match="lead with its pose"):
        b.feed(rogue)
    assert b.phase is Phase.Closed

    a2, b2 = linked_pair()
    frames = a2.tick(4, pose_at(4), UserState.Locomotion)
    got = b2.feed(b"".join(frames))
    assert [type(m) for m in got] == [PoseUpdate, StateChange]
    regress = encode_frame(pose_at(3))
    with pytest.raises(TickRegression):
        b2.feed(regress)
    assert b2.phase is Phase.Closed
    assert b2.feed(b"x") == []  # closed sessions ignore input


def test_message_before_hello_is_rejected():
    a = Session(1, 0xA, SKELETON)
    a.hello_frame()
    with pytest.raises(ProtocolError, match="before hello"):
        a.feed(encode_frame(pose_at(0)))


def test_partial_frames_are_buffered_across_feeds():
    a, b = linked_pair()
    frame = a.tick(0, pose_at(0), UserState.Solo)[0]
    assert b.feed(frame[:10]) == []
    got = b.feed(frame[10:])
    assert len(got) == 1 and isinstance(got[0], PoseUpdate)


def test_bye_keeps_sender_open_until_the_peer_answers():
    a, b = linked_pair()
    a.tick(0, pose_at(0), UserState.Solo)
    bye = a.bye_frame()
    assert a.phase is Phase.Live  # still reading the peer's in-flight frames
    with pytest.raises(ProtocolError, match="after bye"):
        a.tick(1, pose_at(1), UserState.Solo)

    got = b.feed(bye)
    assert isinstance(got[-1], Bye)
    assert b.phase is Phase.Closed
    a.feed(b.bye_frame())
    assert a.phase is Phase.Closed


def test_received_counters_track_messages():
    a, b = linked_pair()
    frames = a.tick(0, pose_at(0), UserState.Locomotion)
    b.feed(b"".join(frames))
    assert b.received["PoseUpdate"] == 1
    assert b.received["StateChange"] == 1
    assert b.received["Hello"] == 1
