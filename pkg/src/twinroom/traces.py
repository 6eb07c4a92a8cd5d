"""Motion traces: recorded user movement fed into the simulator.

A trace is a JSONL file. The first line is a header with the tick rate and
the user's avatar skeleton (13 floats); every following line is one tick's
snapshot with world-space transforms for the root and the five tracked
effectors, the names of any lifted hands, and opaque finger bytes. Ticks
start at 1 (tick 0 is the handshake) and must be contiguous.

TraceBuilder composes traces from motion primitives (walk somewhere, look at
a point, point at a point, sit down) so scenarios and tests can script
deterministic sessions without recorded data.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .geometry import (
    FORWARD,
    Transform,
    look_rotation,
    normalized,
    quat_conj,
    quat_from_yaw,
    quat_mul,
    quat_rotate,
    slerp_vec,
)
from .retarget import Skeleton
from .states import EffectorSample, StateConfig, UserSnapshot, hand_lifted


class MalformedTrace(ValueError):
    pass


_EFFECTOR_FIELDS = ("root", "head", "left_hand", "right_hand", "left_foot", "right_foot")


@dataclass(frozen=True)
class MotionTrace:
    tick_rate: float
    skeleton: Skeleton
    snapshots: tuple[UserSnapshot, ...]

    def __post_init__(self):
        if self.tick_rate <= 0.0:
            raise MalformedTrace(f"tick rate must be positive, got {self.tick_rate}")
        for i, snap in enumerate(self.snapshots):
            if snap.tick != i + 1:
                raise MalformedTrace(
                    f"snapshot ticks must be contiguous from 1, got {snap.tick} at index {i}"
                )

    def __len__(self) -> int:
        return len(self.snapshots)


def _sample_to_list(s: EffectorSample) -> list[float]:
    return [float(v) for v in s.position] + [float(v) for v in s.orientation]


def _sample_from_list(vals, lifted: bool = False) -> EffectorSample:
    if len(vals) != 7:
        raise MalformedTrace(f"effector needs 7 floats (position + quaternion), got {len(vals)}")
    return EffectorSample(
        position=np.array(vals[0:3], dtype=float),
        orientation=np.array(vals[3:7], dtype=float),
        lifted=lifted,
    )


def save_trace(trace: MotionTrace, path) -> None:
    lines = [json.dumps(
        {"tick_rate": trace.tick_rate, "skeleton": list(trace.skeleton.to_floats())},
        sort_keys=True,
    )]
    for snap in trace.snapshots:
        doc = {"tick": snap.tick, "fingers": snap.fingers.hex()}
        lifted = [n for n in ("left_hand", "right_hand") if getattr(snap, n).lifted]
        if lifted:
            doc["lifted"] = lifted
        for name in _EFFECTOR_FIELDS:
            doc[name] = _sample_to_list(getattr(snap, name))
        lines.append(json.dumps(doc, sort_keys=True))
    Path(path).write_text("\n".join(lines) + "\n")


def load_trace(document) -> MotionTrace:
    """Load a trace from a JSONL file path or string content."""
    if isinstance(document, MotionTrace):
        return document
    text = document
    if isinstance(document, (str, Path)):
        # inline JSONL starts with '{'; anything else is treated as a path
        if isinstance(document, str) and document.lstrip().startswith("{"):
            text = document
        else:
            p = Path(document)
            if not p.exists():
                raise MalformedTrace(f"trace file not found: {document}")
            text = p.read_text()
    lines = [ln for ln in str(text).splitlines() if ln.strip()]
    if not lines:
        raise MalformedTrace("trace is empty")
    try:
        header = json.loads(lines[0])
        skeleton = Skeleton.from_floats(header["skeleton"])
        tick_rate = float(header["tick_rate"])
        snaps = []
        for ln in lines[1:]:
            doc = json.loads(ln)
            lifted = set(doc.get("lifted", ()))
            parts = {
                name: _sample_from_list(doc[name], lifted=name in lifted)
                for name in _EFFECTOR_FIELDS
            }
            snaps.append(UserSnapshot(
                tick=int(doc["tick"]),
                fingers=bytes.fromhex(doc.get("fingers", "")),
                **parts,
            ))
    except (KeyError, ValueError, TypeError) as e:
        if isinstance(e, MalformedTrace):
            raise
        raise MalformedTrace(f"bad trace document: {e}") from None
    return MotionTrace(tick_rate=tick_rate, skeleton=skeleton, snapshots=tuple(snaps))


# --- scripted motion --------------------------------------------------------

class TraceBuilder:
    """Compose a deterministic motion trace from primitives.

    The builder tracks the root in world space and every effector as a
    root-relative offset; primitives animate either side. Hands rest by the
    hips pointing steeply down, which keeps them below the lifted thresholds
    until point_at raises one.
    """

    def __init__(
        self,
        tick_rate: float = 60.0,
        skeleton: Skeleton | None = None,
        start=(0.0, 0.0),
        yaw: float = 0.0,
        root_height: float = 0.92,
        state_config: StateConfig | None = None,
    ):
        self.tick_rate = float(tick_rate)
        self.dt = 1.0 / self.tick_rate
        self.skeleton = skeleton if skeleton is not None else Skeleton()
        self.cfg = state_config if state_config is not None else StateConfig()
        self.stand_height = float(root_height)
        self.root = Transform(
            np.array([float(start[0]), float(root_height), float(start[1])]),
            quat_from_yaw(yaw),
        )
        sk = self.skeleton
        down = look_rotation(normalized(np.array([0.0, -1.0, 0.35])))
        self.rel: dict[str, Transform] = {
            "head": Transform(np.array([0.0, sk.spine + sk.neck, 0.0]), np.array([1.0, 0.0, 0.0, 0.0])),
            "left_hand": Transform(np.array([-0.24, -0.12, 0.08]), down),
            "right_hand": Transform(np.array([0.24, -0.12, 0.08]), down),
            "left_foot": Transform(np.array([-sk.hip_offset[0], -self.stand_height, 0.0]),
                                   np.array([1.0, 0.0, 0.0, 0.0])),
            "right_foot": Transform(np.array([sk.hip_offset[0], -self.stand_height, 0.0]),
                                    np.array([1.0, 0.0, 0.0, 0.0])),
        }
        self._rest_hands = {k: self.rel[k] for k in ("left_hand", "right_hand")}
        self.fingers = b""
        self.snapshots: list[UserSnapshot] = []

    # -- snapshot emission

    def _world(self, name: str) -> Transform:
        rel = self.rel[name]
        return Transform(
            self.root.apply(rel.position),
            quat_mul(self.root.orientation, rel.orientation),
        )

    def _sample(self, name: str, lifted: bool = False) -> EffectorSample:
        w = self._world(name)
        return EffectorSample(position=w.position, orientation=w.orientation, lifted=lifted)

    def _emit(self) -> None:
        tick = len(self.snapshots) + 1
        root = EffectorSample(position=self.root.position, orientation=self.root.orientation)
        hands = {}
        for name in ("left_hand", "right_hand"):
            w = self._world(name)
            sample = EffectorSample(position=w.position, orientation=w.orientation)
            hands[name] = EffectorSample(
                position=w.position,
                orientation=w.orientation,
                lifted=hand_lifted(root, sample, self.cfg),
            )
        self.snapshots.append(UserSnapshot(
            tick=tick,
            root=root,
            head=self._sample("head"),
            left_hand=hands["left_hand"],
            right_hand=hands["right_hand"],
            left_foot=self._sample("left_foot"),
            right_foot=self._sample("right_foot"),
            fingers=self.fingers,
        ))

    def _ticks(self, seconds: float) -> int:
        return max(1, round(seconds * self.tick_rate))

    # -- primitives

    def hold(self, seconds: float) -> "TraceBuilder":
        for _ in range(self._ticks(seconds)):
            self._emit()
        return self

    def turn_to(self, yaw: float, seconds: float = 0.2) -> "TraceBuilder":
        """Rotate the root in place; pelvis position stays put."""
        start_fwd = self.root.forward()
        end_fwd = np.array([math.sin(yaw), 0.0, math.cos(yaw)])
        n = self._ticks(seconds)
        for i in range(1, n + 1):
            fwd = slerp_vec(start_fwd, end_fwd, i / n)
            self.root = Transform(self.root.position, look_rotation(fwd))
            self._emit()
        return self

    def walk_to(self, x: float, z: float, speed: float = 1.0) -> "TraceBuilder":
        """Walk in a straight line at constant speed, facing the direction
        of travel; limbs ride along rigidly."""
        if speed <= 0.0:
            raise ValueError("walking speed must be positive")
        target = np.array([float(x), self.root.position[1], float(z)])
        delta = target - self.root.position
        dist = float(math.hypot(delta[0], delta[2]))
        if dist < 1e-9:
            return self
        direction = delta / dist
        yaw_q = look_rotation(np.array([direction[0], 0.0, direction[2]]))
        n = max(1, math.ceil(dist / (speed * self.dt)))
        start = self.root.position.copy()
        for i in range(1, n + 1):
            frac = min(1.0, i * speed * self.dt / dist)
            self.root = Transform(start + delta * frac, yaw_q)
            self._emit()
        return self

    def gaze_at(self, point, seconds: float = 1.0, turn_s: float = 0.15) -> "TraceBuilder":
        """Turn the head toward a world point, then dwell on it."""
        point = np.asarray(point, dtype=float)
        inv_q = quat_conj(self.root.orientation)
        n_turn = self._ticks(turn_s)
        start_fwd = quat_rotate(self._world("head").orientation, FORWARD)
        for i in range(1, n_turn + 1):
            head_pos = self._world("head").position
            desired = normalized(point - head_pos)
            fwd = slerp_vec(start_fwd, desired, i / n_turn)
            world_q = look_rotation(fwd)
            self.rel["head"] = Transform(self.rel["head"].position, quat_mul(inv_q, world_q))
            self._emit()
        remaining = self._ticks(seconds) - n_turn
        for _ in range(max(0, remaining)):
            self._emit()
        return self

    def point_at(self, point, side: str = "right", raise_s: float = 0.4,
                 hold_s: float = 1.0, reach: float = 0.45) -> "TraceBuilder":
        """Raise a hand so its aim ray passes through a world point.

        The raise is animated, which is what lets the target acquisition see
        the hand closing in on the gaze target (distance and aim angle both
        shrink while the arm comes up).
        """
        point = np.asarray(point, dtype=float)
        name = f"{side}_hand"
        sk = self.skeleton
        shoulder_world = self.root.apply(sk.shoulder_local(side))
        aim = normalized(point - shoulder_world)
        end_pos_world = shoulder_world + aim * min(reach, sk.arm_reach)
        end_fwd_world = normalized(point - end_pos_world)

        start = self.rel[name]
        start_pos_world = self.root.apply(start.position)
        start_fwd_world = quat_rotate(quat_mul(self.root.orientation, start.orientation), FORWARD)
        inv_q = quat_conj(self.root.orientation)
        n = self._ticks(raise_s)
        for i in range(1, n + 1):
            t = i / n
            pos_w = start_pos_world + (end_pos_world - start_pos_world) * t
            fwd_w = slerp_vec(start_fwd_world, end_fwd_world, t)
            self.rel[name] = Transform(
                self.root.inverse_apply(pos_w),
                quat_mul(inv_q, look_rotation(fwd_w)),
            )
            self._emit()
        for _ in range(self._ticks(hold_s)):
            self._emit()
        return self

    def lower_hands(self, seconds: float = 0.3) -> "TraceBuilder":
        """Ease both hands back to their resting pose by the hips."""
        starts = {k: self.rel[k] for k in ("left_hand", "right_hand")}
        n = self._ticks(seconds)
        for i in range(1, n + 1):
            t = i / n
            for name, rest in self._rest_hands.items():
                s = starts[name]
                pos = s.position + (rest.position - s.position) * t
                fwd_s = quat_rotate(s.orientation, FORWARD)
                fwd_r = quat_rotate(rest.orientation, FORWARD)
                self.rel[name] = Transform(pos, look_rotation(slerp_vec(fwd_s, fwd_r, t)))
            self._emit()
        for name, rest in self._rest_hands.items():
            self.rel[name] = rest
        return self

    def sit(self, root_height: float = 0.55, seconds: float = 0.5) -> "TraceBuilder":
        """Lower the pelvis to seated height (no horizontal motion)."""
        y0 = float(self.root.position[1])
        n = self._ticks(seconds)
        for i in range(1, n + 1):
            y = y0 + (root_height - y0) * (i / n)
            self.root = Transform(
                np.array([self.root.position[0], y, self.root.position[2]]),
                self.root.orientation,
            )
            self._emit()
        return self

    def stand(self, seconds: float = 0.5) -> "TraceBuilder":
        return self.sit(root_height=self.stand_height, seconds=seconds)

    def build(self) -> MotionTrace:
        return MotionTrace(
            tick_rate=self.tick_rate,
            skeleton=self.skeleton,
            snapshots=tuple(self.snapshots),
        )
