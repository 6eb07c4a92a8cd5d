"""Per-tick user classification: solo, locomotion, or interaction.

Locomotion is driven by pelvis speed with hysteresis (separate start and stop
thresholds, no transition inside the band). Interaction is driven by gaze and
hand fixation: a raycast that keeps hitting the same paired object past a
dwell threshold registers that object as the effector's target. A lifted hand
that has no own fixation can additionally inherit the gaze target when its
motion converges on it, i.e. when both the hand-to-target distance and the
hand-aim angle shrink fast enough over a trailing window.

Everything here is a pure function of the snapshot stream and configuration;
identical inputs produce identical state and event streams.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .geometry import FORWARD, quat_rotate
from .scene import NormalizedHit, Ray, Room, denormalize_hit, normalize_hit, raycast


class InsufficientSamples(ValueError):
    pass


class UserState(Enum):
    Solo = 0
    Locomotion = 1
    Interaction = 2


class Effector(Enum):
    Head = 0
    LeftHand = 1
    RightHand = 2


class StateEvent(Enum):
    StartWIP = "StartWIP"
    RequestPlacement = "RequestPlacement"
    Teleport = "Teleport"


@dataclass(frozen=True)
class EffectorSample:
    """One tracked body part in a snapshot. `lifted` is meaningful for hands
    only and is carried by whoever produced the snapshot (see hand_lifted)."""

    position: np.ndarray
    orientation: np.ndarray
    lifted: bool = False

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float))
        object.__setattr__(self, "orientation", np.asarray(self.orientation, dtype=float))

    def forward(self) -> np.ndarray:
        return quat_rotate(self.orientation, FORWARD)

    def ray(self) -> Ray:
        f = self.forward()
        return Ray(origin=self.position, direction=f / np.linalg.norm(f))


@dataclass(frozen=True)
class UserSnapshot:
    tick: int
    root: EffectorSample
    head: EffectorSample
    left_hand: EffectorSample
    right_hand: EffectorSample
    left_foot: EffectorSample
    right_foot: EffectorSample
    fingers: bytes = b""

    def hand(self, effector: Effector) -> EffectorSample:
        if effector is Effector.LeftHand:
            return self.left_hand
        if effector is Effector.RightHand:
            return self.right_hand
        raise ValueError(f"{effector} is not a hand")


@dataclass(frozen=True)
class StateConfig:
    locomotion_threshold: float = 0.4      # m/s, speed above which walking starts
    stop_threshold: float = 0.15           # m/s, speed below which walking ends
    fixation_threshold: float = 0.5        # s of sustained hit to register a target
    v_threshold: float = -0.2              # m/s, required mean closing rate (negative)
    omega_threshold: float = -math.radians(20.0)  # rad/s, required aim-angle rate
    condition_period: float = 0.3          # s, trailing window for the two rates
    speed_window: float = 0.166            # s, pelvis displacement window
    lift_height: float = 0.35              # m above root for the lifted predicate
    lift_pitch: float = -math.radians(30.0)  # hand forward pitch above this counts too

    def __post_init__(self):
        if not (self.locomotion_threshold > self.stop_threshold > 0.0):
            raise ValueError(
                "locomotion_threshold must exceed stop_threshold and both be positive, "
                f"got {self.locomotion_threshold} / {self.stop_threshold}"
            )
        if self.fixation_threshold <= 0.0 or self.condition_period <= 0.0 or self.speed_window <= 0.0:
            raise ValueError("time windows must be positive")
        if not (self.v_threshold < 0.0 and self.omega_threshold < 0.0):
            raise ValueError("convergence thresholds must be negative rates")


def hand_lifted(root: EffectorSample, hand: EffectorSample, cfg: StateConfig) -> bool:
    """A hand counts as lifted when it is raised well above the pelvis or is
    aimed at or above slightly-below-horizontal (a hanging arm points down)."""
    if float(hand.position[1]) - float(root.position[1]) >= cfg.lift_height:
        return True
    f = hand.forward()
    pitch = math.asin(max(-1.0, min(1.0, float(f[1]))))
    return pitch >= cfg.lift_pitch


# --- pelvis speed -----------------------------------------------------------

class SpeedWindow:
    """Ring buffer of (tick, root x, root z) spanning the speed window."""

    def __init__(self, tick_rate: float, span: float = 0.166):
        if tick_rate <= 0.0 or span <= 0.0:
            raise ValueError("tick_rate and span must be positive")
        self.tick_rate = float(tick_rate)
        self.span_ticks = max(1, round(span * tick_rate))
        self._samples: deque[tuple[int, float, float]] = deque()

    def push(self, tick: int, root_position) -> None:
        self._samples.append((tick, float(root_position[0]), float(root_position[2])))
        while self._samples[-1][0] - self._samples[0][0] > self.span_ticks:
            self._samples.popleft()

    def __len__(self) -> int:
        return len(self._samples)

    def clear(self) -> None:
        self._samples.clear()

    @property
    def first(self) -> tuple[int, float, float]:
        return self._samples[0]

    @property
    def last(self) -> tuple[int, float, float]:
        return self._samples[-1]


def pelvis_speed(window: SpeedWindow) -> float:
    """Horizontal displacement speed between the window's endpoints.

    Deliberately displacement-based: a path that returns to its start within
    the window reads as (near) zero speed.
    """
    if len(window) < 2:
        raise InsufficientSamples("speed needs at least two samples")
    t0, x0, z0 = window.first
    t1, x1, z1 = window.last
    dt = (t1 - t0) / window.tick_rate
    return math.hypot(x1 - x0, z1 - z0) / dt


# --- locomotion state -------------------------------------------------------

def step_locomotion(
    state: UserState, speed: float, cfg: StateConfig
) -> tuple[UserState, tuple[StateEvent, ...]]:
    """Advance the walking aspect of the state machine by one tick.

    Entering locomotion freezes the avatar in place (StartWIP); leaving it
    requests a fresh placement and teleports there. Speeds inside the open
    band (stop_threshold, locomotion_threshold) never cause a transition.
    """
    if state is UserState.Locomotion:
        if speed < cfg.stop_threshold:
            return UserState.Solo, (StateEvent.RequestPlacement, StateEvent.Teleport)
        return state, ()
    if speed > cfg.locomotion_threshold:
        return UserState.Locomotion, (StateEvent.StartWIP,)
    return state, ()


# --- fixation ---------------------------------------------------------------

RegisteredTarget = tuple[str, NormalizedHit, np.ndarray]  # id, local hit, world point


@dataclass
class EffectorFixation:
    candidate: str | None = None
    accumulated: float = 0.0
    target: RegisteredTarget | None = None

    def clear(self) -> None:
        self.candidate = None
        self.accumulated = 0.0
        self.target = None


class ConvergenceWindow:
    """Trailing window of (tick, distance, angle) samples toward one target.

    Samples must be tick-contiguous; a gap discards the history. The window
    spans the configured condition period once newest - oldest >= span ticks.
    """

    def __init__(self, tick_rate: float, period: float):
        self.tick_rate = float(tick_rate)
        self.span_ticks = max(1, round(period * tick_rate))
        self._samples: deque[tuple[int, float, float]] = deque()

    def push(self, tick: int, distance: float, angle: float) -> None:
        if self._samples and tick != self._samples[-1][0] + 1:
            self._samples.clear()
        self._samples.append((tick, distance, angle))
        while self._samples[-1][0] - self._samples[0][0] > self.span_ticks:
            self._samples.popleft()

    def clear(self) -> None:
        self._samples.clear()

    def spans_period(self) -> bool:
        return bool(self._samples) and self._samples[-1][0] - self._samples[0][0] >= self.span_ticks

    def __len__(self) -> int:
        return len(self._samples)

    def _slope(self, index: int) -> float:
        # least-squares slope of sample column `index` against time in seconds
        if not self.spans_period():
            raise InsufficientSamples("window does not span the condition period yet")
        n = len(self._samples)
        t0 = self._samples[0][0]
        ts = [(s[0] - t0) / self.tick_rate for s in self._samples]
        vs = [s[index] for s in self._samples]
        t_mean = sum(ts) / n
        v_mean = sum(vs) / n
        num = 0.0
        den = 0.0
        for t, v in zip(ts, vs):
            tc = t - t_mean
            num += tc * (v - v_mean)
            den += tc * tc
        return num / den

    def distance_rate(self) -> float:
        return self._slope(1)

    def angle_rate(self) -> float:
        return self._slope(2)


def check_distance_condition(window: ConvergenceWindow, cfg: StateConfig) -> bool:
    """True iff the hand-to-target distance shrinks faster than v_threshold
    on average over the whole window."""
    return window.distance_rate() < cfg.v_threshold


def check_angle_condition(window: ConvergenceWindow, cfg: StateConfig) -> bool:
    """True iff the angle between the hand's aim and the target direction
    closes faster than omega_threshold on average over the whole window."""
    return window.angle_rate() < cfg.omega_threshold


@dataclass
class HandChannel:
    fixation: EffectorFixation
    window: ConvergenceWindow
    window_target: str | None = None
    converged_to: str | None = None


@dataclass
class FixationTracker:
    """Per-effector fixation state plus hand convergence bookkeeping."""

    tick_rate: float
    cfg: StateConfig
    head: EffectorFixation = field(default_factory=EffectorFixation)
    hands: dict[Effector, HandChannel] = field(init=False)

    def __post_init__(self):
        self.hands = {
            e: HandChannel(
                fixation=EffectorFixation(),
                window=ConvergenceWindow(self.tick_rate, self.cfg.condition_period),
            )
            for e in (Effector.LeftHand, Effector.RightHand)
        }

    def fixation(self, effector: Effector) -> EffectorFixation:
        if effector is Effector.Head:
            return self.head
        return self.hands[effector].fixation

    def clear_all(self) -> None:
        self.head.clear()
        for ch in self.hands.values():
            ch.fixation.clear()
            ch.window.clear()
            ch.window_target = None
            ch.converged_to = None


def _interaction_candidate(room: Room, object_id: str) -> bool:
    # only paired objects are legitimate targets; everything else (walls,
    # unpaired clutter) merely occludes
    return room.by_id[object_id].pair_id is not None


def update_fixation(
    tracker: FixationTracker,
    effector: Effector,
    ray: Ray,
    room: Room,
    dt: float,
    cfg: StateConfig,
    lifted: bool = True,
) -> FixationTracker:
    """Accumulate dwell time on whatever paired object the ray keeps hitting.

    The registered target refreshes its hit point every tick while fixation
    holds, so a gaze sliding along a screen keeps the target current. Hands
    accumulate only while lifted. A miss, an unpaired hit, or a candidate
    switch restarts the clock and drops any registered target.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    fx = tracker.fixation(effector)
    if effector is not Effector.Head and not lifted:
        fx.clear()
        return tracker

    hit = raycast(room, ray)
    if hit is None or not _interaction_candidate(room, hit.object_id):
        fx.clear()
        return tracker
    if hit.object_id != fx.candidate:
        fx.candidate = hit.object_id
        fx.accumulated = 0.0
        fx.target = None
    fx.accumulated += dt
    if fx.accumulated >= cfg.fixation_threshold:
        obj = room.by_id[hit.object_id]
        nhit = normalize_hit(obj, hit.world_point)
        fx.target = (hit.object_id, nhit, np.asarray(hit.world_point, dtype=float))
    return tracker


def acquire_targets(
    tracker: FixationTracker,
    snapshot: UserSnapshot,
    room: Room,
    cfg: StateConfig,
) -> dict[Effector, tuple[str, NormalizedHit] | None]:
    """Resolve this tick's interaction targets for head and both hands.

    The head's target is its own fixation. Each lifted hand first takes its
    own fixation; additionally, while the head holds a target the hand's
    motion is tracked against it, and once both the distance and the angle
    conditions hold, the gaze target is assigned to the hand. That assignment
    latches: it survives the hand slowing down at the end of its reach, and
    drops when the gaze target changes or the hand lowers. Head and hands may
    end up with different targets.
    """
    head_target = tracker.head.target
    out: dict[Effector, tuple[str, NormalizedHit] | None] = {
        Effector.Head: (head_target[0], head_target[1]) if head_target else None
    }

    for side in (Effector.LeftHand, Effector.RightHand):
        ch = tracker.hands[side]
        hand = snapshot.hand(side)
        if not hand.lifted:
            ch.converged_to = None
            ch.window.clear()
            ch.window_target = None
            out[side] = None
            continue

        if ch.converged_to is not None and (
            head_target is None or head_target[0] != ch.converged_to
        ):
            ch.converged_to = None

        if head_target is None:
            ch.window.clear()
            ch.window_target = None
        else:
            if ch.window_target != head_target[0]:
                ch.window.clear()
                ch.window_target = head_target[0]
            to_target = head_target[2] - hand.position
            d = float(np.linalg.norm(to_target))
            if d < 1e-9:
                angle = 0.0
            else:
                f = hand.forward()
                cos_a = float(np.dot(f, to_target)) / (float(np.linalg.norm(f)) * d)
                angle = math.acos(max(-1.0, min(1.0, cos_a)))
            ch.window.push(snapshot.tick, d, angle)

        own = ch.fixation.target
        assigned: str | None = None
        if head_target is not None:
            differs = own is None or own[0] != head_target[0]
            if ch.converged_to == head_target[0]:
                assigned = head_target[0]
            elif differs and ch.window.spans_period():
                if check_distance_condition(ch.window, cfg) and check_angle_condition(ch.window, cfg):
                    ch.converged_to = head_target[0]
                    assigned = head_target[0]

        if assigned is not None:
            out[side] = (head_target[0], head_target[1])
        elif own is not None:
            out[side] = (own[0], own[1])
        else:
            out[side] = None
    return out


def classify_state(
    locomotion_state: UserState,
    targets: dict[Effector, tuple[str, NormalizedHit] | None],
) -> UserState:
    """Locomotion dominates; otherwise any registered target means
    interaction; otherwise solo."""
    if locomotion_state is UserState.Locomotion:
        return UserState.Locomotion
    if any(v is not None for v in targets.values()):
        return UserState.Interaction
    return UserState.Solo


def target_world_point(room: Room, object_id: str, hit: NormalizedHit) -> np.ndarray:
    """Convenience: a registered target's current world point in `room`."""
    return denormalize_hit(room.object(object_id), hit)
