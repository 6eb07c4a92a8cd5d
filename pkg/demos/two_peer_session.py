"""End-to-end session: two scripted users, two rooms, one deterministic report.

Peer A walks through the office, studies the wall screen, and points at it.
Peer B crosses the loft and settles by the lounge chair. Each side hosts the
other's avatar: placements are chosen when a walk ends, locomotion is played
in place at the chosen spot, and A's pointing is re-aimed at the loft's
paired projector wall. The wire transcript replays to the byte-identical
report.
"""

from __future__ import annotations

import math
from pathlib import Path

from twinroom import SimConfig, TraceBuilder, load_room, replay, run
from twinroom.scene import denormalize_hit

ROOMS = Path(__file__).parent / "rooms"


def office_trace(screen_spot) -> TraceBuilder:
    return (
        TraceBuilder(start=(-0.8, -1.2), yaw=0.3)
        .hold(0.3)
        .walk_to(0.3, 0.8, speed=1.1)
        .hold(0.6)
        .gaze_at(screen_spot, seconds=0.9)
        .point_at(screen_spot, side="right", hold_s=1.2)
        .lower_hands()
        .walk_to(-1.2, -0.6, speed=1.0)
        .hold(0.8)
    )


def loft_trace() -> TraceBuilder:
    return (
        TraceBuilder(start=(2.0, 1.6), yaw=-2.0)
        .hold(0.4)
        .walk_to(-0.4, -0.9, speed=1.2)
        .hold(0.8)
        .gaze_at([-0.9, 1.0, -1.35], seconds=0.7)
        .hold(1.0)
    )


def main() -> None:
    office = load_room(ROOMS / "office_a.json")
    loft = load_room(ROOMS / "loft_b.json")
    screen_spot = denormalize_hit(office.object("wall_screen"), (0.55, 0.6, 1.0))

    trace_a = office_trace(screen_spot).build()
    trace_b = loft_trace().build()
    print(f"trace A: {len(trace_a)} ticks, trace B: {len(trace_b)} ticks")

    result = run(office, loft, trace_a, trace_b, SimConfig(seed=42))
    report = result.report

    print(f"\nsimulated {report['ticks']} ticks at {report['config']['tick_rate']:.0f} Hz")
    for owner, host_room in (("a", loft), ("b", office)):
        print(f"\navatar of peer {owner.upper()} (lives in {host_room.id}):")
        for ep, search in zip(report["episodes"][owner], report["search"][owner]):
            print(f"  episode {ep['episode']}: tick {ep['tick']:4d} -> "
                  f"x={ep['x']:6.2f} z={ep['z']:6.2f} yaw={math.degrees(ep['yaw']):7.1f} deg "
                  f"{ep['pose']} (score {search['score']:.3f})")

    print("\npointing rows (miss is against the paired loft surface):")
    for row in report["pointing"]["a"]:
        print(f"  {row['side']} hand -> {row['object']}: ticks {row['first_tick']}-{row['last_tick']}, "
              f"{row['samples']} samples, max miss {row['max_miss']:.2e} m")

    states = [f"{t['tick']}:{t['state']}" for t in report["transitions"]["a"]]
    print(f"\npeer A state transitions: {' '.join(states)}")

    rebuilt = replay(result.transcript, office, loft)
    print(f"\nreplay from the transcript matches the live report: {rebuilt == report}")

    out = Path(__file__).parent / "out"
    out.mkdir(exist_ok=True)
    (out / "transcript.jsonl").write_text(result.transcript)
    (out / "report.json").write_text(result.report_json)
    print(f"wrote {out / 'transcript.jsonl'} and {out / 'report.json'}")
    print("\nthe CLI runs the same session from files:")
    print("  twinroom-sim --room-a demos/rooms/office_a.json --room-b demos/rooms/loft_b.json \\")
    print("      --trace-a a.jsonl --trace-b b.jsonl --seed 42 --report report.json")


if __name__ == "__main__":
    main()
