"""Room model walkthrough: raycasts, paired-surface mapping, and spatial queries.

Loads the two demo rooms, casts a gaze ray at the office screen, carries the
hit across to the loft's paired projector wall, and samples the queries the
placement search is built on (support heights, height maps, attention cones).
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from twinroom import Ray, load_room, normalize_hit, raycast, room_hash
from twinroom.geometry import normalized
from twinroom.scene import denormalize_hit, height_map, objects_in_fov, objects_in_radius, support_height_at

ROOMS = Path(__file__).parent / "rooms"


def main() -> None:
    office = load_room(ROOMS / "office_a.json")
    loft = load_room(ROOMS / "loft_b.json")
    print(f"{office.id}: {len(office.objects)} objects, hash {room_hash(office):016x}")
    print(f"{loft.id}:   {len(loft.objects)} objects, hash {room_hash(loft):016x}")

    # A standing user in the office looks at the left half of the wall screen.
    eye = np.array([0.6, 1.6, -0.3])
    look_at = np.array([-0.7, 1.5, 1.93])
    ray = Ray(origin=eye, direction=normalized(look_at - eye))
    hit = raycast(office, ray)
    assert hit is not None
    print(f"\ngaze ray hits {hit.object_id!r} at {np.round(hit.world_point, 3)} ({hit.distance:.2f} m)")

    obj = office.object(hit.object_id)
    norm = normalize_hit(obj, hit.world_point)
    print(f"normalized on the screen face: u={norm.u:.3f} v={norm.v:.3f} w={norm.w:.3f}")

    # The same normalized coordinates on the paired surface in the other room.
    partner = loft.object(obj.pair_id)
    carried = denormalize_hit(partner, norm)
    print(f"same spot on {partner.id!r} in {loft.id}: {np.round(carried, 3)}")

    print("\nsupport heights (what the floor offers at a point):")
    for label, x, z in (("open rug", 0.0, 0.0), ("under the desk", 1.5, 1.35), ("office doorway", -1.0, -1.5)):
        print(f"  {label:>16} ({x:5.2f},{z:5.2f}): {support_height_at(office, x, z):.2f} m")

    # Height map around the task chair: the grid the accommodation feature uses.
    hm = height_map(office, center=(1.35, 0.0, 0.55), radius=0.9, cell_size=0.3)
    n = hm.heights.shape[0]
    print(f"\nheight map around the task chair ({n}x{n} cells, 0.3 m):")
    for i in range(n):
        row = " ".join(
            f"{hm.heights[i, j]:4.2f}" if hm.valid[i, j] else " ·  "
            for j in range(n)
        )
        print(f"  {row}")

    fwd = np.array([math.sin(0.0), 0.0, math.cos(0.0)])  # facing +z, toward the screen wall
    cone = objects_in_fov(office, eye, fwd, half_angle=math.radians(55.0))
    print("\nobjects inside a 110 degree attention cone from the eye:")
    for oid, dist in cone:
        print(f"  {oid:>16}: {dist:.2f} m")

    near = objects_in_radius(office, (1.35, 0.0, 0.55), radius=1.2)
    print("\nobjects within 1.2 m of the task chair:")
    for oid, dist in near:
        print(f"  {oid:>16}: {dist:.2f} m")


if __name__ == "__main__":
    main()
