"""From a labeled point cloud to a streetlight map.

Scatters survey-style points around a handful of lamp heads, adds street
clutter, clusters the cloud with DBSCAN, and saves the result in the map
JSON format the localizer consumes.  Mirrors the `nightrider build-map`
subcommand.

Run with:  python3 demos/06_map_building.py
"""

import numpy as np

from nightrider.mapping import build_map, save_map


def main():
    rng = np.random.default_rng(11)
    lamps = np.array([
        [8.0, 6.0, 4.2], [28.0, 6.1, 4.0], [48.0, 5.9, 4.1],
        [68.0, -5.8, 4.3], [88.0, 6.0, 4.0],
    ])

    clouds = [c + rng.normal(scale=0.15, size=(rng.integers(30, 80), 3)) for c in lamps]
    clutter = rng.uniform([0, -10, 0], [100, 10, 2], size=(40, 3))
    points = np.concatenate(clouds + [clutter])
    rng.shuffle(points)
    print(f"survey cloud: {len(points)} points "
          f"({len(clutter)} of them street clutter)")

    smap = build_map(points, eps=1.0, min_pts=5, map_id="demo-street")
    print(f"DBSCAN found {len(smap.clusters)} clusters:")
    for c in smap.clusters:
        nearest = np.linalg.norm(lamps - c.center, axis=1).min()
        print(f"  cluster {c.id}: center {np.round(c.center, 2)}, "
              f"{len(c.points)} points, {nearest:.3f} m from a true lamp")

    save_map(smap, "demo_map.json")
    print("wrote demo_map.json (loadable by `nightrider localize --map ...`)")


if __name__ == "__main__":
    main()
