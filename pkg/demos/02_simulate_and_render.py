"""
Simulating a spinning radar scan
================================

Places random point landmarks, sweeps the beam while the sensor moves, and
shows what motion distortion does to the polar scan.  Writes two SVG
renderings next to this script.
"""

from pathlib import Path

import numpy as np

from spinradar import (BodyVelocity, Pose, RadarConfig, SimScene,
                       render_cartesian, simulate_scan)

out = Path(__file__).parent

cfg = RadarConfig.navtech()
print(f"radar: {cfg.azimuths_per_rotation} azimuths per rotation, "
      f"{cfg.range_bins} bins of {cfg.range_resolution} m, "
      f"period {cfg.period} s")

# Fast forward motion with a strong yaw rate makes the distortion obvious.
w = BodyVelocity.planar(20.0, 0.0, 0.9)
scene = SimScene.random(80, w, seed=7, min_radius=10.0, max_radius=90.0)

frozen = simulate_scan(scene, Pose.identity(), 0.0, cfg,
                       doppler_on=False, distortion_on=False, seed=0)
moving = simulate_scan(scene, Pose.identity(), 0.0, cfg,
                       doppler_on=True, distortion_on=True, seed=0)

# Each azimuth of the moving scan was taken from a different pose, so the
# same landmark field lands in different cells.
diff = np.count_nonzero(frozen.power != moving.power)
print(f"{diff} polar cells differ between the frozen and moving scans")

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

for name, scan in (("frozen", frozen), ("moving", moving)):
    img = render_cartesian(scan, width=600, meters_per_pixel=0.35)
    fig, ax = plt.subplots(figsize=(6, 6))
    ax.imshow(img.pixels, cmap="gray_r",
              extent=[-105, 105, -105, 105])
    ax.set_title(f"{name} scan")
    ax.set_xlabel("x (m)")
    ax.set_ylabel("y (m)")
    path = out / f"scan_{name}.svg"
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    print("wrote", path)
