"""Regenerate the five-frame KITTI-layout fixture from a synthetic street.

Run from the repository root: ``python3 tests/fixtures/make_kitti_fixture.py``.
Images are stored as 8-bit gray PNG like the KITTI grayscale odometry set.
"""

import shutil
import tempfile
from pathlib import Path

import numpy as np
from PIL import Image

from dynavo.datasets import load_generic
from dynavo.imaging import as_gray, load_image
from dynavo.synth import parse_script, render_sequence

SCRIPT = {
    "name": "kitti_fixture",
    "width": 620, "height": 188, "fx": 360, "baseline": 0.54,
    "frame_count": 5, "frame_rate": 10, "noise": 0, "seed": 21,
    "static": [
        {"type": "plane", "axis": "y", "center": [0, 1.65, 20], "size": [14, 44], "texture_seed": 1},
        {"type": "plane", "axis": "x", "center": [-5, 0, 20], "size": [8, 44], "texture_seed": 2,
         "tint": [0.9, 0.85, 0.8]},
        {"type": "plane", "axis": "x", "center": [5, 0, 20], "size": [8, 44], "texture_seed": 3,
         "tint": [0.8, 0.9, 0.85]},
        {"type": "plane", "axis": "z", "center": [0, 0, 40], "size": [14, 8], "texture_seed": 4},
        {"type": "box", "center": [-3.2, 0.9, 12], "size": [1.5, 1.5, 3], "texture_seed": 5},
        {"type": "box", "center": [3.0, 0.6, 16], "size": [1.8, 2.1, 4], "texture_seed": 6},
    ],
    "camera": [{"frame": 0, "position": [0, 0, 0], "rotation": [0, 0, 0]},
               {"frame": 4, "position": [0.05, 0, 1.2], "rotation": [0, 0.02, 0]}],
}

CALIB = "P0: {fx!r} 0 {cx!r} 0 0 {fy!r} {cy!r} 0 0 0 1 0\nP1: {fx!r} 0 {cx!r} {tx!r} 0 {fy!r} {cy!r} 0 0 0 1 0\n"


def build(out: Path):
    with tempfile.TemporaryDirectory() as tmp:
        render_sequence(parse_script(SCRIPT), Path(tmp) / "seq")
        src = load_generic(Path(tmp) / "seq")
        seq = out / "sequences" / "00"
        if out.exists():
            shutil.rmtree(out)
        for sub, files in (("image_0", src.left), ("image_1", src.right)):
            (seq / sub).mkdir(parents=True)
            for i, p in enumerate(files):
                Image.fromarray(as_gray(load_image(p))).save(seq / sub / f"{i:06d}.png")
        c = src.config
        (seq / "calib.txt").write_text(CALIB.format(fx=c.fx, fy=c.fy, cx=c.cx, cy=c.cy, tx=-c.fx * c.baseline))
        (seq / "times.txt").write_text("".join(f"{t:.6e}\n" for t in src.timestamps))
        (out / "poses").mkdir()
        shutil.copyfile(Path(tmp) / "seq" / "poses.txt", out / "poses" / "00.txt")


if __name__ == "__main__":
    build(Path(__file__).with_name("kitti"))
