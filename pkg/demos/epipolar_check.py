"""Classify optical flow between two frames of the demo scene by epipolar distance.

Renders frames k and k+1, tracks Harris points with pyramidal LK, fits a
fundamental matrix with RANSAC and reports how the flow on the moving car
and on the static room is classified. An overlay image marks inliers green,
outliers red and the car's ground-truth mask in blue.

    python3 demos/epipolar_check.py --frame 40 --out /tmp/epi.ppm
"""

import argparse

import numpy as np

from dynavo.flow import LKParams, reject_border_pairs, select_flow_points, track
from dynavo.geometry import classify_epipolar, estimate_fundamental_ransac
from dynavo.imaging import as_gray, build_pyramid, write_netpbm
from dynavo.semantics import pixel_labels
from dynavo.synth import Scene, demo_script_path, frame_rng, load_script, quantize


def render_pair(script, k):
    scene = Scene(script)
    out = []
    for f in (k, k + 1):
        left, _ = scene.render(f)
        out.append((quantize(left.rgb, script.noise, frame_rng(script.seed, f, 0)), left.label))
    return out


def mark(img, xy, color, r=2):
    h, w = img.shape[:2]
    for x, y in np.rint(xy).astype(int):
        img[max(y - r, 0):min(y + r + 1, h), max(x - r, 0):min(x + r + 1, w)] = color


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--frame", type=int, default=40)
    ap.add_argument("--threshold", type=float, default=1.0, help="epipolar distance threshold (px)")
    ap.add_argument("--out", default="epipolar_check.ppm")
    args = ap.parse_args()

    script = load_script(demo_script_path())
    (rgb0, lab0), (rgb1, _) = render_pair(script, args.frame)
    p = LKParams()
    g0, g1 = as_gray(rgb0), as_gray(rgb1)
    seeds = select_flow_points(g0, 300, 10.0, border=11)
    tracks = reject_border_pairs(track(build_pyramid(g0, p.levels, p.scale_factor),
                                       build_pyramid(g1, p.levels, p.scale_factor), seeds, p))
    ok = tracks.tracked
    x1, x2 = tracks.prev[ok], tracks.curr[ok]
    F, _ = estimate_fundamental_ransac(x1, x2, args.threshold, rng=np.random.default_rng(0))
    inlier = classify_epipolar(x1, x2, F, args.threshold)
    on_car = pixel_labels(lab0, x1) > 0

    for name, sel in (("car", on_car), ("room", ~on_car)):
        n = int(sel.sum())
        frac = (~inlier[sel]).mean() if n else float("nan")
        print(f"{name:5s} {n:4d} tracked points, {frac:6.1%} epipolar outliers")
    med = np.median(np.hypot(*(x2 - x1)[~on_car].T))
    print(f"median static flow {med:.2f} px")

    overlay = rgb0.copy()
    overlay[lab0 > 0] = (0.6 * overlay[lab0 > 0] + [0, 0, 100]).astype(np.uint8)
    mark(overlay, x1[inlier], (0, 220, 0))
    mark(overlay, x1[~inlier], (230, 0, 0))
    write_netpbm(args.out, overlay)
    print(f"overlay written to {args.out}")


if __name__ == "__main__":
    main()
