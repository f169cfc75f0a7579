"""Sparse pyramidal Lucas-Kanade flow between consecutive left frames."""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import ndimage

from .imaging import ImagePyramid, as_gray, harris_response, image_gradients

TRACKED = 0
LOST = 1
BORDER_REJECTED = 2
STATUS_NAMES = {TRACKED: "tracked", LOST: "lost", BORDER_REJECTED: "border_rejected"}


@dataclass(frozen=True)
class FlowTracks:
    """Point pairs ``prev -> curr`` with per-pair status and residual."""

    prev: np.ndarray
    curr: np.ndarray
    status: np.ndarray
    residual: np.ndarray
    image_size: tuple  # (width, height)

    def __len__(self):
        return len(self.prev)

    @property
    def tracked(self) -> np.ndarray:
        return self.status == TRACKED

    @property
    def flow(self) -> np.ndarray:
        return self.curr - self.prev

    def subset(self, idx) -> "FlowTracks":
        return FlowTracks(self.prev[idx], self.curr[idx], self.status[idx],
                          self.residual[idx], self.image_size)


@dataclass(frozen=True)
class LKParams:
    levels: int = 3
    scale_factor: float = 2.0
    window: int = 21
    max_iters: int = 30
    eps: float = 0.01
    max_residual: float = 25.0
    min_eig_factor: float = 1e-4
    fb_threshold: float | None = 1.0


def select_flow_points(img, max_points: int = 300, min_distance: float = 10.0,
                       quality: float = 0.01, window: int = 3, border: int = 3) -> np.ndarray:
    """Strongest Harris local maxima, thinned to a minimum spacing.

    Returns an ``(n, 2)`` array of ``(x, y)`` pixel coordinates, strongest
    first.
    """
    if max_points < 1:
        raise ValueError("max_points must be >= 1")
    if not 0.0 < quality < 1.0:
        raise ValueError("quality must be in (0, 1)")
    R = harris_response(as_gray(img), window)
    top = R.max()
    if not top > 0:
        return np.zeros((0, 2))
    local_max = ndimage.maximum_filter(R, size=3, mode="constant", cval=-np.inf)
    cand = (R >= local_max) & (R >= quality * top) & (R > 0)
    if border > 0:
        cand[:border, :] = False
        cand[-border:, :] = False
        cand[:, :border] = False
        cand[:, -border:] = False
    ys, xs = np.nonzero(cand)
    order = np.lexsort((xs, ys, -R[ys, xs]))
    xs, ys = xs[order], ys[order]

    cell = max(float(min_distance), 1.0)
    grid = {}
    chosen = []
    d2 = float(min_distance) ** 2
    for x, y in zip(xs.tolist(), ys.tolist()):
        cx, cy = int(x // cell), int(y // cell)
        ok = True
        for gx in (cx - 1, cx, cx + 1):
            for gy in (cy - 1, cy, cy + 1):
                for (px, py) in grid.get((gx, gy), ()):
                    if (px - x) ** 2 + (py - y) ** 2 < d2:
                        ok = False
                        break
                if not ok:
                    break
            if not ok:
                break
        if ok:
            grid.setdefault((cx, cy), []).append((x, y))
            chosen.append((x, y))
            if len(chosen) >= max_points:
                break
    return np.array(chosen, dtype=np.float64).reshape(-1, 2)


class _Level:
    """Padded level raster with gradient images, ready for patch gathers."""

    def __init__(self, img, pad):
        f = np.asarray(img, dtype=np.float64)
        self.h, self.w = f.shape
        self.pad = pad
        # single precision halves the patch-gather traffic; sums stay well inside its range
        self.img = np.pad(f, pad, mode="edge").astype(np.float32)
        ix, iy = image_gradients(f)
        self.ix = np.pad(ix, pad, mode="edge").astype(np.float32)
        self.iy = np.pad(iy, pad, mode="edge").astype(np.float32)


def _patches(raster, x, y, win, pad):
    """Bilinear ``win x win`` patches whose top-left corners sit at ``(x, y)``."""
    H, W = raster.shape
    xp = np.clip(x + pad, 0.0, W - win - 1.0)
    yp = np.clip(y + pad, 0.0, H - win - 1.0)
    x0 = np.floor(xp).astype(np.intp)
    y0 = np.floor(yp).astype(np.intp)
    ax = (xp - x0).astype(raster.dtype)[:, None, None]
    ay = (yp - y0).astype(raster.dtype)[:, None, None]
    view = sliding_window_view(raster, (win + 1, win + 1))
    P = view[y0, x0]
    top = P[:, :-1, :-1] * (1.0 - ax) + P[:, :-1, 1:] * ax
    bot = P[:, 1:, :-1] * (1.0 - ax) + P[:, 1:, 1:] * ax
    return top * (1.0 - ay) + bot * ay


def _lk(prev_levels, curr_levels, scale_factor, pts, p: LKParams):
    n = len(pts)
    win = p.window
    half = win // 2
    area = float(win * win)
    lost = np.zeros(n, dtype=bool)
    guess = np.zeros((n, 2))
    nlev = len(prev_levels)
    for L in range(nlev - 1, -1, -1):
        s = scale_factor ** L
        P = pts / s
        A = prev_levels[L]
        B = curr_levels[L]
        tl_x = P[:, 0] - half
        tl_y = P[:, 1] - half
        T = _patches(A.img, tl_x, tl_y, win, A.pad)
        gx = _patches(A.ix, tl_x, tl_y, win, A.pad)
        gy = _patches(A.iy, tl_x, tl_y, win, A.pad)
        gxx = (gx * gx).sum(axis=(1, 2), dtype=np.float64)
        gyy = (gy * gy).sum(axis=(1, 2), dtype=np.float64)
        gxy = (gx * gy).sum(axis=(1, 2), dtype=np.float64)
        tr = gxx + gyy
        det = gxx * gyy - gxy * gxy
        min_eig = 0.5 * (tr - np.sqrt(np.maximum((gxx - gyy) ** 2 + 4 * gxy * gxy, 0.0)))
        lost |= min_eig < p.min_eig_factor * area
        safe_det = np.where(np.abs(det) > 1e-12, det, 1.0)
        d = np.zeros((n, 2))
        active = ~lost
        for _ in range(p.max_iters):
            idx = np.nonzero(active)[0]
            if len(idx) == 0:
                break
            J = _patches(B.img, tl_x[idx] + guess[idx, 0] + d[idx, 0],
                         tl_y[idx] + guess[idx, 1] + d[idx, 1], win, B.pad)
            e = T[idx] - J
            bx = (e * gx[idx]).sum(axis=(1, 2), dtype=np.float64)
            by = (e * gy[idx]).sum(axis=(1, 2), dtype=np.float64)
            dx = (gyy[idx] * bx - gxy[idx] * by) / safe_det[idx]
            dy = (gxx[idx] * by - gxy[idx] * bx) / safe_det[idx]
            d[idx, 0] += dx
            d[idx, 1] += dy
            active[idx] = np.hypot(dx, dy) >= p.eps
        if L > 0:
            guess = (guess + d) * scale_factor
        else:
            guess = guess + d
    curr = pts + guess
    A, B = prev_levels[0], curr_levels[0]
    tl_x = pts[:, 0] - half
    tl_y = pts[:, 1] - half
    T = _patches(A.img, tl_x, tl_y, win, A.pad)
    J = _patches(B.img, curr[:, 0] - half, curr[:, 1] - half, win, B.pad)
    residual = np.abs(T - J).mean(axis=(1, 2), dtype=np.float64)
    w, h = B.w, B.h
    outside = (curr[:, 0] < 0) | (curr[:, 1] < 0) | (curr[:, 0] > w - 1) | (curr[:, 1] > h - 1)
    lost |= outside | ~np.isfinite(residual) | (residual > p.max_residual)
    return curr, lost, residual


def track(prev: ImagePyramid, curr: ImagePyramid, points, params: LKParams = LKParams()) -> FlowTracks:
    """Track ``points`` from ``prev`` into ``curr`` with coarse-to-fine LK.

    The pyramids must have the same number of levels and a common level-0
    size; their scale factor sets the coarse-to-fine coordinate mapping. With
    ``params.fb_threshold`` set, points are tracked back into ``prev`` and
    marked lost when they miss their origin by more than that many pixels.
    """
    if prev.shape != curr.shape or len(prev) != len(curr):
        raise ValueError(f"pyramid mismatch: {prev.shape}/{len(prev)} vs {curr.shape}/{len(curr)}")
    if params.window < 3 or params.window % 2 == 0:
        raise ValueError("window must be odd and >= 3")
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    h, w = prev.shape
    n = len(pts)
    if n == 0:
        z = np.zeros((0, 2))
        return FlowTracks(z, z.copy(), np.zeros(0, np.int8), np.zeros(0), (w, h))
    pad = params.window // 2 + 2
    A = [_Level(prev[k], pad) for k in range(len(prev))]
    B = [_Level(curr[k], pad) for k in range(len(curr))]
    fwd, lost, residual = _lk(A, B, prev.scale_factor, pts, params)
    if params.fb_threshold is not None:
        ok = np.nonzero(~lost)[0]
        if len(ok):
            back, back_lost, _ = _lk(B, A, prev.scale_factor, fwd[ok], params)
            err = np.hypot(*(back - pts[ok]).T)
            lost[ok] |= back_lost | (err > params.fb_threshold)
    status = np.where(lost, LOST, TRACKED).astype(np.int8)
    return FlowTracks(pts.copy(), fwd, status, residual, (w, h))


def near_border(xy, image_size, margin) -> np.ndarray:
    """True where a point is within ``margin`` px of an edge (inclusive)."""
    w, h = image_size
    xy = np.asarray(xy, dtype=np.float64).reshape(-1, 2)
    return ((xy[:, 0] <= margin) | (xy[:, 1] <= margin)
            | (xy[:, 0] >= w - 1 - margin) | (xy[:, 1] >= h - 1 - margin))


def reject_border_pairs(tracks: FlowTracks, margin: float = 10.0) -> FlowTracks:
    """Mark tracked pairs with either endpoint near an image edge."""
    if margin < 0:
        raise ValueError("margin must be >= 0")
    bad = near_border(tracks.prev, tracks.image_size, margin) | near_border(tracks.curr, tracks.image_size, margin)
    status = tracks.status.copy()
    status[bad & (status == TRACKED)] = BORDER_REJECTED
    return replace(tracks, status=status)


def write_flow_csv(path, tracks: FlowTracks) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["prev_x", "prev_y", "curr_x", "curr_y", "status"])
        for (px, py), (cx, cy), st in zip(tracks.prev, tracks.curr, tracks.status):
            wr.writerow([f"{px:.4f}", f"{py:.4f}", f"{cx:.4f}", f"{cy:.4f}", STATUS_NAMES[int(st)]])
