"""Camera models, epipolar geometry and rectified stereo."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DegenerateGeometry, EstimationFailed, InvalidDepth
from .imaging import ImagePyramid, Keypoints, hamming_matrix


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if not (0 < self.cx < self.width and 0 < self.cy < self.height):
            raise ValueError("principal point must lie inside the image")

    @property
    def K(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])


@dataclass(frozen=True)
class StereoRig:
    """Rectified stereo pair sharing one set of intrinsics."""

    intrinsics: CameraIntrinsics
    baseline: float

    def __post_init__(self):
        if not self.baseline > 0:
            raise ValueError("baseline must be positive")

    @property
    def max_disparity(self) -> float:
        return self.intrinsics.width / 8.0


# --------------------------------------------------------------------------
# Projection
# --------------------------------------------------------------------------

def project(points, K: CameraIntrinsics) -> np.ndarray:
    P = np.asarray(points, dtype=np.float64)
    z = P[..., 2]
    return np.stack([K.fx * P[..., 0] / z + K.cx, K.fy * P[..., 1] / z + K.cy], axis=-1)


def backproject(u, v, Z, K: CameraIntrinsics) -> np.ndarray:
    """Camera-frame point for pixel ``(u, v)`` at depth ``Z`` (broadcasts)."""
    Z = np.asarray(Z, dtype=np.float64)
    if np.any(Z <= 0):
        raise InvalidDepth("depth must be positive")
    X = (np.asarray(u, dtype=np.float64) - K.cx) * Z / K.fx
    Y = (np.asarray(v, dtype=np.float64) - K.cy) * Z / K.fy
    return np.stack(np.broadcast_arrays(X, Y, Z), axis=-1)


def disparity_to_depth(d, rig: StereoRig):
    d = np.asarray(d, dtype=np.float64)
    if np.any(d <= 0):
        raise InvalidDepth("disparity must be positive")
    Z = rig.intrinsics.fx * rig.baseline / d
    return float(Z) if Z.ndim == 0 else Z


def depth_to_disparity(Z, rig: StereoRig):
    Z = np.asarray(Z, dtype=np.float64)
    if np.any(Z <= 0):
        raise InvalidDepth("depth must be positive")
    d = rig.intrinsics.fx * rig.baseline / Z
    return float(d) if d.ndim == 0 else d


# --------------------------------------------------------------------------
# Fundamental matrix
# --------------------------------------------------------------------------

def homogeneous(pts) -> np.ndarray:
    pts = np.asarray(pts, dtype=np.float64).reshape(-1, 2)
    return np.column_stack([pts, np.ones(len(pts))])


def normalize_fundamental(F) -> np.ndarray:
    F = np.asarray(F, dtype=np.float64)
    n = np.linalg.norm(F)
    if n == 0:
        raise DegenerateGeometry("zero fundamental matrix")
    F = F / n
    # fix the sign so equal matrices compare equal
    flat = F.reshape(-1)
    k = np.argmax(np.abs(flat))
    return F if flat[k] > 0 else -F


def _hartley(pts):
    c = pts.mean(axis=0)
    d = np.sqrt(((pts - c) ** 2).sum(axis=1)).mean()
    s = math.sqrt(2.0) / d if d > 0 else 1.0
    T = np.array([[s, 0.0, -s * c[0]], [0.0, s, -s * c[1]], [0.0, 0.0, 1.0]])
    return (pts - c) * s, T


def eight_point(x1, x2) -> np.ndarray:
    """Normalized 8-point fundamental matrix with ``x2^T F x1 = 0``.

    Raises ``DegenerateGeometry`` when the linear system has more than a
    one-dimensional null space (e.g. collinear points).
    """
    x1 = np.asarray(x1, dtype=np.float64)
    x2 = np.asarray(x2, dtype=np.float64)
    if len(x1) < 8:
        raise DegenerateGeometry("need at least 8 correspondences")
    n1, T1 = _hartley(x1)
    n2, T2 = _hartley(x2)
    u1, v1 = n1[:, 0], n1[:, 1]
    u2, v2 = n2[:, 0], n2[:, 1]
    A = np.column_stack([u2 * u1, u2 * v1, u2, v2 * u1, v2 * v1, v2, u1, v1, np.ones(len(u1))])
    _, S, Vt = np.linalg.svd(A)
    if len(S) < 9:
        S = np.r_[S, np.zeros(9 - len(S))]
    if S[7] <= 1e-8 * S[0]:
        raise DegenerateGeometry("rank-deficient correspondence set")
    F = Vt[-1].reshape(3, 3)
    U, s, Vt2 = np.linalg.svd(F)
    F = U @ np.diag([s[0], s[1], 0.0]) @ Vt2
    F = T2.T @ F @ T1
    return normalize_fundamental(F)


def epipolar_lines(F, pts, side: str = "current") -> np.ndarray:
    """Lines ``(a, b, c)`` per point.

    ``side="current"`` maps previous-image points to lines ``F x`` in the
    current image; ``side="previous"`` maps current-image points to lines
    ``F^T x'`` in the previous image.
    """
    X = homogeneous(pts)
    if side == "current":
        return X @ np.asarray(F).T
    if side == "previous":
        return X @ np.asarray(F)
    raise ValueError(f"side must be 'current' or 'previous', not {side!r}")


@dataclass(frozen=True)
class EpipolarLine:
    a: float
    b: float
    c: float

    @property
    def degenerate(self) -> bool:
        return self.a == 0.0 and self.b == 0.0


def epipolar_line(F, x, side: str = "current") -> EpipolarLine:
    a, b, c = epipolar_lines(F, np.asarray(x, dtype=np.float64)[:2], side)[0]
    return EpipolarLine(float(a), float(b), float(c))


def point_line_distance(p, line) -> float:
    if isinstance(line, EpipolarLine):
        a, b, c = line.a, line.b, line.c
    else:
        a, b, c = line
    n = math.hypot(a, b)
    if n == 0:
        raise DegenerateGeometry("degenerate line: a = b = 0 (point is the epipole)")
    return abs(a * p[0] + b * p[1] + c) / n


def _line_distances(lines, pts):
    n = np.hypot(lines[:, 0], lines[:, 1])
    num = np.abs(lines[:, 0] * pts[:, 0] + lines[:, 1] * pts[:, 1] + lines[:, 2])
    with np.errstate(divide="ignore", invalid="ignore"):
        d = num / n
    return np.where(n > 0, d, np.inf)


def symmetric_epipolar_distance(F, x1, x2) -> np.ndarray:
    """Max of the two point-to-epipolar-line distances, in pixels."""
    x1 = np.asarray(x1, dtype=np.float64).reshape(-1, 2)
    x2 = np.asarray(x2, dtype=np.float64).reshape(-1, 2)
    d2 = _line_distances(epipolar_lines(F, x1, "current"), x2)
    d1 = _line_distances(epipolar_lines(F, x2, "previous"), x1)
    return np.maximum(d1, d2)


def classify_epipolar(x1, x2, F, threshold: float = 1.0, scale=None) -> np.ndarray:
    """Inlier flags: symmetric epipolar distance within ``threshold`` pixels.

    ``scale`` optionally multiplies the threshold per point (pyramid scale of
    the feature).
    """
    if not threshold > 0:
        raise ValueError("threshold must be positive")
    thr = threshold if scale is None else threshold * np.asarray(scale, dtype=np.float64)
    return symmetric_epipolar_distance(F, x1, x2) <= thr


def ransac_iterations(inlier_ratio, sample_size, confidence, max_iters):
    if inlier_ratio <= 0:
        return max_iters
    p_good = inlier_ratio ** sample_size
    if p_good >= 1.0:
        return 1
    denom = math.log(1.0 - p_good)
    if denom == 0:
        return max_iters
    return min(max_iters, int(math.ceil(math.log(1.0 - confidence) / denom)))


def estimate_fundamental_ransac(x1, x2, threshold: float = 1.0, confidence: float = 0.99,
                                max_iters: int = 1000, rng=None):
    """Robust fundamental matrix from point pairs ``x1 -> x2``.

    Returns ``(F, inliers)``. Samples of 8 pairs are solved with the
    normalized 8-point method and scored by symmetric epipolar distance; the
    final matrix is re-fit on the consensus set.

    When the static parallax between the two views is below ``threshold`` the
    epipole is barely constrained, and a consensus F can also absorb an
    independently moving region. The check needs real ego-translation.
    """
    x1 = np.asarray(x1, dtype=np.float64).reshape(-1, 2)
    x2 = np.asarray(x2, dtype=np.float64).reshape(-1, 2)
    n = len(x1)
    if n < 8:
        raise EstimationFailed(f"need at least 8 correspondences, got {n}")
    rng = np.random.default_rng(0) if rng is None else rng
    best_inl = None
    best_count = -1
    best_err = np.inf
    needed = max_iters
    it = 0
    while it < needed:
        it += 1
        sample = np.arange(8) if n == 8 else rng.choice(n, 8, replace=False)
        try:
            F = eight_point(x1[sample], x2[sample])
        except DegenerateGeometry:
            if n == 8:
                break
            continue
        d = symmetric_epipolar_distance(F, x1, x2)
        inl = d <= threshold
        count = int(inl.sum())
        err = float(np.minimum(d, threshold).sum())
        if count > best_count or (count == best_count and err < best_err):
            best_count, best_inl, best_err = count, inl, err
            needed = max(1, ransac_iterations(count / n, 8, confidence, max_iters))
        if n == 8:
            break
    if best_inl is None or best_count < 8:
        raise EstimationFailed("no non-degenerate fundamental matrix found")
    F = eight_point(x1[best_inl], x2[best_inl])
    inl = symmetric_epipolar_distance(F, x1, x2) <= threshold
    if inl.sum() >= 8 and not np.array_equal(inl, best_inl):
        try:
            F2 = eight_point(x1[inl], x2[inl])
            inl2 = symmetric_epipolar_distance(F2, x1, x2) <= threshold
            if inl2.sum() >= inl.sum():
                F, inl = F2, inl2
        except DegenerateGeometry:
            pass
    return F, inl


def fundamental_from_motion(K1: CameraIntrinsics, K2: CameraIntrinsics, R, t) -> np.ndarray:
    """F mapping image-1 points to image-2 lines for ``X2 = R X1 + t``."""
    tx = np.array([[0.0, -t[2], t[1]], [t[2], 0.0, -t[0]], [-t[1], t[0], 0.0]])
    E = tx @ np.asarray(R)
    F = np.linalg.inv(K2.K).T @ E @ np.linalg.inv(K1.K)
    return normalize_fundamental(F)


# --------------------------------------------------------------------------
# Stereo matching
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class StereoParams:
    search_band: float = 2.0
    max_disparity: float | None = None
    max_hamming: int = 64
    ratio: float = 0.9
    sad_window: int = 5
    sad_search: int = 2


def stereo_match(left: Keypoints, right: Keypoints, left_pyr: ImagePyramid, right_pyr: ImagePyramid,
                 rig: StereoRig, params: StereoParams = StereoParams()) -> np.ndarray:
    """Level-0 disparity for each left feature, ``nan`` where unmatched.

    Candidates are right features on the same pyramid level (+-1) whose
    level-0 row lies within ``search_band`` (scaled by level) and whose
    disparity lies in ``(-search_band, max_disparity]``. The best Hamming
    match must be <= ``max_hamming``, pass a best/second-best ratio test and
    have positive disparity, so a point at infinity is rejected rather than
    paired with some other feature further left. Its column is refined by a
    parabola through SAD costs of a ``sad_window`` square.
    """
    n = len(left)
    disp = np.full(n, np.nan)
    if n == 0 or len(right) == 0:
        return disp
    max_disp = rig.max_disparity if params.max_disparity is None else params.max_disparity
    lxy = left.xy0
    rxy = right.xy0
    ls = left.scale
    D = hamming_matrix(left.descriptors, right.descriptors).astype(np.float64)
    dy = np.abs(lxy[:, 1:2] - rxy[None, :, 1])
    dd = lxy[:, 0:1] - rxy[None, :, 0]
    band = params.search_band * ls[:, None]
    ok = (dy <= band) & (dd > -band) & (dd <= max_disp)
    ok &= np.abs(left.level[:, None] - right.level[None, :]) <= 1
    D[~ok] = np.inf
    order = np.argsort(D, axis=1, kind="stable")
    best = order[:, 0]
    d1 = D[np.arange(n), best]
    d2 = D[np.arange(n), order[:, 1]] if D.shape[1] > 1 else np.full(n, np.inf)
    good = np.isfinite(d1) & (d1 <= params.max_hamming) & (dd[np.arange(n), best] > 0)
    with np.errstate(invalid="ignore", divide="ignore"):
        good &= ~(d1 >= params.ratio * d2)
    half = params.sad_window // 2
    S = params.sad_search
    win = params.sad_window
    idx_all = np.nonzero(good)[0]
    for lev in np.unique(left.level[idx_all]).tolist():
        idx = idx_all[left.level[idx_all] == lev]
        s = left_pyr.scale(lev)
        L = left_pyr[lev].astype(np.float64)
        R = right_pyr[lev].astype(np.float64)
        h, w = L.shape
        xl = np.rint(left.x[idx]).astype(np.intp)
        yl = np.rint(left.y[idx]).astype(np.intp)
        xr = np.rint(rxy[best[idx], 0] / s).astype(np.intp)
        inside = ((yl - half >= 0) & (yl + half < h) & (xr - S - half >= 0) & (xr + S + half < w)
                  & (xl - half >= 0) & (xl + half < w))
        idx, xl, yl, xr = idx[inside], xl[inside], yl[inside], xr[inside]
        if len(idx) == 0:
            continue
        patch = sliding_window_view(L, (win, win))[yl - half, xl - half]
        strip = sliding_window_view(R, (win, win + 2 * S))[yl - half, xr - S - half]
        costs = np.stack([np.abs(patch - strip[:, :, j:j + win]).sum(axis=(1, 2))
                          for j in range(2 * S + 1)], axis=1)
        j = np.argmin(costs, axis=1)
        interior = (j > 0) & (j < 2 * S)
        jj = np.clip(j, 1, 2 * S - 1)
        rows = np.arange(len(idx))
        c0, c1, c2 = costs[rows, jj - 1], costs[rows, jj], costs[rows, jj + 1]
        denom = c0 - 2.0 * c1 + c2
        with np.errstate(invalid="ignore", divide="ignore"):
            delta = np.where(denom > 0, 0.5 * (c0 - c2) / denom, 0.0)
        x_right = xr + (j - S) + delta
        d = (xl - x_right) * s  # disparity of the patch center; locally constant
        ok = interior & (np.abs(delta) <= 1.0) & (d > 0) & (d <= max_disp)
        disp[idx[ok]] = d[ok]
    return disp
