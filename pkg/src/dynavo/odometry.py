"""Frame-to-frame stereo tracking with dynamic-feature rejection.

The tracker runs, per frame: ORB extraction on the stereo pair (the
previous left frame's features are cached), Harris-seeded LK flow from the
previous left frame, a RANSAC fundamental matrix on the flow pairs, epipolar
classification of flow pairs and ORB matches, semantic mask rejection,
stereo matching, and a motion-only pose fit (P3P RANSAC followed by
Huber-weighted Levenberg-Marquardt on reprojection error).
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateGeometry, EstimationFailed, TrackingLost
from .flow import FlowTracks, LKParams, reject_border_pairs, select_flow_points, track
from .geometry import (CameraIntrinsics, StereoParams, StereoRig, backproject, classify_epipolar,
                       estimate_fundamental_ransac, ransac_iterations, stereo_match)
from .imaging import Keypoints, OrbParams, as_gray, build_pyramid, extract_orb, hamming_matrix
from .semantics import (ClassTable, connected_components, dilate_dynamic, movement_check, pixel_labels,
                        reject_masked_features)
from .trajectory import PoseSE3, project_to_so3, so3_exp


# --------------------------------------------------------------------------
# Descriptor matching and feature classification
# --------------------------------------------------------------------------

def match_features(desc_prev, desc_curr, max_hamming: int = 64, ratio: float = 0.8, allowed=None) -> np.ndarray:
    """Mutual nearest neighbours under Hamming distance.

    ``allowed`` optionally masks candidate pairs (shape ``(n_prev, n_curr)``).
    Returns an ``(k, 2)`` array of ``(prev_index, curr_index)`` pairs.
    """
    n1, n2 = len(desc_prev), len(desc_curr)
    if n1 == 0 or n2 == 0:
        return np.zeros((0, 2), np.int64)
    D = hamming_matrix(desc_prev, desc_curr).astype(np.float64)
    if allowed is not None:
        D[~allowed] = np.inf
    best_c = np.argmin(D, axis=1)
    best_p = np.argmin(D, axis=0)
    rows = np.arange(n1)
    d1 = D[rows, best_c]
    if n2 > 1:
        part = np.partition(D, 1, axis=1)
        d2 = part[:, 1]
    else:
        d2 = np.full(n1, np.inf)
    keep = (best_p[best_c] == rows) & np.isfinite(d1) & (d1 <= max_hamming)
    with np.errstate(invalid="ignore"):
        keep &= ~(d1 >= ratio * d2)
    idx = np.nonzero(keep)[0]
    return np.column_stack([idx, best_c[idx]]).astype(np.int64)


@dataclass
class TrackedFeatures:
    """Keypoints with their stereo status; camera-frame points for stereo ones."""

    keypoints: Keypoints
    stereo: np.ndarray
    depth: np.ndarray
    points: np.ndarray

    def __len__(self):
        return len(self.keypoints)


def classify_mono_stereo(keypoints: Keypoints, disparities, rig: StereoRig, max_depth: float) -> TrackedFeatures:
    d = np.asarray(disparities, dtype=np.float64)
    n = len(keypoints)
    depth = np.full(n, np.nan)
    valid = np.isfinite(d) & (d > 0)
    depth[valid] = rig.intrinsics.fx * rig.baseline / d[valid]
    stereo = valid & (depth <= max_depth)
    pts = np.full((n, 3), np.nan)
    if stereo.any():
        xy = keypoints.xy0[stereo]
        pts[stereo] = backproject(xy[:, 0], xy[:, 1], depth[stereo], rig.intrinsics)
    depth[~stereo] = np.nan
    return TrackedFeatures(keypoints, stereo, depth, pts)


# --------------------------------------------------------------------------
# Perspective-three-point
# --------------------------------------------------------------------------

def bearings(uv, K: CameraIntrinsics) -> np.ndarray:
    uv = np.asarray(uv, dtype=np.float64).reshape(-1, 2)
    b = np.column_stack([(uv[:, 0] - K.cx) / K.fx, (uv[:, 1] - K.cy) / K.fy, np.ones(len(uv))])
    return b / np.linalg.norm(b, axis=1, keepdims=True)


def rigid_fit(src, dst):
    """``(R, t)`` minimising ``sum |dst - (R src + t)|^2``."""
    cs, cd = src.mean(axis=0), dst.mean(axis=0)
    H = (src - cs).T @ (dst - cd)
    U, _, Vt = np.linalg.svd(H)
    D = np.diag([1.0, 1.0, np.sign(np.linalg.det(Vt.T @ U.T))])
    R = Vt.T @ D @ U.T
    return R, cd - R @ cs


def p3p(world, bear) -> list:
    """Grunert's three-point solution.

    ``world`` holds three points, ``bear`` their unit bearing vectors in the
    camera. Returns a list of world-to-camera ``(R, t)`` candidates.
    """
    P1, P2, P3 = world
    j1, j2, j3 = bear
    a = np.linalg.norm(P2 - P3)
    b = np.linalg.norm(P1 - P3)
    c = np.linalg.norm(P1 - P2)
    if min(a, b, c) < 1e-9:
        return []
    ca, cb, cg = j2 @ j3, j1 @ j3, j1 @ j2
    a2, b2, c2 = a * a, b * b, c * c
    q = (a2 - c2) / b2
    p = (a2 + c2) / b2
    A4 = (q - 1.0) ** 2 - 4.0 * c2 / b2 * ca * ca
    A3 = 4.0 * (q * (1.0 - q) * cb - (1.0 - p) * ca * cg + 2.0 * c2 / b2 * ca * ca * cb)
    A2 = 2.0 * (q * q - 1.0 + 2.0 * q * q * cb * cb + 2.0 * (b2 - c2) / b2 * ca * ca
                - 4.0 * p * ca * cb * cg + 2.0 * (b2 - a2) / b2 * cg * cg)
    A1 = 4.0 * (-q * (1.0 + q) * cb + 2.0 * a2 / b2 * cg * cg * cb - (1.0 - p) * ca * cg)
    A0 = (1.0 + q) ** 2 - 4.0 * a2 / b2 * cg * cg
    coeffs = np.array([A4, A3, A2, A1, A0])
    if not np.all(np.isfinite(coeffs)) or np.abs(coeffs).max() == 0:
        return []
    roots = np.roots(coeffs)
    out = []
    scale = max(1.0, float(np.abs(roots).max())) if len(roots) else 1.0
    for r in roots:
        if abs(r.imag) > 1e-6 * scale:
            continue
        v = r.real
        if v <= 0:
            continue
        den = 2.0 * (cg - v * ca)
        if abs(den) < 1e-12:
            continue
        u = ((-1.0 + q) * v * v - 2.0 * q * cb * v + 1.0 + q) / den
        if u <= 0:
            continue
        s1sq = b2 / (1.0 + v * v - 2.0 * v * cb)
        if not s1sq > 0:
            continue
        s1 = math.sqrt(s1sq)
        cam = np.array([s1 * j1, u * s1 * j2, v * s1 * j3])
        R, t = rigid_fit(np.asarray(world), cam)
        out.append((R, t))
    return out


# --------------------------------------------------------------------------
# Motion-only pose refinement
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class PoseParams:
    huber_delta: float = 2.45
    chi2: float = 5.99
    max_iters: int = 20
    update_tol: float = 1e-8
    min_matches: int = 10
    min_inliers: int = 8
    ransac_confidence: float = 0.99
    ransac_max_iters: int = 200
    ransac_min_support: float = 0.6
    rounds: int = 2


def reprojection_residuals(R, t, world, uv, K: CameraIntrinsics, sigma=None):
    """Residuals ``(pi(R X + t) - u) / sigma`` and their Jacobian.

    The Jacobian is with respect to a left perturbation ``(rho, phi)`` of the
    world-to-camera transform: ``X_c -> exp(phi) X_c + rho``. Shapes:
    residuals ``(n, 2)``, Jacobian ``(n, 2, 6)``.
    """
    Xc = world @ R.T + t
    x, y, z = Xc[:, 0], Xc[:, 1], Xc[:, 2]
    iz = 1.0 / z
    u = K.fx * x * iz + K.cx
    v = K.fy * y * iz + K.cy
    r = np.column_stack([u, v]) - uv
    n = len(world)
    Jp = np.zeros((n, 2, 3))
    Jp[:, 0, 0] = K.fx * iz
    Jp[:, 0, 2] = -K.fx * x * iz * iz
    Jp[:, 1, 1] = K.fy * iz
    Jp[:, 1, 2] = -K.fy * y * iz * iz
    # d(exp(phi) X)/dphi = -[X]x
    skew = np.zeros((n, 3, 3))
    skew[:, 0, 1], skew[:, 0, 2] = z, -y
    skew[:, 1, 0], skew[:, 1, 2] = -z, x
    skew[:, 2, 0], skew[:, 2, 1] = y, -x
    J = np.concatenate([Jp, Jp @ skew], axis=2)
    if sigma is not None:
        inv = 1.0 / np.asarray(sigma, dtype=np.float64)
        r = r * inv[:, None]
        J = J * inv[:, None, None]
    return r, J


def huber_cost(e, delta):
    """g2o-style robust cost of residual norms ``e``: e^2 inside, 2 d e - d^2 outside."""
    return np.where(e <= delta, e * e, 2.0 * delta * e - delta * delta)


def _apply_update(R, t, xi):
    dR = so3_exp(xi[3:])
    return project_to_so3(dR @ R), dR @ t + xi[:3]


def refine_pose(R, t, world, uv, K, sigma=None, params: PoseParams = PoseParams()):
    """Levenberg-Marquardt on the Huber reprojection cost.

    Returns ``(R, t, costs)`` where ``costs`` records the accepted cost after
    each iteration (non-increasing).
    """
    def cost_of(R_, t_):
        r_, _ = reprojection_residuals(R_, t_, world, uv, K, sigma)
        e_ = np.linalg.norm(r_, axis=1)
        with np.errstate(invalid="ignore"):
            c_ = huber_cost(e_, params.huber_delta).sum()
        return c_ if np.isfinite(c_) else np.inf

    cost = cost_of(R, t)
    costs = [cost]
    lam = 1e-4
    for _ in range(params.max_iters):
        r, J = reprojection_residuals(R, t, world, uv, K, sigma)
        e = np.linalg.norm(r, axis=1)
        w = np.where(e <= params.huber_delta, 1.0, params.huber_delta / np.maximum(e, 1e-12))
        H = np.einsum("n,nij,nik->jk", w, J, J)
        g = np.einsum("n,nij,ni->j", w, J, r)
        accepted = False
        step = np.zeros(6)
        while lam < 1e10:
            A = H + lam * np.diag(np.maximum(np.diag(H), 1e-9))
            try:
                step = np.linalg.solve(A, -g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            R_new, t_new = _apply_update(R, t, step)
            c_new = cost_of(R_new, t_new)
            if c_new <= cost:
                R, t, cost = R_new, t_new, c_new
                lam = max(lam * 0.1, 1e-9)
                accepted = True
                break
            lam *= 10.0
        if not accepted:
            break
        costs.append(cost)
        if np.linalg.norm(step) < params.update_tol:
            break
    return R, t, costs


def estimate_pose(world, uv, K: CameraIntrinsics, prior: PoseSE3, sigma=None,
                  params: PoseParams = PoseParams(), rng=None):
    """Camera-to-world pose from 3D world points and their 2D observations.

    Initialised by P3P RANSAC, or by ``prior`` when RANSAC support is below
    ``params.ransac_min_support``; refined by robust LM. Returns
    ``(pose, inliers)``; raises ``TrackingLost`` when fewer than
    ``min_matches`` observations are given or fewer than ``min_inliers``
    survive the chi-square gate.
    """
    world = np.asarray(world, dtype=np.float64).reshape(-1, 3)
    uv = np.asarray(uv, dtype=np.float64).reshape(-1, 2)
    n = len(world)
    if n < params.min_matches:
        raise TrackingLost(f"only {n} matches for pose estimation (need {params.min_matches})")
    sigma = np.ones(n) if sigma is None else np.asarray(sigma, dtype=np.float64)
    rng = np.random.default_rng(0) if rng is None else rng
    gate = params.chi2 * sigma ** 2

    prior_cw = prior.inverse()
    R0, t0 = prior_cw.R, prior_cw.t

    def inliers_of(R_, t_):
        Xc = world @ R_.T + t_
        with np.errstate(divide="ignore", invalid="ignore"):
            proj = np.column_stack([K.fx * Xc[:, 0] / Xc[:, 2] + K.cx, K.fy * Xc[:, 1] / Xc[:, 2] + K.cy])
            err2 = ((proj - uv) ** 2).sum(axis=1)
        return (Xc[:, 2] > 0) & (err2 < gate)

    prior_inl = inliers_of(R0, t0)
    best = (int(prior_inl.sum()), R0, t0)
    bear = bearings(uv, K)
    # the prior is scored like any hypothesis, so a good prediction ends the search early
    needed = ransac_iterations(best[0] / n, 3, params.ransac_confidence, params.ransac_max_iters)
    it = 0
    while it < needed:
        it += 1
        s = rng.choice(n, 3, replace=False)
        for R_, t_ in p3p(world[s], bear[s]):
            cnt = int(inliers_of(R_, t_).sum())
            if cnt > best[0]:
                best = (cnt, R_, t_)
                needed = ransac_iterations(cnt / n, 3, params.ransac_confidence, params.ransac_max_iters)
    support = best[0] / n
    if support >= params.ransac_min_support:
        R, t = best[1], best[2]
    else:
        R, t = R0, t0

    use = np.ones(n, dtype=bool)
    for rnd in range(max(params.rounds, 1)):
        if use.sum() < 3:
            break
        R, t, _ = refine_pose(R, t, world[use], uv[use], K, sigma[use], params)
        r, _ = reprojection_residuals(R, t, world, uv, K, sigma)
        e2 = (r ** 2).sum(axis=1)
        Xc = world @ R.T + t
        inl = (e2 < params.chi2) & (Xc[:, 2] > 0)
        use = inl
    inliers = use
    if int(inliers.sum()) < params.min_inliers:
        raise TrackingLost(f"only {int(inliers.sum())} pose inliers (need {params.min_inliers})")
    pose = PoseSE3(project_to_so3(R), t).inverse()
    return PoseSE3(project_to_so3(pose.R), pose.t), inliers


# --------------------------------------------------------------------------
# Per-frame tracker
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class FlowSelectParams:
    max_points: int = 300
    min_distance: float = 10.0
    quality: float = 0.01
    window: int = 3
    border_margin: float = 10.0


@dataclass(frozen=True)
class EpipolarParams:
    threshold: float = 1.0
    confidence: float = 0.99
    max_iters: int = 500
    static_flow: float = 0.5


@dataclass(frozen=True)
class SemanticParams:
    dilation_radius: int = 5
    min_area: int = 100
    tau_move: float = 0.5
    n_min: int = 5
    static_override: bool = False


@dataclass(frozen=True)
class TrackerParams:
    orb: OrbParams = OrbParams()
    flow_select: FlowSelectParams = FlowSelectParams()
    lk: LKParams = LKParams()
    epipolar: EpipolarParams = EpipolarParams()
    stereo: StereoParams = StereoParams()
    semantic: SemanticParams = SemanticParams()
    pose: PoseParams = PoseParams()
    match_max_hamming: int = 64
    match_ratio: float = 0.8
    match_window: float = 120.0
    max_depth: float | None = None  # default: 40 x baseline
    filter_dynamic: bool = True
    seed: int = 0


@dataclass(frozen=True)
class FrameInput:
    index: int
    timestamp: float
    left: np.ndarray
    right: np.ndarray
    mask: np.ndarray | None = None


@dataclass(frozen=True)
class Diagnostics:
    """Immutable per-frame record of what the tracker saw and rejected."""

    index: int
    timestamp: float
    detected: int = 0
    mask_rejected: int = 0
    epipolar_rejected: int = 0
    rejected: int = 0
    matched: int = 0
    pose_matches: int = 0
    inliers: int = 0
    stereo: int = 0
    flow_points: int = 0
    flow_tracked: int = 0
    flow_outliers: int = 0
    fundamental_ok: bool = False
    moving_objects: int = 0
    static_objects: int = 0
    feature_xy: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    feature_mask_flag: np.ndarray = field(default_factory=lambda: np.zeros(0, bool))
    feature_epi_flag: np.ndarray = field(default_factory=lambda: np.zeros(0, bool))
    feature_inlier: np.ndarray = field(default_factory=lambda: np.zeros(0, bool))
    flow: FlowTracks | None = None
    flow_inlier: np.ndarray = field(default_factory=lambda: np.zeros(0, bool))
    timing_ms: dict = field(default_factory=dict)

    COUNT_FIELDS = ("detected", "mask_rejected", "epipolar_rejected", "rejected", "matched",
                    "pose_matches", "inliers", "stereo", "flow_points", "flow_tracked",
                    "flow_outliers", "moving_objects", "static_objects")


def _freeze(a):
    a = np.array(a, copy=True)
    a.flags.writeable = False
    return a


class Tracker:
    """Sequential frame-to-frame tracker.

    State carried between frames: the previous left pyramids, its ORB
    features with camera-frame stereo points, the previous pose and the
    constant-velocity motion estimate.
    """

    def __init__(self, rig: StereoRig, params: TrackerParams = TrackerParams(), table: ClassTable = ClassTable()):
        self.rig = rig
        self.params = params
        self.table = table
        self.max_depth = params.max_depth if params.max_depth is not None else 40.0 * rig.baseline
        self.rng = np.random.default_rng(params.seed)
        self.pose = None
        self.velocity = PoseSE3.identity()
        self._prev = None

    @property
    def initialized(self):
        return self._prev is not None

    def track_frame(self, frame: FrameInput):
        """Process one stereo frame; returns ``(pose, diagnostics)``."""
        p = self.params
        timing = {}
        t0 = time.perf_counter()
        left = as_gray(frame.left)
        right = as_gray(frame.right)
        if left.shape != right.shape:
            raise ValueError("left and right images differ in size")
        h, w = left.shape

        orb_pyr_l = build_pyramid(left, p.orb.levels, p.orb.scale_factor)
        orb_pyr_r = build_pyramid(right, p.orb.levels, p.orb.scale_factor)
        lk_pyr = build_pyramid(left, p.lk.levels, p.lk.scale_factor)
        kl = extract_orb(left, p.orb, orb_pyr_l)
        kr = extract_orb(right, p.orb, orb_pyr_r)
        xy = kl.xy0
        n = len(kl)
        t1 = time.perf_counter()
        timing["orb"] = (t1 - t0) * 1e3

        mask = frame.mask
        if mask is not None:
            if mask.shape != left.shape:
                raise ValueError("mask does not match the left frame size")
            dil = dilate_dynamic(mask, self.table, p.semantic.dilation_radius)
            mask_flag = reject_masked_features(xy, dil, self.table)
        else:
            mask_flag = np.zeros(n, bool)
        t2 = time.perf_counter()
        timing["mask"] = (t2 - t1) * 1e3

        epi_flag = np.zeros(n, bool)
        flow = None
        flow_inl = np.zeros(0, bool)
        F_ok = False
        matches = np.zeros((0, 2), np.int64)
        moving = static = 0
        if self._prev is not None:
            prev = self._prev
            fs = p.flow_select
            seeds = select_flow_points(prev["gray"], fs.max_points, fs.min_distance, fs.quality,
                                       fs.window, border=int(fs.border_margin) + 1)
            flow = reject_border_pairs(track(prev["lk_pyr"], lk_pyr, seeds, p.lk), fs.border_margin)
            ok = flow.tracked
            flow_inl = np.ones(len(flow), bool)
            F = None
            t3 = time.perf_counter()
            timing["flow"] = (t3 - t2) * 1e3
            if ok.sum() >= 8:
                try:
                    F, finl = estimate_fundamental_ransac(flow.prev[ok], flow.curr[ok], p.epipolar.threshold,
                                                          p.epipolar.confidence, p.epipolar.max_iters, self.rng)
                    flow_inl[ok] = classify_epipolar(flow.prev[ok], flow.curr[ok], F, p.epipolar.threshold)
                    F_ok = True
                except (EstimationFailed, DegenerateGeometry):
                    F = None
            static_cam = False
            if F is None and ok.any():
                # a still camera leaves F undefined; fall back to the x' = x model
                mag = np.hypot(*(flow.curr[ok] - flow.prev[ok]).T)
                if np.median(mag) < p.epipolar.static_flow:
                    static_cam = True
                    flow_inl[ok] = mag <= p.epipolar.threshold

            pk = prev["kp"]
            allowed = None
            if p.match_window is not None and len(pk) and n:
                pxy = pk.xy0
                d2 = ((pxy[:, None, :] - xy[None, :, :]) ** 2).sum(-1)
                allowed = d2 <= p.match_window ** 2
            matches = match_features(pk.descriptors, kl.descriptors, p.match_max_hamming, p.match_ratio, allowed)
            if len(matches):
                x1 = pk.xy0[matches[:, 0]]
                x2 = xy[matches[:, 1]]
                scale = kl.scale[matches[:, 1]]
                if F is not None:
                    inl = classify_epipolar(x1, x2, F, p.epipolar.threshold, scale)
                    epi_flag[matches[:, 1]] = ~inl
                elif static_cam:
                    epi_flag[matches[:, 1]] = np.hypot(*(x2 - x1).T) > p.epipolar.threshold * scale

            if mask is not None:
                objs = connected_components(mask, p.semantic.min_area, self.table.dynamic_set)
                flags = movement_check(objs, flow, flow_inl, p.semantic.tau_move, p.semantic.n_min)
                moving = sum(flags)
                static = len(flags) - moving
                if p.semantic.static_override and static:
                    keep_back = np.zeros_like(mask, dtype=bool)
                    for o in objs:
                        if not o.moving:
                            keep_back |= o.pixels
                    mask_flag &= ~pixel_labels(keep_back.astype(np.uint8), xy).astype(bool)
            timing["epipolar"] = (time.perf_counter() - t3) * 1e3

        rejected = (mask_flag | epi_flag) if p.filter_dynamic else np.zeros(n, bool)
        t4 = time.perf_counter()

        keep = ~rejected
        disp = np.full(n, np.nan)
        if keep.any():
            disp[keep] = stereo_match(kl.subset(keep), kr, orb_pyr_l, orb_pyr_r, self.rig, p.stereo)
        tracked = classify_mono_stereo(kl, disp, self.rig, self.max_depth)
        t5 = time.perf_counter()
        timing["stereo"] = (t5 - t4) * 1e3

        feature_inlier = np.zeros(n, bool)
        n_pose = n_inl = 0
        if self._prev is None:
            pose = PoseSE3.identity()
        else:
            prev = self._prev
            prior = prev["pose"] @ self.velocity
            usable = prev["usable"][matches[:, 0]] & keep[matches[:, 1]] if len(matches) else np.zeros(0, bool)
            m = matches[usable]
            n_pose = len(m)
            world = prev["pose"] @ prev["points"][m[:, 0]] if n_pose else np.zeros((0, 3))
            try:
                pose, inl = estimate_pose(world, xy[m[:, 1]] if n_pose else np.zeros((0, 2)),
                                          self.rig.intrinsics, prior, kl.scale[m[:, 1]] if n_pose else None,
                                          p.pose, self.rng)
            except TrackingLost as exc:
                raise TrackingLost(str(exc), frame.index) from None
            feature_inlier[m[inl, 1]] = True
            n_inl = int(inl.sum())
            self.velocity = prev["pose"].inverse() @ pose
        timing["pose"] = (time.perf_counter() - t5) * 1e3
        timing["total"] = (time.perf_counter() - t0) * 1e3

        usable = tracked.stereo & keep
        self._prev = {
            "gray": left,
            "lk_pyr": lk_pyr,
            "kp": kl,
            "points": tracked.points,
            "usable": usable,
            "pose": pose,
        }
        self.pose = pose

        diag = Diagnostics(
            index=frame.index,
            timestamp=frame.timestamp,
            detected=n,
            mask_rejected=int(mask_flag.sum()),
            epipolar_rejected=int(epi_flag.sum()),
            rejected=int(rejected.sum()),
            matched=len(matches),
            pose_matches=n_pose,
            inliers=n_inl,
            stereo=int(tracked.stereo.sum()),
            flow_points=0 if flow is None else len(flow),
            flow_tracked=0 if flow is None else int(flow.tracked.sum()),
            flow_outliers=0 if flow is None else int((flow.tracked & ~flow_inl).sum()),
            fundamental_ok=F_ok,
            moving_objects=moving,
            static_objects=static,
            feature_xy=_freeze(xy),
            feature_mask_flag=_freeze(mask_flag),
            feature_epi_flag=_freeze(epi_flag),
            feature_inlier=_freeze(feature_inlier),
            flow=flow,
            flow_inlier=_freeze(flow_inl),
            timing_ms=dict(timing),
        )
        return pose, diag
