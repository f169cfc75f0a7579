"""Synthetic stereo scenes: textured boxes and planes, rigid movers, exact truth.

A scene script is JSON::

    {
      "width": 640, "height": 480,
      "fx": 500, "fy": 500, "cx": 319.5, "cy": 239.5, "baseline": 0.3,
      "frame_count": 100, "frame_rate": 10, "noise": 0.0, "seed": 1,
      "static":  [{"type": "box", "center": [0, 0, 6], "size": [1, 1, 1],
                   "texture_seed": 3, "tint": [1, 0.9, 0.8]},
                  {"type": "plane", "axis": "z", "center": [0, 0, 9], "size": [8, 6]}],
      "dynamic": [{"type": "box", "class": "car", "size": [1, 0.8, 0.8], "texture_seed": 9,
                   "keyframes": [{"frame": 0, "center": [-2, 0, 5]},
                                 {"frame": 99, "center": [2, 0.4, 5]}]}],
      "camera":  [{"frame": 0, "position": [0, 0, 0], "rotation": [0, 0, 0]},
                  {"frame": 99, "position": [0.5, 0, 3]}]
    }

World axes follow the camera convention (x right, y down, z forward).
Camera keyframes hold the camera-to-world position and a rotation vector;
positions interpolate linearly and rotations by slerp, both clamped at the
ends. Dynamic boxes translate along their keyframes without rotating. A
plane's ``size`` lists its extents along the two remaining axes in x, y, z
order. Geometry is rasterized by exact per-pixel ray casting against each
face inside its projected bounding box, so depth, masks and images agree
to the pixel.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage
from scipy.spatial.transform import Rotation, Slerp

from .datasets import Config, format_settings
from .errors import ScriptError
from .geometry import CameraIntrinsics, StereoRig
from .imaging import write_netpbm
from .semantics import class_id
from .trajectory import PoseSE3, Trajectory, write_kitti

_AXES = {"x": 0, "y": 1, "z": 2}
_NEAR = 0.05
TEXEL = 0.01  # meters per texture sample
BACKGROUND = 96


@dataclass(frozen=True)
class Primitive:
    kind: str  # "box" or "plane"
    center: np.ndarray
    size: np.ndarray  # box: (sx, sy, sz); plane: full extents, 0 along its axis
    texture_seed: int = 0
    tint: tuple = (1.0, 1.0, 1.0)
    axis: int = -1  # plane normal axis


@dataclass(frozen=True)
class DynamicObject:
    primitive: Primitive
    class_id: int
    frames: np.ndarray  # keyframe indices
    centers: np.ndarray  # (k, 3)

    def center_at(self, frame: float) -> np.ndarray:
        if len(self.frames) == 1:
            return self.centers[0].copy()
        return np.array([np.interp(frame, self.frames, self.centers[:, a]) for a in range(3)])


@dataclass(frozen=True)
class SceneScript:
    width: int
    height: int
    fx: float
    fy: float
    cx: float
    cy: float
    baseline: float
    frame_count: int
    frame_rate: float
    noise: float
    seed: int
    static: tuple
    dynamic: tuple
    camera_frames: np.ndarray
    camera_positions: np.ndarray
    camera_rotvecs: np.ndarray
    raw: dict = field(default_factory=dict, compare=False)

    @property
    def rig(self) -> StereoRig:
        return StereoRig(CameraIntrinsics(self.fx, self.fy, self.cx, self.cy, self.width, self.height), self.baseline)

    def camera_pose(self, frame: int) -> PoseSE3:
        """Camera-to-world pose of the left camera in script world coordinates."""
        fr = self.camera_frames
        pos = np.array([np.interp(frame, fr, self.camera_positions[:, a]) for a in range(3)])
        if len(fr) == 1:
            R = Rotation.from_rotvec(self.camera_rotvecs[0]).as_matrix()
        else:
            f = float(np.clip(frame, fr[0], fr[-1]))
            R = Slerp(fr, Rotation.from_rotvec(self.camera_rotvecs))(f).as_matrix()
        return PoseSE3(R, pos)

    def without_dynamic(self) -> "SceneScript":
        raw = dict(self.raw)
        raw["dynamic"] = []
        return parse_script(raw)

    def with_changes(self, **changes) -> "SceneScript":
        raw = dict(self.raw)
        raw.update(changes)
        return parse_script(raw)


def _vec(value, n, what):
    try:
        arr = np.asarray(value, dtype=np.float64).reshape(-1)
    except (TypeError, ValueError):
        raise ScriptError(f"{what}: expected {n} numbers") from None
    if arr.size != n or not np.all(np.isfinite(arr)):
        raise ScriptError(f"{what}: expected {n} finite numbers, got {value!r}")
    return arr


def _primitive(spec, what) -> Primitive:
    if not isinstance(spec, dict):
        raise ScriptError(f"{what}: expected an object")
    kind = spec.get("type", "box")
    center = _vec(spec.get("center", [0, 0, 0]), 3, f"{what}.center")
    seed = int(spec.get("texture_seed", 0))
    tint = tuple(float(v) for v in _vec(spec.get("tint", [1, 1, 1]), 3, f"{what}.tint"))
    if kind == "box":
        size = _vec(spec.get("size"), 3, f"{what}.size")
        if np.any(size <= 0):
            raise ScriptError(f"{what}.size: extents must be positive")
        return Primitive("box", center, size, seed, tint)
    if kind == "plane":
        axis = spec.get("axis")
        if axis not in _AXES:
            raise ScriptError(f"{what}.axis: expected one of x, y, z")
        ext = _vec(spec.get("size"), 2, f"{what}.size")
        if np.any(ext <= 0):
            raise ScriptError(f"{what}.size: extents must be positive")
        a = _AXES[axis]
        size = np.zeros(3)
        size[[i for i in range(3) if i != a]] = ext
        return Primitive("plane", center, size, seed, tint, a)
    raise ScriptError(f"{what}.type: unknown primitive {kind!r}")


def parse_script(data) -> SceneScript:
    """Validate a decoded script; raises ``ScriptError`` naming the field."""
    if not isinstance(data, dict):
        raise ScriptError("script must be a JSON object")
    known = {"width", "height", "fx", "fy", "cx", "cy", "baseline", "frame_count", "frame_rate",
             "noise", "seed", "static", "dynamic", "camera", "name", "description"}
    extra = set(data) - known
    if extra:
        raise ScriptError(f"unknown script fields: {sorted(extra)}")
    try:
        width = int(data.get("width", 640))
        height = int(data.get("height", 480))
        fx = float(data.get("fx", 500.0))
        fy = float(data.get("fy", fx))
        cx = float(data.get("cx", (width - 1) / 2))
        cy = float(data.get("cy", (height - 1) / 2))
        baseline = float(data.get("baseline", 0.3))
        frame_count = int(data.get("frame_count", 0))
        frame_rate = float(data.get("frame_rate", 10.0))
        noise = float(data.get("noise", 0.0))
        seed = int(data.get("seed", 0))
    except (TypeError, ValueError) as exc:
        raise ScriptError(f"malformed scalar field: {exc}") from None
    if frame_count < 1:
        raise ScriptError(f"frame_count must be >= 1, got {frame_count}")
    if width < 32 or height < 32:
        raise ScriptError("image must be at least 32x32")
    if fx <= 0 or fy <= 0 or baseline <= 0 or frame_rate <= 0 or noise < 0:
        raise ScriptError("fx, fy, baseline and frame_rate must be positive and noise non-negative")
    static = tuple(_primitive(s, f"static[{i}]") for i, s in enumerate(data.get("static", [])))
    if not static:
        raise ScriptError("script needs at least one static primitive")
    dynamic = []
    for i, d in enumerate(data.get("dynamic", [])):
        prim = _primitive(dict(d, center=[0, 0, 0]), f"dynamic[{i}]")
        if prim.kind != "box":
            raise ScriptError(f"dynamic[{i}]: only boxes may move")
        try:
            cid = class_id(d.get("class", "car"))
        except ValueError as exc:
            raise ScriptError(f"dynamic[{i}].class: {exc}") from None
        kfs = d.get("keyframes", [])
        if not kfs:
            raise ScriptError(f"dynamic[{i}].keyframes: at least one keyframe required")
        frames = np.array([float(k.get("frame", 0)) for k in kfs])
        if np.any(np.diff(frames) <= 0):
            raise ScriptError(f"dynamic[{i}].keyframes: frames must increase")
        centers = np.array([_vec(k.get("center"), 3, f"dynamic[{i}].keyframes[{j}].center")
                            for j, k in enumerate(kfs)])
        dynamic.append(DynamicObject(prim, cid, frames, centers))
    cams = data.get("camera", [{"frame": 0, "position": [0, 0, 0], "rotation": [0, 0, 0]}])
    if not cams:
        raise ScriptError("camera: at least one keyframe required")
    cf = np.array([float(c.get("frame", 0)) for c in cams])
    if np.any(np.diff(cf) <= 0):
        raise ScriptError("camera keyframes: frames must increase")
    cp = np.array([_vec(c.get("position", [0, 0, 0]), 3, f"camera[{j}].position") for j, c in enumerate(cams)])
    cr = np.array([_vec(c.get("rotation", [0, 0, 0]), 3, f"camera[{j}].rotation") for j, c in enumerate(cams)])
    return SceneScript(width, height, fx, fy, cx, cy, baseline, frame_count, frame_rate, noise, seed,
                       static, tuple(dynamic), cf, cp, cr, raw=dict(data))


def load_script(path) -> SceneScript:
    path = Path(path)
    if not path.is_file():
        raise ScriptError(f"script not found: {path}")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ScriptError(f"{path}: invalid JSON ({exc})") from None
    return parse_script(data)


def demo_script_path() -> Path:
    return Path(__file__).with_name("data") / "demo_scene.json"


def static_script_path() -> Path:
    """Static room walked about 3 m forward, for odometry precision checks."""
    return Path(__file__).with_name("data") / "static_scene.json"


# --------------------------------------------------------------------------
# Textures
# --------------------------------------------------------------------------

_TEXTURE_SIGMAS = (1.0, 3.0, 8.0)
_TEXTURE_WEIGHTS = (0.3, 0.4, 0.3)
BLOCK_WEIGHT = 0.7  # share of the sharp-edged rectangle layer


def _smooth_noise(rng, shape):
    acc = np.zeros(shape)
    for sig, wt in zip(_TEXTURE_SIGMAS, _TEXTURE_WEIGHTS):
        layer = ndimage.gaussian_filter(rng.standard_normal(shape), sig, mode="wrap")
        sd = layer.std()
        acc += wt * (layer / sd if sd > 0 else layer)
    lo, hi = np.percentile(acc, [1, 99])
    return np.clip((acc - lo) / max(hi - lo, 1e-9), 0, 1)


def _blocks(rng, shape, min_side=3, max_side=24):
    """Overlapping axis-aligned rectangles of random gray level."""
    h, w = shape
    out = np.full(shape, rng.uniform())
    count = int(np.ceil(3.0 * h * w / ((min_side + max_side) / 2) ** 2))
    sides = rng.integers(min_side, max_side + 1, size=(count, 2))
    x0 = rng.integers(-max_side, w, size=count)
    y0 = rng.integers(-max_side, h, size=count)
    vals = rng.uniform(size=count)
    for (sw, sh), x, y, v in zip(sides, x0, y0, vals):
        out[max(y, 0):max(y + sh, 0), max(x, 0):max(x + sw, 0)] = v
    return out


def make_texture(shape, seed: int, master_seed: int = 0) -> np.ndarray:
    """Texture in [0, 1] (float32): sharp-edged rectangles over smooth noise.

    Rectangle junctions give corners that stay put under zoom; the noise
    keeps gradients inside flat patches. Deterministic per seed pair.
    """
    rng = np.random.default_rng(np.random.SeedSequence([int(master_seed) & 0xFFFFFFFF, int(seed) & 0xFFFFFFFF]))
    tex = BLOCK_WEIGHT * _blocks(rng, shape) + (1 - BLOCK_WEIGHT) * _smooth_noise(rng, shape)
    return tex.astype(np.float32)


@dataclass
class _Face:
    axis: int  # normal axis
    value: float  # plane coordinate (object frame for movers)
    sign: int  # outward normal sign, 0 for two-sided planes
    lo: np.ndarray  # (2,) lower bounds on the in-plane axes
    hi: np.ndarray
    texture: list  # mip levels, level j prefiltered and decimated by 2**j
    tint: np.ndarray
    label: int  # 0 static, class id for movers
    owner: int  # index of the primitive (static) or -1 - mover index

    @property
    def inplane(self):
        return [i for i in range(3) if i != self.axis]


def _faces_of(prim: Primitive, seed0: int, master: int, label: int, owner: int, local: bool) -> list:
    """Faces in world coordinates, or relative to the box center when ``local``."""
    center = np.zeros(3) if local else prim.center
    half = prim.size / 2
    out = []
    if prim.kind == "plane":
        specs = [(prim.axis, center[prim.axis], 0)]
    else:
        specs = [(a, center[a] + s * half[a], s) for a in range(3) for s in (-1, 1)]
    for fi, (a, val, s) in enumerate(specs):
        ip = [i for i in range(3) if i != a]
        lo = center[ip] - half[ip]
        hi = center[ip] + half[ip]
        n = np.maximum(np.ceil((hi - lo) / TEXEL).astype(int) + 2, 4)
        tex = mip_levels(make_texture((n[1], n[0]), seed0 * 16 + fi, master))
        out.append(_Face(a, float(val), s, lo, hi, tex, np.asarray(prim.tint, dtype=np.float32), label, owner))
    return out


MIP_LEVELS = 5


def mip_levels(tex, levels: int = MIP_LEVELS) -> list:
    """Gaussian-prefiltered copies of ``tex`` decimated by powers of two."""
    out = [tex]
    for j in range(1, levels):
        step = 2 ** j
        if min(tex.shape) < 2 * step:
            break
        blurred = ndimage.gaussian_filter(tex, 0.5 * step, mode="nearest")
        out.append(np.ascontiguousarray(blurred[step // 2::step, step // 2::step]))
    return out


def _bilinear(tex, u, v):
    """Bilinear lookup at texel coordinates ``(u, v)`` (texel centers at integers)."""
    h, w = tex.shape
    u = np.clip(u, 0, w - 1.001)
    v = np.clip(v, 0, h - 1.001)
    u0 = np.floor(u).astype(np.intp)
    v0 = np.floor(v).astype(np.intp)
    fu = (u - u0).astype(np.float32)
    fv = (v - v0).astype(np.float32)
    return ((tex[v0, u0] * (1 - fu) + tex[v0, u0 + 1] * fu) * (1 - fv)
            + (tex[v0 + 1, u0] * (1 - fu) + tex[v0 + 1, u0 + 1] * fu) * fv)


def _sample_texture(mips, u, v, footprint):
    """Trilinear lookup; ``footprint`` is the pixel size in level-0 texels."""
    lam = np.clip(np.log2(np.maximum(footprint, 1e-6)), 0, len(mips) - 1)
    lo = np.floor(lam).astype(np.intp)
    frac = (lam - lo).astype(np.float32)
    out = np.empty(len(u), np.float32)
    for j in np.unique(lo).tolist():
        sel = lo == j
        step = 2.0 ** j
        a = _bilinear(mips[j], (u[sel] + 0.5) / step - 0.5, (v[sel] + 0.5) / step - 0.5)
        if j + 1 < len(mips):
            step2 = 2.0 * step
            b = _bilinear(mips[j + 1], (u[sel] + 0.5) / step2 - 0.5, (v[sel] + 0.5) / step2 - 0.5)
            f = frac[sel]
            a = a * (1 - f) + b * f
        out[sel] = a
    return out


@dataclass
class RenderResult:
    rgb: np.ndarray  # (h, w, 3) float32, before noise and quantization
    depth: np.ndarray  # (h, w) float64 meters, 0 where empty
    label: np.ndarray  # (h, w) uint8 class ids of movers
    static_hit: np.ndarray  # (h, w) bool


def render_view(faces, offsets, pose: PoseSE3, K: CameraIntrinsics) -> RenderResult:
    """Ray-cast ``faces`` (each shifted by its ``offsets`` entry) from ``pose``."""
    w, h = K.width, K.height
    zbuf = np.full((h, w), np.inf)
    rgb = np.full((h, w, 3), float(BACKGROUND), np.float32)
    label = np.zeros((h, w), np.uint8)
    static_hit = np.zeros((h, w), bool)
    R = pose.R
    o = pose.t
    Rt = R.T
    for face, off in zip(faces, offsets):
        a = face.axis
        ip = face.inplane
        plane = face.value + off[a]
        if face.sign != 0 and (o[a] - plane) * face.sign <= 0:
            continue  # back face
        # corners in camera frame for the bounding box
        corners = np.zeros((4, 3))
        corners[:, a] = plane
        corners[:, ip[0]] = np.array([face.lo[0], face.hi[0], face.hi[0], face.lo[0]]) + off[ip[0]]
        corners[:, ip[1]] = np.array([face.lo[1], face.lo[1], face.hi[1], face.hi[1]]) + off[ip[1]]
        cam = (corners - o) @ Rt.T
        if np.all(cam[:, 2] <= _NEAR):
            continue
        if np.all(cam[:, 2] > _NEAR):
            u = K.fx * cam[:, 0] / cam[:, 2] + K.cx
            v = K.fy * cam[:, 1] / cam[:, 2] + K.cy
            x0 = max(int(math.floor(u.min())) - 1, 0)
            x1 = min(int(math.ceil(u.max())) + 1, w - 1)
            y0 = max(int(math.floor(v.min())) - 1, 0)
            y1 = min(int(math.ceil(v.max())) + 1, h - 1)
            if x0 > x1 or y0 > y1:
                continue
        else:
            x0, x1, y0, y1 = 0, w - 1, 0, h - 1
        us = np.arange(x0, x1 + 1, dtype=np.float64)
        vs = np.arange(y0, y1 + 1, dtype=np.float64)
        dc = np.empty((len(vs), len(us), 3))
        dc[..., 0] = ((us - K.cx) / K.fx)[None, :]
        dc[..., 1] = ((vs - K.cy) / K.fy)[:, None]
        dc[..., 2] = 1.0
        dw_a = dc @ R[a]  # world direction along the normal axis
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (plane - o[a]) / dw_a
        ok = np.isfinite(t) & (t > _NEAR)
        if not ok.any():
            continue
        p0 = o[ip[0]] + t * (dc @ R[ip[0]]) - off[ip[0]]
        p1 = o[ip[1]] + t * (dc @ R[ip[1]]) - off[ip[1]]
        ok &= (p0 >= face.lo[0]) & (p0 <= face.hi[0]) & (p1 >= face.lo[1]) & (p1 <= face.hi[1])
        sub = zbuf[y0:y1 + 1, x0:x1 + 1]
        ok &= t < sub
        if not ok.any():
            continue
        # pixel footprint on the surface, geometric mean of the two axes
        ray_len = t[ok] * np.sqrt(dc[ok, 0] ** 2 + dc[ok, 1] ** 2 + 1.0)
        cos = np.abs(dw_a[ok]) / np.sqrt(dc[ok, 0] ** 2 + dc[ok, 1] ** 2 + 1.0)
        foot = ray_len / (np.sqrt(K.fx * K.fy) * TEXEL * np.sqrt(np.maximum(cos, 0.05)))
        val = _sample_texture(face.texture, (p0[ok] - face.lo[0]) / TEXEL, (p1[ok] - face.lo[1]) / TEXEL, foot)
        inten = 40.0 + 180.0 * val
        sub[ok] = t[ok]
        rgb[y0:y1 + 1, x0:x1 + 1][ok] = inten[:, None] * face.tint[None, :]
        label[y0:y1 + 1, x0:x1 + 1][ok] = face.label
        static_hit[y0:y1 + 1, x0:x1 + 1][ok] = face.label == 0
    depth = np.where(np.isfinite(zbuf), zbuf, 0.0)
    return RenderResult(rgb, depth, label, static_hit)


def quantize(rgb, noise, rng) -> np.ndarray:
    img = rgb.astype(np.float64)
    if noise > 0:
        img = img + rng.normal(0.0, noise, img.shape)
    return np.clip(np.floor(img + 0.5), 0, 255).astype(np.uint8)


def depth_to_millimeters(depth) -> np.ndarray:
    mm = np.floor(np.asarray(depth) * 1000.0 + 0.5)
    mm[(mm < 0) | (mm > 65535)] = 0
    return mm.astype(np.uint16)


class Scene:
    """Prepared geometry (faces and textures) for one script."""

    def __init__(self, script: SceneScript, rig: StereoRig | None = None):
        self.script = script
        self.rig = rig or script.rig
        self.static_faces = []
        for i, p in enumerate(script.static):
            self.static_faces += _faces_of(p, p.texture_seed, script.seed, 0, i, local=False)
        self.dynamic_faces = []
        self.dynamic_owner = []
        for j, d in enumerate(script.dynamic):
            fs = _faces_of(d.primitive, d.primitive.texture_seed, script.seed, d.class_id, -1 - j, local=True)
            self.dynamic_faces += fs
            self.dynamic_owner += [j] * len(fs)
        self.origin = script.camera_pose(0)

    def object_centers(self, frame: int) -> list:
        return [d.center_at(frame) for d in self.script.dynamic]

    def render(self, frame: int):
        """Left and right ``RenderResult`` for a frame (world = script world)."""
        pose = self.script.camera_pose(frame)
        centers = self.object_centers(frame)
        faces = self.static_faces + self.dynamic_faces
        offsets = [np.zeros(3)] * len(self.static_faces) + [centers[j] for j in self.dynamic_owner]
        K = self.rig.intrinsics
        left = render_view(faces, offsets, pose, K)
        right_pose = pose @ PoseSE3(np.eye(3), np.array([self.rig.baseline, 0.0, 0.0]))
        right = render_view(faces, offsets, right_pose, K)
        return left, right

    def gt_pose(self, frame: int) -> PoseSE3:
        """Left camera pose relative to the first frame's camera."""
        return self.origin.inverse() @ self.script.camera_pose(frame)

    def objects_record(self, frame: int) -> list:
        out = []
        inv = self.origin.inverse()
        for d, c in zip(self.script.dynamic, self.object_centers(frame)):
            out.append({
                "class_id": d.class_id,
                "center": [float(v) for v in inv @ c],
                "rotation": inv.R.tolist(),
                "size": [float(v) for v in d.primitive.size],
            })
        return out


def frame_rng(seed: int, frame: int, view: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFF, int(frame), int(view)]))


def render_sequence(script: SceneScript, out_root, rig: StereoRig | None = None, progress=None) -> dict:
    """Write a generic-layout sequence for ``script``; returns a summary dict.

    Ground truth (``poses.txt``, ``objects.json``) is expressed in the first
    left camera's frame, the same frame the tracker starts from.
    """
    scene = Scene(script, rig)
    rig = scene.rig
    out = Path(out_root)
    for sub in ("left", "right", "depth", "mask"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    poses, stamps, objects = [], [], []
    mover_px = 0.0
    for f in range(script.frame_count):
        left, right = scene.render(f)
        if not left.static_hit.any():
            raise ScriptError(f"frame {f}: no static primitive in view")
        write_netpbm(out / "left" / f"{f:06d}.ppm", quantize(left.rgb, script.noise, frame_rng(script.seed, f, 0)))
        write_netpbm(out / "right" / f"{f:06d}.ppm", quantize(right.rgb, script.noise, frame_rng(script.seed, f, 1)))
        write_netpbm(out / "depth" / f"{f:06d}.pgm", depth_to_millimeters(left.depth))
        write_netpbm(out / "mask" / f"{f:06d}.pgm", left.label)
        mover_px = max(mover_px, float((left.label > 0).mean()))
        poses.append(scene.gt_pose(f))
        stamps.append(f / script.frame_rate)
        objects.append({"frame": f, "objects": scene.objects_record(f)})
        if progress is not None:
            progress(f)
    traj = Trajectory(np.array(stamps), poses)
    write_kitti(out / "poses.txt", traj)
    (out / "times.txt").write_text("".join(f"{t!r}\n" for t in stamps))
    K = rig.intrinsics
    cfg = Config(fx=K.fx, fy=K.fy, cx=K.cx, cy=K.cy, baseline=rig.baseline, width=K.width, height=K.height)
    (out / "settings.txt").write_text(format_settings(cfg))
    (out / "objects.json").write_text(json.dumps({"frames": objects}, indent=1, sort_keys=True) + "\n")
    summary = {
        "frames": script.frame_count,
        "size": [K.width, K.height],
        "dynamic_objects": len(script.dynamic),
        "max_mover_coverage": mover_px,
        "path_length": traj.path_length(),
    }
    return summary


# --------------------------------------------------------------------------
# Ground-truth helpers for tests and demos
# --------------------------------------------------------------------------

def load_objects(path) -> list:
    """Per-frame object records from ``objects.json``."""
    return json.loads(Path(path).read_text())["frames"]


def swept_voxels(objects, resolution: float, tolerance: int = 1) -> np.ndarray:
    """Voxel indices whose cell touches any object box, grown by ``tolerance`` cells."""
    cells = set()
    for rec in objects:
        for ob in rec["objects"]:
            R = np.asarray(ob["rotation"], dtype=np.float64)
            c = np.asarray(ob["center"], dtype=np.float64)
            half = np.asarray(ob["size"], dtype=np.float64) / 2
            sgn = np.array([[i, j, k] for i in (-1, 1) for j in (-1, 1) for k in (-1, 1)], dtype=np.float64)
            corners = c + (sgn * half) @ R.T
            lo = np.floor(corners.min(axis=0) / resolution).astype(int) - tolerance
            hi = np.floor(corners.max(axis=0) / resolution).astype(int) + tolerance
            for i in range(lo[0], hi[0] + 1):
                for j in range(lo[1], hi[1] + 1):
                    for k in range(lo[2], hi[2] + 1):
                        cells.add((i, j, k))
    if not cells:
        return np.zeros((0, 3), np.int64)
    return np.array(sorted(cells), dtype=np.int64)
