"""Sequence loaders (KITTI odometry and a generic stereo layout) and settings.

Generic layout::

    root/
      left/000000.ppm ...     left images (ppm, pgm or png)
      right/000000.ppm ...    right images
      depth/000000.pgm ...    optional 16-bit depth in millimeters, 0 = invalid
      mask/000000.pgm ...     optional 8-bit VOC class ids
      times.txt               one timestamp (seconds) per line
      settings.txt            ``key: value`` lines, see SETTINGS_SCHEMA
      poses.txt               optional ground truth, KITTI format
"""

from __future__ import annotations

import dataclasses
import logging
import queue
import re
import shutil
import threading
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DatasetError, SettingsError
from .evaluation import ALIGNMENTS
from .geometry import CameraIntrinsics, StereoParams, StereoRig
from .flow import LKParams
from .imaging import OrbParams, load_image
from .mapping import depth_from_millimeters
from .odometry import EpipolarParams, FlowSelectParams, FrameInput, PoseParams, SemanticParams, TrackerParams
from .semantics import DEFAULT_DYNAMIC, ClassTable, class_id, load_mask
from .trajectory import Trajectory, read_kitti

log = logging.getLogger(__name__)

IMAGE_EXTS = (".ppm", ".pgm", ".png", ".pnm")


# --------------------------------------------------------------------------
# Settings
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class MapParams:
    resolution: float = 0.10
    l_hit: float = 0.85
    l_miss: float = -0.4
    l_min: float = -2.0
    l_max: float = 3.5
    max_cloud_depth: float = 20.0
    stride: int = 2


@dataclass(frozen=True)
class EvalParams:
    max_dt: float = 0.02
    alignment: str = "rigid"


@dataclass(frozen=True)
class Config:
    """Typed run configuration; camera fields may come from the dataset."""

    fx: float | None = None
    fy: float | None = None
    cx: float | None = None
    cy: float | None = None
    baseline: float | None = None
    width: int | None = None
    height: int | None = None
    dynamic_classes: tuple = tuple(class_id(c) for c in DEFAULT_DYNAMIC)
    prefetch_depth: int = 4
    tracker: TrackerParams = TrackerParams()
    map: MapParams = MapParams()
    eval: EvalParams = EvalParams()

    @property
    def has_camera(self) -> bool:
        return None not in (self.fx, self.fy, self.cx, self.cy, self.baseline)

    def class_table(self) -> ClassTable:
        return ClassTable(dynamic_set=frozenset(self.dynamic_classes))

    def rig(self, width=None, height=None) -> StereoRig:
        if not self.has_camera:
            raise SettingsError("settings lack fx, fy, cx, cy or baseline")
        w = width if width is not None else self.width
        h = height if height is not None else self.height
        if w is None or h is None:
            raise SettingsError("image size unknown")
        K = CameraIntrinsics(self.fx, self.fy, self.cx, self.cy, int(w), int(h))
        return StereoRig(K, self.baseline)

    def replace(self, **changes) -> "Config":
        return dataclasses.replace(self, **changes)


# key prefix -> (path of attribute names from Config, dataclass type)
_SECTIONS = {
    "orb": (("tracker", "orb"), OrbParams),
    "flow": (("tracker", "flow_select"), FlowSelectParams),
    "lk": (("tracker", "lk"), LKParams),
    "epipolar": (("tracker", "epipolar"), EpipolarParams),
    "stereo": (("tracker", "stereo"), StereoParams),
    "semantic": (("tracker", "semantic"), SemanticParams),
    "pose": (("tracker", "pose"), PoseParams),
    "tracker": (("tracker",), TrackerParams),
    "map": (("map",), MapParams),
    "eval": (("eval",), EvalParams),
}
_TOP = {"fx": float, "fy": float, "cx": float, "cy": float, "baseline": float,
        "width": int, "height": int, "prefetch_depth": int, "dynamic_classes": "classes"}
# fields whose default is None but which take a number when set
_OPTIONAL_FLOATS = {"tracker.max_depth", "stereo.max_disparity", "lk.fb_threshold", "tracker.match_window"}


def _schema():
    out = dict(_TOP)
    for prefix, (_, cls) in _SECTIONS.items():
        for f in dataclasses.fields(cls):
            key = f"{prefix}.{f.name}"
            default = f.default
            if dataclasses.is_dataclass(default):
                continue
            if key in _OPTIONAL_FLOATS:
                out[key] = "optional_float"
            elif isinstance(default, bool):
                out[key] = bool
            elif isinstance(default, int):
                out[key] = int
            elif isinstance(default, float):
                out[key] = float
            elif isinstance(default, str):
                out[key] = str
    return out


SETTINGS_SCHEMA = _schema()


def _convert(kind, raw):
    if kind is bool:
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError("expected a boolean")
    if kind is int:
        return int(raw)
    if kind is float:
        return float(raw)
    if kind == "optional_float":
        return None if raw.lower() in ("none", "null", "") else float(raw)
    if kind == "classes":
        items = [s for s in re.split(r"[,\s]+", raw) if s]
        return tuple(sorted(class_id(s) for s in items))
    return raw


def _set_path(cfg, path, name, value):
    if not path:
        return dataclasses.replace(cfg, **{name: value})
    head = getattr(cfg, path[0])
    return dataclasses.replace(cfg, **{path[0]: _set_path(head, path[1:], name, value)})


def settings_from_pairs(pairs, base: Config | None = None, source="<settings>") -> Config:
    """Apply ``(key, raw_value, line_no)`` triples to a configuration."""
    cfg = base or Config()
    for key, raw, line in pairs:
        if key not in SETTINGS_SCHEMA:
            raise SettingsError(f"{source}:{line}: unknown key {key!r}")
        kind = SETTINGS_SCHEMA[key]
        try:
            value = _convert(kind, raw)
        except ValueError as exc:
            tname = kind if isinstance(kind, str) else kind.__name__
            raise SettingsError(f"{source}:{line}: key {key!r} expects {tname}, got {raw!r} ({exc})") from None
        if key == "eval.alignment" and value not in ALIGNMENTS:
            raise SettingsError(f"{source}:{line}: eval.alignment must be one of {ALIGNMENTS}")
        if "." in key:
            prefix, name = key.split(".", 1)
            cfg = _set_path(cfg, _SECTIONS[prefix][0], name, value)
        else:
            cfg = dataclasses.replace(cfg, **{key: value})
    return cfg


def parse_settings_text(text: str, source="<settings>", base: Config | None = None) -> Config:
    pairs = []
    for no, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if ":" not in line:
            raise SettingsError(f"{source}:{no}: expected 'key: value', got {line!r}")
        key, raw = line.split(":", 1)
        pairs.append((key.strip(), raw.strip(), no))
    return settings_from_pairs(pairs, base, source)


def parse_settings(path, base: Config | None = None) -> Config:
    path = Path(path)
    if not path.is_file():
        raise SettingsError(f"settings file not found: {path}")
    return parse_settings_text(path.read_text(), str(path), base)


def format_settings(cfg: Config, keys=None) -> str:
    """Serialize selected keys (default: the camera block) as settings text."""
    keys = keys or ("fx", "fy", "cx", "cy", "baseline", "width", "height")
    lines = []
    for key in keys:
        if "." in key:
            prefix, name = key.split(".", 1)
            obj = cfg
            for part in _SECTIONS[prefix][0]:
                obj = getattr(obj, part)
            value = getattr(obj, name)
        else:
            value = getattr(cfg, key)
        if value is None:
            continue
        if isinstance(value, tuple):
            value = ",".join(str(v) for v in value)
        elif isinstance(value, float):
            value = repr(value)
        lines.append(f"{key}: {value}")
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# Sequences
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Frame:
    index: int
    timestamp: float
    left: np.ndarray  # as stored: gray or RGB
    right: np.ndarray
    depth: np.ndarray | None = None  # meters
    mask: np.ndarray | None = None

    def tracker_input(self, use_mask: bool = True) -> FrameInput:
        return FrameInput(self.index, self.timestamp, self.left, self.right, self.mask if use_mask else None)


@dataclass(frozen=True)
class SequenceSource:
    name: str
    left: tuple
    right: tuple
    timestamps: np.ndarray
    config: Config
    depth: tuple | None = None
    ground_truth: Trajectory | None = None
    mask_dir: Path | None = None
    image_size: tuple = field(default=(0, 0))  # (width, height)

    def __post_init__(self):
        n = len(self.left)
        if len(self.right) != n or len(self.timestamps) != n:
            raise DatasetError(f"{self.name}: left/right/timestamp counts differ "
                               f"({n}, {len(self.right)}, {len(self.timestamps)})")
        if self.depth is not None and len(self.depth) != n:
            raise DatasetError(f"{self.name}: depth count {len(self.depth)} != {n} frames")
        if n > 1 and not np.all(np.diff(self.timestamps) > 0):
            raise DatasetError(f"{self.name}: timestamps not strictly increasing")

    def __len__(self):
        return len(self.left)

    @property
    def rig(self) -> StereoRig:
        return self.config.rig(*self.image_size)

    @property
    def has_depth(self) -> bool:
        return self.depth is not None

    def load(self, i: int, strict_masks: bool = False) -> Frame:
        left = load_image(self.left[i])
        right = load_image(self.right[i])
        if left.shape[:2] != right.shape[:2]:
            raise DatasetError(f"{self.right[i]}: size differs from {self.left[i]}")
        depth = None
        if self.depth is not None:
            raw = load_image(self.depth[i])
            if raw.shape != left.shape[:2]:
                raise DatasetError(f"{self.depth[i]}: depth size differs from the left image")
            depth = depth_from_millimeters(raw)
        if self.mask_dir is not None:
            mask = load_mask(self.mask_dir / f"{i:06d}.pgm", left.shape[:2], strict_masks)
        elif strict_masks:
            raise DatasetError(f"{self.name}: strict masks requested but no mask directory")
        else:
            mask = np.zeros(left.shape[:2], np.uint8)
        return Frame(i, float(self.timestamps[i]), left, right, depth, mask)

    def frames(self, strict_masks: bool = False, prefetch: int | None = None):
        """Yield frames in order, reading ahead on a worker thread."""
        depth = self.config.prefetch_depth if prefetch is None else prefetch
        if depth <= 0:
            for i in range(len(self)):
                yield self.load(i, strict_masks)
            return
        yield from _prefetched(lambda i: self.load(i, strict_masks), len(self), depth)


_DONE = object()


def _prefetched(loader, n, depth):
    q = queue.Queue(maxsize=depth)
    stop = threading.Event()

    def work():
        try:
            for i in range(n):
                if stop.is_set():
                    return
                q.put(("ok", loader(i)))
        except Exception as exc:  # handed to the consumer
            q.put(("err", exc))
            return
        q.put(("ok", _DONE))

    th = threading.Thread(target=work, daemon=True)
    th.start()
    try:
        while True:
            kind, item = q.get()
            if kind == "err":
                raise item
            if item is _DONE:
                break
            yield item
    finally:
        stop.set()
        while th.is_alive():
            try:
                q.get_nowait()
            except queue.Empty:
                th.join(0.01)


def read_times(path) -> np.ndarray:
    path = Path(path)
    if not path.is_file():
        raise DatasetError(f"times file not found: {path}")
    vals = []
    for no, line in enumerate(path.read_text().splitlines(), start=1):
        s = line.strip()
        if not s:
            continue
        try:
            vals.append(float(s.split()[0]))
        except ValueError:
            raise DatasetError(f"{path}:{no}: malformed timestamp {s!r}") from None
    return np.array(vals, dtype=np.float64)


def _indexed_files(directory: Path, exts=IMAGE_EXTS) -> list:
    """Files named by a six-digit index, sorted numerically."""
    found = {}
    for p in directory.iterdir():
        if p.suffix.lower() in exts and re.fullmatch(r"\d{6}", p.stem):
            idx = int(p.stem)
            if idx in found:
                raise DatasetError(f"{directory}: duplicate frame index {idx}")
            found[idx] = p
    idxs = sorted(found)
    if idxs != list(range(len(idxs))):
        raise DatasetError(f"{directory}: frame indices are not contiguous from 0")
    return [found[i] for i in idxs]


def _image_size(path) -> tuple:
    img = load_image(path)
    return img.shape[1], img.shape[0]


def load_generic(root, settings_path=None, base: Config | None = None) -> SequenceSource:
    root = Path(root)
    if not root.is_dir():
        raise DatasetError(f"sequence directory not found: {root}")
    for sub in ("left", "right"):
        if not (root / sub).is_dir():
            raise DatasetError(f"missing directory: {root / sub}")
    left = _indexed_files(root / "left")
    right = _indexed_files(root / "right")
    if len(left) != len(right):
        raise DatasetError(f"{root}: {len(left)} left images but {len(right)} right images")
    if not left:
        raise DatasetError(f"{root}: no frames")
    times = read_times(root / "times.txt")
    if len(times) != len(left):
        raise DatasetError(f"{root / 'times.txt'}: {len(times)} stamps for {len(left)} frames")
    cfg = parse_settings(settings_path or root / "settings.txt", base)
    if not cfg.has_camera:
        raise SettingsError(f"{settings_path or root / 'settings.txt'}: fx, fy, cx, cy and baseline are required")
    depth = None
    if (root / "depth").is_dir():
        depth = _indexed_files(root / "depth", (".pgm", ".png"))
        if len(depth) != len(left):
            raise DatasetError(f"{root / 'depth'}: {len(depth)} depth images for {len(left)} frames")
        depth = tuple(depth)
    else:
        log.info("%s has no depth directory; mapping disabled", root)
    mask_dir = root / "mask" if (root / "mask").is_dir() else None
    gt = None
    if (root / "poses.txt").is_file():
        gt = read_kitti(root / "poses.txt", times)
        if len(gt) != len(left):
            raise DatasetError(f"{root / 'poses.txt'}: {len(gt)} poses for {len(left)} frames")
    size = _image_size(left[0])
    return SequenceSource(root.name, tuple(left), tuple(right), times, cfg, depth,
                          gt, mask_dir, size)


def write_generic(source: SequenceSource, root, frame_loader=None) -> Path:
    """Copy a sequence into the generic layout (files are copied verbatim)."""
    root = Path(root)
    for sub in ("left", "right"):
        (root / sub).mkdir(parents=True, exist_ok=True)
    for i in range(len(source)):
        shutil.copyfile(source.left[i], root / "left" / f"{i:06d}{Path(source.left[i]).suffix}")
        shutil.copyfile(source.right[i], root / "right" / f"{i:06d}{Path(source.right[i]).suffix}")
    if source.depth is not None:
        (root / "depth").mkdir(exist_ok=True)
        for i, p in enumerate(source.depth):
            shutil.copyfile(p, root / "depth" / f"{i:06d}{Path(p).suffix}")
    if source.mask_dir is not None:
        (root / "mask").mkdir(exist_ok=True)
        for i in range(len(source)):
            p = source.mask_dir / f"{i:06d}.pgm"
            if p.exists():
                shutil.copyfile(p, root / "mask" / p.name)
    (root / "times.txt").write_text("".join(f"{t!r}\n" for t in source.timestamps.tolist()))
    (root / "settings.txt").write_text(format_settings(source.config))
    if source.ground_truth is not None:
        from .trajectory import write_kitti

        write_kitti(root / "poses.txt", source.ground_truth)
    return root


def parse_kitti_calib(path) -> tuple:
    """``(fx, fy, cx, cy, baseline)`` from the P0 and P1 rows of calib.txt."""
    path = Path(path)
    if not path.is_file():
        raise DatasetError(f"calibration file not found: {path}")
    rows = {}
    for no, line in enumerate(path.read_text().splitlines(), start=1):
        if ":" not in line:
            continue
        key, vals = line.split(":", 1)
        try:
            rows[key.strip()] = np.array([float(v) for v in vals.split()])
        except ValueError:
            raise DatasetError(f"{path}:{no}: malformed numbers") from None
    for key in ("P0", "P1"):
        if key not in rows or rows[key].size != 12:
            raise DatasetError(f"{path}: missing or malformed {key} (12 values expected)")
    P0 = rows["P0"].reshape(3, 4)
    P1 = rows["P1"].reshape(3, 4)
    fx = P0[0, 0]
    if fx <= 0:
        raise DatasetError(f"{path}: non-positive focal length")
    baseline = -P1[0, 3] / P1[0, 0]
    if baseline <= 0:
        raise DatasetError(f"{path}: P1 does not encode a positive baseline")
    return float(fx), float(P0[1, 1]), float(P0[0, 2]), float(P0[1, 2]), float(baseline)


def load_kitti(root, sequence_id, settings_path=None, base: Config | None = None) -> SequenceSource:
    """KITTI odometry layout: ``sequences/<id>/{image_0,image_1,times.txt,calib.txt}``
    with optional ground truth in ``poses/<id>.txt``."""
    root = Path(root)
    seq = f"{int(sequence_id):02d}" if str(sequence_id).isdigit() else str(sequence_id)
    sdir = root / "sequences" / seq
    if not sdir.is_dir():
        raise DatasetError(f"KITTI sequence directory not found: {sdir}")
    for sub in ("image_0", "image_1"):
        if not (sdir / sub).is_dir():
            raise DatasetError(f"missing directory: {sdir / sub}")
    left = _indexed_files(sdir / "image_0")
    right = _indexed_files(sdir / "image_1")
    if len(left) != len(right):
        raise DatasetError(f"{sdir}: {len(left)} image_0 frames but {len(right)} image_1 frames")
    times = read_times(sdir / "times.txt")
    if len(times) != len(left):
        raise DatasetError(f"{sdir / 'times.txt'}: {len(times)} stamps for {len(left)} frames")
    fx, fy, cx, cy, b = parse_kitti_calib(sdir / "calib.txt")
    cfg = base or Config()
    if settings_path is not None:
        cfg = parse_settings(settings_path, cfg)
    cfg = cfg.replace(fx=fx, fy=fy, cx=cx, cy=cy, baseline=b)
    gt = None
    gpath = root / "poses" / f"{seq}.txt"
    if gpath.is_file():
        gt = read_kitti(gpath, times)
        if len(gt) != len(left):
            raise DatasetError(f"{gpath}: {len(gt)} poses for {len(left)} frames")
    size = _image_size(left[0])
    return SequenceSource(f"kitti-{seq}", tuple(left), tuple(right), times, cfg,
                          None, gt, None, size)
