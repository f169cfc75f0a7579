"""Semantic label masks, the dynamic-class policy and the movement check.

Masks are ``uint8`` rasters with PASCAL VOC class ids (0 is background).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import DatasetError, ImageSizeError
from .flow import FlowTracks
from .imaging import read_netpbm

log = logging.getLogger(__name__)

VOC_CLASSES = {
    1: "airplane", 2: "bicycle", 3: "bird", 4: "boat", 5: "bottle",
    6: "bus", 7: "car", 8: "cat", 9: "chair", 10: "cow",
    11: "dining table", 12: "dog", 13: "horse", 14: "motorbike", 15: "person",
    16: "potted plant", 17: "sheep", 18: "sofa", 19: "train", 20: "tv/monitor",
}
MAX_CLASS_ID = 20

DEFAULT_DYNAMIC = ("person", "car", "bus", "bicycle", "motorbike", "dog", "cat",
                   "bird", "cow", "horse", "sheep", "boat", "airplane", "train")

_ALIASES = {"aeroplane": "airplane", "diningtable": "dining table", "dining_table": "dining table",
            "pottedplant": "potted plant", "potted_plant": "potted plant", "tvmonitor": "tv/monitor",
            "tv": "tv/monitor", "monitor": "tv/monitor", "motorcycle": "motorbike"}


def class_id(name_or_id) -> int:
    """Resolve a VOC class name (or numeric id) to its id."""
    if isinstance(name_or_id, (int, np.integer)):
        cid = int(name_or_id)
    else:
        key = str(name_or_id).strip().lower()
        if key.isdigit():
            cid = int(key)
        else:
            key = _ALIASES.get(key, key)
            ids = [k for k, v in VOC_CLASSES.items() if v == key]
            if not ids:
                raise ValueError(f"unknown class {name_or_id!r}")
            cid = ids[0]
    if cid not in VOC_CLASSES:
        raise ValueError(f"class id {cid} outside 1..{MAX_CLASS_ID}")
    return cid


@dataclass(frozen=True)
class ClassTable:
    names: dict = field(default_factory=lambda: dict(VOC_CLASSES))
    dynamic_set: frozenset = field(default_factory=lambda: frozenset(class_id(n) for n in DEFAULT_DYNAMIC))

    def __post_init__(self):
        object.__setattr__(self, "dynamic_set", frozenset(int(c) for c in self.dynamic_set))
        if not self.dynamic_set <= set(range(1, MAX_CLASS_ID + 1)):
            raise ValueError("dynamic_set must be a subset of 1..20")

    @classmethod
    def with_dynamic(cls, classes):
        return cls(dynamic_set=frozenset(class_id(c) for c in classes))

    def lookup(self) -> np.ndarray:
        """Boolean table indexed by class id, True for dynamic classes."""
        lut = np.zeros(256, dtype=bool)
        lut[list(self.dynamic_set)] = True
        return lut

    def is_dynamic(self, mask) -> np.ndarray:
        return self.lookup()[np.asarray(mask, dtype=np.uint8)]


@dataclass
class ObjectInstance:
    class_id: int
    pixels: np.ndarray  # boolean raster, True on the component
    bbox: tuple  # (x_min, y_min, x_max, y_max), inclusive
    moving: bool = True

    @property
    def area(self) -> int:
        return int(self.pixels.sum())


def validate_mask(mask, expected_shape=None) -> np.ndarray:
    mask = np.asarray(mask)
    if mask.ndim != 2:
        raise ImageSizeError(f"mask must be single-channel, got shape {mask.shape}")
    if expected_shape is not None and tuple(mask.shape) != tuple(expected_shape):
        raise ImageSizeError(f"mask is {mask.shape[1]}x{mask.shape[0]}, frame is {expected_shape[1]}x{expected_shape[0]}")
    if mask.size and int(mask.max()) > MAX_CLASS_ID:
        raise ValueError(f"mask contains class id {int(mask.max())} > {MAX_CLASS_ID}")
    return mask.astype(np.uint8, copy=False)


def load_mask(path, expected_shape, strict: bool = False) -> np.ndarray:
    """Load an 8-bit label mask.

    A missing file yields an all-background mask with a warning unless
    ``strict`` is set. ``expected_shape`` is ``(height, width)``.
    """
    path = Path(path) if path is not None else None
    if path is None or not path.exists():
        if strict:
            raise DatasetError(f"mask file missing: {path}")
        log.warning("mask %s missing; treating frame as background", path)
        return np.zeros(tuple(expected_shape), dtype=np.uint8)
    mask = read_netpbm(path)
    if mask.dtype != np.uint8:
        raise ValueError(f"{path}: mask must be 8-bit")
    return validate_mask(mask, expected_shape)


_EIGHT = np.ones((3, 3), dtype=bool)


def connected_components(mask, min_area: int = 100, classes=None) -> list:
    """8-connected components per class id, dropping those under ``min_area``."""
    mask = validate_mask(mask)
    ids = np.unique(mask)
    out = []
    for cid in ids.tolist():
        if cid == 0 or (classes is not None and cid not in classes):
            continue
        labels, n = ndimage.label(mask == cid, structure=_EIGHT)
        if n == 0:
            continue
        slices = ndimage.find_objects(labels)
        for k, sl in enumerate(slices, start=1):
            comp = labels == k
            area = int(comp[sl].sum())
            if area < min_area:
                continue
            bbox = (sl[1].start, sl[0].start, sl[1].stop - 1, sl[0].stop - 1)
            out.append(ObjectInstance(cid, comp, bbox))
    return out


def disk(radius: int) -> np.ndarray:
    r = int(radius)
    yy, xx = np.mgrid[-r:r + 1, -r:r + 1]
    return xx * xx + yy * yy <= r * r


def dilate_dynamic(mask, table: ClassTable = ClassTable(), radius: int = 5) -> np.ndarray:
    """Grow dynamic-class regions by a disk of ``radius`` pixels.

    Grown pixels take the dynamic id; pixels already holding a dynamic id are
    left alone, and where two dynamic classes compete the lower id wins.
    """
    mask = validate_mask(mask)
    if radius < 0:
        raise ValueError("radius must be >= 0")
    if radius == 0:
        return mask.copy()
    dyn = table.is_dynamic(mask)
    if not dyn.any():
        return mask.copy()
    out = mask.copy()
    free = ~dyn
    fp = disk(radius)
    h, w = mask.shape
    for cid in sorted(set(np.unique(mask[dyn]).tolist())):
        # growth stays within the class's bounding box padded by the radius
        ys, xs = np.nonzero(mask == cid)
        win = (slice(max(ys.min() - radius, 0), min(ys.max() + radius + 1, h)),
               slice(max(xs.min() - radius, 0), min(xs.max() + radius + 1, w)))
        grown = ndimage.binary_dilation(mask[win] == cid, structure=fp)
        target = grown & free[win]
        out[win][target] = cid
        free[win] &= ~target
    return out


def pixel_labels(mask, xy) -> np.ndarray:
    """Labels at the nearest pixel of each ``(x, y)`` point (clamped)."""
    mask = np.asarray(mask)
    xy = np.asarray(xy, dtype=np.float64).reshape(-1, 2)
    h, w = mask.shape
    xi = np.clip(np.floor(xy[:, 0] + 0.5).astype(np.intp), 0, w - 1)
    yi = np.clip(np.floor(xy[:, 1] + 0.5).astype(np.intp), 0, h - 1)
    return mask[yi, xi]


def reject_masked_features(xy, mask, table: ClassTable = ClassTable()) -> np.ndarray:
    """True for features whose level-0 pixel carries a dynamic class."""
    labels = pixel_labels(mask, xy)
    return table.lookup()[labels]


def movement_check(objects, tracks: FlowTracks, inliers, tau_move: float = 0.5, n_min: int = 5) -> list:
    """Per-object moving flag from epipolar outliers among its flow points.

    Only tracked pairs count; they are attributed by their current-frame
    position. Objects holding fewer than ``n_min`` points are assumed moving.
    """
    inliers = np.asarray(inliers, dtype=bool)
    use = tracks.tracked
    xy = tracks.curr[use]
    inl = inliers[use]
    flags = []
    for obj in objects:
        h, w = obj.pixels.shape
        xi = np.clip(np.floor(xy[:, 0] + 0.5).astype(np.intp), 0, w - 1)
        yi = np.clip(np.floor(xy[:, 1] + 0.5).astype(np.intp), 0, h - 1)
        inside = obj.pixels[yi, xi] if len(xy) else np.zeros(0, bool)
        total = int(inside.sum())
        if total < n_min:
            moving = True
        else:
            moving = int((~inl[inside]).sum()) / total > tau_move
        obj.moving = moving
        flags.append(moving)
    return flags
