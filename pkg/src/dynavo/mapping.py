"""Colored local clouds and a sparse log-odds voxel occupancy map."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .geometry import CameraIntrinsics
from .semantics import ClassTable
from .trajectory import PoseSE3

_BITS = 21
_OFFSET = 1 << (_BITS - 1)
_FIELD = (1 << _BITS) - 1


def pack_keys(ijk) -> np.ndarray:
    ijk = np.asarray(ijk, dtype=np.int64).reshape(-1, 3) + _OFFSET
    return (ijk[:, 0] << (2 * _BITS)) | (ijk[:, 1] << _BITS) | ijk[:, 2]


def unpack_keys(keys) -> np.ndarray:
    keys = np.asarray(keys, dtype=np.int64)
    i = (keys >> (2 * _BITS)) & _FIELD
    j = (keys >> _BITS) & _FIELD
    k = keys & _FIELD
    return np.column_stack([i, j, k]) - _OFFSET


@dataclass(frozen=True)
class LocalCloud:
    points: np.ndarray  # (n, 3) camera frame, meters
    colors: np.ndarray  # (n, 3) uint8

    def __len__(self):
        return len(self.points)

    @classmethod
    def empty(cls):
        return cls(np.zeros((0, 3)), np.zeros((0, 3), np.uint8))


def build_local_cloud(rgb, depth, mask, K: CameraIntrinsics, table: ClassTable = ClassTable(),
                      max_cloud_depth: float = 20.0, stride: int = 2, exclude_dynamic: bool = True) -> LocalCloud:
    """Back-project strided pixels with valid depth, skipping dynamic classes.

    ``depth`` is in meters with 0 (or non-finite) marking invalid pixels.
    ``mask`` may be None when no labels are available.
    """
    rgb = np.asarray(rgb)
    depth = np.asarray(depth, dtype=np.float64)
    if rgb.ndim == 2:
        rgb = np.repeat(rgb[..., None], 3, axis=2)
    h, w = depth.shape
    if rgb.shape[:2] != (h, w) or (mask is not None and np.asarray(mask).shape != (h, w)):
        raise ValueError("rgb, depth and mask rasters must share dimensions")
    if stride < 1:
        raise ValueError("stride must be >= 1")
    vs, us = np.mgrid[0:h:stride, 0:w:stride]
    vs = vs.ravel()
    us = us.ravel()
    z = depth[vs, us]
    ok = np.isfinite(z) & (z > 0) & (z <= max_cloud_depth)
    if exclude_dynamic and mask is not None:
        ok &= ~table.lookup()[np.asarray(mask, dtype=np.uint8)[vs, us]]
    us, vs, z = us[ok], vs[ok], z[ok]
    pts = np.column_stack([(us - K.cx) * z / K.fx, (vs - K.cy) * z / K.fy, z])
    return LocalCloud(pts, rgb[vs, us].astype(np.uint8))


def depth_from_millimeters(raw) -> np.ndarray:
    return np.asarray(raw, dtype=np.float64) / 1000.0


def traverse_rays(origin, ends, resolution):
    """Voxel keys crossed by rays from ``origin`` to the centers of ``ends``.

    ``ends`` are integer voxel indices. Each ray contributes the cells from
    the origin cell up to, but excluding, its end cell (3D DDA). Returns the
    unique packed keys.
    """
    ends = np.asarray(ends, dtype=np.int64).reshape(-1, 3)
    if len(ends) == 0:
        return np.zeros(0, np.int64)
    o = np.asarray(origin, dtype=np.float64) / resolution
    start = np.floor(o).astype(np.int64)
    n_steps = np.abs(ends - start).sum(axis=1)
    live = n_steps > 0
    ends, n_steps = ends[live], n_steps[live]
    if len(ends) == 0:
        return np.zeros(0, np.int64)
    d = ends + 0.5 - o
    cell, step, t_max, t_delta = [], [], [], []
    with np.errstate(divide="ignore", invalid="ignore"):
        for a in range(3):
            da = d[:, a]
            sa = np.sign(da).astype(np.int64)
            inv = np.where(da != 0, 1.0 / da, np.inf)
            bound = start[a] + (sa > 0)
            cell.append(np.full(len(ends), start[a], np.int64))
            step.append(sa)
            t_max.append(np.where(da != 0, (bound - o[a]) * inv, np.inf))
            t_delta.append(np.abs(inv))
    cx, cy, cz = cell
    tx, ty, tz = t_max
    remaining = n_steps.copy()
    out = []
    while len(cx):
        out.append(((cx + _OFFSET) << (2 * _BITS)) | ((cy + _OFFSET) << _BITS) | (cz + _OFFSET))
        mx = (tx <= ty) & (tx <= tz)
        my = ~mx & (ty <= tz)
        mz = ~(mx | my)
        cx = cx + step[0] * mx
        cy = cy + step[1] * my
        cz = cz + step[2] * mz
        tx = np.where(mx, tx + t_delta[0], tx)
        ty = np.where(my, ty + t_delta[1], ty)
        tz = np.where(mz, tz + t_delta[2], tz)
        remaining = remaining - 1
        keep = remaining > 0
        if not keep.all():
            cx, cy, cz, tx, ty, tz, remaining = (v[keep] for v in (cx, cy, cz, tx, ty, tz, remaining))
            step = [v[keep] for v in step]
            t_delta = [v[keep] for v in t_delta]
    return np.unique(np.concatenate(out))


class VoxelMap:
    """Hashed voxel grid with clamped log-odds occupancy and mean colors.

    Each integration treats the frame as one scan: a cell hit by any point
    gets ``l_hit`` once, a cell only passed through gets ``l_miss`` once.
    """

    def __init__(self, resolution=0.10, l_hit=0.85, l_miss=-0.4, l_min=-2.0, l_max=3.5):
        self.resolution = float(resolution)
        self.l_hit = float(l_hit)
        self.l_miss = float(l_miss)
        self.l_min = float(l_min)
        self.l_max = float(l_max)
        self.keys = np.zeros(0, np.int64)
        self.log_odds = np.zeros(0)
        self.color_sum = np.zeros((0, 3))
        self.color_count = np.zeros(0, np.int64)

    def __len__(self):
        return len(self.keys)

    def copy(self) -> "VoxelMap":
        m = VoxelMap(self.resolution, self.l_hit, self.l_miss, self.l_min, self.l_max)
        m.keys = self.keys.copy()
        m.log_odds = self.log_odds.copy()
        m.color_sum = self.color_sum.copy()
        m.color_count = self.color_count.copy()
        return m

    def voxel_index(self, points) -> np.ndarray:
        return np.floor(np.asarray(points, dtype=np.float64) / self.resolution).astype(np.int64)

    def _ensure(self, keys):
        """Insert missing keys; returns the positions of ``keys`` in the arrays."""
        pos = np.searchsorted(self.keys, keys)
        if len(self.keys):
            found = (pos < len(self.keys)) & (self.keys[np.minimum(pos, len(self.keys) - 1)] == keys)
        else:
            found = np.zeros(len(keys), bool)
        new = keys[~found]
        if len(new):
            all_keys = np.concatenate([self.keys, new])
            order = np.argsort(all_keys, kind="stable")
            self.keys = all_keys[order]
            self.log_odds = np.concatenate([self.log_odds, np.zeros(len(new))])[order]
            self.color_sum = np.concatenate([self.color_sum, np.zeros((len(new), 3))])[order]
            self.color_count = np.concatenate([self.color_count, np.zeros(len(new), np.int64)])[order]
            pos = np.searchsorted(self.keys, keys)
        return pos

    def update(self, hit_keys, free_keys, colors_by_hit=None):
        """Apply one scan given unique hit keys and unique free keys."""
        hit_keys = np.asarray(hit_keys, np.int64)
        free_keys = np.setdiff1d(np.asarray(free_keys, np.int64), hit_keys, assume_unique=True)
        if len(free_keys):
            pos = self._ensure(free_keys)
            self.log_odds[pos] = np.clip(self.log_odds[pos] + self.l_miss, self.l_min, self.l_max)
        if len(hit_keys):
            pos = self._ensure(hit_keys)
            self.log_odds[pos] = np.clip(self.log_odds[pos] + self.l_hit, self.l_min, self.l_max)
            if colors_by_hit is not None:
                csum, ccount = colors_by_hit
                self.color_sum[pos] += csum
                self.color_count[pos] += ccount

    def integrate(self, cloud: LocalCloud, pose: PoseSE3, sensor_origin=None) -> "VoxelMap":
        """Fuse a camera-frame cloud observed from ``pose`` (camera-to-world)."""
        if len(cloud) == 0:
            return self
        origin = pose.t if sensor_origin is None else np.asarray(sensor_origin, dtype=np.float64)
        world = pose @ cloud.points
        idx = self.voxel_index(world)
        keys = pack_keys(idx)
        hit, inverse = np.unique(keys, return_inverse=True)
        inverse = inverse.reshape(-1)
        csum = np.zeros((len(hit), 3))
        np.add.at(csum, inverse, cloud.colors.astype(np.float64))
        ccount = np.bincount(inverse, minlength=len(hit)).astype(np.int64)
        free = traverse_rays(origin, unpack_keys(hit), self.resolution)
        self.update(hit, free, (csum, ccount))
        return self

    def occupied_mask(self) -> np.ndarray:
        return self.log_odds > 0

    def occupied_indices(self) -> np.ndarray:
        """Occupied cell indices in lexicographic ``(i, j, k)`` order."""
        return unpack_keys(self.keys[self.occupied_mask()])

    def cell_centers(self, ijk) -> np.ndarray:
        return (np.asarray(ijk, dtype=np.float64) + 0.5) * self.resolution

    def log_odds_at(self, ijk) -> np.ndarray:
        keys = pack_keys(ijk)
        pos = np.searchsorted(self.keys, keys)
        out = np.zeros(len(keys))
        if len(self.keys):
            p = np.minimum(pos, len(self.keys) - 1)
            hit = self.keys[p] == keys
            out[hit] = self.log_odds[p[hit]]
        return out

    def mean_colors(self, mask=None) -> np.ndarray:
        sel = slice(None) if mask is None else mask
        cnt = np.maximum(self.color_count[sel], 1)[:, None]
        return np.clip(np.floor(self.color_sum[sel] / cnt + 0.5), 0, 255).astype(np.uint8)


def export_ply(vmap: VoxelMap, path) -> int:
    """Write occupied cell centers as an ASCII PLY; returns the vertex count."""
    occ = vmap.occupied_mask()
    ijk = unpack_keys(vmap.keys[occ])
    xyz = vmap.cell_centers(ijk)
    rgb = vmap.mean_colors(occ)
    lines = [
        "ply",
        "format ascii 1.0",
        f"comment voxel_resolution {vmap.resolution!r}",
        f"element vertex {len(xyz)}",
        "property float x",
        "property float y",
        "property float z",
        "property uchar red",
        "property uchar green",
        "property uchar blue",
        "end_header",
    ]
    for (x, y, z), (r, g, b) in zip(xyz.tolist(), rgb.tolist()):
        lines.append(f"{x:.6f} {y:.6f} {z:.6f} {r} {g} {b}")
    Path(path).write_text("\n".join(lines) + "\n")
    return len(xyz)


def read_ply(path):
    """Parse an ASCII PLY written by ``export_ply``; returns ``(xyz, rgb)``."""
    text = Path(path).read_text().splitlines()
    if not text or text[0].strip() != "ply":
        raise ValueError(f"{path}: not a PLY file")
    n = None
    body = None
    for i, line in enumerate(text):
        if line.startswith("element vertex"):
            n = int(line.split()[2])
        if line.strip() == "end_header":
            body = i + 1
            break
    if n is None or body is None:
        raise ValueError(f"{path}: malformed PLY header")
    rows = [line.split() for line in text[body:body + n]]
    if len(rows) != n:
        raise ValueError(f"{path}: expected {n} vertices, found {len(rows)}")
    if n == 0:
        return np.zeros((0, 3)), np.zeros((0, 3), np.uint8)
    arr = np.array(rows, dtype=np.float64)
    return arr[:, :3], arr[:, 3:6].astype(np.uint8)


def ply_voxels(path, resolution) -> np.ndarray:
    """Cell indices of a PLY exported at ``resolution``."""
    xyz, _ = read_ply(path)
    return np.floor(xyz / resolution).astype(np.int64)


def write_occupancy_csv(vmap: VoxelMap, path) -> None:
    ijk = unpack_keys(vmap.keys)
    lines = ["i,j,k,log_odds"]
    for (i, j, k), l in zip(ijk.tolist(), vmap.log_odds.tolist()):
        lines.append(f"{i},{j},{k},{l:.6f}")
    Path(path).write_text("\n".join(lines) + "\n")
