"""Image containers, pyramids and ORB feature machinery.

Grayscale images are plain ``uint8`` arrays of shape ``(height, width)``;
RGB images are ``uint8`` arrays of shape ``(height, width, 3)``. Keypoint
coordinates live in the coordinate frame of their pyramid level, with
``x_level0 = x * scale_factor ** level``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import ndimage

from ._pattern import BRIEF_PATTERN, PATTERN_RADIUS, SMOOTH_SIGMA
from .errors import ImageSizeError, PatchOutOfBounds

# 16-pixel Bresenham circle of radius 3, clockwise from 12 o'clock.
FAST_CIRCLE = np.array(
    [
        (0, -3), (1, -3), (2, -2), (3, -1), (3, 0), (3, 1), (2, 2), (1, 3),
        (0, 3), (-1, 3), (-2, 2), (-3, 1), (-3, 0), (-3, -1), (-2, -2), (-1, -3),
    ],
    dtype=np.int64,
)
FAST_ARC = 9
FAST_BORDER = 3

ORIENTATION_RADIUS = 15
DESCRIPTOR_BORDER = PATTERN_RADIUS + 1  # test points lie in a disk, so rotation keeps them within it
DESCRIPTOR_BYTES = 32

_BINOMIAL5 = np.array([1.0, 4.0, 6.0, 4.0, 1.0]) / 16.0


# --------------------------------------------------------------------------
# Raster helpers and netpbm I/O
# --------------------------------------------------------------------------

def as_gray(img) -> np.ndarray:
    arr = np.asarray(img)
    if arr.ndim == 3:
        return rgb_to_gray(arr)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ImageSizeError(f"expected a 2D image, got shape {arr.shape}")
    if arr.dtype != np.uint8:
        arr = np.clip(np.floor(arr.astype(np.float64) + 0.5), 0, 255).astype(np.uint8)
    return arr


def rgb_to_gray(rgb) -> np.ndarray:
    """Luma ``round(0.299 R + 0.587 G + 0.114 B)``, rounding half up."""
    rgb = np.asarray(rgb, dtype=np.float64)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise ImageSizeError(f"expected an (H, W, 3) image, got shape {rgb.shape}")
    luma = 0.299 * rgb[..., 0] + 0.587 * rgb[..., 1] + 0.114 * rgb[..., 2]
    return np.clip(np.floor(luma + 0.5), 0, 255).astype(np.uint8)


def _read_netpbm_header(data: bytes, path):
    tokens = []
    pos = 0
    n = len(data)
    while len(tokens) < 4:
        while pos < n and data[pos:pos + 1].isspace():
            pos += 1
        if pos < n and data[pos:pos + 1] == b"#":
            while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise ValueError(f"{path}: truncated netpbm header")
        tokens.append(data[start:pos])
    # exactly one whitespace byte separates the header from the raster
    pos += 1
    magic = tokens[0].decode("ascii")
    width, height, maxval = (int(t) for t in tokens[1:])
    return magic, width, height, maxval, pos


def read_netpbm(path) -> np.ndarray:
    """Read a binary PGM (P5, 8 or 16 bit) or PPM (P6, 8 bit) file."""
    data = Path(path).read_bytes()
    magic, width, height, maxval, offset = _read_netpbm_header(data, path)
    if magic not in ("P5", "P6"):
        raise ValueError(f"{path}: unsupported netpbm type {magic!r}")
    channels = 3 if magic == "P6" else 1
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype(np.uint8)
    count = width * height * channels
    raster = np.frombuffer(data, dtype=dtype, count=count, offset=offset)
    if channels == 3:
        raster = raster.reshape(height, width, 3)
    else:
        raster = raster.reshape(height, width)
    if dtype.itemsize == 2:
        return raster.astype(np.uint16)
    return raster.copy()


def write_netpbm(path, img) -> None:
    """Write ``uint8`` gray (P5), ``uint16`` gray (16-bit P5) or RGB (P6)."""
    arr = np.asarray(img)
    if arr.ndim == 3 and arr.shape[2] == 3 and arr.dtype == np.uint8:
        magic, maxval, payload = "P6", 255, arr.tobytes()
    elif arr.ndim == 2 and arr.dtype == np.uint8:
        magic, maxval, payload = "P5", 255, arr.tobytes()
    elif arr.ndim == 2 and arr.dtype == np.uint16:
        magic, maxval, payload = "P5", 65535, arr.astype(">u2").tobytes()
    else:
        raise ValueError(f"cannot write array of shape {arr.shape} and dtype {arr.dtype}")
    header = f"{magic}\n{arr.shape[1]} {arr.shape[0]}\n{maxval}\n".encode("ascii")
    Path(path).write_bytes(header + payload)


read_pgm = read_netpbm
read_ppm = read_netpbm
write_pgm = write_netpbm
write_ppm = write_netpbm


def load_image(path) -> np.ndarray:
    """Load a raster by extension: netpbm natively, anything else through Pillow."""
    path = Path(path)
    if path.suffix.lower() in (".pgm", ".ppm", ".pnm"):
        return read_netpbm(path)
    from PIL import Image

    with Image.open(path) as im:
        if im.mode in ("I;16", "I;16B", "I"):
            return np.asarray(im, dtype=np.uint16)
        if im.mode not in ("L", "RGB"):
            im = im.convert("RGB")
        return np.asarray(im).copy()


# --------------------------------------------------------------------------
# Pyramids
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ImagePyramid:
    levels: tuple
    scale_factor: float

    def __len__(self):
        return len(self.levels)

    def __getitem__(self, k):
        return self.levels[k]

    def scale(self, level):
        return self.scale_factor ** level

    @property
    def shape(self):
        return self.levels[0].shape


def pyramid_shapes(shape, levels, scale_factor):
    h, w = shape
    out = []
    for k in range(levels):
        s = scale_factor ** k
        # guard against 399.99999 when the exact ratio is integral
        out.append((int(math.floor(h / s + 1e-9)), int(math.floor(w / s + 1e-9))))
    return out


def smooth_binomial(img: np.ndarray) -> np.ndarray:
    f = np.asarray(img, dtype=np.float64)
    f = ndimage.correlate1d(f, _BINOMIAL5, axis=0, mode="reflect")
    return ndimage.correlate1d(f, _BINOMIAL5, axis=1, mode="reflect")


def build_pyramid(img, levels: int = 4, scale_factor: float = 1.2, min_size: int = 32) -> ImagePyramid:
    """Build an image pyramid.

    Level 0 is the input itself. Level ``k`` is level ``k - 1`` smoothed with
    a 5-tap binomial kernel and bilinearly resampled so that its pixel ``x``
    sits at coordinate ``x * scale_factor`` of the previous level.
    """
    img = as_gray(img)
    if levels < 1:
        raise ValueError("levels must be >= 1")
    if not scale_factor > 1.0:
        raise ValueError("scale_factor must be > 1")
    shapes = pyramid_shapes(img.shape, levels, scale_factor)
    h_min, w_min = shapes[-1]
    if h_min < min_size or w_min < min_size:
        raise ImageSizeError(
            f"image {img.shape[1]}x{img.shape[0]} too small for {levels} levels "
            f"at factor {scale_factor}: smallest level would be {w_min}x{h_min}"
        )
    out = [img]
    for k in range(1, levels):
        prev = smooth_binomial(out[-1])
        h, w = shapes[k]
        ys = np.arange(h, dtype=np.float64) * scale_factor
        xs = np.arange(w, dtype=np.float64) * scale_factor
        sampled = bilinear_grid(prev, xs, ys)
        out.append(np.clip(np.floor(sampled + 0.5), 0, 255).astype(np.uint8))
    return ImagePyramid(tuple(out), float(scale_factor))


def bilinear_grid(img: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Sample ``img`` on the separable grid ``ys x xs`` with edge clamping."""
    h, w = img.shape
    xs = np.clip(xs, 0.0, w - 1.0)
    ys = np.clip(ys, 0.0, h - 1.0)
    x0 = np.minimum(np.floor(xs).astype(np.intp), w - 2) if w > 1 else np.zeros(len(xs), np.intp)
    y0 = np.minimum(np.floor(ys).astype(np.intp), h - 2) if h > 1 else np.zeros(len(ys), np.intp)
    ax = (xs - x0)[None, :]
    ay = (ys - y0)[:, None]
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    top = img[y0][:, x0] * (1.0 - ax) + img[y0][:, x1] * ax
    bot = img[y1][:, x0] * (1.0 - ax) + img[y1][:, x1] * ax
    return top * (1.0 - ay) + bot * ay


def bilinear_sample(img: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Sample ``img`` at arbitrary points, clamping coordinates to the image."""
    h, w = img.shape
    x = np.clip(x, 0.0, w - 1.0)
    y = np.clip(y, 0.0, h - 1.0)
    x0 = np.minimum(x.astype(np.intp), max(w - 2, 0))
    y0 = np.minimum(y.astype(np.intp), max(h - 2, 0))
    ax = x - x0
    ay = y - y0
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    i00 = img[y0, x0]
    i01 = img[y0, x1]
    i10 = img[y1, x0]
    i11 = img[y1, x1]
    top = i00 + (i01 - i00) * ax
    bot = i10 + (i11 - i10) * ax
    return top + (bot - top) * ay


# --------------------------------------------------------------------------
# Keypoints
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class FeaturePoint:
    x: float
    y: float
    level: int = 0
    response: float = 0.0
    angle: float = 0.0


@dataclass
class Keypoints:
    """Struct-of-arrays keypoint set with optional 256-bit descriptors."""

    x: np.ndarray
    y: np.ndarray
    level: np.ndarray
    response: np.ndarray
    angle: np.ndarray
    scale_factor: float = 1.2
    descriptors: np.ndarray | None = None

    @classmethod
    def empty(cls, scale_factor=1.2):
        z = np.zeros(0)
        return cls(z, z.copy(), np.zeros(0, np.int64), z.copy(), z.copy(), scale_factor,
                   np.zeros((0, DESCRIPTOR_BYTES), np.uint8))

    def __len__(self):
        return len(self.x)

    def subset(self, idx) -> "Keypoints":
        d = None if self.descriptors is None else self.descriptors[idx]
        return Keypoints(self.x[idx], self.y[idx], self.level[idx], self.response[idx],
                         self.angle[idx], self.scale_factor, d)

    @property
    def scale(self) -> np.ndarray:
        return self.scale_factor ** self.level.astype(np.float64)

    @property
    def xy0(self) -> np.ndarray:
        """Coordinates mapped to the level-0 image, shape ``(n, 2)``."""
        s = self.scale
        return np.column_stack([self.x * s, self.y * s])

    def point(self, i) -> FeaturePoint:
        return FeaturePoint(float(self.x[i]), float(self.y[i]), int(self.level[i]),
                            float(self.response[i]), float(self.angle[i]))

    def to_points(self) -> list:
        return [self.point(i) for i in range(len(self))]


def concat_keypoints(parts, scale_factor) -> Keypoints:
    if not parts:
        return Keypoints.empty(scale_factor)
    desc = None
    if all(p.descriptors is not None for p in parts):
        desc = np.concatenate([p.descriptors for p in parts])
    return Keypoints(
        np.concatenate([p.x for p in parts]),
        np.concatenate([p.y for p in parts]),
        np.concatenate([p.level for p in parts]),
        np.concatenate([p.response for p in parts]),
        np.concatenate([p.angle for p in parts]),
        scale_factor,
        desc,
    )


# --------------------------------------------------------------------------
# FAST
# --------------------------------------------------------------------------

def fast_score_map(img, threshold: float) -> np.ndarray:
    """Segment-test corner score for every pixel (0 where the test fails).

    The score is the larger of the summed excess brightness over the bright
    circle pixels and the summed excess darkness over the dark ones. Any arc
    of 9 contiguous circle pixels covers two neighbouring compass pixels
    (indices 0, 4, 8, 12), so only pixels passing that cheap test are
    examined in full.
    """
    if threshold <= 0:
        raise ValueError("threshold must be > 0")
    I = as_gray(img).astype(np.int16)
    h, w = I.shape
    score = np.zeros((h, w), dtype=np.float64)
    b = FAST_BORDER
    if h <= 2 * b or w <= 2 * b:
        return score
    c = I[b:h - b, b:w - b]
    t = float(threshold)
    # intensities are integers, so d > t  <=>  d > floor(t)
    ti = np.int16(min(np.floor(t), 1024))  # any threshold above 255 rejects everything
    hi = c + ti
    lo = c - ti

    def ring(k):
        dx, dy = FAST_CIRCLE[k]
        return I[b + dy:h - b + dy, b + dx:w - b + dx]

    compass = [ring(k) for k in (0, 4, 8, 12)]
    br = [r > hi for r in compass]
    dk = [r < lo for r in compass]
    cand = np.zeros(c.shape, bool)
    for j in range(4):
        cand |= (br[j] & br[(j + 1) % 4]) | (dk[j] & dk[(j + 1) % 4])
    ys, xs = np.nonzero(cand)
    if len(ys) == 0:
        return score
    flat = I.ravel()
    base = (ys + b) * w + (xs + b)
    offsets = FAST_CIRCLE[:, 1] * w + FAST_CIRCLE[:, 0]
    diff = flat[base[:, None] + offsets[None, :]] - flat[base][:, None]
    is_b = diff > ti
    is_d = diff < -ti
    # each row is exactly 16 bits, so packing the flat buffer keeps rows aligned (and is much faster)
    bright = np.packbits(is_b.reshape(-1), bitorder="little").view(np.uint16).astype(np.uint32)
    dark = np.packbits(is_d.reshape(-1), bitorder="little").view(np.uint16).astype(np.uint32)
    corner = _has_arc(bright) | _has_arc(dark)
    if not corner.any():
        return score
    df = diff[corner].astype(np.float64)
    sum_b = ((df - t) * is_b[corner]).sum(axis=1)
    sum_d = ((-df - t) * is_d[corner]).sum(axis=1)
    score[ys[corner] + b, xs[corner] + b] = np.maximum(sum_b, sum_d)
    return score


def _has_arc(mask: np.ndarray) -> np.ndarray:
    doubled = mask | (mask << np.uint32(16))
    run = doubled.copy()
    for i in range(1, FAST_ARC):
        run &= doubled >> np.uint32(i)
    return run != 0


def _disk(radius: int) -> np.ndarray:
    r = int(radius)
    yy, xx = np.mgrid[-r:r + 1, -r:r + 1]
    return (xx * xx + yy * yy) <= r * r


def detect_fast(img, threshold: float = 20, nms_radius: int = 2):
    """FAST-9 corners with non-maximum suppression.

    Returns an ``(n, 3)`` float array of ``(x, y, score)`` rows sorted by
    row-major pixel position.
    """
    score = fast_score_map(img, threshold)
    ys, xs = np.nonzero(score > 0)
    if nms_radius > 0 and len(ys):
        # disk maximum at the corner pixels only; zero padding matches a constant-mode filter
        r = int(nms_radius)
        dy, dx = np.nonzero(_disk(r))
        padded = np.pad(score, r)
        w = padded.shape[1]
        nbr = padded.ravel()[((ys + r) * w + xs + r)[:, None] + ((dy - r) * w + (dx - r))[None, :]]
        keep = score[ys, xs] >= nbr.max(axis=1)
        ys, xs = ys[keep], xs[keep]
    return np.column_stack([xs.astype(np.float64), ys.astype(np.float64), score[ys, xs]])


# --------------------------------------------------------------------------
# Harris
# --------------------------------------------------------------------------

def image_gradients(img):
    """Central-difference gradients ``(Ix, Iy)`` with replicated borders."""
    f = np.asarray(img, dtype=np.float64)
    k = np.array([-0.5, 0.0, 0.5])
    ix = ndimage.correlate1d(f, k, axis=1, mode="nearest")
    iy = ndimage.correlate1d(f, k, axis=0, mode="nearest")
    return ix, iy


def structure_tensor(img, window: int = 3):
    ix, iy = image_gradients(img)
    size = (window, window)
    # uniform_filter averages; scale back to window sums
    area = float(window * window)
    sxx = ndimage.uniform_filter(ix * ix, size, mode="constant") * area
    syy = ndimage.uniform_filter(iy * iy, size, mode="constant") * area
    sxy = ndimage.uniform_filter(ix * iy, size, mode="constant") * area
    return sxx, syy, sxy


def harris_response(img, window: int = 3, k: float = 0.04) -> np.ndarray:
    """Per-pixel ``det(M) - k trace(M)^2`` of the window-summed structure tensor."""
    if window < 3 or window % 2 == 0:
        raise ValueError("window must be odd and >= 3")
    sxx, syy, sxy = structure_tensor(img, window)
    return sxx * syy - sxy * sxy - k * (sxx + syy) ** 2


class _TensorWindows:
    """Zero-padded gradient products viewed as ``window x window`` tiles."""

    def __init__(self, ix, iy, window):
        r = window // 2
        self.views = [sliding_window_view(np.pad(a * b, r), (window, window))
                      for a, b in ((ix, ix), (iy, iy), (ix, iy))]

    def harris(self, xs, ys, k=0.04):
        xs = np.asarray(xs).astype(np.intp)
        ys = np.asarray(ys).astype(np.intp)
        sxx, syy, sxy = (v[ys, xs].sum(axis=(1, 2)) for v in self.views)
        return sxx * syy - sxy * sxy - k * (sxx + syy) ** 2


def harris_at(ix, iy, xs, ys, window: int = 3, k: float = 0.04) -> np.ndarray:
    """Harris response at integer pixels ``(xs, ys)`` from gradient images.

    Equal to ``harris_response`` sampled at those pixels; windows reaching
    past the border are zero-padded the same way.
    """
    return _TensorWindows(ix, iy, window).harris(xs, ys, k)


def _disk_offsets(radius):
    yy, xx = np.mgrid[-radius:radius + 1, -radius:radius + 1]
    inside = xx * xx + yy * yy <= radius * radius
    return xx[inside].astype(np.intp), yy[inside].astype(np.intp)


_ORIENT_DX, _ORIENT_DY = _disk_offsets(ORIENTATION_RADIUS)


def _orientation_batch(img, xs, ys, radius=ORIENTATION_RADIUS):
    if radius == ORIENTATION_RADIUS:
        dx, dy = _ORIENT_DX, _ORIENT_DY
    else:
        dx, dy = _disk_offsets(radius)
    xi = np.rint(xs).astype(np.intp)
    yi = np.rint(ys).astype(np.intp)
    vals = img[yi[:, None] + dy[None, :], xi[:, None] + dx[None, :]].astype(np.float64)
    m10 = vals @ dx.astype(np.float64)
    m01 = vals @ dy.astype(np.float64)
    m00 = vals.sum(axis=1)
    tiny = np.hypot(m10, m01) <= 1e-9 * np.maximum(m00, 1.0)
    ang = np.arctan2(m01, m10)
    ang[tiny] = 0.0
    return ang


def compute_orientation(img, p: FeaturePoint, radius: int = ORIENTATION_RADIUS) -> float:
    """Intensity-centroid angle ``atan2(m01, m10)`` over a disk around ``p``.

    Angles are measured in pixel coordinates (x right, y down), so positive
    angles turn +x towards +y. A patch with vanishing first moments gets 0.
    """
    img = as_gray(img)
    h, w = img.shape
    xi, yi = int(round(p.x)), int(round(p.y))
    if xi - radius < 0 or yi - radius < 0 or xi + radius >= w or yi + radius >= h:
        raise PatchOutOfBounds(f"orientation patch of radius {radius} at ({p.x}, {p.y}) leaves the image")
    return float(_orientation_batch(img, np.array([p.x]), np.array([p.y]), radius)[0])


# --------------------------------------------------------------------------
# Steered BRIEF
# --------------------------------------------------------------------------

def descriptor_smooth(img) -> np.ndarray:
    """Gaussian pre-smoothing (7x7 support) applied before the tests."""
    return ndimage.gaussian_filter(np.asarray(img, dtype=np.float64), SMOOTH_SIGMA,
                                   truncate=3.0 / SMOOTH_SIGMA, mode="reflect")


def _describe_batch(smoothed, xs, ys, angles):
    n = len(xs)
    if n == 0:
        return np.zeros((0, DESCRIPTOR_BYTES), np.uint8)
    pat = BRIEF_PATTERN.astype(np.float64)
    c = np.cos(angles)[:, None]
    s = np.sin(angles)[:, None]
    xi = np.rint(xs).astype(np.intp)[:, None]
    yi = np.rint(ys).astype(np.intp)[:, None]

    def sample(px, py):
        rx = np.rint(c * px[None, :] - s * py[None, :]).astype(np.intp)
        ry = np.rint(s * px[None, :] + c * py[None, :]).astype(np.intp)
        return smoothed[yi + ry, xi + rx]

    a = sample(pat[:, 0], pat[:, 1])
    b = sample(pat[:, 2], pat[:, 3])
    bits = a < b
    return np.packbits(bits, axis=1)


def describable(shape, xs, ys, border=DESCRIPTOR_BORDER):
    h, w = shape
    xi = np.rint(xs)
    yi = np.rint(ys)
    return (xi >= border) & (yi >= border) & (xi <= w - 1 - border) & (yi <= h - 1 - border)


def compute_descriptor(img, p: FeaturePoint, smoothed=None) -> np.ndarray:
    """256-bit steered BRIEF descriptor as 32 packed bytes (MSB first).

    Bit ``i`` is set when the smoothed intensity at the rotated first point of
    pattern row ``i`` is lower than at its rotated second point.
    """
    img = as_gray(img)
    if not describable(img.shape, np.array([p.x]), np.array([p.y]))[0]:
        raise PatchOutOfBounds(f"descriptor patch at ({p.x}, {p.y}) is within {DESCRIPTOR_BORDER} px of the border")
    if smoothed is None:
        smoothed = descriptor_smooth(img)
    return _describe_batch(smoothed, np.array([p.x]), np.array([p.y]), np.array([p.angle]))[0]


def hamming(a, b) -> int:
    return int(np.bitwise_count(np.bitwise_xor(np.asarray(a, np.uint8), np.asarray(b, np.uint8))).sum())


def hamming_matrix(a, b) -> np.ndarray:
    """All-pairs Hamming distances between two packed descriptor sets."""
    a = np.asarray(a, np.uint8)
    b = np.asarray(b, np.uint8)
    if len(a) == 0 or len(b) == 0:
        return np.zeros((len(a), len(b)), np.int32)
    ab = np.unpackbits(a, axis=1).astype(np.float32)
    bb = np.unpackbits(b, axis=1).astype(np.float32)
    # |a xor b| = |a| + |b| - 2 a.b ; exact in float32 for 256 bits
    d = ab.sum(1)[:, None] + bb.sum(1)[None, :] - 2.0 * (ab @ bb.T)
    return np.rint(d).astype(np.int32)


# --------------------------------------------------------------------------
# ORB extractor
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class OrbParams:
    n_features: int = 1000
    levels: int = 4
    scale_factor: float = 1.2
    fast_threshold: float = 20.0
    fast_min_threshold: float = 7.0
    min_detections: int = 50
    nms_radius: int = 2
    harris_window: int = 7
    cell_size: int = 32
    subpixel: bool = True


def features_per_level(n_features, levels, scale_factor):
    f = 1.0 / scale_factor
    if levels == 1:
        return [n_features]
    first = n_features * (1.0 - f) / (1.0 - f ** levels)
    counts = [int(round(first * f ** k)) for k in range(levels - 1)]
    counts.append(max(n_features - sum(counts), 0))
    return counts


def _distribute(xs, ys, score, n_keep, cell, width):
    """Pick up to ``n_keep`` points, interleaving grid cells by per-cell rank."""
    if len(xs) <= n_keep:
        order = np.lexsort((xs, ys, -score))
        return order
    ncols = width // cell + 1
    cell_id = (ys.astype(np.int64) // cell) * ncols + xs.astype(np.int64) // cell
    order = np.lexsort((xs, ys, -score, cell_id))
    sorted_cells = cell_id[order]
    starts = np.r_[0, np.nonzero(np.diff(sorted_cells))[0] + 1]
    group_start = np.repeat(starts, np.diff(np.r_[starts, len(order)]))
    rank = np.empty(len(order), np.int64)
    rank[order] = np.arange(len(order)) - group_start
    final = np.lexsort((xs, ys, -score, rank))
    return final[:n_keep]


def subpixel_offsets(tiles: _TensorWindows, xs, ys):
    """Quadratic peak offsets of the Harris response around integer maxima.

    A full 2D fit is used when its Hessian is negative definite; otherwise
    each axis falls back to its own parabola. Offsets are clamped to half a
    pixel.
    """
    xi = xs.astype(np.intp)
    yi = ys.astype(np.intp)
    off = [(dx, dy) for dy in (-1, 0, 1) for dx in (-1, 0, 1)]
    vals = tiles.harris(np.concatenate([xi + dx for dx, _ in off]),
                        np.concatenate([yi + dy for _, dy in off])).reshape(len(off), -1)
    R = {o: v for o, v in zip(off, vals)}
    c = R[(0, 0)]
    l, r = R[(-1, 0)], R[(1, 0)]
    u, d = R[(0, -1)], R[(0, 1)]
    gx, gy = (r - l) / 2, (d - u) / 2
    hxx, hyy = r - 2 * c + l, d - 2 * c + u
    hxy = (R[(1, 1)] - R[(-1, 1)] - R[(1, -1)] + R[(-1, -1)]) / 4
    det = hxx * hyy - hxy * hxy
    full = (hxx < 0) & (det > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        dx = np.where(full, (-hyy * gx + hxy * gy) / det, np.where(hxx < 0, -gx / hxx, 0.0))
        dy = np.where(full, (hxy * gx - hxx * gy) / det, np.where(hyy < 0, -gy / hyy, 0.0))
    dx = np.clip(np.nan_to_num(dx), -0.5, 0.5)
    dy = np.clip(np.nan_to_num(dy), -0.5, 0.5)
    return dx, dy


def extract_orb(img, params: OrbParams = OrbParams(), pyramid: ImagePyramid | None = None) -> Keypoints:
    """Detect, orient and describe ORB features over a scale pyramid."""
    if pyramid is None:
        pyramid = build_pyramid(img, params.levels, params.scale_factor)
    quotas = features_per_level(params.n_features, len(pyramid), pyramid.scale_factor)
    parts = []
    for level, quota in enumerate(quotas):
        limg = pyramid[level]
        pts = detect_fast(limg, params.fast_threshold, params.nms_radius)
        pts = pts[describable(limg.shape, pts[:, 0], pts[:, 1])]
        if len(pts) < params.min_detections and params.fast_min_threshold < params.fast_threshold:
            pts = detect_fast(limg, params.fast_min_threshold, params.nms_radius)
            pts = pts[describable(limg.shape, pts[:, 0], pts[:, 1])]
        if len(pts) == 0 or quota == 0:
            continue
        tiles = _TensorWindows(*image_gradients(limg), params.harris_window)
        xs, ys = pts[:, 0], pts[:, 1]
        resp = tiles.harris(xs, ys)
        keep = _distribute(xs, ys, resp, quota, params.cell_size, limg.shape[1])
        xs, ys, resp = xs[keep], ys[keep], resp[keep]
        angles = _orientation_batch(limg, xs, ys)
        desc = _describe_batch(descriptor_smooth(limg), xs, ys, angles)
        if params.subpixel:
            dx, dy = subpixel_offsets(tiles, xs, ys)
            xs, ys = xs + dx, ys + dy
        parts.append(Keypoints(xs, ys, np.full(len(xs), level, np.int64), resp, angles,
                               pyramid.scale_factor, desc))
    return concat_keypoints(parts, pyramid.scale_factor)
