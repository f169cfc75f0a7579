"""Fixed sampling pattern for the steered binary descriptor.

Each row is one intensity test ``(x1, y1, x2, y2)`` in pixel offsets from the
keypoint. Candidate points were drawn from an isotropic Gaussian (sigma =
31/5 px), rounded to integers and kept inside the disk of radius 15, using
numpy's PCG64 generator seeded with 0x5713D. Tests sampled that way share
pixels and neighbourhoods, so their bits are correlated; the 256 rows kept
were therefore selected from a larger pool to be nearly uncorrelated on noise
(see ``generate_pattern``). The literal below is what the descriptor uses, so
descriptors do not depend on the numpy or scipy version installed.
"""

import numpy as np
from scipy import ndimage

PATTERN_SEED = 0x5713D
PATTERN_RADIUS = 15
# Gaussian pre-smoothing applied to the image before the tests (7x7 support).
SMOOTH_SIGMA = 1.0

_PATTERN = (
    ( 12,  -9,   1,  -3), (  4, -13,   0,   2), (  5,  -2,   5,  -1), (  4,   1,  12,   8),
    ( -6,   9,  -7,   3), ( -7,   2,  -7,   3), ( -2,   1,  -4,   2), ( -7,   3,   7,   5),
    ( -6,  -7,  -5, -11), ( -4,  -2,   5,  10), ( 11,   2,  12,  -1), ( 12,  -3,   2, -12),
    ( -3,  12,  -9, -10), ( -2,  -4,  -2, -14), (  0,  15, -13,   7), (  2,   2,   2,   3),
    ( 12,   1, -11,   8), (  9,  -1,   2, -10), ( -2,   6,  -3,   3), (-12,  -7,  -5,  -2),
    ( -2,  -4,  -1,  -3), (  4,   3,   6, -12), ( 13,   0,   7,  12), (  8,  -7,  -1, -12),
    ( -5,  -1,  -6,  -2), ( -7,  -4, -12,   5), (  7,  -8,  -5,  12), ( -1,   2,   0,   3),
    (  9,  -8,   8,  -5), (-14,  -3,  -7, -13), ( -6,   8,  -4,   9), ( -1,  -7,   0,  -7),
    (  2,  -2,   3,  -4), (  9,   2,  14,  -2), ( 11,   5,  -4,   5), ( 11,  10,   1,  11),
    ( 12,  -1,  14,  -2), (-13,  -5, -14,   5), ( -5,  14,   1, -14), (-11,   1, -10,   0),
    ( -7,  11,   7, -13), ( -2,  -2,  -1,  -3), (  0,  -9,   3,  -8), (  5,  -1,   7,  -1),
    (-12,   2,   9,   5), (  5,   1,   3,   1), (  5,  -6,  12,  -5), (  9,  -3,  -6, -11),
    ( -1,   7,  -4,   7), (  4,   6,   2,   5), (-11,  -6, -11,   4), ( 11, -10,  -9,   9),
    ( -6,  -5,  -5,  -5), (  2,   0,   1,   0), ( -8,   1,  -8,  -1), ( -1,  10,   2,  13),
    (-10,   2,  11,  -7), ( 13,   4,  -8,   8), (  5, -10,   5,  -9), ( -3,   5,  -5,   5),
    ( -5, -13,  -9,  -7), (  0,  -5,   1,  -5), ( -2,  14,   3,   8), ( -9,   3,  -6,   2),
    ( -1,   6,  -2,   8), (  3,   4,   5,   3), (  5,  -5,   6,  -5), ( -2,   2,  -1,   2),
    ( -7, -11,  -4,  -8), ( -9,  11,  -6,  11), (  1,  -2,  13,   7), (  9, -10,   4, -10),
    (  3,  -5,   3,  -4), (-10,  -7, -10,  -6), (  9,   8,  -8,  -6), ( 14,   2,   7,   8),
    ( -3, -11,  10,  -6), (-12,  -2, -11,  -3), (  7,   4,   6,   5), ( 10,   2,   8,   3),
    ( -8,  -4,  -7,  -6), (-10,   1,   0,  13), ( -6,   2,  -5,   3), (-12,   9,   3, -12),
    (  0,  -4,  -1,  -3), (  8,   0,   8,  -1), (  3,   8,   2,   9), ( -8, -10,   5,  14),
    ( -7,   5,  -9,   7), ( 10,   6,  -7,   8), ( -3,  -3,  13,  -7), ( -7,   8,  -8,   9),
    (  0,   5,   0,   6), (  3,  10,   7,  10), (  7,   2,   9,   3), (  2,   3,   1,   5),
    ( -1,   1,  -1,   0), (  3,  -7,  -8,  11), ( -5,  -8,  -3,  -9), (  7,  -4,   6,  -1),
    ( -1, -13, -13,   6), ( -4,  12,  -5,  11), (  4,  -4,   3,  -4), (  4,   4,  11,  -4),
    (-14,   3,  -8,  -1), ( -6,   3,  -4,   1), (  8, -12,   5,  -2), (  2,   0,   3,  -1),
    ( -2,   4,  -3,   7), (  3,   7,   5,   8), ( -8,  -8, -15,   0), (  7,   1,   6,   1),
    ( -4,  -5,  -5,  -4), ( 12,  -8,   6,  -9), ( -2,  12,   6,  11), (-13,   3,  -7,   6),
    ( -1,  -9,   0,  -7), (-13,  -6,   0,   9), (  5, -13, -10,  10), ( -6,  12,  -4,  10),
    ( 14,  -3,   8,   6), (  1,  -1,  -1,   0), ( -9,   5,   3,  12), ( -5,   4,  -5,   3),
    ( -3,  -7,  -3,  -6), (  5,  -9,  -3, -10), (  0, -14,   8, -11), (  0,  12,  11,  -2),
    ( -4,   9,  -3,  10), (  7,  -3, -12,  -3), ( -3,   4,  -2,   4), ( -9,   0, -10,  -1),
    ( -2,  -6,  -2,  -4), ( 13,   5,   9,  -8), (  5,   4,   4,   3), ( -3, -12,   8,  -1),
    (  4,  -9,   2,  -7), ( -9,  -2,  -9,  -3), (-12,   7,  -8,   9), ( -3,   0,  14,   0),
    ( -1,  -1,  -2,  -2), (-10,   7,   6,  -7), ( -6,  -4,  -8,  -5), (-13,   0,   5,  13),
    ( -6,   6,  -6,   5), (-11,   3,  12,   2), ( -4,   0,  -3,   1), ( 11,   7,   1,   7),
    (-11,  -5,  13,  -2), (-11,   8,  -5, -13), (  0,  -8,   0,  -5), ( -5,  -3,  -7,  -3),
    (  1,   8,   0,   6), (  1,   2,   2,   0), ( 14,   4,   7,  12), (  9,   5,   7,   7),
    ( 11,  10,  -1,  -7), (  3, -11,  -1, -11), (-11,   5,  -4,  11), ( -6,   4,  -7,   4),
    ( 10,  -4,   7,  -4), (  9, -12,  -2,   3), (  6,  -6,   4,  -8), ( -8, -12,   9,   0),
    (  6,   3,   6,   1), (  2,  12,   4,   9), (  8,   9,  -4,  -6), (-10,   0, -14,  -1),
    (  5,   0,   5,   1), (  2,  14,  -7,  12), (  2,  -9,   5,  11), ( -3,   6,   2, -14),
    (  3,  -4,   1,  -5), ( -6,   0,  -5,   1), ( -7,   6, -14,  -5), (  4,   5,  14,   1),
    (  6, -11,  -7,  -7), ( 13,  -6,  -4,  -8), (  9,  10,   5,   7), (  1,   4,   0,   3),
    ( -4,   0,  -3,  -1), (  4,  -6,  14,  -4), ( -9,   6, -10,  11), (  7,   2,   4, -14),
    ( -5,   7,  -3, -14), (  1,  -2,   1,   0), (  8,  -5,   0,  15), (-13,   1,  -4, -11),
    ( -7,  -3,  -9,  -3), (  0,   8,  -1,  11), ( -3,   9,  13,   6), (-12,  -7,   2, -12),
    ( 11,   4,   9,   7), ( -3,  14,  -1,  -2), ( -6,  -8,  -6,  -5), (  0, -15,  -1,  -6),
    (  3,   3,   2,   3), ( -9,   1,  -9,   2), (  5,  -4,   4,  -2), (  2,  -5, -11,  -9),
    ( 10,  -2,   9,   3), ( -2, -10,  -5, -11), (  9,  -9,  10,   9), ( -6,   0, -14,   5),
    (  3,   1,  -9, -12), (  1,   9,  -1,   8), (  0, -10,  -2, -13), (  7,   6,   7,   9),
    ( -5,  14,   6,  -3), (  0,   3,   1,   2), ( -8,   2,  -8,   5), ( 11,  -6,   1,  -8),
    ( -3,  -7,  -4,  -7), (  2,   7,   3,   9), (-12,   9,  11,  -9), (  5,  -7,  10,   0),
    (  0,  -3,   1,  -2), ( -3,  -3,  -3,  -1), (  7, -13,   7,   8), (  5,  14,   8,  -7),
    (  9,  12,  -7,   0), (  4,  -3,  -5,  -9), (  1,   1,   2,   2), (-12,   0,  11,   0),
    (  3,  11,   7, -10), ( -1,  -8,   1, -10), (-10,  -7,  -3,   5), (  5,   1,   6,   1),
    (-10,  -9, -11,  -2), (-10,  -2,  -9,  12), ( -5,  11,  -1,  10), (  6,   4,   6,   3),
    (-11,  -8,  -9,  -6), ( 13,  -4,  12,   2), (  9,  -6,  12,   9), ( -6,  -2,  -5,  -5),
    (  1, -11,   2,  -9), (  5,  -5,   4,  -5), (-12,  -4,   3,   5), (  1,  -3,   0,  -2),
    ( -4,   6,  -5,   6), ( -7,  13,   3,   8), ( 11,   4,  -7,  -9), ( -1,  14, -13,  -1),
    ( -1,  -6,  -2,  -6), (  9,   6,  11,   7), ( -1,   5,  10, -11), ( -5, -14,  -5,   0),
    ( -9,  -2, -10,   0), (-10, -11,   6,  -2), ( -5,   3,  14,   3), (  9,  -3,   8,  12),
    ( -4,  -9,  -5,   8), (  5,   9,   4,  11), (-14,   2,  -5,  -4), ( -2,   9, -14,  -3),
)

BRIEF_PATTERN = np.array(_PATTERN, dtype=np.int8)
BRIEF_PATTERN.flags.writeable = False


def generate_pattern(seed=PATTERN_SEED, n_pairs=256, radius=PATTERN_RADIUS, sigma=31 / 5.0,
                     pool=4096, n_train=6000, smooth_sigma=SMOOTH_SIGMA, swap_passes=3):
    """Rebuild the test table from scratch (about 5 s; not used at runtime).

    A pool of candidate tests is drawn from the Gaussian, then 256 of them are
    chosen greedily so that their bits on uniform-noise patches are as close
    to pairwise uncorrelated as possible (smallest summed squared correlation
    with the tests already chosen), followed by a few single-swap passes.
    """
    rng = np.random.Generator(np.random.PCG64(seed))

    def draw(n):
        out = []
        while len(out) < n:
            p = np.rint(rng.normal(0.0, sigma, 2)).astype(int)
            if p @ p <= radius * radius:
                out.append(p)
        return np.array(out)

    a = draw(pool)
    b = draw(pool)
    distinct = ~np.all(a == b, axis=1)
    a, b = a[distinct], b[distinct]

    c = radius + 3
    noise = rng.integers(0, 256, (n_train, 2 * c + 1, 2 * c + 1)).astype(np.float64)
    sm = ndimage.gaussian_filter(noise, (0, smooth_sigma, smooth_sigma), truncate=3.0 / smooth_sigma,
                                 mode="reflect")
    bits = (sm[:, c + a[:, 1], c + a[:, 0]] < sm[:, c + b[:, 1], c + b[:, 0]]).astype(np.float64)
    z = (bits - bits.mean(0)) / bits.std(0)
    r2 = (z.T @ z / n_train) ** 2
    np.fill_diagonal(r2, 0.0)

    sel = [int(np.argmin(np.abs(bits.mean(0) - 0.5)))]
    used = np.zeros(len(a), bool)
    used[sel[0]] = True
    load = r2[sel[0]].copy()
    while len(sel) < n_pairs:
        i = int(np.argmin(np.where(used, np.inf, load)))
        sel.append(i)
        used[i] = True
        load += r2[i]
    for _ in range(swap_passes):
        changed = False
        for k in range(n_pairs):
            i = sel[k]
            rest = load - r2[i]
            j = int(np.argmin(np.where(used, np.inf, rest)))
            if rest[j] < rest[i] - 1e-12:
                sel[k] = j
                used[i], used[j] = False, True
                load = rest + r2[j]
                changed = True
        if not changed:
            break
    sel = np.array(sel)
    return np.concatenate([a[sel], b[sel]], axis=1).astype(np.int8)
