"""Absolute pose error with optional rigid or similarity alignment."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import AssociationError, DegenerateGeometry
from .trajectory import Trajectory

ALIGNMENTS = ("none", "rigid", "similarity")


def associate(ref: Trajectory, est: Trajectory, max_dt: float = 0.02) -> np.ndarray:
    """Greedy one-to-one nearest-timestamp matching.

    Candidate pairs with ``|dt| <= max_dt`` are accepted in order of
    increasing ``|dt|`` (ties broken by reference then estimate index).
    Returns ``(k, 2)`` index pairs sorted by reference index.
    """
    if len(ref) == 0 or len(est) == 0:
        raise AssociationError("empty trajectory")
    a = ref.timestamps
    b = est.timestamps
    pairs = []
    # both arrays are sorted, so candidates of a[i] form a contiguous band of b
    lo = np.searchsorted(b, a - max_dt, side="left")
    hi = np.searchsorted(b, a + max_dt, side="right")
    for i in range(len(a)):
        for j in range(lo[i], hi[i]):
            dt = abs(a[i] - b[j])
            if dt <= max_dt:
                pairs.append((dt, i, j))
    pairs.sort()
    used_a, used_b, out = set(), set(), []
    for _, i, j in pairs:
        if i in used_a or j in used_b:
            continue
        used_a.add(i)
        used_b.add(j)
        out.append((i, j))
    if not out:
        raise AssociationError(f"no timestamp pairs within {max_dt} s")
    out.sort()
    return np.array(out, dtype=np.int64)


def umeyama_align(ref_points, est_points, with_scale: bool = False, allow_degenerate: bool = False):
    """Least-squares ``(R, t, s)`` with ``ref ~ s R est + t``.

    Raises ``DegenerateGeometry`` for fewer than three points or collinear
    or coincident estimates unless ``allow_degenerate`` is set; in that case
    a (non-unique) minimiser is still returned, and coincident points fall
    back to a pure translation.
    """
    X = np.asarray(est_points, dtype=np.float64).reshape(-1, 3)
    Y = np.asarray(ref_points, dtype=np.float64).reshape(-1, 3)
    if len(X) != len(Y):
        raise ValueError("point sets differ in length")
    n = len(X)
    if n == 0:
        raise DegenerateGeometry("no points to align")
    mx, my = X.mean(axis=0), Y.mean(axis=0)
    Xc, Yc = X - mx, Y - my
    sv = np.linalg.svd(Xc, compute_uv=False) if n > 1 else np.zeros(1)
    spread = sv[0] if len(sv) else 0.0
    collinear = n < 3 or len(sv) < 2 or sv[1] <= 1e-10 * max(spread, 1e-300)
    if collinear and not allow_degenerate:
        raise DegenerateGeometry("alignment needs at least three non-collinear points")
    var_x = (Xc ** 2).sum() / n
    if spread <= 1e-12:
        return np.eye(3), my - mx, 1.0
    S = Yc.T @ Xc / n
    U, D, Vt = np.linalg.svd(S)
    E = np.eye(3)
    if np.linalg.det(U) * np.linalg.det(Vt) < 0:
        E[2, 2] = -1.0
    R = U @ E @ Vt
    s = float(np.trace(np.diag(D) @ E) / var_x) if with_scale else 1.0
    t = my - s * R @ mx
    return R, t, s


@dataclass(frozen=True)
class ApeReport:
    rmse: float
    mean: float
    max: float
    min: float
    errors: np.ndarray
    alignment: str
    pairs: np.ndarray
    scale: float = 1.0

    def __post_init__(self):
        assert self.min <= self.mean + 1e-12 and self.mean <= self.max + 1e-12
        assert self.rmse + 1e-12 >= self.mean

    def summary(self) -> str:
        return (f"APE (translation, m), alignment={self.alignment}, pairs={len(self.errors)}\n"
                f"rmse {self.rmse:.6f}\nmean {self.mean:.6f}\nmax  {self.max:.6f}\nmin  {self.min:.6f}\n")


def aligned_positions(ref_xyz, est_xyz, alignment):
    if alignment not in ALIGNMENTS:
        raise ValueError(f"alignment must be one of {ALIGNMENTS}")
    if alignment == "none":
        return est_xyz, 1.0
    R, t, s = umeyama_align(ref_xyz, est_xyz, with_scale=(alignment == "similarity"), allow_degenerate=True)
    return est_xyz @ (s * R).T + t, s


def ape(ref: Trajectory, est: Trajectory, alignment: str = "rigid", max_dt: float = 0.02,
        pairs=None) -> ApeReport:
    """Translational APE statistics after the requested alignment."""
    if pairs is None:
        pairs = associate(ref, est, max_dt)
    pairs = np.asarray(pairs, dtype=np.int64)
    if len(pairs) < 2:
        raise AssociationError(f"need at least 2 associated poses, got {len(pairs)}")
    ref_xyz = ref.positions[pairs[:, 0]]
    est_xyz = est.positions[pairs[:, 1]]
    moved, s = aligned_positions(ref_xyz, est_xyz, alignment)
    err = np.linalg.norm(ref_xyz - moved, axis=1)
    rmse = float(np.sqrt(np.mean(err ** 2)))
    mean = float(np.mean(err))
    return ApeReport(rmse=max(rmse, mean), mean=mean, max=float(err.max()), min=float(err.min()),
                     errors=err, alignment=alignment, pairs=pairs, scale=s)


def index_pairs(ref: Trajectory, est: Trajectory) -> np.ndarray:
    n = min(len(ref), len(est))
    if n == 0:
        raise AssociationError("empty trajectory")
    return np.column_stack([np.arange(n), np.arange(n)]).astype(np.int64)


def _svg_plot(errors, width=640, height=320, margin=48):
    errors = np.asarray(errors, dtype=np.float64)
    n = len(errors)
    top = float(errors.max()) if n and errors.max() > 0 else 1.0
    pw, ph = width - 2 * margin, height - 2 * margin

    def px(i):
        return margin + (pw * i / (n - 1) if n > 1 else pw / 2)

    def py(v):
        return margin + ph - ph * v / top

    pts = " ".join(f"{px(i):.2f},{py(v):.2f}" for i, v in enumerate(errors))
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{margin}" y1="{margin + ph}" x2="{margin + pw}" y2="{margin + ph}" stroke="black"/>',
        f'<line x1="{margin}" y1="{margin}" x2="{margin}" y2="{margin + ph}" stroke="black"/>',
        f'<text x="{margin}" y="{margin - 8}" font-family="monospace" font-size="12">APE [m], max {top:.4f}</text>',
        f'<text x="{margin + pw}" y="{height - 12}" font-family="monospace" font-size="12" text-anchor="end">index ({n})</text>',
        f'<polyline fill="none" stroke="steelblue" stroke-width="1.5" points="{pts}"/>',
        "</svg>",
    ]
    return "\n".join(parts) + "\n"


def write_report(report: ApeReport, out_dir, stem: str = "ape") -> dict:
    """Write ``<stem>.csv``, ``<stem>_summary.txt`` and ``<stem>.svg``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"csv": out / f"{stem}.csv", "summary": out / f"{stem}_summary.txt", "svg": out / f"{stem}.svg"}
    with open(paths["csv"], "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["index", "error"])
        for i, e in enumerate(report.errors):
            wr.writerow([i, f"{e:.9f}"])
    paths["summary"].write_text(report.summary())
    paths["svg"].write_text(_svg_plot(report.errors))
    return paths
