from pathlib import Path

import numpy as np
import pytest

from dynavo.datasets import (SETTINGS_SCHEMA, Config, format_settings, load_generic, load_kitti, parse_kitti_calib,
                             parse_settings, parse_settings_text, read_times, write_generic)
from dynavo.errors import DatasetError, SettingsError
from dynavo.imaging import write_netpbm

FIXTURE = Path(__file__).parent / "fixtures" / "kitti"
CAMERA = "fx: 100\nfy: 100\ncx: 31.5\ncy: 23.5\nbaseline: 0.2\n"


def make_sequence(root, n=4, masks=True, depth=True, gt=True):
    rng = np.random.default_rng(0)
    for sub in ("left", "right") + (("depth",) if depth else ()) + (("mask",) if masks else ()):
        (root / sub).mkdir(parents=True)
    for i in range(n):
        write_netpbm(root / "left" / f"{i:06d}.pgm", rng.integers(0, 256, (48, 64), dtype=np.uint8))
        write_netpbm(root / "right" / f"{i:06d}.pgm", rng.integers(0, 256, (48, 64), dtype=np.uint8))
        if depth:
            write_netpbm(root / "depth" / f"{i:06d}.pgm", np.full((48, 64), 2500, np.uint16))
        if masks and i != 1:
            write_netpbm(root / "mask" / f"{i:06d}.pgm", np.full((48, 64), 15, np.uint8))
    (root / "times.txt").write_text("".join(f"{0.1 * i}\n" for i in range(n)))
    (root / "settings.txt").write_text(CAMERA + "# comment line\norb.n_features: 500  # trailing\n")
    if gt:
        (root / "poses.txt").write_text("1 0 0 0 0 1 0 0 0 0 1 0\n" * n)
    return root


def test_schema_covers_every_section():
    prefixes = {k.split(".")[0] for k in SETTINGS_SCHEMA if "." in k}
    assert prefixes == {"orb", "flow", "lk", "epipolar", "stereo", "semantic", "pose", "tracker", "map", "eval"}
    assert SETTINGS_SCHEMA["orb.n_features"] is int
    assert SETTINGS_SCHEMA["tracker.max_depth"] == "optional_float"


def test_settings_parse_and_nested_override():
    cfg = parse_settings_text(CAMERA + "epipolar.threshold: 1.5\nsemantic.static_override: yes\n"
                              "dynamic_classes: person, dog\ntracker.max_depth: none\n")
    assert cfg.fx == 100.0 and cfg.tracker.epipolar.threshold == 1.5
    assert cfg.tracker.semantic.static_override is True
    assert cfg.dynamic_classes == (12, 15)
    assert cfg.tracker.max_depth is None
    assert Config().tracker.epipolar.threshold == 1.0  # defaults untouched


def test_settings_errors_name_line_and_key():
    with pytest.raises(SettingsError, match=r"s\.txt:2: key 'fx' expects float"):
        parse_settings_text("fy: 1\nfx: abc\n", "s.txt")
    with pytest.raises(SettingsError, match="unknown key 'orb.bogus'"):
        parse_settings_text("orb.bogus: 1\n")
    with pytest.raises(SettingsError, match="expected 'key: value'"):
        parse_settings_text("just words\n")
    with pytest.raises(SettingsError, match="alignment"):
        parse_settings_text("eval.alignment: sideways\n")
    with pytest.raises(SettingsError, match="not found"):
        parse_settings("/nonexistent/settings.txt")


def test_format_settings_roundtrip():
    cfg = parse_settings_text(CAMERA + "width: 64\nheight: 48\n")
    again = parse_settings_text(format_settings(cfg))
    assert again == cfg
    text = format_settings(cfg, ["orb.n_features", "dynamic_classes"])
    assert text.startswith("orb.n_features: 1000\ndynamic_classes: ")


def test_read_times_errors(tmp_path):
    (tmp_path / "t.txt").write_text("0.0\nbad\n")
    with pytest.raises(DatasetError, match=":2:"):
        read_times(tmp_path / "t.txt")
    with pytest.raises(DatasetError):
        read_times(tmp_path / "missing.txt")


def test_load_generic_and_missing_mask(tmp_path):
    src = load_generic(make_sequence(tmp_path / "seq"))
    assert len(src) == 4 and src.image_size == (64, 48) and src.has_depth
    assert src.config.tracker.orb.n_features == 500
    frames = list(src.frames())
    assert [f.index for f in frames] == [0, 1, 2, 3]
    assert frames[0].depth[0, 0] == pytest.approx(2.5)
    assert frames[0].mask.max() == 15 and frames[1].mask.max() == 0
    with pytest.raises(DatasetError, match="mask file missing"):
        list(src.frames(strict_masks=True))
    unthreaded = [f.left for f in src.frames(prefetch=0)]
    assert all(np.array_equal(a.left, b) for a, b in zip(frames, unthreaded))


def test_load_generic_validation(tmp_path):
    root = make_sequence(tmp_path / "seq")
    (root / "times.txt").write_text("0\n0.1\n")
    with pytest.raises(DatasetError, match="2 stamps for 4 frames"):
        load_generic(root)
    root = make_sequence(tmp_path / "gap")
    (root / "left" / "000002.pgm").rename(root / "left" / "000009.pgm")
    with pytest.raises(DatasetError, match="contiguous"):
        load_generic(root)
    root = make_sequence(tmp_path / "nocam")
    (root / "settings.txt").write_text("orb.n_features: 10\n")
    with pytest.raises(SettingsError, match="required"):
        load_generic(root)
    with pytest.raises(DatasetError):
        load_generic(tmp_path / "absent")


def test_write_generic_roundtrip(tmp_path):
    src = load_generic(make_sequence(tmp_path / "a"))
    dst = load_generic(write_generic(src, tmp_path / "b"))
    assert np.array_equal(dst.timestamps, src.timestamps)
    assert dst.config.fx == src.config.fx
    assert np.array_equal(dst.load(2).left, src.load(2).left)


def test_kitti_fixture_loads():
    src = load_kitti(FIXTURE, 0)
    assert len(src) == 5 and src.ground_truth is not None and not src.has_depth
    fx, fy, cx, cy, b = parse_kitti_calib(FIXTURE / "sequences" / "00" / "calib.txt")
    assert (fx, cx, cy) == (360.0, 309.5, 93.5) and b == pytest.approx(0.54)
    assert src.load(0).left.dtype == np.uint8 and src.load(0).left.ndim == 2
    with pytest.raises(DatasetError):
        load_kitti(FIXTURE, 3)


def test_kitti_calib_errors(tmp_path):
    p = tmp_path / "calib.txt"
    p.write_text("P0: 1 0 0 0 0 1 0 0 0 0 1 0\nP1: 1 0 0 0.5 0 1 0 0 0 0 1 0\n")
    with pytest.raises(DatasetError, match="positive baseline"):
        parse_kitti_calib(p)
    p.write_text("P0: 1 2 3\n")
    with pytest.raises(DatasetError, match="P0"):
        parse_kitti_calib(p)


# ---- worked examples ----------------------------------------------------------

def test_identity_pose_line(tmp_path):
    from dynavo.trajectory import read_kitti
    (tmp_path / "p.txt").write_text("1 0 0 0 0 1 0 0 0 0 1 0\n")
    assert np.array_equal(read_kitti(tmp_path / "p.txt").poses[0].matrix(), np.eye(4))


def test_truncated_times_names_the_file(tmp_path):
    root = make_sequence(tmp_path / "seq")
    (root / "times.txt").write_text("0.0\n0.1\n0.")
    with pytest.raises(DatasetError, match="times.txt"):
        load_generic(root)
    (root / "times.txt").write_text("0.0\n0.1\n")
    with pytest.raises(DatasetError, match="times.txt"):
        load_generic(root)


def test_no_depth_directory_disables_mapping(tiny_sequence, tmp_path):
    import shutil
    from dynavo.cli import run_pipeline
    root = tmp_path / "seq"
    shutil.copytree(tiny_sequence, root)
    shutil.rmtree(root / "depth")
    src = load_generic(root)
    assert not src.has_depth
    res = run_pipeline(src, max_frames=3)
    assert res.voxel_map is None and len(res.trajectory) == 3


def test_no_mask_directory_means_background(tmp_path):
    src = load_generic(make_sequence(tmp_path / "seq", n=2, masks=False))
    assert all(f.mask.dtype == np.uint8 and not f.mask.any() for f in src.frames())


def test_mismatched_left_right_counts(tmp_path):
    root = make_sequence(tmp_path / "seq")
    (root / "right" / "000003.pgm").unlink()
    with pytest.raises(DatasetError, match="right"):
        load_generic(root)


def test_minimal_settings_take_defaults():
    cfg = parse_settings_text(CAMERA)
    assert (cfg.fx, cfg.fy, cfg.cx, cfg.cy, cfg.baseline) == (100.0, 100.0, 31.5, 23.5, 0.2)
    assert cfg.tracker == Config().tracker
    assert parse_settings_text(CAMERA + "epipolar.threshold: 1.5\n").tracker.epipolar.threshold == 1.5
