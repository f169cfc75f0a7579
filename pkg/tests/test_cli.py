import json
from pathlib import Path

import numpy as np

from dynavo.cli import EXIT_DATA, EXIT_LOST, EXIT_OK, EXIT_USAGE, TIMING_KEYS, main, read_diagnostics, run_pipeline
from dynavo.datasets import load_generic
from dynavo.imaging import write_netpbm
from dynavo.mapping import read_ply
from dynavo.trajectory import read_kitti, read_tum

FIXTURE = Path(__file__).parent / "fixtures" / "kitti"


def test_run_writes_all_outputs(tiny_sequence, tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["run", "--sequence", str(tiny_sequence), "--out", str(out)]) == EXIT_OK
    names = sorted(p.name for p in out.iterdir())
    assert names == ["diagnostics.csv", "manifest.json", "map.ply", "trajectory_kitti.txt", "trajectory_tum.txt"]
    assert len(read_kitti(out / "trajectory_kitti.txt")) == 6
    assert len(read_tum(out / "trajectory_tum.txt")) == 6
    rows = read_diagnostics(out / "diagnostics.csv")
    assert len(rows) == 6 and all(f"{k}_ms" in rows[0] for k in TIMING_KEYS)
    assert int(rows[3]["mask_rejected"]) > 0
    xyz, _ = read_ply(out / "map.ply")
    assert len(xyz) > 100
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["frames_processed"] == 6 and manifest["flags"]["filter"] is True
    assert "6 frames" in capsys.readouterr().out


def test_eval_zero_and_report(tiny_sequence, tmp_path, capsys):
    gt = str(tiny_sequence / "poses.txt")
    assert main(["eval", gt, gt, "--out", str(tmp_path / "ev")]) == EXIT_OK
    text = capsys.readouterr().out
    for stat in ("rmse", "mean", "max", "min"):
        assert f"{stat}".ljust(4) + " 0.000000" in text
    assert (tmp_path / "ev" / "ape.csv").exists()


def test_eval_tum_uses_timestamps(tmp_path, capsys):
    a = tmp_path / "a.txt"
    b = tmp_path / "b.txt"
    a.write_text("".join(f"{i * 0.1:.3f} {i} 0 0 0 0 0 1\n" for i in range(5)))
    b.write_text("".join(f"{i * 0.1 + 0.005:.3f} {i} 0 1 0 0 0 1\n" for i in range(5)))
    assert main(["eval", str(a), str(b), "--align", "none"]) == EXIT_OK
    assert "rmse 1.000000" in capsys.readouterr().out
    assert main(["eval", str(a), str(b), "--max-dt", "0.001"]) == EXIT_DATA


def test_kitti_fixture_end_to_end(tmp_path):
    out = tmp_path / "k"
    assert main(["run", "--kitti", str(FIXTURE), "--seq", "00", "--out", str(out)]) == EXIT_OK
    est = read_kitti(out / "trajectory_kitti.txt")
    ref = read_kitti(FIXTURE / "poses" / "00.txt")
    assert len(est) == len(ref) == 5
    assert np.abs(est.positions - ref.positions).max() < 0.1


def test_usage_and_data_errors(tiny_sequence, tmp_path):
    assert main(["run", "--out", str(tmp_path / "x")]) == EXIT_USAGE
    assert main(["run", "--sequence", str(tiny_sequence), "--settings", "/nope.txt", "--out", str(tmp_path / "x")]) \
        == EXIT_USAGE
    assert main(["run", "--sequence", str(tmp_path / "missing"), "--settings", str(tiny_sequence / "settings.txt"),
                 "--out", str(tmp_path / "x")]) == EXIT_DATA
    assert main(["bogus"]) == EXIT_USAGE
    assert main(["run", "--kitti", str(FIXTURE), "--out", str(tmp_path / "x")]) == EXIT_USAGE
    bad = tmp_path / "bad.txt"
    bad.write_text("orb.n_features: many\n")
    assert main(["run", "--sequence", str(tiny_sequence), "--settings", str(bad), "--out", str(tmp_path / "x")]) \
        == EXIT_USAGE
    assert not (tmp_path / "x").exists()


def test_strict_masks(tiny_sequence, tmp_path):
    import shutil
    seq = tmp_path / "seq"
    shutil.copytree(tiny_sequence, seq)
    (seq / "mask" / "000002.pgm").unlink()
    assert main(["run", "--sequence", str(seq), "--out", str(tmp_path / "a"), "--no-map"]) == EXIT_OK
    assert main(["run", "--sequence", str(seq), "--out", str(tmp_path / "b"), "--strict-masks"]) == EXIT_DATA


def test_tracking_lost_exit_code(tmp_path):
    root = tmp_path / "flat"
    for sub in ("left", "right"):
        (root / sub).mkdir(parents=True)
        for i in range(3):
            write_netpbm(root / sub / f"{i:06d}.pgm", np.full((192, 256), 90, np.uint8))
    (root / "times.txt").write_text("0\n0.1\n0.2\n")
    (root / "settings.txt").write_text("fx: 100\nfy: 100\ncx: 127.5\ncy: 95.5\nbaseline: 0.2\n")
    assert main(["run", "--sequence", str(root), "--out", str(tmp_path / "o")]) == EXIT_LOST


def test_synth_command(tmp_path):
    script = tmp_path / "s.json"
    script.write_text(json.dumps({
        "width": 64, "height": 48, "fx": 60, "frame_count": 2,
        "static": [{"type": "plane", "axis": "z", "center": [0, 0, 4], "size": [6, 6]}]}))
    assert main(["synth", str(script), "--out", str(tmp_path / "o"), "--frames", "3", "--noise", "1"]) == EXIT_OK
    assert len(load_generic(tmp_path / "o")) == 3
    script.write_text("{not json")
    assert main(["synth", str(script), "--out", str(tmp_path / "p")]) == EXIT_USAGE


def test_no_filter_keeps_masked_features(tiny_sequence):
    src = load_generic(tiny_sequence)
    a = run_pipeline(src, mapping=False)
    b = run_pipeline(src, mapping=False, filter_dynamic=False)
    assert sum(d.rejected for d in a.diagnostics) > 0
    assert sum(d.rejected for d in b.diagnostics) == 0


# ---- worked examples ----------------------------------------------------------

def test_missing_settings_names_path(tiny_sequence, tmp_path, capsys):
    code = main(["run", "--sequence", str(tiny_sequence), "--settings", str(tmp_path / "absent.txt"),
                 "--out", str(tmp_path / "x")])
    assert code == EXIT_USAGE and str(tmp_path / "absent.txt") in capsys.readouterr().err


def test_eval_unit_offset_and_format_sniffing(tmp_path, capsys):
    ref = read_kitti(FIXTURE / "poses" / "00.txt")
    shifted = tmp_path / "shift.txt"
    shifted.write_text("".join(" ".join(f"{v:.9g}" for v in p.matrix()[:3].ravel() + np.r_[0, 0, 0, 1, 0, 0, 0, 0,
                                                                                              0, 0, 0, 0]) + "\n"
                               for p in ref.poses))
    assert main(["eval", str(FIXTURE / "poses" / "00.txt"), str(shifted), "--align", "none"]) == EXIT_OK
    assert "rmse 1.000000" in capsys.readouterr().out
    # TUM estimate against a KITTI reference: TUM stamps are matched to the KITTI frame indices' times
    tum = tmp_path / "est.tum"
    tum.write_text("".join(f"{i:.1f} {p.t[0]:.9f} {p.t[1]:.9f} {p.t[2]:.9f} 0 0 0 1\n"
                           for i, p in enumerate(ref.poses)))
    assert main(["eval", str(FIXTURE / "poses" / "00.txt"), str(tum), "--align", "none"]) == EXIT_OK
    assert "rmse 0.000000" in capsys.readouterr().out
