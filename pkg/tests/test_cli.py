import csv
import struct

import numpy as np
import pytest
from PIL import Image

from fcstereo.cli import main
from fcstereo.cost import baseline_cost, write_cvol
from fcstereo.evaluation import read_pfm, write_pfm
from fcstereo.synthetic import two_plane_scene


def _save(img, path):
    Image.fromarray(np.rint(img.pixels).astype(np.uint8)).save(path)


def test_synthetic_match_outputs(tmp_path):
    out = tmp_path / "run"
    assert main(["match", "--out", str(out), "--size", "96", "--seed", "1"]) == 0
    for name in ("disparity.pfm", "disparity.png", "occlusion.pgm", "energy.csv", "gt.pfm", "gt_occlusion.pgm"):
        assert (out / name).exists()
    d, gt = read_pfm(out / "disparity.pfm"), read_pfm(out / "gt.pfm")
    assert np.mean(np.abs(d.values - gt.values) <= 1) >= 0.9
    png = np.asarray(Image.open(out / "disparity.png"))
    assert png.dtype == np.uint16 and png.max() == np.rint(d.values.max() * 256)
    assert len((out / "energy.csv").read_text().splitlines()) == 4


def test_match_is_deterministic(tmp_path):
    args = ["match", "--size", "48", "--gap", "6"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    for name in ("disparity.pfm", "occlusion.pgm", "energy.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_nonsequential_trace_length(tmp_path):
    assert main(["match", "--out", str(tmp_path), "--size", "48", "--schedule", "nonsequential", "--iters",
                 "6", "--no-postproc"]) == 0
    lines = (tmp_path / "energy.csv").read_text().splitlines()
    assert lines[0] == "iteration,energy" and len(lines) == 7


def test_match_from_files_and_cost(tmp_path):
    sc = two_plane_scene(48, 48, seed=3)
    _save(sc.left, tmp_path / "l.png")
    _save(sc.right, tmp_path / "r.png")
    assert main(["match", "--left", str(tmp_path / "l.png"), "--right", str(tmp_path / "r.png"),
                 "--labels", str(sc.labels), "--out", str(tmp_path / "img")]) == 0
    cost = baseline_cost(sc.left, sc.right, sc.labels)
    write_cvol(cost, tmp_path / "c.cvol")
    assert main(["match", "--left", str(tmp_path / "l.png"), "--cost", str(tmp_path / "c.cvol"),
                 "--out", str(tmp_path / "vol")]) == 0


def test_cvol_header_mismatch(tmp_path, capsys):
    sc = two_plane_scene(16, 16, seed=0)
    _save(sc.left, tmp_path / "l.png")
    path = tmp_path / "broken.cvol"
    path.write_bytes(struct.pack("<4sIIIi", b"CVOL", 16, 16, 4, 0) + bytes(100))
    code = main(["match", "--left", str(tmp_path / "l.png"), "--cost", str(path), "--out", str(tmp_path / "o")])
    assert code == 2 and "broken.cvol" in capsys.readouterr().err


def test_usage_errors(tmp_path):
    with pytest.raises(SystemExit) as info:
        main(["match"])
    assert info.value.code == 1
    with pytest.raises(SystemExit) as info:
        main(["match", "--out", str(tmp_path), "--schedule", "random"])
    assert info.value.code == 1
    assert main(["match", "--out", str(tmp_path), "--lambda", "-1"]) == 1
    assert main(["match", "--out", str(tmp_path), "--right", "x.png"]) == 1
    (tmp_path / "c.cfg").write_text("unknown_key = 3\n")
    assert main(["match", "--out", str(tmp_path), "--config", str(tmp_path / "c.cfg")]) == 1


def test_eval_zero_report(tmp_path):
    gt = np.arange(12, dtype=float).reshape(3, 4) % 3
    write_pfm(gt, tmp_path / "gt.pfm")
    write_pfm(gt, tmp_path / "res.pfm")
    assert main(["eval", "--result", str(tmp_path / "res.pfm"), "--gt", str(tmp_path / "gt.pfm"),
                 "--out", str(tmp_path / "r.csv")]) == 0
    rows = list(csv.DictReader(open(tmp_path / "r.csv")))
    assert rows[0]["image"] == "res" and rows[0]["mask"] == "all"
    assert all(float(rows[0][k]) == 0.0 for k in ("bad0.5", "avrg", "rms", "A99"))


def test_eval_with_mask_and_missing_gt(tmp_path, capsys):
    write_pfm(np.ones((2, 2)), tmp_path / "res.pfm")
    write_pfm(np.zeros((2, 2)), tmp_path / "gt.pfm")
    Image.fromarray(np.array([[255, 0], [0, 0]], np.uint8)).save(tmp_path / "m.png")
    assert main(["eval", "--result", str(tmp_path / "res.pfm"), "--gt", str(tmp_path / "gt.pfm"), "--mask",
                 str(tmp_path / "m.png"), "--out", str(tmp_path / "r.csv"), "--name", "x"]) == 0
    rows = list(csv.DictReader(open(tmp_path / "r.csv")))
    assert [r["count"] for r in rows] == ["4", "1"]
    code = main(["eval", "--result", str(tmp_path / "res.pfm"), "--gt", str(tmp_path / "nope.pfm"),
                 "--out", str(tmp_path / "r.csv")])
    assert code == 2 and "nope.pfm" in capsys.readouterr().err


def _ablate(tmp_path, *extra):
    path = tmp_path / "ab.csv"
    assert main(["ablate", "--out", str(path), *extra]) == 0
    return {(r["source"], r["solver"]): r for r in csv.DictReader(open(path))}


def test_ablate_synthetic(tmp_path):
    rows = _ablate(tmp_path)
    for src in ("raw", "filtered", "bp"):
        assert float(rows[src, "ovod"]["avrg_all"]) < float(rows[src, "wta"]["avrg_all"])
    assert float(rows["bp", "sequential-3"]["energy"]) <= float(rows["bp", "nonsequential-6"]["energy"])
    assert float(rows["raw", "ovod"]["occ_recall"]) >= 0.8


def test_ablate_zero_disparity(tmp_path):
    rows = _ablate(tmp_path, "--d-bg", "0", "--gap", "0", "--size", "32")
    for src in ("raw", "filtered", "bp"):
        w, o = rows[src, "wta"], rows[src, "ovod"]
        assert {k: w[k] for k in ("avrg_all", "rms_all", "bad1_all")} == {k: o[k] for k in
                                                                         ("avrg_all", "rms_all", "bad1_all")}
        assert float(w["avrg_all"]) == 0.0


def test_ablate_needs_gt_with_files(tmp_path):
    assert main(["ablate", "--left", "a.png", "--right", "b.png", "--out", str(tmp_path / "x.csv")]) == 1
