import hashlib
import json
import subprocess
import sys

import numpy as np
import pytest

from seacolor import cli
from seacolor.imagecore import RasterImage, WaterMask, read_image, write_image, write_mask
from seacolor.hypercube import read_manifest

from _tree import tree_digest

# frozen after a verified run: 8 records = 3x2 tiles of scene_a + 1x2 of scene_b, serial == --jobs 2
GOLDEN_MANIFEST_SHA256 = "5a656e473be88c988a702cd25a6f85132f0dfaf2c797fa0f725735e6037ef1b6"
GOLDEN_TREE_SHA256 = "1e671bb2bcd960a20954c09da4cf6e0cd79aab750bdaa66b144ad063f086c974"


def run(argv, capsys):
    rc = cli.main(argv)
    out, err = capsys.readouterr()
    return rc, out, err


def test_help_lists_reference_defaults(capsys):
    for sub, needles in [
        ("build-dataset", ["33,45,56"]),
        ("decompose", ["33,45,56"]),
        ("synthesize", ["0.9"]),
        ("dewater", ["0.9"]),
        ("evaluate", ["30,90,100,50,10"]),
        ("train-toy", ["2e-4", "0.5,0.999", "100", "6", "30,90,100,50,10"]),
    ]:
        with pytest.raises(SystemExit) as exc:
            cli.main([sub, "--help"])
        assert exc.value.code == 0
        text = " ".join(capsys.readouterr().out.split())
        for n in needles:
            assert f"reference default {n}" in text, (sub, n)


def test_synthesize_dewater_hand_example(tmp_path, capsys):
    # J = 0.8, V = 0.2, T = 0.5 -> N = 0.5, and back
    write_image(RasterImage(np.full((4, 4, 3), 204 / 255)), tmp_path / "J.png")
    r = np.log(2) / 0.9
    write_image(RasterImage(np.full((4, 4), r)), tmp_path / "r.png")
    q = round(r * 255) / 255
    scale = float(r / q)
    rc, out, _ = run(["synthesize", "--input", str(tmp_path / "J.png"), "--range", str(tmp_path / "r.png"),
                      "--range-scale", repr(scale), "--veiling", "0.2,0.2,0.2", "--out", str(tmp_path / "s")], capsys)
    assert rc == 0
    N = read_image(tmp_path / "s" / "N.png")
    assert np.all(np.abs(N.data - 0.5) <= 0.5 / 255 + 1e-12)
    rc, out, _ = run(["dewater", "--input", str(tmp_path / "s" / "N.png"), "--range", str(tmp_path / "r.png"),
                      "--range-scale", repr(scale), "--veiling", "0.2,0.2,0.2", "--out", str(tmp_path / "d")], capsys)
    assert rc == 0
    J = read_image(tmp_path / "d" / "J.png")
    assert np.max(np.abs(J.data - 204 / 255)) <= 1 / 255 + 1e-12


def test_dewater_round_trip_through_files(tmp_path, capsys):
    rng = np.random.default_rng(21)
    J = RasterImage(rng.uniform(0.05, 0.95, (24, 24, 3)))
    write_image(J, tmp_path / "J.png")
    J = read_image(tmp_path / "J.png")
    # ranges up to 1 keep T above 1/3, where one output code step bounds the error
    write_image(RasterImage(rng.uniform(0, 1, (24, 24))), tmp_path / "r.png")
    bits = (rng.uniform(size=(24, 24)) > 0.3).astype(np.uint8)
    write_mask(WaterMask(bits), tmp_path / "m.png")
    common = ["--range", str(tmp_path / "r.png"), "--mask", str(tmp_path / "m.png"), "--veiling", "0.1,0.4,0.5"]
    assert run(["synthesize", "--input", str(tmp_path / "J.png"), *common, "--out", str(tmp_path / "s")], capsys)[0] == 0
    rc, out, _ = run(["dewater", "--input", str(tmp_path / "s" / "N.png"), *common, "--out", str(tmp_path / "d")], capsys)
    assert rc == 0 and json.loads(out)["J"].endswith("J.png")
    back = read_image(tmp_path / "d" / "J.png")
    assert np.max(np.abs(back.data - J.data)) <= 1 / 255 + 1e-12
    land = bits == 0
    assert np.array_equal(back.data[land], J.data[land])


def test_evaluate_identical_gives_inf(tmp_path, capsys):
    write_image(RasterImage(np.random.default_rng(0).uniform(size=(16, 16, 3))), tmp_path / "a.png")
    rc, out, _ = run(["evaluate", "--metrics", "psnr", "--ref", str(tmp_path / "a.png"),
                      "--test", str(tmp_path / "a.png")], capsys)
    assert rc == 0
    assert json.loads(out)["psnr_db"] == "inf"


def test_evaluate_pairs_parallel_matches_serial(tmp_path, capsys, fixtures_dir):
    rng = np.random.default_rng(1)
    lines = []
    for i in range(3):
        write_image(RasterImage(rng.uniform(size=(64, 64, 3))), tmp_path / f"t{i}.png")
        lines.append(json.dumps({"ref": str(fixtures_dir / "uiqm_64.png"), "test": str(tmp_path / f"t{i}.png")}))
    (tmp_path / "pairs.jsonl").write_text("\n".join(lines) + "\n")
    base = ["evaluate", "--pairs", str(tmp_path / "pairs.jsonl")]
    _, serial, _ = run(base, capsys)
    _, parallel, _ = run(base + ["--jobs", "2"], capsys)
    assert serial == parallel
    assert len(serial.splitlines()) == 3


def test_evaluate_losses(tmp_path, capsys):
    rng = np.random.default_rng(3)
    t, p = tmp_path / "targets", tmp_path / "preds"
    t.mkdir(), p.mkdir()
    for name, ch in (("diffuse", 3), ("specular", 1), ("T", 1), ("J", 3), ("N", 3), ("x", 3)):
        img = RasterImage(rng.uniform(size=(8, 8, ch)))
        write_image(img, t / f"{name}.png")
        if name in ("diffuse", "specular", "T", "J"):
            write_image(img, p / f"{name}.png")
    write_mask(WaterMask.full(8, 8), t / "mask.png")
    rc, out, _ = run(["evaluate", "--losses", "--targets", str(t), "--preds", str(p)], capsys)
    assert rc == 0
    rep = json.loads(out)
    assert rep["l_gd"] == 0 and rep["l_gs"] == 0 and rep["l_gj"] == 0
    assert rep["l_t"] == pytest.approx(np.log(0.5))


def test_decompose_writes_outputs(tmp_path, capsys, fixtures_dir):
    rc, out, _ = run(["decompose", "--cube", str(fixtures_dir / "cubes" / "scene_b.hcub"), "--auto-mask",
                      "--out", str(tmp_path)], capsys)
    assert rc == 0
    rep = json.loads(out)
    assert rep["residual"] < 1e-3
    assert len(rep["illuminant"]) == 63
    for name in ("diffuse.png", "specular.png", "k_expect.png", "report.json"):
        assert (tmp_path / name).exists()


def test_build_dataset_golden(tmp_path, capsys, fixtures_dir):
    rc, out, _ = run(["build-dataset", "--cubes", str(fixtures_dir / "cubes"), "--tile", "16",
                      "--out", str(tmp_path / "a")], capsys)
    assert rc == 0 and json.loads(out)["records"] == 8
    assert hashlib.sha256((tmp_path / "a" / "manifest.jsonl").read_bytes()).hexdigest() == GOLDEN_MANIFEST_SHA256
    assert tree_digest(tmp_path / "a") == GOLDEN_TREE_SHA256
    rc, out, _ = run(["verify", "--manifest", str(tmp_path / "a" / "manifest.jsonl"), "--expect-bands", "63"], capsys)
    assert rc == 0 and json.loads(out)["ok"]


def test_build_dataset_idempotent(tmp_path, capsys, fixtures_dir):
    argv = ["build-dataset", "--cubes", str(fixtures_dir / "cubes"), "--tile", "16", "--out", str(tmp_path)]
    run(argv, capsys)
    first = tree_digest(tmp_path)
    run(argv, capsys)
    assert tree_digest(tmp_path) == first


def test_verify_reports_missing_file(tmp_path, capsys, fixtures_dir):
    run(["build-dataset", "--cubes", str(fixtures_dir / "cubes"), "--tile", "16", "--out", str(tmp_path)], capsys)
    rec = read_manifest(tmp_path / "manifest.jsonl")[0]
    (tmp_path / rec.rgb).unlink()
    rc, out, _ = run(["verify", "--manifest", str(tmp_path / "manifest.jsonl")], capsys)
    assert rc == 1 and not json.loads(out)["ok"]


def test_exit_codes(tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["synthesize", "--input", "x.png"])
    assert exc.value.code == 2
    capsys.readouterr()
    rc, _, err = run(["evaluate", "--metrics", "psnr"], capsys)
    assert rc == 2
    rc, _, err = run(["decompose", "--cube", str(tmp_path / "missing.hcub"), "--out", str(tmp_path)], capsys)
    assert rc == 1 and len(err.strip().splitlines()) == 1
    (tmp_path / "bad.hcub").write_bytes(b"NOPE" + bytes(16))
    rc, _, err = run(["decompose", "--cube", str(tmp_path / "bad.hcub"), "--out", str(tmp_path)], capsys)
    assert rc == 1 and "BadMagic" in err
    rc, _, _ = run(["dewater", "--input", str(tmp_path / "none.png"), "--out", str(tmp_path)], capsys)
    assert rc in (1, 2)


def test_train_toy_cli(tmp_path, capsys):
    rc, out, _ = run(["train-toy", "--size", "16", "--steps", "2", "--samples", "4", "--batch", "2",
                      "--sample-every", "1", "--out", str(tmp_path)], capsys)
    assert rc == 0
    rep = json.loads(out)
    assert rep["steps"] == 2
    assert (tmp_path / "losses.csv").exists()


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "seacolor.cli", "verify", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "--manifest" in res.stdout
