import json

import numpy as np
import pytest

from seacolor.errors import BadMagic, BandOutOfRange, NoCubesFound, TruncatedFile, VersionUnsupported, WavelengthOrder
from seacolor.hypercube import (
    DEFAULT_RGB_BANDS,
    HyperCube,
    build_dataset,
    compose_rgb,
    infer_water_mask,
    load_cube,
    read_manifest,
    save_cube,
    verify_dataset,
)
from seacolor.imagecore import read_image, read_mask


def random_cube(rng, h, w, b=63):
    return HyperCube(rng.uniform(0, 1, (b, h, w)).astype(np.float32), np.linspace(400, 1010, b))


def test_default_band_triplet():
    assert DEFAULT_RGB_BANDS == (33, 45, 56)


def test_save_load_bit_exact(tmp_path, rng):
    cube = random_cube(rng, 4, 4)
    save_cube(cube, tmp_path / "c.hcub")
    back = load_cube(tmp_path / "c.hcub")
    assert back.planes.tobytes() == cube.planes.tobytes()
    assert back.wavelengths_nm.tobytes() == cube.wavelengths_nm.tobytes()


def test_header_layout(tmp_path, rng):
    cube = random_cube(rng, 2, 3, 5)
    save_cube(cube, tmp_path / "c.hcub")
    raw = (tmp_path / "c.hcub").read_bytes()
    assert raw[:4] == b"HCUB"
    assert np.frombuffer(raw[4:20], "<u4").tolist() == [1, 2, 3, 5]
    assert len(raw) == 20 + 4 * (5 * 6 + 5)


def test_bad_magic(tmp_path):
    (tmp_path / "x.hcub").write_bytes(b"NOPE" + bytes(32))
    with pytest.raises(BadMagic):
        load_cube(tmp_path / "x.hcub")


def test_version_unsupported(tmp_path, rng):
    save_cube(random_cube(rng, 2, 2, 2), tmp_path / "c.hcub")
    raw = bytearray((tmp_path / "c.hcub").read_bytes())
    raw[4] = 2
    (tmp_path / "c.hcub").write_bytes(bytes(raw))
    with pytest.raises(VersionUnsupported):
        load_cube(tmp_path / "c.hcub")


def test_truncated(tmp_path, rng):
    save_cube(random_cube(rng, 2, 2, 2), tmp_path / "c.hcub")
    raw = (tmp_path / "c.hcub").read_bytes()
    (tmp_path / "c.hcub").write_bytes(raw[:-3])
    with pytest.raises(TruncatedFile):
        load_cube(tmp_path / "c.hcub")


def test_wavelength_order_rejected():
    with pytest.raises(WavelengthOrder):
        HyperCube(np.zeros((3, 1, 1)), [400, 500, 450])


def test_descending_wavelengths_accepted():
    assert HyperCube(np.zeros((3, 1, 1)), [700, 600, 500]).bands == 3


def test_compose_rgb_pure_red():
    planes = np.zeros((63, 2, 2), np.float32)
    planes[32] = 1.0
    rgb = compose_rgb(HyperCube(planes, np.arange(63)))
    assert np.all(rgb.data[..., 0] == 1.0) and np.all(rgb.data[..., 1:] == 0.0)


def test_compose_rgb_extracts_planes(rng):
    cube = random_cube(rng, 5, 6)
    rgb = compose_rgb(cube, 7, 3, 60)
    for k, band in enumerate((7, 3, 60)):
        assert np.array_equal(rgb.data[..., k], cube.planes[band - 1].astype(np.float64))


def test_compose_rgb_serialisation_transparent(tmp_path, rng):
    cube = random_cube(rng, 4, 4)
    save_cube(cube, tmp_path / "c.hcub")
    assert np.array_equal(compose_rgb(load_cube(tmp_path / "c.hcub")).data, compose_rgb(cube).data)


@pytest.mark.parametrize("bands", [(0, 45, 56), (33, 45, 64), (33, 33, 56)])
def test_compose_rgb_band_errors(rng, bands):
    with pytest.raises(BandOutOfRange):
        compose_rgb(random_cube(rng, 2, 2), *bands)


def test_mask_all_water_and_all_land():
    zeros = HyperCube(np.zeros((4, 3, 3)), [1, 2, 3, 4])
    ones = HyperCube(np.ones((4, 3, 3)), [1, 2, 3, 4])
    assert infer_water_mask(zeros, 4).bits.all()
    assert not infer_water_mask(ones, 4).bits.any()


def test_mask_threshold_oracle(rng):
    planes = np.zeros((2, 4, 6), np.float32)
    planes[1, :, 3:] = rng.uniform(0.1, 1.0, (4, 3))
    planes[1, :, :3] = rng.uniform(0.0, 0.2, (4, 3))
    m = infer_water_mask(HyperCube(planes, [1, 2]), 2, 0.1)
    expected = [[1 if planes[1, r, c] < np.float32(0.1) else 0 for c in range(6)] for r in range(4)]
    assert m.bits.tolist() == expected


def test_mask_band_out_of_range():
    with pytest.raises(BandOutOfRange):
        infer_water_mask(HyperCube(np.zeros((2, 1, 1)), [1, 2]), 3)


def test_dataset_single_tile(tmp_path, rng):
    (tmp_path / "in").mkdir()
    save_cube(random_cube(rng, 256, 256), tmp_path / "in" / "a.hcub")
    recs = build_dataset(tmp_path / "in", tmp_path / "out", tile=256)
    assert len(recs) == 1 and len(recs[0].bands) == 63


def test_dataset_four_tiles(tmp_path, rng):
    (tmp_path / "in").mkdir()
    save_cube(random_cube(rng, 512, 512, 3), tmp_path / "in" / "a.hcub")
    recs = build_dataset(tmp_path / "in", tmp_path / "out", band_triplet=(1, 2, 3), tile=256)
    assert [(r.row, r.col) for r in recs] == [(0, 0), (0, 256), (256, 0), (256, 256)]


def test_dataset_count_formula_mixed_corpus(tmp_path, rng):
    (tmp_path / "in").mkdir()
    sizes = [(17, 33), (8, 8), (31, 9), (40, 25)]
    for i, (h, w) in enumerate(sizes):
        save_cube(random_cube(rng, h, w, 3), tmp_path / "in" / f"c{i}.hcub")
    tile = 8
    expected = sum((h // tile) * (w // tile) for h, w in sizes)
    recs = build_dataset(tmp_path / "in", tmp_path / "out", band_triplet=(1, 2, 3), tile=tile)
    assert len(recs) == expected
    assert recs == sorted(recs, key=lambda r: (r.source_id, r.row, r.col))


def test_dataset_files_match_cube(tmp_path, fixtures_dir):
    recs = build_dataset(fixtures_dir / "cubes", tmp_path / "out", tile=16)
    rec = recs[0]
    cube = load_cube(fixtures_dir / "cubes" / f"{rec.source_id}.hcub")
    rgb = read_image(tmp_path / "out" / rec.rgb)
    expected = compose_rgb(cube.crop(rec.row, rec.col, 16, 16)).data
    assert np.max(np.abs(rgb.data - expected)) <= 0.5 / 255 + 1e-12
    mask = read_mask(tmp_path / "out" / rec.mask)
    assert np.array_equal(mask.bits, infer_water_mask(cube.crop(rec.row, rec.col, 16, 16)).bits)
    assert verify_dataset(tmp_path / "out" / "manifest.jsonl", 63) == []


def test_manifest_schema(tmp_path, fixtures_dir):
    build_dataset(fixtures_dir / "cubes", tmp_path / "out", tile=16)
    line = (tmp_path / "out" / "manifest.jsonl").read_text().splitlines()[0]
    assert set(json.loads(line)) == {"source_id", "row", "col", "rgb", "mask", "bands"}
    assert len(read_manifest(tmp_path / "out" / "manifest.jsonl")) == (48 // 16) * (40 // 16) + (24 // 16) * (36 // 16)


def test_parallel_build_matches_serial(tmp_path, fixtures_dir):
    build_dataset(fixtures_dir / "cubes", tmp_path / "a", tile=16, jobs=1)
    build_dataset(fixtures_dir / "cubes", tmp_path / "b", tile=16, jobs=2)
    assert (tmp_path / "a" / "manifest.jsonl").read_bytes() == (tmp_path / "b" / "manifest.jsonl").read_bytes()


def test_verify_reports_missing_file(tmp_path, fixtures_dir):
    recs = build_dataset(fixtures_dir / "cubes", tmp_path / "out", tile=16)
    (tmp_path / "out" / recs[0].bands[5]).unlink()
    problems = verify_dataset(tmp_path / "out" / "manifest.jsonl")
    assert len(problems) == 1 and "missing" in problems[0]


def test_no_cubes(tmp_path):
    with pytest.raises(NoCubesFound):
        build_dataset(tmp_path, tmp_path / "out", tile=8)
