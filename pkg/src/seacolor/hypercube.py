"""Hyperspectral cube container, RGB composition and the tiled dataset builder.

Band indices are 1-based in every public function, matching the usual
sensor numbering (e.g. bands 33/45/56 for R/G/B on a 63-band VNIR cube).

HCUB on-disk layout (little-endian)::

    b"HCUB" | u32 version=1 | u32 height | u32 width | u32 bands
    | bands x (height*width) float32 planes | bands x float32 wavelengths (nm)
"""

from __future__ import annotations

import json
import struct
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import (
    BadMagic,
    BandOutOfRange,
    DimensionMismatch,
    IoError,
    NoCubesFound,
    NonFiniteInput,
    TruncatedFile,
    VersionUnsupported,
    WavelengthOrder,
)
from .imagecore import RasterImage, WaterMask, read_image, write_image, write_mask

MAGIC = b"HCUB"
VERSION = 1
_HEADER = struct.Struct("<4sIIII")

DEFAULT_RGB_BANDS = (33, 45, 56)
DEFAULT_NIR_NM = 860.0
DEFAULT_NIR_THRESHOLD = 0.1
CUBE_SUFFIX = ".hcub"


@dataclass(frozen=True, eq=False)
class HyperCube:
    """Stack of ``bands`` reflectance planes, shape (bands, height, width), float32."""

    planes: np.ndarray
    wavelengths_nm: np.ndarray

    def __post_init__(self):
        planes = np.ascontiguousarray(self.planes, dtype=np.float32)
        wl = np.ascontiguousarray(self.wavelengths_nm, dtype=np.float32).reshape(-1)
        if planes.ndim != 3:
            raise DimensionMismatch(f"planes must be (bands, H, W), got {planes.shape}")
        if wl.size != planes.shape[0]:
            raise DimensionMismatch(f"{wl.size} wavelengths for {planes.shape[0]} bands")
        if not np.all(np.isfinite(planes)) or not np.all(np.isfinite(wl)):
            raise NonFiniteInput("cube contains NaN or Inf")
        if wl.size > 1:
            step = np.diff(wl.astype(np.float64))
            if not (np.all(step > 0) or np.all(step < 0)):
                raise WavelengthOrder("wavelengths must be strictly monotonic")
        planes.setflags(write=False)
        wl.setflags(write=False)
        object.__setattr__(self, "planes", planes)
        object.__setattr__(self, "wavelengths_nm", wl)

    @property
    def bands(self) -> int:
        return self.planes.shape[0]

    @property
    def height(self) -> int:
        return self.planes.shape[1]

    @property
    def width(self) -> int:
        return self.planes.shape[2]

    def band(self, index: int) -> np.ndarray:
        """Plane for a 1-based band index."""
        check_band(self, index)
        return self.planes[index - 1]

    def crop(self, row: int, col: int, height: int, width: int) -> "HyperCube":
        return HyperCube(self.planes[:, row : row + height, col : col + width], self.wavelengths_nm)

    def __repr__(self):
        return f"HyperCube({self.height}x{self.width}x{self.bands})"


def check_band(cube: HyperCube, index: int) -> None:
    if not isinstance(index, (int, np.integer)) or not 1 <= index <= cube.bands:
        raise BandOutOfRange(f"band {index} outside 1..{cube.bands}")


def nearest_band(cube: HyperCube, wavelength_nm: float) -> int:
    """1-based index of the band whose centre is closest to ``wavelength_nm``."""
    return int(np.argmin(np.abs(cube.wavelengths_nm.astype(np.float64) - wavelength_nm))) + 1


def save_cube(cube: HyperCube, path) -> None:
    path = Path(path)
    header = _HEADER.pack(MAGIC, VERSION, cube.height, cube.width, cube.bands)
    try:
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(cube.planes.astype("<f4", copy=False).tobytes(order="C"))
            fh.write(cube.wavelengths_nm.astype("<f4", copy=False).tobytes())
    except OSError as exc:
        raise IoError(f"{path}: {exc}") from exc


def load_cube(path) -> HyperCube:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise IoError(f"{path}: {exc}") from exc
    if len(raw) < 4 or raw[:4] != MAGIC:
        raise BadMagic(f"{path}: magic {raw[:4]!r} is not {MAGIC!r}")
    if len(raw) < _HEADER.size:
        raise TruncatedFile(f"{path}: header truncated")
    _, version, h, w, b = _HEADER.unpack_from(raw)
    if version != VERSION:
        raise VersionUnsupported(f"{path}: version {version}, only {VERSION} supported")
    n_planes = b * h * w
    expected = _HEADER.size + 4 * (n_planes + b)
    if len(raw) < expected:
        raise TruncatedFile(f"{path}: {len(raw)} bytes, expected {expected}")
    planes = np.frombuffer(raw, dtype="<f4", count=n_planes, offset=_HEADER.size).reshape(b, h, w)
    wl = np.frombuffer(raw, dtype="<f4", count=b, offset=_HEADER.size + 4 * n_planes)
    return HyperCube(planes.astype(np.float32), wl.astype(np.float32))


def compose_rgb(cube: HyperCube, r_band: int = 33, g_band: int = 45, b_band: int = 56) -> RasterImage:
    """Stack three 1-based bands into an RGB raster clamped to [0, 1]."""
    idx = (r_band, g_band, b_band)
    for i in idx:
        check_band(cube, i)
    if len(set(idx)) != 3:
        raise BandOutOfRange(f"band indices must be distinct, got {idx}")
    rgb = np.stack([cube.planes[i - 1] for i in idx], axis=-1).astype(np.float64)
    return RasterImage(np.clip(rgb, 0.0, 1.0))


def infer_water_mask(cube: HyperCube, nir_band: Optional[int] = None,
                     threshold: float = DEFAULT_NIR_THRESHOLD) -> WaterMask:
    """Water where NIR reflectance falls below ``threshold``.

    ``nir_band`` defaults to the band nearest 860 nm.
    """
    if nir_band is None:
        nir_band = nearest_band(cube, DEFAULT_NIR_NM)
    check_band(cube, nir_band)
    return WaterMask((cube.planes[nir_band - 1] < threshold).astype(np.uint8))


@dataclass
class DatasetRecord:
    source_id: str
    row: int
    col: int
    rgb: str
    mask: str
    bands: List[str] = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, separators=(",", ":"))


def _find_cubes(cube_dir: Path) -> List[Path]:
    if not cube_dir.is_dir():
        raise NoCubesFound(f"{cube_dir}: not a directory")
    cubes = sorted(p for p in cube_dir.iterdir() if p.suffix == CUBE_SUFFIX)
    if not cubes:
        raise NoCubesFound(f"{cube_dir}: no {CUBE_SUFFIX} files")
    return cubes


def tile_grid(height: int, width: int, tile: int) -> List[Tuple[int, int]]:
    """Top-left corners of every full tile; partial edge tiles are dropped."""
    return [(r * tile, c * tile) for r in range(height // tile) for c in range(width // tile)]


def _process_cube(args) -> List[DatasetRecord]:
    path, out_dir, triplet, tile, nir_band, threshold = args
    cube = load_cube(path)
    source_id = path.stem
    records = []
    for row, col in tile_grid(cube.height, cube.width, tile):
        sub = cube.crop(row, col, tile, tile)
        rel = Path(source_id) / f"r{row:05d}_c{col:05d}"
        tile_dir = out_dir / rel
        (tile_dir / "bands").mkdir(parents=True, exist_ok=True)
        write_image(compose_rgb(sub, *triplet), tile_dir / "rgb.png")
        write_mask(infer_water_mask(sub, nir_band, threshold), tile_dir / "mask.png")
        band_paths = []
        for i in range(1, sub.bands + 1):
            name = f"bands/band_{i:03d}.png"
            write_image(RasterImage(np.clip(sub.planes[i - 1], 0.0, 1.0)), tile_dir / name)
            band_paths.append((rel / name).as_posix())
        records.append(DatasetRecord(source_id, row, col, (rel / "rgb.png").as_posix(),
                                     (rel / "mask.png").as_posix(), band_paths))
    return records


def build_dataset(cube_dir, out_dir, band_triplet: Sequence[int] = DEFAULT_RGB_BANDS,
                  tile: int = 256, nir_band: Optional[int] = None,
                  threshold: float = DEFAULT_NIR_THRESHOLD, jobs: int = 1) -> List[DatasetRecord]:
    """Tile every cube in ``cube_dir`` into RGB, mask and per-band PNGs.

    Writes ``manifest.jsonl`` in ``out_dir`` (one record per line, paths
    relative to ``out_dir``) and returns the records sorted by
    (source, row, col).
    """
    if tile < 1:
        raise ValueError("tile must be positive")
    cube_dir, out_dir = Path(cube_dir), Path(out_dir)
    cubes = _find_cubes(cube_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoError(f"{out_dir}: {exc}") from exc
    work = [(p, out_dir, tuple(band_triplet), tile, nir_band, threshold) for p in cubes]
    if jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            batches = list(pool.map(_process_cube, work))
    else:
        batches = [_process_cube(w) for w in work]
    records = sorted((r for batch in batches for r in batch),
                     key=lambda r: (r.source_id, r.row, r.col))
    with open(out_dir / "manifest.jsonl", "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(rec.to_json() + "\n")
    return records


def read_manifest(path) -> List[DatasetRecord]:
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise IoError(f"{path}: {exc}") from exc
    return [DatasetRecord(**json.loads(line)) for line in lines if line.strip()]


def verify_dataset(manifest_path, expected_bands: Optional[int] = None) -> List[str]:
    """Check every referenced file exists and shares its tile's dimensions.

    Returns a list of human-readable problems; empty means the dataset is sound.
    """
    manifest_path = Path(manifest_path)
    root = manifest_path.parent
    problems = []
    for rec in read_manifest(manifest_path):
        tag = f"{rec.source_id}@({rec.row},{rec.col})"
        if expected_bands is not None and len(rec.bands) != expected_bands:
            problems.append(f"{tag}: {len(rec.bands)} bands, expected {expected_bands}")
        sizes = set()
        for rel in [rec.rgb, rec.mask, *rec.bands]:
            p = root / rel
            if not p.exists():
                problems.append(f"{tag}: missing {rel}")
                continue
            img = read_image(p)
            sizes.add((img.height, img.width))
        if len(sizes) > 1:
            problems.append(f"{tag}: mixed dimensions {sorted(sizes)}")
    return problems
