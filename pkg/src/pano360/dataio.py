"""Dataset manifests and raster file I/O.

Manifests are JSON Lines: a header object on the first line, then one
sample record per line, all in canonical form (sorted keys, no spaces) so
a write -> read -> write round trip is byte-identical.

Raster formats:
  * RGB: 8-bit PNG
  * depth: 16-bit PNG at DEPTH_PNG_SCALE units per meter, or PFM (float32
    meters, little-endian, scale -1.0, rows bottom-to-top)
  * validity mask: 8-bit PNG, >= 128 means valid
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import DataError

MANIFEST_SCHEMA = "pano360-manifest"
MANIFEST_VERSION = 1
DEPTH_PNG_SCALE = 4000.0  # 16-bit PNG units per meter
MASK_VALID_THRESHOLD = 128

# Offline segmenter provenance defaults (recorded, never executed here).
DEFAULT_MASK_PROMPTS = ("sky", "watermark")
DEFAULT_BOX_THRESHOLD = 0.3
DEFAULT_TEXT_THRESHOLD = 0.25
DEFAULT_MASK_TOOL = "grounded-sam"


def _canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


@dataclass(frozen=True)
class SampleRecord:
    id: str
    rgb: str
    depth: str | None = None
    mask: str | None = None
    split: str = "train"
    source: str = "unknown"

    @property
    def labeled(self) -> bool:
        return self.depth is not None

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "rgb": self.rgb,
            "depth": self.depth,
            "mask": self.mask,
            "split": self.split,
            "source": self.source,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SampleRecord":
        return cls(
            id=d["id"],
            rgb=d["rgb"],
            depth=d.get("depth"),
            mask=d.get("mask"),
            split=d.get("split", "train"),
            source=d.get("source", "unknown"),
        )


@dataclass
class DatasetManifest:
    records: list[SampleRecord] = field(default_factory=list)
    header: dict = field(default_factory=dict)
    root: Path | None = None  # directory record paths resolve against

    def __post_init__(self):
        self.header.setdefault("schema", MANIFEST_SCHEMA)
        self.header.setdefault("version", MANIFEST_VERSION)
        ids = [r.id for r in self.records]
        if len(set(ids)) != len(ids):
            raise DataError("manifest has duplicate sample ids")

    def resolve(self, rel: str) -> Path:
        p = Path(rel)
        if p.is_absolute() or self.root is None:
            return p
        return self.root / p

    def to_jsonl(self) -> str:
        lines = [_canonical(self.header)]
        lines += [_canonical(r.to_dict()) for r in self.records]
        return "\n".join(lines) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.to_jsonl(), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "DatasetManifest":
        path = Path(path)
        try:
            lines = path.read_text(encoding="utf-8").splitlines()
        except OSError as e:
            raise DataError(f"cannot read manifest {path}: {e}") from e
        if not lines:
            raise DataError(f"manifest {path} is empty")
        header = json.loads(lines[0])
        if header.get("schema") != MANIFEST_SCHEMA:
            raise DataError(f"{path} is not a {MANIFEST_SCHEMA} file")
        records = [SampleRecord.from_dict(json.loads(ln)) for ln in lines[1:] if ln]
        return cls(records=records, header=header, root=path.parent)


# ---------------------------------------------------------------------------
# raster I/O


def save_rgb8(path, img: np.ndarray) -> None:
    img = np.asarray(img)
    if img.dtype != np.uint8:
        img = np.clip(np.round(img), 0, 255).astype(np.uint8)
    Image.fromarray(img, mode="RGB" if img.ndim == 3 else "L").save(path)


def save_mask(path, mask: np.ndarray) -> None:
    Image.fromarray(np.where(np.asarray(mask, bool), 255, 0).astype(np.uint8)).save(path)


def save_depth_png(path, depth_m: np.ndarray, scale: float = DEPTH_PNG_SCALE) -> None:
    q = np.round(np.asarray(depth_m, dtype=np.float64) * scale)
    if np.any(q < 0) or np.any(q > 65535):
        raise DataError("depth out of 16-bit PNG range at the configured scale")
    arr = q.astype(np.uint16)
    im = Image.new("I;16", (arr.shape[1], arr.shape[0]))
    im.frombytes(arr.tobytes())
    im.save(path)


def load_raster(path, kind: str, require_erp: bool = True):
    """Load a raster by kind: 'rgb8', 'depth' (PNG16 or PFM), or 'mask'.

    Returns the array for rgb8, (depth_m, valid) for depth (zero PNG values
    are invalid), and a bool array for mask.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such file: {path}")
    if kind == "depth" and path.suffix.lower() == ".pfm":
        depth = read_pfm(path)
        if require_erp:
            _check_2to1(depth.shape, path)
        valid = np.isfinite(depth) & (depth > 0.0)
        return depth, valid
    try:
        im = Image.open(path)
        im.load()
    except Exception as e:
        raise DataError(f"unreadable image {path}: {e}") from e
    if kind == "rgb8":
        arr = np.asarray(im.convert("RGB"), dtype=np.uint8)
        if require_erp:
            _check_2to1(arr.shape[:2], path)
        return arr
    if kind == "mask":
        arr = np.asarray(im.convert("L"))
        if require_erp:
            _check_2to1(arr.shape, path)
        return arr >= MASK_VALID_THRESHOLD
    if kind == "depth":
        if im.mode not in ("I", "I;16", "I;16B"):
            raise DataError(f"{path}: expected 16-bit depth PNG, got mode {im.mode}")
        raw = np.asarray(im, dtype=np.uint32)
        if require_erp:
            _check_2to1(raw.shape, path)
        return raw.astype(np.float64) / DEPTH_PNG_SCALE, raw > 0
    raise DataError(f"unknown raster kind {kind!r}")


def _check_2to1(shape, path):
    h, w = shape[:2]
    if w != 2 * h:
        raise DataError(f"{path}: ERP raster must be 2:1, got {h}x{w}")


def write_pfm(path, data: np.ndarray) -> None:
    """Single-channel little-endian PFM (scale -1.0), rows bottom-to-top."""
    data = np.asarray(data, dtype=np.float32)
    if data.ndim != 2:
        raise DataError("PFM writer handles single-channel rasters only")
    h, w = data.shape
    with open(path, "wb") as f:
        f.write(b"Pf\n")
        f.write(f"{w} {h}\n".encode("ascii"))
        f.write(b"-1.0\n")
        f.write(data[::-1].astype("<f4").tobytes())


def read_pfm(path) -> np.ndarray:
    with open(path, "rb") as f:
        magic = f.readline().strip()
        if magic != b"Pf":
            raise DataError(f"{path}: not a single-channel PFM file")
        dims = f.readline().split()
        if len(dims) != 2:
            raise DataError(f"{path}: malformed PFM dimensions")
        w, h = int(dims[0]), int(dims[1])
        scale = float(f.readline())
        endian = "<" if scale < 0 else ">"
        buf = f.read(4 * w * h)
        if len(buf) != 4 * w * h:
            raise DataError(f"{path}: truncated PFM payload")
    arr = np.frombuffer(buf, dtype=endian + "f4").reshape(h, w)
    return np.array(arr[::-1], dtype=np.float32)


def write_ascii_ply(path, points: np.ndarray, colors: np.ndarray | None = None) -> None:
    """ASCII PLY point cloud; colors are 8-bit RGB when given."""
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[1] != 3:
        raise DataError(f"points must be (n, 3), got {points.shape}")
    n = points.shape[0]
    lines = ["ply", "format ascii 1.0", f"element vertex {n}",
             "property float x", "property float y", "property float z"]
    if colors is not None:
        colors = np.asarray(colors)
        if colors.shape != (n, 3):
            raise DataError("colors must match points")
        lines += ["property uchar red", "property uchar green", "property uchar blue"]
    lines.append("end_header")
    with open(path, "w", encoding="ascii") as f:
        f.write("\n".join(lines) + "\n")
        for i in range(n):
            x, y, z = points[i]
            if colors is None:
                f.write(f"{x:.6f} {y:.6f} {z:.6f}\n")
            else:
                r, g, b = (int(c) for c in colors[i])
                f.write(f"{x:.6f} {y:.6f} {z:.6f} {r} {g} {b}\n")


# ---------------------------------------------------------------------------
# corpus operations


def valid_fraction(manifest: DatasetManifest, rec: SampleRecord) -> float:
    if rec.mask is None:
        return 1.0
    mask = load_raster(manifest.resolve(rec.mask), "mask", require_erp=False)
    return float(np.mean(mask))


def apply_validity_filter(
    manifest: DatasetManifest, min_valid_fraction: float = 0.20
):
    """Drop records whose valid-pixel fraction is below the threshold.

    Records with no mask count as fully valid. The boundary is inclusive:
    exactly min_valid_fraction is kept. Returns (kept, rejected) where
    rejected pairs each dropped record with its fraction.
    """
    kept, rejected = [], []
    for rec in manifest.records:
        frac = valid_fraction(manifest, rec)
        if frac >= min_valid_fraction:
            kept.append(rec)
        else:
            rejected.append((rec, frac))
    out = DatasetManifest(records=kept, header=dict(manifest.header), root=manifest.root)
    return out, rejected


def ingest_external_masks(
    rgb_dir,
    mask_dir,
    split: str = "train",
    source: str = "unlabeled",
    prompts=DEFAULT_MASK_PROMPTS,
    box_threshold: float = DEFAULT_BOX_THRESHOLD,
    text_threshold: float = DEFAULT_TEXT_THRESHOLD,
    tool: str = DEFAULT_MASK_TOOL,
) -> DatasetManifest:
    """Pair offline segmenter masks with RGB panoramas into a manifest.

    Masks must be named <id>.png matching the RGB ids and agree in shape;
    orphan masks are an error. Segmenter provenance (prompts, thresholds,
    tool) is recorded verbatim in the manifest header.
    """
    rgb_dir, mask_dir = Path(rgb_dir), Path(mask_dir)
    rgbs = {p.stem: p for p in sorted(rgb_dir.glob("*.png"))}
    masks = {p.stem: p for p in sorted(mask_dir.glob("*.png"))}
    orphans = sorted(set(masks) - set(rgbs))
    if orphans:
        raise DataError(f"masks without matching RGB: {orphans}")
    records = []
    for sid, rgb_path in rgbs.items():
        mask_path = masks.get(sid)
        if mask_path is not None:
            with Image.open(rgb_path) as a, Image.open(mask_path) as b:
                if a.size != b.size:
                    raise DataError(
                        f"{sid}: mask {b.size} does not match RGB {a.size}"
                    )
        records.append(
            SampleRecord(
                id=sid,
                rgb=str(rgb_path),
                mask=str(mask_path) if mask_path else None,
                split=split,
                source=source,
            )
        )
    header = {
        "schema": MANIFEST_SCHEMA,
        "version": MANIFEST_VERSION,
        "prompts": list(prompts),
        "box_threshold": box_threshold,
        "text_threshold": text_threshold,
        "tool": tool,
    }
    return DatasetManifest(records=records, header=header)


def corpus_stats(*manifests: DatasetManifest) -> dict:
    """Labeled/unlabeled counts per source plus aggregate totals."""
    per_source: dict[str, dict] = {}
    total = {"labeled": 0, "unlabeled": 0}
    for man in manifests:
        for rec in man.records:
            src = per_source.setdefault(rec.source, {"labeled": 0, "unlabeled": 0})
            key = "labeled" if rec.labeled else "unlabeled"
            src[key] += 1
            total[key] += 1
    return {"sources": per_source, "total": total}
