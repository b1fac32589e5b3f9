"""Pseudo ground-truth generation against a pluggable teacher.

The pipeline rotates an ERP panorama by a seeded random rotation, projects
six cube faces, queries a frozen perspective teacher per face, and packages
per-face inverse-depth pseudo labels with validity masks. Supervision stays
in the perspective domain; stitching faces back to ERP exists only as a
diagnostic (seam_score quantifies the cross-face inconsistency artifact).

Teachers implement infer(rgb, rays=None, seed=None) -> float raster of the
input's spatial shape, declared as relative inverse depth. The analytic
mock teachers use the per-pixel world rays; image-based teachers ignore
them. `seed` keys any per-call stochasticity (the mock's affine scrambling)
so pipelines stay bit-reproducible.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from . import geometry as geo
from .errors import DataError, DegenerateMapError
from .resample import cube_to_erp, erp_to_cube, random_rotation, rotate_erp


class TeacherBackend(Protocol):
    name: str
    output_space: str

    def infer(
        self, rgb: np.ndarray, rays: np.ndarray | None = None, seed: int | None = None
    ) -> np.ndarray: ...


# ---------------------------------------------------------------------------
# analytic scenes

# Camera offset of the eccentric sphere room (inside the unit sphere).
ECCENTRIC_OFFSET = np.array([0.25, 0.15, 0.35])

SCENES = ("unit_sphere_room", "eccentric_sphere_room", "two_plane_corridor")


def scene_inverse_depth(scene: str, rays: np.ndarray) -> np.ndarray:
    """Exact inverse depth of an analytic scene along unit rays (..., 3).

    unit_sphere_room: camera at the center of a radius-1 sphere (constant 1).
    eccentric_sphere_room: same sphere, camera offset from the center.
    two_plane_corridor: floor at y=-1 and ceiling at y=+1; rays parallel to
    the planes have infinite depth, i.e. inverse depth |ray_y|.
    """
    rays = np.asarray(rays, dtype=np.float64)
    if scene == "unit_sphere_room":
        return np.ones(rays.shape[:-1])
    if scene == "eccentric_sphere_room":
        return 1.0 / _sphere_depth(rays, ECCENTRIC_OFFSET)
    if scene == "two_plane_corridor":
        return np.abs(rays[..., 1])
    raise DataError(f"unknown analytic scene {scene!r}")


def scene_depth(scene: str, rays: np.ndarray) -> np.ndarray:
    """Depth along rays; infinite where inverse depth is zero."""
    inv = scene_inverse_depth(scene, rays)
    with np.errstate(divide="ignore"):
        return np.where(inv > 0.0, 1.0 / np.maximum(inv, 1e-300), np.inf)


def _sphere_depth(rays: np.ndarray, center_offset: np.ndarray) -> np.ndarray:
    # |c + t q| = 1 for unit sphere, camera at c: t = -c.q + sqrt((c.q)^2 + 1 - |c|^2)
    c = np.asarray(center_offset, dtype=np.float64)
    cq = rays @ c
    return -cq + np.sqrt(cq * cq + 1.0 - float(c @ c))


# ---------------------------------------------------------------------------
# teachers


@dataclass
class MockTeacher:
    """Analytic teacher: exact scene inverse depth along the query rays.

    With affine_scramble on, every call applies an independent positive
    affine map (seeded per call) to emulate an up-to-scale teacher.
    """

    scene: str = "unit_sphere_room"
    affine_scramble: bool = False
    base_seed: int = 0
    name: str = "mock"
    output_space: str = "inverse_depth_relative"

    def __post_init__(self):
        if self.scene not in SCENES:
            raise DataError(f"unknown analytic scene {self.scene!r}")
        self.name = f"mock:{self.scene}"

    def infer(self, rgb, rays=None, seed=None):
        if rays is None:
            raise DataError("the analytic mock teacher needs per-pixel rays")
        inv = scene_inverse_depth(self.scene, rays)
        if self.affine_scramble:
            rng = np.random.default_rng((self.base_seed, 0 if seed is None else seed))
            a = rng.uniform(0.5, 2.0)
            b = rng.uniform(0.0, 1.0)
            inv = a * inv + b
        return inv


@dataclass
class StubTeacher:
    """Deterministic image-based stand-in: disparity = luminance in [0, 1]."""

    name: str = "stub:luminance"
    output_space: str = "inverse_depth_relative"

    def infer(self, rgb, rays=None, seed=None):
        return luminance(rgb)


def luminance(rgb: np.ndarray) -> np.ndarray:
    """Rec. 709 luma of an 8-bit RGB raster, scaled to [0, 1]."""
    rgb = np.asarray(rgb, dtype=np.float64)
    if rgb.ndim == 2:
        return rgb / 255.0
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    return (0.2126 * r + 0.7152 * g + 0.0722 * b) / 255.0


# ---------------------------------------------------------------------------
# pseudo-label generation


@dataclass
class PseudoSample:
    sample_id: str
    rotation: np.ndarray  # (3, 3) applied to the panorama before projection
    faces: np.ndarray  # (6, w, w, 3) rotated RGB cube faces
    pseudo: np.ndarray  # (6, w, w) teacher inverse depth
    masks: np.ndarray  # (6, w, w) validity
    face_usable: np.ndarray  # (6,) False for degenerate/empty faces
    teacher: dict = field(default_factory=dict)
    seed: int = 0


def stable_seed(*parts) -> int:
    """Deterministic 64-bit seed from mixed ints and strings."""
    acc = 0
    for p in parts:
        if isinstance(p, str):
            p = zlib.crc32(p.encode("utf-8"))
        acc = (acc * 1000003 + int(p)) % (2**63)
    return acc


_face_dir_cache: dict[int, np.ndarray] = {}


def _face_directions(face_px: int) -> np.ndarray:
    if face_px not in _face_dir_cache:
        u, v = geo.face_pixel_grid(face_px)
        _face_dir_cache[face_px] = np.stack(
            [geo.face_pixel_to_direction(u, v, f, face_px) for f in geo.FACE_ORDER]
        )
    return _face_dir_cache[face_px]


def face_world_rays(rotation: np.ndarray, face_px: int) -> np.ndarray:
    """Scene-frame rays of each face pixel, shape (6, w, w, 3).

    The panorama is rotated by R before projection, so a face pixel whose
    direction is d in the rotated frame shows scene content along R^T d.
    """
    R = np.asarray(rotation, dtype=np.float64)
    return _face_directions(face_px) @ R  # row-vector form of R^T d


def generate_pseudo(
    sample_id: str,
    rgb: np.ndarray,
    teacher: TeacherBackend,
    seed: int,
    face_px: int = 256,
    rotation_mode: str = "full_so3",
    mask: np.ndarray | None = None,
    rotation: np.ndarray | None = None,
) -> PseudoSample:
    """Rotate, project, and query the teacher per cube face."""
    if rotation is None:
        rotation = random_rotation(stable_seed(seed, sample_id, "rot"), rotation_mode)
    rot_rgb, rot_mask = rotate_erp(np.asarray(rgb, dtype=np.float64), rotation, mask)
    faces, fmasks = erp_to_cube(rot_rgb, face_px, rot_mask)
    # quantize once: teachers (in-process or over the bridge) see the same bytes
    faces = np.clip(np.round(faces), 0, 255).astype(np.uint8)
    rays = face_world_rays(rotation, face_px)
    pseudo = np.zeros((6, face_px, face_px))
    usable = np.zeros(6, dtype=bool)
    masks = fmasks.copy()
    for f in geo.FACE_ORDER:
        i = int(f)
        if not fmasks[i].any():
            masks[i] = False
            continue  # never query the teacher on an all-invalid face
        out = np.asarray(
            teacher.infer(faces[i], rays=rays[i], seed=stable_seed(seed, sample_id, i)),
            dtype=np.float64,
        )
        if out.shape != (face_px, face_px):
            raise DataError(
                f"teacher returned {out.shape}, expected {(face_px, face_px)}"
            )
        finite = np.isfinite(out)
        masks[i] &= finite
        out = np.where(finite, out, 0.0)
        pseudo[i] = out
        valid = out[masks[i]]
        # constant teacher faces are degenerate for the affine loss: drop them
        usable[i] = valid.size >= 2 and valid.max() > valid.min()
    return PseudoSample(
        sample_id=sample_id,
        rotation=rotation,
        faces=faces,
        pseudo=pseudo,
        masks=masks,
        face_usable=usable,
        teacher={"name": teacher.name, "output_space": teacher.output_space},
        seed=seed,
    )


# ---------------------------------------------------------------------------
# stitching diagnostic


def stitch_cube_depth_to_erp(
    pseudo: np.ndarray, h: int, alignment: str = "none"
) -> np.ndarray:
    """Stitch six scalar faces to ERP, optionally median-matching to Front.

    This reproduces the cross-face inconsistency artifact and is diagnostic
    only; training never consumes a stitched pseudo label.
    """
    pseudo = np.asarray(pseudo, dtype=np.float64)
    if pseudo.ndim != 3 or pseudo.shape[0] != 6:
        raise DataError(f"expected (6, w, w) scalar faces, got {pseudo.shape}")
    if alignment == "per_face_median_to_front":
        med = np.array([np.median(face) for face in pseudo])
        if np.any(med == 0.0):
            raise DegenerateMapError("zero face median under per-face alignment")
        pseudo = pseudo * (med[0] / med)[:, None, None]
    elif alignment != "none":
        raise DataError(f"unknown alignment {alignment!r}")
    return cube_to_erp(pseudo, h)


def seam_score(erp: np.ndarray) -> float:
    """Mean |finite difference| across cube-face boundaries over interior.

    ~1 on smooth fields, >> 1 when faces carry inconsistent scales; 0 on
    constant maps, inf when only the boundaries carry gradient.
    """
    erp = np.asarray(erp, dtype=np.float64)
    if erp.ndim != 2 or erp.shape[1] != 2 * erp.shape[0]:
        raise DataError(f"expected a 2:1 scalar ERP raster, got {erp.shape}")
    h, w = erp.shape
    fid = np.asarray(geo.face_of_direction(geo.erp_direction_grid(h)))
    dh = np.abs(erp - np.roll(erp, -1, axis=1))
    bh = fid != np.roll(fid, -1, axis=1)
    dv = np.abs(erp[:-1] - erp[1:])
    bv = fid[:-1] != fid[1:]
    boundary = np.concatenate([dh[bh], dv[bv]])
    interior = np.concatenate([dh[~bh], dv[~bv]])
    b = float(boundary.mean()) if boundary.size else 0.0
    i = float(interior.mean()) if interior.size else 0.0
    if b == 0.0:
        return 0.0
    if i == 0.0:
        return float("inf")
    return b / i
