"""Image-level projections on the sphere: ERP<->cube, rotation, tangent patches.

Everything is an inverse (gather) warp: each output pixel pulls from the
source with bilinear interpolation (horizontal wrap in longitude, vertical
clamp at the poles); validity masks travel by nearest neighbor so a warped
pixel is valid only if its nearest source pixel is.

Gathers are exposed both as convenience functions operating on rasters and
as LinearGather objects (fixed sparse index/weight tables) whose transpose
(vjp) the training loop uses for analytic gradients.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import ConvexHull
from scipy.spatial.transform import Rotation as _ScipyRotation

from . import geometry as geo
from .errors import DataError


def check_erp(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img)
    if img.ndim not in (2, 3):
        raise DataError(f"ERP raster must be 2-D or 3-D, got shape {img.shape}")
    h, w = img.shape[:2]
    if w != 2 * h:
        raise DataError(f"ERP raster must be 2:1, got {h}x{w}")
    if not np.all(np.isfinite(img)):
        raise DataError("ERP raster contains non-finite values")
    return img


# ---------------------------------------------------------------------------
# gather primitives


def _corner_table(rowf, colf, h: int, w: int, wrap_cols: bool):
    """Flat indices and weights of the four bilinear corners."""
    rowf = np.clip(rowf, 0.0, h - 1.0)
    r0 = np.floor(rowf).astype(np.int64)
    c0f = np.floor(colf)
    fr = rowf - r0
    fc = colf - c0f
    c0 = c0f.astype(np.int64)
    r1 = np.minimum(r0 + 1, h - 1)
    if wrap_cols:
        c0m = np.mod(c0, w)
        c1m = np.mod(c0 + 1, w)
    else:
        c0m = np.clip(c0, 0, w - 1)
        c1m = np.clip(c0 + 1, 0, w - 1)
    idx = np.stack(
        [r0 * w + c0m, r0 * w + c1m, r1 * w + c0m, r1 * w + c1m], axis=-1
    )
    wgt = np.stack(
        [(1 - fr) * (1 - fc), (1 - fr) * fc, fr * (1 - fc), fr * fc], axis=-1
    )
    return idx.reshape(-1, 4), wgt.reshape(-1, 4)


def _nearest_index(rowf, colf, h: int, w: int, wrap_cols: bool):
    r = np.clip(np.floor(np.asarray(rowf) + 0.5), 0, h - 1).astype(np.int64)
    c = np.floor(np.asarray(colf) + 0.5).astype(np.int64)
    c = np.mod(c, w) if wrap_cols else np.clip(c, 0, w - 1)
    return (r * w + c).reshape(-1)


@dataclass(frozen=True)
class LinearGather:
    """A fixed sparse linear map: out = sum_k wgt[:, k] * src.flat[idx[:, k]]."""

    src_shape: tuple
    out_shape: tuple
    idx: np.ndarray  # (N, 4) int64 into the flattened source
    wgt: np.ndarray  # (N, 4) float64
    nearest: np.ndarray  # (N,) int64, nearest source pixel per output pixel

    def apply(self, src: np.ndarray) -> np.ndarray:
        """Gather a scalar or multi-channel raster."""
        src = np.asarray(src, dtype=np.float64)
        if src.shape[: len(self.src_shape)] != self.src_shape:
            raise DataError(f"gather expects source {self.src_shape}, got {src.shape}")
        if src.ndim == len(self.src_shape):
            flat = src.reshape(-1)
            out = (flat[self.idx] * self.wgt).sum(axis=1)
            return out.reshape(self.out_shape)
        ch = src.shape[-1]
        flat = src.reshape(-1, ch)
        out = np.einsum("nkc,nk->nc", flat[self.idx], self.wgt)
        return out.reshape(self.out_shape + (ch,))

    def apply_mask(self, mask: np.ndarray) -> np.ndarray:
        """Transport a boolean validity mask by nearest neighbor."""
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != self.src_shape:
            raise DataError(f"mask shape {mask.shape} != source {self.src_shape}")
        return mask.reshape(-1)[self.nearest].reshape(self.out_shape)

    def vjp(self, grad: np.ndarray) -> np.ndarray:
        """Transpose map: scatter-add an output-shaped gradient to the source."""
        g = np.asarray(grad, dtype=np.float64).reshape(-1)
        out = np.zeros(int(np.prod(self.src_shape)), dtype=np.float64)
        np.add.at(out, self.idx, g[:, None] * self.wgt)
        return out.reshape(self.src_shape)


def _erp_gather_from_directions(dirs: np.ndarray, h: int, out_shape: tuple) -> LinearGather:
    """Gather from an h x 2h ERP along the given unit directions."""
    w_erp = 2 * h
    theta, phi = geo.unit_vec_to_spherical(dirs, check=False)
    rowf, colf = geo.spherical_to_erp_pixel(theta, phi, h, w_erp)
    idx, wgt = _corner_table(rowf, colf, h, w_erp, wrap_cols=True)
    near = _nearest_index(rowf, colf, h, w_erp, wrap_cols=True)
    return LinearGather((h, w_erp), out_shape, idx, wgt, near)


# ---------------------------------------------------------------------------
# spherical sampling


def sample_bilinear(img: np.ndarray, theta, phi):
    """Bilinear ERP sample at spherical coords (wrap in theta, clamp in phi)."""
    img = check_erp(img)
    h, w_erp = img.shape[:2]
    theta = np.asarray(theta, dtype=np.float64)
    rowf, colf = geo.spherical_to_erp_pixel(theta, phi, h, w_erp)
    idx, wgt = _corner_table(rowf, colf, h, w_erp, wrap_cols=True)
    if img.ndim == 2:
        out = (img.reshape(-1)[idx] * wgt).sum(axis=1)
        return out.reshape(theta.shape) if theta.shape else float(out[0])
    ch = img.shape[-1]
    out = np.einsum("nkc,nk->nc", img.reshape(-1, ch)[idx], wgt)
    return out.reshape(theta.shape + (ch,))


# ---------------------------------------------------------------------------
# gather builders


def rotation_gather(h: int, R: np.ndarray) -> LinearGather:
    """Gather realizing rotate_erp by R on an h x 2h grid."""
    R = geo.validate_rotation(R)
    dirs = geo.erp_direction_grid(h)
    src_dirs = dirs @ R  # row-vector form of R^T q: inverse warp
    return _erp_gather_from_directions(src_dirs, h, (h, 2 * h))


def perspective_gather(h: int, R: np.ndarray, patch_px: int, focal: float) -> LinearGather:
    """Gather projecting an h x 2h ERP into one perspective patch.

    The patch camera has focal `focal` (pixels), principal point at the
    patch center, and camera-to-world rotation R; cube faces are the
    special case focal = patch_px / 2.
    """
    if patch_px <= 0:
        raise DataError("patch side must be positive")
    u, v = geo.face_pixel_grid(patch_px)
    c = patch_px / 2.0
    ray = np.stack(
        [(u - c) / focal, (v - c) / focal, np.ones_like(u)], axis=-1
    )
    dirs = geo.normalize(ray) @ np.asarray(R, dtype=np.float64).T
    return _erp_gather_from_directions(dirs, h, (patch_px, patch_px))


_cube_gather_cache: dict[tuple[int, int], LinearGather] = {}
_face_gather_cache: dict[tuple[int, int], list[LinearGather]] = {}


def _face_gathers(h: int, face_px: int) -> list[LinearGather]:
    key = (h, face_px)
    if key not in _face_gather_cache:
        _face_gather_cache[key] = [
            perspective_gather(h, geo.face_rotation(f), face_px, face_px / 2.0)
            for f in geo.FACE_ORDER
        ]
    return _face_gather_cache[key]


def cube_gather(h: int, face_px: int) -> LinearGather:
    """Gather projecting an h x 2h ERP into the six stacked cube faces."""
    key = (h, face_px)
    if key not in _cube_gather_cache:
        parts = _face_gathers(h, face_px)
        _cube_gather_cache[key] = LinearGather(
            (h, 2 * h),
            (6, face_px, face_px),
            np.concatenate([p.idx for p in parts]),
            np.concatenate([p.wgt for p in parts]),
            np.concatenate([p.nearest for p in parts]),
        )
    return _cube_gather_cache[key]


_c2e_gather_cache: dict[tuple[int, int], LinearGather] = {}


def cube_to_erp_gather(face_px: int, h: int) -> LinearGather:
    """Gather stitching six stacked faces back to an h x 2h ERP.

    Hard face assignment (no seam blending): every ERP pixel reads from
    exactly the face its direction falls on, clamped at face borders.
    """
    key = (face_px, h)
    if key in _c2e_gather_cache:
        return _c2e_gather_cache[key]
    w_erp = 2 * h
    dirs = geo.erp_direction_grid(h).reshape(-1, 3)
    face_idx = np.asarray(geo.face_of_direction(dirs))
    idx = np.empty((dirs.shape[0], 4), dtype=np.int64)
    wgt = np.empty((dirs.shape[0], 4), dtype=np.float64)
    near = np.empty(dirs.shape[0], dtype=np.int64)
    per_face = face_px * face_px
    for f in geo.FACE_ORDER:
        sel = face_idx == int(f)
        u, v, _ = geo.project_to_face(dirs[sel], f, face_px)
        rowf, colf = v - 0.5, u - 0.5
        fi, fw = _corner_table(rowf, colf, face_px, face_px, wrap_cols=False)
        idx[sel] = fi + int(f) * per_face
        wgt[sel] = fw
        near[sel] = _nearest_index(rowf, colf, face_px, face_px, wrap_cols=False) + int(f) * per_face
    g = LinearGather((6, face_px, face_px), (h, w_erp), idx, wgt, near)
    _c2e_gather_cache[key] = g
    return g


def grid_upsample_gather(gh: int, gw: int, h: int, w_erp: int) -> LinearGather:
    """Bilinear upsample of a coarse gh x gw grid to h x w_erp (wrap in x)."""
    rows = (np.arange(h, dtype=np.float64) + 0.5) * gh / h - 0.5
    cols = (np.arange(w_erp, dtype=np.float64) + 0.5) * gw / w_erp - 0.5
    rowf = np.broadcast_to(rows[:, None], (h, w_erp))
    colf = np.broadcast_to(cols[None, :], (h, w_erp))
    idx, wgt = _corner_table(rowf, colf, gh, gw, wrap_cols=True)
    near = _nearest_index(rowf, colf, gh, gw, wrap_cols=True)
    return LinearGather((gh, gw), (h, w_erp), idx, wgt, near)


# ---------------------------------------------------------------------------
# raster-level operations


def rotate_erp(img: np.ndarray, R: np.ndarray, mask: np.ndarray | None = None):
    """Rotate an ERP raster: output at direction q reads input at R^T q."""
    img = check_erp(img)
    h = img.shape[0]
    g = rotation_gather(h, R)
    out = g.apply(img)
    out_mask = g.apply_mask(mask) if mask is not None else np.ones((h, 2 * h), dtype=bool)
    return out, out_mask


def erp_to_cube(img: np.ndarray, face_px: int, mask: np.ndarray | None = None):
    """Project an ERP raster to six cube faces, returning (faces, face_masks)."""
    img = check_erp(img)
    h = img.shape[0]
    faces = []
    fmasks = []
    for f, g in zip(geo.FACE_ORDER, _face_gathers(h, face_px)):
        faces.append(g.apply(img))
        fmasks.append(
            g.apply_mask(mask) if mask is not None else np.ones((face_px, face_px), dtype=bool)
        )
    return np.stack(faces), np.stack(fmasks)


def cube_to_erp(faces: np.ndarray, h: int) -> np.ndarray:
    """Stitch six stacked faces (6, w, w[, C]) to an h x 2h ERP raster."""
    faces = np.asarray(faces)
    if faces.ndim not in (3, 4) or faces.shape[0] != 6 or faces.shape[1] != faces.shape[2]:
        raise DataError(f"expected (6, w, w[, C]) face stack, got {faces.shape}")
    return cube_to_erp_gather(faces.shape[1], h).apply(faces)


def erp_to_tangent(
    img: np.ndarray,
    n_patches: int = 20,
    fov: float = math.radians(80.0),
    patch_px: int = 256,
    rotations: np.ndarray | None = None,
    mask: np.ndarray | None = None,
):
    """Project an ERP raster to perspective tangent patches.

    Returns (patches (n, w, w[, C]), rotations (n, 3, 3), masks (n, w, w)).
    Patch centers follow the fixed geodesic layout for n_patches in
    {6 (cube directions), 12 (icosahedron vertices), 20 (icosahedron face
    centers)} unless explicit camera-to-world rotations are given.
    """
    img = check_erp(img)
    if not 0.0 < fov < math.pi:
        raise DataError(f"field of view must be in (0, pi), got {fov}")
    if rotations is None:
        rotations = tangent_layout(n_patches)
    rotations = np.asarray(rotations, dtype=np.float64)
    if n_patches != rotations.shape[0]:
        raise DataError("n_patches does not match the rotation layout")
    h = img.shape[0]
    focal = (patch_px / 2.0) / math.tan(fov / 2.0)
    patches, pmasks = [], []
    for R in rotations:
        g = perspective_gather(h, R, patch_px, focal)
        patches.append(g.apply(img))
        pmasks.append(
            g.apply_mask(mask) if mask is not None else np.ones((patch_px, patch_px), dtype=bool)
        )
    return np.stack(patches), rotations, np.stack(pmasks)


def tangent_layout(n_patches: int) -> np.ndarray:
    """Fixed camera-to-world rotations for the supported tangent layouts."""
    if n_patches < 4:
        raise DataError("tangent layout needs at least 4 patches")
    if n_patches == 6:
        return np.stack([geo.face_rotation(f) for f in geo.FACE_ORDER])
    if n_patches == 12:
        centers = _icosahedron_vertices()
    elif n_patches == 20:
        centers = icosahedral_centers()
    else:
        raise DataError(
            f"no fixed layout for {n_patches} patches; pass explicit rotations"
        )
    return np.stack([look_rotation(c) for c in centers])


def look_rotation(direction: np.ndarray) -> np.ndarray:
    """Camera-to-world rotation whose +z axis is `direction`.

    The in-plane orientation keeps world-up in the image's vertical axis
    except near the poles, where world +z is the reference instead.
    """
    d = geo.normalize(np.asarray(direction, dtype=np.float64))
    ref = np.array([0.0, 1.0, 0.0])
    if abs(float(d @ ref)) > 0.99:
        ref = np.array([0.0, 0.0, 1.0])
    x = geo.normalize(np.cross(ref, d))
    y = np.cross(d, x)
    return np.stack([x, y, d], axis=1)


def _icosahedron_vertices() -> np.ndarray:
    p = (1.0 + math.sqrt(5.0)) / 2.0
    v = np.array(
        [
            [0, 1, p], [0, 1, -p], [0, -1, p], [0, -1, -p],
            [1, p, 0], [1, -p, 0], [-1, p, 0], [-1, -p, 0],
            [p, 0, 1], [p, 0, -1], [-p, 0, 1], [-p, 0, -1],
        ],
        dtype=np.float64,
    )
    v = geo.normalize(v)
    order = np.lexsort((v[:, 0], v[:, 1], v[:, 2]))
    return v[order]


def icosahedral_centers() -> np.ndarray:
    """The 20 icosahedron face-center directions, deterministically ordered."""
    verts = _icosahedron_vertices()
    hull = ConvexHull(verts)
    centers = geo.normalize(verts[hull.simplices].mean(axis=1))
    order = np.lexsort(
        (np.round(centers[:, 0], 12), np.round(centers[:, 1], 12), np.round(centers[:, 2], 12))
    )
    return centers[order]


# ---------------------------------------------------------------------------
# random rotations


def random_rotation(seed: int, mode: str = "full_so3") -> np.ndarray:
    """Seeded random rotation: uniform on SO(3) or yaw-only about world up."""
    rng = np.random.default_rng(seed)
    if mode == "full_so3":
        quat = rng.normal(size=4)
        quat /= np.linalg.norm(quat)
        return _ScipyRotation.from_quat(quat).as_matrix()
    if mode == "yaw_only":
        a = rng.uniform(0.0, 2.0 * math.pi)
        c, s = math.cos(a), math.sin(a)
        return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])
    if mode == "identity":
        return np.eye(3)
    raise DataError(f"unknown rotation mode {mode!r}")
