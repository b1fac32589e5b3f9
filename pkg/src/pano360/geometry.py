"""Sphere / cube coordinate conversions and rotation algebra.

Conventions (fixed throughout the toolkit):
  * world frame is y-up, z-forward, x-right
  * ERP row 0 is latitude +pi/2 (image top = up), pixel centers at
    half-integer offsets
  * longitude theta in [-pi, pi) (wraps), latitude phi in [-pi/2, pi/2]
  * at the poles (|phi| = pi/2) longitude is 0 by convention
  * cube faces: Front=+z, Right=+x, Back=-z, Left=-x, Up=+y, Down=-y,
    each a 90-degree perspective camera with focal w/2 and principal
    point (w/2, w/2)

All functions accept scalars or numpy arrays (broadcasting over leading
dimensions) and are pure.
"""

from __future__ import annotations

import enum
import functools
import math

import numpy as np

from .errors import DataError


class CubeFace(enum.IntEnum):
    FRONT = 0
    RIGHT = 1
    BACK = 2
    LEFT = 3
    UP = 4
    DOWN = 5

    @property
    def letter(self) -> str:
        return "FRBLUD"[int(self)]


FACE_ORDER = tuple(CubeFace)

# Outward axis of each face, in face order.
FACE_AXES = np.array(
    [
        [0.0, 0.0, 1.0],   # Front
        [1.0, 0.0, 0.0],   # Right
        [0.0, 0.0, -1.0],  # Back
        [-1.0, 0.0, 0.0],  # Left
        [0.0, 1.0, 0.0],   # Up
        [0.0, -1.0, 0.0],  # Down
    ]
)

_FACE_ROTATIONS = np.array(
    [
        [[1, 0, 0], [0, 1, 0], [0, 0, 1]],     # Front: identity
        [[0, 0, 1], [0, 1, 0], [-1, 0, 0]],    # Right: yaw +90
        [[-1, 0, 0], [0, 1, 0], [0, 0, -1]],   # Back: yaw 180
        [[0, 0, -1], [0, 1, 0], [1, 0, 0]],    # Left: yaw -90
        [[1, 0, 0], [0, 0, 1], [0, -1, 0]],    # Up: pitch +90
        [[1, 0, 0], [0, 0, -1], [0, 1, 0]],    # Down: pitch -90
    ],
    dtype=np.float64,
)


def face_rotation(face: CubeFace) -> np.ndarray:
    """Fixed extrinsic rotation of a cube face (camera-to-world)."""
    return _FACE_ROTATIONS[int(face)].copy()


def validate_rotation(R: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """Check RtR = I and det(R) = +1; returns R as float64."""
    R = np.asarray(R, dtype=np.float64)
    if R.shape != (3, 3):
        raise DataError(f"rotation must be 3x3, got {R.shape}")
    if not np.allclose(R.T @ R, np.eye(3), atol=tol):
        raise DataError("matrix is not orthonormal")
    if abs(np.linalg.det(R) - 1.0) > tol:
        raise DataError("matrix determinant is not +1")
    return R


def cube_intrinsics(w: int) -> np.ndarray:
    """Pinhole K for a 90-degree cube face of side w (focal w/2)."""
    if w <= 0:
        raise DataError("face side must be positive")
    f = w / 2.0
    return np.array([[f, 0.0, f], [0.0, f, f], [0.0, 0.0, 1.0]])


def wrap_longitude(theta):
    """Wrap longitude into [-pi, pi)."""
    return np.mod(np.asarray(theta, dtype=np.float64) + math.pi, 2.0 * math.pi) - math.pi


def erp_pixel_to_spherical(row, col, h: int, w_erp: int):
    """Pixel-center (row, col) of an h x w_erp ERP grid -> (theta, phi)."""
    if w_erp != 2 * h:
        raise DataError(f"ERP width must be 2x height, got {h}x{w_erp}")
    row = np.asarray(row, dtype=np.float64)
    col = np.asarray(col, dtype=np.float64)
    theta = 2.0 * math.pi * (col + 0.5) / w_erp - math.pi
    phi = math.pi / 2.0 - math.pi * (row + 0.5) / h
    return theta, phi


def spherical_to_erp_pixel(theta, phi, h: int, w_erp: int):
    """Inverse of erp_pixel_to_spherical; returns fractional (row, col)."""
    if w_erp != 2 * h:
        raise DataError(f"ERP width must be 2x height, got {h}x{w_erp}")
    theta = wrap_longitude(theta)
    phi = np.asarray(phi, dtype=np.float64)
    col = (theta + math.pi) * w_erp / (2.0 * math.pi) - 0.5
    row = (math.pi / 2.0 - phi) * h / math.pi - 0.5
    return row, col


def spherical_to_unit_vec(theta, phi) -> np.ndarray:
    """(theta, phi) -> unit direction (x, y, z) = (sin t cos p, sin p, cos t cos p)."""
    theta = np.asarray(theta, dtype=np.float64)
    phi = np.asarray(phi, dtype=np.float64)
    cp = np.cos(phi)
    return np.stack([np.sin(theta) * cp, np.sin(phi), np.cos(theta) * cp], axis=-1)


def unit_vec_to_spherical(q: np.ndarray, check: bool = True):
    """Unit direction -> (theta, phi); theta = 0 at the poles."""
    q = np.asarray(q, dtype=np.float64)
    if check:
        n = np.linalg.norm(q, axis=-1)
        if not np.all(np.abs(n - 1.0) <= 1e-9):
            raise DataError("direction is not unit length")
    x, y, z = q[..., 0], q[..., 1], q[..., 2]
    phi = np.arcsin(np.clip(y, -1.0, 1.0))
    theta = np.arctan2(x, z)
    at_pole = np.abs(y) >= 1.0 - 1e-15
    theta = np.where(at_pole, 0.0, theta)
    theta = wrap_longitude(theta)
    if theta.ndim == 0:
        return float(theta), float(phi)
    return theta, phi


def normalize(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def rotate_direction(R: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Apply rotation R to direction(s) q; result renormalized."""
    q = np.asarray(q, dtype=np.float64)
    return normalize(q @ np.asarray(R, dtype=np.float64).T)


def project_to_face(q: np.ndarray, face: CubeFace, w: int):
    """p = K . Ri^T . q; returns (u, v, in_front).

    in_front is False where the camera-frame depth is <= 0 (out-of-face);
    there u, v are NaN. In-face additionally requires 0 <= u, v <= w.
    """
    q = np.asarray(q, dtype=np.float64)
    Ri = _FACE_ROTATIONS[int(face)]
    qc = q @ Ri  # Ri^T q for row-stacked q
    z = qc[..., 2]
    in_front = z > 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        f = w / 2.0
        u = np.where(in_front, f * qc[..., 0] / z + f, np.nan)
        v = np.where(in_front, f * qc[..., 1] / z + f, np.nan)
    return u, v, in_front


def in_face(u, v, w: int):
    return (u >= 0.0) & (u <= w) & (v >= 0.0) & (v <= w)


def face_pixel_to_direction(u, v, face: CubeFace, w: int) -> np.ndarray:
    """Inverse of project_to_face: q = Ri . normalize(K^-1 (u, v, 1))."""
    if w <= 0:
        raise DataError("face side must be positive")
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    f = w / 2.0
    ray = np.stack([(u - f) / f, (v - f) / f, np.ones_like(u)], axis=-1)
    Ri = _FACE_ROTATIONS[int(face)]
    return normalize(ray @ Ri.T)


def face_of_direction(q: np.ndarray):
    """Face whose outward axis best aligns with q.

    Ties resolve to the first face in the fixed order F, R, B, L, U, D.
    """
    q = np.asarray(q, dtype=np.float64)
    dots = q @ FACE_AXES.T
    idx = np.argmax(dots, axis=-1)
    if idx.ndim == 0:
        return CubeFace(int(idx))
    return idx


@functools.lru_cache(maxsize=16)
def erp_direction_grid(h: int) -> np.ndarray:
    """Unit directions of all pixel centers of an h x 2h ERP grid, (h, 2h, 3).

    Cached and returned read-only; copy before mutating.
    """
    w_erp = 2 * h
    rows = np.arange(h, dtype=np.float64)
    cols = np.arange(w_erp, dtype=np.float64)
    theta, phi = erp_pixel_to_spherical(
        rows[:, None] * np.ones((1, w_erp)), np.ones((h, 1)) * cols[None, :], h, w_erp
    )
    grid = spherical_to_unit_vec(theta, phi)
    grid.flags.writeable = False
    return grid


def face_pixel_grid(w: int) -> tuple[np.ndarray, np.ndarray]:
    """Pixel-center (u, v) grids of a w x w face raster; v indexes rows."""
    c = np.arange(w, dtype=np.float64) + 0.5
    u = np.broadcast_to(c[None, :], (w, w))
    v = np.broadcast_to(c[:, None], (w, w))
    return u, v
