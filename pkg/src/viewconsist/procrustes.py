"""SO(3)-quotient geometry on keypoint configurations.

A configuration is an ordered set of d keypoints stored as a centroid-zero
3 x d matrix.  The squared pose-invariant distance

    r(X, Y) = min over proper rotations R of ||R X - Y||_F^2

is a squared metric on the quotient of configuration space by SO(3).  Both r
and its gradient in X have closed forms built from the SVD of the 3x3
cross-covariance Y X^T; this module wraps the batched backend kernels into
the single-pair public operations.
"""

from dataclasses import dataclass

import numpy as np

from . import backend
from .errors import InvalidInputError

CENTERING_TOL = 1e-9
ROTATION_TOL = 1e-9


def as_coords(config) -> np.ndarray:
    """Coerce a KeypointConfig or 3 x d array-like to a validated array.

    Finiteness and shape are checked; centering is not (gradient checks and
    other perturbation-based callers legitimately evaluate off-center).
    """
    if isinstance(config, KeypointConfig):
        return config.coords
    arr = np.ascontiguousarray(config, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] != 3 or arr.shape[1] < 2:
        raise InvalidInputError(
            f"expected a 3 x d configuration with d >= 2, got shape {arr.shape}"
        )
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError("configuration has non-finite entries")
    return arr


@dataclass(frozen=True)
class KeypointConfig:
    """Ordered 3D keypoints as a centroid-zero 3 x d matrix (d >= 2)."""

    coords: np.ndarray

    def __post_init__(self):
        arr = np.array(self.coords, dtype=np.float64, order="C")
        if arr.ndim != 2 or arr.shape[0] != 3 or arr.shape[1] < 2:
            raise InvalidInputError(
                f"expected a 3 x d configuration with d >= 2, got shape {arr.shape}"
            )
        if not np.all(np.isfinite(arr)):
            raise InvalidInputError("configuration has non-finite entries")
        if np.max(np.abs(arr.sum(axis=1))) > CENTERING_TOL:
            raise InvalidInputError(
                "configuration is not centered at the origin; apply center() first"
            )
        arr.flags.writeable = False
        object.__setattr__(self, "coords", arr)

    @property
    def d(self) -> int:
        return self.coords.shape[1]


@dataclass(frozen=True)
class Rotation:
    """A proper rotation matrix (element of SO(3)).

    ``degenerate`` marks an alignment whose optimal rotation was not unique
    (rank-deficient cross-covariance); the matrix is still a valid minimizer.
    """

    mat: np.ndarray
    degenerate: bool = False

    def __post_init__(self):
        arr = np.array(self.mat, dtype=np.float64, order="C")
        if arr.shape != (3, 3) or not np.all(np.isfinite(arr)):
            raise InvalidInputError("rotation must be a finite 3 x 3 matrix")
        if np.max(np.abs(arr.T @ arr - np.eye(3))) > ROTATION_TOL:
            raise InvalidInputError("matrix is not orthonormal")
        if abs(np.linalg.det(arr) - 1.0) > ROTATION_TOL:
            raise InvalidInputError("matrix is not a proper rotation (det != 1)")
        arr.flags.writeable = False
        object.__setattr__(self, "mat", arr)


@dataclass(frozen=True)
class PoseAlignment:
    """Bundled result of aligning X onto Y: rotation, distance and gradient."""

    rotation: Rotation
    distance: float
    gradient: np.ndarray

    @property
    def degenerate(self) -> bool:
        return self.rotation.degenerate


def center(raw) -> KeypointConfig:
    """Translate a raw 3 x d matrix so its column centroid is the origin."""
    arr = as_coords(raw)
    return KeypointConfig(arr - arr.mean(axis=1, keepdims=True))


def _pair(x, y):
    xc, yc = as_coords(x), as_coords(y)
    if xc.shape != yc.shape:
        raise InvalidInputError(
            f"configurations must share d: {xc.shape} vs {yc.shape}"
        )
    return xc, yc


def optimal_rotation(x, y) -> Rotation:
    """The proper rotation minimizing ||R x - y||_F^2."""
    xc, yc = _pair(x, y)
    rot, _, degenerate = backend.paired_align(xc[None], yc[None])
    return Rotation(rot[0], degenerate=bool(degenerate[0]))


def pose_invariant_distance(x, y) -> float:
    """Squared pose-invariant distance r(x, y), clamped at 0 from below.

    The closed form stays valid for degenerate (rank-deficient) pairs; only
    the minimizing rotation loses uniqueness there.
    """
    xc, yc = _pair(x, y)
    return float(backend.paired_sqdist(xc[None], yc[None])[0])


def pose_invariant_gradient(x, y) -> np.ndarray:
    """Gradient of r(x, y) in x: the 3 x d matrix 2 (x - R^T y).

    Degenerate pairs use the tie-broken rotation; call pose_align() when the
    degeneracy flag is needed alongside the gradient.
    """
    xc, yc = _pair(x, y)
    grad, _, _ = backend.paired_grad(xc[None], yc[None])
    return grad[0]


def pose_align(x, y) -> PoseAlignment:
    """Rotation, squared distance and gradient of r(x, y) in one pass."""
    xc, yc = _pair(x, y)
    rot, dist, degenerate = backend.paired_align(xc[None], yc[None])
    grad = 2.0 * (xc - rot[0].T @ yc)
    return PoseAlignment(
        rotation=Rotation(rot[0], degenerate=bool(degenerate[0])),
        distance=float(max(dist[0], 0.0)),
        gradient=grad,
    )
