"""Pure-numpy pose-distance kernels (fallback backend).

Conventions shared with the compiled backend in ``_kernels.pyx``:

* a configuration is a C-contiguous float64 array of shape (3, d);
* the squared pose distance between X and Y is
  ``min_R ||R X - Y||_F^2`` over proper rotations R, evaluated in closed
  form from the SVD of the 3x3 cross-covariance ``K = Y X^T``;
* the sign correction applies to the smallest singular value (descending
  order), with ``|det K| < 1e-12`` treated as sign +1 and flagged degenerate.

Values-only routines (`paired_sqdist`, `pairwise_sqdist`) skip the singular
vectors entirely.  The full routines (`paired_align`, `paired_grad`) return
rotations/gradients and report distances consistent with the rotation they
actually return, so ``r == ||R X - Y||_F^2`` holds to round-off.
"""

import numpy as np

DEGENERATE_DET_TOL = 1e-12


def _as_stack(a):
    a = np.ascontiguousarray(a, dtype=np.float64)
    if a.ndim != 3 or a.shape[1] != 3:
        raise ValueError(f"expected a (k, 3, d) stack, got shape {a.shape}")
    return a


def _det3(k):
    return (
        k[..., 0, 0] * (k[..., 1, 1] * k[..., 2, 2] - k[..., 1, 2] * k[..., 2, 1])
        - k[..., 0, 1] * (k[..., 1, 0] * k[..., 2, 2] - k[..., 1, 2] * k[..., 2, 0])
        + k[..., 0, 2] * (k[..., 1, 0] * k[..., 2, 1] - k[..., 1, 1] * k[..., 2, 0])
    )


def _sqnorm(a):
    return np.einsum("...pd,...pd->...", a, a)


def paired_sqdist(a, b):
    """Squared pose distances r(a_i, b_i) for matched stacks (k, 3, d)."""
    a, b = _as_stack(a), _as_stack(b)
    k = np.einsum("...pd,...qd->...pq", b, a)
    sv = np.linalg.svd(k, compute_uv=False)
    det = _det3(k)
    sign = np.where(np.abs(det) < DEGENERATE_DET_TOL, 1.0, np.sign(det))
    r = _sqnorm(a) + _sqnorm(b) - 2.0 * (sv[..., 0] + sv[..., 1] + sign * sv[..., 2])
    return np.maximum(r, 0.0)


def pairwise_sqdist(a, b):
    """All squared pose distances between stacks: out[i, j] = r(a_i, b_j)."""
    a, b = _as_stack(a), _as_stack(b)
    k = np.einsum("jpd,iqd->ijpq", b, a)
    sv = np.linalg.svd(k, compute_uv=False)
    det = _det3(k)
    sign = np.where(np.abs(det) < DEGENERATE_DET_TOL, 1.0, np.sign(det))
    r = (
        _sqnorm(a)[:, None]
        + _sqnorm(b)[None, :]
        - 2.0 * (sv[..., 0] + sv[..., 1] + sign * sv[..., 2])
    )
    return np.maximum(r, 0.0)


def paired_align(a, b):
    """Optimal rotations aligning a_i onto b_i.

    Returns ``(rot, r, degenerate)`` where ``rot[i]`` minimizes
    ``||R a_i - b_i||_F^2`` over SO(3), ``r[i]`` is that minimum as achieved
    by ``rot[i]``, and ``degenerate[i]`` marks a rank-deficient
    cross-covariance (rotation not unique; ties broken toward sign +1).
    """
    a, b = _as_stack(a), _as_stack(b)
    k = np.einsum("...pd,...qd->...pq", b, a)
    u, sv, vt = np.linalg.svd(k)
    det = _det3(k)
    degenerate = np.abs(det) < DEGENERATE_DET_TOL
    sign = np.where(degenerate, 1.0, np.sign(det))
    # At rank <= 2 the third singular pair is a free sign choice; flip one
    # side when needed so det(R) = +1 survives the forced sign = +1.
    flip = degenerate & (_det3(u) * _det3(vt) < 0.0)
    if np.any(flip):
        u = u.copy()
        u[flip, :, 2] *= -1.0
    vt = vt.copy()
    vt[..., 2, :] *= sign[..., None]
    rot = u @ vt
    r = _sqnorm(a) + _sqnorm(b) - 2.0 * np.einsum("...pq,...pq->...", rot, k)
    return rot, np.maximum(r, 0.0), degenerate


def paired_grad(a, b):
    """Gradient of r(a_i, b_i) in its first argument: 2 (a_i - R^T b_i).

    Returns ``(grad, r, degenerate)``.
    """
    rot, r, degenerate = paired_align(a, b)
    grad = 2.0 * (a - np.einsum("...qp,...qd->...pd", rot, _as_stack(b)))
    return grad, r, degenerate
