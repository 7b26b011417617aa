"""Independent reference implementations used only to check the package.

Everything here is deliberately self-contained (plain numpy, no imports from
viewconsist's math modules) so the tests compare two independent routes to
the same quantities.
"""

import numpy as np


def centered(arr):
    arr = np.asarray(arr, dtype=np.float64)
    return arr - arr.mean(axis=1, keepdims=True)


def random_config(rng, d):
    return centered(rng.normal(size=(3, d)))


def sample_rotations(n, rng):
    """n quasi-uniform rotations via uniform quaternions (Shoemake)."""
    u1, u2, u3 = rng.random((3, n))
    a, b = np.sqrt(1.0 - u1), np.sqrt(u1)
    qw = a * np.sin(2 * np.pi * u2)
    qx = a * np.cos(2 * np.pi * u2)
    qy = b * np.sin(2 * np.pi * u3)
    qz = b * np.cos(2 * np.pi * u3)
    rot = np.empty((n, 3, 3))
    rot[:, 0, 0] = 1 - 2 * (qy * qy + qz * qz)
    rot[:, 0, 1] = 2 * (qx * qy - qz * qw)
    rot[:, 0, 2] = 2 * (qx * qz + qy * qw)
    rot[:, 1, 0] = 2 * (qx * qy + qz * qw)
    rot[:, 1, 1] = 1 - 2 * (qx * qx + qz * qz)
    rot[:, 1, 2] = 2 * (qy * qz - qx * qw)
    rot[:, 2, 0] = 2 * (qx * qz - qy * qw)
    rot[:, 2, 1] = 2 * (qy * qz + qx * qw)
    rot[:, 2, 2] = 1 - 2 * (qx * qx + qy * qy)
    return rot


def random_rotation(rng):
    return sample_rotations(1, rng)[0]


def grid_min_residual(x, y, rotations):
    """min over the supplied rotations of ||R x - y||_F^2."""
    diff = rotations @ x - y
    return float(np.einsum("npd,npd->n", diff, diff).min())


def grid_resolution_bound(x, y, n_rotations):
    """Upper bound on grid-min minus true-min for a quasi-uniform grid.

    The residual is quadratic in the angle to the optimum with curvature at
    most ~2 ||x|| ||y||; a quasi-uniform grid of n rotations has typical
    nearest-neighbour angle ~(pi^2 / n)^(1/3).  The constant 6 gives slack
    for sampling fluctuations.
    """
    delta = (np.pi**2 / n_rotations) ** (1.0 / 3.0)
    return 6.0 * np.linalg.norm(x) * np.linalg.norm(y) * delta**2


def kabsch(x, y):
    """Reference optimal rotation: argmin ||R x - y||_F over SO(3)."""
    k = y @ x.T
    u, _, vt = np.linalg.svd(k)
    d = np.diag([1.0, 1.0, np.sign(np.linalg.det(u) * np.linalg.det(vt))])
    return u @ d @ vt


def sqdist(x, y):
    """Reference squared pose distance via the reference rotation."""
    r = kabsch(x, y)
    return float(np.linalg.norm(r @ x - y) ** 2)


def central_difference(fun, x, step=1e-5):
    """Central finite-difference gradient of a scalar function of an array."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    while not it.finished:
        idx = it.multi_index
        hi = x.copy()
        hi[idx] += step
        lo = x.copy()
        lo[idx] -= step
        grad[idx] = (fun(hi) - fun(lo)) / (2.0 * step)
        it.iternext()
    return grad


def relative_errors(analytic, numeric, floor=1e-8):
    """Entrywise |a - b| / max(|a|, |b|, floor)."""
    analytic = np.asarray(analytic)
    numeric = np.asarray(numeric)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / denom


def altmin_quotient_mean(ys, weights, init_rotations, iters=200):
    """Independent alternating minimization for the weighted quotient mean.

    Starts from the supplied per-config rotations, alternates exact mean and
    Kabsch steps, and returns the final mean estimate.
    """
    ys = np.asarray(ys, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    aligned = np.einsum("nqp,nqd->npd", init_rotations, ys)
    x = np.einsum("n,npd->pd", w, aligned) / w.sum()
    for _ in range(iters):
        rots = np.stack([kabsch(x, y) for y in ys])
        aligned = np.einsum("nqp,nqd->npd", rots, ys)
        x = np.einsum("n,npd->pd", w, aligned) / w.sum()
    return x


def quotient_objective(x, ys, weights):
    """sum_i w_i r(x, Y_i) via the reference distance."""
    return float(sum(w * sqdist(x, y) for w, y in zip(weights, ys)))
