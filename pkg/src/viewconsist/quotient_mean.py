"""Weighted averaging of keypoint configurations in the SO(3) quotient.

The weighted quotient mean of configurations Y_1..Y_n with weights c_i > 0
minimizes sum_i c_i r(X, Y_i).  It has no closed form but alternation does:
with X fixed each optimal R_i comes from the Procrustes closed form, and with
the R_i fixed the optimum is X = sum_i c_i R_i^T Y_i / sum_i c_i.  Both steps
are exact minimizers, so the joint objective sum_i c_i ||X - R_i^T Y_i||_F^2
never increases.  The problem is non-convex; the result is a local minimum
depending on the start.
"""

from dataclasses import dataclass

import numpy as np

from . import backend
from .errors import InvalidInputError
from .procrustes import KeypointConfig, Rotation, as_coords

DEFAULT_MAX_ITERS = 100
DEFAULT_TOL = 1e-10


@dataclass(frozen=True)
class WeightedConfigSet:
    """Configurations with positive weights, stacked as (n, 3, d)."""

    stacked: np.ndarray
    weights: np.ndarray

    def __init__(self, configs, weights):
        coords = [as_coords(c) for c in configs]
        if not coords:
            raise InvalidInputError("config set must be nonempty")
        try:
            stacked = np.stack(coords)
        except ValueError:
            raise InvalidInputError("configs must share the keypoint count d") from None
        w = np.asarray(weights, dtype=np.float64)
        if w.shape != (stacked.shape[0],):
            raise InvalidInputError(
                f"got {stacked.shape[0]} configs but weight shape {w.shape}"
            )
        if not np.all(np.isfinite(w)) or np.any(w <= 0.0):
            raise InvalidInputError("weights must be finite and positive")
        object.__setattr__(self, "stacked", np.ascontiguousarray(stacked))
        object.__setattr__(self, "weights", w)

    def __len__(self) -> int:
        return self.stacked.shape[0]

    @property
    def d(self) -> int:
        return self.stacked.shape[2]


def _objective(x, aligned, w):
    diff = x[None] - aligned
    return float(np.einsum("n,npd,npd->", w, diff, diff))


def quotient_weighted_mean(
    cset: WeightedConfigSet,
    max_iters: int = DEFAULT_MAX_ITERS,
    tol: float = DEFAULT_TOL,
    init=None,
    history: list | None = None,
):
    """Weighted mean in the quotient space, via alternating minimization.

    Returns ``(mean, rotations)`` where ``rotations[i]`` optimally aligns the
    mean onto the i-th input and ``rotations[0]`` is the identity (the global
    rotation ambiguity is gauged away by expressing the mean in the frame of
    the first configuration).  At termination the mean equals the weighted
    average of the back-rotated inputs up to the convergence tolerance.

    ``init`` optionally overrides the starting configuration (default: the
    input with the largest weight, lowest index on ties).  When ``history``
    is a list, the joint objective value after every half-step is appended,
    which is non-increasing throughout.

    Weights are normalized to unit sum internally (the minimizer is invariant
    to their common scale, and this keeps both the tolerance check and the
    result scale-independent); ``history`` values use the normalized weights.
    """
    if not isinstance(cset, WeightedConfigSet):
        raise InvalidInputError("expected a WeightedConfigSet")
    if max_iters < 1:
        raise InvalidInputError("max_iters must be >= 1")
    if tol <= 0.0:
        raise InvalidInputError("tol must be positive")

    ys = cset.stacked
    n = len(cset)
    w = cset.weights / cset.weights.sum()

    if n == 1:
        # Singleton: the mean is the element itself, in its own frame.
        return KeypointConfig(ys[0].copy()), [Rotation(np.eye(3))]

    if init is None:
        x = ys[int(np.argmax(cset.weights))].copy()
    else:
        x = as_coords(init).copy()
        if x.shape != ys[0].shape:
            raise InvalidInputError("init must share the set's shape")

    def rotation_step(x):
        stack = np.broadcast_to(x, ys.shape)
        rot, r, degenerate = backend.paired_align(stack, ys)
        if history is not None:
            history.append(float(w @ r))
        return rot, float(w @ r), degenerate

    def mean_step(rot):
        aligned = np.einsum("nqp,nqd->npd", rot, ys)
        x = np.einsum("n,npd->pd", w, aligned)
        if history is not None:
            history.append(_objective(x, aligned, w))
        return x

    prev = np.inf
    for _ in range(max_iters):
        rot, obj, degenerate = rotation_step(x)
        x = mean_step(rot)
        if prev - obj < tol:
            break
        prev = obj

    # One more rotation-then-mean pass so the returned pair is mutually
    # consistent: the mean equals the weighted average of the back-rotated
    # inputs under the returned rotations, by construction.
    rot, _, degenerate = rotation_step(x)
    x = mean_step(rot)

    # re-gauge so the first rotation is the identity
    r1 = rot[0]
    x = r1 @ x
    rotations = [Rotation(np.eye(3), degenerate=bool(degenerate[0]))]
    rotations += [
        Rotation(rot[i] @ r1.T, degenerate=bool(degenerate[i])) for i in range(1, n)
    ]
    return KeypointConfig(x), rotations
