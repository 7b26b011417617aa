"""Geometric alignment between source labels and target latent configurations.

All comparisons use the squared pose-invariant distance r, so every term here
is blind to per-object orientation.  The two-sided Chamfer construction makes
the alignment insensitive to how often a shape is repeated on either side,
which is the property that lets imbalanced sub-type mixtures align sanely.
"""

import numpy as np

from . import backend
from .errors import InvalidInputError
from .procrustes import CENTERING_TOL, KeypointConfig, as_coords
from .quotient_mean import WeightedConfigSet, quotient_weighted_mean

SIGMA_FLOOR = 1e-8

#: sigma conventions for the density bandwidth: "sigma-squared" reads the
#: mean nearest-label r as sigma^2 (dimensionally consistent, the default);
#: "sigma" reads it as sigma itself.
SIGMA_CONVENTIONS = ("sigma-squared", "sigma")


class _ConfigStack:
    """Base for ordered collections of centered configurations."""

    _role = "config"

    def __init__(self, configs):
        if isinstance(configs, np.ndarray) and configs.ndim == 3:
            stacked = np.array(configs, dtype=np.float64, order="C")
        else:
            coords = [as_coords(c) for c in configs]
            if not coords:
                raise InvalidInputError(f"{self._role} set must be nonempty")
            try:
                stacked = np.stack(coords)
            except ValueError:
                raise InvalidInputError(
                    f"{self._role} set must share the keypoint count d"
                ) from None
        if stacked.shape[0] == 0:
            raise InvalidInputError(f"{self._role} set must be nonempty")
        if stacked.shape[1] != 3 or stacked.shape[2] < 2:
            raise InvalidInputError(
                f"expected (n, 3, d >= 2) configurations, got {stacked.shape}"
            )
        if not np.all(np.isfinite(stacked)):
            raise InvalidInputError(f"{self._role} set has non-finite entries")
        if np.max(np.abs(stacked.sum(axis=2))) > CENTERING_TOL:
            raise InvalidInputError(f"{self._role} set contains uncentered entries")
        stacked.flags.writeable = False
        self.stacked = stacked

    def __len__(self) -> int:
        return self.stacked.shape[0]

    def __getitem__(self, i) -> KeypointConfig:
        return KeypointConfig(self.stacked[i])

    @property
    def d(self) -> int:
        return self.stacked.shape[2]


class LabelBank(_ConfigStack):
    """The source-domain ground-truth configurations."""

    _role = "label"

    @property
    def labels(self):
        return [self[i] for i in range(len(self))]


class LatentSet(_ConfigStack):
    """One latent canonical-frame configuration per target object."""

    _role = "latent"

    @property
    def latents(self):
        return [self[i] for i in range(len(self))]


def _coerce(obj, cls):
    return obj if isinstance(obj, cls) else cls(obj)


def _check_shared_d(a, b):
    if a.d != b.d:
        raise InvalidInputError(f"keypoint counts differ: {a.d} vs {b.d}")


def _distinct(stack: np.ndarray) -> np.ndarray:
    """Distinct members of a configuration stack (exact equality)."""
    flat = np.unique(stack.reshape(stack.shape[0], -1), axis=0)
    return flat.reshape(-1, *stack.shape[1:])


def chamfer_alignment(latents, bank) -> float:
    """Two-sided nearest-neighbour alignment in the quotient metric.

    Averages, over each latent, its distance to the closest label, plus the
    symmetric term over labels.  Both sides enter as sets of distinct
    configurations, so the value depends only on which shapes are present,
    never on repetition counts; this makes the duplication-insensitivity that
    motivates Chamfer over earth-mover exact.
    """
    latents = _coerce(latents, LatentSet)
    bank = _coerce(bank, LabelBank)
    _check_shared_d(latents, bank)
    dist = backend.pairwise_sqdist(_distinct(latents.stacked), _distinct(bank.stacked))
    return float(dist.min(axis=1).mean() + dist.min(axis=0).mean())


def _stack_predictions(predictions):
    if isinstance(predictions, np.ndarray) and predictions.ndim == 3:
        preds = np.ascontiguousarray(predictions, dtype=np.float64)
    else:
        coords = [as_coords(p) for p in predictions]
        if not coords:
            raise InvalidInputError("prediction set must be nonempty")
        preds = np.stack(coords)
    if preds.shape[0] == 0:
        raise InvalidInputError("prediction set must be nonempty")
    return preds


def estimate_sigma(
    predictions, bank, convention: str = "sigma-squared", floor: float = SIGMA_FLOOR
) -> float:
    """Density bandwidth from the mean nearest-label distance.

    Under the default convention the mean of min_I r(prediction, Y_I) is read
    as sigma^2, so the density exponent r / (2 sigma^2) is dimensionless.  The
    result is floored at ``floor`` to stay strictly positive.
    """
    if convention not in SIGMA_CONVENTIONS:
        raise InvalidInputError(f"unknown sigma convention {convention!r}")
    bank = _coerce(bank, LabelBank)
    preds = _stack_predictions(predictions)
    mins = backend.pairwise_sqdist(preds, bank.stacked).min(axis=1)
    # distances below the indiscernibility threshold are exact matches
    mins[mins < 1e-12] = 0.0
    mean_min = float(mins.mean())
    sigma = np.sqrt(mean_min) if convention == "sigma-squared" else mean_min
    return float(max(sigma, floor))


def density_score(config, bank, sigma: float) -> float:
    """Un-normalized label-density at a configuration: sum of exp(-r / 2 sigma^2)."""
    if not sigma > 0.0:
        raise InvalidInputError("sigma must be positive")
    bank = _coerce(bank, LabelBank)
    coords = as_coords(config)
    dist = backend.pairwise_sqdist(coords[None], bank.stacked)[0]
    return float(np.exp(-dist / (2.0 * sigma * sigma)).sum())


def _per_object_stacks(per_object_predictions, d=None):
    stacks = []
    for i, preds in enumerate(per_object_predictions):
        arr = _stack_predictions(preds)
        if arr.shape[0] < 1:
            raise InvalidInputError(f"object {i} has no predictions")
        if d is not None and arr.shape[2] != d:
            raise InvalidInputError(f"object {i} predictions have d={arr.shape[2]}, expected {d}")
        stacks.append(arr)
    if not stacks:
        raise InvalidInputError("need predictions for at least one object")
    return stacks


def init_latents(
    per_object_predictions, bank, convention: str = "sigma-squared"
) -> LatentSet:
    """Initialize each latent as its object's highest-density view prediction.

    The bandwidth is estimated once from all predictions pooled; ties go to
    the lowest view index.
    """
    bank = _coerce(bank, LabelBank)
    stacks = _per_object_stacks(per_object_predictions, bank.d)
    pooled = np.concatenate(stacks, axis=0)
    sigma = estimate_sigma(pooled, bank, convention=convention)
    dist = backend.pairwise_sqdist(pooled, bank.stacked)
    scores = np.exp(-dist / (2.0 * sigma * sigma)).sum(axis=1)
    chosen = []
    offset = 0
    for arr in stacks:
        best = int(np.argmax(scores[offset : offset + arr.shape[0]]))
        chosen.append(arr[best])
        offset += arr.shape[0]
    return LatentSet(np.stack(chosen))


def update_latents(
    latents,
    bank,
    per_object_predictions,
    lam: float,
    mu: float,
    max_iters: int = 100,
    tol: float = 1e-10,
) -> LatentSet:
    """One majorize-minimize step on the latent configurations.

    Nearest-pair assignments (closest label per latent, closest latent per
    label) are frozen at the current latents; each latent is then re-solved as
    a weighted quotient mean of its own view predictions (weight lam / (N
    |views|) each), the labels assigned to it (weight mu / |bank| each) and
    its closest label (weight mu / N).  Warm-starting the solve at the current
    latent guarantees the frozen-assignment objective never increases, hence
    neither does the freshly-minimized one.
    """
    if lam < 0.0 or mu < 0.0:
        raise InvalidInputError("lam and mu must be nonnegative")
    if lam == 0.0 and mu == 0.0:
        raise InvalidInputError(
            "lam = mu = 0 leaves the latent objective constant; nothing to update"
        )
    latents = _coerce(latents, LatentSet)
    bank = _coerce(bank, LabelBank)
    _check_shared_d(latents, bank)
    stacks = _per_object_stacks(per_object_predictions, latents.d)
    n = len(latents)
    if len(stacks) != n:
        raise InvalidInputError(
            f"{n} latents but predictions for {len(stacks)} objects"
        )
    m = len(bank)

    dist = backend.pairwise_sqdist(latents.stacked, bank.stacked)
    closest_label = dist.argmin(axis=1)  # per latent
    closest_latent = dist.argmin(axis=0)  # per label

    updated = np.empty_like(latents.stacked)
    for i in range(n):
        configs = []
        weights = []
        if lam > 0.0:
            v = stacks[i].shape[0]
            configs.extend(stacks[i])
            weights.extend([lam / (n * v)] * v)
        if mu > 0.0:
            for label_idx in np.flatnonzero(closest_latent == i):
                configs.append(bank.stacked[label_idx])
                weights.append(mu / m)
            configs.append(bank.stacked[closest_label[i]])
            weights.append(mu / n)
        mean, _ = quotient_weighted_mean(
            WeightedConfigSet(configs, weights),
            max_iters=max_iters,
            tol=tol,
            init=latents.stacked[i],
        )
        # the solve returns an arbitrary orbit representative; anchor it to
        # the previous latent's frame so updates are ambient no-ops at fixed
        # points (the objective is gauge-invariant either way)
        anchor, _, _ = backend.paired_align(
            mean.coords[None], latents.stacked[i][None]
        )
        updated[i] = anchor[0] @ mean.coords
    return LatentSet(updated)


def latent_objective(latents, bank, per_object_predictions, lam: float, mu: float) -> float:
    """The latent-stage objective with freshly minimized assignments.

    Equals lam times the mean per-view distance to the object latents plus mu
    times the Chamfer alignment; update_latents never increases it.
    """
    latents = _coerce(latents, LatentSet)
    bank = _coerce(bank, LabelBank)
    stacks = _per_object_stacks(per_object_predictions, latents.d)
    if len(stacks) != len(latents):
        raise InvalidInputError(
            f"{len(latents)} latents but predictions for {len(stacks)} objects"
        )
    view_term = 0.0
    for i, arr in enumerate(stacks):
        tiled = np.broadcast_to(latents.stacked[i], arr.shape)
        view_term += float(backend.paired_sqdist(arr, tiled).mean())
    view_term /= len(stacks)
    return lam * view_term + mu * chamfer_alignment(latents, bank)
