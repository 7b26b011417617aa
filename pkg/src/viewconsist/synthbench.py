"""Deterministic synthetic multi-view benchmark with controllable domain shift.

Objects are chair-like skeletons: d = 10 ordered keypoints (4 leg bottoms, 4
seat corners, 2 back-top corners) whose proportions are drawn per sub-type.
The network input for a view is the flattened camera-frame surface cloud: S
points traced along the skeleton's edges, so each surface point is a fixed
convex combination of two keypoints and the clean task is exactly linearly
realizable.  The source domain is clean; the target domain applies input-only
corruption (scale jitter, additive noise, clutter, dropout) and a different
sub-type mixture.  Ground-truth keypoints are never corrupted.

Generation is pure per (seed, model index): every model derives its own
child RNG, so datasets are byte-stable for a given seed.
"""

import json
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .errors import InvalidInputError

DATASET_FORMAT = "viewconsist-dataset"
DATASET_VERSION = 1

_SUBTYPE_NAMES = ("office", "dining", "lounge")

# per sub-type [low, high] ranges for (leg_height, seat_width, seat_depth,
# back_height); lounge chairs are wide and low, office chairs tall-backed
_SUBTYPE_RANGES = (
    ((0.45, 0.60), (0.45, 0.60), (0.45, 0.60), (0.55, 0.75)),
    ((0.50, 0.65), (0.50, 0.65), (0.45, 0.55), (0.35, 0.50)),
    ((0.30, 0.45), (0.70, 0.95), (0.60, 0.80), (0.20, 0.35)),
)

# skeleton edges traced by the surface sampler: legs, seat perimeter, back
# posts, top bar (keypoint indices)
_EDGES = (
    (0, 4), (1, 5), (2, 6), (3, 7),
    (4, 5), (5, 6), (6, 7), (7, 4),
    (4, 8), (5, 9),
    (8, 9),
)


def chair_skeleton(leg_height, seat_width, seat_depth, back_height) -> np.ndarray:
    """Centered 3 x 10 chair skeleton for the given proportions."""
    hw, hd = seat_width / 2.0, seat_depth / 2.0
    corners = [(-hw, -hd), (hw, -hd), (hw, hd), (-hw, hd)]
    pts = [(x, y, 0.0) for x, y in corners]
    pts += [(x, y, leg_height) for x, y in corners]
    pts += [(-hw, -hd, leg_height + back_height), (hw, -hd, leg_height + back_height)]
    skel = np.array(pts, dtype=np.float64).T
    return skel - skel.mean(axis=1, keepdims=True)


def bbox_diagonal(coords: np.ndarray) -> float:
    """Diagonal length of the axis-aligned bounding box of a 3 x d matrix."""
    extent = coords.max(axis=1) - coords.min(axis=1)
    return float(np.sqrt((extent * extent).sum()))


def _edge_weights(n_surface: int, d: int) -> np.ndarray:
    """(S, d) matrix expressing surface points as keypoint combinations."""
    counts = [n_surface // len(_EDGES)] * len(_EDGES)
    for i in range(n_surface % len(_EDGES)):
        counts[i] += 1
    weights = np.zeros((n_surface, d))
    row = 0
    for (a, b), count in zip(_EDGES, counts):
        for k in range(count):
            t = (k + 1.0) / (count + 1.0)
            weights[row, a] = 1.0 - t
            weights[row, b] = t
            row += 1
    return weights


@dataclass(frozen=True)
class ShapeTemplate:
    """Parametric object family: skeleton builder plus surface tracer."""

    name: str = "chair"
    n_keypoints: int = 10
    n_surface_points: int = 96
    source_mixture: tuple = (0.5, 0.3, 0.2)
    target_mixture: tuple = (0.1, 0.3, 0.6)

    def __post_init__(self):
        if self.name != "chair":
            raise InvalidInputError(f"unknown template {self.name!r}")
        if self.n_keypoints != 10:
            raise InvalidInputError("the chair template has d = 10 keypoints")
        if self.n_surface_points < len(_EDGES):
            raise InvalidInputError(
                f"need at least {len(_EDGES)} surface points (one per edge)"
            )
        for mix in (self.source_mixture, self.target_mixture):
            arr = np.asarray(mix, dtype=np.float64)
            if arr.shape != (len(_SUBTYPE_NAMES),) or np.any(arr < 0) or arr.sum() <= 0:
                raise InvalidInputError("mixtures need 3 nonnegative weights")
        object.__setattr__(
            self, "_edge_w", _edge_weights(self.n_surface_points, self.n_keypoints)
        )

    @property
    def d(self) -> int:
        return self.n_keypoints

    @property
    def input_dim(self) -> int:
        return 3 * self.n_surface_points

    def sample_params(self, rng: np.random.Generator, subtype: int) -> np.ndarray:
        ranges = np.asarray(_SUBTYPE_RANGES[subtype])
        return rng.uniform(ranges[:, 0], ranges[:, 1])

    def skeleton(self, params) -> np.ndarray:
        return chair_skeleton(*params)

    def surface(self, skeleton: np.ndarray) -> np.ndarray:
        """(3, S) surface cloud traced along the skeleton's edges."""
        return skeleton @ self._edge_w.T

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "n_keypoints": self.n_keypoints,
            "n_surface_points": self.n_surface_points,
            "source_mixture": list(self.source_mixture),
            "target_mixture": list(self.target_mixture),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ShapeTemplate":
        return _from_dict(cls, data, tuple_fields=("source_mixture", "target_mixture"))


@dataclass(frozen=True)
class DomainShiftConfig:
    """Input-only corruption applied to target views.

    Corruption order: scale jitter, additive noise, clutter, dropout last, so
    ``dropout_rate = 1`` yields all-sentinel inputs regardless of clutter.
    ``noise_std`` is in units of the object's bounding-box diagonal; dropped
    points become the sentinel value 0 (the centroid); clutter overwrites
    randomly chosen input slots with points from an inflated bounding box.
    """

    noise_std: float = 0.055
    dropout_rate: float = 0.05
    clutter_count: int = 1
    scale_jitter: float = 0.22
    subtype_weights: tuple = (0.1, 0.3, 0.6)

    def __post_init__(self):
        if self.noise_std < 0 or self.scale_jitter < 0 or self.scale_jitter >= 1:
            raise InvalidInputError("noise_std >= 0 and 0 <= scale_jitter < 1 required")
        if not 0.0 <= self.dropout_rate <= 1.0:
            raise InvalidInputError("dropout_rate must lie in [0, 1]")
        if self.clutter_count < 0:
            raise InvalidInputError("clutter_count must be nonnegative")
        arr = np.asarray(self.subtype_weights, dtype=np.float64)
        if arr.shape != (len(_SUBTYPE_NAMES),) or np.any(arr < 0) or arr.sum() <= 0:
            raise InvalidInputError("subtype_weights needs 3 nonnegative weights")

    @classmethod
    def none(cls) -> "DomainShiftConfig":
        """A no-op shift (used for clean source generation)."""
        return cls(noise_std=0.0, dropout_rate=0.0, clutter_count=0, scale_jitter=0.0)

    def to_dict(self) -> dict:
        return {
            "noise_std": self.noise_std,
            "dropout_rate": self.dropout_rate,
            "clutter_count": self.clutter_count,
            "scale_jitter": self.scale_jitter,
            "subtype_weights": list(self.subtype_weights),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DomainShiftConfig":
        return _from_dict(cls, data, tuple_fields=("subtype_weights",))


def _from_dict(cls, data, tuple_fields=()):
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise InvalidInputError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    kwargs = {k: (tuple(v) if k in tuple_fields else v) for k, v in data.items()}
    return cls(**kwargs)


@dataclass
class ViewSample:
    """One view of one object; gt_keypoints are centered camera-frame labels."""

    object_id: int
    view_id: int
    domain: str
    subtype: int
    input: np.ndarray  # (F,) flattened corrupted camera-frame surface points
    gt_keypoints: np.ndarray  # (3, d), exact
    diagonal: float  # canonical-frame bounding-box diagonal, shared by views
    camera_rotation: np.ndarray  # (3, 3), diagnostics only


@dataclass
class LabeledDataset:
    """Flat labeled split (the source domain): one record per view."""

    inputs: np.ndarray  # (n, F)
    labels: np.ndarray  # (n, 3, d)
    diagonals: np.ndarray  # (n,)
    object_ids: np.ndarray  # (n,)
    view_ids: np.ndarray  # (n,)
    subtypes: np.ndarray  # (n,)
    cameras: np.ndarray  # (n, 3, 3)
    domain: str = "source"

    def __len__(self) -> int:
        return self.inputs.shape[0]


@dataclass
class ViewSet:
    """All views of one target object; gt is for evaluation only."""

    object_id: int
    subtype: int
    diagonal: float
    inputs: np.ndarray  # (V, F)
    gt_keypoints: np.ndarray  # (V, 3, d)
    cameras: np.ndarray  # (V, 3, 3)

    def __len__(self) -> int:
        return self.inputs.shape[0]


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Uniform random element of SO(3) (Shoemake quaternion method)."""
    u1, u2, u3 = rng.random(3)
    a, b = np.sqrt(1.0 - u1), np.sqrt(u1)
    qw = a * np.sin(2 * np.pi * u2)
    qx = a * np.cos(2 * np.pi * u2)
    qy = b * np.sin(2 * np.pi * u3)
    qz = b * np.cos(2 * np.pi * u3)
    return np.array(
        [
            [1 - 2 * (qy * qy + qz * qz), 2 * (qx * qy - qz * qw), 2 * (qx * qz + qy * qw)],
            [2 * (qx * qy + qz * qw), 1 - 2 * (qx * qx + qz * qz), 2 * (qy * qz - qx * qw)],
            [2 * (qx * qz - qy * qw), 2 * (qy * qz + qx * qw), 1 - 2 * (qx * qx + qy * qy)],
        ]
    )


def _corrupt(points: np.ndarray, diag: float, shift: DomainShiftConfig, rng):
    """Corrupt a (3, S) camera-frame cloud in place-free fashion.

    Scale, noise and dropout draws happen unconditionally, so a zeroed shift
    consumes the same RNG stream as clean source generation and produces
    bit-identical data.
    """
    s = points.shape[1]
    scale = rng.uniform(1.0 - shift.scale_jitter, 1.0 + shift.scale_jitter)
    out = points * scale
    out = out + rng.normal(0.0, 1.0, size=out.shape) * (shift.noise_std * diag)
    if shift.clutter_count > 0:
        slots = rng.choice(s, size=min(shift.clutter_count, s), replace=False)
        lo = out.min(axis=1, keepdims=True)
        hi = out.max(axis=1, keepdims=True)
        span = hi - lo
        junk = rng.uniform(0.0, 1.0, size=(3, slots.size))
        out[:, slots] = lo - 0.1 * span + junk * 1.2 * span
    mask = rng.random(s) < shift.dropout_rate
    out[:, mask] = 0.0
    return out


def _generate_models(template, n_models, views_per_model, mixture, shift, seed, domain):
    if n_models < 1 or views_per_model < 1:
        raise InvalidInputError("need at least one model and one view")
    mix = np.asarray(mixture, dtype=np.float64)
    mix = mix / mix.sum()
    children = np.random.SeedSequence(seed).spawn(n_models)
    samples = []
    for obj_id in range(n_models):
        # separate geometry and corruption streams: ground truth is invariant
        # to the shift configuration by construction
        geo_ss, corrupt_ss = children[obj_id].spawn(2)
        rng = np.random.default_rng(geo_ss)
        corrupt_rng = np.random.default_rng(corrupt_ss)
        subtype = int(rng.choice(len(mix), p=mix))
        params = template.sample_params(rng, subtype)
        skel = template.skeleton(params)
        surf = template.surface(skel)
        diag = bbox_diagonal(skel)
        for view_id in range(views_per_model):
            cam = random_rotation(rng)
            clean = cam @ surf
            corrupted = _corrupt(clean, diag, shift, corrupt_rng)
            samples.append(
                ViewSample(
                    object_id=obj_id,
                    view_id=view_id,
                    domain=domain,
                    subtype=subtype,
                    input=np.ascontiguousarray(corrupted.reshape(-1)),
                    gt_keypoints=cam @ skel,
                    diagonal=diag,
                    camera_rotation=cam,
                )
            )
    return samples


def _samples_to_labeled(samples, domain) -> LabeledDataset:
    return LabeledDataset(
        inputs=np.stack([s.input for s in samples]),
        labels=np.stack([s.gt_keypoints for s in samples]),
        diagonals=np.array([s.diagonal for s in samples]),
        object_ids=np.array([s.object_id for s in samples], dtype=np.int64),
        view_ids=np.array([s.view_id for s in samples], dtype=np.int64),
        subtypes=np.array([s.subtype for s in samples], dtype=np.int64),
        cameras=np.stack([s.camera_rotation for s in samples]),
        domain=domain,
    )


def _samples_to_viewsets(samples) -> list:
    by_object = {}
    for s in samples:
        by_object.setdefault(s.object_id, []).append(s)
    viewsets = []
    for obj_id in sorted(by_object):
        group = sorted(by_object[obj_id], key=lambda s: s.view_id)
        viewsets.append(
            ViewSet(
                object_id=obj_id,
                subtype=group[0].subtype,
                diagonal=group[0].diagonal,
                inputs=np.stack([s.input for s in group]),
                gt_keypoints=np.stack([s.gt_keypoints for s in group]),
                cameras=np.stack([s.camera_rotation for s in group]),
            )
        )
    return viewsets


def generate_source(template, n_models, views_per_model, seed) -> LabeledDataset:
    """Clean labeled views drawn from the source sub-type mixture."""
    samples = _generate_models(
        template, n_models, views_per_model, template.source_mixture,
        DomainShiftConfig.none(), seed, "source",
    )
    return _samples_to_labeled(samples, "source")


def generate_target(template, n_models, views_per_model, shift, seed) -> list:
    """Per-object ViewSets with corrupted inputs and exact hidden labels."""
    samples = _generate_models(
        template, n_models, views_per_model, shift.subtype_weights,
        shift, seed, "target",
    )
    return _samples_to_viewsets(samples)


# ---------------------------------------------------------------------------
# dataset files: line-delimited JSON records plus a manifest


def _sample_record(s: ViewSample) -> dict:
    return {
        "object_id": s.object_id,
        "view_id": s.view_id,
        "domain": s.domain,
        "subtype": s.subtype,
        "input": s.input.tolist(),
        "gt": s.gt_keypoints.tolist(),
        "diag": s.diagonal,
        "camera": s.camera_rotation.tolist(),
    }


def _record_sample(rec: dict) -> ViewSample:
    return ViewSample(
        object_id=rec["object_id"],
        view_id=rec["view_id"],
        domain=rec["domain"],
        subtype=rec["subtype"],
        input=np.asarray(rec["input"], dtype=np.float64),
        gt_keypoints=np.asarray(rec["gt"], dtype=np.float64),
        diagonal=rec["diag"],
        camera_rotation=np.asarray(rec["camera"], dtype=np.float64),
    )


def _labeled_samples(ds: LabeledDataset):
    for i in range(len(ds)):
        yield ViewSample(
            object_id=int(ds.object_ids[i]),
            view_id=int(ds.view_ids[i]),
            domain=ds.domain,
            subtype=int(ds.subtypes[i]),
            input=ds.inputs[i],
            gt_keypoints=ds.labels[i],
            diagonal=float(ds.diagonals[i]),
            camera_rotation=ds.cameras[i],
        )


def _viewset_samples(viewsets):
    for vs in viewsets:
        for v in range(len(vs)):
            yield ViewSample(
                object_id=vs.object_id,
                view_id=v,
                domain="target",
                subtype=vs.subtype,
                input=vs.inputs[v],
                gt_keypoints=vs.gt_keypoints[v],
                diagonal=vs.diagonal,
                camera_rotation=vs.cameras[v],
            )


def write_samples(path, samples) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s in samples:
            fh.write(json.dumps(_sample_record(s), sort_keys=True, separators=(",", ":")))
            fh.write("\n")


def write_labeled(path, ds: LabeledDataset) -> None:
    write_samples(path, _labeled_samples(ds))


def write_viewsets(path, viewsets) -> None:
    write_samples(path, _viewset_samples(viewsets))


def read_samples(path):
    with open(path, "r", encoding="utf-8") as fh:
        return [_record_sample(json.loads(line)) for line in fh if line.strip()]


def load_labeled(path) -> LabeledDataset:
    samples = read_samples(path)
    if not samples:
        raise InvalidInputError(f"{path} holds no samples")
    return _samples_to_labeled(samples, samples[0].domain)


def load_viewsets(path) -> list:
    samples = read_samples(path)
    if not samples:
        raise InvalidInputError(f"{path} holds no samples")
    return _samples_to_viewsets(samples)


def write_manifest(path, template, generation: dict, shift, seed: int) -> None:
    manifest = {
        "format": DATASET_FORMAT,
        "version": DATASET_VERSION,
        "template": template.to_dict(),
        "generation": generation,
        "shift": shift.to_dict(),
        "seed": seed,
    }
    Path(path).write_text(
        json.dumps(manifest, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )


def read_manifest(path) -> dict:
    manifest = json.loads(Path(path).read_text(encoding="utf-8"))
    if manifest.get("format") != DATASET_FORMAT:
        raise InvalidInputError(f"{path} is not a dataset manifest")
    return manifest
