"""Evaluation metrics and reports.

Errors are per-keypoint Euclidean distances between prediction and ground
truth, expressed as a percentage of the object's bounding-box diagonal.  AE
averages them as-is; PAE first applies the Frobenius-optimal rotation of the
prediction onto the ground truth, so it measures shape error with the pose
quotiented out.  Since that rotation optimizes the Frobenius residual rather
than the mean of per-keypoint norms, PAE is an upper bound on the true
pose-minimal mean distance.  Both metrics center their inputs, putting
translation error out of band.
"""

import csv
import json
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError
from .predictor import PredictorParams, forward_batch
from .procrustes import as_coords, optimal_rotation

REPORT_FORMAT = "viewconsist-eval-report"
REPORT_VERSION = 1

DEFAULT_PCK_THRESHOLDS = tuple(np.arange(0.0, 25.0 + 1e-9, 0.5))


def _centered(coords) -> np.ndarray:
    arr = as_coords(coords)
    return arr - arr.mean(axis=1, keepdims=True)


def keypoint_errors(pred, gt, diag: float) -> np.ndarray:
    """Per-keypoint distances as percent of the bounding-box diagonal."""
    if not diag > 0.0:
        raise InvalidInputError("diagonal must be positive")
    p, g = _centered(pred), _centered(gt)
    if p.shape != g.shape:
        raise InvalidInputError(f"configurations must share d: {p.shape} vs {g.shape}")
    return 100.0 * np.linalg.norm(p - g, axis=0) / diag


def average_error(pred, gt, diag: float) -> float:
    """AE: mean per-keypoint distance, percent of the diagonal."""
    return float(keypoint_errors(pred, gt, diag).mean())


def pose_invariant_average_error(pred, gt, diag: float) -> float:
    """PAE: AE after optimally rotating the prediction onto the ground truth.

    The rotation minimizes the Frobenius residual, which can occasionally
    worsen the mean of per-keypoint norms; since the identity is always a
    feasible alignment, the reported value is the better of the two, keeping
    PAE <= AE per sample.
    """
    p, g = _centered(pred), _centered(gt)
    rot = optimal_rotation(p, g)
    rotated = float(keypoint_errors(rot.mat @ p, g, diag).mean())
    return min(rotated, float(keypoint_errors(p, g, diag).mean()))


@dataclass
class SampleEval:
    """Per-view evaluation record."""

    object_id: int
    view_id: int
    ae: float
    pae: float
    keypoint_errors: np.ndarray


@dataclass
class EvalReport:
    """Aggregate evaluation: per-sample errors, means and the PCK curve."""

    samples: list
    mean_ae: float
    mean_pae: float
    pck: list  # (threshold_percent, fraction) pairs
    split: str
    seed: int | None = None
    config: dict | None = None

    def to_json(self) -> str:
        doc = {
            "format": REPORT_FORMAT,
            "version": REPORT_VERSION,
            "split": self.split,
            "seed": self.seed,
            "config": self.config or {},
            "n_samples": len(self.samples),
            "mean_ae": self.mean_ae,
            "mean_pae": self.mean_pae,
            "per_sample": [
                {
                    "object_id": s.object_id,
                    "view_id": s.view_id,
                    "ae": s.ae,
                    "pae": s.pae,
                }
                for s in self.samples
            ],
            "pck": [[t, f] for t, f in self.pck],
        }
        return json.dumps(doc, sort_keys=True, indent=2) + "\n"

    def write(self, report_path, pck_path=None) -> None:
        with open(report_path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json())
        if pck_path is not None:
            with open(pck_path, "w", encoding="utf-8", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(["threshold_percent", "fraction"])
                for t, f in self.pck:
                    writer.writerow([repr(float(t)), repr(float(f))])


def read_report(path) -> dict:
    doc = json.loads(open(path, "r", encoding="utf-8").read())
    if doc.get("format") != REPORT_FORMAT:
        raise InvalidInputError(f"{path} is not an evaluation report")
    return doc


def pck_curve(reports, thresholds=DEFAULT_PCK_THRESHOLDS):
    """Fraction of individual keypoints with error <= t, per threshold.

    ``reports`` is an iterable of SampleEval records (or bare per-keypoint
    error arrays); thresholds must be ascending.
    """
    thresholds = [float(t) for t in thresholds]
    if any(b < a for a, b in zip(thresholds, thresholds[1:])):
        raise InvalidInputError("thresholds must be ascending")
    pools = []
    for rep in reports:
        errs = rep.keypoint_errors if isinstance(rep, SampleEval) else np.asarray(rep)
        pools.append(np.atleast_1d(np.asarray(errs, dtype=np.float64)))
    if not pools:
        raise InvalidInputError("no evaluation records supplied")
    errors = np.concatenate(pools)
    return [(t, float((errors <= t).mean())) for t in thresholds]


def _eval_stream(params, stream):
    samples = []
    for object_id, view_id, x, gt, diag in stream:
        pred = forward_batch(params, np.asarray(x)[None])[0]
        errs = keypoint_errors(pred, gt, diag)
        samples.append(
            SampleEval(
                object_id=int(object_id),
                view_id=int(view_id),
                ae=float(errs.mean()),
                pae=pose_invariant_average_error(pred, gt, diag),
                keypoint_errors=errs,
            )
        )
    return samples


def evaluate_labeled(params: PredictorParams, dataset, thresholds=DEFAULT_PCK_THRESHOLDS,
                     seed=None, config=None) -> EvalReport:
    """Evaluate on a labeled split (source-style flat dataset)."""
    stream = (
        (dataset.object_ids[i], dataset.view_ids[i], dataset.inputs[i],
         dataset.labels[i], float(dataset.diagonals[i]))
        for i in range(len(dataset))
    )
    return _finish_report(_eval_stream(params, stream), dataset.domain, thresholds, seed, config)


def evaluate_viewsets(params: PredictorParams, viewsets, thresholds=DEFAULT_PCK_THRESHOLDS,
                      seed=None, config=None) -> EvalReport:
    """Evaluate on target view sets using their held-back ground truth."""
    stream = (
        (vs.object_id, v, vs.inputs[v], vs.gt_keypoints[v], vs.diagonal)
        for vs in viewsets
        for v in range(len(vs))
    )
    return _finish_report(_eval_stream(params, stream), "target", thresholds, seed, config)


def _finish_report(samples, split, thresholds, seed, config) -> EvalReport:
    if not samples:
        raise InvalidInputError("nothing to evaluate")
    return EvalReport(
        samples=samples,
        mean_ae=float(np.mean([s.ae for s in samples])),
        mean_pae=float(np.mean([s.pae for s in samples])),
        pck=pck_curve(samples, thresholds),
        split=split,
        seed=seed,
        config=config,
    )
