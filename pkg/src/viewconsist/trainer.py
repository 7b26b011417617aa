"""Source pretraining and the alternating adaptation loop.

The adaptation objective combines the labeled regression loss on the source
domain, a view-consistency term tying target predictions to per-object latent
configurations through the pose-invariant distance, and a Chamfer alignment
term between the latents and the source labels.  Network parameters and
latents are optimized alternately: minibatch SGD updates the parameters with
latents fixed, and every few epochs the latents are re-solved (one
majorize-minimize step) with the parameters fixed.

Each epoch interleaves source and target minibatches in a seeded shuffle;
every batch contributes only its own term's gradient, scaled so the expected
step targets the full two-dataset objective.
"""

import json
import time
from dataclasses import dataclass, field, fields
from enum import Enum

import numpy as np

from . import backend
from .alignment import (
    LabelBank,
    LatentSet,
    chamfer_alignment,
    init_latents,
    latent_objective,
    update_latents,
)
from .errors import InvalidInputError, InvalidStateError
from .predictor import (
    ParamGrads,
    PredictorParams,
    SgdConfig,
    backward_batch,
    forward_batch,
    init_params,
    sgd_step,
    zeros_like_params,
)

LATENTS_FORMAT = "viewconsist-latents"
LATENTS_VERSION = 1


class Ablation(str, Enum):
    FULL = "full"
    DROP_VIEW = "drop_view"
    DROP_ALIGN = "drop_align"
    REINIT_LATENTS = "reinit_latents"


@dataclass
class TrainConfig:
    """Hyperparameters for pretraining and adaptation."""

    lam: float = 1.0
    mu: float = 0.1
    latent_update_period_epochs: int = 5
    pretrain_epochs: int = 120
    adapt_epochs: int = 100
    ablation: Ablation = Ablation.FULL
    seed: int = 0
    hidden_dims: tuple = (64,)
    sigma_convention: str = "sigma-squared"
    sgd: SgdConfig = field(default_factory=SgdConfig)

    def __post_init__(self):
        if self.lam < 0.0 or self.mu < 0.0:
            raise InvalidInputError("lam and mu must be nonnegative")
        if self.latent_update_period_epochs < 1:
            raise InvalidInputError("latent_update_period_epochs must be positive")
        if self.pretrain_epochs < 1 or self.adapt_epochs < 1:
            raise InvalidInputError("epoch counts must be positive")
        self.ablation = Ablation(self.ablation)
        self.hidden_dims = tuple(int(h) for h in self.hidden_dims)
        if isinstance(self.sgd, dict):
            self.sgd = SgdConfig(**self.sgd)

    def effective_weights(self):
        """(lam, mu) with the ablated term zeroed out."""
        lam = 0.0 if self.ablation is Ablation.DROP_VIEW else self.lam
        mu = 0.0 if self.ablation is Ablation.DROP_ALIGN else self.mu
        return lam, mu

    def to_dict(self) -> dict:
        out = {f.name: getattr(self, f.name) for f in fields(self) if f.name != "sgd"}
        out["ablation"] = self.ablation.value
        out["hidden_dims"] = list(self.hidden_dims)
        out["sgd"] = {f.name: getattr(self.sgd, f.name) for f in fields(SgdConfig)}
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise InvalidInputError(f"unknown TrainConfig keys: {sorted(unknown)}")
        kwargs = dict(data)
        if "hidden_dims" in kwargs:
            kwargs["hidden_dims"] = tuple(kwargs["hidden_dims"])
        if "sgd" in kwargs and isinstance(kwargs["sgd"], dict):
            sgd_known = {f.name for f in fields(SgdConfig)}
            sgd_unknown = set(kwargs["sgd"]) - sgd_known
            if sgd_unknown:
                raise InvalidInputError(f"unknown SgdConfig keys: {sorted(sgd_unknown)}")
            kwargs["sgd"] = SgdConfig(**kwargs["sgd"])
        return cls(**kwargs)


@dataclass
class TrainState:
    """Joint optimization state: parameters, latents, optimizer and RNG."""

    params: PredictorParams
    latents: LatentSet | None
    velocity: ParamGrads
    epoch: int
    rng: np.random.Generator


class RunLog:
    """Line-delimited JSON run log, kept in memory and optionally on disk."""

    def __init__(self, path=None):
        self.records = []
        self._fh = open(path, "w", encoding="utf-8") if path else None

    def write(self, **record):
        self.records.append(record)
        if self._fh is not None:
            self._fh.write(json.dumps(record, sort_keys=True) + "\n")
            self._fh.flush()

    def close(self):
        if self._fh is not None:
            self._fh.close()
            self._fh = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def _check_source(source):
    if len(source) == 0:
        raise InvalidInputError("labeled dataset is empty")


def labeled_loss(params: PredictorParams, source) -> float:
    """Mean squared Frobenius regression error over the labeled set."""
    _check_source(source)
    preds = forward_batch(params, source.inputs)
    diff = preds - source.labels
    return float(np.einsum("npd,npd->", diff, diff) / len(source))


def _flatten_targets(targets):
    if not targets:
        raise InvalidInputError("need at least one target object")
    counts = np.array([len(vs) for vs in targets], dtype=np.int64)
    if np.any(counts < 1):
        raise InvalidInputError("every target object needs at least one view")
    inputs = np.concatenate([vs.inputs for vs in targets], axis=0)
    obj_idx = np.repeat(np.arange(len(targets)), counts)
    offsets = np.concatenate([[0], np.cumsum(counts)[:-1]])
    return inputs, obj_idx, counts, offsets


def _view_loss_from_preds(preds, latents: LatentSet, obj_idx, counts, offsets) -> float:
    dists = backend.paired_sqdist(preds, latents.stacked[obj_idx])
    per_object = np.add.reduceat(dists, offsets) / counts
    return float(per_object.mean())


def view_consistency_loss(params: PredictorParams, targets, latents) -> float:
    """Mean per-view pose distance between predictions and object latents."""
    inputs, obj_idx, counts, offsets = _flatten_targets(targets)
    preds = forward_batch(params, inputs)
    return _view_loss_from_preds(preds, latents, obj_idx, counts, offsets)


def loss_components(params, source, targets, latents, bank=None):
    """(f_labeled, f_view, f_align) with no ablation weighting applied."""
    if bank is None:
        bank = LabelBank(source.labels)
    f_labeled = labeled_loss(params, source)
    f_view = view_consistency_loss(params, targets, latents)
    f_align = chamfer_alignment(latents, bank)
    return f_labeled, f_view, f_align


def total_loss(params, source, targets, latents, cfg: TrainConfig) -> float:
    """f_labeled + lam f_view + mu f_align, with ablated terms zeroed."""
    lam, mu = cfg.effective_weights()
    f_labeled, f_view, f_align = loss_components(params, source, targets, latents)
    return f_labeled + lam * f_view + mu * f_align


def _seed_streams(cfg: TrainConfig):
    init_ss, pretrain_ss, adapt_ss = np.random.SeedSequence(cfg.seed).spawn(3)
    return init_ss, pretrain_ss, adapt_ss


def pretrain(source, cfg: TrainConfig, log: RunLog | None = None) -> PredictorParams:
    """Minibatch SGD on the labeled regression loss; returns the parameters."""
    _check_source(source)
    init_ss, shuffle_ss, _ = _seed_streams(cfg)
    params = init_params(
        source.inputs.shape[1],
        cfg.hidden_dims,
        source.labels.shape[2],
        np.random.default_rng(init_ss),
    )
    velocity = zeros_like_params(params)
    rng = np.random.default_rng(shuffle_ss)
    n = len(source)
    batch = cfg.sgd.batch_size
    for epoch in range(1, cfg.pretrain_epochs + 1):
        started = time.perf_counter()
        lr = cfg.sgd.lr_at(epoch)
        perm = rng.permutation(n)
        for lo in range(0, n, batch):
            idx = perm[lo : lo + batch]
            x, y = source.inputs[idx], source.labels[idx]
            preds = forward_batch(params, x)
            out_grad = (2.0 / idx.size) * (preds - y)
            grads = backward_batch(params, x, out_grad)
            sgd_step(params, grads, velocity, cfg.sgd, lr=lr)
        if log is not None:
            f_labeled = labeled_loss(params, source)
            log.write(
                event="epoch",
                phase="pretrain",
                epoch=epoch,
                f_labeled=f_labeled,
                total=f_labeled,
                wall_time_s=time.perf_counter() - started,
            )
    return params


def init_state(params: PredictorParams, source, targets, cfg: TrainConfig) -> TrainState:
    """Adaptation state with density-initialized latents and a fresh RNG."""
    _check_source(source)
    inputs, obj_idx, counts, offsets = _flatten_targets(targets)
    preds = forward_batch(params, inputs)
    per_object = [preds[o : o + c] for o, c in zip(offsets, counts)]
    latents = init_latents(
        per_object, LabelBank(source.labels), convention=cfg.sigma_convention
    )
    _, _, adapt_ss = _seed_streams(cfg)
    return TrainState(
        params=params,
        latents=latents,
        velocity=zeros_like_params(params),
        epoch=0,
        rng=np.random.default_rng(adapt_ss),
    )


def adapt(state: TrainState, source, targets, cfg: TrainConfig, log: RunLog | None = None) -> TrainState:
    """Run the alternating adaptation loop for cfg.adapt_epochs epochs.

    Every epoch applies interleaved source/target minibatch SGD to the
    parameters with the latents fixed; at the end of every
    ``latent_update_period_epochs``-th epoch the latents are re-solved from
    fresh full-dataset predictions (skipped when the view term is ablated:
    with lam = 0 the latents cannot influence the parameters).
    """
    if state.latents is None:
        raise InvalidStateError("latents are uninitialized; call init_state first")
    lam, mu = cfg.effective_weights()
    if lam == 0.0 and mu == 0.0:
        raise InvalidInputError(
            "lam = mu = 0 provides no adaptation signal; rejecting the run"
        )
    _check_source(source)
    bank = LabelBank(source.labels)
    tgt_inputs, obj_idx, counts, offsets = _flatten_targets(targets)
    if len(state.latents) != len(targets):
        raise InvalidStateError("latent count does not match the target objects")
    n_src, n_tgt = len(source), tgt_inputs.shape[0]
    n_obj = len(targets)
    # per-sample scaling so uniform view sampling still targets the
    # (1/N) sum_i (1/|views_i|) normalization when view counts differ
    sample_w = n_tgt / (n_obj * counts.astype(np.float64))
    batch = cfg.sgd.batch_size

    for _ in range(cfg.adapt_epochs):
        epoch = state.epoch + 1
        started = time.perf_counter()
        lr = cfg.sgd.lr_at(epoch)
        src_perm = state.rng.permutation(n_src)
        tgt_perm = state.rng.permutation(n_tgt)
        batches = [("src", src_perm[lo : lo + batch]) for lo in range(0, n_src, batch)]
        batches += [("tgt", tgt_perm[lo : lo + batch]) for lo in range(0, n_tgt, batch)]
        for bi in state.rng.permutation(len(batches)):
            kind, idx = batches[bi]
            if kind == "src":
                x, y = source.inputs[idx], source.labels[idx]
                preds = forward_batch(state.params, x)
                out_grad = (2.0 / idx.size) * (preds - y)
            else:
                x = tgt_inputs[idx]
                preds = forward_batch(state.params, x)
                if lam > 0.0:
                    grad, _, _ = backend.paired_grad(
                        preds, state.latents.stacked[obj_idx[idx]]
                    )
                    out_grad = (lam / idx.size) * sample_w[obj_idx[idx], None, None] * grad
                else:
                    out_grad = np.zeros_like(preds)
            grads = backward_batch(state.params, x, out_grad)
            sgd_step(state.params, grads, state.velocity, cfg.sgd, lr=lr)
        state.epoch = epoch

        tgt_preds = forward_batch(state.params, tgt_inputs)
        f_labeled = labeled_loss(state.params, source)
        f_view = _view_loss_from_preds(tgt_preds, state.latents, obj_idx, counts, offsets)
        f_align = chamfer_alignment(state.latents, bank)
        if log is not None:
            log.write(
                event="epoch",
                phase="adapt",
                epoch=epoch,
                f_labeled=f_labeled,
                f_view=f_view,
                f_align=f_align,
                total=f_labeled + lam * f_view + mu * f_align,
                wall_time_s=time.perf_counter() - started,
            )

        if epoch % cfg.latent_update_period_epochs == 0 and cfg.ablation is not Ablation.DROP_VIEW:
            update_started = time.perf_counter()
            per_object = [tgt_preds[o : o + c] for o, c in zip(offsets, counts)]
            before = latent_objective(state.latents, bank, per_object, lam, mu)
            if cfg.ablation is Ablation.REINIT_LATENTS:
                mode = "reinit"
                state.latents = init_latents(
                    per_object, bank, convention=cfg.sigma_convention
                )
            else:
                mode = "mm"
                state.latents = update_latents(state.latents, bank, per_object, lam, mu)
            after = latent_objective(state.latents, bank, per_object, lam, mu)
            if log is not None:
                f_view = _view_loss_from_preds(
                    tgt_preds, state.latents, obj_idx, counts, offsets
                )
                f_align = chamfer_alignment(state.latents, bank)
                log.write(
                    event="latent_update",
                    phase="adapt",
                    epoch=epoch,
                    mode=mode,
                    objective_before=before,
                    objective_after=after,
                    f_labeled=f_labeled,
                    f_view=f_view,
                    f_align=f_align,
                    total=f_labeled + lam * f_view + mu * f_align,
                    wall_time_s=time.perf_counter() - update_started,
                )
    return state


def save_latents(path, latents: LatentSet, object_ids=None) -> None:
    """Byte-stable latent-set file: JSON header line plus raw float64 data."""
    n, _, d = latents.stacked.shape
    if object_ids is None:
        object_ids = list(range(n))
    header = {
        "format": LATENTS_FORMAT,
        "version": LATENTS_VERSION,
        "dtype": "<f8",
        "n": n,
        "d": d,
        "object_ids": [int(i) for i in object_ids],
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8"))
        fh.write(b"\n")
        fh.write(np.ascontiguousarray(latents.stacked, dtype="<f8").tobytes())


def load_latents(path):
    """Read a latent-set file; returns (LatentSet, object_ids)."""
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode("utf-8"))
        if header.get("format") != LATENTS_FORMAT:
            raise InvalidInputError(f"{path} is not a latent-set file")
        n, d = header["n"], header["d"]
        data = fh.read(n * 3 * d * 8)
        if len(data) != n * 3 * d * 8:
            raise InvalidInputError("latent-set file truncated")
    stacked = np.frombuffer(data, dtype="<f8").reshape(n, 3, d).copy()
    return LatentSet(stacked), header["object_ids"]
