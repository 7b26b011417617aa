"""Command-line interface: gen, pretrain, adapt, eval, report.

A typical run, from an empty directory:

    viewconsist gen      --seed 0 --out run/
    viewconsist pretrain --seed 0 --data run/ --out run/
    viewconsist adapt    --seed 0 --data run/ --init run/pretrained.ckpt --out run/
    viewconsist eval     --data run/ --checkpoint run/pretrained.ckpt \
                         --split target --tag default --out run/
    viewconsist eval     --data run/ --checkpoint run/adapted_full.ckpt \
                         --split target --tag ours --out run/
    viewconsist report   --pair chair run/report_default.json run/report_ours.json

Exit codes: 0 on success, 1 on invalid configuration or runtime failure,
2 on usage errors.  ``--seed`` falls back to the VIEWCONSIST_SEED environment
variable (the flag wins), then to 0.
"""

import argparse
import json
import os
import sys
from pathlib import Path

from .errors import InvalidInputError, InvalidStateError
from .metrics import evaluate_labeled, evaluate_viewsets, read_report
from .predictor import load_checkpoint, save_checkpoint
from .synthbench import (
    DomainShiftConfig,
    ShapeTemplate,
    generate_source,
    generate_target,
    load_labeled,
    load_viewsets,
    read_manifest,
    write_labeled,
    write_manifest,
    write_viewsets,
)
from .trainer import (
    Ablation,
    RunLog,
    TrainConfig,
    adapt,
    init_state,
    pretrain,
    save_latents,
)

DEFAULT_GENERATION = {
    "source_models": 200,
    "source_views": 1,
    "source_test_models": 50,
    "source_test_views": 1,
    "target_models": 40,
    "target_views": 12,
}

_ABLATION_FLAGS = {
    "full": Ablation.FULL,
    "drop-view": Ablation.DROP_VIEW,
    "drop-align": Ablation.DROP_ALIGN,
    "reinit": Ablation.REINIT_LATENTS,
}


def _default_seed() -> int:
    env = os.environ.get("VIEWCONSIST_SEED")
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError:
        raise InvalidInputError(f"VIEWCONSIST_SEED={env!r} is not an integer") from None


def _load_config_file(path):
    if path is None:
        return {}
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise InvalidInputError(f"cannot read config {path}: {exc}") from None
    if not isinstance(data, dict):
        raise InvalidInputError("config file must hold a JSON object")
    unknown = set(data) - {"template", "generation", "shift", "train"}
    if unknown:
        raise InvalidInputError(f"unknown config sections: {sorted(unknown)}")
    return data


def _generation_config(data: dict) -> dict:
    gen = dict(DEFAULT_GENERATION)
    unknown = set(data) - set(gen)
    if unknown:
        raise InvalidInputError(f"unknown generation keys: {sorted(unknown)}")
    gen.update({k: int(v) for k, v in data.items()})
    if any(v < 1 for v in gen.values()):
        raise InvalidInputError("generation counts must be positive")
    return gen


def _train_config(args, config: dict) -> TrainConfig:
    cfg = TrainConfig.from_dict(config.get("train", {}))
    cfg.seed = args.seed
    if getattr(args, "lam", None) is not None:
        cfg.lam = args.lam
    if getattr(args, "mu", None) is not None:
        cfg.mu = args.mu
    if getattr(args, "period", None) is not None:
        cfg.latent_update_period_epochs = args.period
    if getattr(args, "ablation", None) is not None:
        cfg.ablation = _ABLATION_FLAGS[args.ablation]
    return TrainConfig.from_dict(cfg.to_dict())  # re-validate overrides


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _cmd_gen(args) -> int:
    config = _load_config_file(args.config)
    template = ShapeTemplate.from_dict(config.get("template", {}))
    shift = DomainShiftConfig.from_dict(config.get("shift", {}))
    gen = _generation_config(config.get("generation", {}))
    out = _out_dir(args)
    seed_src, seed_test, seed_tgt = args.seed, args.seed + 1_000_000, args.seed + 2_000_000
    write_labeled(
        out / "source_train.jsonl",
        generate_source(template, gen["source_models"], gen["source_views"], seed_src),
    )
    write_labeled(
        out / "source_test.jsonl",
        generate_source(template, gen["source_test_models"], gen["source_test_views"], seed_test),
    )
    write_viewsets(
        out / "target.jsonl",
        generate_target(template, gen["target_models"], gen["target_views"], shift, seed_tgt),
    )
    write_manifest(out / "manifest.json", template, gen, shift, args.seed)
    print(f"wrote benchmark datasets to {out}")
    return 0


def _data_dir(args) -> Path:
    data = Path(args.data)
    if not (data / "manifest.json").exists():
        raise InvalidInputError(f"{data} has no manifest.json; run gen first")
    return data


def _cmd_pretrain(args) -> int:
    config = _load_config_file(args.config)
    cfg = _train_config(args, config)
    data = _data_dir(args)
    source = load_labeled(data / "source_train.jsonl")
    out = _out_dir(args)
    with RunLog(out / "pretrain_log.jsonl") as log:
        params = pretrain(source, cfg, log=log)
    save_checkpoint(out / "pretrained.ckpt", params, seed=cfg.seed,
                    extra={"phase": "pretrain", "train": cfg.to_dict()})
    print(f"wrote {out / 'pretrained.ckpt'}")
    return 0


def _cmd_adapt(args) -> int:
    config = _load_config_file(args.config)
    cfg = _train_config(args, config)
    data = _data_dir(args)
    source = load_labeled(data / "source_train.jsonl")
    targets = load_viewsets(data / "target.jsonl")
    params, _ = load_checkpoint(args.init)
    out = _out_dir(args)
    tag = cfg.ablation.value
    state = init_state(params, source, targets, cfg)
    with RunLog(out / f"adapt_log_{tag}.jsonl") as log:
        state = adapt(state, source, targets, cfg, log=log)
    save_checkpoint(out / f"adapted_{tag}.ckpt", state.params, seed=cfg.seed,
                    extra={"phase": "adapt", "train": cfg.to_dict()})
    save_latents(out / f"latents_{tag}.bin", state.latents,
                 object_ids=[vs.object_id for vs in targets])
    print(f"wrote {out / f'adapted_{tag}.ckpt'}")
    return 0


def _cmd_eval(args) -> int:
    data = _data_dir(args)
    manifest = read_manifest(data / "manifest.json")
    params, header = load_checkpoint(args.checkpoint)
    config_echo = {
        "checkpoint": Path(args.checkpoint).name,
        "dataset_seed": manifest["seed"],
    }
    if args.split == "target":
        report = evaluate_viewsets(params, load_viewsets(data / "target.jsonl"),
                                   seed=header.get("seed"), config=config_echo)
    else:
        report = evaluate_labeled(params, load_labeled(data / f"{args.split}.jsonl"),
                                  seed=header.get("seed"), config=config_echo)
    out = _out_dir(args)
    tag = args.tag or Path(args.checkpoint).stem
    report.write(out / f"report_{tag}.json", out / f"pck_{tag}.csv")
    print(f"{args.split} mean AE {report.mean_ae:.4f}%  mean PAE {report.mean_pae:.4f}%")
    print(f"wrote {out / f'report_{tag}.json'}")
    return 0


def _cmd_report(args) -> int:
    rows = []
    for name, default_path, ours_path in args.pair:
        default = read_report(default_path)
        ours = read_report(ours_path)
        rows.append((name, default["mean_ae"], ours["mean_ae"],
                     default["mean_pae"], ours["mean_pae"]))
    header = ("Run", "Default-AE", "Ours-AE", "Default-PAE", "Ours-PAE")
    widths = [max(len(header[0]), *(len(r[0]) for r in rows))] + [11] * 4
    lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths))]
    for name, dae, oae, dpae, opae in rows:
        lines.append("  ".join([name.ljust(widths[0])] +
                               [f"{v:11.4f}" for v in (dae, oae, dpae, opae)]))
    table = "\n".join(lines) + "\n"
    sys.stdout.write(table)
    if args.out:
        Path(args.out).write_text(table, encoding="utf-8")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="viewconsist",
        description="synthetic multi-view keypoint domain-adaptation benchmark",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_required=True):
        p.add_argument("--seed", type=int, default=None,
                       help="run seed (default: $VIEWCONSIST_SEED or 0)")
        p.add_argument("--config", default=None, help="JSON config file")
        if out_required:
            p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("gen", help="write benchmark datasets")
    common(p)
    p.set_defaults(func=_cmd_gen)

    p = sub.add_parser("pretrain", help="train on the labeled source split")
    common(p)
    p.add_argument("--data", required=True, help="dataset directory from gen")
    p.set_defaults(func=_cmd_pretrain)

    p = sub.add_parser("adapt", help="run the adaptation loop")
    common(p)
    p.add_argument("--data", required=True, help="dataset directory from gen")
    p.add_argument("--init", required=True, help="pretrained checkpoint")
    p.add_argument("--ablation", choices=sorted(_ABLATION_FLAGS), default="full")
    p.add_argument("--lambda", dest="lam", type=float, default=None,
                   help="view-consistency weight")
    p.add_argument("--mu", type=float, default=None, help="alignment weight")
    p.add_argument("--period", type=int, default=None,
                   help="epochs between latent updates")
    p.set_defaults(func=_cmd_adapt)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a split")
    common(p)
    p.add_argument("--data", required=True, help="dataset directory from gen")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", choices=["source_train", "source_test", "target"],
                   default="target")
    p.add_argument("--tag", default=None, help="report file tag")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("report", help="tabulate before/after comparisons")
    p.add_argument("--pair", nargs=3, action="append", required=True,
                   metavar=("NAME", "DEFAULT_REPORT", "OURS_REPORT"),
                   help="a run name plus its baseline and adapted reports")
    p.add_argument("--out", default=None, help="also write the table to a file")
    p.set_defaults(func=_cmd_report)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors and 0 on --help; surface as a code
        return int(exc.code or 0)
    try:
        if getattr(args, "seed", None) is None and hasattr(args, "seed"):
            args.seed = _default_seed()
        return args.func(args)
    except (InvalidInputError, InvalidStateError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
