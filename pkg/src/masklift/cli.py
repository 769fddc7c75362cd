"""Command-line entry point: ``masklift <stage> ...``.

Every stage reads the scene-directory formats and writes the same artifacts
``masklift run`` writes, so chaining stages reproduces a full run. Parameters
resolve as defaults < ``--config`` JSON < ``MASKLIFT_*`` environment < flags.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import pipeline
from .io import load_labels, load_scene, save_labels
from .labels import PropagationConfig, init_labels, propagate
from .lift import load_mask3d, save_mask3d
from .losses import total_loss
from .reliability import load_stack, save_stack, split_reliable
from .synth import SynthSpec, generate_scene, write_synth_scene


def _add_params(p, *names):
    flags = {
        "n_view": ("--n-view", int, "views sampled per scene"),
        "delta": ("--delta", float, "depth tolerance in meters (default: scene meta.json)"),
        "theta": ("--theta", float, "mask merge overlap threshold"),
        "tau": ("--tau", float, "confidence threshold"),
        "kappa": ("--kappa", float, "variance threshold"),
        "K": ("--K", int, "number of augmented copies"),
        "eta": ("--eta", float, "reliable-label proportion threshold"),
        "lambda_seg": ("--lambda-seg", float, None),
        "lambda_r": ("--lambda-r", float, None),
        "lambda_a": ("--lambda-a", float, None),
        "lambda_m": ("--lambda-m", float, None),
        "rce_log_zero": ("--rce-log-zero", float, "value used for log(0) in RCE"),
        "knn_k": ("--knn-k", int, "neighbours used by the kNN predictor"),
        "temperature": ("--temperature", float, "kNN distance temperature, meters"),
        "knn_seeds": ("--knn-seeds", str, "seed the kNN predictor with 'sparse' or 'init' labels"),
        "aug_seed": ("--aug-seed", int, "augmentation RNG seed"),
        "stack_file": ("--stack-file", str, "external prediction stack (relative to scene dir)"),
    }
    for name in names:
        flag, typ, help_ = flags[name]
        p.add_argument(flag, dest=name, type=typ, default=None, help=help_)


def _config(args, **extra):
    overrides = {k: getattr(args, k) for k in pipeline.RunConfig.field_types() if hasattr(args, k)}
    overrides.update({k: v for k, v in extra.items() if v is not None})
    return pipeline.resolve_config(getattr(args, "config", None), **overrides)


def _emit(text: str, out=None):
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text)
    sys.stdout.write(text)


def cmd_synth(args):
    spec = SynthSpec.from_json(args.spec) if args.spec else SynthSpec()
    if args.seed is not None:
        spec.seed = args.seed
    write_synth_scene(generate_scene(spec), args.out)
    print(json.dumps({"scene": args.out, "spec": spec.to_dict()}, sort_keys=True))
    return 0


def cmd_lift(args):
    cfg = _config(args)
    bundle = load_scene(args.scene)
    masks, idx, delta = pipeline.lift_scene(bundle, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_mask3d(masks, out / "mask3d.bin")
    print(json.dumps({"num_masks": masks.num_masks, "num_points": masks.num_points,
                      "sampled_views": idx, "delta": delta, "theta": cfg.theta}))
    return 0


def cmd_init_labels(args):
    bundle = load_scene(args.scene)
    masks = load_mask3d(args.masks)
    save_labels(init_labels(bundle.sparse, masks), args.out)
    return 0


def cmd_select_reliable(args):
    cfg = _config(args)
    bundle = load_scene(args.scene)
    if args.seeds:
        seeds = load_labels(args.seeds, bundle.num_points, bundle.num_classes)
    else:
        seeds = bundle.sparse
    stack = pipeline.scene_stack(bundle, seeds, cfg, args.scene)
    split = split_reliable(stack, cfg.tau, cfg.kappa)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_stack(stack, out / "stack.bin")
    save_labels(split.hard, out / "reliable.labels")
    print(json.dumps({"reliable": int(split.reliable.sum()), "ambiguous": int((~split.reliable).sum()),
                      "tau": cfg.tau, "kappa": cfg.kappa, "K": stack.K}))
    return 0


def cmd_propagate(args):
    cfg = _config(args)
    sparse = load_labels(args.sparse)
    reliable = load_labels(args.reliable, len(sparse))
    masks = load_mask3d(args.masks)
    save_labels(propagate(sparse, reliable, masks, PropagationConfig(cfg.eta)), args.out)
    return 0


def cmd_losses(args):
    cfg = _config(args)
    sparse = load_labels(args.sparse)
    expanded = load_labels(args.expanded, len(sparse))
    hard = load_labels(args.reliable, len(sparse))
    stack = load_stack(args.stack)
    split = pipeline.split_from_labels(hard, stack)
    report = total_loss(sparse, expanded, split, stack, cfg.weights(), cfg.rce_log_zero)
    _emit(pipeline.dumps(pipeline.loss_report_dict(report)), args.out)
    return 0


def cmd_eval(args):
    if args.scene:
        bundle = load_scene(args.scene)
        gt, C = bundle.gt, bundle.num_classes
        if gt is None:
            raise SystemExit(f"{args.scene} has no gt.labels")
    else:
        if args.gt is None or args.num_classes is None:
            raise SystemExit("eval needs either a scene or --gt and --num-classes")
        C = args.num_classes
        gt = load_labels(args.gt, num_classes=C)
    pred = load_labels(args.pred, len(gt), C)
    _emit(pipeline.dumps(pipeline.eval_report(pred, gt, C)), args.out)
    return 0


def cmd_run(args):
    cfg = _config(args, scenes=args.scenes or None, out_dir=args.out)
    report = pipeline.run_pipeline(cfg, jobs=args.jobs)
    sys.stdout.write(pipeline.dumps(report["aggregate"]))
    for f in report["failed"]:
        print(f"failed: {f['scene']} at {f['stage']}: {f['error']}", file=sys.stderr)
    return 1 if report["failed"] else 0


def cmd_eta_sweep(args):
    cfg = _config(args)
    sweep = pipeline.eta_sweep(args.scenes, args.etas, cfg)
    if args.out:
        Path(args.out).write_text(pipeline.dumps(sweep))
    print(pipeline.format_eta_table(sweep))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="masklift", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic scene directory")
    p.add_argument("--spec", help="SynthSpec JSON file")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("lift", help="back-project and merge 2D masks -> mask3d.bin")
    p.add_argument("scene")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--config")
    _add_params(p, "n_view", "delta", "theta")
    p.set_defaults(func=cmd_lift)

    p = sub.add_parser("init-labels", help="spread sparse annotations over 3D masks")
    p.add_argument("scene")
    p.add_argument("--masks", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_init_labels)

    p = sub.add_parser("select-reliable", help="prediction stack and reliable pseudo labels")
    p.add_argument("scene")
    p.add_argument("--seeds", help="labels file seeding the kNN predictor (default: sparse labels)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--config")
    _add_params(p, "tau", "kappa", "K", "knn_k", "temperature", "aug_seed", "stack_file")
    p.set_defaults(func=cmd_select_reliable)

    p = sub.add_parser("propagate", help="fuse expanded annotations and reliable labels")
    p.add_argument("--sparse", required=True)
    p.add_argument("--reliable", required=True)
    p.add_argument("--masks", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    _add_params(p, "eta")
    p.set_defaults(func=cmd_propagate)

    p = sub.add_parser("losses", help="evaluate the weighted training loss")
    p.add_argument("--sparse", required=True)
    p.add_argument("--expanded", required=True)
    p.add_argument("--reliable", required=True)
    p.add_argument("--stack", required=True)
    p.add_argument("--out")
    p.add_argument("--config")
    _add_params(p, "lambda_seg", "lambda_r", "lambda_a", "lambda_m", "rce_log_zero")
    p.set_defaults(func=cmd_losses)

    p = sub.add_parser("eval", help="mIoU and label statistics")
    p.add_argument("scene", nargs="?")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt")
    p.add_argument("--num-classes", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("run", help="full pipeline over scenes")
    p.add_argument("scenes", nargs="*")
    p.add_argument("--out", help="output directory for artifacts and report.json")
    p.add_argument("--config")
    p.add_argument("--jobs", type=int, default=1)
    _add_params(p, "n_view", "delta", "theta", "tau", "kappa", "K", "eta", "lambda_seg", "lambda_r",
                "lambda_a", "lambda_m", "rce_log_zero", "knn_k", "temperature", "knn_seeds",
                "aug_seed", "stack_file")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("eta-sweep", help="count reliable-branch masks for several eta values")
    p.add_argument("scenes", nargs="+")
    p.add_argument("--etas", type=float, nargs="+", default=[0.3, 0.5, 0.7, 0.9])
    p.add_argument("--out")
    p.add_argument("--config")
    _add_params(p, "n_view", "delta", "theta", "tau", "kappa", "K", "knn_k", "temperature",
                "knn_seeds", "aug_seed", "stack_file")
    p.set_defaults(func=cmd_eta_sweep)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
