"""End-to-end driver: scene directory in, expanded labels and JSON reports out."""
from __future__ import annotations

import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .core import IGNORE
from .evaluation import aggregate_stats, label_stats, miou
from .io import load_scene, save_labels
from .labels import ANNOTATED, RELIABLE, PropagationConfig, init_labels, propagate_branches
from .lift import lift_views, sample_view_indices, save_mask3d
from .losses import LossWeights, total_loss
from .reliability import ReliabilitySplit, build_stack, load_stack, save_stack, split_reliable

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
ENV_PREFIX = "MASKLIFT_"


@dataclass
class RunConfig:
    scenes: list = field(default_factory=list)
    out_dir: str | None = None
    n_view: int = 5
    delta: float | None = None       # None: use the scene's declared delta_depth
    theta: float = 0.3
    tau: float = 0.9
    kappa: float = 0.01
    K: int = 2
    eta: float = 0.7
    lambda_seg: float = 1.0
    lambda_r: float = 1.0
    lambda_a: float = 1.0
    lambda_m: float = 1.0
    rce_log_zero: float = -4.0
    knn_k: int = 8
    temperature: float = 0.1
    knn_seeds: str = "sparse"        # "sparse" or "init"
    aug_seed: int = 0
    stack_file: str | None = None    # per-scene external stack, relative to the scene dir

    def __post_init__(self):
        self.scenes = [str(s) for s in self.scenes]
        self.validate()

    def validate(self):
        if self.n_view < 1:
            raise ValueError("n_view must be >= 1")
        if self.delta is not None and not self.delta > 0:
            raise ValueError("delta must be positive")
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError(f"eta must be in [0, 1], got {self.eta}")
        if self.theta < 0 or self.tau < 0:
            raise ValueError("theta and tau must be >= 0")
        if self.kappa < 0:
            raise ValueError("kappa must be >= 0")
        if self.K < 1 or self.knn_k < 1 or not self.temperature > 0:
            raise ValueError("K and knn_k must be >= 1 and temperature positive")
        if self.knn_seeds not in ("sparse", "init"):
            raise ValueError(f"knn_seeds must be 'sparse' or 'init', got {self.knn_seeds!r}")
        self.weights()

    def weights(self) -> LossWeights:
        return LossWeights(self.lambda_seg, self.lambda_r, self.lambda_a, self.lambda_m)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def field_types(cls) -> dict:
        return {f.name: f.type for f in fields(cls)}

    def updated(self, **overrides) -> "RunConfig":
        known = self.field_types()
        unknown = set(overrides) - set(known)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        d = self.to_dict()
        d.update(overrides)
        return RunConfig(**d)


def _coerce(name: str, raw: str):
    if name == "scenes":
        return [s for s in raw.split(os.pathsep) if s]
    default = getattr(RunConfig(), name)
    if raw.lower() in ("", "none", "null"):
        return None
    if isinstance(default, bool):
        return raw.lower() in ("1", "true", "yes")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float) or name == "delta":
        return float(raw)
    return raw


def resolve_config(config_file=None, env=None, **overrides) -> RunConfig:
    """Defaults, then the JSON config file, then ``MASKLIFT_*`` variables, then explicit overrides."""
    cfg = RunConfig()
    if config_file:
        cfg = cfg.updated(**json.loads(Path(config_file).read_text()))
    env = os.environ if env is None else env
    from_env = {}
    for name in RunConfig.field_types():
        key = ENV_PREFIX + name.upper()
        if key in env:
            from_env[name] = _coerce(name, env[key])
    if from_env:
        cfg = cfg.updated(**from_env)
    overrides = {k: v for k, v in overrides.items() if v is not None}
    return cfg.updated(**overrides) if overrides else cfg


def to_jsonable(obj):
    """Plain-JSON copy: numpy scalars unwrapped, NaN/inf mapped to null."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else None
    return obj


def dumps(obj) -> str:
    return json.dumps(to_jsonable(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def eval_report(pred, gt, num_classes: int) -> dict:
    """mIoU and label statistics of ``pred`` against ``gt``."""
    per_class, mean = miou(pred, gt, num_classes)
    return {"schema_version": SCHEMA_VERSION, "num_classes": num_classes, "miou": mean,
            "per_class_iou": per_class, "stats": label_stats(pred, gt).as_dict()}


def loss_report_dict(report) -> dict:
    return {"schema_version": SCHEMA_VERSION, **report.to_dict()}


def split_from_labels(hard, stack) -> ReliabilitySplit:
    """Rebuild a split from saved hard labels and the stack they came from."""
    hard = np.asarray(hard, dtype=np.int64)
    mean = stack.probs.mean(axis=0)
    return ReliabilitySplit(reliable=hard != IGNORE, hard=hard,
                            soft=mean / mean.sum(axis=1, keepdims=True))


def scene_stack(bundle, seeds, cfg: RunConfig, scene_dir=None):
    if cfg.stack_file:
        path = Path(cfg.stack_file)
        if scene_dir is not None and not path.is_absolute():
            path = Path(scene_dir) / path
        stack = load_stack(path)
        if stack.probs.shape[1:] != (bundle.num_points, bundle.num_classes):
            raise ValueError(f"{path}: stack shape {stack.probs.shape} does not match the scene")
        return stack
    return build_stack(bundle.cloud, seeds, K=cfg.K, aug_seed=cfg.aug_seed, k=cfg.knn_k,
                       temperature=cfg.temperature, num_classes=bundle.num_classes)


def lift_scene(bundle, cfg: RunConfig):
    delta = cfg.delta if cfg.delta is not None else bundle.delta
    idx = sample_view_indices(len(bundle.views), cfg.n_view)
    masks = lift_views(bundle.cloud, [bundle.views[i] for i in idx], delta, cfg.theta, idx)
    return masks, idx, delta


def run_scene(scene_dir, cfg: RunConfig, out_dir=None) -> dict:
    """Run every stage on one scene; write artifacts under ``out_dir`` when given."""
    stage = "load"
    try:
        bundle = load_scene(scene_dir)
        stage = "lift"
        masks, view_idx, delta = lift_scene(bundle, cfg)
        stage = "init-labels"
        init = init_labels(bundle.sparse, masks)
        stage = "select-reliable"
        seeds = bundle.sparse if cfg.knn_seeds == "sparse" else init
        stack = scene_stack(bundle, seeds, cfg, scene_dir)
        split = split_reliable(stack, cfg.tau, cfg.kappa)
        stage = "propagate"
        expanded, branch = propagate_branches(bundle.sparse, split.hard, masks, PropagationConfig(cfg.eta))
        stage = "losses"
        losses = total_loss(bundle.sparse, expanded, split, stack, cfg.weights(), cfg.rce_log_zero)
        stage = "eval"
        report = {
            "scene": str(scene_dir), "name": bundle.name,
            "num_points": bundle.num_points, "num_classes": bundle.num_classes,
            "num_views": len(bundle.views), "sampled_views": view_idx, "delta": delta,
            "num_masks": masks.num_masks,
            "reliable_branch_masks": int(np.count_nonzero(branch == RELIABLE)),
            "annotated_branch_masks": int(np.count_nonzero(branch == ANNOTATED)),
            "losses": loss_report_dict(losses),
            "labels": {},
        }
        if bundle.gt is not None:
            for key, lab in (("sparse", bundle.sparse), ("init", init), ("reliable", split.hard),
                             ("expanded", expanded)):
                report["labels"][key] = label_stats(lab, bundle.gt).as_dict()
            report["eval"] = eval_report(expanded, bundle.gt, bundle.num_classes)
        else:
            for key, lab in (("sparse", bundle.sparse), ("init", init), ("reliable", split.hard),
                             ("expanded", expanded)):
                report["labels"][key] = {"count": int(np.count_nonzero(lab != IGNORE))}

        if out_dir is not None:
            stage = "write"
            out = Path(out_dir)
            out.mkdir(parents=True, exist_ok=True)
            save_mask3d(masks, out / "mask3d.bin")
            save_labels(init, out / "init.labels")
            save_stack(stack, out / "stack.bin")
            save_labels(split.hard, out / "reliable.labels")
            save_labels(expanded, out / "expanded.labels")
            (out / "losses.json").write_text(dumps(loss_report_dict(losses)))
            if "eval" in report:
                (out / "eval.json").write_text(dumps(report["eval"]))
        return {"ok": True, "report": report}
    except Exception as exc:  # a failing scene is recorded, not fatal
        log.warning("scene %s failed at %s: %s", scene_dir, stage, exc)
        return {"ok": False, "failure": {"scene": str(scene_dir), "stage": stage,
                                         "error": f"{type(exc).__name__}: {exc}"}}


def _scene_out_names(scenes) -> list[str]:
    names, seen = [], {}
    for s in scenes:
        base = Path(s).name or "scene"
        n = seen.get(base, 0)
        seen[base] = n + 1
        names.append(base if n == 0 else f"{base}_{n}")
    return names


def _run_one(args):
    scene, cfg_dict, out = args
    return run_scene(scene, RunConfig(**cfg_dict), out)


def run_pipeline(cfg: RunConfig, jobs: int = 1) -> dict:
    """Process every scene in ``cfg.scenes`` and aggregate the results.

    Scenes run in up to ``jobs`` worker processes; results are collected in
    input order so the report does not depend on scheduling.
    """
    outs = [None] * len(cfg.scenes)
    if cfg.out_dir is not None:
        outs = [str(Path(cfg.out_dir) / n) for n in _scene_out_names(cfg.scenes)]
    tasks = [(s, cfg.to_dict(), o) for s, o in zip(cfg.scenes, outs)]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as ex:
            results = list(ex.map(_run_one, tasks))
    else:
        results = [_run_one(t) for t in tasks]

    scenes = [r["report"] for r in results if r["ok"]]
    failed = [r["failure"] for r in results if not r["ok"]]
    report = {"schema_version": SCHEMA_VERSION, "config": cfg.to_dict(), "scenes": scenes,
              "failed": failed, "aggregate": aggregate(scenes)}
    if cfg.out_dir is not None:
        Path(cfg.out_dir).mkdir(parents=True, exist_ok=True)
        (Path(cfg.out_dir) / "report.json").write_text(dumps(report))
    return report


def aggregate(scenes: list) -> dict:
    """Per-label-kind mean count and accuracy across scenes, plus mean mIoU and losses."""
    out = {"num_scenes": len(scenes)}
    if not scenes:
        return out
    from .evaluation import LabelStats

    kinds = {}
    for key in ("sparse", "init", "reliable", "expanded"):
        stats = [s["labels"][key] for s in scenes if "accuracy" in s["labels"].get(key, {})]
        if stats:
            kinds[key] = aggregate_stats([LabelStats(**d) for d in stats])
    out["labels"] = kinds
    mious = [s["eval"]["miou"] for s in scenes if "eval" in s]
    out["miou_expanded"] = float(np.mean(mious)) if mious else None
    out["loss"] = float(np.mean([s["losses"]["value"] for s in scenes]))
    out["num_masks"] = float(np.mean([s["num_masks"] for s in scenes]))
    return out


def eta_sweep(scene_dirs, etas=(0.3, 0.5, 0.7, 0.9), cfg: RunConfig | None = None) -> dict:
    """Propagate with several eta values on fixed inputs; one row per eta.

    Masks and reliable labels are computed once per scene, so rows differ only
    through eta.
    """
    cfg = cfg or RunConfig()
    prepared = []
    for scene_dir in scene_dirs:
        bundle = load_scene(scene_dir)
        masks, _, _ = lift_scene(bundle, cfg)
        seeds = bundle.sparse if cfg.knn_seeds == "sparse" else init_labels(bundle.sparse, masks)
        split = split_reliable(scene_stack(bundle, seeds, cfg, scene_dir), cfg.tau, cfg.kappa)
        prepared.append((bundle, masks, split))
    rows = []
    for eta in etas:
        reliable_masks, stats, mious = 0, [], []
        for bundle, masks, split in prepared:
            expanded, branch = propagate_branches(bundle.sparse, split.hard, masks, PropagationConfig(eta))
            reliable_masks += int(np.count_nonzero(branch == RELIABLE))
            if bundle.gt is not None:
                stats.append(label_stats(expanded, bundle.gt))
                mious.append(miou(expanded, bundle.gt, bundle.num_classes)[1])
        row = {"eta": eta, "reliable_branch_masks": reliable_masks}
        if stats:
            agg = aggregate_stats(stats)
            row.update(count=agg["count"], accuracy=agg["accuracy"], miou=float(np.mean(mious)))
        rows.append(row)
    return {"schema_version": SCHEMA_VERSION, "config": cfg.to_dict(), "rows": rows}


def format_eta_table(sweep: dict) -> str:
    """Text table of the sweep: eta, mIoU of the expanded labels, and label counts."""

    def cell(value, fmt, width):
        return f"{'-' if value is None else format(value, fmt):>{width}}"

    lines = [f"{'eta':>5} {'mIoU (%)':>9} {'reliable masks':>15} {'labels':>10} {'acc (%)':>8}"]
    for r in sweep["rows"]:
        m, acc = r.get("miou"), r.get("accuracy")
        lines.append(" ".join([
            cell(r["eta"], ".1f", 5),
            cell(None if m is None else 100 * m, ".1f", 9),
            cell(r["reliable_branch_masks"], "d", 15),
            cell(r.get("count"), ".1f", 10),
            cell(None if acc is None else 100 * acc, ".1f", 8),
        ]))
    return "\n".join(lines)
