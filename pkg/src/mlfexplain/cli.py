"""Command-line entry point (``mlfx``).

Every subcommand writes its outputs into ``--out`` together with a
``manifest.json`` recording the full configuration, seeds, input and output
hashes. ``mlfx --manifest DIR/manifest.json`` re-runs the recorded command.

Exit codes: 0 success, 2 invalid input, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .autoencoders import (
    build_segmentation_autoencoder,
    build_vae_autoencoder,
    load_vae,
    reconstruction_error,
    save_vae,
    train_vae,
)
from .benchmark import EXPLAINERS, EvalConfig, run_evaluation
from .data import load_dataset, synth_images, write_dataset
from .errors import (
    DimensionError,
    HierarchyError,
    MlfError,
    SingularDesignError,
    TrainingDivergedError,
    ValidationError,
)
from .gmlf import RelevanceReport, explain, hierarchical_drilldown
from .lrp import LrpConfig
from .modelio import load_model, save_model
from .nn import TrainConfig, accuracy, fit_classifier, init_network
from .pnm import read_pnm, write_label_pgm, write_pnm
from .render import (
    overlay_svg,
    render_drilldown,
    render_heatmap,
    render_latent_traversal,
    render_pixel_heatmap,
    svg_line_plot,
    tile,
)
from .segmentation import (
    DEFAULT_QUANTILES,
    SegmentationHierarchy,
    auto_segment,
    finest_as_flat,
    hierarchical_segment,
)

log = logging.getLogger("mlfexplain")

SEED_ENV = "MLFX_SEED"
EXIT_OK, EXIT_VALIDATION, EXIT_NUMERIC = 0, 2, 3
KIND_NAMES = {"flat": "flat-seg", "hier": "hier-seg", "vae": "vae"}


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class Run:
    """Tracks inputs and outputs of one invocation and writes its manifest."""

    command: str
    config: dict
    out: Path
    seeds: dict = field(default_factory=dict)
    inputs: dict = field(default_factory=dict)
    outputs: list = field(default_factory=list)
    started: bool = False

    def add_input(self, path) -> Path:
        path = Path(path)
        if not path.exists():
            raise ValidationError(f"input {path} does not exist")
        if path.is_file():
            self.inputs[str(path.resolve())] = sha256_file(path)
        return path

    def prepare(self) -> Path:
        """Create the output directory; call only after inputs are validated."""
        if not self.started:
            try:
                self.out.mkdir(parents=True, exist_ok=True)
            except OSError as exc:
                raise ValidationError(f"cannot create output directory {self.out}: {exc}") from exc
            self.started = True
        return self.out

    def _target(self, name: str) -> Path:
        return self.prepare() / name

    def _record(self, path: Path):
        rel = str(path.relative_to(self.out))
        self.outputs = [o for o in self.outputs if o["path"] != rel]
        self.outputs.append({"path": rel, "sha256": sha256_file(path)})

    def write_text(self, name: str, text: str) -> Path:
        path = self._target(name)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
        self._record(path)
        return path

    def write_json(self, name: str, data) -> Path:
        return self.write_text(name, json.dumps(data, indent=2, sort_keys=True) + "\n")

    def write_image(self, name: str, image) -> Path:
        path = self._target(name)
        path.parent.mkdir(parents=True, exist_ok=True)
        write_pnm(path, image)
        self._record(path)
        return path

    def record(self, path):
        """Register a file that was written by library code."""
        self._record(Path(path))

    def manifest(self, status: str, error: str | None = None) -> dict:
        return {
            "tool": "mlfexplain",
            "version": __version__,
            "command": self.command,
            "config": self.config,
            "seeds": self.seeds,
            "inputs": self.inputs,
            "outputs": sorted(self.outputs, key=lambda o: o["path"]),
            "status": status,
            "error": error,
        }

    def finish(self, status: str = "ok", error: str | None = None) -> Path:
        path = self._target("manifest.json")
        path.write_text(json.dumps(self.manifest(status, error), indent=2, sort_keys=True) + "\n")
        return path


# -- helpers -------------------------------------------------------------------


def _floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _ints(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def _resolve_seed(args, run: Run):
    if not hasattr(args, "seed"):
        return
    env = os.environ.get(SEED_ENV)
    if getattr(args, "_replay", False):
        run.seeds["source"] = "manifest"
    elif env is not None:
        try:
            args.seed = int(env)
        except ValueError as exc:
            raise ValidationError(f"{SEED_ENV} must be an integer, got {env!r}") from exc
        run.seeds["source"] = "env"
    else:
        run.seeds["source"] = "cli"
    run.seeds["seed"] = int(args.seed)


def default_quantiles(levels: int) -> list[float]:
    """Evenly spaced MST-weight quantiles from 0.9 (coarse) to 0.3 (fine)."""
    if levels < 1:
        raise ValidationError("--levels must be >= 1")
    if levels == 1:
        return [DEFAULT_QUANTILES[-1]]
    return [float(q) for q in np.linspace(DEFAULT_QUANTILES[0], DEFAULT_QUANTILES[-1], levels)]


def _lrp_config(args) -> LrpConfig:
    return LrpConfig(args.alpha, args.beta, args.epsilon)


def _load_hierarchy(run: Run, args, image) -> SegmentationHierarchy:
    if args.hierarchy:
        data = json.loads(run.add_input(args.hierarchy).read_text())
        hierarchy = SegmentationHierarchy.from_json(data)
        if hierarchy.shape != image.shape[:2]:
            raise HierarchyError(f"hierarchy covers {hierarchy.shape}, image is {image.shape[:2]}")
        return hierarchy
    return auto_segment(image, DEFAULT_QUANTILES, args.min_size)


# -- subcommands ---------------------------------------------------------------


def cmd_synth_data(args, run: Run):
    if args.n < args.classes:
        raise ValidationError("--n must be at least --classes")
    ds = synth_images(args.n, args.classes, args.size, args.noise, args.seed, args.channels)
    for path in write_dataset(ds, run.prepare()):
        run.record(path)
    counts = np.bincount(ds.labels, minlength=args.classes)
    log.info("wrote %d images (%s per class) to %s", len(ds), counts.tolist(), run.out)


def cmd_train_classifier(args, run: Run):
    ds = load_dataset(run.add_input(args.images))
    for name in ds.names:
        run.add_input(Path(args.images) / name)
    run.add_input(Path(args.images) / "labels.csv")
    cfg = TrainConfig(args.lr, args.batch_size, args.epochs, args.seed, args.optimizer,
                      momentum=args.momentum, clip_norm=args.clip_norm)
    train, held = ds.split(args.holdout, args.seed) if args.holdout > 0 else (ds, None)
    if len(train) == 0:
        raise ValidationError("no training images left after the hold-out split")
    arch = [train.flat.shape[1], *args.hidden, ds.n_classes]
    net, history = fit_classifier(init_network(arch, args.seed), train.flat, train.labels, cfg)
    metrics = {
        "architecture": arch,
        "train_accuracy": accuracy(net, train.flat, train.labels),
        "holdout_accuracy": accuracy(net, held.flat, held.labels) if held is not None and len(held) else None,
        "holdout_images": held.names if held is not None else [],
        "loss_history": [float(v) for v in history],
    }
    path = save_model(run.prepare() / "model.json", net,
                      {"classes": ds.n_classes, "image_shape": list(ds.images.shape[1:])})
    run.record(path)
    run.record(path.with_suffix(".bin"))
    run.write_json("metrics.json", metrics)
    log.info("train accuracy %.4f, hold-out accuracy %s", metrics["train_accuracy"],
             metrics["holdout_accuracy"])


def cmd_train_vae(args, run: Run):
    ds = load_dataset(run.add_input(args.images))
    for name in ds.names:
        run.add_input(Path(args.images) / name)
    cfg = TrainConfig(args.lr, args.batch_size, args.epochs, args.seed, "sgd-momentum",
                      loss="vae-elbo", clip_norm=args.clip_norm)
    history: list = []
    vae = train_vae(ds.flat, args.latent_dim, args.beta, cfg, tuple(args.hidden), history,
                    args.warmup)
    path = save_vae(run.prepare() / "vae.json", vae)
    run.record(path)
    run.record(path.with_suffix(".bin"))
    run.write_json("metrics.json", {
        "reconstruction_error": reconstruction_error(vae, ds.flat),
        "loss_history": [float(a) for a, _ in history],
        "reconstruction_history": [float(b) for _, b in history],
        "latent_std": [float(s) for s in vae.latent_std],
    })


def cmd_segment(args, run: Run):
    image = read_pnm(run.add_input(args.image))
    if args.thresholds:
        if args.levels is not None and args.levels != len(args.thresholds):
            raise ValidationError(f"--levels {args.levels} but {len(args.thresholds)} thresholds given")
        hierarchy = hierarchical_segment(image, args.thresholds, args.min_size)
    else:
        quantiles = args.auto_quantiles or default_quantiles(args.levels or len(DEFAULT_QUANTILES))
        hierarchy = auto_segment(image, quantiles, args.min_size)
    run.write_json("hierarchy.json", hierarchy.to_json())
    for k, part in enumerate(hierarchy.levels):
        path = run.prepare() / f"level{k}.pgm"
        write_label_pgm(path, part.labels.reshape(part.shape))
        run.record(path)
        ov = render_heatmap(image, part, -np.arange(part.n_regions, dtype=np.float64),
                            top_n=part.n_regions)
        run.write_image(f"level{k}.ppm", ov.rgb)
    log.info("region counts per level: %s", [p.n_regions for p in hierarchy.levels])


def _explain_outputs(run: Run, report: RelevanceReport, image, top: int,
                     hierarchy: SegmentationHierarchy | None, ae):
    run.write_json("report.json", report.to_json())
    run.write_image("pixels.ppm", render_pixel_heatmap(image, report.pixel_relevance))
    if hierarchy is not None:
        ov = render_heatmap(image, hierarchy.levels[-1], report.relevance, top)
        run.write_image("heatmap.ppm", ov.rgb)
        run.write_text("heatmap.svg", overlay_svg(ov, title=f"class {report.predicted_class}"))
        if hierarchy.depth > 1:
            branches = min(top, hierarchy.levels[0].n_regions)
            chains = hierarchical_drilldown(report, hierarchy, branches)
            panel = render_drilldown(image, chains, hierarchy)
            run.write_image("drilldown.ppm", tile([[ov.rgb for ov in row] for row in panel]))
            run.write_json("drilldown.json", {"chains": [list(c) for c in chains]})
    else:
        trav = render_latent_traversal(ae, report, image.shape)
        run.write_image("traversal.ppm", tile([list(row) for row in trav.images]))
        run.write_json("traversal.json", {"latents": trav.latents,
                                          "offsets": trav.offsets.tolist()})


def cmd_explain(args, run: Run):
    kind = KIND_NAMES[args.kind]
    model = load_model(run.add_input(args.model))
    run.add_input(Path(args.model).with_suffix(".bin"))
    image = read_pnm(run.add_input(args.image))
    cfg = _lrp_config(args)
    x = image.reshape(-1)
    if x.size != model.input_dim:
        raise DimensionError(f"image has {x.size} values, model expects {model.input_dim}")
    hierarchy = None
    if kind == "vae":
        if not args.vae:
            raise ValidationError("--kind vae needs --vae")
        vae = load_vae(run.add_input(args.vae))
        run.add_input(Path(args.vae).with_suffix(".bin"))
        ae = build_vae_autoencoder(vae, x)
    else:
        hierarchy = _load_hierarchy(run, args, image)
        if kind == "flat-seg":
            hierarchy = finest_as_flat(hierarchy)
        ae = build_segmentation_autoencoder(image, hierarchy)
    report = explain(model, x, ae, cfg, args.target_class)
    if report.dropped_units:
        log.warning("%d units had no contributions; their relevance was dropped", report.dropped_units)
    _explain_outputs(run, report, image, args.top, hierarchy, ae)


def cmd_evaluate(args, run: Run):
    model = load_model(run.add_input(args.model))
    run.add_input(Path(args.model).with_suffix(".bin"))
    ds = load_dataset(run.add_input(args.images))
    for name in ds.names:
        run.add_input(Path(args.images) / name)
    explainers = args.explainer or ["gmlf-flat", "gmlf-hier", "lime", "random"]
    vae = None
    if any(e in ("gmlf-vae", "random-vae") for e in explainers):
        if not args.vae:
            raise ValidationError("latent explainers need --vae")
        vae = load_vae(run.add_input(args.vae))
        run.add_input(Path(args.vae).with_suffix(".bin"))
    images = ds.images if args.limit is None else ds.images[:args.limit]
    cfg = EvalConfig(steps=args.steps, trials=args.trials, seed=args.seed, fill=args.fill,
                     min_size=args.min_size, lrp=_lrp_config(args))
    result = run_evaluation(model, images, explainers, cfg, vae)
    if not result.image_ids:
        raise ValidationError(f"no image has at least {args.steps} segments")

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["explainer", "image", "step", "score"])
    for name in explainers:
        for image_id, res in zip(result.image_ids, result.results[name]):
            for k, s in enumerate(res.scores):
                w.writerow([name, ds.names[image_id], k, repr(float(s))])
    run.write_text("per_image.csv", buf.getvalue())

    summary = result.summary()
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["explainer", "step", "mean_score", "aopc"])
    for name, s in summary.items():
        for k, (m, a) in enumerate(zip(s.mean_curve, s.aopc_per_step)):
            w.writerow([name, k, repr(float(m)), repr(float(a))])
    run.write_text("summary.csv", buf.getvalue())

    stats = {"n_images": len(result.image_ids),
             "skipped": [ds.names[i] for i in result.skipped],
             "aopc": {name: s.aopc for name, s in summary.items()},
             "paired_tests": paired_tests(result)}
    run.write_json("summary.json", stats)
    run.write_text("morf.svg", svg_line_plot({n: s.mean_curve for n, s in summary.items()},
                                             "mean MoRF curve", "step", "probability"))
    run.write_text("aopc.svg", svg_line_plot({n: s.aopc_per_step for n, s in summary.items()},
                                             "mean AOPC", "step", "AOPC"))
    for name, s in summary.items():
        log.info("%-10s AOPC %.4f over %d images", name, s.aopc, s.n_images)


def paired_tests(result) -> dict:
    """One-sided paired t-tests of each explainer against its random baseline."""
    from scipy.stats import ttest_rel

    out = {}
    pairs = [(e, "random") for e in ("gmlf-flat", "gmlf-hier", "lime")] + [("gmlf-vae", "random-vae")]
    for a, b in pairs:
        if a in result.results and b in result.results and len(result.results[a]) > 1:
            t = ttest_rel(result.aopcs(a), result.aopcs(b), alternative="greater")
            out[f"{a}>{b}"] = {"t": float(t.statistic), "p": float(t.pvalue)}
    return out


def cmd_render(args, run: Run):
    if args.summary:
        rows = list(csv.DictReader(run.add_input(args.summary).open()))
        curves: dict[str, list] = {}
        aopcs: dict[str, list] = {}
        for row in rows:
            curves.setdefault(row["explainer"], []).append(float(row["mean_score"]))
            aopcs.setdefault(row["explainer"], []).append(float(row["aopc"]))
        if not curves:
            raise ValidationError(f"{args.summary} holds no rows")
        run.write_text("morf.svg", svg_line_plot(curves, "mean MoRF curve", "step", "probability"))
        run.write_text("aopc.svg", svg_line_plot(aopcs, "mean AOPC", "step", "AOPC"))
        return
    if not (args.report and args.image):
        raise ValidationError("render needs --summary, or --report with --image")
    report = RelevanceReport.from_json(json.loads(run.add_input(args.report).read_text()))
    image = read_pnm(run.add_input(args.image))
    hierarchy, ae = None, None
    if report.kind == "vae":
        if not args.vae:
            raise ValidationError("a VAE report needs --vae")
        ae = build_vae_autoencoder(load_vae(run.add_input(args.vae)), image.reshape(-1))
    else:
        hierarchy = _load_hierarchy(run, args, image)
        if report.kind == "flat-seg":
            hierarchy = finest_as_flat(hierarchy)
        if [p.n_regions for p in hierarchy.levels] != [len(u) for u in report.levels]:
            raise HierarchyError("report and hierarchy disagree on region counts")
    _explain_outputs(run, report, image, args.top, hierarchy, ae)


def cmd_report(args, run: Run):
    src = Path(args.eval)
    stats = json.loads(run.add_input(src / "summary.json").read_text())
    run.add_input(src / "summary.csv")
    lines = ["# Evaluation report", "", f"Images evaluated: {stats['n_images']}", ""]
    if stats["skipped"]:
        lines += [f"Skipped (too few segments): {len(stats['skipped'])}", ""]
    lines += ["| explainer | mean AOPC |", "|---|---|"]
    for name, value in sorted(stats["aopc"].items(), key=lambda kv: -kv[1]):
        lines.append(f"| {name} | {value:.4f} |")
    if stats["paired_tests"]:
        lines += ["", "| comparison | t | p (one-sided) |", "|---|---|---|"]
        for name, t in stats["paired_tests"].items():
            lines.append(f"| {name} | {t['t']:.3f} | {t['p']:.3g} |")
    if args.metrics:
        for path in args.metrics:
            m = json.loads(run.add_input(path).read_text())
            lines += ["", f"## {path}", ""]
            for key in ("train_accuracy", "holdout_accuracy", "reconstruction_error"):
                if m.get(key) is not None:
                    lines.append(f"- {key}: {m[key]:.4f}")
    text = "\n".join(lines) + "\n"
    run.write_text("report.md", text)
    print(text, end="")


# -- parser --------------------------------------------------------------------


def _add_lrp(p):
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--beta", type=float, default=0.0)
    p.add_argument("--epsilon", type=float, default=1e-9)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mlfx", description="Middle-level feature explanations.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--manifest", help="replay the run recorded in this manifest")
    parser.add_argument("--out", help="output directory for --manifest replays")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("synth-data", help="write a synthetic shapes dataset")
    p.add_argument("--n", type=int, default=300)
    p.add_argument("--classes", type=int, default=3)
    p.add_argument("--size", type=int, default=24)
    p.add_argument("--noise", type=float, default=0.05)
    p.add_argument("--channels", type=int, choices=(1, 3), default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth_data)

    p = sub.add_parser("train-classifier", help="train a dense classifier")
    p.add_argument("--images", required=True)
    p.add_argument("--hidden", type=_ints, default=[128, 64])
    p.add_argument("--epochs", type=int, default=40)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--optimizer", choices=("sgd", "sgd-momentum"), default="sgd-momentum")
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--clip-norm", type=float, default=None)
    p.add_argument("--holdout", type=float, default=0.2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train_classifier)

    p = sub.add_parser("train-vae", help="train a beta-VAE on a dataset")
    p.add_argument("--images", required=True)
    p.add_argument("--latent-dim", type=int, default=10)
    p.add_argument("--beta", type=float, default=4.0)
    p.add_argument("--hidden", type=_ints, default=[256, 64])
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--warmup", type=int, default=10, help="epochs of linear KL warm-up")
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--clip-norm", type=float, default=100.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train_vae)

    p = sub.add_parser("segment", help="build a segmentation hierarchy for one image")
    p.add_argument("--image", required=True)
    p.add_argument("--levels", type=int, default=None, help="number of levels K (default 3)")
    p.add_argument("--thresholds", type=_floats, help="explicit decreasing thresholds")
    p.add_argument("--auto-quantiles", type=_floats, default=None,
                   help="MST edge-weight quantiles, coarse to fine (default 0.9,0.6,0.3)")
    p.add_argument("--min-size", type=int, default=16)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("explain", help="relevance of middle-level features for one image")
    p.add_argument("--kind", choices=sorted(KIND_NAMES), default="hier")
    p.add_argument("--model", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--hierarchy", help="hierarchy JSON from 'segment' (default: automatic)")
    p.add_argument("--vae")
    p.add_argument("--min-size", type=int, default=16)
    p.add_argument("--target-class", type=int, default=None)
    p.add_argument("--top", type=int, default=2)
    _add_lrp(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("evaluate", help="MoRF curves and AOPC over a dataset")
    p.add_argument("--explainer", action="append", choices=EXPLAINERS,
                   help="repeatable; default gmlf-flat, gmlf-hier, lime, random")
    p.add_argument("--model", required=True)
    p.add_argument("--images", required=True)
    p.add_argument("--vae")
    p.add_argument("--steps", type=int, default=6)
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--fill", choices=("noise", "zeros", "mean"), default="noise")
    p.add_argument("--min-size", type=int, default=16)
    p.add_argument("--limit", type=int, default=None, help="only the first N images")
    p.add_argument("--seed", type=int, default=0)
    _add_lrp(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("render", help="re-render a report or evaluation summary")
    p.add_argument("--report")
    p.add_argument("--image")
    p.add_argument("--hierarchy")
    p.add_argument("--vae")
    p.add_argument("--summary", help="summary.csv from 'evaluate'")
    p.add_argument("--min-size", type=int, default=16)
    p.add_argument("--top", type=int, default=2)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("report", help="markdown summary of an evaluation run")
    p.add_argument("--eval", required=True, help="output directory of 'evaluate'")
    p.add_argument("--metrics", action="append", help="metrics.json from a training run")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)
    return parser


COMMANDS = {
    "synth-data": cmd_synth_data,
    "train-classifier": cmd_train_classifier,
    "train-vae": cmd_train_vae,
    "segment": cmd_segment,
    "explain": cmd_explain,
    "evaluate": cmd_evaluate,
    "render": cmd_render,
    "report": cmd_report,
}


PATH_ARGS = ("images", "model", "image", "hierarchy", "vae", "summary", "report", "eval")


def _snapshot(args) -> dict:
    """Config as recorded in the manifest; input paths are made absolute so a
    replay works from any directory."""
    for key in PATH_ARGS:
        if getattr(args, key, None):
            setattr(args, key, str(Path(getattr(args, key)).resolve()))
    if getattr(args, "metrics", None):
        args.metrics = [str(Path(m).resolve()) for m in args.metrics]
    skip = {"func", "manifest", "verbose", "command", "out", "_replay"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def execute(command: str, args, out) -> tuple[int, Path | None]:
    run = Run(command, {}, Path(out))
    try:
        _resolve_seed(args, run)
        run.config = _snapshot(args)
        COMMANDS[command](args, run)
    except (TrainingDivergedError, SingularDesignError, FloatingPointError) as exc:
        log.error("%s", exc)
        return EXIT_NUMERIC, run.finish("failed", str(exc)) if run.started else None
    except (MlfError, ValueError, OSError, KeyError) as exc:
        log.error("%s", exc)
        return EXIT_VALIDATION, run.finish("failed", str(exc)) if run.started else None
    return EXIT_OK, run.finish()


def replay(manifest_path, out=None) -> tuple[int, Path | None]:
    path = Path(manifest_path)
    try:
        recorded = json.loads(path.read_text())
        command = recorded["command"]
        if command not in COMMANDS:
            raise ValidationError(f"unknown command {command!r} in {path}")
    except (OSError, ValueError, KeyError) as exc:
        log.error("cannot read manifest %s: %s", path, exc)
        return EXIT_VALIDATION, None
    if recorded.get("version") != __version__:
        log.warning("manifest was written by version %s, running %s", recorded.get("version"), __version__)
    for name, digest in recorded.get("inputs", {}).items():
        if Path(name).is_file() and sha256_file(name) != digest:
            log.warning("input %s changed since the recorded run", name)
    args = argparse.Namespace(**recorded["config"])
    args._replay = True
    out = Path(out) if out else path.parent
    code, new_manifest = execute(command, args, out)
    if code == EXIT_OK:
        now = {o["path"]: o["sha256"] for o in json.loads(new_manifest.read_text())["outputs"]}
        before = {o["path"]: o["sha256"] for o in recorded.get("outputs", [])}
        changed = sorted(p for p in before if now.get(p) != before[p])
        if changed:
            log.warning("replay differs from the recorded run in: %s", ", ".join(changed))
        else:
            log.info("replay reproduced all %d recorded outputs", len(before))
    return code, new_manifest


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if not (args.manifest or args.command):
        parser.print_help()
        return EXIT_VALIDATION
    with np.errstate(over="ignore", under="ignore"):
        if args.manifest:
            code, _ = replay(args.manifest, args.out)
        else:
            code, _ = execute(args.command, args, args.out)
    return code


if __name__ == "__main__":
    sys.exit(main())
