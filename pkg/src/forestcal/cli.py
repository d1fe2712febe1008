"""Command-line entry point.

One binary with subcommands: ``build-tree``, ``score``, ``nms``,
``analyze``, ``eval``, ``pipeline``, and ``make-demo``. Every subcommand
accepts ``--config <file>`` holding a JSON object whose keys mirror the
option names (underscored); explicit command-line flags win over config
values, which win over built-in defaults.

Exit codes: 0 success, 1 validation error, 2 I/O error.
"""

from __future__ import annotations

import functools
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import click
import numpy as np
from click.core import ParameterSource

from . import io
from .analysis import HistogramSpec, NoisyLogitConfig, count_noisy_logits, noisy_shares
from .demo import make_demo_dataset
from .errors import DataFileError, ValidationError
from .evaluation import evaluate
from .nms import ResamplingConfig, class_aware_nms, class_thresholds, match_proposals_to_gt, survival_stats
from .scoring import MODE_FOREST_SCORE, SCORING_MODES, score_record
from .taxonomy import Forest
from .tree_builder import (
    DEFAULT_GEOMETRIC_PARENTS,
    DEFAULT_MASK_GRID,
    DEFAULT_VISUAL_PARENTS,
    build_geometric_tree,
    build_lexical_tree,
    build_visual_tree,
)


def _cli_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ValidationError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(1)
        except OSError as exc:
            click.echo(f"i/o error: {exc}", err=True)
            sys.exit(2)
    return wrapper


def _merged_params(ctx: click.Context) -> dict:
    """Apply config-file values to parameters left at their defaults."""
    params = dict(ctx.params)
    config_path = params.pop("config", None)
    if config_path is None:
        return params
    with open(config_path, encoding="utf-8") as fh:
        try:
            config = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{config_path}: invalid JSON config: {exc.msg}") from exc
    if not isinstance(config, dict):
        raise ValidationError(f"{config_path}: config must be a JSON object")
    for name in params:
        if name in config and ctx.get_parameter_source(name) == ParameterSource.DEFAULT:
            params[name] = config[name]
    return params


def _require(params: dict, *names: str) -> None:
    missing = [n for n in names if params.get(n) in (None, (), [])]
    if missing:
        flags = ", ".join("--" + n.replace("_", "-") for n in missing)
        raise ValidationError(f"missing required option(s): {flags}")


def _load_forest(tree_paths) -> Forest:
    return Forest([io.read_tree(p) for p in tree_paths])


def _chunked(iterable, size: int = 512):
    buf = []
    for item in iterable:
        buf.append(item)
        if len(buf) >= size:
            yield buf
            buf = []
    if buf:
        yield buf


def _map_ordered(fn, items, threads: int):
    """Apply fn over a stream, in order, with bounded memory."""
    if threads <= 1:
        for item in items:
            yield fn(item)
        return
    with ThreadPoolExecutor(max_workers=threads) as ex:
        for chunk in _chunked(items):
            yield from ex.map(fn, chunk)


config_option = click.option("--config", type=click.Path(exists=True, dir_okay=False),
                             default=None, help="JSON config file with option defaults.")


@click.group()
def main():
    """Classification-forest logit calibration, NMS resampling, and evaluation."""


@main.command("make-demo")
@click.option("--out-dir", type=click.Path(file_okay=False), default=None)
@click.option("--seed", type=int, default=0)
@config_option
@click.pass_context
@_cli_errors
def cmd_make_demo(ctx, **_kwargs):
    """Generate the synthetic demo dataset."""
    params = _merged_params(ctx)
    _require(params, "out_dir")
    paths = make_demo_dataset(params["out_dir"], seed=params["seed"])
    for name, path in paths.items():
        click.echo(f"{name}: {path}")


@main.command("build-tree")
@click.option("--kind", type=click.Choice(["lexical", "visual", "geometric"]), default=None)
@click.option("--categories", "categories_path", type=str, default=None)
@click.option("--hierarchy", "hierarchy_path", type=str, default=None)
@click.option("--features", "features_path", type=str, default=None)
@click.option("--masks", "masks_path", type=str, default=None)
@click.option("--n-parents", type=int, default=None,
              help=f"Cluster count; defaults: visual {DEFAULT_VISUAL_PARENTS}, "
                   f"geometric {DEFAULT_GEOMETRIC_PARENTS}.")
@click.option("--grid", type=str, default="x".join(str(v) for v in DEFAULT_MASK_GRID),
              help="Mask grid as HxW.")
@click.option("--seed", type=int, default=0)
@click.option("--max-iter", type=int, default=100)
@click.option("--tol", type=float, default=0.0)
@click.option("--tree-id", type=str, default=None)
@click.option("--out", "out_path", type=str, default=None)
@config_option
@click.pass_context
@_cli_errors
def cmd_build_tree(ctx, **_kwargs):
    """Build a classification tree from one kind of prior knowledge."""
    params = _merged_params(ctx)
    _require(params, "kind", "out_path")
    kind = params["kind"]
    tree_id = params["tree_id"] or kind
    kw = dict(random_state=params["seed"], max_iter=params["max_iter"],
              tol=params["tol"], tree_id=tree_id)
    if kind == "lexical":
        _require(params, "hierarchy_path", "categories_path")
        categories = io.read_categories(params["categories_path"])
        hierarchy = io.read_hierarchy(params["hierarchy_path"])
        tree = build_lexical_tree(hierarchy, categories, tree_id=tree_id)
    elif kind == "visual":
        _require(params, "features_path")
        table = io.read_feature_table(params["features_path"])
        n_parents = params["n_parents"] or DEFAULT_VISUAL_PARENTS
        tree = build_visual_tree(table, n_parents, **kw)
    else:
        _require(params, "masks_path")
        class_masks = io.read_class_masks(params["masks_path"])
        try:
            h, w = (int(v) for v in params["grid"].split("x"))
        except ValueError as exc:
            raise ValidationError(f"--grid must look like 28x28, got {params['grid']!r}") from exc
        n_parents = params["n_parents"] or DEFAULT_GEOMETRIC_PARENTS
        tree = build_geometric_tree(class_masks, n_parents, grid_size=(h, w), **kw)
    if params["categories_path"] and kind != "lexical":
        categories = io.read_categories(params["categories_path"])
        if tree.n_leaves != len(categories):
            raise ValidationError(
                f"tree covers {tree.n_leaves} classes but category file has {len(categories)}")
    io.write_tree(tree, params["out_path"])
    sizes = np.bincount(tree.leaf_parent, minlength=tree.M)
    click.echo(f"tree {tree.tree_id!r}: M={tree.M} parents over N={tree.n_leaves} classes")
    click.echo("cluster sizes: " + " ".join(str(int(s)) for s in sizes))


@main.command("score")
@click.option("--records", "records_path", type=str, default=None)
@click.option("--categories", "categories_path", type=str, default=None)
@click.option("--tree", "tree_paths", type=str, multiple=True)
@click.option("--mode", type=click.Choice(SCORING_MODES), default=MODE_FOREST_SCORE)
@click.option("--tree-id", type=str, default=None,
              help="Tree selector for the single-tree modes.")
@click.option("--out", "out_path", type=str, default=None)
@click.option("--threads", type=int, default=1)
@config_option
@click.pass_context
@_cli_errors
def cmd_score(ctx, **_kwargs):
    """Score logit records through the configured mode."""
    params = _merged_params(ctx)
    _require(params, "records_path", "categories_path", "tree_paths", "out_path")
    categories = io.read_categories(params["categories_path"])
    forest = _load_forest(params["tree_paths"])
    if forest.n_leaves != len(categories):
        raise ValidationError(
            f"forest has {forest.n_leaves} leaves but category file has {len(categories)}")
    mode, tree_id = params["mode"], params["tree_id"]
    records_path = params["records_path"]

    def work(item):
        lineno, rec = item
        try:
            return rec.object_id, rec.gt_class, score_record(rec, forest, mode, tree_id)
        except ValidationError as exc:
            raise DataFileError(records_path, lineno, str(exc)) from exc

    records = io.iter_logit_records_numbered(records_path, n_classes=len(categories))
    rows = _map_ordered(work, records, params["threads"])
    count = 0

    def counted():
        nonlocal count
        for row in rows:
            count += 1
            yield row

    io.write_scores(counted(), params["out_path"])
    click.echo(f"scored {count} records in mode {mode!r} -> {params['out_path']}")


@main.command("nms")
@click.option("--proposals", "proposals_path", type=str, default=None)
@click.option("--categories", "categories_path", type=str, default=None)
@click.option("--gt", "gt_path", type=str, default=None,
              help="Assign proposal classes by max-IoU match against this ground truth.")
@click.option("--fg-iou", type=float, default=0.5)
@click.option("--scheme", type=click.Choice(["discrete", "linear", "fixed"]), default="discrete")
@click.option("--alpha-f", type=float, default=None)
@click.option("--alpha-c", type=float, default=None)
@click.option("--alpha-r", type=float, default=None)
@click.option("--beta", type=float, default=None)
@click.option("--background-threshold", type=float, default=0.7)
@click.option("--fixed-threshold", type=float, default=None)
@click.option("--as-printed", is_flag=True, default=False,
              help="Use the linear scheme's literal published base mapping.")
@click.option("--out", "out_path", type=str, default=None)
@click.option("--stats", "stats_path", type=str, default=None)
@click.option("--threads", type=int, default=1)
@config_option
@click.pass_context
@_cli_errors
def cmd_nms(ctx, **_kwargs):
    """Run class-aware NMS resampling over grouped proposals."""
    params = _merged_params(ctx)
    _require(params, "proposals_path", "categories_path", "out_path")
    categories = io.read_categories(params["categories_path"])
    cfg = ResamplingConfig(
        scheme=params["scheme"], alpha_f=params["alpha_f"], alpha_c=params["alpha_c"],
        alpha_r=params["alpha_r"], beta=params["beta"],
        background_threshold=params["background_threshold"],
        fixed_threshold=params["fixed_threshold"], as_printed=params["as_printed"],
    )
    thresholds = class_thresholds(categories, cfg)

    gt_by_image: dict[str, list] = {}
    if params["gt_path"]:
        for gt in io.read_ground_truths(params["gt_path"]):
            gt_by_image.setdefault(gt.image_id, []).append(gt)

    def work(group):
        image_id, props = group
        if params["gt_path"]:
            gts = gt_by_image.get(image_id, [])
            props = match_proposals_to_gt(
                np.stack([p.box for p in props]),
                np.array([p.score for p in props]),
                np.stack([g.box for g in gts]) if gts else np.zeros((0, 4)),
                np.array([g.class_id for g in gts], dtype=np.int64),
                fg_iou=params["fg_iou"],
            )
        kept = class_aware_nms(props, thresholds, cfg.background_threshold)
        return image_id, props, kept

    totals = None
    groups = io.iter_proposal_groups(params["proposals_path"])
    results = _map_ordered(work, groups, params["threads"])

    def emit():
        nonlocal totals
        for image_id, props, kept in results:
            stats = survival_stats(props, kept, categories)
            if totals is None:
                totals = stats
            else:
                for key, cell in stats.items():
                    totals[key]["input"] += cell["input"]
                    totals[key]["kept"] += cell["kept"]
            yield image_id, kept

    io.write_kept_proposals(emit(), params["out_path"])
    if totals is None:
        totals = survival_stats([], [], categories)
    click.echo("group      input  kept")
    for key in ("rare", "common", "frequent", "background"):
        cell = totals[key]
        click.echo(f"{key:<10} {cell['input']:>5} {cell['kept']:>5}")
    if params["stats_path"]:
        io.write_json(totals, params["stats_path"])


def _histogram_from_counts(counts: np.ndarray, edges: np.ndarray):
    from .analysis import Histogram

    total = counts.sum()
    if total == 0:
        return Histogram(np.zeros(counts.shape[0]), edges, True)
    return Histogram(counts / total, edges, False)


@main.command("analyze")
@click.option("--records", "records_path", type=str, default=None)
@click.option("--scores", "scores_path", type=str, default=None,
              help="Analyze an existing score file instead of raw records.")
@click.option("--categories", "categories_path", type=str, default=None)
@click.option("--tree", "tree_paths", type=str, multiple=True)
@click.option("--source", type=str, default="forest",
              help="Value family: raw_fine, tree:<id>, or forest.")
@click.option("--eps-gt", type=float, default=0.1)
@click.option("--eps-neg", type=float, default=0.1)
@click.option("--bins", type=int, default=50)
@click.option("--out-dir", type=str, default=None)
@click.option("--threads", type=int, default=1)
@config_option
@click.pass_context
@_cli_errors
def cmd_analyze(ctx, **_kwargs):
    """Noisy-logit statistics and score-density histograms."""
    params = _merged_params(ctx)
    _require(params, "out_dir")
    if bool(params["records_path"]) == bool(params["scores_path"]):
        raise ValidationError("provide exactly one of --records or --scores")
    cfg = NoisyLogitConfig(eps_gt=params["eps_gt"], eps_neg=params["eps_neg"])
    hist_spec = HistogramSpec(bin_count=params["bins"])
    out_dir = Path(params["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)

    if params["records_path"]:
        _require(params, "categories_path", "tree_paths")
        categories = io.read_categories(params["categories_path"])
        forest = _load_forest(params["tree_paths"])
        source = params["source"]

        records_path = params["records_path"]

        def shares_stream():
            numbered = io.iter_logit_records_numbered(records_path, n_classes=len(categories))
            for lineno, rec in numbered:
                try:
                    if rec.gt_class is None:
                        raise ValidationError(f"record {rec.object_id!r} has no gt_class")
                    yield noisy_shares(rec, source, forest), rec.gt_class
                except ValidationError as exc:
                    raise DataFileError(records_path, lineno, str(exc)) from exc

        stream = shares_stream()
    else:
        source = "score_file"

        def score_stream():
            nonlocal source
            for object_id, gt_class, result in io.iter_scores(params["scores_path"]):
                if gt_class is None:
                    raise ValidationError(f"record {object_id!r} has no gt_class")
                source = result.mode
                yield result.scores, gt_class

        stream = score_stream()

    total_noisy = 0
    n_objects = 0
    counts = {"correct": np.zeros(hist_spec.bin_count, dtype=np.int64),
              "incorrect": np.zeros(hist_spec.bin_count, dtype=np.int64)}
    edges = hist_spec.edges

    def work(item):
        shares, gt = item
        gt_noisy, neg_noisy = count_noisy_logits(shares, gt, cfg)
        label = int(np.argmax(shares))
        return gt_noisy + neg_noisy, float(shares[label]), label == gt

    for noisy, max_score, correct in _map_ordered(work, stream, params["threads"]):
        total_noisy += noisy
        n_objects += 1
        split = "correct" if correct else "incorrect"
        counts[split] += np.histogram([max_score], bins=edges)[0]

    if n_objects == 0:
        raise ValidationError("no records to analyze")
    report = {
        "mean_noisy": total_noisy / n_objects,
        "eps_gt": cfg.eps_gt,
        "eps_neg": cfg.eps_neg,
        "source": source,
        "n_objects": n_objects,
    }
    io.write_json(report, out_dir / "noisy_report.json")
    for split in ("correct", "incorrect"):
        hist = _histogram_from_counts(counts[split], edges)
        io.write_histogram_csv(hist, out_dir / f"density_{split}.csv")
        if hist.is_empty:
            click.echo(f"warning: {split} split is empty", err=True)
    click.echo(
        f"mean noisy logits per object: {report['mean_noisy']:.4f} "
        f"(source={source}, n={n_objects}, eps_gt={cfg.eps_gt}, eps_neg={cfg.eps_neg})")


@main.command("eval")
@click.option("--detections", "detections_path", type=str, default=None)
@click.option("--gt", "gt_path", type=str, default=None)
@click.option("--categories", "categories_path", type=str, default=None)
@click.option("--iou-kind", type=click.Choice(["auto", "box", "mask"]), default="auto")
@click.option("--max-dets", type=int, default=300)
@click.option("--out", "out_path", type=str, default=None)
@click.option("--per-class-csv", type=str, default=None)
@click.option("--curves/--no-curves", default=True)
@config_option
@click.pass_context
@_cli_errors
def cmd_eval(ctx, **_kwargs):
    """COCO-style AP evaluation with frequency-group breakdown."""
    params = _merged_params(ctx)
    _require(params, "detections_path", "gt_path", "categories_path", "out_path")
    categories = io.read_categories(params["categories_path"])
    dets = io.read_detections(params["detections_path"])
    gts = io.read_ground_truths(params["gt_path"])
    if not dets:
        click.echo("warning: no detections; all AP values are 0", err=True)
    report = evaluate(dets, gts, categories, iou_kind=params["iou_kind"],
                      max_dets_per_image=params["max_dets"])
    io.write_eval_report(report, params["out_path"], include_curves=params["curves"])
    if params["per_class_csv"]:
        io.write_per_class_csv(report, params["per_class_csv"])

    def fmt(v):
        return "n/a" if v is None else f"{v:.4f}"

    click.echo(
        f"AP {fmt(report.ap)}  AP50 {fmt(report.ap50)}  AP75 {fmt(report.ap75)}  "
        f"AP_r {fmt(report.ap_r)}  AP_c {fmt(report.ap_c)}  AP_f {fmt(report.ap_f)}")


@main.command("pipeline")
@click.option("--records", "records_path", type=str, default=None)
@click.option("--categories", "categories_path", type=str, default=None)
@click.option("--tree", "tree_paths", type=str, multiple=True)
@click.option("--detections", "detections_path", type=str, default=None)
@click.option("--gt", "gt_path", type=str, default=None)
@click.option("--mode", type=click.Choice(SCORING_MODES), default=MODE_FOREST_SCORE)
@click.option("--tree-id", type=str, default=None)
@click.option("--source", type=str, default="forest")
@click.option("--eps-gt", type=float, default=0.1)
@click.option("--eps-neg", type=float, default=0.1)
@click.option("--bins", type=int, default=50)
@click.option("--iou-kind", type=click.Choice(["auto", "box", "mask"]), default="auto")
@click.option("--out-dir", type=str, default=None)
@click.option("--threads", type=int, default=1)
@config_option
@click.pass_context
@_cli_errors
def cmd_pipeline(ctx, **_kwargs):
    """Run score -> analyze -> eval in sequence into one output directory."""
    params = _merged_params(ctx)
    _require(params, "records_path", "categories_path", "tree_paths",
             "detections_path", "gt_path", "out_dir")
    out_dir = Path(params["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    categories = io.read_categories(params["categories_path"])
    forest = _load_forest(params["tree_paths"])
    if forest.n_leaves != len(categories):
        raise ValidationError(
            f"forest has {forest.n_leaves} leaves but category file has {len(categories)}")
    mode, tree_id = params["mode"], params["tree_id"]
    cfg = NoisyLogitConfig(eps_gt=params["eps_gt"], eps_neg=params["eps_neg"])
    hist_spec = HistogramSpec(bin_count=params["bins"])

    # Score, while folding the analysis of both the raw and requested sources.
    sources = [params["source"]]
    if "raw_fine" not in sources:
        sources.insert(0, "raw_fine")
    noisy_totals = {s: 0 for s in sources}
    counts = {"correct": np.zeros(hist_spec.bin_count, dtype=np.int64),
              "incorrect": np.zeros(hist_spec.bin_count, dtype=np.int64)}
    edges = hist_spec.edges
    n_objects = 0

    records_path = params["records_path"]

    def work(item):
        lineno, rec = item
        try:
            if rec.gt_class is None:
                raise ValidationError(f"record {rec.object_id!r} has no gt_class")
            result = score_record(rec, forest, mode, tree_id)
            per_source = {}
            for s in sources:
                shares = noisy_shares(rec, s, forest)
                gt_noisy, neg_noisy = count_noisy_logits(shares, rec.gt_class, cfg)
                per_source[s] = gt_noisy + neg_noisy
                if s == params["source"]:
                    label = int(np.argmax(shares))
                    split = "correct" if label == rec.gt_class else "incorrect"
                    density = (split, float(shares[label]))
        except ValidationError as exc:
            raise DataFileError(records_path, lineno, str(exc)) from exc
        return rec.object_id, rec.gt_class, result, per_source, density

    records = io.iter_logit_records_numbered(records_path, n_classes=len(categories))
    outputs = _map_ordered(work, records, params["threads"])

    def score_rows():
        nonlocal n_objects
        for object_id, gt_class, result, per_source, density in outputs:
            n_objects += 1
            for s, v in per_source.items():
                noisy_totals[s] += v
            split, max_score = density
            counts[split] += np.histogram([max_score], bins=edges)[0]
            yield object_id, gt_class, result

    scores_path = out_dir / "scores.jsonl"
    io.write_scores(score_rows(), scores_path)
    if n_objects == 0:
        raise ValidationError("no records in input")
    click.echo(f"scored {n_objects} records in mode {mode!r} -> {scores_path}")

    for s in sources:
        report = {
            "mean_noisy": noisy_totals[s] / n_objects,
            "eps_gt": cfg.eps_gt,
            "eps_neg": cfg.eps_neg,
            "source": s,
            "n_objects": n_objects,
        }
        path = out_dir / f"noisy_{s.replace(':', '_')}.json"
        io.write_json(report, path)
        click.echo(f"mean noisy per object [{s}]: {report['mean_noisy']:.4f} -> {path}")
    for split in ("correct", "incorrect"):
        io.write_histogram_csv(_histogram_from_counts(counts[split], edges),
                               out_dir / f"density_{split}.csv")

    dets = io.read_detections(params["detections_path"])
    gts = io.read_ground_truths(params["gt_path"])
    report = evaluate(dets, gts, categories, iou_kind=params["iou_kind"])
    eval_path = out_dir / "eval_report.json"
    io.write_eval_report(report, eval_path)

    def fmt(v):
        return "n/a" if v is None else f"{v:.4f}"

    click.echo(
        f"AP {fmt(report.ap)}  AP50 {fmt(report.ap50)}  AP75 {fmt(report.ap75)}  "
        f"AP_r {fmt(report.ap_r)}  AP_c {fmt(report.ap_c)}  AP_f {fmt(report.ap_f)} "
        f"-> {eval_path}")


if __name__ == "__main__":
    main()
