"""Command-line entry points.

One binary, five subcommands: synth (generate a synthetic dataset),
build-db (train frames -> exemplar database), estimate (per-frame scan
predictions), evaluate (scoring reports), and serve (the annotation
service). Every command is deterministic given its inputs, seed, and
config. A JSON config file can pre-set any flag; explicit flags win.

Exit codes: 0 success, 1 usage error, 2 data error, 3 internal error.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import numpy as np

from .datasets import (Annotation, Dataset, ExemplarDb, load_dataset,
                       load_exemplar_db, save_exemplar_db, write_dataset)
from .errors import DataFormatError, VoxhandError
from .evaluate import EvalReport, annotator_agreement, score_frame
from .kinematics import HandPose, default_skeleton
from .pipeline import BuildStats, build_exemplar_database, detect_frame
from .render import GenerationStats, RenderConfig, generate_set
from .skeleton import JOINT_NAMES
from .voxels import GridConfig, TemplateIndex, default_detection_threshold

PREDICTIONS_VERSION = 1


def _grid_options(fn):
    fn = click.option("--scene-side", type=int, default=200, show_default=True,
                      help="Scene grid side, voxels.")(fn)
    fn = click.option("--template-side", type=int, default=30, show_default=True,
                      help="Template grid side, voxels.")(fn)
    fn = click.option("--voxel-size", type=float, default=10.0, show_default=True,
                      help="Voxel edge length, mm.")(fn)
    fn = click.option("--z-start", type=float, default=0.0, show_default=True,
                      help="Metric z of the scene grid's near face, mm.")(fn)
    return fn


def _grid_from(scene_side, template_side, voxel_size, z_start) -> GridConfig:
    return GridConfig.centered(scene_side, template_side, voxel_size, z_start)


@click.group()
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="JSON file with default values for any flag.")
@click.pass_context
def cli(ctx, config_path):
    if config_path:
        ctx.default_map = json.loads(Path(config_path).read_text())


@cli.command()
@click.option("--count", type=int, required=True, help="Number of frames.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(), required=True, help="Dataset directory.")
@click.option("--width", type=int, default=160, show_default=True)
@click.option("--height", type=int, default=120, show_default=True)
@click.option("--name", default=None, help="Dataset name (default: directory name).")
def synth(count, seed, out, width, height, name):
    """Generate a synthetic depth dataset with exact annotations."""
    skeleton = default_skeleton()
    config = RenderConfig.default(width=width, height=height)
    stats = GenerationStats()
    samples = generate_set(count, seed, config, skeleton, stats=stats)
    frames = [(f"frame{i:05d}", s.frame.depth, [Annotation("synthetic", s.pose)])
              for i, s in enumerate(samples)]
    out = Path(out)
    write_dataset(out, name or out.name, config.intrinsics, frames)
    click.echo(f"wrote {count} frames to {out} "
               f"({stats.render_retries} render retries)")


@cli.command("build-db")
@click.option("--dataset", "dataset_path", type=click.Path(exists=True, file_okay=False),
              required=True)
@click.option("--out", type=click.Path(), required=True, help="Exemplar DB file.")
@click.option("--annotator", default=None,
              help="Annotator whose poses become templates (default: first).")
@_grid_options
def build_db(dataset_path, out, annotator, scene_side, template_side, voxel_size, z_start):
    """Build an exemplar database from an annotated training set."""
    dataset = load_dataset(dataset_path)
    grid = _grid_from(scene_side, template_side, voxel_size, z_start)
    annotator = annotator or _first_annotator(dataset)
    stats = BuildStats()
    frames = [(rec.frame_id, frame,
               [a.pose for a in rec.annotations if a.annotator == annotator])
              for rec, frame in dataset.frames()]
    templates = build_exemplar_database(frames, grid, stats=stats)
    if not templates:
        raise DataFormatError(
            f"no usable exemplars out of {stats.attempted} annotations "
            f"(first rejection: {stats.rejected[0][1] if stats.rejected else 'none'})")
    save_exemplar_db(ExemplarDb(config=grid, templates=templates), out)
    click.echo(f"built {stats.built}/{stats.attempted} exemplars -> {out}")
    for source, reason in stats.rejected[:5]:
        click.echo(f"  rejected {source}: {reason}", err=True)


@cli.command()
@click.option("--dataset", "dataset_path", type=click.Path(exists=True, file_okay=False),
              required=True)
@click.option("--db", "db_path", type=click.Path(exists=True, dir_okay=False),
              required=True)
@click.option("--out", type=click.Path(), required=True, help="Predictions JSON.")
@click.option("--tau-det", type=float, default=None,
              help="Detection acceptance bound, differing voxels "
                   "(default 0.35 * template_side^3).")
@click.option("--workers", type=int, default=1, show_default=True)
def estimate(dataset_path, db_path, out, tau_det, workers):
    """Scan every frame against the exemplar DB; write per-frame predictions."""
    dataset = load_dataset(dataset_path)
    db = load_exemplar_db(db_path)
    if tau_det is None:
        tau_det = default_detection_threshold(db.config)
    index = TemplateIndex(db.templates, db.config)
    results = []
    for rec, frame in dataset.frames():
        det = detect_frame(frame, index, workers=workers)
        if det is None or not det.accepted(tau_det):
            results.append({"id": rec.frame_id, "prediction": None,
                            "distance": None if det is None else det.distance,
                            "position": None})
        else:
            joints = {name: [float(v) for v in det.pose.joints[i]]
                      for i, name in enumerate(JOINT_NAMES)}
            results.append({"id": rec.frame_id,
                            "prediction": {"joints": joints},
                            "distance": det.distance,
                            "position": list(det.position),
                            "exemplar": index.templates[det.exemplar_id].source_id})
    payload = {"schema_version": PREDICTIONS_VERSION,
               "dataset": dataset.manifest.name,
               "tau_det": tau_det,
               "frames": results}
    Path(out).write_text(json.dumps(payload, indent=1))
    n_hit = sum(r["prediction"] is not None for r in results)
    click.echo(f"estimated {len(results)} frames ({n_hit} detections) -> {out}")


def _first_annotator(dataset: Dataset) -> str:
    names = sorted({a.annotator for rec in dataset.manifest.frames
                    for a in rec.annotations})
    if not names:
        raise DataFormatError(f"dataset {dataset.manifest.name} has no annotations")
    return names[0]


def _load_predictions(path) -> dict:
    raw = json.loads(Path(path).read_text())
    if raw.get("schema_version") != PREDICTIONS_VERSION:
        raise DataFormatError(f"{path}: unsupported predictions schema")
    return raw


@cli.command()
@click.option("--predictions", "pred_path", type=click.Path(exists=True, dir_okay=False),
              required=True)
@click.option("--dataset", "dataset_path", type=click.Path(exists=True, file_okay=False),
              required=True)
@click.option("--mode", type=click.Choice(["max", "mean"]), default="max",
              show_default=True)
@click.option("--gt-annotator", default=None,
              help="Annotator treated as ground truth (default: first).")
@click.option("--out-prefix", type=click.Path(), required=True,
              help="Writes <prefix>.json, <prefix>.csv, <prefix>.svg.")
def evaluate(pred_path, dataset_path, mode, gt_annotator, out_prefix):
    """Score predictions against ground truth and emit report files."""
    dataset = load_dataset(dataset_path)
    raw = _load_predictions(pred_path)
    by_id = {r["id"]: r for r in raw["frames"]}
    ids = [rec.frame_id for rec in dataset.manifest.frames]
    if sorted(by_id) != sorted(ids):
        raise DataFormatError(
            f"predictions cover {len(by_id)} frames but the dataset has "
            f"{len(ids)}; ids must match")
    gt_annotator = gt_annotator or _first_annotator(dataset)
    scores = []
    for rec in dataset.manifest.frames:
        gts = [a.pose for a in rec.annotations if a.annotator == gt_annotator]
        entry = by_id[rec.frame_id]
        pred = None
        if entry["prediction"] is not None:
            joints = np.array([entry["prediction"]["joints"][n] for n in JOINT_NAMES])
            pred = HandPose(joints=joints, visible=np.ones(len(JOINT_NAMES), dtype=bool))
        scores.append(score_frame(pred, gts, mode=mode))
    report = EvalReport.from_scores(scores, mode)
    prefix = str(out_prefix)
    report.save_json(prefix + ".json")
    report.save_csv(prefix + ".csv")
    report.save_svg(prefix + ".svg")
    summary = " ".join(f"{k}={v:.3f}" for k, v in report.summary().items())
    click.echo(f"scored {len(scores)} frames [{mode}]: {summary}")


@cli.command()
@click.option("--dataset", "dataset_path", type=click.Path(exists=True, file_okay=False),
              required=True)
@click.option("--mode", type=click.Choice(["max", "mean"]), default="max",
              show_default=True)
@click.option("--out-prefix", type=click.Path(), required=True)
def agreement(dataset_path, mode, out_prefix):
    """Inter-annotator agreement curve for a multi-annotator dataset."""
    dataset = load_dataset(dataset_path)
    frames = []
    for rec in dataset.manifest.frames:
        first_by_annotator = {}
        for a in rec.annotations:
            first_by_annotator.setdefault(a.annotator, a.pose)
        frames.append(list(first_by_annotator.items()))
    try:
        report = annotator_agreement(frames, mode=mode)
    except ValueError as exc:
        raise DataFormatError(str(exc)) from exc
    prefix = str(out_prefix)
    report.save_json(prefix + ".json")
    report.save_csv(prefix + ".csv")
    report.save_svg(prefix + ".svg")
    click.echo(f"agreement at 20mm: {report.proportion_at(20.0):.3f}")


@cli.command()
@click.option("--dataset", "dataset_path", type=click.Path(exists=True, file_okay=False),
              required=True)
@click.option("--port", type=int, default=8787, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--annotations", "annotations_path", type=click.Path(), default=None,
              help="Annotation store (default: <dataset>/annotations.jsonl).")
@click.option("--ui-dir", type=click.Path(exists=True, file_okay=False), default=None,
              help="Built browser tool to serve at /ui (e.g. frontend/).")
def serve(dataset_path, port, host, annotations_path, ui_dir):
    """Serve the annotation API (and the browser tool that talks to it)."""
    import uvicorn

    from .service import create_app

    dataset = load_dataset(dataset_path)
    store = Path(annotations_path) if annotations_path else \
        Path(dataset_path) / "annotations.jsonl"
    app = create_app(dataset, annotations_path=store,
                     ui_dir=Path(ui_dir) if ui_dir else None)
    uvicorn.run(app, host=host, port=port, log_level="warning")


def main(argv=None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
        return 0
    except click.UsageError as exc:
        exc.show()
        return 1
    except click.ClickException as exc:
        exc.show()
        return 1
    except click.exceptions.Abort:
        return 1
    except VoxhandError as exc:
        click.echo(f"error: {exc}", err=True)
        return 2
    except Exception as exc:  # noqa: BLE001 - the CLI boundary
        click.echo(f"internal error: {exc.__class__.__name__}: {exc}", err=True)
        return 3


if __name__ == "__main__":
    sys.exit(main())
