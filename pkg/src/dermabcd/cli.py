"""Command-line front end and batch orchestration.

Exit codes: 0 when every image succeeded, 1 when some failed, 2 for usage or
configuration errors. Set ``DERMABCD_LOG`` (e.g. ``DEBUG``) for verbose logs.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import click
import numpy as np

from . import __version__
from .classify import Dataset, MlpConfig, fit_model, holdout_eval, load_model, save_model
from .evaluate import BENIGN, MALIGNANT, border_error, render_phantom, standard_suite
from .features import FeatureConfig, FeatureVector, extract_features
from .imgcore import ImageError, read_gray8, read_mask, read_rgb, write_gray, write_mask, write_rgb
from .preprocess import HairDetectorParams, InpaintParams, remove_hair
from .segment import (
    METHODS,
    SeedMap,
    SegmentationConfig,
    SegmentationError,
    segment,
)

log = logging.getLogger("dermabcd")

EXIT_OK, EXIT_PARTIAL, EXIT_USAGE = 0, 1, 2
LABELS = {"benign": BENIGN, "malignant": MALIGNANT}
LABEL_NAMES = {v: k for k, v in LABELS.items()}
IMAGE_SUFFIXES = (".png",)
MASK_SUFFIXES = (".png", ".pgm")


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# configuration


@dataclass
class IoConfig:
    input_dir: str = ""
    output_dir: str = ""
    mask_dir: str = ""
    labels: str = ""


@dataclass
class PipelineConfig:
    hair: HairDetectorParams = field(default_factory=HairDetectorParams)
    inpaint: InpaintParams = field(default_factory=InpaintParams)
    segmentation: SegmentationConfig = field(default_factory=SegmentationConfig)
    features: FeatureConfig = field(default_factory=FeatureConfig)
    classifier: MlpConfig = field(default_factory=MlpConfig)
    io: IoConfig = field(default_factory=IoConfig)
    workers: int = 0

    def to_dict(self) -> dict:
        return _plain(asdict(self))

    def hash(self) -> str:
        """Digest of the processing settings (paths and worker count excluded)."""
        d = self.to_dict()
        d.pop("io")
        d.pop("workers")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]

    def validate(self) -> None:
        if self.segmentation.method not in METHODS:
            raise ConfigError(f"unknown segmentation method {self.segmentation.method!r}")
        try:
            self.hair.validate()
            self.inpaint.validate()
            self.segmentation.levelset.validate()
            self.segmentation.meanshift.validate()
            self.classifier.validate()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


def _build(cls, data: dict, where: str):
    """Instantiate a (possibly nested) dataclass from a dict, rejecting unknown keys."""
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object")
    known = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(known)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    kwargs = {}
    default = cls()
    for name, value in data.items():
        current = getattr(default, name)
        if dataclasses.is_dataclass(current):
            kwargs[name] = _build(type(current), value, f"{where}.{name}")
        elif isinstance(current, tuple):
            kwargs[name] = tuple(tuple(v) if isinstance(v, list) else v for v in value)
        else:
            kwargs[name] = value
    return cls(**kwargs)


def load_config(path: str | None, overrides: tuple[str, ...] = ()) -> PipelineConfig:
    data: dict[str, Any] = {}
    if path:
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
    for item in overrides:
        key, sep, raw = item.partition("=")
        if not sep or not key:
            raise ConfigError(f"override {item!r} is not key=value")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = data
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
        node[parts[-1]] = value
    try:
        cfg = _build(PipelineConfig, data, "config")
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    cfg.validate()
    return cfg


# ---------------------------------------------------------------------------
# ingestion


@dataclass
class ImageRecord:
    id: str
    path: Path
    label: int | None = None


@dataclass
class IngestResult:
    records: list[ImageRecord]
    problems: dict[str, str]

    @property
    def labeled(self) -> int:
        return sum(r.label is not None for r in self.records)

    @property
    def unlabeled(self) -> int:
        return len(self.records) - self.labeled


def read_labels(path: str | Path) -> tuple[dict[str, int], dict[str, str]]:
    labels, problems = {}, {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            rid = (row.get("id") or "").strip()
            name = (row.get("label") or "").strip().lower()
            if not rid:
                continue
            if name not in LABELS:
                problems[rid] = f"unknown label {name!r}"
            elif rid in labels:
                problems[rid] = "duplicate id in labels file"
            else:
                labels[rid] = LABELS[name]
    return labels, problems


def ingest(directory: str | Path, labels_csv: str | Path | None = None) -> IngestResult:
    """List PNG images (ids are file stems) and join labels where given.

    Problems (duplicate ids, unknown labels, labels without an image) are
    collected per id instead of aborting. Unreadable images surface when the
    image is loaded, so they fail only their own record.
    """
    directory = Path(directory)
    records: dict[str, ImageRecord] = {}
    problems: dict[str, str] = {}
    for path in sorted(directory.iterdir()):
        if path.suffix.lower() not in IMAGE_SUFFIXES or not path.is_file():
            continue
        if path.stem in records:
            problems[path.stem] = "duplicate image id"
            continue
        records[path.stem] = ImageRecord(path.stem, path)
    if labels_csv:
        labels, label_problems = read_labels(labels_csv)
        problems.update(label_problems)
        for rid, label in labels.items():
            if rid in records:
                records[rid].label = label
            else:
                log.warning("label for %s has no image; skipped", rid)
    out = IngestResult([records[k] for k in sorted(records)], problems)
    log.info("ingested %d images (%d labeled, %d unlabeled)", len(out.records), out.labeled, out.unlabeled)
    return out


# ---------------------------------------------------------------------------
# CSV helpers


def _fmt(v: float) -> str:
    return repr(float(v))


def feature_header(with_mm: bool) -> list[str]:
    return ["id", *FeatureVector.COLUMNS, *(["diam_mm"] if with_mm else []), "label"]


def feature_row(rid: str, vec: FeatureVector, label: int | None) -> list[str]:
    return [rid, *(_fmt(v) for v in vec.values()), LABEL_NAMES.get(label, "") if label is not None else ""]


def write_feature_csv(path: str | Path, rows: list[tuple[str, FeatureVector, int | None]]) -> None:
    with_mm = any(vec.diameter_mm is not None for _, vec, _ in rows)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(feature_header(with_mm))
        for rid, vec, label in sorted(rows, key=lambda r: r[0]):
            w.writerow(feature_row(rid, vec, label))


def read_feature_csv(path: str | Path) -> tuple[list[str], np.ndarray, list[int | None], list[dict]]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if rows and any(c not in rows[0] for c in FeatureVector.COLUMNS):
        raise ConfigError(f"{path}: missing feature columns")
    ids = [r["id"] for r in rows]
    x = np.array([[float(r[c]) for c in FeatureVector.COLUMNS] for r in rows], dtype=np.float64).reshape(-1, 10)
    labels = []
    for r in rows:
        name = (r.get("label") or "").strip().lower()
        if name and name not in LABELS:
            raise ConfigError(f"{path}: unknown label {name!r} for {r['id']}")
        labels.append(LABELS.get(name))
    return ids, x, labels, rows


# ---------------------------------------------------------------------------
# pipeline


@dataclass
class ImageOutcome:
    id: str
    status: str
    stage: str = ""
    reason: str = ""
    timings: dict[str, float] = field(default_factory=dict)
    features: FeatureVector | None = None
    label: int | None = None
    outputs: list[str] = field(default_factory=list)


def _find_mask(mask_dir: Path, rid: str) -> Path | None:
    for suffix in MASK_SUFFIXES:
        p = mask_dir / f"{rid}{suffix}"
        if p.exists():
            return p
    return None


def write_stages(directory: Path, stages: dict[str, np.ndarray]) -> None:
    """Write intermediate rasters as PNG: masks 0/255, label images spread over 0..255."""
    directory.mkdir(parents=True, exist_ok=True)
    for name, value in sorted(stages.items()):
        path = directory / f"{name}.png"
        if value.dtype == bool:
            write_mask(path, value)
            continue
        if np.issubdtype(value.dtype, np.integer) and value.dtype != np.uint8:
            value = value / max(int(value.max()), 1)
        if value.ndim == 3:
            if value.dtype != np.uint8:
                value = np.rint(np.clip(value, 0.0, 1.0) * 255).astype(np.uint8)
            write_rgb(path, value)
        else:
            write_gray(path, value)


def process_image(record: ImageRecord, cfg: PipelineConfig, out_dir: Path, dump_stages: bool) -> ImageOutcome:
    """Run one image through hair removal, segmentation and feature extraction."""
    outcome = ImageOutcome(record.id, "ok", label=record.label)
    stage = "ingest"
    try:
        t = time.perf_counter()
        img = read_rgb(record.path)
        outcome.timings[stage] = time.perf_counter() - t

        stage = "preprocess"
        t = time.perf_counter()
        clean, hairs = remove_hair(img, cfg.hair, cfg.inpaint, return_mask=True)
        outcome.timings[stage] = time.perf_counter() - t

        stage = "segment"
        t = time.perf_counter()
        stages: dict = {}
        mask = segment(clean, cfg.segmentation, stages=stages)
        outcome.timings[stage] = time.perf_counter() - t
        mask_path = out_dir / "masks" / f"{record.id}.png"
        write_mask(mask_path, mask)
        outcome.outputs.append(str(mask_path.relative_to(out_dir)))

        stage = "features"
        t = time.perf_counter()
        outcome.features = extract_features(clean, mask, cfg.features)
        outcome.timings[stage] = time.perf_counter() - t

        if dump_stages:
            sdir = out_dir / "stages" / record.id
            write_stages(sdir, {"hair_mask": hairs, "hair_removed": clean, **stages})
            outcome.outputs.extend(sorted(str(p.relative_to(out_dir)) for p in sdir.iterdir()))
    except Exception as exc:  # isolate every failure to its own image
        log.warning("%s failed at %s: %s", record.id, stage, exc)
        outcome.status, outcome.stage, outcome.reason = "failed", stage, f"{type(exc).__name__}: {exc}"
        outcome.features = None
    return outcome


def _worker_count(cfg: PipelineConfig, n_items: int) -> int:
    width = cfg.workers if cfg.workers > 0 else (os.cpu_count() or 1)
    return max(1, min(width, n_items))


def _run_all(fn, items, workers: int):
    if workers == 1:
        return [fn(*args) for args in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(fn, *args) for args in items]
        return [f.result() for f in futures]


@dataclass
class PipelineResult:
    outcomes: list[ImageOutcome]
    manifest_path: Path
    features_path: Path

    @property
    def failures(self) -> int:
        return sum(o.status != "ok" for o in self.outcomes)


def run_pipeline(cfg: PipelineConfig, *, model_path: str | None = None,
                 dump_stages: bool = False) -> PipelineResult:
    """Process every image under ``cfg.io.input_dir`` and write CSV, masks and a manifest."""
    out_dir = Path(cfg.io.output_dir)
    (out_dir / "masks").mkdir(parents=True, exist_ok=True)
    ingested = ingest(cfg.io.input_dir, cfg.io.labels or None)
    records = [r for r in ingested.records if r.id not in ingested.problems]

    jobs = [(r, cfg, out_dir, dump_stages) for r in records]
    outcomes = _run_all(process_image, jobs, _worker_count(cfg, len(jobs)))
    for rid, reason in sorted(ingested.problems.items()):
        if not any(o.id == rid for o in outcomes):
            outcomes.append(ImageOutcome(rid, "failed", "ingest", reason))
    outcomes.sort(key=lambda o: o.id)

    features_path = out_dir / "features.csv"
    ok = [(o.id, o.features, o.label) for o in outcomes if o.status == "ok"]
    write_feature_csv(features_path, ok)
    outputs = ["features.csv"]

    if model_path:
        model = load_model(model_path)
        pred_path = out_dir / "predictions.csv"
        with open(pred_path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["id", "prediction", "score"])
            if ok:
                scores = model.score(np.vstack([vec.as_array() for _, vec, _ in ok]))
                for (rid, _, _), s in zip(ok, scores):
                    w.writerow([rid, LABEL_NAMES[int(s >= 0.5)], _fmt(s)])
        outputs.append("predictions.csv")

    manifest = {
        "tool": "dermabcd",
        "version": __version__,
        "config_hash": cfg.hash(),
        "config": cfg.to_dict(),
        "outputs": outputs + sorted(p for o in outcomes for p in o.outputs),
        "images": {
            o.id: {
                "status": o.status if o.status == "ok" else f"failed({o.stage})",
                **({"reason": o.reason} if o.reason else {}),
                "timings": {k: round(v, 4) for k, v in o.timings.items()},
            }
            for o in outcomes
        },
    }
    manifest_path = out_dir / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return PipelineResult(outcomes, manifest_path, features_path)


# ---------------------------------------------------------------------------
# segmentation benchmark


@dataclass
class BenchRow:
    id: str
    errors: dict[str, float]
    seconds: dict[str, float]


def _bench_one(record: ImageRecord, mask_path: Path, cfg: PipelineConfig) -> BenchRow:
    truth = read_mask(mask_path)
    clean = remove_hair(read_rgb(record.path), cfg.hair, cfg.inpaint)
    errors, seconds = {}, {}
    for method in METHODS:
        seg_cfg = dataclasses.replace(cfg.segmentation, method=method)
        t = time.perf_counter()
        try:
            auto = segment(clean, seg_cfg)
        except (SegmentationError, ImageError) as exc:
            log.warning("%s: %s failed (%s); scored as an empty mask", record.id, method, exc)
            auto = np.zeros_like(truth)
        seconds[method] = time.perf_counter() - t
        errors[method] = border_error(auto, truth)
    return BenchRow(record.id, errors, seconds)


def bench_segmentation(cfg: PipelineConfig) -> list[BenchRow]:
    """Border error of every engine on every image with a manual mask."""
    ingested = ingest(cfg.io.input_dir)
    mask_dir = Path(cfg.io.mask_dir)
    jobs = []
    for record in ingested.records:
        mask_path = _find_mask(mask_dir, record.id)
        if mask_path is None:
            log.warning("no manual mask for %s; skipped", record.id)
            continue
        jobs.append((record, mask_path, cfg))
    rows = _run_all(_bench_one, jobs, _worker_count(cfg, len(jobs)))
    return sorted(rows, key=lambda r: r.id)


def bench_summary(rows: list[BenchRow]) -> dict[str, float]:
    return {m: float(np.mean([r.errors[m] for r in rows])) for m in METHODS}


def format_bench_table(rows: list[BenchRow]) -> str:
    means = bench_summary(rows)
    head = f"{'':<16}" + "".join(f"{m:>12}" for m in METHODS)
    row = f"{'Border Error':<16}" + "".join(f"{means[m]:>11.2f}%" for m in METHODS)
    return head + "\n" + row


# ---------------------------------------------------------------------------
# click commands


def _setup_logging(level: str | None) -> None:
    name = (level or os.environ.get("DERMABCD_LOG") or "WARNING").upper()
    logging.basicConfig(level=getattr(logging, name, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def _config_or_exit(ctx: click.Context, path: str | None, overrides: tuple[str, ...]) -> PipelineConfig:
    try:
        return load_config(path, overrides)
    except ConfigError as exc:
        click.echo(f"configuration error: {exc}", err=True)
        ctx.exit(EXIT_USAGE)


config_option = click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
                             help="JSON pipeline configuration.")
set_option = click.option("--set", "overrides", multiple=True, metavar="KEY=VALUE",
                          help="Override a config entry, e.g. segmentation.levelset.nu=0.5.")


@click.group()
@click.version_option(__version__)
@click.option("--log-level", default=None, help="Logging level (default from DERMABCD_LOG).")
def main(log_level):
    """Dermoscopy lesion analysis: hair removal, segmentation, ABCD features, MLP."""
    _setup_logging(log_level)


@main.command()
@click.option("--in", "src", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "dst", required=True, type=click.Path(dir_okay=False))
@click.option("--hair-mask", type=click.Path(dir_okay=False), help="Also write the refined hair mask.")
@config_option
@set_option
@click.pass_context
def preprocess(ctx, src, dst, hair_mask, config_path, overrides):
    """Detect and inpaint hairs in one image."""
    cfg = _config_or_exit(ctx, config_path, overrides)
    clean, mask = remove_hair(read_rgb(src), cfg.hair, cfg.inpaint, return_mask=True)
    write_rgb(dst, clean)
    if hair_mask:
        write_mask(hair_mask, mask)
    click.echo(f"{int(mask.sum())} hair pixels inpainted")


@main.command("segment")
@click.option("--in", "src", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "dst", required=True, type=click.Path(dir_okay=False))
@click.option("--method", type=click.Choice(METHODS), default=None)
@click.option("--params", "params_path", type=click.Path(exists=True, dir_okay=False),
              help="JSON object of parameters for the chosen method.")
@click.option("--seeds", type=click.Path(exists=True, dir_okay=False),
              help="GrowCut seed image: 255 object, 0 background, other values unlabeled.")
@click.option("--dump-stages", "stage_dir", type=click.Path(file_okay=False),
              help="Directory for the intermediate images.")
@click.option("--no-hair-removal", is_flag=True)
@config_option
@set_option
@click.pass_context
def segment_cmd(ctx, src, dst, method, params_path, seeds, stage_dir, no_hair_removal,
                config_path, overrides):
    """Segment one image and write the lesion mask."""
    method = method or "levelset"
    if params_path:
        section = {"levelset": "levelset", "meanshift": "meanshift"}.get(method)
        if section is None:
            click.echo("growcut takes no numeric parameters; use --seeds", err=True)
            ctx.exit(EXIT_USAGE)
        params = json.loads(Path(params_path).read_text())
        overrides = tuple(f"segmentation.{section}.{k}={json.dumps(v)}" for k, v in params.items()) + overrides
    cfg = _config_or_exit(ctx, config_path, overrides)
    cfg.segmentation.method = method
    img = read_rgb(src)
    stages: dict = {"input": img}
    if not no_hair_removal:
        img, hairs = remove_hair(img, cfg.hair, cfg.inpaint, return_mask=True)
        stages.update(hair_mask=hairs, hair_removed=img)
    seed_map = None
    if seeds:
        seed_map = SeedMap.from_image(np.asarray(read_gray8(seeds)))
    try:
        mask = segment(img, cfg.segmentation, seeds=seed_map, stages=stages)
    except (SegmentationError, ImageError) as exc:
        click.echo(f"segmentation failed: {exc}", err=True)
        ctx.exit(EXIT_PARTIAL)
    write_mask(dst, mask)
    if stage_dir:
        write_stages(Path(stage_dir), {**stages, "mask": mask})
    click.echo(f"lesion area {int(mask.sum())} px")


@main.command()
@click.option("--in", "src", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--mask", "mask_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "dst", required=True, type=click.Path(dir_okay=False))
@click.option("--id", "rid", default=None, help="Row id (default: image file stem).")
@click.option("--label", type=click.Choice(sorted(LABELS)), default=None)
@config_option
@set_option
@click.pass_context
def features(ctx, src, mask_path, dst, rid, label, config_path, overrides):
    """Compute the ten ABCD features of one segmented lesion."""
    cfg = _config_or_exit(ctx, config_path, overrides)
    try:
        vec = extract_features(read_rgb(src), read_mask(mask_path), cfg.features)
    except ImageError as exc:
        click.echo(f"feature extraction failed: {exc}", err=True)
        ctx.exit(EXIT_PARTIAL)
    write_feature_csv(dst, [(rid or Path(src).stem, vec, LABELS.get(label))])


@main.command()
@click.option("--features", "features_csv", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "dst", required=True, type=click.Path(dir_okay=False))
@config_option
@set_option
@click.option("--eval-runs", type=int, default=0, help="Also report a holdout evaluation over this many runs.")
@click.option("--split", type=float, default=0.7, show_default=True)
@click.pass_context
def train(ctx, features_csv, dst, config_path, overrides, eval_runs, split):
    """Train the MLP on labeled feature rows and save the model as JSON.

    The config may be a full pipeline config or just its ``classifier`` block.
    """
    if config_path:
        raw = json.loads(Path(config_path).read_text())
        if "classifier" not in raw and not any(k in raw for k in ("hair", "segmentation", "features")):
            overrides = tuple(f"classifier.{k}={json.dumps(v)}" for k, v in raw.items()) + overrides
            config_path = None
    cfg = _config_or_exit(ctx, config_path, overrides)
    try:
        ids, x, labels, _ = read_feature_csv(features_csv)
    except (ConfigError, ValueError, KeyError) as exc:
        click.echo(f"cannot read features: {exc}", err=True)
        ctx.exit(EXIT_USAGE)
    keep = [i for i, lab in enumerate(labels) if lab is not None]
    data = Dataset([ids[i] for i in keep], x[keep], [labels[i] for i in keep])
    if len(set(data.y.tolist())) < 2:
        click.echo("training needs both benign and malignant rows", err=True)
        ctx.exit(EXIT_USAGE)
    model, errors = fit_model(data, cfg.classifier)
    save_model(dst, model)
    click.echo(f"trained on {len(data)} rows; final error {errors[-1]:.4f} after {len(errors)} passes")
    if eval_runs:
        report = holdout_eval(data, cfg.classifier, split=split, runs=eval_runs, seed=cfg.classifier.rng_seed)
        click.echo(report.table(f"{cfg.classifier.hidden}"))


@main.command()
@click.option("--model", "model_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--features", "features_csv", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "dst", type=click.Path(dir_okay=False), help="Output CSV (default: stdout).")
@click.pass_context
def classify(ctx, model_path, features_csv, dst):
    """Append prediction and score columns to a feature CSV."""
    try:
        model = load_model(model_path)
        _, x, _, rows = read_feature_csv(features_csv)
    except (ConfigError, ValueError, KeyError) as exc:
        click.echo(f"classification failed: {exc}", err=True)
        ctx.exit(EXIT_USAGE)
    scores = model.score(x) if len(rows) else np.zeros(0)
    header = list(rows[0].keys()) if rows else ["id"]
    fh = open(dst, "w", newline="") if dst else sys.stdout
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header + ["prediction", "score"])
        for row, s in zip(rows, scores):
            w.writerow([row[k] for k in header] + [LABEL_NAMES[int(s >= 0.5)], _fmt(s)])
    finally:
        if dst:
            fh.close()


@main.command()
@click.option("--images", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--masks", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--out", "dst", type=click.Path(dir_okay=False), help="Per-image CSV of border errors.")
@click.option("--workers", type=int, default=None)
@config_option
@set_option
@click.pass_context
def bench(ctx, images, masks, dst, workers, config_path, overrides):
    """Border error of all three segmentation engines against manual masks."""
    cfg = _config_or_exit(ctx, config_path, overrides)
    cfg.io.input_dir, cfg.io.mask_dir = images, masks
    if workers is not None:
        cfg.workers = workers
    rows = bench_segmentation(cfg)
    if not rows:
        click.echo("no images with manual masks", err=True)
        ctx.exit(EXIT_USAGE)
    if dst:
        with open(dst, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["id", *METHODS, *(f"{m}_s" for m in METHODS)])
            for r in rows:
                w.writerow([r.id, *(_fmt(r.errors[m]) for m in METHODS),
                            *(f"{r.seconds[m]:.3f}" for m in METHODS)])
    click.echo(format_bench_table(rows))


@main.group("evaluate")
def evaluate_group():
    """Compare masks against ground truth."""


@evaluate_group.command("borders")
@click.option("--auto", "auto_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--manual", "manual_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--out", "dst", type=click.Path(dir_okay=False), help="CSV output (default: stdout).")
@click.pass_context
def evaluate_borders(ctx, auto_dir, manual_dir, dst):
    """Border error of every automatic mask with a manual counterpart."""
    rows = []
    for path in sorted(Path(manual_dir).iterdir()):
        if path.suffix.lower() not in MASK_SUFFIXES:
            continue
        auto_path = _find_mask(Path(auto_dir), path.stem)
        if auto_path is None:
            log.warning("no automatic mask for %s; skipped", path.stem)
            continue
        try:
            rows.append((path.stem, border_error(read_mask(auto_path), read_mask(path))))
        except ImageError as exc:
            log.warning("%s: %s", path.stem, exc)
    if not rows:
        click.echo("no mask pairs found", err=True)
        ctx.exit(EXIT_USAGE)
    errs = np.array([e for _, e in rows])
    fh = open(dst, "w", newline="") if dst else sys.stdout
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "border_error_pct"])
        for rid, e in rows:
            w.writerow([rid, _fmt(e)])
        w.writerow(["mean", _fmt(errs.mean())])
        w.writerow(["std", _fmt(errs.std())])
    finally:
        if dst:
            fh.close()


@main.command()
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--count", type=int, default=20, show_default=True)
@click.option("--size", type=int, default=512, show_default=True)
@click.option("--noise", type=float, default=0.05, show_default=True)
@click.option("--hairs", type=int, default=5, show_default=True)
@click.option("--softness", type=float, default=2.0, show_default=True, help="Border width in pixels.")
@click.option("--seed", type=int, default=2024, show_default=True)
@click.option("--labels", "with_labels", is_flag=True,
              help="Write labels.csv marking the more irregular half of the suite malignant.")
def phantom(out_dir, count, size, noise, hairs, softness, seed, with_labels):
    """Write the synthetic phantom suite: images plus ground-truth masks."""
    out = Path(out_dir)
    (out / "masks").mkdir(parents=True, exist_ok=True)
    specs = standard_suite(count=count, size=size, noise_sigma=noise, hair_count=hairs,
                           edge_softness=softness, seed=seed)
    roughness = []
    for i, spec in enumerate(specs):
        ph = render_phantom(spec)
        rid = f"ph_{i:03d}"
        write_rgb(out / f"{rid}.png", ph.image)
        write_mask(out / "masks" / f"{rid}.png", ph.truth)
        roughness.append((sum(a * k for k, a in spec.harmonics.items()), rid))
    if with_labels:
        ranked = sorted(roughness)
        malignant = {rid for _, rid in ranked[len(ranked) // 2:]}
        with open(out / "labels.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["id", "label"])
            for _, rid in sorted(roughness, key=lambda t: t[1]):
                w.writerow([rid, "malignant" if rid in malignant else "benign"])
    click.echo(f"wrote {len(specs)} phantoms to {out}")


@main.command()
@click.option("--images", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--labels", type=click.Path(exists=True, dir_okay=False))
@click.option("--model", "model_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--method", type=click.Choice(METHODS), default=None)
@click.option("--workers", type=int, default=None, help="Worker processes (default: CPU count).")
@click.option("--dump-stages", is_flag=True, help="Write every intermediate image.")
@config_option
@set_option
@click.pass_context
def pipeline(ctx, images, out_dir, labels, model_path, method, workers, dump_stages, config_path, overrides):
    """Hair removal, segmentation, features (and classification) for a directory."""
    cfg = _config_or_exit(ctx, config_path, overrides)
    cfg.io.input_dir, cfg.io.output_dir = images, out_dir
    cfg.io.labels = labels or ""
    if method:
        cfg.segmentation.method = method
    if workers is not None:
        cfg.workers = workers
    result = run_pipeline(cfg, model_path=model_path, dump_stages=dump_stages)
    n_ok = len(result.outcomes) - result.failures
    click.echo(f"{n_ok} ok, {result.failures} failed; manifest at {result.manifest_path}")
    ctx.exit(EXIT_PARTIAL if result.failures else EXIT_OK)

