"""``cherrymetrics`` command-line tool: synth | eval | extract | stats | report."""

from __future__ import annotations

import argparse
import csv
import io
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Sequence

from . import annot_io, phenotype, reporting, stats, synthgen
from .annot_io import DetectionSet, LabeledImage
from .errors import CherryMetricsError, JoinError, ParseError, RangeError, SchemaError
from .evaluation import EvalConfig, evaluate_dataset, nms
from .imaging import read_ppm, write_ppm

logger = logging.getLogger("cherrymetrics")

CONFIG_ENV = "CHERRYMETRICS_CONFIG"

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        raise UsageError(f"{self.prog}: {message}")


@dataclass
class RunConfig:
    classes: tuple[str, ...] = annot_io.DEFAULT_CLASSES
    ct: float = 0.5
    iou_threshold: float = 0.5
    nms_threshold: float | None = None
    mm_per_pixel: float | None = None
    palette: str | None = None
    shrink: float = 0.5
    rise: float = 0.5
    out: str = "out"
    jobs: int | None = None

    def validate(self) -> None:
        for name in ("ct", "iou_threshold", "nms_threshold"):
            v = getattr(self, name)
            if v is not None and not (0.0 <= v <= 1.0):
                raise RangeError(f"{name}={v} outside [0, 1]")
        if not (0 < self.shrink <= 1):
            raise RangeError(f"shrink={self.shrink} outside (0, 1]")
        if self.rise <= 0:
            raise RangeError(f"rise={self.rise} must be positive")
        if self.palette is not None and not Path(self.palette).is_file():
            raise FileNotFoundError(f"palette file not found: {self.palette}")


_CONFIG_TYPES = {
    "classes": lambda s: tuple(c.strip() for c in s.split(",") if c.strip()),
    "ct": float,
    "iou_threshold": float,
    "nms_threshold": float,
    "mm_per_pixel": float,
    "palette": str,
    "shrink": float,
    "rise": float,
    "out": str,
    "jobs": int,
}


def load_config_file(path: str | Path) -> dict[str, object]:
    """Read flat ``key = value`` lines; ``#`` starts a comment line."""
    values: dict[str, object] = {}
    for lineno, line in enumerate(Path(path).read_text("utf-8").splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ParseError(f"{path}:{lineno}: expected key=value")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in _CONFIG_TYPES:
            raise SchemaError(f"{path}:{lineno}: unknown config key {key!r}")
        try:
            values[key] = _CONFIG_TYPES[key](raw)
        except ValueError:
            raise ParseError(f"{path}:{lineno}: bad value for {key}: {raw!r}") from None
    return values


def resolve_config(args: argparse.Namespace) -> RunConfig:
    path = getattr(args, "config", None) or os.environ.get(CONFIG_ENV)
    values = load_config_file(path) if path else {}
    for key in _CONFIG_TYPES:
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = flag
    cfg = RunConfig(**values)
    cfg.validate()
    return cfg


def _utc_iso(epoch: float) -> str:
    return datetime.fromtimestamp(epoch, tz=timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def _timestamp_for(image_path: Path, explicit: str | None) -> str:
    if explicit:
        return explicit
    if "SOURCE_DATE_EPOCH" in os.environ:
        return _utc_iso(int(os.environ["SOURCE_DATE_EPOCH"]))
    return _utc_iso(image_path.stat().st_mtime)


def _read_detections(path: str) -> list[DetectionSet]:
    try:
        return annot_io.parse_detections_csv(Path(path).read_text("utf-8"))
    except CherryMetricsError as exc:
        raise type(exc)(f"{path}: {exc}") from None


def _read_truths(truth_dir: str | None, truth_files: Sequence[str], classes: Sequence[str]) -> list[LabeledImage]:
    paths = [Path(p) for p in truth_files]
    if truth_dir:
        paths += sorted(Path(truth_dir).glob("*.xml"))
    if not paths:
        raise UsageError("eval: no ground truth given (use --truth-dir or --truth)")
    out = []
    for p in paths:
        try:
            out.append(annot_io.parse_voc(p.read_bytes(), classes))
        except CherryMetricsError as exc:
            raise type(exc)(f"{p}: {exc}") from None
    return out


def _apply_filters(ds: DetectionSet, cfg: RunConfig, ct: float | None) -> DetectionSet:
    dets = list(ds.detections)
    if ct is not None:
        dets = [d for d in dets if d.confidence >= ct]
    if cfg.nms_threshold is not None:
        dets = nms(dets, cfg.nms_threshold)
    return DetectionSet(ds.image_id, tuple(dets))


# -- subcommands -------------------------------------------------------------

def cmd_synth(args: argparse.Namespace) -> int:
    cfg = resolve_config(args)
    out = Path(args.out or cfg.out)
    spec = synthgen.SceneSpec(
        width=args.width, height=args.height, cherry_count=args.count,
        radius_range=(args.radius_min, args.radius_max),
        min_separation=args.min_sep,
        mm_per_pixel=cfg.mm_per_pixel if cfg.mm_per_pixel is not None else 0.8,
        seed=args.seed, image_id=args.image_id,
        palette=phenotype.parse_palette(Path(cfg.palette).read_text("utf-8")) if cfg.palette else None,
    )
    scene = synthgen.generate_scene(spec)
    out.mkdir(parents=True, exist_ok=True)
    (out / "image.ppm").write_bytes(write_ppm(scene.image))
    (out / "truth.xml").write_text(annot_io.write_voc(scene.truth, cfg.classes), "utf-8")
    (out / "calibration.csv").write_text(
        phenotype.write_calibration_csv({spec.image_id: scene.calibration}), "utf-8")
    noise = None
    if args.detections:
        noise = synthgen.NoiseSpec(
            jitter_px=args.jitter, drop_prob=args.drop_prob, drop_count=args.drop_count,
            spurious_count=args.spurious, confidence_range=(args.conf_min, args.conf_max),
            seed=args.noise_seed if args.noise_seed is not None else args.seed,
        )
        ds = synthgen.perturb_detections(scene.truth, noise)
        (out / "detections.csv").write_text(annot_io.write_detections_csv([ds]), "utf-8")
    meta = synthgen.scene_metadata(spec, noise)
    (out / "meta.txt").write_text("".join(f"{k}={v}\n" for k, v in meta.items()), "utf-8")
    print(f"wrote scene {spec.image_id!r} ({spec.cherry_count} discs, seed {spec.seed}) to {out}")
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    cfg = resolve_config(args)
    truths = _read_truths(args.truth_dir, args.truth or [], cfg.classes)
    models = args.model or []
    if models and len(models) != len(args.dets):
        raise UsageError("eval: give one --model per --dets, or none")
    reports = []
    for k, det_path in enumerate(args.dets):
        det_sets = [_apply_filters(ds, cfg, None) for ds in _read_detections(det_path)]
        label = models[k] if models else Path(det_path).stem
        config = EvalConfig(ct=cfg.ct, iou_threshold=cfg.iou_threshold,
                            model_label=label, resize_label=args.resize or "")
        reports.append(evaluate_dataset(det_sets, truths, config))
    path = reporting.write_eval_report(reports, args.output or Path(cfg.out) / "eval_report.csv")
    sys.stdout.write(path.read_text("utf-8"))
    return EXIT_OK


def _image_paths(args: argparse.Namespace) -> list[tuple[str, Path]]:
    items = []
    for spec in args.image or []:
        image_id, sep, path = spec.partition("=")
        if not sep:
            path, image_id = spec, Path(spec).stem
        items.append((image_id, Path(path)))
    if args.image_dir:
        items += [(p.stem, p) for p in sorted(Path(args.image_dir).glob("*.ppm"))]
    if not items:
        raise UsageError("extract: no images given (use --image or --image-dir)")
    return items


def _calibrations(args: argparse.Namespace, cfg: RunConfig) -> tuple[dict, phenotype.ScaleCalibration | None]:
    sidecar = {}
    if args.calibration:
        sidecar = phenotype.parse_calibration_csv(Path(args.calibration).read_text("utf-8"))
    fallback = phenotype.ScaleCalibration(cfg.mm_per_pixel) if cfg.mm_per_pixel is not None else None
    return sidecar, fallback


def cmd_extract(args: argparse.Namespace) -> int:
    cfg = resolve_config(args)
    palette = (phenotype.parse_palette(Path(cfg.palette).read_text("utf-8"))
               if cfg.palette else phenotype.default_palette())
    sidecar, fallback = _calibrations(args, cfg)
    images = _image_paths(args)
    known = {image_id for image_id, _ in images}
    det_sets = {}
    for ds in _read_detections(args.dets):
        if ds.image_id not in known:
            raise JoinError(f"{args.dets}: detections for image_id {ds.image_id!r} have no image")
        det_sets[ds.image_id] = _apply_filters(ds, cfg, cfg.ct)
    xcfg = phenotype.ExtractConfig(shrink=cfg.shrink, rise=cfg.rise)

    def work(item: tuple[str, Path]) -> tuple[str, list[phenotype.CherryRecord], str]:
        image_id, path = item
        cal = sidecar.get(image_id, fallback)
        if cal is None:
            raise SchemaError(f"no mm_per_pixel calibration for image {image_id!r}")
        try:
            image = read_ppm(path.read_bytes())
        except CherryMetricsError as exc:
            raise type(exc)(f"{path}: {exc}") from None
        ds = det_sets.get(image_id, DetectionSet(image_id))
        records = phenotype.extract_records(image, ds, cal, palette, xcfg)
        return image_id, records, _timestamp_for(path, args.timestamp)

    with ThreadPoolExecutor(max_workers=cfg.jobs or os.cpu_count() or 1) as pool:
        results = list(pool.map(work, images))

    all_records, summaries, timestamps = [], [], {}
    for image_id, records, ts in sorted(results, key=lambda r: r[0]):
        if not records:
            logger.warning("image %s has no detections; left out of the summary", image_id)
            continue
        all_records += records
        summaries.append(phenotype.summarize(records, ts))
        timestamps[image_id] = ts
    out = Path(args.out or cfg.out)
    reporting.write_sheets(reporting.build_sheets(summaries, all_records), out)
    reporting.write_records_jsonl(all_records, timestamps, out / "records.jsonl")
    for s in summaries:
        print(f"{s.image_id}: count={s.count} avg_size_mm={reporting.fmt(s.avg_size_mm)}")
    return EXIT_OK


def _read_xy(path: str) -> tuple[list[float], list[float]]:
    text = Path(path).read_text("utf-8")
    rows = list(csv.reader(io.StringIO(text, newline="")))
    if not rows or len(rows[0]) < 2:
        raise SchemaError(f"{path}: expected a two-column header such as 'x,y'")
    xs, ys = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or not "".join(row).strip():
            continue
        try:
            xs.append(float(row[0]))
            ys.append(float(row[1]))
        except (IndexError, ValueError):
            raise ParseError(f"{path}: row {lineno}: expected two numbers, got {row}") from None
    return xs, ys


STATS_FIELDS = (
    "n", "r", "ci_low", "ci_high", "p_value", "covariance",
    "mean_x", "mean_y", "sd_x", "sd_y", "slope", "intercept", "r_squared",
)


def _g(v: float) -> str:
    return f"{v:.6g}"


def cmd_stats(args: argparse.Namespace) -> int:
    xs, ys = _read_xy(args.input)
    s = stats.bivariate_summary(xs, ys, args.level)
    pct = int(round(args.level * 100))
    p_text = "<.0001" if s.p_value < 1e-4 else _g(s.p_value)
    print(f"Correlation   {s.r:.6f}  (lower {pct}% {s.ci_low:.6f}, upper {pct}% {s.ci_high:.6f})")
    print(f"Signif. Prob  {p_text}")
    print(f"Covariance    {s.covariance:.6g}")
    print(f"Count         {s.n}")
    print(f"Mean x        {s.mean_x:.6g}   Std Dev x {s.sd_x:.6g}")
    print(f"Mean y        {s.mean_y:.6g}   Std Dev y {s.sd_y:.6g}")
    print(f"Linear fit    y = {s.slope:.6g} * x + {s.intercept:.6g}   R^2 = {s.r_squared:.6f}")
    print()
    print(",".join(STATS_FIELDS))
    print(",".join(str(s.n) if f == "n" else repr(getattr(s, f)) for f in STATS_FIELDS))
    if args.plot_data:
        rows = [(repr(x), repr(y), repr(s.slope * x + s.intercept)) for x, y in zip(xs, ys)]
        Path(args.plot_data).write_text(reporting._csv_text(("x", "y", "fitted_y"), rows), "utf-8")
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    records, timestamps = reporting.read_records_jsonl(args.records)
    by_image: dict[str, list] = {}
    for r in records:
        by_image.setdefault(r.image_id, []).append(r)
    summaries = [phenotype.summarize(recs, timestamps[i]) for i, recs in sorted(by_image.items())]
    out = Path(args.out or resolve_config(args).out)
    paths = reporting.write_sheets(reporting.build_sheets(summaries, records), out)
    for p in paths:
        print(p)
    return EXIT_OK


# -- parser ------------------------------------------------------------------

def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help=f"key=value config file (default: ${CONFIG_ENV})")
    p.add_argument("--classes", type=_CONFIG_TYPES["classes"], help="comma-separated class names")
    p.add_argument("--out", help="output directory")
    p.add_argument("--jobs", type=int, help="worker threads (default: all cores)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cherrymetrics", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="generate a synthetic disc scene")
    _add_common(p)
    p.add_argument("--width", type=int, default=1024)
    p.add_argument("--height", type=int, default=1024)
    p.add_argument("--count", type=int, default=100)
    p.add_argument("--radius-min", type=int, default=12)
    p.add_argument("--radius-max", type=int, default=20)
    p.add_argument("--min-sep", type=float, default=4.0)
    p.add_argument("--mm-per-pixel", dest="mm_per_pixel", type=float)
    p.add_argument("--palette")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--image-id", default="image")
    p.add_argument("--detections", action="store_true", help="also write detections.csv")
    p.add_argument("--jitter", type=float, default=0.0)
    p.add_argument("--drop-prob", type=float, default=0.0)
    p.add_argument("--drop-count", type=int, default=0)
    p.add_argument("--spurious", type=int, default=0)
    p.add_argument("--conf-min", type=float, default=0.5)
    p.add_argument("--conf-max", type=float, default=1.0)
    p.add_argument("--noise-seed", type=int)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("eval", help="score detections against VOC ground truth")
    _add_common(p)
    p.add_argument("--dets", action="append", required=True, help="detection CSV (repeatable)")
    p.add_argument("--model", action="append", help="model label per --dets")
    p.add_argument("--resize", help="free-text resize label")
    p.add_argument("--truth-dir")
    p.add_argument("--truth", action="append", help="VOC XML file (repeatable)")
    p.add_argument("--ct", type=float)
    p.add_argument("--iou-threshold", dest="iou_threshold", type=float)
    p.add_argument("--nms-threshold", dest="nms_threshold", type=float)
    p.add_argument("--output", help="report CSV path (default: <out>/eval_report.csv)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("extract", help="per-cherry traits and the four report sheets")
    _add_common(p)
    p.add_argument("--dets", required=True)
    p.add_argument("--image", action="append", help="PPM image, optionally ID=PATH (repeatable)")
    p.add_argument("--image-dir")
    p.add_argument("--mm-per-pixel", dest="mm_per_pixel", type=float)
    p.add_argument("--calibration", help="image_id,mm_per_pixel sidecar CSV")
    p.add_argument("--palette")
    p.add_argument("--ct", type=float)
    p.add_argument("--nms-threshold", dest="nms_threshold", type=float)
    p.add_argument("--shrink", type=float)
    p.add_argument("--rise", type=float)
    p.add_argument("--timestamp", help="ISO-8601 timestamp for every row")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("stats", help="bivariate statistics for a two-column CSV")
    p.add_argument("--input", required=True)
    p.add_argument("--level", type=float, default=0.95, choices=sorted(stats.Z_CRITICAL))
    p.add_argument("--plot-data", help="write x,y,fitted_y CSV for plotting")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("report", help="re-emit sheets from a records.jsonl store")
    _add_common(p)
    p.add_argument("--records", required=True)
    p.set_defaults(func=cmd_report)
    return parser


def run(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (CherryMetricsError, OSError) as exc:
        print(f"error: {' '.join(str(exc).split())}", file=sys.stderr)
        return EXIT_DATA


def main() -> None:
    sys.exit(run())
