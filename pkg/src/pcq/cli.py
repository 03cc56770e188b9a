"""
pcq command line.

Usage:
    pcq synth   --profile P --frames N --width W --height H --out ann.jsonl
    pcq render  --in ann.jsonl --out frames.pcqh [noise options]
    pcq infer   --in frames.pcqh --out pred.jsonl [--pt --overlap --radius|--profile --threshold --mode | --registry]
    pcq ingest  --in ann.jsonl --out truth.jsonl
    pcq query   "agg sum car" --corpus pred.jsonl [--range start:end]
    pcq eval    --pred pred.jsonl --truth truth.jsonl [--tolerance 0.1 --format table|json]
    pcq select-model build --frames f.pcqh --truth ann.jsonl --configs "1:0,4:0.2,9:0.1" --out reg.json
    pcq select-model apply --frames f.pcqh --registry reg.json
    pcq report  --in report.json

Every subcommand takes --seed, --catalog and --log-level.
Exit codes: 0 success, 1 usage error, 2 data error.
"""

import argparse
import logging
import sys
from typing import Dict, List, Optional, Sequence, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from pcq.config import (
    DEFAULT_EPSILON,
    DEFAULT_GROUP_LENGTH,
    DEFAULT_GROUPS,
    DEFAULT_MERGE_RADIUS,
    DEFAULT_OVERLAP,
    DEFAULT_PARTITIONS,
    DEFAULT_QUERIES,
    DEFAULT_THRESHOLD,
    DEFAULT_TOLERANCE,
    load_settings,
    setup_logging,
)
from pcq.counting.partition import CounterConfig
from pcq.counting.peaks import ThresholdMode, ThresholdPolicy
from pcq.errors import DataError, UsageError
from pcq.heatmap.catalog import ClassCatalog
from pcq.heatmap.codec import read_heatmaps, write_heatmaps
from pcq.heatmap.noise import simulate_stream
from pcq.heatmap.render import annotation_counts
from pcq.heatmap.types import NoiseProfile
from pcq.models.predictor import CounterModel, SelectingCounter
from pcq.models.selection import (
    allocation,
    build_registry,
    describe_frame,
    load_registry,
    save_registry,
)
from pcq.services.evaluation import build_report, load_report, render_table, save_report
from pcq.services.inference import frame_ids, run_inference
from pcq.services.query import QueryKind, execute, parse_query, parse_range
from pcq.store.documents import (
    DEFAULT_VEHICLE,
    frame_timestamp,
    ingest,
    load,
    persist,
    read_annotations,
    write_annotations,
)
from pcq.utils.synth import generate_stream, load_profile

logger = logging.getLogger(__name__)

Rate = Union[float, Tuple[float, ...]]


class RunConfig(BaseModel):
    """Validated knobs shared by the subcommands."""

    model_config = ConfigDict(extra="ignore", frozen=True)

    command: str
    seed: int = 0
    catalog: Optional[str] = None
    pt: int = Field(default=DEFAULT_PARTITIONS, ge=1)
    overlap: float = Field(default=DEFAULT_OVERLAP, ge=0.0)
    radius: Optional[Rate] = None
    threshold: float = Field(default=DEFAULT_THRESHOLD, gt=0.0, lt=1.0)
    mode: ThresholdMode = ThresholdMode.FIXED
    blur: float = Field(default=0.0, ge=0.0)
    noise: float = Field(default=0.0, ge=0.0, le=1.0)
    drop: Rate = 0.0
    false_positive: Rate = 0.0
    seam_bias: float = Field(default=0.0, ge=0.0)
    seam_pt: int = Field(default=1, ge=1)
    seam_overlap: float = Field(default=0.0, ge=0.0)
    epsilon: float = Field(default=DEFAULT_EPSILON, gt=0.0)
    tolerance: float = Field(default=DEFAULT_TOLERANCE, ge=0.0, lt=1.0)

    def counter_config(
        self, pt: Optional[int] = None, overlap: Optional[float] = None, radius: Optional[Rate] = None
    ) -> CounterConfig:
        radius = radius if radius is not None else self.radius
        try:
            return CounterConfig(
                pt=self.pt if pt is None else pt,
                overlap_ratio=self.overlap if overlap is None else overlap,
                merge_radius=DEFAULT_MERGE_RADIUS if radius is None else radius,
                threshold_policy=ThresholdPolicy(fixed_t=self.threshold, mode=self.mode),
            )
        except ValidationError as exc:
            raise UsageError(f"invalid counter options: {exc}") from None

    def noise_profile(self) -> NoiseProfile:
        try:
            return NoiseProfile(
                blur_sigma=self.blur,
                additive_noise=self.noise,
                drop_rate=self.drop,
                false_positive_rate=self.false_positive,
                boundary_split_bias=self.seam_bias,
                seam_partitions=self.seam_pt,
                seam_overlap=self.seam_overlap,
                seed=self.seed,
            )
        except ValidationError as exc:
            raise UsageError(f"invalid noise options: {exc}") from None


class UsageParser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# ===============================
# OPTION PARSERS
# ===============================
def rate_list(text: str) -> Rate:
    """'0.1' or a per-class list '0.1,0.2,0'."""
    try:
        values = tuple(float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number or comma-separated numbers, got '{text}'")
    return values[0] if len(values) == 1 else values


def parse_configs(text: str) -> List[Tuple[int, float]]:
    configs = []
    for item in text.split(","):
        try:
            pt, overlap = item.split(":")
            configs.append((int(pt), float(overlap)))
        except ValueError:
            raise UsageError(f"config '{item}' must look like pt:overlap, e.g. 4:0.2") from None
    if not configs:
        raise UsageError("no model configs given")
    return configs


def parse_emphasis(text: Optional[str]) -> Optional[Dict[str, float]]:
    if not text:
        return None
    weights = {}
    for item in text.split(","):
        try:
            name, value = item.split("=")
            weights[name.strip()] = float(value)
        except ValueError:
            raise UsageError(f"emphasis '{item}' must look like class=weight") from None
    return weights


def resolve_catalog(name: Optional[str]) -> ClassCatalog:
    return ClassCatalog.named(name or load_settings().catalog)


def merge_radius(cfg: RunConfig, profile: Optional[str], catalog: ClassCatalog) -> Rate:
    """--radius when given, else twice each class's largest extent in the scene profile."""
    if cfg.radius is not None:
        return cfg.radius
    radii = load_profile(profile or cfg.catalog or load_settings().catalog).merge_radii(catalog)
    logger.info("Merge radius per class: %s", dict(zip(catalog.classes, radii)))
    return radii


# ===============================
# SUBCOMMANDS
# ===============================
def cmd_synth(args, cfg: RunConfig) -> int:
    profile = load_profile(args.profile)
    catalog = ClassCatalog.named(cfg.catalog or profile.catalog)
    stream = generate_stream(profile, args.frames, args.width, args.height, cfg.seed, catalog)
    written = write_annotations(args.out, stream)
    print(f"{written} frames -> {args.out}")
    return 0


def cmd_render(args, cfg: RunConfig) -> int:
    catalog = resolve_catalog(cfg.catalog)
    annotations = read_annotations(args.input)
    heatmaps = simulate_stream(annotations, catalog, cfg.noise_profile())
    written = write_heatmaps(args.out, heatmaps)
    print(f"{written} frames -> {args.out}")
    return 0


def cmd_infer(args, cfg: RunConfig) -> int:
    catalog = resolve_catalog(cfg.catalog)
    frames = read_heatmaps(args.input)
    if args.registry:
        model = SelectingCounter(load_registry(args.registry), catalog)
    else:
        model = CounterModel(cfg.counter_config(radius=merge_radius(cfg, args.profile, catalog)))
    annotations = read_annotations(args.annotations) if args.annotations else None
    corpus = run_inference(frames, model, catalog, annotations, args.vehicle_id)
    written = persist(corpus, args.out)
    print(f"{written} documents -> {args.out}")
    return 0


def cmd_ingest(args, cfg: RunConfig) -> int:
    catalog = resolve_catalog(cfg.catalog)
    annotations = read_annotations(args.input)
    documents = (
        ingest(ann, catalog, ann.frame_id, frame_timestamp(i), args.vehicle_id)
        for i, ann in enumerate(annotations)
    )
    written = persist(documents, args.out)
    print(f"{written} documents -> {args.out}")
    return 0


def cmd_query(args, cfg: RunConfig) -> int:
    frame_range = parse_range(args.range) if args.range else None
    spec = parse_query(args.text, frame_range)
    corpus = load(args.corpus)
    answer = execute(corpus, spec, resolve_catalog(cfg.catalog))
    if spec.kind is QueryKind.RETRIEVAL:
        for frame_id in answer:
            print(frame_id)
    else:
        print(answer)
    return 0


def cmd_eval(args, cfg: RunConfig) -> int:
    catalog = resolve_catalog(cfg.catalog)
    pred, truth = load(args.pred), load(args.truth)
    retrieve = None
    if args.retrieve:
        spec = parse_query(args.retrieve)
        if spec.kind is not QueryKind.RETRIEVAL:
            raise UsageError("--retrieve takes a retrieve query, e.g. 'retrieve car>=3'")
        retrieve = spec.conditions
    report = build_report(
        pred,
        truth,
        catalog,
        tolerance=cfg.tolerance,
        n_queries=args.queries,
        n_groups=args.groups,
        len_min=args.len_min,
        len_max=args.len_max,
        seed=cfg.seed,
        retrieve=retrieve,
        retrieve_text=args.retrieve,
    )
    if args.out:
        save_report(args.out, report)
    print(render_table(report) if args.format == "table" else report.model_dump_json(indent=2))
    return 0


def cmd_select_build(args, cfg: RunConfig) -> int:
    catalog = resolve_catalog(cfg.catalog)
    configs = parse_configs(args.configs)
    emphasis = parse_emphasis(args.emphasis)
    frames = read_heatmaps(args.frames)
    annotations = read_annotations(args.truth)
    if len(annotations) != len(frames):
        raise DataError(f"{len(frames)} heatmaps but {len(annotations)} annotations")
    truth = [annotation_counts(ann, catalog) for ann in annotations]
    radius = merge_radius(cfg, args.profile, catalog)
    models = [cfg.counter_config(pt, overlap, radius) for pt, overlap in configs]

    centers = build_registry(frames, truth, models, catalog, cfg.epsilon, emphasis)
    if not centers:
        raise DataError("no model won any training frame")
    save_registry(args.out, centers)
    for center in centers:
        print(f"{center.config.label}\tn={center.n}\tP={center.confidence:.4f}")
    return 0


def cmd_select_apply(args, cfg: RunConfig) -> int:
    catalog = resolve_catalog(cfg.catalog)
    frames = read_heatmaps(args.frames)
    centers = load_registry(args.registry)
    counter = SelectingCounter(centers, catalog)
    for frame_id, hm in zip(frame_ids(len(frames)), frames):
        print(f"{frame_id}\t{counter.choose(hm).label}")

    descriptors = [describe_frame(hm, catalog, counter.emphasis) for hm in frames]
    adjusted = allocation(descriptors, centers, adjusted=True)
    plain = allocation(descriptors, centers, adjusted=False)
    for center, a, p in zip(centers, adjusted, plain):
        logger.info("%s receives %d frames (%d without confidence adjustment)", center.config.label, a, p)
    return 0


def cmd_report(args, cfg: RunConfig) -> int:
    report = load_report(args.input)
    print(render_table(report))
    return 0


# ===============================
# PARSER
# ===============================
def _add_counter_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--pt", type=int, default=DEFAULT_PARTITIONS, help="number of partitions")
    parser.add_argument("--overlap", type=float, default=DEFAULT_OVERLAP, help="overlap ratio delta")
    parser.add_argument("--radius", type=rate_list, default=None, help="merge radius, scalar or per class")
    parser.add_argument("--profile", default=None, help="scene profile whose extents set the default radius")
    parser.add_argument("--threshold", type=float, default=DEFAULT_THRESHOLD, help="fixed peak threshold t")
    parser.add_argument("--mode", choices=[m.value for m in ThresholdMode], default=ThresholdMode.FIXED.value)


def build_parser() -> argparse.ArgumentParser:
    common = UsageParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--catalog", default=None, help="class catalog (nuscenes, kitti, waymo)")
    common.add_argument("--log-level", default=None, help="DEBUG, INFO, WARNING ...")

    parser = UsageParser(prog="pcq", description="Heatmap counting and frame query engine")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic annotation stream")
    p.add_argument("--profile", default="nuscenes", help="shipped profile name or JSON path")
    p.add_argument("--frames", type=int, default=100)
    p.add_argument("--width", type=int, default=128)
    p.add_argument("--height", type=int, default=128)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_synth)

    p = sub.add_parser("render", parents=[common], help="render (and perturb) heatmaps from annotations")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--blur", type=float, default=0.0)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--drop", type=rate_list, default=0.0)
    p.add_argument("--false-positive", type=rate_list, default=0.0)
    p.add_argument("--seam-bias", type=float, default=0.0)
    p.add_argument("--seam-pt", type=int, default=1)
    p.add_argument("--seam-overlap", type=float, default=0.0)
    p.set_defaults(handler=cmd_render)

    p = sub.add_parser("infer", parents=[common], help="count heatmaps into a document corpus")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    _add_counter_options(p)
    p.add_argument("--registry", default=None, help="model registry; selects a config per frame")
    p.add_argument("--annotations", default=None, help="annotation stream supplying frame ids")
    p.add_argument("--vehicle-id", default=DEFAULT_VEHICLE)
    p.set_defaults(handler=cmd_infer)

    p = sub.add_parser("ingest", parents=[common], help="turn annotations into a ground-truth corpus")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--vehicle-id", default=DEFAULT_VEHICLE)
    p.set_defaults(handler=cmd_ingest)

    p = sub.add_parser("query", parents=[common], help="run one query against a corpus")
    p.add_argument("text")
    p.add_argument("--corpus", required=True)
    p.add_argument("--range", default=None, help="start:end frame indices")
    p.set_defaults(handler=cmd_query)

    p = sub.add_parser("eval", parents=[common], help="evaluate a predicted corpus against truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--tolerance", type=float, default=DEFAULT_TOLERANCE)
    p.add_argument("--queries", type=int, default=DEFAULT_QUERIES)
    p.add_argument("--groups", type=int, default=DEFAULT_GROUPS)
    p.add_argument("--len-min", type=int, default=DEFAULT_GROUP_LENGTH[0], help="shortened to the corpus length")
    p.add_argument("--len-max", type=int, default=DEFAULT_GROUP_LENGTH[1], help="shortened to the corpus length")
    p.add_argument("--retrieve", default=None, help="also report one retrieve query")
    p.add_argument("--format", choices=["table", "json"], default="table")
    p.add_argument("--out", default=None, help="write the JSON report here")
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("select-model", help="build or apply a model-selection registry")
    actions = p.add_subparsers(dest="action", required=True)
    b = actions.add_parser("build", parents=[common])
    b.add_argument("--frames", required=True)
    b.add_argument("--truth", required=True, help="annotation stream of the training frames")
    b.add_argument("--configs", default="1:0,4:0.2,9:0.1", help="comma list of pt:overlap")
    b.add_argument("--radius", type=rate_list, default=None, help="merge radius, scalar or per class")
    b.add_argument("--profile", default=None, help="scene profile whose extents set the default radius")
    b.add_argument("--threshold", type=float, default=DEFAULT_THRESHOLD)
    b.add_argument("--mode", choices=[m.value for m in ThresholdMode], default=ThresholdMode.FIXED.value)
    b.add_argument("--epsilon", type=float, default=DEFAULT_EPSILON)
    b.add_argument("--emphasis", default=None, help="class weights, e.g. car=2,pedestrian=2")
    b.add_argument("--out", required=True)
    b.set_defaults(handler=cmd_select_build)
    a = actions.add_parser("apply", parents=[common])
    a.add_argument("--frames", required=True)
    a.add_argument("--registry", required=True)
    a.set_defaults(handler=cmd_select_apply)

    p = sub.add_parser("report", parents=[common], help="print a saved evaluation report")
    p.add_argument("--in", dest="input", required=True)
    p.set_defaults(handler=cmd_report)
    return parser


def run(argv: Optional[Sequence[str]] = None) -> int:
    try:
        settings = load_settings()
        args = build_parser().parse_args(argv)
        setup_logging(args.log_level or settings.log_level, settings.log_file)
        try:
            cfg = RunConfig.model_validate(vars(args))
        except ValidationError as exc:
            raise UsageError(str(exc)) from None
        return args.handler(args, cfg)
    except SystemExit as exc:
        return int(exc.code or 0)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (DataError, ValidationError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> int:
    return run(sys.argv[1:])


if __name__ == "__main__":
    sys.exit(main())
