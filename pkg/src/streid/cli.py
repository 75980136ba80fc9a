"""Command-line entry point: ``streid {simulate,fit-st,evaluate,ablate}``.

Every artifact written is a pure function of the inputs and flags; the
worker count only affects speed.  Exit status: 0 success, 2 usage,
3 parse error, 4 validation error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

from . import data_io, evaluation, simulate as sim
from .joint_metric import FusionConfig, fused_score_matrix
from .st_estimator import STConfig, STModel, fit, load_model, save_model
from .types import Dataset, FusionMode, ParseError, Role, ValidationError

log = logging.getLogger("streid")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_PARSE = 3
EXIT_VALIDATION = 4

MANIFEST_NAME = "manifest.json"
MODE_LABELS = {
    FusionMode.VISUAL_ONLY: "VIS only",
    FusionMode.ST_ONLY: "ST only",
    FusionMode.NAIVE_PRODUCT: "naive product",
    FusionMode.JOINT_LS: "joint LS",
}


class UsageError(Exception):
    pass


@dataclass
class RunManifest:
    command: str
    inputs: dict = field(default_factory=dict)
    st_config: Optional[dict] = None
    fusion_config: Optional[dict] = None
    mode: Optional[str] = None
    outputs: list = field(default_factory=list)
    seed: Optional[int] = None

    def dumps(self) -> str:
        return json.dumps(asdict(self), indent=1, sort_keys=True) + "\n"


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _require_file(path: Optional[str], what: str) -> str:
    if path is None:
        raise UsageError(f"{what} is required")
    if not os.path.isfile(path):
        raise UsageError(f"{what} not found: {path}")
    return path


# -- simulate -----------------------------------------------------------------


def cmd_simulate(args) -> int:
    try:
        if args.config:
            cfg = sim.load_config(_require_file(args.config, "--config"))
        else:
            cfg = sim.default_config()
        if args.seed is not None:
            cfg = replace(cfg, seed=args.seed)
    except ValidationError as exc:
        raise UsageError(f"bad simulator config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, f"line {exc.lineno} column {exc.colno}") from exc
    result = sim.simulate(cfg)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    outputs = []
    for split in ("train", "query", "gallery"):
        ds = getattr(result, split)
        data_io.save_dataset(ds, out / f"{split}.csv", out / f"{split}.feat")
        outputs += [f"{split}.csv", f"{split}.feat"]
        print(f"{split:8s} {len(ds):6d} records")
    _write(out / "sim_config.json", sim.dumps_config(cfg))
    outputs.append("sim_config.json")
    manifest = RunManifest(
        command="simulate",
        inputs={"config": args.config},
        outputs=sorted(outputs + [MANIFEST_NAME]),
        seed=cfg.seed,
    )
    _write(out / MANIFEST_NAME, manifest.dumps())
    return EXIT_OK


# -- fit-st -----------------------------------------------------------------


def _st_config(args) -> STConfig:
    return STConfig(
        bin_width_frames=args.bin_width,
        kernel_sigma=args.sigma,
        truncation_sigmas=args.truncation,
        max_bins=args.max_bins,
    )


def cmd_fit_st(args) -> int:
    train = data_io.parse_metadata_csv(
        _require_file(args.train, "--train"), role=Role.TRAIN, camera_count=args.camera_count
    )
    if not train.is_labeled:
        raise ValidationError(
            "training metadata must carry person_id on every non-distractor record "
            "(positive pairs are defined by identity)"
        )
    cfg = _st_config(args)
    model = fit(train, cfg)
    save_model(model, args.out)
    if not model.pmf:
        print("warning: no cross-camera positive pairs; every pmf is empty", file=sys.stderr)
    print(f"fitted {len(model.pmf)} camera pair(s), {model.config.max_bins} bins of "
          f"{model.config.bin_width_frames} frames")
    for (a, b), n in model.pair_counts.items():
        print(f"  {a} -> {b}: {n} positive pairs")
    manifest = RunManifest(
        command="fit-st",
        inputs={"train": args.train, "camera_count": args.camera_count},
        st_config=asdict(cfg),
        outputs=[os.path.basename(args.out)],
    )
    _write(Path(args.out + ".manifest.json"), manifest.dumps())
    return EXIT_OK


# -- evaluate / ablate -------------------------------------------------------


def _load_pair(args, model: Optional[STModel]) -> tuple[Dataset, Dataset]:
    q_meta = _require_file(args.query, "--query")
    g_meta = _require_file(args.gallery, "--gallery")
    q_feat = _require_file(args.query_features or _feat_path(q_meta), "query features")
    g_feat = _require_file(args.gallery_features or _feat_path(g_meta), "gallery features")
    queries = data_io.load_dataset(q_meta, q_feat, role=Role.QUERY)
    gallery = data_io.load_dataset(g_meta, g_feat, role=Role.GALLERY)
    c = max(queries.camera_count, gallery.camera_count, model.camera_count if model else 2)
    queries = Dataset(queries.detections, c, queries.feature_dim, Role.QUERY)
    gallery = Dataset(gallery.detections, c, gallery.feature_dim, Role.GALLERY)
    if queries.feature_dim != gallery.feature_dim:
        raise ValidationError(
            f"query features have dim {queries.feature_dim}, gallery {gallery.feature_dim}"
        )
    return queries, gallery


def _feat_path(meta: str) -> str:
    return str(Path(meta).with_suffix(".feat"))


def _fusion_config(args, mode: FusionMode) -> FusionConfig:
    return FusionConfig(
        lambda0=args.lambda0, gamma0=args.gamma0, lambda1=args.lambda1, gamma1=args.gamma1, mode=mode
    )


def _inputs(args) -> dict:
    return {
        "query": args.query,
        "query_features": args.query_features or _feat_path(args.query),
        "gallery": args.gallery,
        "gallery_features": args.gallery_features or _feat_path(args.gallery),
        "model": args.model,
        "k_max": args.k_max,
    }


def cmd_evaluate(args) -> int:
    mode = FusionMode(args.mode)
    if mode.needs_st_model and not args.model:
        raise UsageError(f"mode {mode.value!r} needs --model")
    model = load_model(_require_file(args.model, "--model")) if args.model else None
    queries, gallery = _load_pair(args, model)
    cfg = _fusion_config(args, mode)
    log.info("scoring %d queries against %d gallery records (%s)", len(queries), len(gallery), mode.value)
    scores = fused_score_matrix(queries, gallery, model, cfg, workers=args.workers)
    ranked = evaluation.rank(scores, queries, gallery)
    report = evaluation.evaluate(scores, queries, gallery, k_max=args.k_max)

    out = Path(args.out_dir)
    _write(out / "report.json", evaluation.dumps_report(report))
    _write(out / "report.txt", evaluation.format_table({MODE_LABELS[mode]: report}))
    outputs = ["report.json", "report.txt"]
    if args.write_ranks:
        _write(out / "ranks.csv", evaluation.dumps_ranks(ranked))
        outputs.append("ranks.csv")
    manifest = RunManifest(
        command="evaluate",
        inputs=_inputs(args),
        st_config=asdict(model.config) if model else None,
        fusion_config=_jsonable(asdict(cfg)),
        mode=mode.value,
        outputs=sorted(outputs + [MANIFEST_NAME]),
    )
    _write(out / MANIFEST_NAME, manifest.dumps())
    print(evaluation.format_table({MODE_LABELS[mode]: report}), end="")
    return EXIT_OK


def run_ablation(
    queries: Dataset,
    gallery: Dataset,
    model: STModel,
    base: FusionConfig = FusionConfig(),
    k_max: int = 50,
    workers: int = 1,
) -> dict[str, evaluation.EvalReport]:
    """Evaluate every fusion mode on the same inputs, keyed by mode value."""
    reports = {}
    for mode in FusionMode:
        cfg = FusionConfig(base.lambda0, base.gamma0, base.lambda1, base.gamma1, mode)
        scores = fused_score_matrix(queries, gallery, model, cfg, workers=workers)
        reports[mode.value] = evaluation.evaluate(scores, queries, gallery, k_max=k_max)
    return reports


def cmd_ablate(args) -> int:
    if not args.model:
        raise UsageError("ablate needs --model (three of the four modes use it)")
    model = load_model(_require_file(args.model, "--model"))
    queries, gallery = _load_pair(args, model)
    cfg = _fusion_config(args, FusionMode.JOINT_LS)
    reports = run_ablation(queries, gallery, model, cfg, k_max=args.k_max, workers=args.workers)
    table = evaluation.format_table({MODE_LABELS[FusionMode(m)]: r for m, r in reports.items()})

    out = Path(args.out_dir)
    _write(out / "ablation.json", evaluation.dumps_report(reports))
    _write(out / "ablation.txt", table)
    manifest = RunManifest(
        command="ablate",
        inputs=_inputs(args),
        st_config=asdict(model.config),
        fusion_config=_jsonable(asdict(cfg)),
        outputs=sorted(["ablation.json", "ablation.txt", MANIFEST_NAME]),
    )
    _write(out / MANIFEST_NAME, manifest.dumps())
    print(table, end="")
    return EXIT_OK


def _jsonable(d: dict) -> dict:
    return {k: (v.value if isinstance(v, FusionMode) else v) for k, v in d.items()}


# -- argument parsing ---------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="streid", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic camera-network dataset")
    p.add_argument("--config", help="simulator config (JSON); default is the reference benchmark")
    p.add_argument("--seed", type=int)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit-st", help="fit transition-time distributions from labeled metadata")
    p.add_argument("--train", required=True, help="training metadata CSV")
    p.add_argument("--out", required=True, help="model file to write")
    p.add_argument("--camera-count", type=int)
    p.add_argument("--bin-width", type=int, default=100, help="histogram bin width in frames")
    p.add_argument("--sigma", type=float, default=50.0, help="Parzen kernel sigma in bins")
    p.add_argument("--truncation", type=float, default=3.0, help="kernel cut-off in sigmas")
    p.add_argument("--max-bins", type=int, help="histogram length (default: from data, <= 3000)")
    p.set_defaults(func=cmd_fit_st)

    for name, func, helptext in (
        ("evaluate", cmd_evaluate, "score, rank and report CMC/mAP for one fusion mode"),
        ("ablate", cmd_ablate, "report all four fusion modes side by side"),
    ):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--query", required=True, help="query metadata CSV")
        p.add_argument("--gallery", required=True, help="gallery metadata CSV")
        p.add_argument("--query-features", help="default: query CSV path with .feat suffix")
        p.add_argument("--gallery-features", help="default: gallery CSV path with .feat suffix")
        p.add_argument("--model", help="spatial-temporal model file from fit-st")
        p.add_argument("--lambda0", type=float, default=1.0)
        p.add_argument("--gamma0", type=float, default=5.0)
        p.add_argument("--lambda1", type=float, default=2.0)
        p.add_argument("--gamma1", type=float, default=5.0)
        p.add_argument("--k-max", type=int, default=50)
        p.add_argument("--workers", type=int, default=1)
        p.add_argument("--out-dir", required=True)
        if name == "evaluate":
            p.add_argument("--mode", choices=[m.value for m in FusionMode], default="joint")
            p.add_argument("--write-ranks", action="store_true", help="also write ranks.csv")
        p.set_defaults(func=func)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"streid {args.command}: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ParseError as exc:
        print(f"streid {args.command}: parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except ValidationError as exc:
        print(f"streid {args.command}: invalid input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
