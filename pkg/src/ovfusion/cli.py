"""Command-line entry point for the full pipeline.

Subcommands: synth, project, distill, eval, ablate, query, validate,
replay.  Every run that writes outputs also writes ``run_manifest.json``
holding the resolved flags and seeds; ``replay`` re-executes a manifest.
Errors print one human-readable line plus one machine-parsable JSON line
on stderr; the exit code is 2 for usage errors and 1 for runtime failures.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .aggregate import DEFAULT_RADIUS, PointFeatureField
from .bundle import BundleError, load_bundle, save_bundle, validate_bundle
from .distill import (
    DEFAULT_LR0,
    DEFAULT_TAU,
    DistillError,
    StudentConfig,
    forward,
    load_checkpoint,
    save_checkpoint,
    train,
)
from .pixels import DEFAULT_BETA
from .pipeline import load_point_field, run_pipeline, save_point_field
from .projection import DEFAULT_EPS_DEPTH
from .semantics import classify_points, evaluate, evaluate_split, query_similarity
from .synth import ABLATION_CELLS, SynthConfig, SynthError, gen_scene, inject_noise


class CliError(RuntimeError):
    """Fatal CLI-level failure with a short machine-readable code."""

    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


def _write_manifest(out_dir: Path, args: argparse.Namespace) -> None:
    resolved = {k: v for k, v in vars(args).items() if k != "func"}
    manifest = {"tool": "ovfusion", "version": __version__, "args": resolved}
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "run_manifest.json").write_text(
        json.dumps(manifest, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )


def _synth_config(args: argparse.Namespace) -> SynthConfig:
    return SynthConfig(
        n_classes=args.classes,
        dim=args.dim,
        n_objects=args.objects,
        points_per_object=args.points_per_object,
        n_frames=args.frames,
        image_size=args.image_size,
        p2d=args.p2d,
        p3d=args.p3d,
        sigma=args.sigma,
        seed=args.seed,
        cluster_mode=args.cluster_mode,
    )


def _load_bundle_checked(path: str):
    try:
        return load_bundle(path)
    except BundleError as exc:
        raise CliError("invalid-bundle", str(exc)) from exc


# ---------------------------------------------------------------------------
# subcommands


def cmd_synth(args) -> int:
    cfg = _synth_config(args)
    bundle = gen_scene(cfg)
    if args.p2d > 0 or args.p3d > 0:
        noise_seed = args.noise_seed if args.noise_seed is not None else args.seed + 1
        bundle = inject_noise(bundle, args.p2d, args.p3d, noise_seed, emb_sigma=args.sigma)
    out = Path(args.out)
    save_bundle(bundle, out)
    _write_manifest(out, args)
    print(f"wrote bundle {bundle.scene_id}: {bundle.points.num_points} points, "
          f"{len(bundle.frames)} frames -> {out}")
    return 0


def cmd_project(args) -> int:
    bundle = _load_bundle_checked(args.bundle)
    field = run_pipeline(
        bundle,
        beta=args.beta,
        eps_depth=args.eps_depth,
        radius=args.radius,
        use_2d_filter=not args.no_2d_filter,
        use_3d_filter=not args.no_3d_filter,
    )
    out = Path(args.out)
    save_point_field(field, out)
    _write_manifest(out, args)
    print(f"projected {int(field.valid.sum())}/{field.valid.size} valid points -> {out}")
    return 0


def cmd_distill(args) -> int:
    bundle = _load_bundle_checked(args.bundle)
    teacher = load_point_field(args.teacher)
    cfg = StudentConfig(
        hidden=tuple(int(h) for h in args.hidden.split(",") if h),
        activation=args.activation,
        lr0=args.lr0,
        momentum=args.momentum,
        epochs=args.epochs,
        batch_size=args.batch_size,
        lambda_feature=args.lambda_feature,
        lambda_label=args.lambda_label,
        tau=args.tau,
        seed=args.seed,
        unseen=tuple(_parse_unseen(args.unseen, bundle)),
        unseen_mode=args.unseen_mode,
    )
    try:
        model, curve = train(bundle, teacher, cfg)
    except DistillError as exc:
        raise CliError("distill-failed", str(exc)) from exc
    out = Path(args.out)
    save_checkpoint(model, out, meta={"bundle": str(args.bundle), "seed": cfg.seed})
    with (out / "loss_curve.csv").open("w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(
            fh, fieldnames=["epoch", "lr", "feature_loss", "label_loss", "total_loss"]
        )
        writer.writeheader()
        writer.writerows(curve)
    _write_manifest(out, args)
    final = curve[-1]["total_loss"] if curve else float("nan")
    print(f"distilled {cfg.epochs} epochs, final total loss {final:.6f} -> {out}")
    return 0


def _parse_unseen(spec: str | None, bundle) -> list[int]:
    """Unseen categories as indices or names, comma separated."""
    if not spec:
        return []
    out = []
    for token in spec.split(","):
        token = token.strip()
        if not token:
            continue
        if token in bundle.text.names:
            out.append(bundle.text.names.index(token))
        else:
            try:
                idx = int(token)
            except ValueError as exc:
                raise CliError("bad-flag", f"unknown category {token!r}") from exc
            if not 0 <= idx < bundle.text.num_categories:
                raise CliError("bad-flag", f"category index {idx} out of range")
            out.append(idx)
    return sorted(set(out))


def _predictions(args, bundle) -> np.ndarray:
    if args.field:
        field = load_point_field(args.field)
        return classify_points(field, bundle.text)
    if args.student:
        model = load_checkpoint(args.student)
        fo = forward(model, bundle.points.coords.astype(np.float64))
        field = PointFeatureField(
            features=fo,
            valid=np.ones(fo.shape[0], dtype=bool),
            labels=np.full(fo.shape[0], -1, dtype=np.int64),
        )
        return classify_points(field, bundle.text)
    raise CliError("bad-flag", "eval needs --field or --student")


def cmd_eval(args) -> int:
    bundle = _load_bundle_checked(args.bundle)
    if bundle.gt is None:
        raise CliError("no-ground-truth", "bundle has no gt labels to evaluate against")
    pred = _predictions(args, bundle)
    unseen = _parse_unseen(args.unseen, bundle)
    if unseen:
        report = evaluate_split(pred, bundle.gt, bundle.text.num_categories, unseen)
    else:
        report = evaluate(pred, bundle.gt, bundle.text.num_categories)
    payload = report.to_json_dict(bundle.text.names)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    _write_manifest(out.parent, args)
    line = f"acc {report.acc:.4f}  miou {report.miou:.4f}"
    if report.split:
        line += f"  hiou {report.split['hiou']:.4f}"
    print(line + f" -> {out}")
    return 0


def _ablate_one_seed(args, seed: int) -> list[dict]:
    cfg = SynthConfig(
        n_classes=args.classes, dim=args.dim, n_objects=args.objects,
        points_per_object=args.points_per_object, n_frames=args.frames,
        image_size=args.image_size, p2d=args.p2d, p3d=args.p3d,
        sigma=args.sigma, seed=seed, cluster_mode=args.cluster_mode,
    )
    bundle = gen_scene(cfg)
    noisy = inject_noise(bundle, args.p2d, args.p3d, seed + 1, emb_sigma=args.sigma)
    rows = []
    for f2, f3 in ABLATION_CELLS:
        teacher = run_pipeline(
            noisy, beta=args.beta, eps_depth=args.eps_depth, radius=args.radius,
            use_2d_filter=f2, use_3d_filter=f3,
        )
        for use_student in (False, True):
            if use_student:
                scfg = StudentConfig(
                    epochs=args.student_epochs, batch_size=args.batch_size,
                    seed=args.student_seed, tau=args.tau,
                )
                model, _ = train(noisy, teacher, scfg)
                fo = forward(model, noisy.points.coords.astype(np.float64))
                field = PointFeatureField(
                    features=fo,
                    valid=np.ones(fo.shape[0], dtype=bool),
                    labels=np.full(fo.shape[0], -1, dtype=np.int64),
                )
            else:
                field = teacher
            pred = classify_points(field, noisy.text)
            report = evaluate(pred, noisy.gt, noisy.text.num_categories)
            rows.append(
                {
                    "seed": seed, "filter_2d": f2, "filter_3d": f3,
                    "student": use_student, "miou": report.miou, "acc": report.acc,
                }
            )
    return rows


def cmd_ablate(args) -> int:
    seeds = list(range(args.seed, args.seed + args.seeds))
    if args.threads > 1:
        with ThreadPoolExecutor(max_workers=args.threads) as pool:
            per_seed = list(pool.map(lambda s: _ablate_one_seed(args, s), seeds))
    else:
        per_seed = [_ablate_one_seed(args, s) for s in seeds]

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    all_rows = [row for rows in per_seed for row in rows]
    with (out / "ablation_per_seed.json").open("w", encoding="utf-8") as fh:
        json.dump(all_rows, fh, sort_keys=True, indent=2)
        fh.write("\n")

    # aggregate: 8 rows, the 2x2 filter grid with and without the student
    agg = []
    for use_student in (False, True):
        for f2, f3 in ABLATION_CELLS:
            sel = [
                r for r in all_rows
                if r["filter_2d"] == f2 and r["filter_3d"] == f3 and r["student"] == use_student
            ]
            agg.append(
                {
                    "filter_2d": f2, "filter_3d": f3, "student": use_student,
                    "miou": float(np.mean([r["miou"] for r in sel])),
                    "acc": float(np.mean([r["acc"] for r in sel])),
                }
            )
    with (out / "ablation.csv").open("w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(
            fh, fieldnames=["filter_2d", "filter_3d", "student", "miou", "acc"]
        )
        writer.writeheader()
        for row in agg:
            writer.writerow({**row, "miou": f"{row['miou']:.6f}", "acc": f"{row['acc']:.6f}"})
    _write_manifest(out, args)
    for row in agg:
        print(
            f"2d={int(row['filter_2d'])} 3d={int(row['filter_3d'])} "
            f"student={int(row['student'])}  miou={row['miou']:.4f} acc={row['acc']:.4f}"
        )
    return 0


def cmd_query(args) -> int:
    bundle = _load_bundle_checked(args.bundle)
    field = load_point_field(args.field)
    if args.label is not None:
        if args.label not in bundle.text.names:
            raise CliError("bad-flag", f"unknown category name {args.label!r}")
        query = bundle.text.rows[bundle.text.names.index(args.label)]
    elif args.class_index is not None:
        if not 0 <= args.class_index < bundle.text.num_categories:
            raise CliError("bad-flag", f"class index {args.class_index} out of range")
        query = bundle.text.rows[args.class_index]
    elif args.query_blob:
        raw = Path(args.query_blob).read_bytes()
        query = np.frombuffer(raw, dtype="<f4")
        if query.size != bundle.dim:
            raise CliError("bad-flag", f"query blob has {query.size} floats, bundle d={bundle.dim}")
    else:
        raise CliError("bad-flag", "query needs --label, --class-index or --query-blob")
    sims = query_similarity(field, query)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_bytes(sims.astype("<f4").tobytes())
    _write_manifest(out.parent, args)
    finite = sims[np.isfinite(sims)]
    top = float(finite.max()) if finite.size else float("nan")
    print(f"wrote {sims.size} similarities (max {top:.4f}) -> {out}")
    return 0


def cmd_validate(args) -> int:
    try:
        bundle = load_bundle(args.bundle)
    except BundleError as exc:
        print(f"invalid: {exc}")
        print(json.dumps({"error": "invalid-bundle", "detail": str(exc)}), file=sys.stderr)
        return 1
    violations = validate_bundle(bundle)
    if violations:
        for item in violations:
            print(f"violation: {item}")
        return 1
    print(f"ok: {bundle.scene_id} ({bundle.points.num_points} points, "
          f"{len(bundle.frames)} frames)")
    return 0


def cmd_replay(args) -> int:
    path = Path(args.manifest)
    if path.is_dir():
        path = path / "run_manifest.json"
    manifest = json.loads(path.read_text(encoding="utf-8"))
    saved = manifest["args"]
    argv = [saved["command"]]
    for key, value in sorted(saved.items()):
        if key in ("command",) or value in (None, False):
            continue
        flag = "--" + key.replace("_", "-")
        if value is True:
            argv.append(flag)
        else:
            argv.extend([flag, str(value)])
    # positional/required flags are stored like the rest, so this round-trips
    return main(argv)


# ---------------------------------------------------------------------------
# parser


def _add_synth_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--classes", type=int, default=6)
    p.add_argument("--dim", type=int, default=16)
    p.add_argument("--objects", type=int, default=4)
    p.add_argument("--points-per-object", type=int, default=150)
    p.add_argument("--frames", type=int, default=6)
    p.add_argument("--image-size", type=int, default=64)
    p.add_argument("--p2d", type=float, default=0.0)
    p.add_argument("--p3d", type=float, default=0.0)
    p.add_argument("--sigma", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cluster-mode", choices=["offsets", "ids"], default="offsets")


def _add_pipeline_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--beta", type=float, default=DEFAULT_BETA)
    p.add_argument("--eps-depth", type=float, default=DEFAULT_EPS_DEPTH)
    p.add_argument("--radius", type=float, default=DEFAULT_RADIUS)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ovfusion",
        description="Object-level denoised 2D-to-3D feature fusion toolkit",
    )
    parser.add_argument("--version", action="version", version=f"ovfusion {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic scene bundle")
    _add_synth_flags(p)
    p.add_argument("--noise-seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("project", help="run the denoising projection pipeline")
    p.add_argument("--bundle", required=True)
    _add_pipeline_flags(p)
    p.add_argument("--no-2d-filter", action="store_true")
    p.add_argument("--no-3d-filter", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_project)

    p = sub.add_parser("distill", help="train the student network on a teacher field")
    p.add_argument("--bundle", required=True)
    p.add_argument("--teacher", required=True, help="point-field directory from `project`")
    p.add_argument("--hidden", default="64,64")
    p.add_argument("--activation", choices=["relu", "tanh", "identity"], default="relu")
    p.add_argument("--lr0", type=float, default=DEFAULT_LR0)
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--batch-size", type=int, default=256)
    p.add_argument("--lambda-feature", type=float, default=1.0)
    p.add_argument("--lambda-label", type=float, default=1.0)
    p.add_argument("--tau", type=float, default=DEFAULT_TAU)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--unseen", default=None, help="comma-separated category names or indices")
    p.add_argument("--unseen-mode", choices=["exclude", "label-only"], default="exclude")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_distill)

    p = sub.add_parser("eval", help="classify points and score against ground truth")
    p.add_argument("--bundle", required=True)
    p.add_argument("--field", default=None, help="point-field directory")
    p.add_argument("--student", default=None, help="student checkpoint directory")
    p.add_argument("--unseen", default=None, help="unseen split for hIoU")
    p.add_argument("--out", required=True, help="report JSON path")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="filter/student toggle grid over synthetic seeds")
    _add_synth_flags(p)
    _add_pipeline_flags(p)
    p.add_argument("--seeds", type=int, default=5, help="number of scene seeds")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--student-epochs", type=int, default=60)
    p.add_argument("--student-seed", type=int, default=23)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--tau", type=float, default=DEFAULT_TAU)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("query", help="export per-point similarity to a text query")
    p.add_argument("--bundle", required=True)
    p.add_argument("--field", required=True)
    p.add_argument("--label", default=None, help="category name from the bundle")
    p.add_argument("--class-index", type=int, default=None)
    p.add_argument("--query-blob", default=None, help="raw float32 query vector file")
    p.add_argument("--out", required=True, help="output .bin of float32 similarities")
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("validate", help="check a bundle directory against all invariants")
    p.add_argument("--bundle", required=True)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("replay", help="re-run a previous invocation from its manifest")
    p.add_argument("--manifest", required=True, help="run_manifest.json or its directory")
    p.set_defaults(func=cmd_replay)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        print(json.dumps({"error": exc.code, "detail": str(exc)}), file=sys.stderr)
        return 1
    except (BundleError, DistillError, SynthError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        print(
            json.dumps({"error": type(exc).__name__, "detail": str(exc)}),
            file=sys.stderr,
        )
        return 1


if __name__ == "__main__":
    sys.exit(main())
