"""``periscope`` command line: crop, pairs, score, fuse, metrics, synth.

Exit codes: 0 success, 1 data error, 2 usage error.
"""

import argparse
import hashlib
import json
import os
import sys
import time
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import geometry, ingest, matcher, metrics, protocols, synthetic

EXIT_OK, EXIT_DATA, EXIT_USAGE = 0, 1, 2

DATA_ERRORS = (OSError, ingest.ParseError, geometry.CropError, matcher.MatchError,
               protocols.ProtocolError, metrics.MetricError)


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    target_ied: float = geometry.FRONTAL_IED
    three_quarter_ied: float = geometry.THREE_QUARTER_IED
    min_ied: float = geometry.MIN_IED
    frontality_ratio: float = geometry.FRONTALITY_RATIO
    metric: str = "chi2"
    normalize: str = "minmax"
    strict_embeddings: bool = True
    threads: object = 1
    seed: int = 0
    fill: str = "zero"

    def validate(self):
        for name in ("target_ied", "three_quarter_ied", "min_ied"):
            if not getattr(self, name) > 0:
                raise UsageError(f"{name} must be positive")
        if not 0 < self.frontality_ratio <= 1:
            raise UsageError("frontality_ratio must be in (0, 1]")
        if self.metric not in matcher.POLARITY:
            raise UsageError(f"metric must be one of {sorted(matcher.POLARITY)}")
        if self.normalize not in ("minmax", "none"):
            raise UsageError("normalize must be minmax or none")
        if self.fill not in ("zero", "edge"):
            raise UsageError("fill must be zero or edge")
        if self.threads != "auto" and (not isinstance(self.threads, int) or self.threads < 1):
            raise UsageError("threads must be a positive integer or 'auto'")
        if self.seed < 0:
            raise UsageError("seed must be non-negative")
        return self

    @property
    def n_threads(self):
        if self.threads == "auto":
            return os.cpu_count() or 1
        return self.threads


def _coerce(name, raw):
    kind = {f.name: f.type for f in fields(RunConfig)}[name]
    raw = raw.strip()
    try:
        if name == "threads":
            return "auto" if raw == "auto" else int(raw)
        if kind is float or kind == "float":
            return float(raw)
        if kind is int or kind == "int":
            return int(raw)
        if kind is bool or kind == "bool":
            if raw.lower() in ("1", "true", "yes", "on"):
                return True
            if raw.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
    except ValueError:
        raise UsageError(f"bad value for {name}: {raw!r}") from None
    return raw


def load_config_file(path):
    """Parse ``key=value`` lines; ``#`` starts a comment."""
    known = {f.name for f in fields(RunConfig)}
    values = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}: line {lineno}: expected key=value")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in known:
            raise UsageError(f"{path}: line {lineno}: unknown key {key!r}")
        values[key] = _coerce(key, raw)
    return values


def resolve_config(args):
    """CLI flag > config file > default."""
    values = {}
    if getattr(args, "config", None):
        values.update(load_config_file(args.config))
    for f in fields(RunConfig):
        flag = getattr(args, f.name, None)
        if flag is not None:
            values[f.name] = _coerce(f.name, str(flag)) if f.name == "threads" else flag
    return RunConfig(**values).validate()


# ---------------------------------------------------------------------------
# io helpers

def _read(path):
    return Path(path).read_text(encoding="utf-8")


def _emit(text, out):
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text, encoding="utf-8")


def _digest(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _run_report(args, cfg, inputs, counts, payload=None, started=None):
    report = {
        "command": args.command,
        "argv": getattr(args, "argv", None),
        "config": asdict(cfg),
        "inputs": {str(p): _digest(p) for p in inputs if p and Path(p).is_file()},
        "counts": counts,
    }
    if payload is not None:
        report["metrics"] = payload
    if started is not None:
        report["wall_time_s"] = round(time.perf_counter() - started, 3)
    return report


def _write_run_report(args, report):
    if getattr(args, "run_report", None):
        _emit(metrics.dumps(report), args.run_report)


def _polarity(args, cfg):
    if getattr(args, "polarity", None):
        return args.polarity
    return matcher.POLARITY[cfg.metric]


def _load_image(image_dir):
    from PIL import Image

    def load(face):
        base = Path(image_dir)
        candidates = []
        for stem in (base / face.subject_id / face.image_id, base / face.image_id):
            candidates.append(stem)
            candidates.extend(stem.with_name(stem.name + ext) for ext in (".png", ".jpg", ".jpeg"))
        for path in candidates:
            if path.is_file():
                with Image.open(path) as im:
                    if im.mode not in ("L", "RGB"):
                        im = im.convert("RGB")
                    return np.asarray(im)
        raise FileNotFoundError(f"no image file for {face.subject_id}/{face.image_id} under {base}")
    return load


def _crop_filename(crop):
    safe = [part.replace("/", "_").replace("\\", "_")
            for part in (crop.subject_id, crop.image_id, crop.eye_side)]
    return "_".join(safe) + ".png"


# ---------------------------------------------------------------------------
# commands

def cmd_crop(args, cfg):
    from PIL import Image

    started = time.perf_counter()
    faces = ingest.parse_face_manifest(_read(args.manifest), source=args.manifest)
    statuses, crops, counts, errors = geometry.crop_faces(
        faces, _load_image(args.images), frontal_ied=cfg.target_ied,
        three_quarter_ied=cfg.three_quarter_ied, min_ied=cfg.min_ied,
        frontality_ratio=cfg.frontality_ratio, fill=cfg.fill, threads=cfg.n_threads)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for pair in crops:
        for crop in pair:
            Image.fromarray(crop.pixels).save(out / _crop_filename(crop))
    (out / "crops.csv").write_text(
        ingest.format_face_manifest(faces, {"status": statuses}), encoding="utf-8")
    for i, msg in sorted(errors.items()):
        print(f"error: {faces[i].subject_id}/{faces[i].image_id}: {msg}", file=sys.stderr)
    report = _run_report(args, cfg, [args.manifest], asdict(counts), started=started)
    report["counts"]["identity_holds"] = counts.identity_holds()
    report["errors"] = {f"{faces[i].subject_id}/{faces[i].image_id}": m
                        for i, m in sorted(errors.items())}
    _emit(metrics.dumps(report), args.run_report or str(out / "run_report.json"))
    return EXIT_DATA if errors else EXIT_OK


def _ufpr_inputs(args):
    """Return ``(fold, official_pairs, eye_gallery)``; one of the last two is None."""
    if not args.folds or args.fold is None:
        raise UsageError("ufpr needs --folds and --fold")
    folds = {f.fold_id: f for f in ingest.parse_folds(_read(args.folds), source=args.folds)}
    if args.fold not in folds:
        raise ingest.ValidationError(f"fold {args.fold} not defined in {args.folds}")
    fold = folds[args.fold]
    if args.mode == "external":
        if not args.external:
            raise UsageError("ufpr external mode needs --external")
        official = ingest.parse_pair_list(_read(args.external), source=args.external)
        return fold, protocols.gen_ufpr_fold_pairs(fold, mode="external", external=official), None
    if not args.embeddings:
        raise UsageError("ufpr per_eye_exhaustive mode needs --embeddings")
    store = ingest.read_embeddings(_read(args.embeddings), strict=False, source=args.embeddings)
    return fold, None, protocols.build_eye_galleries(store, fold.test_subject_ids)


def _emit_counts(genuine, impostor, out):
    _emit(json.dumps({"genuine": genuine, "impostor": impostor}, separators=(",", ":")) + "\n",
          out)


def cmd_pairs(args, cfg):
    started = time.perf_counter()
    if args.protocol in ("same-pose", "cross-pose"):
        if not args.manifest:
            raise UsageError(f"{args.protocol} needs --manifest")
        faces = ingest.parse_face_manifest(_read(args.manifest), source=args.manifest)
        galleries = protocols.build_galleries(faces)
        if args.protocol == "same-pose":
            kind, groups = "same_pose", (args.pose, None)
            gen = lambda: protocols.gen_same_pose_pairs(galleries, args.pose)  # noqa: E731
        else:
            if args.pose == args.pose_b:
                raise UsageError("cross-pose needs --pose and --pose-b to differ")
            kind, groups = "cross_pose", (args.pose, args.pose_b)
            gen = lambda: protocols.gen_cross_pose_pairs(galleries, args.pose, args.pose_b)  # noqa: E731
        if args.counts_only:
            _emit_counts(*protocols.count_gallery_pairs(kind, galleries, *groups), args.out)
            return EXIT_OK
        pairs = gen()
        inputs = [args.manifest]
    else:
        fold, pairs, gallery = _ufpr_inputs(args)
        if pairs is None:
            if args.counts_only:
                _emit_counts(*protocols.count_gallery_pairs("ufpr_per_eye", gallery, None), args.out)
                return EXIT_OK
            pairs = protocols.gen_ufpr_fold_pairs(fold, gallery, mode="per_eye_exhaustive")
        elif args.counts_only:
            _emit_counts(pairs.n_genuine, pairs.n_impostor, args.out)
            return EXIT_OK
        inputs = [args.folds, args.external, args.embeddings]
    _emit(ingest.format_pair_list(pairs), args.out)
    counts = {"genuine": pairs.n_genuine, "impostor": pairs.n_impostor}
    if args.protocol == "ufpr":
        ref_g, ref_i = protocols.UFPR_REFERENCE_COUNTS
        counts["reference_per_fold"] = {"genuine": ref_g, "impostor": ref_i}
    _write_run_report(args, _run_report(args, cfg, inputs, counts, started=started))
    return EXIT_OK


def cmd_score(args, cfg):
    started = time.perf_counter()
    store = ingest.read_embeddings(_read(args.embeddings), strict=cfg.strict_embeddings,
                                   source=args.embeddings)
    pairs = ingest.parse_pair_list(_read(args.pairs), source=args.pairs)
    scores = matcher.compute_pair_scores(store, pairs, cfg.metric, threads=cfg.n_threads,
                                         strict=cfg.strict_embeddings)
    _emit(matcher.write_scores(pairs, scores), args.out)
    counts = {"pairs": len(pairs), "genuine": pairs.n_genuine, "impostor": pairs.n_impostor,
              "embeddings": len(store), "clamped_values": store.clamped}
    if store.clamped:
        print(f"warning: clamped {store.clamped} negative embedding value(s) to 0", file=sys.stderr)
    _write_run_report(args, _run_report(args, cfg, [args.embeddings, args.pairs], counts,
                                        started=started))
    return EXIT_OK


def _load_scoreset(path, polarity):
    pairs, scores = matcher.read_scores(_read(path), source=path)
    return pairs, scores, matcher.ScoreSet.from_labels(scores, pairs.labels(), polarity)


def cmd_metrics(args, cfg):
    started = time.perf_counter()
    polarity = _polarity(args, cfg)
    sets = [_load_scoreset(p, polarity)[2] for p in args.scores]
    if len(sets) == 1:
        report = metrics.evaluate(sets[0])
    else:
        report = metrics.fold_report([metrics.evaluate(s) for s in sets])
        report["pooled"] = {"eer_pct": metrics.combined_eer(sets, "pooled"),
                            "auc_pct": metrics.auc(matcher.ScoreSet(
                                np.concatenate([s.genuine for s in sets]),
                                np.concatenate([s.impostor for s in sets]), polarity))}
        report["mean_of_eers_pct"] = metrics.combined_eer(sets, "mean")
    if args.det:
        if len(sets) == 1:
            _emit(metrics.det_csv(metrics.det_curve(sets[0])), args.det)
        else:
            stem = Path(args.det)
            for k, s in enumerate(sets, start=1):
                _emit(metrics.det_csv(metrics.det_curve(s)),
                      str(stem.with_name(f"{stem.stem}_fold{k}{stem.suffix}")))
    _emit(metrics.dumps(report), args.out)
    _write_run_report(args, _run_report(args, cfg, args.scores, {"score_files": len(sets)},
                                        report, started))
    return EXIT_OK


def cmd_fuse(args, cfg):
    started = time.perf_counter()
    if (args.weight is None) == (not args.sweep):
        raise UsageError("fuse needs exactly one of --weight or --sweep")
    polarity = _polarity(args, cfg)
    pairs_a, raw_a, set_a = _load_scoreset(args.scores_a, polarity)
    pairs_b, raw_b, set_b = _load_scoreset(args.scores_b, polarity)
    row = matcher.first_misaligned_row(pairs_a.entries, pairs_b.entries)
    if row is not None:
        raise matcher.MatchError(
            f"score files disagree at data row {row} ({args.scores_a} vs {args.scores_b})")
    if args.sweep:
        result = metrics.fusion_sweep(set_a, set_b, args.grid_step, cfg.normalize)
        if args.out:
            _emit(metrics.sweep_csv(result), args.out)
        report = {"best_a": result.best_a, "best_eer_pct": result.best_eer,
                  "normalize": cfg.normalize, "polarity": polarity,
                  "sweep": [{"a": float(a), "eer_pct": float(e)}
                            for a, e in zip(result.weights, result.eers)]}
    else:
        if not 0 <= args.weight <= 1:
            raise UsageError("--weight must be in [0, 1]")
        mask = pairs_a.labels()
        fused_all = matcher.fuse_arrays(raw_a, raw_b, args.weight, cfg.normalize)
        if args.out:
            _emit(matcher.write_scores(pairs_a, fused_all), args.out)
        report = metrics.evaluate(matcher.ScoreSet.from_labels(fused_all, mask, polarity))
        report.update({"a": args.weight, "normalize": cfg.normalize})
    _emit(metrics.dumps(report), args.report)
    _write_run_report(args, _run_report(args, cfg, [args.scores_a, args.scores_b],
                                        {"pairs": len(pairs_a)}, report, started))
    return EXIT_OK


def cmd_synth(args, cfg):
    started = time.perf_counter()
    poses = tuple(p.strip() for p in args.poses.split(",") if p.strip())
    bad = [p for p in poses if p not in ingest.POSES]
    if bad or not poses:
        raise UsageError(f"unknown pose(s) {bad}")
    try:
        store = synthetic.gen_synthetic_embeddings(
            args.subjects, args.images, args.dim, args.separation, args.noise, cfg.seed,
            poses=poses, per_eye_ids=args.per_eye, class_seed=args.class_seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    _emit(ingest.write_embeddings(store), args.out)
    if args.manifest:
        faces = synthetic.gen_synthetic_manifest(args.subjects, args.images, poses)
        _emit(ingest.format_face_manifest(faces), args.manifest)
    _write_run_report(args, _run_report(args, cfg, [], {"records": len(store)}, started=started))
    return EXIT_OK


COMMANDS = {"crop": cmd_crop, "pairs": cmd_pairs, "score": cmd_score,
            "metrics": cmd_metrics, "fuse": cmd_fuse, "synth": cmd_synth}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value config file")
    common.add_argument("--threads", help="worker count or 'auto'")
    common.add_argument("--seed", type=int)
    common.add_argument("--run-report", help="write a JSON run report here ('-' for stdout)")

    p = argparse.ArgumentParser(prog="periscope", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("crop", parents=[common], help="filter faces and cut 113x113 eye crops")
    c.add_argument("--manifest", required=True)
    c.add_argument("--images", required=True, help="directory holding the face images")
    c.add_argument("--out", required=True, help="output directory")
    c.add_argument("--target-ied", dest="target_ied", type=float)
    c.add_argument("--three-quarter-ied", dest="three_quarter_ied", type=float)
    c.add_argument("--min-ied", dest="min_ied", type=float)
    c.add_argument("--frontality-ratio", dest="frontality_ratio", type=float)
    c.add_argument("--fill", choices=("zero", "edge"))

    c = sub.add_parser("pairs", parents=[common], help="generate a verification pair list")
    c.add_argument("protocol", choices=("same-pose", "cross-pose", "ufpr"))
    c.add_argument("--manifest")
    c.add_argument("--pose", default="frontal", choices=ingest.POSES)
    c.add_argument("--pose-b", default="three_quarter", choices=ingest.POSES)
    c.add_argument("--folds")
    c.add_argument("--fold", type=int)
    c.add_argument("--mode", default="external", choices=("external", "per_eye_exhaustive"))
    c.add_argument("--external", help="official pair list (ufpr external mode)")
    c.add_argument("--embeddings", help="eye-image store (ufpr per_eye_exhaustive mode)")
    c.add_argument("--counts-only", action="store_true")
    c.add_argument("--out", default="-")

    c = sub.add_parser("score", parents=[common], help="score a pair list")
    c.add_argument("--embeddings", required=True)
    c.add_argument("--pairs", required=True)
    c.add_argument("--metric", choices=sorted(matcher.POLARITY))
    c.add_argument("--lenient", dest="strict_embeddings", action="store_const", const=False,
                   help="clamp negative embedding values to 0 instead of failing")
    c.add_argument("--out", default="-")

    c = sub.add_parser("metrics", parents=[common], help="EER/AUC report and DET export")
    c.add_argument("--scores", nargs="+", required=True, help="one score file, or one per fold")
    c.add_argument("--metric", choices=sorted(matcher.POLARITY))
    c.add_argument("--polarity", choices=matcher.POLARITIES)
    c.add_argument("--det", help="write DET points as CSV")
    c.add_argument("--out", default="-")

    c = sub.add_parser("fuse", parents=[common], help="weighted score fusion")
    c.add_argument("--scores-a", required=True)
    c.add_argument("--scores-b", required=True)
    c.add_argument("--weight", type=float, help="weight a of scores-a")
    c.add_argument("--sweep", action="store_true")
    c.add_argument("--grid-step", type=float, default=0.1)
    c.add_argument("--normalize", choices=("minmax", "none"))
    c.add_argument("--metric", choices=sorted(matcher.POLARITY))
    c.add_argument("--polarity", choices=matcher.POLARITIES)
    c.add_argument("--out", help="fused score CSV (--weight) or sweep CSV (--sweep)")
    c.add_argument("--report", default="-", help="JSON report path, '-' for stdout")

    c = sub.add_parser("synth", parents=[common], help="synthetic embedding store")
    c.add_argument("--subjects", type=int, required=True)
    c.add_argument("--images", type=int, required=True, help="images per pose and subject")
    c.add_argument("--dim", type=int, required=True)
    c.add_argument("--separation", type=float, default=1.0)
    c.add_argument("--noise", type=float, default=1.0)
    c.add_argument("--class-seed", type=int)
    c.add_argument("--poses", default="frontal")
    c.add_argument("--per-eye", action="store_true", help="one image id per eye sample")
    c.add_argument("--manifest", help="also write a matching face manifest")
    c.add_argument("--out", default="-")
    return p


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    args.argv = argv
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](args, cfg)
    except UsageError as exc:
        print(f"periscope {args.command}: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DATA_ERRORS as exc:
        print(f"periscope {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
