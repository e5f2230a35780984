"""Command-line pipeline: synth, extract, train, eval, predict.

Exit codes: 0 success, 1 usage error, 2 data error, 3 convergence
warning escalated by --strict. Configuration precedence: command-line
flags > JSON config file > built-in defaults. Every report embeds the
digest of the resolved RunConfig so runs are attributable.
"""

import argparse
import hashlib
import json
import sys
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

from . import degrade
from .dataset import (
    Manifest,
    ManifestEntry,
    SplitSpec,
    cache_features,
    evaluate,
    filter_by_camera,
    load_feature_cache,
    load_manifest,
    save_feature_cache,
    split,
)
from .errors import LensQcError
from .features import FEATURE_NAMES
from .filters import DEFAULT_EPS, DEFAULT_RADIUS, FilterConfig
from .image import load_image
from .svm import (
    DEFAULT_C_GRID,
    DEFAULT_FOLDS,
    DEFAULT_GAMMA_GRID,
    DEFAULT_MAX_ITER,
    DEFAULT_TOL,
    grid_search,
    load_model,
    save_model,
    train_multiclass,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_CONVERGENCE = 3


@dataclass
class RunConfig:
    """Resolved configuration, serialized into every report."""

    radius_k: int = DEFAULT_RADIUS
    radius_l: int = DEFAULT_RADIUS
    eps: float = DEFAULT_EPS
    laplacian: str = "cross4"
    train_fraction: float = 0.75
    seed: int = 42
    stratified: bool = True
    c_grid: list = field(default_factory=lambda: list(DEFAULT_C_GRID))
    gamma_grid: list = field(default_factory=lambda: list(DEFAULT_GAMMA_GRID))
    folds: int = DEFAULT_FOLDS
    tol: float = DEFAULT_TOL
    max_iter: int = DEFAULT_MAX_ITER
    class_weight: bool = False

    def filter_config(self):
        return FilterConfig(radius_k=self.radius_k, radius_l=self.radius_l,
                            eps=self.eps, laplacian=self.laplacian)

    def split_spec(self):
        return SplitSpec(
            train_fraction=self.train_fraction, seed=self.seed, stratified=self.stratified
        )

    def digest(self):
        canonical = json.dumps(asdict(self), sort_keys=True)
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _resolve_config(args):
    values = {}
    if getattr(args, "config", None):
        with open(args.config, "r", encoding="utf-8") as fh:
            file_values = json.load(fh)
        known = set(RunConfig.__dataclass_fields__)
        unknown = set(file_values) - known
        if unknown:
            raise LensQcError(f"unknown config keys: {sorted(unknown)}")
        values.update(file_values)
    for name in RunConfig.__dataclass_fields__:
        flag = getattr(args, name, None)
        if flag is not None:
            values[name] = flag
    cfg = RunConfig(**values)
    try:  # fail fast on invalid values, before any work starts
        cfg.filter_config()
        cfg.split_spec()
        if cfg.folds < 2 or cfg.tol <= 0 or cfg.max_iter < 1:
            raise ValueError(
                f"folds >= 2, tol > 0, max_iter >= 1 required; got "
                f"folds={cfg.folds}, tol={cfg.tol}, max_iter={cfg.max_iter}"
            )
    except ValueError as exc:
        raise LensQcError(f"invalid configuration: {exc}") from exc
    return cfg


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _float_list(text):
    return [float(v) for v in text.split(",") if v.strip()]


def _camera_list(text):
    tags = [t.strip() for t in text.split(",") if t.strip()]
    if tags == ["all"]:
        return None
    return tags


def build_parser():
    parser = _Parser(prog="lensqc", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="JSON config file (flags override it)")
        p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("synth", parents=[], help="generate a synthetic corpus")
    add_common(p)
    p.add_argument("--base", default=None, help="directory of base images (default: bundled)")
    p.add_argument("--per-class", type=int, default=100)
    p.add_argument("--out", required=True)

    p = sub.add_parser("extract", help="extract features for a manifest into a cache")
    add_common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--root", default=None, help="root for relative manifest paths")
    p.add_argument("--radius-k", dest="radius_k", type=int, default=None)
    p.add_argument("--radius-l", dest="radius_l", type=int, default=None)
    p.add_argument("--eps", type=float, default=None)

    p = sub.add_parser("train", help="split, grid-search, and train a model")
    add_common(p)
    p.add_argument("--cache", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--report", default=None, help="training report path (JSON)")
    p.add_argument("--train-fraction", dest="train_fraction", type=float, default=None)
    p.add_argument("--no-stratify", dest="stratified", action="store_false", default=None)
    p.add_argument("--c-grid", dest="c_grid", type=_float_list, default=None)
    p.add_argument("--gamma-grid", dest="gamma_grid", type=_float_list, default=None)
    p.add_argument("--folds", type=int, default=None)
    p.add_argument("--tol", type=float, default=None)
    p.add_argument("--max-iter", dest="max_iter", type=int, default=None)
    p.add_argument("--class-weight", dest="class_weight", action="store_true", default=None)
    p.add_argument("--labels", default=None, help="restrict to these labels (comma-separated)")
    p.add_argument("--train-cameras", default="all")
    p.add_argument("--strict", action="store_true")

    p = sub.add_parser("eval", help="evaluate a model and write a report")
    add_common(p)
    p.add_argument("--cache", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--report", required=True, help="report path prefix (.json/.txt)")
    p.add_argument("--test-manifest", default=None, help="explicit test manifest")
    p.add_argument("--test-cameras", default="all")
    p.add_argument("--train-cameras", default=None,
                   help="consistency check against the model's recorded filter")

    p = sub.add_parser("predict", help="classify one or more images")
    add_common(p)
    p.add_argument("--model", required=True)
    p.add_argument("images", nargs="+")
    p.add_argument("--show-features", action="store_true")
    p.add_argument("--radius-k", dest="radius_k", type=int, default=None)
    p.add_argument("--radius-l", dest="radius_l", type=int, default=None)
    p.add_argument("--eps", type=float, default=None)

    return parser


def cmd_synth(args):
    cfg = _resolve_config(args)
    if args.base is None:
        base_paths = degrade.bundled_base_paths()
    else:
        base_dir = Path(args.base)
        if not base_dir.is_dir():
            print(f"error: base directory not found: {base_dir}", file=sys.stderr)
            return EXIT_DATA
        base_paths = sorted(
            p for p in base_dir.iterdir() if p.suffix.lower() in (".png", ".jpg", ".jpeg")
        )
        if not base_paths:
            print(f"error: no images in base directory: {base_dir}", file=sys.stderr)
            return EXIT_DATA
    manifest = degrade.build_corpus(
        base_paths, args.out, per_class=args.per_class, seed=cfg.seed
    )
    counts = manifest.class_counts()
    print(f"corpus written to {args.out} ({len(manifest)} images)")
    for lab in manifest.labels:
        print(f"  {lab}: {counts[lab]}")
    return EXIT_OK


def cmd_extract(args):
    cfg = _resolve_config(args)
    manifest = load_manifest(args.manifest)
    root = Path(args.root) if args.root else Path(args.manifest).parent

    def progress(done, total):
        if done % 100 == 0 or done == total:
            print(f"  extracted {done}/{total}", file=sys.stderr)

    cache, failures = cache_features(manifest, cfg.filter_config(), root=root,
                                     progress=progress)
    save_feature_cache(cache, args.out)
    if failures:
        sidecar = Path(str(args.out) + ".failures.txt")
        with open(sidecar, "w", encoding="utf-8") as fh:
            for path, msg in failures:
                fh.write(f"{path}\t{msg}\n")
        print(f"{len(failures)} image(s) failed, listed in {sidecar}", file=sys.stderr)
    print(f"cache written to {args.out} ({len(cache)} rows, {len(failures)} failures)")
    if len(failures) > 0.10 * len(manifest):
        print("error: more than 10% of images failed", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


def _cache_to_manifest(cache):
    return Manifest(entries=[
        ManifestEntry(path=p, label=lab, camera=cam, dataset="cache")
        for p, lab, cam in zip(cache.paths, cache.labels, cache.cameras)
    ])


def cmd_train(args):
    cfg = _resolve_config(args)
    cache = load_feature_cache(args.cache)
    if args.labels:
        keep = {lab.strip() for lab in args.labels.split(",")}
        idx = [k for k, lab in enumerate(cache.labels) if lab in keep]
        cache = cache.select([cache.paths[k] for k in idx])
    if len(cache) == 0:
        print("error: feature cache is empty", file=sys.stderr)
        return EXIT_DATA

    manifest = _cache_to_manifest(cache)
    train_manifest, test_manifest = split(manifest, cfg.split_spec())

    cameras = _camera_list(args.train_cameras)
    if cameras is not None:
        train_manifest = filter_by_camera(train_manifest, cameras)

    train_cache = cache.select([e.path for e in train_manifest])
    label_order = manifest.labels

    best, cv_table = grid_search(
        train_cache.features, train_cache.labels,
        c_grid=cfg.c_grid, gamma_grid=cfg.gamma_grid, folds=cfg.folds,
        seed=cfg.seed, tol=cfg.tol, max_iter=cfg.max_iter,
        class_weight=cfg.class_weight,
    )
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        model = train_multiclass(
            train_cache.features, train_cache.labels, best,
            label_order=[lab for lab in label_order if lab in set(train_cache.labels)],
            tol=cfg.tol, max_iter=cfg.max_iter, class_weight=cfg.class_weight,
            meta={
                "config_digest": cfg.digest(),
                "config": asdict(cfg),
                "split": {
                    "train_fraction": cfg.train_fraction,
                    "seed": cfg.seed,
                    "stratified": cfg.stratified,
                },
                "train_cameras": cameras if cameras is not None else "all",
                "chosen_params": {"c": best.c, "gamma": best.gamma},
                "train_paths": [e.path for e in train_manifest],
            },
        )
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)

    save_model(model, args.model)
    report = {
        "config_digest": cfg.digest(),
        "seed": cfg.seed,
        "chosen_params": {"c": best.c, "gamma": best.gamma},
        "cv_table": cv_table,
        "train_size": len(train_cache),
        "test_size": len(test_manifest),
        "class_counts": _cache_to_manifest(train_cache).class_counts(),
        "n_machines": len(model.machines),
        "converged": model.converged,
    }
    report_path = args.report or str(Path(args.model).with_suffix(".train.json"))
    with open(report_path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=1)
        fh.write("\n")
    print(f"model written to {args.model} ({len(model.machines)} binary machines)")
    print(f"chosen C={best.c} gamma={best.gamma}, "
          f"cv accuracy={max(r['accuracy'] for r in cv_table):.4f}")
    if not model.converged:
        print("warning: at least one binary machine did not converge", file=sys.stderr)
        if args.strict:
            return EXIT_CONVERGENCE
    return EXIT_OK


def cmd_eval(args):
    cfg = _resolve_config(args)
    model = load_model(args.model)
    cache = load_feature_cache(args.cache)

    if args.test_manifest:
        test_manifest = load_manifest(args.test_manifest)
    else:
        meta_split = model.meta.get("split", {})
        spec = SplitSpec(
            train_fraction=meta_split.get("train_fraction", cfg.train_fraction),
            seed=meta_split.get("seed", cfg.seed),
            stratified=meta_split.get("stratified", cfg.stratified),
        )
        model_labels = set(model.labels)
        rows = [k for k, lab in enumerate(cache.labels) if lab in model_labels]
        base = _cache_to_manifest(cache.select([cache.paths[k] for k in rows]))
        _, test_manifest = split(base, spec)

    cameras = _camera_list(args.test_cameras)
    if cameras is not None:
        test_manifest = filter_by_camera(test_manifest, cameras)

    if args.train_cameras is not None:
        recorded = model.meta.get("train_cameras", "all")
        requested = _camera_list(args.train_cameras) or "all"
        requested = requested if requested == "all" else list(requested)
        if recorded != requested:
            print(
                f"warning: model was trained with cameras {recorded}, "
                f"--train-cameras asked for {requested}",
                file=sys.stderr,
            )

    test_cache = cache.select([e.path for e in test_manifest])
    if len(test_cache) != len(test_manifest):
        missing = len(test_manifest) - len(test_cache)
        print(f"error: {missing} test image(s) missing from the cache", file=sys.stderr)
        return EXIT_DATA
    if len(test_cache) == 0:
        print("error: empty test set", file=sys.stderr)
        return EXIT_DATA

    train_paths = set(model.meta.get("train_paths", []))
    overlap = sum(1 for p in test_cache.paths if p in train_paths)
    if overlap:
        print(f"warning: {overlap} evaluated image(s) were in the training split",
              file=sys.stderr)

    report = evaluate(
        model, test_cache.features, test_cache.labels,
        meta={
            "config_digest": model.meta.get("config_digest", cfg.digest()),
            "config": model.meta.get("config", asdict(cfg)),
            "split_seed": model.meta.get("split", {}).get("seed", cfg.seed),
            "test_size": len(test_cache),
            "test_cameras": cameras if cameras is not None else "all",
            "train_overlap": overlap,
        },
    )
    json_path = Path(str(args.report) + ".json")
    txt_path = Path(str(args.report) + ".txt")
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, indent=1)
        fh.write("\n")
    txt_path.write_text(report.to_text(), encoding="utf-8")
    print(report.to_text())
    print(f"report written to {json_path} and {txt_path}")
    return EXIT_OK


def cmd_predict(args):
    cfg = _resolve_config(args)
    model = load_model(args.model)
    # filtering must match training; the model records its config
    trained = model.meta.get("config", {})
    fcfg = FilterConfig(
        radius_k=args.radius_k or trained.get("radius_k", cfg.radius_k),
        radius_l=args.radius_l or trained.get("radius_l", cfg.radius_l),
        eps=args.eps or trained.get("eps", cfg.eps),
        laplacian=trained.get("laplacian", cfg.laplacian),
    )
    from .features import extract_features
    from .filters import compute_fields

    for img_path in args.images:
        img = load_image(img_path)
        vec = extract_features(compute_fields(img, fcfg))
        label, votes, pair_decisions = model.predict_one(vec)
        print(f"{img_path}: {label}")
        vote_text = ", ".join(f"{lab}={votes[lab]}" for lab in model.labels)
        print(f"  votes: {vote_text}")
        for pos, neg, d in pair_decisions:
            winner = pos if d >= 0.0 else neg
            print(f"  pair {pos}/{neg}: {winner} (decision {d:+.4f})")
        if args.show_features:
            for name, value in zip(FEATURE_NAMES, vec):
                print(f"  {name} = {value!r}")
    return EXIT_OK


_COMMANDS = {
    "synth": cmd_synth,
    "extract": cmd_extract,
    "train": cmd_train,
    "eval": cmd_eval,
    "predict": cmd_predict,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except FileNotFoundError as exc:
        print(f"error: file not found: {exc}", file=sys.stderr)
        return EXIT_DATA
    except LensQcError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
