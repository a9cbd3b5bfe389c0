"""``greenview`` command-line entry point.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import contextlib
import csv
import datetime as _dt
import io
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .dataset_io import (
    default_splits,
    label_id,
    load_pairs,
    read_label,
    read_png,
    scan_dataset,
    write_label,
    write_manifest,
    write_split_files,
)
from .errors import DataError, NumericalError
from .labelspace import bundled_path, load_catalog, load_remap_table, remap
from .lossfn import finite_difference_check, image_weights, loss_and_gradient
from .metrics import aggregate_gvi, evaluate, gvi
from .synthetic import SyntheticSpec, generate_synthetic, synthetic_catalog, write_synthetic_dataset

log = logging.getLogger("greenview")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _size(text: str) -> tuple[int, int]:
    try:
        h, w = text.lower().split("x")
        return int(h), int(w)
    except ValueError:
        raise argparse.ArgumentTypeError(f"size must look like HxW, got {text!r}") from None


def _label_files(directory) -> dict[str, Path]:
    directory = Path(directory)
    if (directory / "labels").is_dir():
        directory = directory / "labels"
    if not directory.is_dir():
        raise DataError(f"{directory} is not a directory")
    files = {}
    for p in sorted(directory.glob("*.png")):
        key = label_id(p)
        if key in files:
            raise DataError(f"two label files for id {key!r} in {directory}")
        files[key] = p
    return files


def _catalog(args, data_dir=None):
    classes = args.classes
    greenery = getattr(args, "greenery", None)
    if classes is None and data_dir is not None:
        classes = Path(data_dir) / "class_dict.csv"
        if greenery is None and (Path(data_dir) / "greenery.txt").exists():
            greenery = Path(data_dir) / "greenery.txt"
    if classes is None:
        raise UsageError("--classes is required")
    return load_catalog(classes, greenery)


def _write_text(path, text: str) -> None:
    if path is None or str(path) == "-":
        sys.stdout.write(text)
    else:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text)


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _fmt(v) -> str:
    return f"{v:.6g}"


# --- subcommands -----------------------------------------------------------


def cmd_classes(args):
    cat = _catalog(args)
    rows = [(i, c.name, *c.color, int(c.is_greenery)) for i, c in enumerate(cat.classes)]
    rows.append(("void", "Void", *cat.void_color, 0))
    _write_text(args.out, _csv_text(["index", "name", "r", "g", "b", "greenery"], rows))
    return [args.out] if args.out else []


def cmd_remap(args):
    source = load_catalog(args.classes or bundled_path("camvid32_class_dict.csv"))
    target = load_catalog(args.target_classes or bundled_path("camvid7_class_dict.csv"))
    table = load_remap_table(args.table or bundled_path("camvid7_remap.csv"), source, target)
    out = Path(args.out)
    for key, path in _label_files(args.labels).items():
        y = remap(read_label(path, source), table)
        write_label(out / path.name, y, target)
    return [str(out)]


def cmd_weights(args):
    cat = _catalog(args)
    rows = []
    for key, path in _label_files(args.labels).items():
        w = image_weights(read_label(path, cat), cat.C)
        for c, name in enumerate(cat.names):
            rows.append((key, name, int(w.counts[c]), repr(float(w.weights[c]))))
    _write_text(args.out, _csv_text(["image", "class", "count", "weight"], rows))
    return [args.out] if args.out else []


def cmd_synth(args):
    h, w = args.size
    spec = SyntheticSpec(
        count=args.count, height=h, width=w, classes=args.classes, minority=args.minority,
        shape=args.shape, noise=args.noise, seed=args.seed, void=args.void,
    )
    samples = generate_synthetic(spec)
    ids = write_synthetic_dataset(samples, args.out, synthetic_catalog(spec.classes))
    if args.splits:
        write_split_files(default_splits(ids), Path(args.out) / "splits")
    print(f"wrote {len(ids)} pairs to {args.out}")
    return [args.out]


def cmd_scan(args):
    manifest = scan_dataset(args.data, args.splits)
    if args.make_splits and not manifest.split:
        split = default_splits(manifest.ids())
        write_split_files(split, Path(args.data) / "splits")
        manifest = scan_dataset(args.data)
    sizes = manifest.split_sizes()
    print(f"pairs,{len(manifest.pairs)}")
    for name, n in sizes.items():
        print(f"{name},{n}")
    if args.manifest:
        write_manifest(manifest, args.manifest)
        return [args.manifest]
    return []


def _load_split(manifest, catalog, split):
    pairs = manifest.subset(split) if manifest.split else (manifest.pairs if split == "train" else [])
    return [(img, y) for _, img, y in load_pairs(pairs, catalog)]


def cmd_train(args):
    from .toynet import NetworkConfig, TrainConfig, save_checkpoint, train

    manifest = scan_dataset(args.data)
    cat = _catalog(args, args.data)
    data = _load_split(manifest, cat, "train")
    if not data:
        raise DataError(f"no training pairs found under {args.data}")
    val = _load_split(manifest, cat, "val") or None
    netcfg = NetworkConfig(depth=args.depth, base_channels=args.base_channels, C_out=cat.C, seed=args.seed)
    cfg = TrainConfig(
        learning_rate=args.lr, momentum=args.momentum, epochs=args.epochs, batch_size=args.batch,
        weighting=args.weighting, seed=args.seed,
    )
    params, history = train(data, cfg, netcfg, val)
    extra = {"train": cfg.to_dict(), "catalog": cat.to_dict()}
    save_checkpoint(args.out, params, cfg.epochs, extra)
    log_path = Path(str(args.out) + ".log.csv")
    rows = [(r["epoch"], repr(r["loss"]), repr(r["val_mean_iou"])) for r in history]
    log_path.write_text(_csv_text(["epoch", "loss", "val_mean_iou"], rows))
    last = history[-1]
    print(f"epochs {cfg.epochs} loss {_fmt(last['loss'])} val_mean_iou {_fmt(last['val_mean_iou'])}")
    return [str(args.out), str(log_path)]


def cmd_predict(args):
    from .labelspace import ClassCatalog
    from .toynet import load_checkpoint, predict

    params, header = load_checkpoint(args.ckpt)
    if args.classes:
        cat = load_catalog(args.classes)
    elif "catalog" in header:
        cat = ClassCatalog.from_dict(header["catalog"])
    else:
        raise UsageError("checkpoint has no catalog; pass --classes")
    if cat.C != params.config.C_out:
        raise DataError(f"catalog has {cat.C} classes, network outputs {params.config.C_out}")
    src = Path(args.image)
    if src.is_dir():
        if (src / "images").is_dir():
            src = src / "images"
        jobs = [(p, Path(args.out) / f"{p.stem}.png") for p in sorted(src.glob("*.png"))]
    else:
        jobs = [(src, Path(args.out))]
    for image_path, out_path in jobs:
        img = read_png(image_path).astype(np.float64) / 255.0
        write_label(out_path, predict(params, img), cat)
    return [str(args.out)]


def cmd_eval(args):
    cat = _catalog(args)
    gt = _label_files(args.gt)
    pred = _label_files(args.pred)
    missing = sorted(set(gt) ^ set(pred))
    if missing:
        raise DataError(f"ground truth and predictions do not pair; first unmatched id {missing[0]!r}")
    triples = []
    for key in sorted(gt):
        g = read_label(gt[key], cat)
        p = read_label(pred[key], cat)
        if (p == -1).any():
            raise DataError(f"prediction {key!r} contains void pixels")
        triples.append((key, g, p))
    report = evaluate(triples, cat)
    text = json.dumps(report.to_json_dict(), indent=2, sort_keys=True) + "\n"
    _write_text(args.out, text)
    return [args.out] if args.out else []


def cmd_gvi(args):
    cat = _catalog(args)
    if not cat.greenery:
        raise UsageError("no greenery classes given; pass --greenery")
    rows, recs = [], []
    for key, path in _label_files(args.labels).items():
        rec = gvi(read_label(path, cat), cat.greenery, key)
        recs.append(rec)
        rows.append((key, rec.greenery_pixels, rec.valid_pixels, _fmt(rec.gvi)))
    agg = aggregate_gvi(recs)
    rows.append(("aggregate", sum(r.greenery_pixels for r in recs), sum(r.valid_pixels for r in recs), _fmt(agg)))
    _write_text(args.out, _csv_text(["id", "greenery_pixels", "valid_pixels", "gvi"], rows))
    return [args.out] if args.out else []


def run_gradcheck(depth, size, classes, samples, seed, base_channels=8, epsilon=1e-4):
    """Returns ``(network_error, loss_only_error)`` for a random instance."""
    from .toynet import NetworkConfig, backward, init_params

    h, w = size
    rng = np.random.default_rng(seed)
    params = init_params(NetworkConfig(depth=depth, base_channels=base_channels, C_out=classes, seed=seed))
    params.vector[:] += rng.normal(0.0, 0.05, params.size)
    image = rng.random((h, w, 3))
    y = rng.integers(0, classes, (h, w))
    y[rng.random((h, w)) < 0.1] = -1
    wv = image_weights(y, classes)
    _, grad = backward(params, image, y, wv)
    net_err = finite_difference_check(
        lambda th: backward(params.with_vector(th), image, y, wv)[0].total,
        params.vector, grad, samples=samples, epsilon=epsilon, seed=seed,
    )
    # loss-only check on a small map: a long pixel sum buries tiny gradient entries in roundoff
    ys = rng.integers(0, classes, (4, 4))
    ys[0, 0] = -1
    ws = image_weights(ys, classes)
    a = rng.normal(0.0, 1.0, (4, 4, classes))
    _, ga = loss_and_gradient(ys, a, ws)
    loss_err = finite_difference_check(
        lambda flat: loss_and_gradient(ys, flat.reshape(a.shape), ws)[0].total,
        a, ga, epsilon=1e-4,
    )
    return net_err, loss_err


def cmd_gradcheck(args):
    t0 = time.perf_counter()
    net_err, loss_err = run_gradcheck(
        args.depth, args.size, args.classes, args.samples, args.seed, args.base_channels, args.epsilon,
    )
    elapsed = time.perf_counter() - t0
    ok = net_err <= args.tol and loss_err <= args.loss_tol
    print(f"network max_rel_error {net_err:.3e} (tol {args.tol:g}, {args.samples} samples)")
    print(f"loss max_rel_error {loss_err:.3e} (tol {args.loss_tol:g})")
    print(f"{'PASS' if ok else 'FAIL'} in {elapsed:.1f}s")
    if not ok:
        raise NumericalError("gradient check exceeded tolerance")
    return []


def render_report(reports: list[tuple[str, dict]]) -> str:
    """Plain-text comparison table: IoU g., MAE (%), PCC, EE (%)."""

    def pct(v):
        return "NA" if v is None else f"{100 * v:.1f}%"

    def num(v, spec):
        return "NA" if v is None else format(v, spec)

    header = ("Run", "IoU g.", "MAE (%)", "PCC", "EE (%)")
    rows = []
    for name, d in reports:
        ee = d.get("ee_pct") or {}
        ee_text = "NA" if ee.get("p5") is None else f"{ee['p5']:.1f}, {ee['p95']:.1f}"
        rows.append((name, pct(d.get("greenery_iou")), num(d.get("mae_pct"), ".2f"), num(d.get("pcc"), ".3f"), ee_text))
    widths = [max(len(r[i]) for r in [header, *rows]) for i in range(len(header))]
    line = "+" + "+".join("-" * (w + 2) for w in widths) + "+"
    out = [line, "| " + " | ".join(h.ljust(w) for h, w in zip(header, widths)) + " |", line]
    out += ["| " + " | ".join(c.ljust(w) for c, w in zip(r, widths)) + " |" for r in rows]
    out.append(line)
    return "\n".join(out) + "\n"


def cmd_report(args):
    reports = []
    names = args.names.split(",") if args.names else None
    if names and len(names) != len(args.reports):
        raise UsageError("--names must give one name per report")
    for i, path in enumerate(args.reports):
        try:
            d = json.loads(Path(path).read_text())
        except json.JSONDecodeError as e:
            raise DataError(f"{path}: not a JSON report ({e})") from None
        reports.append((names[i] if names else Path(path).stem, d))
    _write_text(args.out, render_report(reports))
    return [args.out] if args.out else []


# --- wiring ----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="greenview", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"greenview {__version__}")
    p.add_argument("--threads", type=int, default=None, help="cap BLAS worker threads")
    p.add_argument("--deterministic", action="store_true", help="single-threaded, fixed-order reductions")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("classes", help="list a class dictionary")
    s.add_argument("--classes", required=True)
    s.add_argument("--greenery")
    s.add_argument("--out")
    s.set_defaults(func=cmd_classes)

    s = sub.add_parser("remap", help="relabel label images under a class-reduction table")
    s.add_argument("--labels", required=True)
    s.add_argument("--classes", help="source class dictionary (default: bundled CamVid)")
    s.add_argument("--target-classes", help="target class dictionary (default: bundled 7-class)")
    s.add_argument("--table", help="source,target CSV (default: bundled 7-class table)")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_remap)

    s = sub.add_parser("weights", help="per-image class weights as CSV")
    s.add_argument("--labels", required=True)
    s.add_argument("--classes", required=True)
    s.add_argument("--out")
    s.set_defaults(func=cmd_weights)

    s = sub.add_parser("synth", help="write a synthetic imbalanced dataset")
    s.add_argument("--count", type=int, default=64)
    s.add_argument("--size", type=_size, default=(32, 32))
    s.add_argument("--classes", type=int, default=2)
    s.add_argument("--minority", type=float, default=0.05)
    s.add_argument("--shape", choices=("disks", "stripes"), default="disks")
    s.add_argument("--noise", type=float, default=0.1)
    s.add_argument("--void", type=float, default=0.0)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--splits", action="store_true", help="also write train/val/test split files")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("scan", help="pair images with labels and report split sizes")
    s.add_argument("--data", required=True)
    s.add_argument("--splits", help="directory with train/val/test.txt (default DATA/splits)")
    s.add_argument("--make-splits", action="store_true", help="write sorted-order splits if none exist")
    s.add_argument("--manifest", help="write the manifest as JSON")
    s.set_defaults(func=cmd_scan)

    s = sub.add_parser("train", help="train the toy network")
    s.add_argument("--data", required=True)
    s.add_argument("--classes")
    s.add_argument("--greenery")
    s.add_argument("--depth", type=int, default=2)
    s.add_argument("--base-channels", type=int, default=8)
    s.add_argument("--lr", type=float, default=0.05)
    s.add_argument("--momentum", type=float, default=0.9)
    s.add_argument("--epochs", type=int, default=200)
    s.add_argument("--batch", type=int, default=8)
    s.add_argument("--weighting", choices=("eq2", "uniform"), default="eq2")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("predict", help="segment an image (or a directory of images)")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--image", required=True)
    s.add_argument("--classes", help="override the catalog stored in the checkpoint")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_predict)

    s = sub.add_parser("eval", help="IoU, GVI and GVI error statistics as JSON")
    s.add_argument("--gt", required=True)
    s.add_argument("--pred", required=True)
    s.add_argument("--classes", required=True)
    s.add_argument("--greenery")
    s.add_argument("--out")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("gvi", help="per-image and aggregate Green View Index")
    s.add_argument("--labels", required=True)
    s.add_argument("--classes", required=True)
    s.add_argument("--greenery", required=True)
    s.add_argument("--out")
    s.set_defaults(func=cmd_gvi)

    s = sub.add_parser("gradcheck", help="finite-difference check of network and loss gradients")
    s.add_argument("--depth", type=int, default=2)
    s.add_argument("--base-channels", type=int, default=8)
    s.add_argument("--size", type=_size, default=(16, 16))
    s.add_argument("--classes", type=int, default=3)
    s.add_argument("--samples", type=int, default=1000)
    s.add_argument("--seed", type=int, default=7)
    s.add_argument("--epsilon", type=float, default=1e-4)
    s.add_argument("--tol", type=float, default=1e-4)
    s.add_argument("--loss-tol", type=float, default=1e-6)
    s.set_defaults(func=cmd_gradcheck)

    s = sub.add_parser("report", help="side-by-side table from eval JSON reports")
    s.add_argument("reports", nargs="+")
    s.add_argument("--names", help="comma-separated row names")
    s.add_argument("--out")
    s.set_defaults(func=cmd_report)
    return p


def _write_run_record(args, argv, outputs, started, finished) -> None:
    flags = {k: (list(v) if isinstance(v, tuple) else v) for k, v in vars(args).items() if k != "func"}
    record = {
        "command": args.command,
        "argv": list(argv),
        "flags": {k: (str(v) if isinstance(v, Path) else v) for k, v in flags.items()},
        "seed": flags.get("seed"),
        "version": __version__,
        "started": started,
        "finished": finished,
        "outputs": [str(o) for o in outputs],
    }
    target = Path(outputs[0])
    path = target / "run.json" if target.is_dir() else Path(str(target) + ".run.json")
    path.write_text(json.dumps(record, indent=2, sort_keys=True, default=str) + "\n")


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(message)s")

    limits = contextlib.nullcontext()
    if args.deterministic or args.threads:
        from threadpoolctl import threadpool_limits

        limits = threadpool_limits(1 if args.deterministic else args.threads)
    started = _dt.datetime.now(_dt.timezone.utc).isoformat()
    try:
        with limits:
            outputs = args.func(args) or []
    except UsageError as e:
        print(f"greenview {args.command}: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, OSError) as e:
        print(f"greenview {args.command}: {e}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as e:
        print(f"greenview {args.command}: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    outputs = [o for o in outputs if o and str(o) != "-"]
    if outputs:
        _write_run_record(args, argv, outputs, started, _dt.datetime.now(_dt.timezone.utc).isoformat())
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
