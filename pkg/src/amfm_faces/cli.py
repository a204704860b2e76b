"""``amfm-faces`` command line.

Exit codes: 0 success, 1 usage or parameter error, 2 data/format/I-O error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from contextlib import nullcontext
from pathlib import Path

import numpy as np

from . import dataset as D
from .config import RunConfig, derive_seed, load_config
from .errors import EvaluationError, FormatError, NumericalError, ParameterError
from .evaluation import (
    Overlay,
    auc,
    binarize_gt,
    block_marks,
    confusion_at,
    emit_report,
    fmt,
    roc_curve,
)
from .gabor import BankConfig, bank_frequency_report, build_bank, load_bank, save_bank
from .hilbert import (
    SaConfig,
    design_hilbert_fir,
    ideal_hilbert_magnitude,
    linear_phase_report,
    load_filter,
    objective_mse,
    quantize,
    sa_refine,
    save_filter,
)
from .imageio import read_gray, rescale_to_u8, write_pgm
from .nets import (
    History,
    Network,
    TrainConfig,
    build_lenet5_baseline,
    build_multi_block_net,
    build_single_block_net,
    count_params,
    fit,
    load_model,
    save_model,
)

log = logging.getLogger("amfm_faces")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


class _Fmt(argparse.ArgumentDefaultsHelpFormatter):
    pass


# -- subcommands ---------------------------------------------------------------


def cmd_design_filter(args):
    filt = design_hilbert_fir(args.taps, args.kaiser_beta, args.n_fft, args.transition)
    ideal = ideal_hilbert_magnitude(args.n_fft, args.transition)
    print(f"float objective {fmt(objective_mse(filt, ideal))}")
    if args.bits is not None:
        filt = quantize(filt, args.bits)
        print(f"rounded objective ({args.bits} bits) {fmt(objective_mse(filt, ideal))}")
        if args.iterations > 0:
            cfg = SaConfig(max_iterations=args.iterations, rng_seed=derive_seed(args.seed, "sa"))
            res = sa_refine(filt, ideal, cfg)
            filt = res.filter
            print(f"annealed objective {fmt(res.objective)} (C={fmt(res.c_exponent)}, "
                  f"{res.accepted} accepted moves)")
    rep = linear_phase_report(filt)
    print(f"phase residual {fmt(rep.max_residual)} rad, fitted delay {fmt(rep.fitted_delay)} samples")
    save_filter(filt, args.out)
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_filterbank(args):
    cfg = BankConfig()
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text())
        except json.JSONDecodeError as exc:
            raise ParameterError(f"{args.config}: invalid JSON ({exc})") from None
        if not isinstance(data, dict):
            raise ParameterError(f"{args.config}: expected a JSON object")
        cfg = RunConfig.from_dict(data).bank if "bank" in data else BankConfig.from_dict(data)
    bank = build_bank(cfg)
    if args.report:
        print("channel scale theta peak_wx peak_wy peak_magnitude dc_gain")
        for r in bank_frequency_report(bank, args.n_fft):
            wx, wy = r["peak_frequency"]
            print(r["channel"], r["scale"], fmt(r["theta"]), fmt(wx), fmt(wy),
                  fmt(r["peak_magnitude"]), fmt(r["dc_gain"]))
    save_bank(bank, args.out)
    print(f"wrote {args.out}")
    return EXIT_OK


def _filter_and_bank(args):
    filt = load_filter(args.filter) if args.filter else design_hilbert_fir()
    bank = load_bank(args.bank) if args.bank else build_bank()
    return filt, bank


def cmd_demodulate(args):
    from .amfm import demodulate

    gray = read_gray(args.image)
    if args.decimate:
        gray = D.decimate_frame(gray)
    filt, bank = _filter_and_bank(args)
    dec = demodulate(gray, filt, bank)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_pgm(out / "ia.pgm", rescale_to_u8(dec.ia))
    write_pgm(out / "ip.pgm", rescale_to_u8(dec.ip))
    write_pgm(out / "fm.pgm", np.round((dec.fm + 1.0) * 127.5).astype(np.uint8))
    write_pgm(out / "channel.pgm", (dec.channel * 16).astype(np.uint8))
    counts = np.bincount(dec.channel.ravel(), minlength=len(bank))
    print(f"{dec.ia.shape[0]}x{dec.ia.shape[1]} ia max {fmt(dec.ia.max())}; "
          f"dominant channel counts {counts.tolist()}")
    return EXIT_OK


def cmd_dataset_build(args):
    from .pipeline import read_frames_dir

    frames = read_frames_dir(args.frames_dir)
    rects = D.read_annotations(args.annotations) if args.annotations else None
    filt, bank = _filter_and_bank(args)
    ds = D.build_dataset(frames, rects, args.input_kind, filt, bank, decimation=args.decimation)
    D.save_dataset(ds, args.out)
    print(f"wrote {len(ds)} blocks ({ds.channels} channel(s)) to {args.out}")
    return EXIT_OK


def cmd_dataset_synth(args):
    frames, rects = D.synth_corpus(derive_seed(args.seed, "corpus"), args.videos, args.frames)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for (vid, idx), frame in sorted(frames.items()):
        write_pgm(out / f"{vid}_{idx}.pgm", frame)
    D.write_annotations(rects, out / "annotations.csv")
    print(f"wrote {len(frames)} frames and {len(rects)} rectangles to {out}")
    return EXIT_OK


def cmd_dataset_inspect(args):
    ds = D.load_dataset(args.path)
    pos = int(np.sum(ds.targets > args.gt_threshold))
    print(f"count {len(ds)}")
    print(f"block {D.BLOCK}x{D.BLOCK}x{ds.channels}")
    print(f"input_kind {ds.input_kind}")
    print(f"frames {len(ds.frame_keys())}")
    print(f"videos {' '.join(ds.video_ids)}")
    print(f"positives {pos} (target > {fmt(args.gt_threshold)})")
    return EXIT_OK


def _train_config(args, stage):
    return TrainConfig(
        epochs=args.epochs,
        batch_size=args.batch_size,
        learning_rate=args.lr,
        optimizer=args.optimizer,
        rng_seed=derive_seed(args.seed, f"train_{stage}"),
        gt_threshold=args.gt_threshold,
    )


def cmd_train(args):
    train = D.load_dataset(args.train)
    val = D.load_dataset(args.val) if args.val else None
    if args.net == "multi":
        if not args.single_model:
            raise ParameterError("--net multi needs --single-model")
        single = load_model(args.single_model)
        x, _ = train.frame_matrix(single.predict(train.blocks))
        y, _ = train.frame_matrix()
        xv = yv = None
        if val is not None and len(val):
            xv, _ = val.frame_matrix(single.predict(val.blocks))
            yv, _ = val.frame_matrix()
        spec = build_multi_block_net()
    else:
        x, y = train.blocks, train.targets
        xv, yv = (val.blocks, val.targets) if val is not None and len(val) else (None, None)
        if args.net == "single":
            spec = build_single_block_net(train.channels, pool_stride=args.pool_stride)
        else:
            spec = build_lenet5_baseline(train.channels)
    net = Network(spec, seed=derive_seed(args.seed, f"init_{args.net}"))
    hist = fit(net, x, y, _train_config(args, args.net), xv, yv, log_every=args.log_every)
    save_model(net, args.out)
    if args.history:
        hist.write_csv(args.history)
    print(f"{spec.name}: {count_params(net)} parameters, final train loss "
          f"{fmt(hist.train_loss[-1])}, val AUC {fmt(hist.val_auc[-1])}")
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_evaluate(args):
    ds = D.load_dataset(args.dataset)
    single = load_model(args.single_model)
    scores = single.predict(ds.blocks)
    targets = ds.targets
    if args.multi_model:
        multi = load_model(args.multi_model)
        fm_scores, keys = ds.frame_matrix(scores)
        frame_t, _ = ds.frame_matrix()
        refined = multi.predict(fm_scores)
        scores, targets = refined.ravel(), frame_t.ravel()
    else:
        fm_scores, keys = ds.frame_matrix(scores)
        frame_t, _ = ds.frame_matrix()
        refined = fm_scores
    labels = binarize_gt(targets, args.gt_threshold)
    curve = roc_curve(scores, labels)
    c = confusion_at(scores, labels, args.pred_threshold, args.gt_threshold)

    overlays = []
    frame_pos = {k: i for i, k in enumerate(keys)}
    for key in keys[: args.overlay_frames]:
        idx = [i for i, p in enumerate(ds.provenance) if (p[0], p[1]) == key]
        image = rescale_to_u8(D.assemble_blocks(ds.blocks[idx][..., 0]))
        marks = block_marks(refined[frame_pos[key]], frame_t[frame_pos[key]],
                            args.pred_threshold, args.gt_threshold)
        overlays.append(Overlay(key[0], key[1], image, marks))
    hist = None
    if args.history:
        hist = _read_history(args.history)
    emit_report(hist, curve, overlays, args.out_dir)
    print(f"AUC {fmt(auc(curve))}")
    print(f"threshold {fmt(args.pred_threshold)}: tp {c.tp} fp {c.fp} tn {c.tn} fn {c.fn}")
    return EXIT_OK


def _read_history(path):
    import csv

    hist = History()
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            for key in ("train_loss", "val_loss", "train_auc", "val_auc"):
                getattr(hist, key).append(float(row[key]))
    return hist


def cmd_pipeline(args):
    from .pipeline import run_pipeline

    cfg = load_config(args.config) if args.config else RunConfig()
    cfg = cfg.with_overrides(seed=args.seed, input_kind=args.input_kind)
    if args.epochs is not None:
        from dataclasses import replace

        cfg = replace(cfg, train_single=replace(cfg.train_single, epochs=args.epochs),
                      train_multi=replace(cfg.train_multi, epochs=args.epochs))
    summary = run_pipeline(cfg, args.out_dir)
    print(json.dumps({"test_auc": summary["test_auc"], "blocks": summary["blocks"]}, sort_keys=True))
    return EXIT_OK


# -- parser --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="amfm-faces", description="AM-FM features and block-based face detection.",
                formatter_class=_Fmt)
    p.add_argument("--threads", type=int, default=1, help="BLAS threads (1 = reference mode)")
    p.add_argument("-v", "--verbose", action="count", default=0, help="more logging (-v, -vv)")
    sub = p.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    sub.required = True

    def add(name, func, help_):
        sp = sub.add_parser(name, help=help_, description=help_, formatter_class=_Fmt)
        sp.set_defaults(func=func)
        return sp

    sp = add("design-filter", cmd_design_filter, "design, quantize and anneal the Hilbert FIR")
    sp.add_argument("--taps", type=int, default=51, help="filter length (odd)")
    sp.add_argument("--beta", "--kaiser-beta", dest="kaiser_beta", type=float, default=6.0,
                    help="Kaiser window beta")
    sp.add_argument("--n-fft", type=int, default=512, help="frequency grid size")
    sp.add_argument("--transition", type=float, default=0.2, help="transition width (fraction)")
    sp.add_argument("--bits", type=int, default=None, help="fixed-point fraction bits (omit for float)")
    sp.add_argument("--iters", "--iterations", dest="iterations", type=int, default=50000,
                    help="annealing iterations (0 = none)")
    sp.add_argument("--seed", type=int, default=7, help="run seed")
    sp.add_argument("--out", default="filter.txt", help="output filter file")

    sp = add("filterbank", cmd_filterbank, "build the Gabor bank and print its frequency report")
    sp.add_argument("--config", default=None,
                    help="JSON with bank settings (a run config or a bare bank object)")
    sp.add_argument("--report", action="store_true", help="print the per-channel frequency report")
    sp.add_argument("--n-fft", type=int, default=128, help="FFT size for the report")
    sp.add_argument("--out", default="bank.txt", help="output bank file")

    sp = add("demodulate", cmd_demodulate, "AM-FM demodulate one PGM/PPM image")
    sp.add_argument("image", help="input PGM or PPM")
    sp.add_argument("--filter", default=None, help="filter file (default: float design)")
    sp.add_argument("--bank", default=None, help="bank file (default: standard bank)")
    sp.add_argument("--decimate", action="store_true", help="halve the image first")
    sp.add_argument("--out-dir", default="demod", help="directory for ia/ip/fm/channel PGMs")

    sp = add("dataset", None, "build, synthesize or inspect block datasets")
    dsub = sp.add_subparsers(dest="dataset_command", metavar="action", parser_class=_Parser)
    dsub.required = True
    b = dsub.add_parser("build", help="frames + annotations -> dataset file", formatter_class=_Fmt)
    b.set_defaults(func=cmd_dataset_build)
    b.add_argument("--frames-dir", required=True, help="directory of <video>_<frame>.pgm|ppm")
    b.add_argument("--annotations", default=None, help="annotation CSV (omit: zero targets)")
    b.add_argument("--input-kind", choices=D.INPUT_KINDS, default="fm", help="network input")
    b.add_argument("--decimation", choices=("keep", "mean"), default="keep", help="decimation mode")
    b.add_argument("--filter", default=None, help="filter file (default: float design)")
    b.add_argument("--bank", default=None, help="bank file (default: standard bank)")
    b.add_argument("--out", required=True, help="output .afmd file")
    s = dsub.add_parser("synth", help="write a synthetic corpus", formatter_class=_Fmt)
    s.set_defaults(func=cmd_dataset_synth)
    s.add_argument("--videos", type=int, default=18, help="number of videos")
    s.add_argument("--frames", type=int, default=24, help="frames per video")
    s.add_argument("--seed", type=int, default=7, help="run seed")
    s.add_argument("--out-dir", required=True, help="output directory")
    i = dsub.add_parser("inspect", help="print a dataset file's header", formatter_class=_Fmt)
    i.set_defaults(func=cmd_dataset_inspect)
    i.add_argument("path", help=".afmd file")
    i.add_argument("--gt-threshold", type=float, default=0.0, help="positive if target > this")

    sp = add("train", cmd_train, "train a regression network on a dataset file")
    sp.add_argument("--train", required=True, help="training .afmd")
    sp.add_argument("--val", default=None, help="validation .afmd")
    sp.add_argument("--net", choices=("single", "multi", "lenet5"), default="single", help="network")
    sp.add_argument("--single-model", default=None, help="single-block model (for --net multi)")
    sp.add_argument("--pool-stride", type=int, default=5, help="single-block pooling stride")
    sp.add_argument("--epochs", type=int, default=80, help="epochs")
    sp.add_argument("--batch-size", type=int, default=32, help="mini-batch size")
    sp.add_argument("--lr", type=float, default=1e-3, help="learning rate")
    sp.add_argument("--optimizer", choices=("adam", "sgd"), default="adam", help="optimizer")
    sp.add_argument("--gt-threshold", type=float, default=0.0, help="AUC ground-truth cutoff")
    sp.add_argument("--seed", type=int, default=7, help="run seed")
    sp.add_argument("--log-every", type=int, default=0, help="log every N epochs (0 = quiet)")
    sp.add_argument("--history", default=None, help="write history CSV here")
    sp.add_argument("--out", required=True, help="output .afmn model")

    sp = add("evaluate", cmd_evaluate, "ROC/AUC, confusion counts and overlays for a dataset")
    sp.add_argument("--dataset", required=True, help=".afmd to evaluate")
    sp.add_argument("--single-model", required=True, help="single-block model")
    sp.add_argument("--multi-model", default=None, help="multi-block model (optional)")
    sp.add_argument("--history", default=None, help="history CSV to plot")
    sp.add_argument("--pred-threshold", type=float, default=0.15, help="score threshold")
    sp.add_argument("--gt-threshold", type=float, default=0.0, help="positive if target > this")
    sp.add_argument("--overlay-frames", type=int, default=2, help="frames to render")
    sp.add_argument("--out-dir", default="report", help="report directory")

    sp = add("pipeline", cmd_pipeline, "run every stage end to end")
    sp.add_argument("--config", default=None, help="JSON run configuration")
    sp.add_argument("--seed", type=int, default=None, help="run seed (overrides config)")
    sp.add_argument("--input-kind", choices=D.INPUT_KINDS, default=None, help="overrides config")
    sp.add_argument("--epochs", type=int, default=None, help="epochs for both stages")
    sp.add_argument("--out-dir", default="run", help="output directory")
    return p


def dispatch(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(
        level=[logging.WARNING, logging.INFO, logging.DEBUG][min(args.verbose, 2)],
        format="%(levelname)s %(name)s: %(message)s",
    )
    if args.threads < 1:
        print("amfm-faces: error: --threads must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        from threadpoolctl import threadpool_limits

        limiter = threadpool_limits(limits=args.threads)
    except ImportError:  # pragma: no cover
        limiter = nullcontext()
    try:
        with limiter:
            return args.func(args)
    except NumericalError as exc:
        print(f"amfm-faces: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (FormatError, EvaluationError, OSError) as exc:
        print(f"amfm-faces: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ParameterError as exc:
        print(f"amfm-faces: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def main():  # pragma: no cover
    sys.exit(dispatch())


if __name__ == "__main__":  # pragma: no cover
    main()
