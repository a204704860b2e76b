"""End-to-end run: filter design, demodulation, datasets, both regression
stages and evaluation reports.

Everything written to the output directory is a pure function of the
:class:`~amfm_faces.config.RunConfig`; timings go to the log only.
"""

from __future__ import annotations

import json
import logging
import re
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import dataset as D
from .config import RunConfig, derive_seed
from .errors import ParameterError
from .evaluation import (
    Overlay,
    auc,
    block_marks,
    confusion_at,
    emit_report,
    fmt,
    roc_auc,
    roc_curve,
    binarize_gt,
)
from .gabor import build_bank, save_bank
from .hilbert import (
    SaConfig,
    design_hilbert_fir,
    ideal_hilbert_magnitude,
    objective_mse,
    quantize,
    sa_refine,
    save_filter,
)
from .imageio import read_pnm
from .nets import (
    Network,
    build_multi_block_net,
    build_single_block_net,
    count_params,
    fit,
    save_model,
)

log = logging.getLogger(__name__)

_FRAME_NAME = re.compile(r"^(?P<vid>.+)_(?P<idx>\d+)\.(pgm|ppm)$")


def design_filter(cfg, seed):
    """Float design, optional quantization and annealing; returns ``(filter, info)``."""
    h = cfg.hilbert
    filt = design_hilbert_fir(h.taps, h.kaiser_beta, h.n_fft, h.transition)
    ideal = ideal_hilbert_magnitude(h.n_fft, h.transition)
    info = {"float_objective": objective_mse(filt, ideal)}
    if h.bits is None:
        return filt, info
    q = quantize(filt, h.bits)
    info["rounded_objective"] = objective_mse(q, ideal)
    if h.sa_iterations > 0:
        res = sa_refine(
            q,
            ideal,
            SaConfig(
                max_iterations=h.sa_iterations,
                step=h.sa_step,
                c_exponent=h.sa_c_exponent,
                rng_seed=derive_seed(seed, "sa"),
            ),
        )
        q = res.filter
        info["refined_objective"] = res.objective
        info["sa_c"] = res.c_exponent
        info["sa_accepted"] = res.accepted
    return q, info


def read_frames_dir(path) -> dict:
    """Frames named ``<video_id>_<frame_index>.pgm|ppm`` keyed by ``(video_id, index)``."""
    frames = {}
    for p in sorted(Path(path).iterdir()):
        m = _FRAME_NAME.match(p.name)
        if m:
            frames[(m["vid"], int(m["idx"]))] = read_pnm(p)
    if not frames:
        raise FileNotFoundError(f"no <video>_<frame>.pgm/.ppm files in {path}")
    return frames


def load_corpus(cfg: RunConfig, seed):
    if cfg.paths.frames_dir:
        frames = read_frames_dir(cfg.paths.frames_dir)
        rects = D.read_annotations(cfg.paths.annotations) if cfg.paths.annotations else None
        return frames, rects
    c = cfg.corpus
    return D.synth_corpus(derive_seed(seed, "corpus"), c.n_videos, c.frames_per_video)


def make_split(cfg: RunConfig, video_ids) -> D.SplitSpec:
    s = cfg.split
    if s.train_videos is None and s.test_videos is None:
        return D.default_split(video_ids, s.n_train, s.validation_fraction)
    if s.train_videos is None or s.test_videos is None:
        raise ParameterError("give both train_videos and test_videos, or neither")
    return D.SplitSpec(s.train_videos, s.test_videos, s.validation_videos or (), s.validation_fraction)


def _train_cfg(base, seed, stage, gt_threshold):
    return replace(base, rng_seed=derive_seed(seed, stage), gt_threshold=gt_threshold)


def _multi_inputs(ds, scores):
    x, keys = ds.frame_matrix(scores)
    y, _ = ds.frame_matrix()
    return x, y, keys


def run_pipeline(cfg: RunConfig, out_dir) -> dict:
    """Run every stage and write models, reports and ``summary.json`` under ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    seed = int(cfg.seed)
    t0 = time.perf_counter()
    gt_thr = cfg.evaluation.gt_threshold

    filt, filt_info = design_filter(cfg, seed)
    save_filter(filt, out / "filter.txt")
    bank = build_bank(cfg.bank)
    save_bank(bank, out / "bank.txt")
    log.info("filter and bank ready (%.1fs)", time.perf_counter() - t0)

    frames, rects = load_corpus(cfg, seed)
    ds = D.build_dataset(frames, rects, cfg.input_kind, filt, bank, decimation=cfg.decimation)
    log.info("dataset: %d blocks from %d frames (%.1fs)", len(ds), len(frames), time.perf_counter() - t0)

    split = make_split(cfg, ds.video_ids)
    fit_ds = ds.select_videos(split.fit_videos)
    val_ds = ds.select_videos(split.validation_videos)
    train_ds = ds.select_videos(split.train_videos)
    test_ds = ds.select_videos(split.test_videos)
    if not len(fit_ds) or not len(test_ds):
        raise ParameterError("split leaves no training or no test blocks")
    if cfg.paths.save_datasets:
        D.save_dataset(train_ds, out / "train.afmd")
        D.save_dataset(test_ds, out / "test.afmd")

    # stage 1: single-block regression
    single = Network(build_single_block_net(ds.channels), seed=derive_seed(seed, "init_single"))
    tc1 = _train_cfg(cfg.train_single, seed, "train_single", gt_thr)
    hist1 = fit(single, fit_ds.blocks, fit_ds.targets, tc1, val_ds.blocks, val_ds.targets)
    save_model(single, out / "single.afmn")
    log.info("single-block trained (%.1fs)", time.perf_counter() - t0)

    # stage 2: multi-block regression on single-block predictions
    s_fit, s_val, s_test = (single.predict(d.blocks) for d in (fit_ds, val_ds, test_ds))
    x_fit, y_fit, _ = _multi_inputs(fit_ds, s_fit)
    x_val = y_val = None
    if len(val_ds):
        x_val, y_val, _ = _multi_inputs(val_ds, s_val)
    multi = Network(build_multi_block_net(), seed=derive_seed(seed, "init_multi"))
    tc2 = _train_cfg(cfg.train_multi, seed, "train_multi", gt_thr)
    hist2 = fit(multi, x_fit, y_fit, tc2, x_val, y_val)
    save_model(multi, out / "multi.afmn")
    log.info("multi-block trained (%.1fs)", time.perf_counter() - t0)

    # evaluation on the held-out videos
    x_test, y_test, keys = _multi_inputs(test_ds, s_test)
    refined = multi.predict(x_test)
    labels_single = binarize_gt(test_ds.targets, gt_thr)
    labels_multi = binarize_gt(y_test.ravel(), gt_thr)
    curve1 = roc_curve(s_test, labels_single)
    curve2 = roc_curve(refined.ravel(), labels_multi)

    overlays = []
    for (vid, idx), scores, targets in list(zip(keys, refined, y_test))[: cfg.evaluation.overlay_frames]:
        gray = D.pad_to_grid(D.decimate_frame(_gray(frames[(vid, idx)]), cfg.decimation))
        marks = block_marks(scores, targets, cfg.evaluation.pred_threshold, gt_thr)
        overlays.append(Overlay(vid, idx, gray, marks))

    emit_report(hist1, curve1, [], out / "reports" / "single")
    emit_report(hist2, curve2, overlays, out / "reports" / "multi")

    conf = {
        name: confusion_at(s, lab, cfg.evaluation.pred_threshold, gt_thr)
        for name, s, lab in (("single", s_test, labels_single), ("multi", refined.ravel(), labels_multi))
    }
    summary = {
        "input_kind": cfg.input_kind,
        "blocks": {"total": len(ds), "train": len(train_ds), "fit": len(fit_ds),
                   "validation": len(val_ds), "test": len(test_ds)},
        "videos": {"train": list(split.train_videos), "validation": list(split.validation_videos),
                   "test": list(split.test_videos)},
        "filter": {k: (fmt(v) if isinstance(v, float) else v) for k, v in filt_info.items()},
        "params": {"single": count_params(single), "multi": count_params(multi)},
        "test_auc": {"single": fmt(auc(curve1)), "multi": fmt(auc(curve2))},
        "final_val_auc": {"single": fmt(hist1.val_auc[-1]), "multi": fmt(hist2.val_auc[-1])},
        "train_auc_single": fmt(roc_auc(s_fit, fit_ds.targets, gt_thr)),
        "confusion": {
            k: {"tp": c.tp, "fp": c.fp, "tn": c.tn, "fn": c.fn, "pred_threshold": c.pred_threshold}
            for k, c in conf.items()
        },
        "config": cfg.to_dict(),
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    log.info("done (%.1fs): test AUC single %s multi %s", time.perf_counter() - t0,
             summary["test_auc"]["single"], summary["test_auc"]["multi"])
    return summary


def _gray(frame):
    from .imageio import to_gray

    return np.asarray(to_gray(frame), dtype=np.float64)
