"""ROC/AUC, confusion counts, TP/FP/FN block marks and report files."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from .dataset import BLOCK, BLOCKS_PER_FRAME, GRID_COLS, GRID_ROWS
from .errors import EvaluationError, ParameterError
from .imageio import write_ppm

__all__ = [
    "RocCurve",
    "ConfusionCounts",
    "BlockMarks",
    "Overlay",
    "binarize_gt",
    "roc_curve",
    "auc",
    "auc_pairwise",
    "roc_auc",
    "confusion_at",
    "block_marks",
    "render_overlay",
    "emit_report",
    "fmt",
]

MARK_COLORS = {"TP": (0, 255, 0), "FP": (255, 0, 0), "FN": (255, 255, 0)}


def fmt(x) -> str:
    """Nine significant digits, the precision used by every report file."""
    return format(float(x), ".9g")


@dataclass(frozen=True)
class RocCurve:
    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray

    def __len__(self):
        return len(self.fpr)

    @property
    def points(self):
        return list(zip(self.fpr.tolist(), self.tpr.tolist()))


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int
    pred_threshold: float
    gt_threshold: float = 0.0

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


@dataclass(frozen=True)
class BlockMarks:
    marks: tuple

    def __post_init__(self):
        if len(self.marks) != BLOCKS_PER_FRAME:
            raise ParameterError(f"need {BLOCKS_PER_FRAME} marks, got {len(self.marks)}")

    def grid(self):
        return [list(self.marks[r * GRID_COLS : (r + 1) * GRID_COLS]) for r in range(GRID_ROWS)]

    def count(self, mark) -> int:
        return sum(m == mark for m in self.marks)


@dataclass
class Overlay:
    video_id: str
    frame_index: int
    image: np.ndarray
    marks: BlockMarks


def binarize_gt(targets, gt_threshold=0.0) -> np.ndarray:
    return np.asarray(targets, dtype=np.float64) > gt_threshold


def _labels(labels):
    lab = np.asarray(labels)
    if lab.dtype != bool:
        lab = lab.astype(np.float64) > 0
    return lab


def roc_curve(scores, labels) -> RocCurve:
    """Sweep thresholds over the sorted distinct scores (ties form one step).

    Starts at ``(0, 0)`` with threshold ``+inf``; predicted positive means
    ``score >= threshold``.
    """
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = _labels(labels).ravel()
    if s.shape != y.shape:
        raise ParameterError("scores and labels differ in length")
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise EvaluationError("ROC needs at least one positive and one negative label")
    order = np.argsort(-s, kind="mergesort")
    s, y = s[order], y[order]
    last = np.r_[np.nonzero(np.diff(s))[0], s.size - 1]
    tps = np.cumsum(y)[last]
    fps = (last + 1) - tps
    tpr = np.r_[0.0, tps / n_pos]
    fpr = np.r_[0.0, fps / n_neg]
    thr = np.r_[np.inf, s[last]]
    return RocCurve(fpr, tpr, thr)


def auc(curve: RocCurve) -> float:
    """Trapezoidal area under the curve."""
    f, t = curve.fpr, curve.tpr
    return float(np.sum(np.diff(f) * (t[1:] + t[:-1]) / 2.0))


def auc_pairwise(scores, labels) -> float:
    """Brute-force ``P(s_pos > s_neg) + 0.5 * P(tie)`` over all pairs."""
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = _labels(labels).ravel()
    pos, neg = s[y], s[~y]
    if pos.size == 0 or neg.size == 0:
        raise EvaluationError("AUC needs both classes")
    wins = 0.0
    for p in pos:
        wins += np.sum(p > neg) + 0.5 * np.sum(p == neg)
    return float(wins / (pos.size * neg.size))


def roc_auc(scores, targets, gt_threshold=0.0) -> float:
    """AUC of scores against continuous targets binarized at ``gt_threshold``.

    Returns NaN when only one class is present.
    """
    labels = binarize_gt(targets, gt_threshold)
    if labels.all() or not labels.any():
        return math.nan
    return auc(roc_curve(scores, labels))


def confusion_at(scores, labels, pred_threshold=0.15, gt_threshold=0.0) -> ConfusionCounts:
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = _labels(labels).ravel()
    pred = s >= pred_threshold
    return ConfusionCounts(
        tp=int(np.sum(pred & y)),
        fp=int(np.sum(pred & ~y)),
        tn=int(np.sum(~pred & ~y)),
        fn=int(np.sum(~pred & y)),
        pred_threshold=float(pred_threshold),
        gt_threshold=float(gt_threshold),
    )


def block_marks(frame_scores, frame_targets, pred_threshold=0.15, gt_threshold=0.0) -> BlockMarks:
    s = np.asarray(frame_scores, dtype=np.float64).ravel()
    gt = binarize_gt(frame_targets, gt_threshold).ravel()
    if s.size != BLOCKS_PER_FRAME or gt.size != BLOCKS_PER_FRAME:
        raise ParameterError(f"a frame has {BLOCKS_PER_FRAME} blocks")
    pred = s >= pred_threshold
    marks = []
    for p, g in zip(pred, gt):
        marks.append("TP" if p and g else "FP" if p else "FN" if g else "none")
    return BlockMarks(tuple(marks))


def render_overlay(image, marks: BlockMarks, square=7) -> np.ndarray:
    """RGB copy of a gray frame with colored squares at marked block centers."""
    img = np.asarray(image)
    if img.ndim == 2:
        rgb = np.repeat(np.clip(np.round(img), 0, 255).astype(np.uint8)[..., None], 3, axis=2)
    else:
        rgb = np.clip(np.round(img), 0, 255).astype(np.uint8).copy()
    half = square // 2
    for b, m in enumerate(marks.marks):
        if m not in MARK_COLORS:
            continue
        r, c = b // GRID_COLS, b % GRID_COLS
        cy, cx = r * BLOCK + BLOCK // 2, c * BLOCK + BLOCK // 2
        r0, r1 = max(0, cy - half), min(rgb.shape[0], cy + half + 1)
        c0, c1 = max(0, cx - half), min(rgb.shape[1], cx + half + 1)
        rgb[r0:r1, c0:c1] = MARK_COLORS[m]
    return rgb


def _svg_polyline(series, title, xlabel, ylabel, width=480, height=320, square=False):
    """Minimal SVG with one polyline per ``(name, xs, ys, color)``."""
    pad = 40
    xs_all = np.concatenate([np.asarray(s[1], dtype=float) for s in series]) if series else np.zeros(1)
    ys_all = np.concatenate([np.asarray(s[2], dtype=float) for s in series]) if series else np.zeros(1)
    finite = np.isfinite(ys_all)
    if square:
        x0, x1, y0, y1 = 0.0, 1.0, 0.0, 1.0
    else:
        x0, x1 = float(xs_all.min()), float(xs_all.max())
        y0 = float(ys_all[finite].min()) if finite.any() else 0.0
        y1 = float(ys_all[finite].max()) if finite.any() else 1.0
    x1 = x1 if x1 > x0 else x0 + 1.0
    y1 = y1 if y1 > y0 else y0 + 1.0

    def px(x):
        return pad + (x - x0) / (x1 - x0) * (width - 2 * pad)

    def py(y):
        return height - pad - (y - y0) / (y1 - y0) * (height - 2 * pad)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<title>{escape(title)}</title>',
        f'<rect x="{pad}" y="{pad}" width="{width - 2 * pad}" height="{height - 2 * pad}" '
        'fill="none" stroke="black"/>',
        f'<text x="{width / 2}" y="{height - 8}" text-anchor="middle">{escape(xlabel)}</text>',
        f'<text x="12" y="{height / 2}" transform="rotate(-90 12 {height / 2})" '
        f'text-anchor="middle">{escape(ylabel)}</text>',
    ]
    for i, (name, xs, ys, color) in enumerate(series):
        pts = " ".join(
            f"{fmt(px(x))},{fmt(py(y))}" for x, y in zip(xs, ys) if np.isfinite(x) and np.isfinite(y)
        )
        out.append(f'<polyline fill="none" stroke="{color}" points="{pts}"/>')
        out.append(
            f'<text x="{pad + 6}" y="{pad + 16 + 14 * i}" fill="{color}">{escape(name)}</text>'
        )
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_report(history, curve, overlays, out_dir) -> list:
    """Write ``roc.csv``, ``history.csv``, ``roc.svg``, ``loss.svg`` and overlays.

    ``history`` may be None (no training curves); ``overlays`` is an iterable
    of :class:`Overlay`.  Returns the written paths.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    path = out / "roc.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["fpr", "tpr", "threshold"])
        for f, t, th in zip(curve.fpr, curve.tpr, curve.thresholds):
            w.writerow([fmt(f), fmt(t), fmt(th)])
    written.append(path)

    area = auc(curve)
    path = out / "roc.svg"
    path.write_text(
        _svg_polyline(
            [
                (f"AUC {fmt(area)}", curve.fpr, curve.tpr, "red"),
                ("chance", [0.0, 1.0], [0.0, 1.0], "gray"),
            ],
            "ROC",
            "false positive rate",
            "true positive rate",
            square=True,
        )
    )
    written.append(path)

    if history is not None:
        path = out / "history.csv"
        history.write_csv(path)
        written.append(path)
        epochs = np.arange(1, len(history.train_loss) + 1)
        path = out / "loss.svg"
        path.write_text(
            _svg_polyline(
                [
                    ("train", epochs, history.train_loss, "blue"),
                    ("validation", epochs, history.val_loss, "red"),
                ],
                "Loss",
                "epoch",
                "loss",
            )
        )
        written.append(path)

    for ov in overlays or []:
        path = out / f"overlay_{ov.video_id}_{ov.frame_index}.ppm"
        write_ppm(path, render_overlay(ov.image, ov.marks))
        written.append(path)
    return written
