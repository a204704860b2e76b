"""Block datasets: decimate, pad to the 5x9 grid, cut 50x50 blocks, score face overlap.

Frames are keyed by ``(video_id, frame_index)``.  Annotation rectangles are
given in decimated-frame pixels with a top-left origin; a rectangle covers
columns ``x .. x+w-1`` and rows ``y .. y+h-1``.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import struct
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .amfm import demodulate
from .errors import FormatError, ParameterError

log = logging.getLogger(__name__)

__all__ = [
    "BLOCK",
    "GRID_ROWS",
    "GRID_COLS",
    "FRAME_SHAPE",
    "INPUT_KINDS",
    "FaceRect",
    "BlockDataset",
    "SplitSpec",
    "decimate_frame",
    "pad_to_grid",
    "split_blocks",
    "assemble_blocks",
    "rect_union_mask",
    "block_overlaps",
    "frame_features",
    "build_dataset",
    "save_dataset",
    "load_dataset",
    "read_annotations",
    "write_annotations",
    "default_split",
    "synth_corpus",
]

BLOCK = 50
GRID_ROWS, GRID_COLS = 5, 9
FRAME_SHAPE = (GRID_ROWS * BLOCK, GRID_COLS * BLOCK)
BLOCKS_PER_FRAME = GRID_ROWS * GRID_COLS
INPUT_KINDS = ("original", "fm", "ia", "am-fm")

_MAGIC = b"AFMD"
_VERSION = 1
_HEADER = struct.Struct("<4sIIIII")


@dataclass(frozen=True)
class FaceRect:
    video_id: str
    frame_index: int
    person_tag: str
    x: int
    y: int
    w: int
    h: int

    def __post_init__(self):
        if self.w <= 0 or self.h <= 0:
            raise ParameterError(f"rectangle needs positive size, got w={self.w} h={self.h}")


@dataclass
class BlockDataset:
    """Blocks ``(N, 50, 50, C)`` float32, targets ``(N,)`` float32 and provenance.

    ``provenance[i]`` is ``(video_id, frame_index, block_row, block_col)``.
    """

    blocks: np.ndarray
    targets: np.ndarray
    provenance: list
    input_kind: str = "original"

    def __post_init__(self):
        self.blocks = np.asarray(self.blocks, dtype=np.float32)
        self.targets = np.asarray(self.targets, dtype=np.float32).reshape(-1)
        self.provenance = [tuple(p) for p in self.provenance]
        if self.blocks.ndim == 3:
            self.blocks = self.blocks[..., None]
        if not (len(self.blocks) == len(self.targets) == len(self.provenance)):
            raise ParameterError("blocks, targets and provenance lengths differ")
        if self.input_kind not in INPUT_KINDS:
            raise ParameterError(f"unknown input kind {self.input_kind!r}")
        if self.targets.size and (self.targets.min() < 0 or self.targets.max() > 1):
            raise ParameterError("targets must lie in [0, 1]")

    def __len__(self):
        return len(self.targets)

    @property
    def channels(self) -> int:
        return self.blocks.shape[-1] if self.blocks.ndim == 4 else 1

    @property
    def video_ids(self) -> list:
        return sorted({p[0] for p in self.provenance})

    def subset(self, indices) -> "BlockDataset":
        idx = np.asarray(indices, dtype=np.int64)
        return BlockDataset(
            self.blocks[idx], self.targets[idx], [self.provenance[i] for i in idx], self.input_kind
        )

    def select_videos(self, video_ids) -> "BlockDataset":
        keep = set(video_ids)
        return self.subset([i for i, p in enumerate(self.provenance) if p[0] in keep])

    def frame_keys(self) -> list:
        """Distinct ``(video_id, frame_index)`` in dataset order."""
        seen = {}
        for p in self.provenance:
            seen.setdefault((p[0], p[1]), None)
        return list(seen)

    def frame_matrix(self, values=None):
        """Group per-block values into ``(n_frames, 45)`` rows in grid order.

        ``values`` defaults to the targets.  Frames with missing blocks raise.
        """
        values = self.targets if values is None else np.asarray(values)
        keys = self.frame_keys()
        pos = {k: i for i, k in enumerate(keys)}
        out = np.full((len(keys), BLOCKS_PER_FRAME), np.nan)
        for v, p in zip(values, self.provenance):
            out[pos[(p[0], p[1])], p[2] * GRID_COLS + p[3]] = v
        if np.isnan(out).any():
            raise ParameterError("dataset has incomplete frames")
        return out, keys


@dataclass(frozen=True)
class SplitSpec:
    train_videos: tuple
    test_videos: tuple
    validation_videos: tuple = ()
    validation_fraction: float = field(default=0.0)

    def __post_init__(self):
        object.__setattr__(self, "train_videos", tuple(self.train_videos))
        object.__setattr__(self, "test_videos", tuple(self.test_videos))
        object.__setattr__(self, "validation_videos", tuple(self.validation_videos))
        if set(self.train_videos) & set(self.test_videos):
            raise ParameterError("train and test videos overlap")
        if not set(self.validation_videos) <= set(self.train_videos):
            raise ParameterError("validation videos must come from the training videos")
        if not 0.0 <= self.validation_fraction <= 0.5:
            raise ParameterError("validation_fraction must lie in [0, 0.5]")

    @property
    def fit_videos(self) -> tuple:
        """Training videos minus the validation hold-out."""
        return tuple(v for v in self.train_videos if v not in self.validation_videos)


def default_split(video_ids, n_train=12, validation_fraction=1 / 6) -> SplitSpec:
    """First ``n_train`` sorted ids train, the rest test; the last training
    videos (``round(fraction * n_train)``) are held out for validation."""
    ids = sorted(video_ids)
    if not 0 < n_train < len(ids):
        raise ParameterError(f"need 0 < n_train < {len(ids)}, got {n_train}")
    train, test = ids[:n_train], ids[n_train:]
    n_val = int(round(validation_fraction * n_train))
    val = train[n_train - n_val :] if n_val else []
    return SplitSpec(train, test, val, validation_fraction)


def decimate_frame(frame, mode: str = "keep") -> np.ndarray:
    """Halve both dimensions: keep every second pixel, or average 2x2 cells."""
    frame = np.asarray(frame)
    if frame.shape[0] < 2 or frame.shape[1] < 2:
        raise ParameterError("frame must be at least 2x2")
    if mode == "keep":
        h, w = frame.shape[0] // 2, frame.shape[1] // 2
        return frame[0 : 2 * h : 2, 0 : 2 * w : 2].copy()
    if mode == "mean":
        h, w = frame.shape[0] // 2, frame.shape[1] // 2
        f = np.asarray(frame[: 2 * h, : 2 * w], dtype=np.float64)
        return f.reshape(h, 2, w, 2, *f.shape[2:]).mean(axis=(1, 3))
    raise ParameterError(f"unknown decimation mode {mode!r}")


def pad_to_grid(frame, shape=FRAME_SHAPE) -> np.ndarray:
    """Zero-pad at the bottom and right up to ``shape``."""
    frame = np.asarray(frame)
    rows, cols = frame.shape[:2]
    if rows > shape[0] or cols > shape[1]:
        raise ParameterError(f"frame {frame.shape[:2]} exceeds grid {shape}")
    pad = [(0, shape[0] - rows), (0, shape[1] - cols)] + [(0, 0)] * (frame.ndim - 2)
    return np.pad(frame, pad)


def split_blocks(frame) -> np.ndarray:
    """Cut a 250x450[xC] frame into 45 row-major 50x50 blocks."""
    frame = np.asarray(frame)
    if frame.shape[:2] != FRAME_SHAPE:
        raise ParameterError(f"expected frame shape {FRAME_SHAPE}, got {frame.shape[:2]}")
    rest = frame.shape[2:]
    b = frame.reshape(GRID_ROWS, BLOCK, GRID_COLS, BLOCK, *rest)
    b = np.moveaxis(b, 2, 1)
    return b.reshape(BLOCKS_PER_FRAME, BLOCK, BLOCK, *rest)


def assemble_blocks(blocks) -> np.ndarray:
    blocks = np.asarray(blocks)
    rest = blocks.shape[3:]
    b = blocks.reshape(GRID_ROWS, GRID_COLS, BLOCK, BLOCK, *rest)
    return np.moveaxis(b, 1, 2).reshape(FRAME_SHAPE + rest)


def rect_union_mask(rects, shape=FRAME_SHAPE) -> np.ndarray:
    mask = np.zeros(shape, dtype=bool)
    for r in rects:
        if r.w <= 0 or r.h <= 0:
            raise ParameterError("rectangle needs positive size")
        r0, r1 = max(0, r.y), min(shape[0], r.y + r.h)
        c0, c1 = max(0, r.x), min(shape[1], r.x + r.w)
        if r0 < r1 and c0 < c1:
            mask[r0:r1, c0:c1] = True
    return mask


def block_overlaps(rects) -> np.ndarray:
    """Fraction of each block covered by the union of the rectangles (45 values)."""
    counts = split_blocks(rect_union_mask(rects)).sum(axis=(1, 2))
    return counts / float(BLOCK * BLOCK)


def frame_features(gray, input_kind, filt=None, bank=None) -> np.ndarray:
    """Per-pixel network input ``(H, W, C)`` for one decimated grayscale frame."""
    gray = np.asarray(gray, dtype=np.float64)
    if input_kind == "original":
        return (gray / 255.0)[..., None]
    if input_kind not in INPUT_KINDS:
        raise ParameterError(f"unknown input kind {input_kind!r}")
    if filt is None or bank is None:
        raise ParameterError(f"input kind {input_kind!r} needs a Hilbert filter and a bank")
    dec = demodulate(gray, filt, bank)
    peak = float(dec.ia.max())
    ia = dec.ia / peak if peak > 0 else dec.ia
    if input_kind == "fm":
        return dec.fm[..., None]
    if input_kind == "ia":
        return ia[..., None]
    return np.stack([ia, dec.fm], axis=-1)


def build_dataset(
    frames,
    annotations,
    input_kind="fm",
    filt=None,
    bank=None,
    decimate=True,
    decimation="keep",
) -> BlockDataset:
    """Assemble a :class:`BlockDataset` from frames and rectangle annotations.

    ``frames`` maps ``(video_id, frame_index)`` to a gray (or RGB, converted to
    luma) image; keys are processed in sorted order.  With ``decimate`` the
    frames are halved first.  ``annotations=None`` means no annotation file:
    every frame gets zero targets and a warning is emitted.
    """
    from .imageio import to_gray

    if annotations is None:
        warnings.warn("no annotations given; all targets are zero", stacklevel=2)
        annotations = []
    by_frame = {}
    for r in annotations:
        by_frame.setdefault((r.video_id, int(r.frame_index)), []).append(r)

    keys = sorted(frames, key=lambda k: (str(k[0]), int(k[1])))
    n = len(keys) * BLOCKS_PER_FRAME
    channels = 2 if input_kind == "am-fm" else 1
    blocks = np.empty((n, BLOCK, BLOCK, channels), dtype=np.float32)
    targets = np.empty(n, dtype=np.float32)
    provenance = []
    for i, key in enumerate(keys):
        gray = to_gray(frames[key])
        if decimate:
            gray = decimate_frame(gray, decimation)
        feats = pad_to_grid(frame_features(gray, input_kind, filt, bank))
        sl = slice(i * BLOCKS_PER_FRAME, (i + 1) * BLOCKS_PER_FRAME)
        blocks[sl] = split_blocks(feats)
        targets[sl] = block_overlaps(by_frame.get((key[0], int(key[1])), []))
        provenance += [
            (str(key[0]), int(key[1]), b // GRID_COLS, b % GRID_COLS)
            for b in range(BLOCKS_PER_FRAME)
        ]
        log.debug("built frame %s (%d/%d)", key, i + 1, len(keys))
    return BlockDataset(blocks, targets, provenance, input_kind)


def save_dataset(ds: BlockDataset, path) -> None:
    count = len(ds)
    blocks = ds.blocks.reshape(count, BLOCK, BLOCK, ds.channels) if count else ds.blocks
    header = _HEADER.pack(_MAGIC, _VERSION, count, BLOCK, BLOCK, ds.channels)
    trailer = json.dumps(
        {"input_kind": ds.input_kind, "provenance": [list(p) for p in ds.provenance]},
        separators=(",", ":"),
    ).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(blocks, dtype="<f4").tobytes())
        fh.write(np.ascontiguousarray(ds.targets, dtype="<f4").tobytes())
        fh.write(struct.pack("<I", len(trailer)))
        fh.write(trailer)


def load_dataset(path) -> BlockDataset:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise FormatError("file shorter than the header", offset=len(data))
    magic, version, count, h, w, channels = _HEADER.unpack_from(data, 0)
    if magic != _MAGIC:
        raise FormatError(f"bad magic {magic!r}", offset=0)
    if version != _VERSION:
        raise FormatError(f"unsupported version {version}", offset=4)
    if (h, w) != (BLOCK, BLOCK) or channels not in (1, 2):
        raise FormatError(f"unsupported block geometry {h}x{w}x{channels}", offset=12)
    pos = _HEADER.size
    nvals = count * h * w * channels
    end = pos + 4 * nvals + 4 * count + 4
    if len(data) < end:
        raise FormatError("file truncated inside the data section", offset=len(data))
    blocks = np.frombuffer(data, dtype="<f4", count=nvals, offset=pos)
    pos += 4 * nvals
    targets = np.frombuffer(data, dtype="<f4", count=count, offset=pos)
    pos += 4 * count
    (tlen,) = struct.unpack_from("<I", data, pos)
    pos += 4
    if len(data) < pos + tlen:
        raise FormatError("provenance trailer truncated", offset=len(data))
    try:
        meta = json.loads(data[pos : pos + tlen].decode("utf-8"))
        provenance = [tuple(p) for p in meta["provenance"]]
        kind = meta["input_kind"]
    except (ValueError, KeyError, TypeError):
        raise FormatError("malformed provenance trailer", offset=pos) from None
    if len(provenance) != count:
        raise FormatError("provenance length does not match count", offset=pos)
    return BlockDataset(
        blocks.astype(np.float32).reshape(count, h, w, channels),
        targets.astype(np.float32),
        provenance,
        kind,
    )


_CSV_FIELDS = ["video_id", "frame_index", "person_tag", "x", "y", "w", "h"]


def read_annotations(path) -> list:
    rects = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != _CSV_FIELDS:
            raise FormatError(f"annotation header must be {','.join(_CSV_FIELDS)}", offset=1)
        for line, row in enumerate(reader, start=2):
            try:
                rects.append(
                    FaceRect(
                        row["video_id"],
                        int(row["frame_index"]),
                        row["person_tag"],
                        int(row["x"]),
                        int(row["y"]),
                        int(row["w"]),
                        int(row["h"]),
                    )
                )
            except (TypeError, ValueError) as exc:
                raise FormatError(f"bad annotation row: {exc}", offset=line) from None
    return rects


def write_annotations(rects, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(_CSV_FIELDS)
        for r in rects:
            writer.writerow([r.video_id, r.frame_index, r.person_tag, r.x, r.y, r.w, r.h])


# -- synthetic corpus -------------------------------------------------------

SYNTH_SHAPE = (480, 858)


def _smooth_field(rng, shape, n_waves=6, max_freq=0.012):
    yy, xx = np.mgrid[0 : shape[0], 0 : shape[1]].astype(np.float64)
    out = np.zeros(shape)
    for _ in range(n_waves):
        f = rng.uniform(0.002, max_freq)
        ang = rng.uniform(0, np.pi)
        out += rng.uniform(0.3, 1.0) * np.cos(
            2 * np.pi * f * (xx * np.cos(ang) + yy * np.sin(ang)) + rng.uniform(0, 2 * np.pi)
        )
    return out / n_waves


def _box_blur(img, radius):
    k = 2 * radius + 1
    for axis in (0, 1):
        c = np.cumsum(np.pad(img, [(radius + 1, radius) if a == axis else (0, 0) for a in (0, 1)],
                             mode="edge"), axis=axis)
        if axis == 0:
            img = (c[k:] - c[:-k]) / k
        else:
            img = (c[:, k:] - c[:, :-k]) / k
    return img


def _background(rng):
    h, w = SYNTH_SHAPE
    bg = 90.0 + 35.0 * _smooth_field(rng, SYNTH_SHAPE)
    # furniture / screens: flat patches with softened edges
    clutter = np.zeros(SYNTH_SHAPE)
    for _ in range(rng.integers(3, 7)):
        ph, pw = rng.integers(40, 200), rng.integers(60, 300)
        r0, c0 = rng.integers(0, h - 20), rng.integers(0, w - 20)
        clutter[r0 : r0 + ph, c0 : c0 + pw] += rng.uniform(-40, 40)
    return bg + _box_blur(clutter, 4)


@dataclass
class _Person:
    tag: str
    cx: float
    cy: float
    a: float
    b: float
    tilt: float
    level: float
    contrast: float
    freq: float
    orient: float
    phase: float


def _new_person(rng, tag):
    h, w = SYNTH_SHAPE
    a = rng.uniform(24, 42)
    return _Person(
        tag=tag,
        cx=rng.uniform(40, w - 40),
        cy=rng.uniform(40, h - 40),
        a=a,
        b=a * rng.uniform(1.15, 1.4),
        tilt=rng.uniform(-0.3, 0.3),
        level=rng.uniform(75, 115),
        contrast=rng.uniform(55, 85),
        freq=rng.uniform(0.2, 0.3) * np.pi,
        orient=rng.uniform(0, np.pi),
        phase=rng.uniform(0, 2 * np.pi),
    )


def _render_face(frame, mask_out, p):
    h, w = SYNTH_SHAPE
    r0, r1 = int(max(0, p.cy - p.b - 2)), int(min(h, p.cy + p.b + 3))
    c0, c1 = int(max(0, p.cx - p.b - 2)), int(min(w, p.cx + p.b + 3))
    yy, xx = np.mgrid[r0:r1, c0:c1].astype(np.float64)
    dx, dy = xx - p.cx, yy - p.cy
    ct, st = math.cos(p.tilt), math.sin(p.tilt)
    u, v = dx * ct + dy * st, -dx * st + dy * ct
    inside = (u / p.a) ** 2 + (v / p.b) ** 2 <= 1.0
    texture = p.level + p.contrast * np.cos(
        p.freq * (dx * math.cos(p.orient) + dy * math.sin(p.orient)) + p.phase
    )
    patch = frame[r0:r1, c0:c1]
    patch[inside] = texture[inside]
    mask_out[r0:r1, c0:c1] |= inside


def synth_corpus(seed=7, n_videos=18, frames_per_video=24):
    """Deterministic stand-in corpus of 480x858 uint8 frames with textured faces.

    Each video has a fixed background and 1-4 people whose elliptical faces
    drift from minute to minute.  Faces carry an oriented sinusoidal texture
    over a skin-like mean.  Returns ``(frames, annotations)``; annotation
    rectangles are the exact bounding boxes of each face on the decimated grid.
    """
    if n_videos < 1 or frames_per_video < 1:
        raise ParameterError("need at least one video and one frame")
    frames = {}
    rects = []
    for v in range(n_videos):
        vid = f"v{v:02d}"
        rng = np.random.default_rng([seed, v])
        bg = _background(rng)
        people = [_new_person(rng, f"p{k}") for k in range(rng.integers(1, 5))]
        for t in range(frames_per_video):
            frame = bg + rng.normal(0.0, 2.0, SYNTH_SHAPE)
            for p in people:
                p.cx = float(np.clip(p.cx + rng.normal(0, 12), 30, SYNTH_SHAPE[1] - 30))
                p.cy = float(np.clip(p.cy + rng.normal(0, 8), 30, SYNTH_SHAPE[0] - 30))
                p.orient = float(p.orient + rng.normal(0, 0.2))
                p.phase = float(rng.uniform(0, 2 * np.pi))
                mask = np.zeros(SYNTH_SHAPE, dtype=bool)
                _render_face(frame, mask, p)
                dec = mask[::2, ::2]
                rows, cols = np.nonzero(dec)
                if rows.size == 0:
                    continue
                rects.append(
                    FaceRect(
                        vid,
                        t,
                        p.tag,
                        int(cols.min()),
                        int(rows.min()),
                        int(cols.max() - cols.min() + 1),
                        int(rows.max() - rows.min() + 1),
                    )
                )
            frames[(vid, t)] = np.clip(np.round(frame), 0, 255).astype(np.uint8)
    return frames, rects
