"""Run configuration for the CLI and the end-to-end pipeline.

A run is described by one JSON document; every key has a default and
unknown keys are rejected.  All randomness is derived from ``seed`` through
:func:`derive_seed`, one independent sub-seed per pipeline stage.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .dataset import INPUT_KINDS
from .errors import ParameterError
from .gabor import BankConfig
from .nets.training import TrainConfig

_MASK64 = (1 << 64) - 1
_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3


def fnv1a64(data: bytes) -> int:
    h = _FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * _FNV_PRIME) & _MASK64
    return h


def splitmix64(z: int) -> int:
    """The splitmix64 output finalizer."""
    z = (z + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def derive_seed(seed: int, stage: str) -> int:
    """64-bit sub-seed ``splitmix64(fnv1a64(stage) ^ seed)``."""
    if seed < 0:
        raise ParameterError("seed must be non-negative")
    return splitmix64(fnv1a64(stage.encode("utf-8")) ^ (int(seed) & _MASK64))


def _from_dict(cls, data, where):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ParameterError(f"{where}: expected an object, got {type(data).__name__}")
    names = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ParameterError(f"{where}: unknown keys {unknown}")
    try:
        return cls(**data)
    except TypeError as exc:
        raise ParameterError(f"{where}: {exc}") from None


@dataclass(frozen=True)
class HilbertConfig:
    taps: int = 51
    kaiser_beta: float = 6.0
    n_fft: int = 512
    transition: float = 0.2
    bits: int | None = 8  # None keeps the float design
    sa_iterations: int = 50000  # 0 disables refinement
    sa_step: float | None = None
    sa_c_exponent: float | None = None

    def __post_init__(self):
        if self.bits is not None and self.bits < 1:
            raise ParameterError("bits must be >= 1 or null")
        if self.sa_iterations < 0:
            raise ParameterError("sa_iterations must be >= 0")


@dataclass(frozen=True)
class CorpusConfig:
    n_videos: int = 18
    frames_per_video: int = 24


@dataclass(frozen=True)
class PathsConfig:
    """Ingest real frames instead of the synthetic corpus when ``frames_dir`` is set.

    Frames are ``<video_id>_<frame_index>.pgm`` (or ``.ppm``) at full
    resolution; annotations use the CSV format of :mod:`amfm_faces.dataset`.
    """

    frames_dir: str | None = None
    annotations: str | None = None
    save_datasets: bool = False


@dataclass(frozen=True)
class SplitConfig:
    n_train: int = 12
    validation_fraction: float = 1 / 6
    train_videos: list | None = None
    test_videos: list | None = None
    validation_videos: list | None = None


@dataclass(frozen=True)
class EvalConfig:
    pred_threshold: float = 0.15
    gt_threshold: float = 0.0
    overlay_frames: int = 2


def _default_single():
    # 1e-3 drives the sigmoid head of the FM single-block net into saturation
    return TrainConfig(learning_rate=3e-4)


@dataclass(frozen=True)
class RunConfig:
    seed: int = 7
    input_kind: str = "fm"
    decimation: str = "keep"
    hilbert: HilbertConfig = field(default_factory=HilbertConfig)
    bank: BankConfig = field(default_factory=BankConfig)
    corpus: CorpusConfig = field(default_factory=CorpusConfig)
    paths: PathsConfig = field(default_factory=PathsConfig)
    split: SplitConfig = field(default_factory=SplitConfig)
    train_single: TrainConfig = field(default_factory=_default_single)
    train_multi: TrainConfig = field(default_factory=TrainConfig)
    evaluation: EvalConfig = field(default_factory=EvalConfig)

    _SECTIONS = {
        "hilbert": HilbertConfig,
        "bank": BankConfig,
        "corpus": CorpusConfig,
        "paths": PathsConfig,
        "split": SplitConfig,
        "train_single": TrainConfig,
        "train_multi": TrainConfig,
        "evaluation": EvalConfig,
    }

    def __post_init__(self):
        if self.input_kind not in INPUT_KINDS:
            raise ParameterError(f"input_kind must be one of {INPUT_KINDS}")
        if self.decimation not in ("keep", "mean"):
            raise ParameterError("decimation must be 'keep' or 'mean'")
        if int(self.seed) < 0:
            raise ParameterError("seed must be non-negative")

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        if not isinstance(data, dict):
            raise ParameterError("config must be a JSON object")
        names = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - names)
        if unknown:
            raise ParameterError(f"unknown config keys {unknown}")
        kwargs = {}
        for key, value in data.items():
            section = cls._SECTIONS.get(key)
            if section is None:
                kwargs[key] = value
            elif key == "train_single":
                kwargs[key] = _from_dict(TrainConfig, {"learning_rate": 3e-4, **(value or {})}, key)
            else:
                kwargs[key] = _from_dict(section, value, key)
        return cls(**kwargs)

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = asdict(v) if f.name in self._SECTIONS else v
        return out

    def with_overrides(self, **kw) -> "RunConfig":
        """Copy with top-level fields replaced; None values are ignored."""
        return replace(self, **{k: v for k, v in kw.items() if v is not None})


def load_config(path) -> RunConfig:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ParameterError(f"{path}: invalid JSON ({exc})") from None
    return RunConfig.from_dict(data)
