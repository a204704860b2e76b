"""Hilbert transformer design, fixed-point quantization and annealing refinement.

The transformer is a real, odd-length, anti-symmetric FIR.  Its taps are
obtained by frequency sampling the ideal ``-j*sgn(w)`` response, truncating
to ``length`` taps around the center and applying a Kaiser window.  Fixed
point variants are produced by rounding to a ``2**-bits`` grid, then improved
by simulated annealing against a target magnitude response.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FormatError, ParameterError

__all__ = [
    "FixedPointFormat",
    "FirFilter",
    "IdealResponse",
    "SaConfig",
    "SaResult",
    "PhaseReport",
    "ideal_hilbert_magnitude",
    "design_hilbert_fir",
    "apply_fir",
    "quantize",
    "objective_mse",
    "acceptance_probability",
    "default_step",
    "estimate_c",
    "sa_refine",
    "phase_linearity",
    "linear_phase_report",
    "save_filter",
    "load_filter",
]


@dataclass(frozen=True)
class FixedPointFormat:
    bits: int

    def __post_init__(self):
        if int(self.bits) != self.bits or self.bits < 1:
            raise ParameterError(f"bits must be a positive integer, got {self.bits}")

    @property
    def step(self) -> float:
        return math.ldexp(1.0, -int(self.bits))


@dataclass(frozen=True)
class FirFilter:
    """Real FIR taps with an optional fixed-point format.

    Anti-symmetry is not enforced here so that arbitrary filters can be
    represented; :meth:`is_antisymmetric` checks it.
    """

    taps: np.ndarray
    format: FixedPointFormat | None = None

    def __post_init__(self):
        taps = np.asarray(self.taps, dtype=np.float64).ravel()
        if taps.size < 1:
            raise ParameterError("a filter needs at least one tap")
        taps.setflags(write=False)
        object.__setattr__(self, "taps", taps)

    @property
    def length(self) -> int:
        return self.taps.size

    @property
    def delay(self) -> int:
        return (self.length - 1) // 2

    def is_antisymmetric(self) -> bool:
        return bool(np.array_equal(self.taps, -self.taps[::-1]))

    def on_grid(self) -> bool:
        if self.format is None:
            return False
        q = self.taps / self.format.step
        return bool(np.array_equal(q, np.round(q)))


@dataclass(frozen=True)
class IdealResponse:
    n_fft: int
    transition: float
    magnitude: np.ndarray


@dataclass(frozen=True)
class SaConfig:
    """Annealing settings.

    ``c_exponent`` is the ``C`` multiplier in the acceptance rule
    ``p = (1 + iter) ** ((fy - fx) * C)``; ``None`` estimates it with a
    100-move warm-up (see :func:`estimate_c`).  ``step=None`` uses
    :func:`default_step` for the filter's bit width.
    """

    max_iterations: int = 50_000
    step: float | None = None
    c_exponent: float | None = None
    rng_seed: int = 0

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ParameterError("max_iterations must be >= 1")
        if self.step is not None and not self.step > 0:
            raise ParameterError("step must be > 0")


@dataclass
class SaResult:
    filter: FirFilter
    objective: float
    initial_objective: float
    c_exponent: float
    accepted: int
    trace: list = field(default_factory=list)


@dataclass(frozen=True)
class PhaseReport:
    max_residual: float
    fitted_delay: float
    slope: float
    intercept: float


def ideal_hilbert_magnitude(n_fft: int, transition: float) -> IdealResponse:
    """Target magnitude of a real Hilbert transformer on an ``n_fft`` grid.

    Unity in the passband, zero at DC and Nyquist, with linear ramps that span
    ``transition * pi`` radians next to each null.  Symmetric about ``pi``.
    """
    if int(n_fft) != n_fft or n_fft < 8:
        raise ParameterError(f"n_fft must be an integer >= 8, got {n_fft}")
    if not 0.0 < transition < 0.5:
        raise ParameterError(f"transition must lie in (0, 0.5), got {transition}")
    n_fft = int(n_fft)
    k = np.arange(n_fft)
    w = 2.0 * np.pi * np.minimum(k, n_fft - k) / n_fft  # folded to [0, pi]
    ramp = transition * np.pi
    mag = np.minimum(1.0, np.minimum(w, np.pi - w) / ramp)
    mag = np.clip(mag, 0.0, 1.0)
    mag.setflags(write=False)
    return IdealResponse(n_fft=n_fft, transition=float(transition), magnitude=mag)


def design_hilbert_fir(
    taps: int = 51, kaiser_beta: float = 6.0, n_fft: int = 512, transition: float = 0.2
) -> FirFilter:
    """Frequency-sampling Hilbert design followed by a Kaiser window."""
    if int(taps) != taps or taps < 3 or taps % 2 == 0:
        raise ParameterError(f"tap count must be an odd integer >= 3, got {taps}")
    if kaiser_beta < 0:
        raise ParameterError("kaiser_beta must be >= 0")
    # validates n_fft / transition even though the sampled response is the plain sgn
    ideal_hilbert_magnitude(n_fft, transition)
    taps = int(taps)
    if n_fft < taps:
        raise ParameterError("n_fft must be >= taps")

    k = np.arange(n_fft)
    response = np.zeros(n_fft, dtype=np.complex128)
    response[(k > 0) & (k < n_fft / 2)] = -1j
    response[k > n_fft / 2] = 1j
    impulse = np.fft.ifft(response).real
    half = taps // 2
    centered = np.concatenate([impulse[n_fft - half:], impulse[: half + 1]])
    h = centered * np.kaiser(taps, kaiser_beta)
    h = 0.5 * (h - h[::-1])
    return FirFilter(h)


def apply_fir(signal, filt: FirFilter) -> np.ndarray:
    """Zero-padded linear convolution aligned by the filter's group delay.

    ``output[n]`` corresponds to ``signal[n]``.  Works on the last axis, so a
    2-D array is filtered row by row.
    """
    x = np.asarray(signal, dtype=np.float64)
    if x.shape[-1] < 1:
        raise ParameterError("signal must contain at least one sample")
    d = filt.delay
    if x.ndim == 1:
        return np.convolve(x, filt.taps)[d : d + x.size]
    flat = x.reshape(-1, x.shape[-1])
    out = np.empty_like(flat)
    for i, row in enumerate(flat):
        out[i] = np.convolve(row, filt.taps)[d : d + row.size]
    return out.reshape(x.shape)


def quantize(filt: FirFilter, bits: int) -> FirFilter:
    """Round every tap to the nearest multiple of ``2**-bits`` (ties away from 0)."""
    fmt = FixedPointFormat(bits)
    q = filt.taps / fmt.step
    rounded = np.sign(q) * np.floor(np.abs(q) + 0.5)
    return FirFilter(rounded * fmt.step, fmt)


def _magnitude(taps, n_fft):
    return np.abs(np.fft.fft(taps, n_fft))


def objective_mse(taps, ideal: IdealResponse) -> float:
    """Negative MSE between the zero-padded FFT magnitude of ``taps`` and the target."""
    taps = np.asarray(taps.taps if isinstance(taps, FirFilter) else taps, dtype=np.float64)
    if taps.size > ideal.n_fft:
        raise ParameterError("filter longer than the FFT grid")
    err = _magnitude(taps, ideal.n_fft) - ideal.magnitude
    return -float(np.mean(err * err))


def acceptance_probability(fy: float, fx: float, iteration: int, c: float) -> float:
    return min(1.0, (1.0 + iteration) ** ((fy - fx) * c))


def default_step(bits: int) -> float:
    """Perturbation size per bit width: ``2**-bits``, capped at ``2**-11`` above 14 bits."""
    if bits > 14:
        return math.ldexp(1.0, -11)
    return math.ldexp(1.0, -int(bits))


def _movable_indices(length):
    center = (length - 1) // 2
    return np.array([i for i in range(length) if i != center])


def _propose(x, index, sign, step):
    y = x.copy()
    mirror = x.size - 1 - index
    y[index] += sign * step
    y[mirror] -= sign * step
    return y


def _in_range(y, index, step):
    lo, hi = -1.0 + step, 1.0 - step
    mirror = y.size - 1 - index
    return lo <= y[index] <= hi and lo <= y[mirror] <= hi


def estimate_c(x, ideal: IdealResponse, step: float, rng, n_moves: int = 100) -> float:
    """Scale factor for the acceptance exponent from random neighbour moves.

    ``Y = floor(log10(mean |fy - fx|))`` over ``n_moves`` single moves from
    ``x``; the returned ``C = 10**(-Y)`` brings ``(fy - fx) * C`` to order one
    so that worsening moves become rarer as ``iter`` grows.
    """
    fx = objective_mse(x, ideal)
    idx = _movable_indices(x.size)
    deltas = []
    for _ in range(n_moves):
        i = idx[rng.integers(idx.size)]
        s = 1.0 if rng.integers(2) else -1.0
        deltas.append(abs(objective_mse(_propose(x, i, s, step), ideal) - fx))
    mean = float(np.mean(deltas))
    if mean == 0.0:
        return 1.0
    return 10.0 ** (-math.floor(math.log10(mean)))


def sa_refine(
    filt: FirFilter, ideal: IdealResponse, config: SaConfig, keep_trace: bool = False
) -> SaResult:
    """Refine fixed-point taps by simulated annealing.

    Each move adds ``+-step`` to one tap and the opposite amount to its mirror,
    so anti-symmetry and the quantization grid are preserved.  The best
    visited vector is returned.
    """
    if filt.format is None:
        raise ParameterError("sa_refine needs a quantized filter (format is missing)")
    grid = filt.format.step
    step = default_step(filt.format.bits) if config.step is None else float(config.step)
    ratio = step / grid
    if ratio < 1 or ratio != round(ratio):
        raise ParameterError(
            f"step {step!r} is not a positive multiple of the {filt.format.bits}-bit grid"
        )
    if not filt.is_antisymmetric():
        raise ParameterError("sa_refine expects an anti-symmetric filter")

    rng = np.random.default_rng(config.rng_seed)
    x = filt.taps.copy()
    fx = objective_mse(x, ideal)
    c = config.c_exponent
    if c is None:
        c = estimate_c(x, ideal, step, rng)

    idx = _movable_indices(x.size)
    best, f_best = x.copy(), fx
    f_start = fx
    accepted = 0
    trace = []
    for it in range(1, config.max_iterations + 1):
        i = idx[rng.integers(idx.size)]
        s = 1.0 if rng.integers(2) else -1.0
        u = rng.random()
        y = _propose(x, i, s, step)
        if not _in_range(y, i, step):
            continue
        fy = objective_mse(y, ideal)
        if u < acceptance_probability(fy, fx, it, c):
            x, fx = y, fy
            accepted += 1
            if fx > f_best:
                best, f_best = x.copy(), fx
        if keep_trace:
            trace.append(fx)
    return SaResult(
        filter=FirFilter(best, filt.format),
        objective=f_best,
        initial_objective=f_start,
        c_exponent=float(c),
        accepted=accepted,
        trace=trace,
    )


def phase_linearity(x, y, interior: float = 0.8) -> PhaseReport:
    """Fit a line to the unwrapped phase of the pair ``(x, y)``.

    The phase is ``atan2(y, x)``; only the central ``interior`` fraction of
    samples enters the fit and the residual.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    phase = np.unwrap(np.arctan2(y, x))
    n = x.size
    margin = int(round(n * (1.0 - interior) / 2.0))
    sl = slice(margin, n - margin)
    t = np.arange(n, dtype=np.float64)[sl]
    slope, intercept = np.polyfit(t, phase[sl], 1)
    resid = phase[sl] - (slope * t + intercept)
    # wrap intercept so that the delay is the smallest shift consistent with the fit
    lead = math.remainder(intercept, 2.0 * np.pi)
    delay = -lead / slope if slope != 0 else 0.0
    return PhaseReport(
        max_residual=float(np.max(np.abs(resid))),
        fitted_delay=float(delay),
        slope=float(slope),
        intercept=float(intercept),
    )


def linear_phase_report(filt: FirFilter, u: int = 20, n: int = 300) -> PhaseReport:
    """Filter ``cos(2*pi*u*k/n)`` and measure how linear the output phase is."""
    if n < 4 or not 0 < u < n / 2:
        raise ParameterError(f"need 0 < u < n/2, got u={u}, n={n}")
    x = np.cos(2.0 * np.pi * u * np.arange(n) / n)
    return phase_linearity(x, apply_fir(x, filt))


def save_filter(filt: FirFilter, path) -> None:
    bits = "float" if filt.format is None else str(filt.format.bits)
    lines = [f"taps={filt.length} bits={bits}"]
    lines += [repr(float(t)) for t in filt.taps]
    Path(path).write_text("\n".join(lines) + "\n")


def load_filter(path) -> FirFilter:
    text = Path(path).read_text().splitlines()
    if not text:
        raise FormatError("empty filter file", offset=0)
    try:
        fields = dict(part.split("=", 1) for part in text[0].split())
        n = int(fields["taps"])
        bits = fields["bits"]
    except (ValueError, KeyError):
        raise FormatError(f"bad filter header {text[0]!r}", offset=1) from None
    body = [ln for ln in text[1:] if ln.strip()]
    if len(body) != n:
        raise FormatError(f"header says {n} taps, found {len(body)}", offset=len(text))
    try:
        taps = [float(v) for v in body]
    except ValueError as exc:
        raise FormatError(f"bad coefficient: {exc}") from None
    fmt = None if bits == "float" else FixedPointFormat(int(bits))
    return FirFilter(np.array(taps), fmt)
