"""Analytic image, channel filtering and Dominant Component Analysis (DCA)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ParameterError
from .gabor import GaborKernel, KernelBank
from .hilbert import FirFilter, apply_fir

__all__ = [
    "AnalyticImage",
    "AmFmDecomposition",
    "IfField",
    "analytic_image",
    "channel_filter",
    "filter_bank",
    "dca",
    "wrap_phase",
    "instantaneous_frequency",
    "demodulate",
]

_CHUNK_ROWS = 32


@dataclass(frozen=True)
class AnalyticImage:
    re: np.ndarray
    im: np.ndarray

    @property
    def shape(self):
        return self.re.shape

    def complex(self) -> np.ndarray:
        return self.re + 1j * self.im


@dataclass(frozen=True)
class AmFmDecomposition:
    ia: np.ndarray
    ip: np.ndarray
    fm: np.ndarray
    channel: np.ndarray

    @property
    def shape(self):
        return self.ia.shape


@dataclass(frozen=True)
class IfField:
    dx: np.ndarray
    dy: np.ndarray

    def magnitude(self) -> np.ndarray:
        return np.hypot(self.dx, self.dy)


def analytic_image(gray, filt: FirFilter) -> AnalyticImage:
    """``gray + j*H{gray}`` with the Hilbert FIR run along every row."""
    gray = np.asarray(gray, dtype=np.float64)
    if gray.ndim != 2:
        raise ParameterError(f"expected a 2-D grayscale image, got shape {gray.shape}")
    if gray.shape[1] < filt.length:
        raise ParameterError(
            f"image width {gray.shape[1]} is smaller than the filter length {filt.length}"
        )
    return AnalyticImage(gray, apply_fir(gray, filt))


def _as_complex(img):
    if isinstance(img, AnalyticImage):
        return img.complex()
    return np.asarray(img)


def filter_bank(img, kernels) -> np.ndarray:
    """Convolve an image with every kernel; zero-padded borders, same-size output.

    Returns an ``(n_kernels, H, W)`` complex array.  The convolution is done
    in the spatial domain with row chunks so the patch matrix stays small.
    """
    data = _as_complex(img)
    if data.ndim != 2:
        raise ParameterError("image must be 2-D")
    if isinstance(kernels, GaborKernel):
        kernels = [kernels]
    stack = np.stack([np.asarray(k.values if isinstance(k, GaborKernel) else k) for k in kernels])
    n, kh, kw = stack.shape
    if kh != kw or kh % 2 == 0:
        raise ParameterError("kernels must be square with odd size")
    half = kh // 2
    # convolution == correlation with the flipped kernel
    flipped = stack[:, ::-1, ::-1].reshape(n, kh * kw)
    # real matmul against [Re(w) | Im(w)] avoids upcasting the patch matrix
    weights = np.concatenate([flipped.real, flipped.imag], axis=0).T.astype(np.float64)
    h, w = data.shape
    out = np.empty((n, h, w), dtype=np.complex128)
    parts = [data.real] + ([data.imag] if np.iscomplexobj(data) else [])
    padded = [np.pad(p.astype(np.float64), half) for p in parts]
    for r0 in range(0, h, _CHUNK_ROWS):
        r1 = min(h, r0 + _CHUNK_ROWS)
        re = im = 0.0
        for k, pad in enumerate(padded):
            patches = sliding_window_view(pad[r0 : r1 + 2 * half], (kh, kw))
            res = patches.reshape(-1, kh * kw) @ weights
            if k == 0:  # real part of the image
                re = re + res[:, :n]
                im = im + res[:, n:]
            else:  # (j * imag) times (wr + j wi)
                re = re - res[:, n:]
                im = im + res[:, :n]
        out[:, r0:r1, :].real = re.T.reshape(n, r1 - r0, w)
        out[:, r0:r1, :].imag = im.T.reshape(n, r1 - r0, w)
    return out


def channel_filter(img, kernel: GaborKernel) -> np.ndarray:
    """Single-channel response ``(re + j*im) * kernel``."""
    return filter_bank(img, [kernel])[0]


def dca(responses) -> AmFmDecomposition:
    """Pick, per pixel, the channel with the largest magnitude (ties -> lowest index)."""
    resp = np.asarray(responses)
    if resp.ndim != 3:
        raise ParameterError(f"responses must be (channels, H, W), got shape {resp.shape}")
    mags = np.abs(resp)
    channel = np.argmax(mags, axis=0)
    picked = np.take_along_axis(resp, channel[None], axis=0)[0]
    ia = np.take_along_axis(mags, channel[None], axis=0)[0]
    # + 0.0 clears negative zeros so that atan2(0, 0) is 0, never -pi
    ip = np.arctan2(picked.imag + 0.0, picked.real + 0.0)
    ip[ip <= -np.pi] = np.pi
    return AmFmDecomposition(ia=ia, ip=ip, fm=np.cos(ip), channel=channel)


def wrap_phase(d):
    """Map phase differences to ``(-pi, pi]``."""
    d = np.asarray(d, dtype=np.float64)
    return d - 2.0 * np.pi * np.ceil((d - np.pi) / (2.0 * np.pi))


def _wrapped_gradient(ip, axis):
    fwd = wrap_phase(np.diff(ip, axis=axis))
    n = ip.shape[axis]
    out = np.empty_like(ip)

    def sl(a, b):
        idx = [slice(None)] * ip.ndim
        idx[axis] = slice(a, b)
        return tuple(idx)

    out[sl(1, n - 1)] = 0.5 * (fwd[sl(0, n - 2)] + fwd[sl(1, n - 1)])
    out[sl(0, 1)] = fwd[sl(0, 1)]
    out[sl(n - 1, n)] = fwd[sl(n - 2, n - 1)]
    return out


def instantaneous_frequency(ip) -> IfField:
    """Phase gradient in radians/sample.

    Central differences inside (mean of the two wrapped one-step differences),
    one-sided at the borders.
    """
    ip = np.asarray(ip, dtype=np.float64)
    if ip.ndim != 2 or min(ip.shape) < 3:
        raise ParameterError("phase map must be 2-D with both sides >= 3")
    return IfField(dx=_wrapped_gradient(ip, 1), dy=_wrapped_gradient(ip, 0))


def demodulate(gray, filt: FirFilter, bank: KernelBank) -> AmFmDecomposition:
    """Analytic image -> filterbank -> DCA."""
    return dca(filter_bank(analytic_image(gray, filt), bank))
