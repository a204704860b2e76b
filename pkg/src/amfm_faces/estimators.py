"""scikit-learn style wrappers around the filter design, the AM-FM features
and the two regression stages.

These follow the usual estimator contract (constructor stores parameters,
``fit`` returns ``self``, learned state ends in ``_``) so they work with
``get_params``/``set_params``, ``clone`` and pipelines.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .dataset import BLOCK, BLOCKS_PER_FRAME, INPUT_KINDS, frame_features
from .errors import ParameterError
from .gabor import BankConfig, build_bank
from .hilbert import (
    SaConfig,
    apply_fir,
    design_hilbert_fir,
    ideal_hilbert_magnitude,
    objective_mse,
    quantize,
    sa_refine,
)
from .nets import Network, TrainConfig, build_multi_block_net, build_single_block_net, fit

__all__ = ["HilbertTransformer", "AmFmTransformer", "BlockRegressor", "MultiBlockRegressor"]


class HilbertTransformer(BaseEstimator, TransformerMixin):
    """Designs the Hilbert FIR in ``fit``; ``transform`` filters each row of X.

    With ``bits`` set the taps are rounded to that grid and, if
    ``sa_iterations > 0``, refined by annealing.
    """

    def __init__(self, taps=51, kaiser_beta=6.0, n_fft=512, transition=0.2, bits=None,
                 sa_iterations=0, random_state=0):
        self.taps = taps
        self.kaiser_beta = kaiser_beta
        self.n_fft = n_fft
        self.transition = transition
        self.bits = bits
        self.sa_iterations = sa_iterations
        self.random_state = random_state

    def fit(self, X=None, y=None):
        filt = design_hilbert_fir(self.taps, self.kaiser_beta, self.n_fft, self.transition)
        ideal = ideal_hilbert_magnitude(self.n_fft, self.transition)
        if self.bits is not None:
            filt = quantize(filt, self.bits)
            if self.sa_iterations:
                cfg = SaConfig(max_iterations=self.sa_iterations, rng_seed=self.random_state)
                filt = sa_refine(filt, ideal, cfg).filter
        self.filter_ = filt
        self.objective_ = objective_mse(filt, ideal)
        return self

    def transform(self, X):
        check_is_fitted(self, "filter_")
        X = check_array(X, ensure_min_features=self.taps)
        return apply_fir(X, self.filter_)


class AmFmTransformer(BaseEstimator, TransformerMixin):
    """Maps gray frames ``(n, H, W)`` to network inputs ``(n, H, W, C)``.

    ``input_kind`` is one of ``original``, ``fm``, ``ia`` or ``am-fm``.
    """

    def __init__(self, input_kind="fm", bits=None, sa_iterations=0, bank_config=None, random_state=0):
        self.input_kind = input_kind
        self.bits = bits
        self.sa_iterations = sa_iterations
        self.bank_config = bank_config
        self.random_state = random_state

    def fit(self, X=None, y=None):
        if self.input_kind not in INPUT_KINDS:
            raise ParameterError(f"input_kind must be one of {INPUT_KINDS}")
        hil = HilbertTransformer(bits=self.bits, sa_iterations=self.sa_iterations,
                                 random_state=self.random_state).fit()
        self.filter_ = hil.filter_
        cfg = self.bank_config
        if isinstance(cfg, dict):
            cfg = BankConfig.from_dict(cfg)
        self.bank_ = build_bank(cfg)
        return self

    def transform(self, X):
        check_is_fitted(self, ["filter_", "bank_"])
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 2:
            X = X[None]
        if X.ndim != 3:
            raise ParameterError(f"expected (n, H, W) frames, got shape {X.shape}")
        check_array(X.reshape(len(X), -1))  # rejects NaN/inf
        return np.stack([frame_features(f, self.input_kind, self.filter_, self.bank_) for f in X])


def _check_blocks(X, channels=None):
    X = check_array(X, allow_nd=True, dtype=np.float32, ensure_2d=False)
    if X.ndim == 3:
        X = X[..., None]
    if X.ndim != 4 or X.shape[1:3] != (BLOCK, BLOCK):
        raise ParameterError(f"expected (n, {BLOCK}, {BLOCK}[, C]) blocks, got shape {X.shape}")
    if channels is not None and X.shape[3] != channels:
        raise ParameterError(f"fitted on {channels} channels, got {X.shape[3]}")
    return X


class _NetRegressor(RegressorMixin, BaseEstimator):
    def _train_config(self):
        return TrainConfig(
            epochs=self.epochs,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            rng_seed=self.random_state,
        )

    def _fit_net(self, net, X, y):
        self.history_ = fit(net, X, y, self._train_config())
        self.net_ = net
        return self


class BlockRegressor(_NetRegressor):
    """Single-block CNN: 50x50xC block -> face overlap score in (0, 1)."""

    def __init__(self, epochs=80, batch_size=32, learning_rate=3e-4, pool_stride=5, random_state=0):
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.pool_stride = pool_stride
        self.random_state = random_state

    def fit(self, X, y):
        X = _check_blocks(X)
        y = check_array(np.asarray(y).reshape(-1, 1), dtype=np.float64).ravel()
        if len(y) != len(X):
            raise ParameterError("X and y differ in length")
        self.n_channels_ = X.shape[3]
        spec = build_single_block_net(self.n_channels_, pool_stride=self.pool_stride)
        return self._fit_net(Network(spec, seed=self.random_state), X, y)

    def predict(self, X):
        check_is_fitted(self, "net_")
        return self.net_.predict(_check_blocks(X, self.n_channels_))


class MultiBlockRegressor(_NetRegressor):
    """Refines a frame's 45 block scores into 45 new scores."""

    def __init__(self, epochs=80, batch_size=32, learning_rate=1e-3, random_state=0):
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.random_state = random_state

    def fit(self, X, y):
        X = check_array(X, dtype=np.float32)
        y = check_array(y, dtype=np.float64)
        if X.shape[1] != BLOCKS_PER_FRAME or y.shape != X.shape:
            raise ParameterError(f"X and y must both be (n_frames, {BLOCKS_PER_FRAME})")
        return self._fit_net(Network(build_multi_block_net(), seed=self.random_state), X, y)

    def predict(self, X):
        check_is_fitted(self, "net_")
        X = check_array(X, dtype=np.float32)
        if X.shape[1] != BLOCKS_PER_FRAME:
            raise ParameterError(f"expected {BLOCKS_PER_FRAME} scores per frame")
        return self.net_.predict(X)
