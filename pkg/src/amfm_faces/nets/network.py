"""Layer stacks, the three network builders and the model file format."""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import FormatError, NumericalError, ParameterError
from . import layers as L

_MAGIC = b"AFMN"
_VERSION = 1

LAYER_TYPES = ("conv", "pool", "flatten", "dense")


@dataclass(frozen=True)
class NetSpec:
    """Declared input shape plus an ordered list of layer dicts.

    Layer dicts::

        {"type": "conv", "maps": 6, "kernel": 5, "stride": 1, "activation": "selu"}
        {"type": "pool", "mode": "max", "kernel": 5, "stride": 5}
        {"type": "flatten"}
        {"type": "dense", "units": 40, "activation": "selu"}
    """

    input_shape: tuple
    layers: tuple
    name: str = "net"

    def __post_init__(self):
        object.__setattr__(self, "input_shape", tuple(int(s) for s in self.input_shape))
        object.__setattr__(self, "layers", tuple(dict(layer) for layer in self.layers))
        self.shapes()  # validates the chain

    def shapes(self) -> list:
        """Output shape after every layer; raises if the chain is illegal."""
        shape = self.input_shape
        out = []
        for i, layer in enumerate(self.layers):
            kind = layer.get("type")
            if kind not in LAYER_TYPES:
                raise ParameterError(f"layer {i}: unknown type {kind!r}")
            if kind in ("conv", "pool") and len(shape) != 3:
                raise ParameterError(f"layer {i}: {kind} needs an (H, W, C) input, got {shape}")
            if kind == "conv":
                k, s = layer["kernel"], layer.get("stride", 1)
                shape = (
                    L.conv_output_size(shape[0], k, s),
                    L.conv_output_size(shape[1], k, s),
                    layer["maps"],
                )
            elif kind == "pool":
                if layer.get("mode", "max") not in ("max", "avg"):
                    raise ParameterError(f"layer {i}: pool mode must be max or avg")
                k, s = layer["kernel"], layer.get("stride", layer["kernel"])
                shape = (L.pool_output_size(shape[0], k, s), L.pool_output_size(shape[1], k, s), shape[2])
            elif kind == "flatten":
                shape = (int(np.prod(shape)),)
            else:
                if len(shape) != 1:
                    raise ParameterError(f"layer {i}: dense needs a flat input, got {shape}")
                shape = (layer["units"],)
            act = layer.get("activation")
            if act is not None and act not in L.ACTIVATIONS:
                raise ParameterError(f"layer {i}: unknown activation {act!r}")
            out.append(shape)
        return out

    @property
    def output_shape(self):
        return self.shapes()[-1] if self.layers else self.input_shape

    def param_shapes(self) -> list:
        """``(weight_shape, bias_shape)`` per layer, or None for parameter-free layers."""
        shape = self.input_shape
        res = []
        for layer, out in zip(self.layers, self.shapes()):
            if layer["type"] == "conv":
                k = layer["kernel"]
                res.append(((layer["maps"], k, k, shape[2]), (layer["maps"],)))
            elif layer["type"] == "dense":
                res.append(((layer["units"], shape[0]), (layer["units"],)))
            else:
                res.append(None)
            shape = out
        return res

    def to_dict(self) -> dict:
        return {"name": self.name, "input_shape": list(self.input_shape), "layers": list(self.layers)}

    @classmethod
    def from_dict(cls, d) -> "NetSpec":
        return cls(tuple(d["input_shape"]), tuple(d["layers"]), d.get("name", "net"))


def count_params(net) -> int:
    spec = net.spec if isinstance(net, Network) else net
    total = 0
    for ps in spec.param_shapes():
        if ps is not None:
            total += int(np.prod(ps[0])) + int(np.prod(ps[1]))
    return total


def build_single_block_net(channels=1, pool_kernel=5, pool_stride=5) -> NetSpec:
    """50x50xC -> conv(6@5x5, selu) -> maxpool -> 40 -> 24 -> 1 (sigmoid)."""
    if channels not in (1, 2):
        raise ParameterError("channels must be 1 or 2")
    return NetSpec(
        (50, 50, channels),
        (
            {"type": "conv", "maps": 6, "kernel": 5, "stride": 1, "activation": "selu"},
            {"type": "pool", "mode": "max", "kernel": pool_kernel, "stride": pool_stride},
            {"type": "flatten"},
            {"type": "dense", "units": 40, "activation": "selu"},
            {"type": "dense", "units": 24, "activation": "selu"},
            {"type": "dense", "units": 1, "activation": "sigmoid"},
        ),
        name="single-block",
    )


def build_multi_block_net() -> NetSpec:
    """45 block scores -> 60 -> 40 -> 45 refined scores."""
    return NetSpec(
        (45,),
        (
            {"type": "dense", "units": 60, "activation": "selu"},
            {"type": "dense", "units": 40, "activation": "selu"},
            {"type": "dense", "units": 45, "activation": "sigmoid"},
        ),
        name="multi-block",
    )


def build_lenet5_baseline(channels=1) -> NetSpec:
    """LeNet-5 on a 50x50 block with a single sigmoid output in place of RBF."""
    return NetSpec(
        (50, 50, channels),
        (
            {"type": "conv", "maps": 6, "kernel": 5, "stride": 1, "activation": "tanh"},
            {"type": "pool", "mode": "avg", "kernel": 2, "stride": 2},
            {"type": "conv", "maps": 16, "kernel": 5, "stride": 1, "activation": "tanh"},
            {"type": "pool", "mode": "avg", "kernel": 2, "stride": 2},
            {"type": "conv", "maps": 120, "kernel": 5, "stride": 1, "activation": "tanh"},
            {"type": "flatten"},
            {"type": "dense", "units": 84, "activation": "tanh"},
            {"type": "dense", "units": 1, "activation": "sigmoid"},
        ),
        name="lenet5",
    )


class Network:
    """Parameters for a :class:`NetSpec` with forward and backward passes.

    Parameters are stored in ``dtype`` (float32 by default, the precision of
    the model file).  Weights are drawn from ``N(0, 1/fan_in)``, biases are 0.
    """

    def __init__(self, spec: NetSpec, seed=0, params=None, dtype=np.float32):
        self.spec = spec
        self.dtype = np.dtype(dtype)
        if params is None:
            rng = np.random.default_rng(seed)
            params = []
            for ps in spec.param_shapes():
                if ps is None:
                    params.append(None)
                    continue
                wshape, bshape = ps
                fan_in = int(np.prod(wshape[1:]))
                w = rng.normal(0.0, np.sqrt(1.0 / fan_in), size=wshape)
                params.append([w, np.zeros(bshape)])
        self.params = [
            None if p is None else [np.asarray(a, dtype=self.dtype).copy() for a in p] for p in params
        ]
        self._plan = self._compile(spec)
        self._caches = None

    @staticmethod
    def _compile(spec):
        """Execution order of (op, layer index) pairs.

        Every activation here is non-decreasing, so an activation directly
        followed by max pooling is applied after the pool instead: same
        result, evaluated on far fewer values.
        """
        plan = []
        deferred = None
        for i, layer in enumerate(spec.layers):
            plan.append((layer["type"], i))
            if deferred is not None:
                plan.append(("act", deferred))
                deferred = None
            act = layer.get("activation")
            if not act:
                continue
            nxt = spec.layers[i + 1] if i + 1 < len(spec.layers) else None
            if nxt is not None and nxt["type"] == "pool" and nxt.get("mode", "max") == "max":
                deferred = i
            else:
                plan.append(("act", i))
        return plan

    def copy(self) -> "Network":
        return Network(self.spec, params=self.params, dtype=self.dtype)

    def flat_params(self) -> np.ndarray:
        parts = []
        for p in self.params:
            if p is not None:
                parts += [p[0].ravel(), p[1].ravel()]
        return np.concatenate(parts) if parts else np.zeros(0, dtype=self.dtype)

    def _check_input(self, x):
        x = np.asarray(x, dtype=self.dtype)
        want = self.spec.input_shape
        if x.shape[1:] != want:
            if x.shape == want:
                x = x[None]
            elif len(want) == 3 and want[2] == 1 and x.shape[1:] == want[:2]:
                x = x[..., None]
            else:
                raise ParameterError(f"input shape {x.shape[1:]} does not match network input {want}")
        return x

    def forward(self, x, keep_cache=False):
        """Batched forward pass; returns ``(N, *output_shape)``."""
        h = self._check_input(x)
        caches = []
        for op, i in self._plan:
            layer = self.spec.layers[i]
            p = self.params[i]
            if op == "conv":
                h, c = L.conv2d_forward(h, p[0], p[1], layer.get("stride", 1))
            elif op == "pool":
                h, c = L.pool_forward(
                    h, layer.get("mode", "max"), layer["kernel"], layer.get("stride", layer["kernel"])
                )
            elif op == "flatten":
                h, c = h.reshape(h.shape[0], -1), h.shape
            elif op == "dense":
                h, c = L.dense_forward(h, p[0], p[1])
            else:
                c = h
                h = L.ACTIVATIONS[layer["activation"]][0](h)
            if keep_cache:
                caches.append(c)
        if not np.all(np.isfinite(h)):
            raise NumericalError(f"non-finite activations in {self.spec.name}")
        self._caches = caches if keep_cache else None
        return h

    def backward(self, dout):
        """Back-propagate ``d loss / d output`` through the cached forward pass.

        Returns gradients matching ``self.params`` (None for parameter-free layers).
        """
        if self._caches is None:
            raise RuntimeError("backward() needs forward(..., keep_cache=True) first")
        grads = [None] * len(self.params)
        d = np.asarray(dout, dtype=self.dtype)
        for k in range(len(self._plan) - 1, -1, -1):
            op, i = self._plan[k]
            cache = self._caches[k]
            need = k > 0
            if op == "conv":
                d, dw, db = L.conv2d_backward(d, cache, need_input_grad=need)
                grads[i] = [dw, db]
            elif op == "pool":
                d = L.pool_backward(d, cache)
            elif op == "flatten":
                d = d.reshape(cache)
            elif op == "dense":
                d, dw, db = L.dense_backward(d, cache, need_input_grad=need)
                grads[i] = [dw, db]
            else:
                d = d * L.ACTIVATIONS[self.spec.layers[i]["activation"]][1](cache)
        self._caches = None
        return grads

    def predict(self, x, batch_size=256):
        x = self._check_input(x)
        outs = [self.forward(x[i : i + batch_size]) for i in range(0, len(x), batch_size)]
        out = np.concatenate(outs) if outs else np.zeros((0,) + tuple(self.spec.output_shape))
        if self.spec.output_shape == (1,):
            out = out[:, 0]
        return out


def save_model(net: Network, path) -> None:
    """``AFMN`` | u32 version | u32 len + NetSpec JSON | float32 LE params in layer order."""
    spec = json.dumps(net.spec.to_dict(), sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<II", _VERSION, len(spec)))
        fh.write(spec)
        fh.write(net.flat_params().astype("<f4").tobytes())


def load_model(path) -> Network:
    data = Path(path).read_bytes()
    if data[:4] != _MAGIC:
        raise FormatError(f"bad magic {data[:4]!r}", offset=0)
    if len(data) < 12:
        raise FormatError("truncated header", offset=len(data))
    version, slen = struct.unpack_from("<II", data, 4)
    if version != _VERSION:
        raise FormatError(f"unsupported model version {version}", offset=4)
    try:
        spec = NetSpec.from_dict(json.loads(data[12 : 12 + slen].decode("utf-8")))
    except (ValueError, KeyError, TypeError, ParameterError) as exc:
        raise FormatError(f"malformed network spec: {exc}", offset=12) from None
    pos = 12 + slen
    params = []
    for ps in spec.param_shapes():
        if ps is None:
            params.append(None)
            continue
        pair = []
        for shape in ps:
            n = int(np.prod(shape))
            if len(data) < pos + 4 * n:
                raise FormatError("parameter section truncated", offset=len(data))
            arr = np.frombuffer(data, dtype="<f4", count=n, offset=pos).astype(np.float32)
            pair.append(arr.reshape(shape))
            pos += 4 * n
        params.append(pair)
    if pos != len(data):
        raise FormatError("trailing bytes after parameters", offset=pos)
    return Network(spec, params=params, dtype=np.float32)
