"""Encoder-decoder network with skip connections and three sigmoid heads.

Topology: five encoder levels of two 3x3 convolutions each (ReLU), with 2x2
max pooling between levels; four decoder levels of a learned 2x2
up-convolution, concatenation with the mirrored encoder output, and two 3x3
convolutions; two shared 3x3 convolutions; and three 1x1 heads producing the
per-cell presence probability map and the two image-coordinate maps.  That is
20 convolution, 4 pooling and 4 up-convolution hidden layers (28 in total);
construction fails loudly if a change breaks this census.

The public forward/backward contract uses (batch, channels, height, width)
arrays; internally activations are channel-last (see layers.py).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np

from . import layers

HEADS = ("presence", "x", "y")

EXPECTED_CONV_LAYERS = 20
EXPECTED_POOL_LAYERS = 4
EXPECTED_UPCONV_LAYERS = 4


@dataclass(frozen=True)
class NetworkSpec:
    """Widths and input size of the network; checks the hidden-layer census."""

    in_channels: int
    widths: tuple = (16, 32, 64, 128, 256)

    def __post_init__(self):
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))
        if self.in_channels < 1 or any(w < 1 for w in self.widths):
            raise ValueError("channel counts must be positive")
        n_levels = len(self.widths)
        census = (2 * n_levels + 2 * (n_levels - 1) + 2, n_levels - 1, n_levels - 1)
        expected = (EXPECTED_CONV_LAYERS, EXPECTED_POOL_LAYERS, EXPECTED_UPCONV_LAYERS)
        if census != expected:
            raise ValueError(f"hidden-layer census {census} != required {expected}")

    @property
    def min_spatial(self) -> int:
        """Input dims must be divisible by this (one halving per pooling)."""
        return 2 ** (len(self.widths) - 1)

    def layer_table(self) -> list:
        """Parameterized layers in forward order: (name, kind, weight shape)."""
        table = []
        c_prev = self.in_channels
        for i, w in enumerate(self.widths, start=1):
            table.append((f"enc{i}a", "conv", (3, 3, c_prev, w)))
            table.append((f"enc{i}b", "conv", (3, 3, w, w)))
            c_prev = w
        for i in range(len(self.widths) - 1, 0, -1):
            w = self.widths[i - 1]
            table.append((f"up{i}", "upconv", (self.widths[i], 2, 2, w)))
            table.append((f"dec{i}a", "conv", (3, 3, 2 * w, w)))
            table.append((f"dec{i}b", "conv", (3, 3, w, w)))
        w1 = self.widths[0]
        table.append(("shared1", "conv", (3, 3, w1, w1)))
        table.append(("shared2", "conv", (3, 3, w1, w1)))
        for head in HEADS:
            table.append((f"head_{head}", "conv", (1, 1, w1, 1)))
        return table

    def to_dict(self) -> dict:
        return {"in_channels": self.in_channels, "widths": list(self.widths)}

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkSpec":
        return cls(in_channels=int(d["in_channels"]), widths=tuple(d["widths"]))


def _fan_in(kind: str, shape: tuple) -> int:
    # taps that actually reach one output cell: all kh*kw*ci for a stride-1
    # convolution, but only ci for a stride-2 2x2 up-convolution
    if kind == "conv":
        return shape[0] * shape[1] * shape[2]
    return shape[0]


def init_params(spec: NetworkSpec, seed: int, dtype=np.float32) -> Dict[str, np.ndarray]:
    """He-style initialization: W ~ N(0, 2/fan_in), biases zero. Seed-deterministic."""
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x1417]))
    params: Dict[str, np.ndarray] = {}
    for name, kind, shape in spec.layer_table():
        std = np.sqrt(2.0 / _fan_in(kind, shape))
        params[f"{name}.w"] = rng.normal(0.0, std, size=shape).astype(dtype)
        params[f"{name}.b"] = np.zeros(shape[-1], dtype=dtype)
    return params


def zero_like_params(params: Dict[str, np.ndarray]) -> Dict[str, np.ndarray]:
    return {k: np.zeros_like(v) for k, v in params.items()}


def param_count(spec: NetworkSpec) -> int:
    return sum(int(np.prod(s)) + s[-1] for _, _, s in spec.layer_table())


def _conv_relu(params, name, x, cache):
    y, c1 = layers.conv2d_forward(x, params[f"{name}.w"], params[f"{name}.b"], pad=1)
    a, c2 = layers.relu_forward(y)
    if cache is not None:
        cache[name] = (c1, c2)
    return a


def unet_forward(
    params: Dict[str, np.ndarray],
    spec: NetworkSpec,
    x: np.ndarray,
    keep_cache: bool = True,
):
    """Run the network on a (B, C, K, M) batch.

    Returns ((presence, x_map, y_map), cache); each output is (B, 1, K, M)
    with values strictly inside (0, 1).  Pass keep_cache=False for inference
    to skip retaining layer caches.
    """
    if x.ndim != 4 or x.shape[1] != spec.in_channels:
        raise ValueError(f"expected input (B, {spec.in_channels}, K, M)")
    if x.shape[2] % spec.min_spatial or x.shape[3] % spec.min_spatial:
        raise ValueError(f"spatial dims must be divisible by {spec.min_spatial}")
    cache: Optional[dict] = {} if keep_cache else None
    a = np.ascontiguousarray(x.transpose(0, 2, 3, 1))

    skips = []
    n_levels = len(spec.widths)
    for i in range(1, n_levels + 1):
        a = _conv_relu(params, f"enc{i}a", a, cache)
        a = _conv_relu(params, f"enc{i}b", a, cache)
        if i < n_levels:
            skips.append(a)
            a, pc = layers.maxpool2x2_forward(a)
            if cache is not None:
                cache[f"pool{i}"] = pc

    for i in range(n_levels - 1, 0, -1):
        a, uc = layers.upconv2x2_forward(a, params[f"up{i}.w"], params[f"up{i}.b"])
        skip = skips.pop()
        if cache is not None:
            cache[f"up{i}"] = uc
            cache[f"cat{i}"] = (skip.shape[3], a.shape[3])
        a = np.concatenate([skip, a], axis=3)
        a = _conv_relu(params, f"dec{i}a", a, cache)
        a = _conv_relu(params, f"dec{i}b", a, cache)

    a = _conv_relu(params, "shared1", a, cache)
    a = _conv_relu(params, "shared2", a, cache)

    outputs = []
    for head in HEADS:
        z, hc = layers.conv2d_forward(a, params[f"head_{head}.w"], params[f"head_{head}.b"], pad=0)
        p, sc = layers.sigmoid_forward(z)
        if cache is not None:
            cache[f"head_{head}"] = (hc, sc)
        outputs.append(np.ascontiguousarray(p.transpose(0, 3, 1, 2)))
    return tuple(outputs), cache


def unet_backward(
    params: Dict[str, np.ndarray],
    spec: NetworkSpec,
    cache: dict,
    grad_outputs,
) -> Dict[str, np.ndarray]:
    """Backpropagate head gradients (each (B, 1, K, M)); returns grads per parameter."""
    grads: Dict[str, np.ndarray] = {}

    def conv_relu_back(name, g, need_grad_in=True):
        c1, c2 = cache[name]
        g = layers.relu_backward(c2, g)
        gin, gw, gb = layers.conv2d_backward(c1, g, params[f"{name}.w"], need_grad_in)
        grads[f"{name}.w"] = gw
        grads[f"{name}.b"] = gb
        return gin

    ga = None
    for head, g_out in zip(HEADS, grad_outputs):
        g = np.ascontiguousarray(g_out.transpose(0, 2, 3, 1))
        hc, sc = cache[f"head_{head}"]
        g = layers.sigmoid_backward(sc, g)
        gin, gw, gb = layers.conv2d_backward(hc, g, params[f"head_{head}.w"])
        grads[f"head_{head}.w"] = gw
        grads[f"head_{head}.b"] = gb
        ga = gin if ga is None else ga + gin

    ga = conv_relu_back("shared2", ga)
    ga = conv_relu_back("shared1", ga)

    n_levels = len(spec.widths)
    skip_grads = []
    for i in range(1, n_levels):
        ga = conv_relu_back(f"dec{i}b", ga)
        ga = conv_relu_back(f"dec{i}a", ga)
        n_skip, _ = cache[f"cat{i}"]
        skip_grads.append(np.ascontiguousarray(ga[..., :n_skip]))
        g_up = np.ascontiguousarray(ga[..., n_skip:])
        ga, gw, gb = layers.upconv2x2_backward(cache[f"up{i}"], g_up, params[f"up{i}.w"])
        grads[f"up{i}.w"] = gw
        grads[f"up{i}.b"] = gb

    for i in range(n_levels, 0, -1):
        if i < n_levels:
            ga = layers.maxpool2x2_backward(cache[f"pool{i}"], ga)
            ga = ga + skip_grads.pop()
        ga = conv_relu_back(f"enc{i}b", ga)
        ga = conv_relu_back(f"enc{i}a", ga, need_grad_in=(i > 1))
    return grads
