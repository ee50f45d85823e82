"""Feed-forward feature encoder with exact analytic gradients.

Maps a raw feature vector to a d-dimensional embedding through an optional
ReLU hidden layer (hidden=0 gives a pure linear map). The backward pass
returns the exact gradient of dot(output, grad_output) with respect to every
parameter and to the input; the ReLU subgradient at zero is defined as zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError


@dataclass
class EncoderParams:
    weights: list[np.ndarray]  # each (fan_in, fan_out)
    biases: list[np.ndarray]

    @property
    def d_in(self) -> int:
        return self.weights[0].shape[0]

    @property
    def d_out(self) -> int:
        return self.weights[-1].shape[1]

    @property
    def hidden(self) -> int:
        return self.weights[0].shape[1] if len(self.weights) == 2 else 0

    def copy(self) -> "EncoderParams":
        return EncoderParams([w.copy() for w in self.weights], [b.copy() for b in self.biases])


@dataclass
class EncoderGradients:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    input: np.ndarray


def init_encoder(d_in: int, hidden: int, d: int, seed: int) -> EncoderParams:
    """Glorot-uniform weights, zero biases, deterministic per seed."""
    if d_in < 1 or d < 1 or hidden < 0:
        raise ValidationError(f"invalid encoder dims d_in={d_in}, hidden={hidden}, d={d}")
    dims = [d_in, d] if hidden == 0 else [d_in, hidden, d]
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return EncoderParams(weights, biases)


def _forward_batch(params: EncoderParams, feats: np.ndarray):
    """Forward pass on an (n, d_in) batch; returns (outputs, cache)."""
    if feats.ndim != 2 or feats.shape[1] != params.d_in:
        raise ValidationError(f"feature batch shape {feats.shape} incompatible with d_in={params.d_in}")
    if len(params.weights) == 1:
        out = feats @ params.weights[0] + params.biases[0]
        return out, (feats,)
    pre = feats @ params.weights[0] + params.biases[0]
    act = np.maximum(pre, 0.0)
    out = act @ params.weights[1] + params.biases[1]
    return out, (feats, pre, act)


def _backward_batch(params: EncoderParams, cache, grad_out: np.ndarray):
    """Parameter gradients summed over the batch plus per-row input gradients."""
    if grad_out.ndim != 2 or grad_out.shape[1] != params.d_out:
        raise ValidationError(f"grad_output batch shape {grad_out.shape} incompatible with d={params.d_out}")
    if len(params.weights) == 1:
        (feats,) = cache
        gw = feats.T @ grad_out
        gb = grad_out.sum(axis=0)
        gin = grad_out @ params.weights[0].T
        return [gw], [gb], gin
    feats, pre, act = cache
    gw2 = act.T @ grad_out
    gb2 = grad_out.sum(axis=0)
    gact = grad_out @ params.weights[1].T
    gpre = gact * (pre > 0.0)
    gw1 = feats.T @ gpre
    gb1 = gpre.sum(axis=0)
    gin = gpre @ params.weights[0].T
    return [gw1, gw2], [gb1, gb2], gin


def encode(params: EncoderParams, feature: np.ndarray) -> np.ndarray:
    feature = np.asarray(feature, dtype=np.float64)
    if feature.ndim != 1 or feature.shape[0] != params.d_in:
        raise ValidationError(f"feature length {feature.shape} does not match d_in={params.d_in}")
    out, _ = _forward_batch(params, feature[None, :])
    return out[0]


def encode_backward(params: EncoderParams, feature: np.ndarray,
                    grad_output: np.ndarray) -> EncoderGradients:
    feature = np.asarray(feature, dtype=np.float64)
    grad_output = np.asarray(grad_output, dtype=np.float64)
    if feature.ndim != 1 or feature.shape[0] != params.d_in:
        raise ValidationError(f"feature length {feature.shape} does not match d_in={params.d_in}")
    if grad_output.ndim != 1 or grad_output.shape[0] != params.d_out:
        raise ValidationError(f"grad_output length {grad_output.shape} does not match d={params.d_out}")
    _, cache = _forward_batch(params, feature[None, :])
    gws, gbs, gin = _backward_batch(params, cache, grad_output[None, :])
    return EncoderGradients(weights=gws, biases=gbs, input=gin[0])
