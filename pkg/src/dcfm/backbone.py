"""Convolutional feature extractor and mask decoder.

The encoder is a stack of stride-2 3x3 conv + ReLU stages; with the
default four stages it shrinks 64x64 input to 4x4 features (16x total
downsampling).  The decoder mirrors it with nearest-neighbour upsampling,
3x3 convs, and additive skip connections from each encoder stage, ending
in a sigmoid so predictions land strictly inside (0, 1).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .tensor import ShapeError, Tensor


@dataclass(frozen=True)
class EncoderConfig:
    """Stage layout of the extractor: (out_channels, stride) per stage."""

    in_channels: int = 3
    stages: tuple = ((16, 2), (32, 2), (64, 2), (64, 2))

    @property
    def downsample(self) -> int:
        factor = 1
        for _, stride in self.stages:
            factor *= stride
        return factor

    @property
    def out_channels(self) -> int:
        return self.stages[-1][0]


def uniform_init(rng: np.random.Generator, shape, fan_in: int) -> Tensor:
    """Uniform [-1/sqrt(fan_in), +1/sqrt(fan_in)] parameter tensor."""
    bound = 1.0 / np.sqrt(fan_in)
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True)


def rms_normalize(x: Tensor, eps: float = 1e-8) -> Tensor:
    """Divide each image in a [N, C, H, W] batch by its root mean square.

    Parameter-free and smooth everywhere (``eps`` keeps the all-zero input
    well defined: it maps to itself).  Only the scale is removed; relative
    channel and spatial structure pass through unchanged.
    """
    if x.ndim != 4:
        raise ShapeError(f"rms_normalize expects [N, C, H, W], got {x.shape}")
    mean_square = T.mean(x * x, axis=(1, 2, 3), keepdims=True)
    return x / T.sqrt(mean_square + eps)


class Encoder:
    """Feature extractor producing bottleneck features plus skip tensors."""

    def __init__(self, config: EncoderConfig, rng: np.random.Generator):
        self.config = config
        self.weights = []
        self.biases = []
        cin = config.in_channels
        for cout, _ in config.stages:
            fan_in = cin * 9
            self.weights.append(uniform_init(rng, (cout, cin, 3, 3), fan_in))
            self.biases.append(uniform_init(rng, (cout,), fan_in))
            cin = cout

    def parameters(self) -> dict:
        params = {}
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            params[f"encoder.stage{i}.w"] = w
            params[f"encoder.stage{i}.b"] = b
        return params

    def encode(self, images) -> tuple:
        """Run all stages; returns (features, skips).

        ``skips`` holds the output of every stage before the last, ordered
        shallow to deep.  Input extents must divide by the configured
        downsample factor.
        """
        x = images if isinstance(images, Tensor) else Tensor(images)
        if x.ndim != 4 or x.shape[1] != self.config.in_channels:
            raise ShapeError(
                f"encode expects [N, {self.config.in_channels}, H, W], got {x.shape}"
            )
        factor = self.config.downsample
        if x.shape[2] % factor or x.shape[3] % factor:
            raise ShapeError(
                f"input extents {x.shape[2]}x{x.shape[3]} not divisible by "
                f"downsample factor {factor}"
            )
        skips = []
        for i, (_, stride) in enumerate(self.config.stages):
            x = T.relu(T.conv3x3(x, self.weights[i], self.biases[i], stride=stride))
            if i + 1 < len(self.config.stages):
                skips.append(x)
        return x, skips


class Decoder:
    """Upsampling decoder with additive skips and a sigmoid mask head."""

    def __init__(self, config: EncoderConfig, rng: np.random.Generator):
        self.config = config
        widths = [cout for cout, _ in config.stages]
        self.weights = []
        self.biases = []
        # one conv per skip level, deep to shallow, then the mask head
        cin = widths[-1]
        for cout in reversed(widths[:-1]):
            fan_in = cin * 9
            self.weights.append(uniform_init(rng, (cout, cin, 3, 3), fan_in))
            self.biases.append(uniform_init(rng, (cout,), fan_in))
            cin = cout
        fan_in = cin * 9
        self.head_w = uniform_init(rng, (1, cin, 3, 3), fan_in)
        self.head_b = uniform_init(rng, (1,), fan_in)

    def parameters(self) -> dict:
        params = {}
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            params[f"decoder.stage{i}.w"] = w
            params[f"decoder.stage{i}.b"] = b
        params["decoder.head.w"] = self.head_w
        params["decoder.head.b"] = self.head_b
        return params

    def decode(self, features: Tensor, skips) -> Tensor:
        """Upsample features back to input resolution as a soft mask.

        The input features are first scaled per image by their root mean
        square (a parameter-free normalization).  Democratic attention can
        legitimately amplify feature magnitudes by orders of magnitude, so
        the decoder normalizes scale away and reads only the spatial and
        channel structure; without this, amplified inputs park the sigmoid
        head in its saturated zero-gradient regime.
        """
        x = rms_normalize(features)
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            x = T.conv3x3(T.upsample2(x), w, b)
            x = T.relu(x + skips[len(skips) - 1 - i])
        return T.sigmoid(T.conv3x3(T.upsample2(x), self.head_w, self.head_b))
