"""Forward-only multi-scale feature fusion.

``F12 = conv(concat(conv_s2(F1), F2))`` brings the high-resolution feature
down to F2's grid, ``F32 = up(resblock_s2(F2))`` brings a coarser one back
up, and the fused context feature is ``concat(F2, F12, F32)``.

Weight files are a flat little-endian float32 blob plus a JSON manifest
listing each tensor's name, shape, offset (in floats), stride and activation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .core import ImagePlane
from .errors import DimensionError, DomainError, FormatError

ACTIVATIONS = ("elu", "linear")
DEFAULT_WIDTH = 64


def elu(x: np.ndarray) -> np.ndarray:
    return np.where(x > 0, x, np.expm1(np.minimum(x, 0.0)))


@dataclass(frozen=True, eq=False)
class ConvBlockWeights:
    """Square kernel ``(k, k, C_in, C_out)``, bias ``(C_out,)``, stride and activation."""

    kernel: np.ndarray
    bias: np.ndarray
    stride: int = 1
    activation: str = "elu"

    def __post_init__(self):
        kernel = np.array(self.kernel, dtype=np.float64)
        bias = np.array(self.bias, dtype=np.float64).reshape(-1)
        if kernel.ndim != 4 or kernel.shape[0] != kernel.shape[1] or kernel.shape[0] % 2 == 0:
            raise DimensionError(f"kernel must be (k, k, C_in, C_out) with odd k, got {kernel.shape}")
        if bias.shape[0] != kernel.shape[3]:
            raise DimensionError("bias length must equal C_out")
        if self.stride not in (1, 2):
            raise DomainError("stride must be 1 or 2")
        if self.activation not in ACTIVATIONS:
            raise DomainError(f"activation must be one of {ACTIVATIONS}")
        if not (np.all(np.isfinite(kernel)) and np.all(np.isfinite(bias))):
            raise DomainError("weights must be finite")
        object.__setattr__(self, "kernel", kernel)
        object.__setattr__(self, "bias", bias)

    @property
    def in_channels(self) -> int:
        return self.kernel.shape[2]

    @property
    def out_channels(self) -> int:
        return self.kernel.shape[3]

    @classmethod
    def random(cls, rng, c_in, c_out, size=3, stride=1, activation="elu"):
        scale = np.sqrt(2.0 / (size * size * c_in))
        return cls(
            rng.normal(0.0, scale, (size, size, c_in, c_out)),
            rng.normal(0.0, 0.1, c_out),
            stride,
            activation,
        )


def conv2d_forward(x: ImagePlane, weights: ConvBlockWeights) -> ImagePlane:
    """Zero-padded convolution (cross-correlation) + bias + activation.

    Output spatial size is ``ceil(in / stride)``.
    """
    if x.channels != weights.in_channels:
        raise DimensionError(f"input has {x.channels} channels, kernel expects {weights.in_channels}")
    k = weights.kernel.shape[0]
    pad = k // 2
    s = weights.stride
    h, w = x.shape
    ho, wo = -(-h // s), -(-w // s)
    padded = np.pad(x.data, ((pad, pad), (pad, pad), (0, 0)))
    out = np.zeros((ho, wo, weights.out_channels))
    for dy in range(k):
        for dx in range(k):
            patch = padded[dy:dy + s * (ho - 1) + 1:s, dx:dx + s * (wo - 1) + 1:s]
            out += patch @ weights.kernel[dy, dx]
    out += weights.bias
    if weights.activation == "elu":
        out = elu(out)
    return ImagePlane(out)


def resblock_forward(x: ImagePlane, weights, projection: ConvBlockWeights) -> ImagePlane:
    """``conv2(conv1(x)) + projection(x)`` with a stride-2 first conv and shortcut."""
    w1, w2 = weights
    if w1.stride != 2 or w2.stride != 1 or projection.stride != 2:
        raise DimensionError("resblock needs a stride-2 conv, a stride-1 conv and a stride-2 projection")
    if w1.out_channels != w2.in_channels or w2.out_channels != projection.out_channels:
        raise DimensionError("resblock weight shapes do not chain")
    if projection.in_channels != x.channels:
        raise DimensionError("projection input channels do not match the input")
    main = conv2d_forward(conv2d_forward(x, w1), w2)
    return ImagePlane(main.data + conv2d_forward(x, projection).data)


def resize_bilinear(x: ImagePlane, height: int, width: int) -> ImagePlane:
    """Bilinear resize with the half-pixel (align-corners off) convention."""
    h, w = x.shape

    def axis(n_in, n_out):
        src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
        src = np.clip(src, 0.0, n_in - 1)
        i0 = np.minimum(np.floor(src).astype(np.intp), n_in - 1)
        i1 = np.minimum(i0 + 1, n_in - 1)
        return i0, i1, src - i0

    y0, y1, wy = axis(h, height)
    x0, x1, wx = axis(w, width)
    d = x.data
    wx = wx[None, :, None]
    top = d[y0][:, x0] * (1 - wx) + d[y0][:, x1] * wx
    bot = d[y1][:, x0] * (1 - wx) + d[y1][:, x1] * wx
    wy = wy[:, None, None]
    return ImagePlane(top * (1 - wy) + bot * wy)


def upsample_bilinear_2x(x: ImagePlane) -> ImagePlane:
    return resize_bilinear(x, 2 * x.height, 2 * x.width)


@dataclass(frozen=True, eq=False)
class FusionWeights:
    conv_f1: ConvBlockWeights
    conv_fuse: ConvBlockWeights
    res_conv1: ConvBlockWeights
    res_conv2: ConvBlockWeights
    res_proj: ConvBlockWeights

    _ORDER = ("conv_f1", "conv_fuse", "res_conv1", "res_conv2", "res_proj")

    @classmethod
    def random(cls, c1: int, c2: int, width: int = DEFAULT_WIDTH, seed: int = 0) -> "FusionWeights":
        rng = np.random.default_rng(seed)
        return cls(
            conv_f1=ConvBlockWeights.random(rng, c1, width, stride=2),
            conv_fuse=ConvBlockWeights.random(rng, width + c2, width),
            res_conv1=ConvBlockWeights.random(rng, c2, width, stride=2),
            res_conv2=ConvBlockWeights.random(rng, width, width, activation="linear"),
            res_proj=ConvBlockWeights.random(rng, c2, width, size=1, stride=2, activation="linear"),
        )

    def save(self, blob_path, manifest_path) -> None:
        entries, chunks, offset = [], [], 0
        for name in self._ORDER:
            wt = getattr(self, name)
            for part, arr in (("kernel", wt.kernel), ("bias", wt.bias)):
                entries.append(
                    {"name": f"{name}.{part}", "shape": list(arr.shape), "offset": offset,
                     "stride": wt.stride, "activation": wt.activation}
                )
                chunks.append(arr.astype("<f4").ravel())
                offset += arr.size
        with open(blob_path, "wb") as fh:
            fh.write(np.concatenate(chunks).tobytes())
        with open(manifest_path, "w") as fh:
            json.dump({"dtype": "float32-le", "tensors": entries}, fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, blob_path, manifest_path) -> "FusionWeights":
        try:
            with open(manifest_path) as fh:
                manifest = json.load(fh)
            flat = np.fromfile(blob_path, dtype="<f4").astype(np.float64)
            tensors = {e["name"]: e for e in manifest["tensors"]}
            blocks = {}
            for name in cls._ORDER:
                parts = {}
                for part in ("kernel", "bias"):
                    e = tensors[f"{name}.{part}"]
                    n = int(np.prod(e["shape"]))
                    if e["offset"] + n > flat.size:
                        raise FormatError(f"{blob_path}: blob too short for {name}.{part}")
                    parts[part] = flat[e["offset"]:e["offset"] + n].reshape(e["shape"])
                e = tensors[f"{name}.kernel"]
                blocks[name] = ConvBlockWeights(parts["kernel"], parts["bias"], e["stride"], e["activation"])
        except (OSError, KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"cannot load fusion weights: {exc}") from exc
        return cls(**blocks)


@dataclass(frozen=True, eq=False)
class FusedFeatures:
    f12: ImagePlane
    f32: ImagePlane
    fms: ImagePlane


def msfusion_forward(f1: ImagePlane, f2: ImagePlane, weights: FusionWeights) -> FusedFeatures:
    """Fuse a high-resolution feature ``f1`` into ``f2``'s grid."""
    h2, w2 = f2.shape
    if (-(-f1.height // 2), -(-f1.width // 2)) != (h2, w2):
        raise DimensionError(f"f1 {f1.shape} is not twice the resolution of f2 {f2.shape}")
    down = conv2d_forward(f1, weights.conv_f1)
    f12 = conv2d_forward(ImagePlane(np.concatenate([down.data, f2.data], axis=2)), weights.conv_fuse)
    coarse = resblock_forward(f2, (weights.res_conv1, weights.res_conv2), weights.res_proj)
    f32 = resize_bilinear(coarse, h2, w2)
    fms = ImagePlane(np.concatenate([f2.data, f12.data, f32.data], axis=2))
    return FusedFeatures(f12, f32, fms)
