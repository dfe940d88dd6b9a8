"""Residual U-Net: architecture description and numpy forward pass.

The trunk is an encoder/decoder with two 3x3 conv layers per level,
normalization before every activation, 2x2 max-pool downsampling and 2x2
transposed-conv upsampling with skip concatenation (skip tensor first,
upsampled tensor second). A final 1x1 conv projects back to the input
channel count and the network input is added element-wise, so the model
learns the stain as a correction on top of the phase signal.

Channel widths double per level from base_filters. The default
(depth 5, 16 base filters) carries 1,943,761 learnable parameters.

Weight records are named:

    enc{l}.conv{1,2}.{weight,bias}    l = 0 .. depth-1, top to bottom
    enc{l}.bn{1,2}.{gamma,beta,mean,var,eps}
    up{l}.{weight,bias}               l = depth-2 .. 0, upsample into level l
    dec{l}.conv{1,2}.* / dec{l}.bn{1,2}.*
    head.{weight,bias}

Conv weights are (out, in, kh, kw); the transposed conv uses the same
layout with out[o, 2i+u, 2j+v] += x[c, i, j] * w[o, c, u, v].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..imagecore import ChannelTag, Raster
from .layers import batchnorm_infer, conv2d, maxpool2, relu, upconv2
from .preprocess import (
    INFERENCE_PAD,
    mirror_pad,
    normalize_for_ml,
    resample_to_shape,
    rescale_to_network,
)

PARAM_COUNT_MIN = 1_800_000
PARAM_COUNT_MAX = 2_000_000


@dataclass(frozen=True)
class NetSpec:
    """Architecture hyperparameters; the default is the production model."""

    depth: int = 5
    base_filters: int = 16
    in_channels: int = 1
    out_channels: int = 1

    def __post_init__(self):
        if self.depth < 2:
            raise ValueError("depth must be >= 2")
        if self.base_filters < 1 or self.in_channels < 1 or self.out_channels < 1:
            raise ValueError("channel counts must be >= 1")
        if self.in_channels != self.out_channels:
            raise ValueError("residual output needs out_channels == in_channels")

    def width(self, level: int) -> int:
        return self.base_filters * (1 << level)

    def expected_records(self) -> dict[str, tuple[int, ...]]:
        """Name -> shape for every tensor the forward pass reads."""

        def block(prefix, cin, cout):
            recs = {}
            for i, ci in ((1, cin), (2, cout)):
                recs[f"{prefix}.conv{i}.weight"] = (cout, ci, 3, 3)
                recs[f"{prefix}.conv{i}.bias"] = (cout,)
                for stat in ("gamma", "beta", "mean", "var"):
                    recs[f"{prefix}.bn{i}.{stat}"] = (cout,)
                recs[f"{prefix}.bn{i}.eps"] = (1,)
            return recs

        recs: dict[str, tuple[int, ...]] = {}
        for l in range(self.depth):
            cin = self.in_channels if l == 0 else self.width(l - 1)
            recs.update(block(f"enc{l}", cin, self.width(l)))
        for l in range(self.depth - 2, -1, -1):
            recs[f"up{l}.weight"] = (self.width(l), self.width(l + 1), 2, 2)
            recs[f"up{l}.bias"] = (self.width(l),)
            recs.update(block(f"dec{l}", 2 * self.width(l), self.width(l)))
        recs["head.weight"] = (self.out_channels, self.base_filters, 1, 1)
        recs["head.bias"] = (self.out_channels,)
        return recs

    def param_count(self) -> int:
        """Learnable parameters: conv/upconv weights and biases, norm scale
        and shift. Running statistics and eps are state, not parameters."""
        total = 0
        for name, shape in self.expected_records().items():
            leaf = name.rsplit(".", 1)[1]
            if leaf in ("mean", "var", "eps"):
                continue
            total += int(np.prod(shape))
        return total


class InferenceStageError(RuntimeError):
    """An inference stage failed; .stage names which one."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"infer_stain stage {stage!r}: {cause}")
        self.stage = stage


def _double_conv(x, prefix, store):
    for i in (1, 2):
        x = conv2d(x, store[f"{prefix}.conv{i}.weight"],
                   store[f"{prefix}.conv{i}.bias"], pad_mode="reflect")
        x = batchnorm_infer(
            x,
            store[f"{prefix}.bn{i}.gamma"],
            store[f"{prefix}.bn{i}.beta"],
            store[f"{prefix}.bn{i}.mean"],
            store[f"{prefix}.bn{i}.var"],
            float(np.asarray(store[f"{prefix}.bn{i}.eps"]).reshape(-1)[0]),
        )
        x = relu(x)
    return x


def unet_forward(x: np.ndarray, spec: NetSpec, store) -> np.ndarray:
    """Full forward pass on a (in_channels, H, W) float32 tensor."""
    x = np.asarray(x, dtype=np.float32)
    if x.ndim != 3 or x.shape[0] != spec.in_channels:
        raise ValueError(
            f"input must be ({spec.in_channels}, H, W), got {x.shape}"
        )
    div = 1 << (spec.depth - 1)
    if x.shape[1] % div or x.shape[2] % div:
        raise ValueError(
            f"spatial dims must be divisible by {div}, got {x.shape[1:]}"
        )
    skips = []
    h = x
    for l in range(spec.depth):
        if l > 0:
            h = maxpool2(h)
        h = _double_conv(h, f"enc{l}", store)
        if l < spec.depth - 1:
            skips.append(h)
    for l in range(spec.depth - 2, -1, -1):
        h = upconv2(h, store[f"up{l}.weight"], store[f"up{l}.bias"])
        h = np.concatenate([skips[l], h], axis=0)
        h = _double_conv(h, f"dec{l}", store)
    trunk = conv2d(h, store["head.weight"], store["head.bias"], pad_mode="reflect")
    return (trunk + x).astype(np.float32)


@dataclass
class StainMap:
    """Inferred fluorescence channel aligned to its source phase raster."""

    raster: Raster
    channel: ChannelTag = ChannelTag.DAPI


def infer_stain(
    phase_raster: Raster,
    spec: NetSpec,
    store,
    rho_min: float,
    rho_max: float,
    net_pixel_size: float | None = None,
    channel: ChannelTag = ChannelTag.DAPI,
) -> StainMap:
    """Normalize, adapt geometry, run the network, restore geometry.

    Steps: [rho_min, rho_max] -> [0, 1] normalization; optional bilinear
    rescale onto net_pixel_size; 32-pixel mirror apron plus alignment
    padding to the pooling granularity; forward pass; crop; resample back
    so the output grid equals the input grid exactly.
    """
    orig_h, orig_w = phase_raster.height, phase_raster.width
    div = 1 << (spec.depth - 1)

    def run(stage, fn, *a, **k):
        try:
            return fn(*a, **k)
        except Exception as exc:
            raise InferenceStageError(stage, exc) from exc

    r = run("normalize", normalize_for_ml, phase_raster, rho_min, rho_max)
    rescaled = (
        net_pixel_size is not None and net_pixel_size != phase_raster.pixel_size
    )
    if rescaled:
        r = run("rescale", rescale_to_network, r, net_pixel_size)

    def pad_stage(r):
        padded = mirror_pad(r, INFERENCE_PAD)
        extra_h = (-padded.height) % div
        extra_w = (-padded.width) % div
        if extra_h or extra_w:
            aligned = np.pad(
                padded.data, ((0, extra_h), (0, extra_w)), mode="reflect"
            )
            padded = Raster(aligned, padded.pixel_size)
        return padded

    padded = run("pad", pad_stage, r)
    out = run("forward", unet_forward, padded.data[None, :, :], spec, store)

    def crop_stage(out):
        band = out[0]
        return band[
            INFERENCE_PAD : INFERENCE_PAD + r.height,
            INFERENCE_PAD : INFERENCE_PAD + r.width,
        ]

    band = run("crop", crop_stage, out)
    if rescaled:
        band = run("restore", resample_to_shape, band, (orig_h, orig_w))
    result = Raster(np.asarray(band, np.float32), phase_raster.pixel_size)
    return StainMap(raster=result, channel=channel)
