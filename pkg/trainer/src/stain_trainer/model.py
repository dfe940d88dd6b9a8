"""Residual U-Net in torch, record-compatible with the inference engine.

Two 3x3 reflect-padded convolutions per level, batch norm before every
ReLU, 2x2 max pooling down, 2x2 stride-2 transposed convolutions up with
skip concatenation (skip channels first), and a 1x1 head whose output is
added to the network input. Channel widths double per level.

export_records() emits the inference engine's record inventory:

    enc{l}.conv{1,2}.{weight,bias}, enc{l}.bn{1,2}.{gamma,beta,mean,var,eps}
    up{l}.{weight,bias}, dec{l}.conv{1,2}.* / dec{l}.bn{1,2}.*
    head.{weight,bias}

Conv records are (out, in, kh, kw). Torch stores transposed-conv weights
as (in, out, kh, kw), so up{l}.weight is transposed on the way out.
"""

from __future__ import annotations

import numpy as np
import torch
from torch import nn

INFERENCE_PAD = 32


class ExportError(ValueError):
    """The model no longer matches the record inventory it claims."""


def _double_conv(cin: int, cout: int) -> nn.Sequential:
    return nn.Sequential(
        nn.Conv2d(cin, cout, 3, padding=1, padding_mode="reflect"),
        nn.BatchNorm2d(cout),
        nn.ReLU(inplace=True),
        nn.Conv2d(cout, cout, 3, padding=1, padding_mode="reflect"),
        nn.BatchNorm2d(cout),
        nn.ReLU(inplace=True),
    )


class ResidualUNet(nn.Module):
    def __init__(
        self,
        depth: int = 5,
        base_filters: int = 16,
        in_channels: int = 1,
        out_channels: int = 1,
    ):
        super().__init__()
        if depth < 2:
            raise ValueError("depth must be >= 2")
        if base_filters < 1 or in_channels < 1 or out_channels < 1:
            raise ValueError("channel counts must be >= 1")
        if in_channels != out_channels:
            raise ValueError("residual output needs out_channels == in_channels")
        self.depth = depth
        self.base_filters = base_filters
        self.in_channels = in_channels
        self.out_channels = out_channels

        width = lambda level: base_filters * (1 << level)
        self.enc = nn.ModuleList(
            _double_conv(in_channels if l == 0 else width(l - 1), width(l))
            for l in range(depth)
        )
        self.pool = nn.MaxPool2d(2)
        self.up = nn.ModuleList(
            nn.ConvTranspose2d(width(l + 1), width(l), 2, stride=2)
            for l in range(depth - 1)
        )
        self.dec = nn.ModuleList(
            _double_conv(2 * width(l), width(l)) for l in range(depth - 1)
        )
        self.head = nn.Conv2d(base_filters, out_channels, 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        skips = []
        h = x
        for level, block in enumerate(self.enc):
            if level > 0:
                h = self.pool(h)
            h = block(h)
            if level < self.depth - 1:
                skips.append(h)
        for level in range(self.depth - 2, -1, -1):
            h = self.up[level](h)
            h = torch.cat([skips[level], h], dim=1)
            h = self.dec[level](h)
        return self.head(h) + x


def expected_records(
    depth: int, base_filters: int, in_channels: int, out_channels: int
) -> dict[str, tuple[int, ...]]:
    """The record inventory the inference engine validates against."""
    width = lambda level: base_filters * (1 << level)

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
    for l in range(depth):
        cin = in_channels if l == 0 else width(l - 1)
        recs.update(block(f"enc{l}", cin, width(l)))
    for l in range(depth - 2, -1, -1):
        recs[f"up{l}.weight"] = (width(l), width(l + 1), 2, 2)
        recs[f"up{l}.bias"] = (width(l),)
        recs.update(block(f"dec{l}", 2 * width(l), width(l)))
    recs["head.weight"] = (out_channels, base_filters, 1, 1)
    recs["head.bias"] = (out_channels,)
    return recs


def _block_records(prefix: str, block: nn.Sequential) -> dict[str, np.ndarray]:
    recs = {}
    for i, (conv_idx, bn_idx) in ((1, (0, 1)), (2, (3, 4))):
        conv: nn.Conv2d = block[conv_idx]
        bn: nn.BatchNorm2d = block[bn_idx]
        recs[f"{prefix}.conv{i}.weight"] = conv.weight.detach().numpy()
        recs[f"{prefix}.conv{i}.bias"] = conv.bias.detach().numpy()
        recs[f"{prefix}.bn{i}.gamma"] = bn.weight.detach().numpy()
        recs[f"{prefix}.bn{i}.beta"] = bn.bias.detach().numpy()
        recs[f"{prefix}.bn{i}.mean"] = bn.running_mean.detach().numpy()
        recs[f"{prefix}.bn{i}.var"] = bn.running_var.detach().numpy()
        recs[f"{prefix}.bn{i}.eps"] = np.array([bn.eps], np.float32)
    return recs


def export_records(model: ResidualUNet) -> dict[str, np.ndarray]:
    """State as named float32 arrays, validated against the inventory.

    Raised errors name the first record whose shape drifted, so a
    surgically modified model fails loudly rather than exporting a file
    the inference side would reject with less context.
    """
    recs: dict[str, np.ndarray] = {}
    for l in range(model.depth):
        recs.update(_block_records(f"enc{l}", model.enc[l]))
    for l in range(model.depth - 2, -1, -1):
        up = model.up[l]
        recs[f"up{l}.weight"] = up.weight.detach().numpy().transpose(1, 0, 2, 3)
        recs[f"up{l}.bias"] = up.bias.detach().numpy()
        recs.update(_block_records(f"dec{l}", model.dec[l]))
    recs["head.weight"] = model.head.weight.detach().numpy()
    recs["head.bias"] = model.head.bias.detach().numpy()

    expected = expected_records(
        model.depth, model.base_filters, model.in_channels, model.out_channels
    )
    for name, shape in expected.items():
        if name not in recs:
            raise ExportError(f"missing record {name!r}")
        if recs[name].shape != shape:
            raise ExportError(
                f"record {name!r} has shape {recs[name].shape}, want {shape}"
            )
    extra = [n for n in recs if n not in expected]
    if extra:
        raise ExportError(f"unexpected records {extra[:4]}")
    return {name: recs[name].astype(np.float32) for name in expected}


def import_records(records: dict[str, np.ndarray]) -> ResidualUNet:
    """Rebuild a model from exported records (shape-inferred)."""
    depth = 0
    while f"enc{depth}.conv1.weight" in records:
        depth += 1
    first = records["enc0.conv1.weight"]
    model = ResidualUNet(
        depth=depth,
        base_filters=int(first.shape[0]),
        in_channels=int(first.shape[1]),
        out_channels=int(records["head.weight"].shape[0]),
    )
    with torch.no_grad():
        for l in range(model.depth):
            _load_block(f"enc{l}", model.enc[l], records)
        for l in range(model.depth - 1):
            model.up[l].weight.copy_(
                torch.from_numpy(records[f"up{l}.weight"].transpose(1, 0, 2, 3).copy())
            )
            model.up[l].bias.copy_(torch.from_numpy(records[f"up{l}.bias"]))
            _load_block(f"dec{l}", model.dec[l], records)
        model.head.weight.copy_(torch.from_numpy(records["head.weight"]))
        model.head.bias.copy_(torch.from_numpy(records["head.bias"]))
    return model


def _load_block(prefix: str, block: nn.Sequential, records) -> None:
    for i, (conv_idx, bn_idx) in ((1, (0, 1)), (2, (3, 4))):
        conv: nn.Conv2d = block[conv_idx]
        bn: nn.BatchNorm2d = block[bn_idx]
        conv.weight.copy_(torch.from_numpy(records[f"{prefix}.conv{i}.weight"]))
        conv.bias.copy_(torch.from_numpy(records[f"{prefix}.conv{i}.bias"]))
        bn.weight.copy_(torch.from_numpy(records[f"{prefix}.bn{i}.gamma"]))
        bn.bias.copy_(torch.from_numpy(records[f"{prefix}.bn{i}.beta"]))
        bn.running_mean.copy_(torch.from_numpy(records[f"{prefix}.bn{i}.mean"]))
        bn.running_var.copy_(torch.from_numpy(records[f"{prefix}.bn{i}.var"]))
        bn.eps = float(records[f"{prefix}.bn{i}.eps"][0])


def normalize(data: np.ndarray, rho_min: float, rho_max: float) -> np.ndarray:
    """Affine map of [rho_min, rho_max] onto [0, 1], clamped outside."""
    if not (rho_max > rho_min):
        raise ValueError(f"need rho_max > rho_min, got [{rho_min}, {rho_max}]")
    v = (data.astype(np.float64) - rho_min) / (rho_max - rho_min)
    return np.clip(v, 0.0, 1.0).astype(np.float32)


def predict(
    model: ResidualUNet, image: np.ndarray, rho_min: float, rho_max: float
) -> np.ndarray:
    """Inference-convention forward pass on one 2-D image.

    Mirrors the engine's geometry: normalize, pad a 32-pixel mirror
    apron, extend to the pooling granularity, run, crop back.
    """
    if model.in_channels != 1:
        raise ValueError("predict handles single-channel models only")
    x = normalize(np.asarray(image), rho_min, rho_max)
    h, w = x.shape
    padded = np.pad(x, INFERENCE_PAD, mode="reflect")
    div = 1 << (model.depth - 1)
    extra_h = (-padded.shape[0]) % div
    extra_w = (-padded.shape[1]) % div
    if extra_h or extra_w:
        padded = np.pad(padded, ((0, extra_h), (0, extra_w)), mode="reflect")
    model.eval()
    with torch.no_grad():
        out = model(torch.from_numpy(padded[None, None]).float())
    band = out[0, 0].numpy()
    return band[INFERENCE_PAD : INFERENCE_PAD + h, INFERENCE_PAD : INFERENCE_PAD + w]
