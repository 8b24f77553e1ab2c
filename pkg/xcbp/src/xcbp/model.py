"""Cycle-alternating backprojection super-resolution network.

One upscaling stage doubles the spatial resolution.  The stage encodes the
low-resolution image and its nearest-neighbor pre-upsampled version with a
shared single-layer encoder, then runs an even number of correction cycles
that alternate between the two feature spaces: odd cycles add the extracted
residual to the low-resolution features, even cycles upsample it and add it
to the high-resolution features.  A single-layer decoder reads the final
high-resolution features.  Scales 4 and 8 cascade structurally identical
x2 stages.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F


@dataclass(frozen=True)
class ModelConfig:
    """Architecture hyperparameters for one x2 stage."""

    cycles: int = 8
    channels: int = 128
    reduction: int = 16
    rfe_levels: int = 3
    in_channels: int = 1

    def __post_init__(self):
        if self.cycles < 2 or self.cycles % 2 != 0:
            raise ValueError("cycles must be even and >= 2")
        if self.channels % self.reduction != 0:
            raise ValueError("channels must be divisible by reduction")
        if self.rfe_levels < 1:
            raise ValueError("rfe_levels must be >= 1")


def conv3(in_ch: int, out_ch: int, stride: int = 1) -> nn.Conv2d:
    # 3x3 convolutions use reflection padding throughout.
    return nn.Conv2d(
        in_ch, out_ch, kernel_size=3, stride=stride, padding=1,
        padding_mode="reflect",
    )


class DoubleActConv(nn.Module):
    """Two activated 3x3 convolutions (conv-PReLU twice)."""

    def __init__(self, channels: int):
        super().__init__()
        self.body = nn.Sequential(
            conv3(channels, channels),
            nn.PReLU(channels),
            conv3(channels, channels),
            nn.PReLU(channels),
        )

    def forward(self, x):
        return self.body(x)


class ChannelAttention(nn.Module):
    """Squeeze-and-gate channel weighting with a bottleneck ratio."""

    def __init__(self, channels: int, reduction: int):
        super().__init__()
        self.gate = nn.Sequential(
            nn.AdaptiveAvgPool2d(1),
            nn.Conv2d(channels, channels // reduction, kernel_size=1),
            nn.ReLU(inplace=True),
            nn.Conv2d(channels // reduction, channels, kernel_size=1),
            nn.Sigmoid(),
        )

    def forward(self, x):
        return x * self.gate(x)


class ResidualExtractor(nn.Module):
    """Extracts a correction from the paired feature spaces.

    Both spaces pass through their own single-layer internal encoder (the
    high-resolution one strided to match the low-resolution size), are
    concatenated and reduced pointwise, refined by sequential double-
    activated levels whose outputs concatenate densely, merged pointwise,
    weighted by channel attention, and added back to the reduction output.
    """

    def __init__(self, config: ModelConfig):
        super().__init__()
        c = config.channels
        self.encode_lr = conv3(c, c)
        self.encode_sr = conv3(c, c, stride=2)
        self.reduce = nn.Conv2d(2 * c, c, kernel_size=1)
        self.levels = nn.ModuleList(
            DoubleActConv(c) for _ in range(config.rfe_levels)
        )
        self.merge = nn.Conv2d(config.rfe_levels * c, c, kernel_size=1)
        self.attention = ChannelAttention(c, config.reduction)

    def forward(self, f_lr, f_sr):
        base = self.reduce(torch.cat([self.encode_lr(f_lr), self.encode_sr(f_sr)], dim=1))
        feats = []
        x = base
        for level in self.levels:
            x = level(x)
            feats.append(x)
        merged = self.merge(torch.cat(feats, dim=1))
        return base + self.attention(merged)


class Upsampler(nn.Module):
    """Resize-convolution: nearest x2 then two stacked 3x3 convolutions."""

    def __init__(self, channels: int):
        super().__init__()
        self.body = nn.Sequential(conv3(channels, channels), conv3(channels, channels))

    def forward(self, x):
        return self.body(F.interpolate(x, scale_factor=2, mode="nearest"))


class FeatureState:
    """The paired feature tensors threaded through the cycles."""

    __slots__ = ("f_lr", "f_sr", "cycle_index")

    def __init__(self, f_lr, f_sr, cycle_index=0):
        if f_lr.shape[1] != f_sr.shape[1]:
            raise ValueError("feature channel counts differ")
        if (2 * f_lr.shape[-2], 2 * f_lr.shape[-1]) != tuple(f_sr.shape[-2:]):
            raise ValueError("high-resolution features must be 2x the low-resolution size")
        self.f_lr = f_lr
        self.f_sr = f_sr
        self.cycle_index = cycle_index


class UpscaleStage(nn.Module):
    """One x2 stage: shared encoder, alternating cycles, decoder."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        c = config.channels
        self.encoder = conv3(config.in_channels, c)
        self.extractors = nn.ModuleList(
            ResidualExtractor(config) for _ in range(config.cycles)
        )
        self.upsamplers = nn.ModuleList(
            Upsampler(c) for _ in range(config.cycles // 2)
        )
        self.decoder = conv3(c, config.in_channels)

    def encode(self, lr_image, pre_upsampled=None) -> FeatureState:
        if pre_upsampled is None:
            pre_upsampled = F.interpolate(lr_image, scale_factor=2, mode="nearest")
        if tuple(pre_upsampled.shape[-2:]) != (
            2 * lr_image.shape[-2], 2 * lr_image.shape[-1]
        ):
            raise ValueError("pre-upsampled image must be exactly 2x the input size")
        return FeatureState(self.encoder(lr_image), self.encoder(pre_upsampled))

    def run_cycle(self, state: FeatureState) -> FeatureState:
        """Apply the next correction cycle (1-indexed like the cycle count).

        Odd cycles correct the low-resolution space; even cycles upsample
        the correction into the high-resolution space.  Exactly one space
        changes per cycle.
        """
        index = state.cycle_index  # 0-based position of the cycle to run
        if index >= self.config.cycles:
            raise ValueError("all cycles already applied")
        residual = self.extractors[index](state.f_lr, state.f_sr)
        if index % 2 == 0:  # cycles 1, 3, ... update the LR space
            return FeatureState(
                state.f_lr + residual, state.f_sr, index + 1
            )
        up = self.upsamplers[index // 2](residual)
        return FeatureState(state.f_lr, state.f_sr + up, index + 1)

    def decode(self, state: FeatureState):
        return self.decoder(state.f_sr)

    def forward(self, lr_image):
        state = self.encode(lr_image)
        for _ in range(self.config.cycles):
            state = self.run_cycle(state)
        return self.decode(state)


class CascadedUpscaler(nn.Module):
    """2/4/8x upscaler built from independent x2 stages."""

    def __init__(self, config: ModelConfig, scale: int = 2):
        super().__init__()
        if scale not in (2, 4, 8):
            raise ValueError("scale must be one of 2, 4, 8")
        self.scale = scale
        n_stages = {2: 1, 4: 2, 8: 3}[scale]
        self.stages = nn.ModuleList(UpscaleStage(config) for _ in range(n_stages))

    def forward(self, lr_image):
        out = lr_image
        for stage in self.stages:
            out = stage(out)
        return out

    def freeze_stages(self, count: int) -> None:
        """Disable gradients for the first ``count`` stages."""
        for stage in list(self.stages)[:count]:
            for p in stage.parameters():
                p.requires_grad_(False)

    def extend(self) -> "CascadedUpscaler":
        """Return a model for the next scale, reusing (frozen) stages."""
        if self.scale == 8:
            raise ValueError("already at the maximum scale")
        bigger = CascadedUpscaler(self.stages[0].config, self.scale * 2)
        for mine, theirs in zip(self.stages, bigger.stages):
            theirs.load_state_dict(mine.state_dict())
        bigger.freeze_stages(len(self.stages))
        return bigger


def parameter_count(module: nn.Module) -> int:
    return sum(p.numel() for p in module.parameters())
