"""Domainness-conditioned translation networks.

A residual encoder-decoder generator in the CycleGAN mold, except that every
instance-normalization site is a conditional instance norm (CIN) driven by a
shared 16-channel embedding of the domainness input.  Patch discriminators
emit one real/fake score per receptive-field patch.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn

from .domainness import DomainnessVector, validate_scalar

EMBED_DIM = 16

_ACTIVATIONS = {
    "relu": lambda: nn.ReLU(inplace=True),
    "leaky_relu": lambda: nn.LeakyReLU(0.2, inplace=True),
    "tanh": nn.Tanh,
}


def _as_condition_tensor(z, num_inputs: int, device, dtype) -> torch.Tensor:
    """Normalize scalar / vector / tensor domainness input to shape (1, num_inputs, 1, 1)."""
    if isinstance(z, DomainnessVector):
        values = list(z.values)
    elif isinstance(z, torch.Tensor):
        values = z.detach().flatten().tolist()
    elif isinstance(z, (list, tuple)):
        values = [float(v) for v in z]
    else:
        values = [validate_scalar(z)]
    if len(values) != num_inputs:
        raise ValueError(
            f"domainness has {len(values)} components, model expects {num_inputs}"
        )
    t = torch.tensor(values, device=device, dtype=dtype)
    return t.reshape(1, num_inputs, 1, 1)


class DomainnessEmbedding(nn.Module):
    """Deconvolution mapping the domainness input to a (1, 16, 1, 1) embedding.

    On a 1x1 spatial grid the transposed convolution is a plain learned
    linear map; the deconvolution form is kept for parity with the CIN
    conditioning path it feeds.
    """

    def __init__(self, num_inputs: int = 1, embed_dim: int = EMBED_DIM):
        super().__init__()
        self.num_inputs = num_inputs
        self.embed_dim = embed_dim
        self.deconv = nn.ConvTranspose2d(num_inputs, embed_dim, kernel_size=1, bias=True)

    def forward(self, z) -> torch.Tensor:
        weight = self.deconv.weight
        cond = _as_condition_tensor(z, self.num_inputs, weight.device, weight.dtype)
        return self.deconv(cond)


class ConditionalInstanceNorm2d(nn.Module):
    """Instance norm whose affine scale/shift come from the domainness embedding.

    The scale half of the head bias starts at 1 so the layer behaves like a
    vanilla instance norm at init, while the randomly initialized head weights
    keep the conditioning live from the first step.
    """

    def __init__(self, num_features: int, embed_dim: int = EMBED_DIM):
        super().__init__()
        self.num_features = num_features
        self.norm = nn.InstanceNorm2d(num_features, affine=False)
        self.affine = nn.Linear(embed_dim, 2 * num_features)
        with torch.no_grad():
            self.affine.bias[:num_features] = 1.0
            self.affine.bias[num_features:] = 0.0

    def forward(self, x: torch.Tensor, embedding: torch.Tensor) -> torch.Tensor:
        h = self.norm(x)
        params = self.affine(embedding.flatten(1))
        scale, shift = params.chunk(2, dim=1)
        return scale[..., None, None] * h + shift[..., None, None]


class _ConvBlock(nn.Module):
    def __init__(self, in_ch, out_ch, kernel, stride, padding, activation, padding_mode="zeros"):
        super().__init__()
        self.conv = nn.Conv2d(in_ch, out_ch, kernel, stride, padding, padding_mode=padding_mode)
        self.cin = ConditionalInstanceNorm2d(out_ch)
        self.act = _ACTIVATIONS[activation]()

    def forward(self, x, embedding):
        return self.act(self.cin(self.conv(x), embedding))


class _ResidualBlock(nn.Module):
    def __init__(self, channels, activation):
        super().__init__()
        self.conv1 = nn.Conv2d(channels, channels, 3, 1, 1, padding_mode="reflect")
        self.cin1 = ConditionalInstanceNorm2d(channels)
        self.act = _ACTIVATIONS[activation]()
        self.conv2 = nn.Conv2d(channels, channels, 3, 1, 1, padding_mode="reflect")
        self.cin2 = ConditionalInstanceNorm2d(channels)

    def forward(self, x, embedding):
        h = self.act(self.cin1(self.conv1(x), embedding))
        h = self.cin2(self.conv2(h), embedding)
        return x + h


class _UpBlock(nn.Module):
    def __init__(self, in_ch, out_ch, activation):
        super().__init__()
        self.up = nn.Upsample(scale_factor=2, mode="nearest")
        self.block = _ConvBlock(in_ch, out_ch, 3, 1, 1, activation)

    def forward(self, x, embedding):
        return self.block(self.up(x), embedding)


class ResidualGenerator(nn.Module):
    """Encoder / residual-block / decoder generator conditioned on domainness.

    Output is tanh-bounded to [-1, 1] and spatially identical to the input.
    ``num_domainness_inputs`` is 1 for a scalar-z model and K for a
    multi-target mixture model.
    """

    def __init__(
        self,
        in_channels: int = 3,
        base_filters: int = 64,
        num_residual_blocks: int = 4,
        num_downsamplings: int = 2,
        num_domainness_inputs: int = 1,
        activation: str = "relu",
    ):
        super().__init__()
        self.in_channels = in_channels
        self.num_domainness_inputs = num_domainness_inputs
        self.embedding = DomainnessEmbedding(num_domainness_inputs)

        self.stem = _ConvBlock(in_channels, base_filters, 7, 1, 3, activation, padding_mode="reflect")
        ch = base_filters
        self.down = nn.ModuleList()
        for _ in range(num_downsamplings):
            self.down.append(_ConvBlock(ch, ch * 2, 3, 2, 1, activation))
            ch *= 2
        self.blocks = nn.ModuleList(
            _ResidualBlock(ch, activation) for _ in range(num_residual_blocks)
        )
        self.up = nn.ModuleList()
        for _ in range(num_downsamplings):
            self.up.append(_UpBlock(ch, ch // 2, activation))
            ch //= 2
        self.head = nn.Conv2d(ch, in_channels, 7, 1, 3, padding_mode="reflect")

    def forward(self, x: torch.Tensor, z) -> torch.Tensor:
        e = self.embedding(z)
        h = self.stem(x, e)
        for block in self.down:
            h = block(h, e)
        for block in self.blocks:
            h = block(h, e)
        for block in self.up:
            h = block(h, e)
        return torch.tanh(self.head(h))


class PatchDiscriminator(nn.Module):
    """Convolutional stack scoring each receptive-field patch as real/fake.

    Three stride-2 downsamplings at desk scale: a 64x64 input yields a 6x6
    score map.  Scores are raw (no sigmoid); the loss decides how to read them.
    """

    def __init__(
        self,
        in_channels: int = 3,
        base_filters: int = 64,
        num_downsamplings: int = 3,
        activation: str = "leaky_relu",
    ):
        super().__init__()
        layers = [
            nn.Conv2d(in_channels, base_filters, 4, 2, 1),
            _ACTIVATIONS[activation](),
        ]
        ch = base_filters
        for _ in range(num_downsamplings - 1):
            layers += [
                nn.Conv2d(ch, ch * 2, 4, 2, 1),
                nn.InstanceNorm2d(ch * 2),
                _ACTIVATIONS[activation](),
            ]
            ch *= 2
        layers += [
            nn.Conv2d(ch, ch * 2, 4, 1, 1),
            nn.InstanceNorm2d(ch * 2),
            _ACTIVATIONS[activation](),
            nn.Conv2d(ch * 2, 1, 4, 1, 1),
        ]
        self.in_channels = in_channels
        self.model = nn.Sequential(*layers)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.model(x)


def embed_domainness(z, params: DomainnessEmbedding) -> torch.Tensor:
    """Embed a domainness value; output shape is exactly (1, 16, 1, 1)."""
    out = params(z)
    if out.shape != (1, params.embed_dim, 1, 1):
        raise RuntimeError(f"embedding shape {tuple(out.shape)} is not (1, {params.embed_dim}, 1, 1)")
    return out


def translate(x: torch.Tensor, z, generator: ResidualGenerator) -> torch.Tensor:
    """Translate a batch into the intermediate domain selected by z.

    Validates input range and channel count; output matches the input shape
    and stays in [-1, 1].
    """
    if x.dim() != 4 or x.shape[1] != generator.in_channels:
        raise ValueError(
            f"expected (N, {generator.in_channels}, H, W) input, got {tuple(x.shape)}"
        )
    if x.min() < -1.0001 or x.max() > 1.0001:
        raise ValueError("input values must lie in [-1, 1]")
    return generator(x, z)


def discriminate(x: torch.Tensor, discriminator: PatchDiscriminator) -> torch.Tensor:
    """Score a batch with a patch discriminator; one map per sample."""
    if x.dim() != 4 or x.shape[1] != discriminator.in_channels:
        raise ValueError(
            f"expected (N, {discriminator.in_channels}, H, W) input, got {tuple(x.shape)}"
        )
    return discriminator(x)


@dataclass
class TranslationModels:
    """Both generators and both shared discriminators of a two-domain model."""

    gen_st: ResidualGenerator
    gen_ts: ResidualGenerator
    disc_source: PatchDiscriminator
    disc_target: PatchDiscriminator

    def generators(self):
        return [self.gen_st, self.gen_ts]

    def discriminators(self):
        return [self.disc_source, self.disc_target]

    def train(self):
        for m in self.generators() + self.discriminators():
            m.train()

    def eval(self):
        for m in self.generators() + self.discriminators():
            m.eval()


@dataclass
class MultiTargetModels:
    """Generators plus one discriminator per target domain and one for the source."""

    gen_st: ResidualGenerator
    gen_ts: ResidualGenerator
    disc_source: PatchDiscriminator
    disc_targets: nn.ModuleList

    @property
    def num_targets(self) -> int:
        return len(self.disc_targets)

    def generators(self):
        return [self.gen_st, self.gen_ts]

    def discriminators(self):
        return [self.disc_source, *self.disc_targets]


def build_translation_models(
    image_channels: int = 3,
    gen_filters: int = 32,
    disc_filters: int = 32,
    num_residual_blocks: int = 4,
    gen_downsamplings: int = 2,
    disc_downsamplings: int = 3,
    seed: int | None = None,
) -> TranslationModels:
    """Construct the scalar-z model pair with a reproducible initialization."""
    if seed is not None:
        torch.manual_seed(seed)
    make_gen = lambda: ResidualGenerator(
        in_channels=image_channels,
        base_filters=gen_filters,
        num_residual_blocks=num_residual_blocks,
        num_downsamplings=gen_downsamplings,
    )
    make_disc = lambda: PatchDiscriminator(
        in_channels=image_channels,
        base_filters=disc_filters,
        num_downsamplings=disc_downsamplings,
    )
    return TranslationModels(
        gen_st=make_gen(),
        gen_ts=make_gen(),
        disc_source=make_disc(),
        disc_target=make_disc(),
    )


def build_multi_target_models(
    num_targets: int,
    image_channels: int = 3,
    gen_filters: int = 32,
    disc_filters: int = 32,
    num_residual_blocks: int = 4,
    gen_downsamplings: int = 2,
    disc_downsamplings: int = 3,
    seed: int | None = None,
) -> MultiTargetModels:
    if num_targets < 2:
        raise ValueError("multi-target models need at least 2 target domains")
    if seed is not None:
        torch.manual_seed(seed)
    make_gen = lambda: ResidualGenerator(
        in_channels=image_channels,
        base_filters=gen_filters,
        num_residual_blocks=num_residual_blocks,
        num_downsamplings=gen_downsamplings,
        num_domainness_inputs=num_targets,
    )
    make_disc = lambda: PatchDiscriminator(
        in_channels=image_channels,
        base_filters=disc_filters,
        num_downsamplings=disc_downsamplings,
    )
    return MultiTargetModels(
        gen_st=make_gen(),
        gen_ts=make_gen(),
        disc_source=make_disc(),
        disc_targets=nn.ModuleList(make_disc() for _ in range(num_targets)),
    )
