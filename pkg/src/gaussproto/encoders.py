"""Convolutional feature extractors.

The primary encoder is a stack of small residual blocks (stride-2 entry
conv per block) followed by a 1x1 channel reducer; the reducer is
pretrained as an autoencoder against a 1x1 decoder.  The secondary
encoder embeds RoIAlign crops of the latent grid into single vectors
through four conv layers with batch normalization and leaky-ReLU,
collapsing the spatial extent with a global average.

Batch statistics are used whenever `training=True`; running statistics
are only updated when `update_running=True`, so frozen stages leave
every buffer untouched.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numerics as nm
from .errors import ShapeMismatchError, SizeNotDivisibleError
from .numerics import Tensor

LEAKY_SLOPE = 0.01
BN_EPS = 1e-5
BN_MOMENTUM = 0.1


@dataclass
class EncoderConfig:
    """Geometry of the primary encoder; latent width must divide the input."""

    input_size: int = 64
    num_blocks: int = 2
    channels: tuple[int, ...] = (16, 32, 64, 128)
    reduced_channels: int = 16
    block_stride: int = 2

    def __post_init__(self):
        if not 1 <= self.num_blocks <= 4:
            raise ValueError("num_blocks must be in 1..4")
        if len(self.channels) < self.num_blocks:
            raise ValueError("need one channel width per block")
        if self.input_size % self.scale != 0:
            raise SizeNotDivisibleError(
                f"input size {self.input_size} not divisible by total stride {self.scale}")

    @property
    def scale(self) -> int:
        """Total spatial downsampling factor p."""
        return self.block_stride ** self.num_blocks

    @property
    def latent_size(self) -> int:
        return self.input_size // self.scale

    @property
    def feature_channels(self) -> int:
        return self.channels[self.num_blocks - 1]


@dataclass
class LatentGrid:
    """The n' x n' x l embedding of one image."""

    values: Tensor       # (n', n', l)
    scale: int           # p, pixels per grid cell
    image_id: str = ""

    @property
    def latent_size(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[-1]


@dataclass
class ProposalEmbedding:
    vector: Tensor       # (l,)
    proposal_id: int = 0


def _he_normal(rng, shape, slope=LEAKY_SLOPE, dtype=np.float64):
    fan_in = int(np.prod(shape[1:]))
    std = np.sqrt(2.0 / (fan_in * (1.0 + slope ** 2)))
    return (rng.normal(size=shape) * std).astype(dtype)


class Conv2dLayer:
    def __init__(self, in_ch, out_ch, kernel, stride, padding, rng,
                 bias=True, transposed=False, dtype=np.float64):
        shape = (in_ch, out_ch, kernel, kernel) if transposed else (out_ch, in_ch, kernel, kernel)
        self.weight = Tensor(_he_normal(rng, shape, dtype=dtype), requires_grad=True)
        self.bias = Tensor(np.zeros(out_ch, dtype=dtype), requires_grad=True) if bias else None
        self.stride, self.padding, self.transposed = stride, padding, transposed

    def __call__(self, x: Tensor) -> Tensor:
        if self.transposed:
            return nm.conv2d_transpose(x, self.weight, self.bias, stride=self.stride,
                                       padding=self.padding,
                                       output_padding=self.stride - 1)
        return nm.conv2d(x, self.weight, self.bias, stride=self.stride, padding=self.padding)

    def parameters(self, prefix: str) -> dict[str, Tensor]:
        out = {f"{prefix}.weight": self.weight}
        if self.bias is not None:
            out[f"{prefix}.bias"] = self.bias
        return out

    def buffers(self, prefix: str) -> dict[str, np.ndarray]:
        return {}


class BatchNorm2d:
    def __init__(self, channels: int, dtype=np.float64):
        self.gamma = Tensor(np.ones(channels, dtype=dtype), requires_grad=True)
        self.beta = Tensor(np.zeros(channels, dtype=dtype), requires_grad=True)
        self.running_mean = np.zeros(channels, dtype=dtype)
        self.running_var = np.ones(channels, dtype=dtype)

    def __call__(self, x: Tensor, training: bool, update_running: bool = False) -> Tensor:
        C = x.shape[1]
        if training:
            mu = nm.mean(x, axis=(0, 2, 3), keepdims=True)
            var = nm.mean(nm.power(nm.sub(x, mu), 2.0), axis=(0, 2, 3), keepdims=True)
            if update_running:
                self.running_mean += BN_MOMENTUM * (mu.data.reshape(-1) - self.running_mean)
                self.running_var += BN_MOMENTUM * (var.data.reshape(-1) - self.running_var)
        else:
            mu = Tensor(self.running_mean.reshape(1, C, 1, 1).astype(x.dtype))
            var = Tensor(self.running_var.reshape(1, C, 1, 1).astype(x.dtype))
        xhat = nm.div(nm.sub(x, mu), nm.sqrt(nm.add(var, BN_EPS)))
        gamma = nm.reshape(self.gamma, (1, C, 1, 1))
        beta = nm.reshape(self.beta, (1, C, 1, 1))
        return nm.add(nm.mul(xhat, gamma), beta)

    def set_running(self, mean: np.ndarray, var: np.ndarray) -> None:
        self.running_mean[...] = mean
        self.running_var[...] = var

    def parameters(self, prefix: str) -> dict[str, Tensor]:
        return {f"{prefix}.gamma": self.gamma, f"{prefix}.beta": self.beta}

    def buffers(self, prefix: str) -> dict[str, np.ndarray]:
        return {f"{prefix}.running_mean": self.running_mean,
                f"{prefix}.running_var": self.running_var}


class ResidualBlock:
    """Two 3x3 convs with batch norm, plus a bias-free 1x1 projection skip.

    With the main-path conv weights at zero the block reduces to
    leaky_relu(projection(x)).
    """

    def __init__(self, in_ch, out_ch, stride, rng, dtype=np.float64):
        self.conv1 = Conv2dLayer(in_ch, out_ch, 3, stride, 1, rng, bias=False, dtype=dtype)
        self.bn1 = BatchNorm2d(out_ch, dtype=dtype)
        self.conv2 = Conv2dLayer(out_ch, out_ch, 3, 1, 1, rng, bias=False, dtype=dtype)
        self.bn2 = BatchNorm2d(out_ch, dtype=dtype)
        self.proj = Conv2dLayer(in_ch, out_ch, 1, stride, 0, rng, bias=False, dtype=dtype)

    def __call__(self, x: Tensor, training: bool, update_running: bool = False) -> Tensor:
        h = nm.leaky_relu(self.bn1(self.conv1(x), training, update_running), LEAKY_SLOPE)
        h = self.bn2(self.conv2(h), training, update_running)
        return nm.leaky_relu(nm.add(h, self.proj(x)), LEAKY_SLOPE)

    def projection(self, x: Tensor) -> Tensor:
        return self.proj(x)

    def parameters(self, prefix: str) -> dict[str, Tensor]:
        out = {}
        for name, mod in (("conv1", self.conv1), ("bn1", self.bn1),
                          ("conv2", self.conv2), ("bn2", self.bn2),
                          ("proj", self.proj)):
            out.update(mod.parameters(f"{prefix}.{name}"))
        return out

    def buffers(self, prefix: str) -> dict[str, np.ndarray]:
        out = {}
        out.update(self.bn1.buffers(f"{prefix}.bn1"))
        out.update(self.bn2.buffers(f"{prefix}.bn2"))
        return out

    def batchnorms(self) -> list[BatchNorm2d]:
        return [self.bn1, self.bn2]


class PrimaryEncoder:
    """g (residual blocks) followed by the 1x1 reducer h; f = h . g."""

    def __init__(self, config: EncoderConfig, rng: np.random.Generator, dtype=np.float64):
        self.config = config
        self.blocks: list[ResidualBlock] = []
        in_ch = 3
        for b in range(config.num_blocks):
            out_ch = config.channels[b]
            self.blocks.append(ResidualBlock(in_ch, out_ch, config.block_stride, rng, dtype))
            in_ch = out_ch
        self.reducer = Conv2dLayer(in_ch, config.reduced_channels, 1, 1, 0, rng, dtype=dtype)
        self.decoder = Conv2dLayer(config.reduced_channels, in_ch, 1, 1, 0, rng, dtype=dtype)

    def features(self, x: Tensor, training: bool, update_running: bool = False) -> Tensor:
        """Backbone output g(x), shape (B, C_m, n', n')."""
        h = x
        for block in self.blocks:
            h = block(h, training, update_running)
        return h

    def forward(self, x: Tensor, training: bool, update_running: bool = False) -> Tensor:
        """Latent maps h(g(x)), shape (B, l, n', n')."""
        return self.reducer(self.features(x, training, update_running))

    def backbone_parameters(self) -> dict[str, Tensor]:
        out = {}
        for i, block in enumerate(self.blocks):
            out.update(block.parameters(f"encoder.block{i}"))
        return out

    def reducer_parameters(self) -> dict[str, Tensor]:
        return self.reducer.parameters("encoder.reducer")

    def decoder_parameters(self) -> dict[str, Tensor]:
        return self.decoder.parameters("encoder.decoder")

    def parameters(self) -> dict[str, Tensor]:
        out = self.backbone_parameters()
        out.update(self.reducer_parameters())
        out.update(self.decoder_parameters())
        return out

    def buffers(self) -> dict[str, np.ndarray]:
        out = {}
        for i, block in enumerate(self.blocks):
            out.update(block.buffers(f"encoder.block{i}"))
        return out

    def batchnorms(self) -> list[BatchNorm2d]:
        return [bn for block in self.blocks for bn in block.batchnorms()]


def encode(encoder: PrimaryEncoder, image, image_id: str = "",
           training: bool = False) -> LatentGrid:
    """Embed one standardized (3, n, n) image into its latent grid."""
    image = nm.as_tensor(image)
    if image.ndim != 3 or image.shape[0] != 3:
        raise ShapeMismatchError(f"expected a (3, n, n) image, got {image.shape}")
    n = image.shape[1]
    if n != image.shape[2]:
        raise ShapeMismatchError("images must be square")
    if n % encoder.config.scale != 0:
        raise SizeNotDivisibleError(
            f"image size {n} not divisible by encoder stride {encoder.config.scale}")
    batch = nm.reshape(image, (1,) + image.shape)
    latent = encoder.forward(batch, training=training)
    grid = nm.transpose(nm.take(latent, 0), (1, 2, 0))  # (n', n', l)
    return LatentGrid(values=grid, scale=encoder.config.scale, image_id=image_id)


def reduce_and_reconstruct(encoder: PrimaryEncoder, features: Tensor,
                           ) -> tuple[Tensor, Tensor, Tensor]:
    """Apply the 1x1 reducer and its decoder; return (reduced, recon, mse)."""
    if features.shape[1] != encoder.reducer.weight.shape[1]:
        raise ShapeMismatchError(
            f"feature channels {features.shape[1]} do not match the reducer")
    reduced = encoder.reducer(features)
    recon = encoder.decoder(reduced)
    mse = nm.mean(nm.power(nm.sub(recon, features), 2.0))
    return reduced, recon, mse


@dataclass
class SecondaryConfig:
    """Geometry of the proposal encoder operating on (l, s, s) crops."""

    in_channels: int = 16
    crop_size: int = 8
    channels: tuple[int, int, int] = (24, 32, 32)
    out_dim: int = 16


class SecondaryEncoder:
    """Four conv layers (BN + leaky-ReLU) collapsing a crop to one vector."""

    def __init__(self, config: SecondaryConfig, rng: np.random.Generator, dtype=np.float64):
        self.config = config
        c1, c2, c3 = config.channels
        self.convs = [
            Conv2dLayer(config.in_channels, c1, 3, 2, 1, rng, bias=False, dtype=dtype),
            Conv2dLayer(c1, c2, 3, 2, 1, rng, bias=False, dtype=dtype),
            Conv2dLayer(c2, c3, 3, 2, 1, rng, bias=False, dtype=dtype),
            Conv2dLayer(c3, config.out_dim, 1, 1, 0, rng, bias=False, dtype=dtype),
        ]
        self.bns = [BatchNorm2d(c, dtype=dtype) for c in (c1, c2, c3, config.out_dim)]

    def forward(self, crops: Tensor, training: bool, update_running: bool = False) -> Tensor:
        """(B, l, s, s) crops -> (B, out_dim) embeddings."""
        if crops.shape[1] != self.config.in_channels:
            raise ShapeMismatchError(
                f"crop channels {crops.shape[1]} != expected {self.config.in_channels}")
        h = crops
        for conv, bn in zip(self.convs, self.bns):
            h = nm.leaky_relu(bn(conv(h), training, update_running), LEAKY_SLOPE)
        return nm.mean(h, axis=(2, 3))

    def parameters(self) -> dict[str, Tensor]:
        out = {}
        for i, (conv, bn) in enumerate(zip(self.convs, self.bns)):
            out.update(conv.parameters(f"secondary.conv{i}"))
            out.update(bn.parameters(f"secondary.bn{i}"))
        return out

    def buffers(self) -> dict[str, np.ndarray]:
        out = {}
        for i, bn in enumerate(self.bns):
            out.update(bn.buffers(f"secondary.bn{i}"))
        return out

    def batchnorms(self) -> list[BatchNorm2d]:
        return list(self.bns)


class SecondaryDecoder:
    """Mirror of the secondary encoder for its autoencoder pretraining."""

    def __init__(self, config: SecondaryConfig, rng: np.random.Generator, dtype=np.float64):
        c1, c2, c3 = config.channels
        self.head = Conv2dLayer(config.out_dim, c3, 1, 1, 0, rng, dtype=dtype)
        self.deconvs = [
            Conv2dLayer(c3, c2, 3, 2, 1, rng, transposed=True, dtype=dtype),
            Conv2dLayer(c2, c1, 3, 2, 1, rng, transposed=True, dtype=dtype),
            Conv2dLayer(c1, config.in_channels, 3, 2, 1, rng, transposed=True, dtype=dtype),
        ]

    def forward(self, embedding: Tensor) -> Tensor:
        """(B, out_dim) -> reconstructed (B, l, 8*ceil(s/8) ... ) crops."""
        h = nm.reshape(embedding, embedding.shape + (1, 1))
        h = nm.leaky_relu(self.head(h), LEAKY_SLOPE)
        for i, deconv in enumerate(self.deconvs):
            h = deconv(h)
            if i < len(self.deconvs) - 1:
                h = nm.leaky_relu(h, LEAKY_SLOPE)
        return h

    def parameters(self) -> dict[str, Tensor]:
        out = self.head.parameters("secondary_decoder.head")
        for i, deconv in enumerate(self.deconvs):
            out.update(deconv.parameters(f"secondary_decoder.deconv{i}"))
        return out

    def buffers(self) -> dict[str, np.ndarray]:
        return {}


def encode_proposal(encoder: SecondaryEncoder, patch, proposal_id: int = 0,
                    training: bool = False) -> ProposalEmbedding:
    """Embed one aligned (l, s, s) crop into a single latent vector."""
    patch = nm.as_tensor(patch)
    cfg = encoder.config
    if patch.shape != (cfg.in_channels, cfg.crop_size, cfg.crop_size):
        raise ShapeMismatchError(
            f"expected a ({cfg.in_channels}, {cfg.crop_size}, {cfg.crop_size}) patch, "
            f"got {patch.shape}")
    out = encoder.forward(nm.reshape(patch, (1,) + patch.shape), training=training)
    return ProposalEmbedding(vector=nm.take(out, 0), proposal_id=proposal_id)
