"""
Preparation, hiding and reveal networks.

All three networks share one layout: a trunk of three parallel branches
(kernel sizes 3, 4 and 5) that each stack four conv+ReLU stages, a channel
concat of the branch outputs, per-branch heads on top of that concat, a concat
of the heads, and for the hiding and reveal nets a final projection conv.

Where the published layer tables don't add up, these choices are made:

* preparation heads: every branch ends with Conv(B) ReLU -> Conv(1) Sigmoid,
  so the head concat has exactly 3 channels;
* hiding heads: Conv(B) ReLU -> Conv(1) ReLU per branch, then a 1x1 conv over
  the 3-channel head concat down to the cover channels, with Sigmoid;
* reveal heads: same as hiding, then a 2x2 conv to 1 channel with Sigmoid so
  the reveal lies in (0, 1) as the BCE loss needs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterator, List, Optional, Protocol, Tuple, Union

import numpy as np

from ..core import tensor as T
from ..core.errors import ImageFormatError, SecretFormatError, ShapeError
from ..core.functional import Padding, same_padding
from ..core.models import NetworkConfig
from ..core.tensor import Tensor

TRUNK_DEPTH = 4

ImageLike = Union[Tensor, np.ndarray]


class Activation(Enum):
    RELU = "relu"
    SIGMOID = "sigmoid"


@dataclass
class ConvLayer:
    """Stride-1 same-padded convolution with bias."""

    kernels: Tensor
    bias: Tensor
    kernel_size: int
    padding: Padding

    def __post_init__(self):
        k = self.kernel_size
        shape = self.kernels.shape
        if len(shape) != 4 or shape[2:] != (k, k):
            raise ShapeError("ConvLayer kernels [C_out, C_in, k, k]", f"[C_out, C_in, {k}, {k}]", shape)
        if self.bias.shape != (self.kernels.shape[0],):
            raise ShapeError("ConvLayer bias", (self.kernels.shape[0],), self.bias.shape)
        top, bottom, left, right = self.padding
        if min(self.padding) < 0 or top + bottom != k - 1 or left + right != k - 1:
            raise ShapeError("ConvLayer padding totals", (k - 1, k - 1), (top + bottom, left + right))

    @property
    def in_channels(self) -> int:
        return self.kernels.shape[1]

    @property
    def out_channels(self) -> int:
        return self.kernels.shape[0]

    @classmethod
    def initialize(
        cls,
        in_channels: int,
        out_channels: int,
        kernel_size: int,
        rng: np.random.Generator,
        dtype: np.dtype,
        name: str,
    ) -> "ConvLayer":
        """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) kernels, zero bias."""
        fan_in = in_channels * kernel_size * kernel_size
        bound = 1.0 / np.sqrt(fan_in)
        kernels = rng.uniform(-bound, bound, size=(out_channels, in_channels, kernel_size, kernel_size))
        return cls(
            kernels=Tensor(kernels.astype(dtype), requires_grad=True, name=f"{name}.kernels"),
            bias=Tensor(np.zeros(out_channels, dtype=dtype), requires_grad=True, name=f"{name}.bias"),
            kernel_size=kernel_size,
            padding=same_padding(kernel_size),
        )

    def __call__(self, x: Tensor) -> Tensor:
        return T.conv2d(x, self.kernels, self.bias, self.padding)


@dataclass
class ConvBlock:
    name: str
    layer: ConvLayer
    activation: Activation

    def __call__(self, x: Tensor) -> Tensor:
        y = self.layer(x)
        return T.relu(y) if self.activation is Activation.RELU else T.sigmoid(y)


def _run_chain(chain: List[ConvBlock], x: Tensor) -> Tensor:
    for block in chain:
        x = block(x)
    return x


@dataclass
class StegoNetwork:
    """One of the three networks: branch trunk, branch heads, optional projection."""

    name: str
    in_channels: int
    trunk: List[List[ConvBlock]]
    heads: List[List[ConvBlock]]
    output: Optional[ConvBlock] = None

    @property
    def out_channels(self) -> int:
        if self.output is not None:
            return self.output.layer.out_channels
        return sum(head[-1].layer.out_channels for head in self.heads)

    def blocks(self) -> Iterator[ConvBlock]:
        for chain in self.trunk + self.heads:
            yield from chain
        if self.output is not None:
            yield self.output

    def forward(self, x: Tensor) -> Tensor:
        if x.shape[0] != self.in_channels:
            raise ShapeError(f"{self.name} input channels", (self.in_channels,), (x.shape[0],))
        features = T.concat_channels([_run_chain(chain, x) for chain in self.trunk])
        out = T.concat_channels([_run_chain(chain, features) for chain in self.heads])
        if self.output is not None:
            out = self.output(out)
        return out


class _NetworkBuilder:
    """Builds branch chains while checking the channel arithmetic as it goes."""

    def __init__(self, config: NetworkConfig, rng: np.random.Generator, dtype: np.dtype):
        self.config = config
        self.rng = rng
        self.dtype = dtype

    def block(self, name: str, c_in: int, c_out: int, k: int, activation: Activation) -> ConvBlock:
        layer = ConvLayer.initialize(c_in, c_out, k, self.rng, self.dtype, name)
        return ConvBlock(name=name, layer=layer, activation=activation)

    def chain(self, prefix: str, c_in: int, widths: List[Tuple[int, Activation]], k: int) -> List[ConvBlock]:
        blocks = []
        channels = c_in
        for idx, (c_out, activation) in enumerate(widths):
            blocks.append(self.block(f"{prefix}.{idx}", channels, c_out, k, activation))
            channels = c_out
        return blocks

    def network(
        self,
        name: str,
        in_channels: int,
        head_activation: Activation,
        output: Optional[Tuple[int, int]] = None,
    ) -> StegoNetwork:
        width = self.config.branch_channels
        trunk_widths = [(width, Activation.RELU)] * TRUNK_DEPTH
        head_widths = [(width, Activation.RELU), (1, head_activation)]

        trunk = [self.chain(f"{name}.trunk.k{k}", in_channels, trunk_widths, k) for k in self.config.kernel_sizes]
        trunk_out = sum(chain[-1].layer.out_channels for chain in trunk)
        if trunk_out != self.config.trunk_channels:
            raise ShapeError(f"{name} trunk concat", (self.config.trunk_channels,), (trunk_out,))

        heads = [self.chain(f"{name}.head.k{k}", trunk_out, head_widths, k) for k in self.config.kernel_sizes]
        head_out = sum(chain[-1].layer.out_channels for chain in heads)
        if head_out != len(self.config.kernel_sizes):
            raise ShapeError(f"{name} head concat", (len(self.config.kernel_sizes),), (head_out,))

        projection = None
        if output is not None:
            out_channels, kernel_size = output
            projection = self.block(f"{name}.output", head_out, out_channels, kernel_size, Activation.SIGMOID)
        return StegoNetwork(name=name, in_channels=in_channels, trunk=trunk, heads=heads, output=projection)


@dataclass
class StegoModel:
    """
    Parameters of the preparation (P), hiding (H) and reveal (R) networks.

    Attributes:
        config: Geometry the networks were built for
        prep: Secret [1,H,W] -> prepared image [3,H,W]
        hide: concat(prepared, cover) -> container [C,H,W]
        reveal: Container [C,H,W] -> revealed secret [1,H,W]
    """

    config: NetworkConfig
    prep: StegoNetwork
    hide: StegoNetwork
    reveal: StegoNetwork
    dtype: np.dtype = field(default=np.dtype(np.float64))

    def networks(self) -> Tuple[StegoNetwork, StegoNetwork, StegoNetwork]:
        return self.prep, self.hide, self.reveal

    def _named(self, network: StegoNetwork) -> Dict[str, Tensor]:
        params: Dict[str, Tensor] = {}
        for block in network.blocks():
            params[f"{block.name}.kernels"] = block.layer.kernels
            params[f"{block.name}.bias"] = block.layer.bias
        return params

    def named_parameters(self) -> Dict[str, Tensor]:
        """All parameters keyed by unique checkpoint name, in build order."""
        params: Dict[str, Tensor] = {}
        for network in self.networks():
            for name, tensor in self._named(network).items():
                if name in params:
                    raise ShapeError("parameter names", "unique", name)
                params[name] = tensor
        return params

    def parameter_count(self) -> int:
        return sum(p.size for p in self.named_parameters().values())

    def zero_grad(self) -> None:
        for param in self.named_parameters().values():
            param.zero_grad()

    def forward(self, secret: ImageLike, cover: ImageLike) -> Tuple[Tensor, Tensor, Tensor]:
        return full_forward(self, secret, cover)


def build_model(config: NetworkConfig, seed: int = 0, dtype: np.dtype = np.float64) -> StegoModel:
    """
    Build and initialise the three networks.

    Args:
        config: Network geometry (validated by NetworkConfig itself)
        seed: Seed of the initialisation PRNG
        dtype: Parameter dtype (float32 for training, float64 for gradient checks)

    Returns:
        Freshly initialised StegoModel
    """
    dtype = np.dtype(dtype)
    builder = _NetworkBuilder(config, np.random.default_rng(seed), dtype)
    prep = builder.network("prep", 1, Activation.SIGMOID)
    hide = builder.network(
        "hide", 3 + config.cover_channels, Activation.RELU, output=(config.cover_channels, 1)
    )
    reveal = builder.network("reveal", config.cover_channels, Activation.RELU, output=(1, 2))

    if prep.out_channels != 3:
        raise ShapeError("prep output channels", (3,), (prep.out_channels,))
    if hide.in_channels != config.hide_input_channels:
        raise ShapeError("hide input channels", (config.hide_input_channels,), (hide.in_channels,))
    return StegoModel(config=config, prep=prep, hide=hide, reveal=reveal, dtype=dtype)


def _as_input(model: StegoModel, image: ImageLike, context: str, channels: int) -> Tensor:
    t = image if isinstance(image, Tensor) else Tensor(np.asarray(image, dtype=model.dtype))
    expected = (channels, model.config.image_height, model.config.image_width)
    if t.shape != expected:
        raise ShapeError(context, expected, t.shape)
    if t.dtype != model.dtype and not t.requires_grad:
        t = Tensor(t.data.astype(model.dtype))
    return t


def prep_forward(model: StegoModel, secret: ImageLike) -> Tensor:
    """
    Turn a binary secret image [1,H,W] into a 3-channel prepared image in (0, 1).

    Raises:
        SecretFormatError: If the secret has values other than 0 and 1
    """
    secret_t = _as_input(model, secret, "secret image", 1)
    if not np.all((secret_t.data == 0) | (secret_t.data == 1)):
        raise SecretFormatError("secret image must be binary (values 0 or 1)")
    return model.prep.forward(secret_t)


def hide_forward(model: StegoModel, prepared: ImageLike, cover: ImageLike) -> Tensor:
    """Hide a prepared image inside a cover; the container has the cover's shape."""
    prepared_t = _as_input(model, prepared, "prepared image", 3)
    cover_t = _as_input(model, cover, "cover image", model.config.cover_channels)
    if cover_t.data.min() < 0.0 or cover_t.data.max() > 1.0:
        raise ImageFormatError("cover values must lie in [0, 1]")
    return model.hide.forward(T.concat_channels([prepared_t, cover_t]))


def reveal_forward(model: StegoModel, container: ImageLike) -> Tensor:
    """Reveal the secret [1,H,W] (values in (0, 1)) from a container image."""
    container_t = _as_input(model, container, "container image", model.config.cover_channels)
    return model.reveal.forward(container_t)


def full_forward(model: StegoModel, secret: ImageLike, cover: ImageLike) -> Tuple[Tensor, Tensor, Tensor]:
    """Run P, H and R end to end; returns (prepared, container, revealed)."""
    prepared = prep_forward(model, secret)
    container = hide_forward(model, prepared, cover)
    revealed = reveal_forward(model, container)
    return prepared, container, revealed


class StegoBackend(Protocol):
    """Anything that maps (secret, cover) to (prepared, container, revealed)."""

    def forward(self, secret: ImageLike, cover: ImageLike) -> Tuple[Tensor, Tensor, Tensor]:
        ...


class IdentityBackend:
    """Oracle stub: the container is the cover and the reveal is the secret."""

    def forward(self, secret: ImageLike, cover: ImageLike) -> Tuple[Tensor, Tensor, Tensor]:
        secret_arr = secret.data if isinstance(secret, Tensor) else np.asarray(secret, dtype=np.float64)
        cover_arr = cover.data if isinstance(cover, Tensor) else np.asarray(cover, dtype=np.float64)
        prepared = Tensor(np.repeat(secret_arr, 3, axis=0))
        return prepared, Tensor(cover_arr.copy()), Tensor(secret_arr.copy())
