"""Two-branch forgery detector: spatial CNN plus a frequency-band branch.

The spatial branch is a small strided CNN ending in global average pooling
and a single-logit linear head. The frequency branch transforms the image to
the cosine-spectrum domain, splits it into band images with the mask bank,
and runs each band through a shared extractor that mirrors the spatial
branch's early geometry. Band features are injected additively into the
spatial stream at the entrance layers, weighted per (band, layer) by one of
five fusion schemes:

* ``none``: spatial branch only.
* ``all_entry``: every band added at the first entrance layer.
* ``all_exit``: every band added at the last entrance layer.
* ``predefined``: low band to the first layer, high band to the last.
* ``attention``: learned softmax weights, one row per band summing to 1
  across layers.

The training objective combines a sigmoid cross-entropy on the logit with
the band-heterogeneity triplet hinge, weighted by ``gamma``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import ShapeError, Tensor
from .masks import MaskBank, init_mask_logits, masks_from_logits, decompose, triplet_loss
from .spectral import LearnableTransform, adat_forward, adat_init, adat_inverse, dct2, idct2

__all__ = [
    "FUSION_SCHEMES",
    "ModelConfig",
    "TwoBranchModel",
    "ForwardPass",
    "LossBreakdown",
    "backbone_forward",
    "freq_branch",
    "attention_fuse",
    "fuse_fixed",
    "fusion_weight_matrix",
    "cross_entropy",
    "total_loss",
]

FUSION_SCHEMES = ("none", "all_entry", "all_exit", "predefined", "attention")


@dataclass
class ModelConfig:
    """Architecture and objective hyperparameters."""

    height: int = 64
    width: int = 64
    in_channels: int = 3
    stem_channels: int = 8
    block_channels: tuple[int, ...] = (16, 32, 64, 64)
    kernel: int = 3
    layer_count: int = 3
    n_bands: int = 3
    mask_mode: str = "soft_softmax"
    mask_init: str = "binary"
    mask_thresholds: tuple[int, int] | None = None
    mask_sharpness: float = 8.0
    fusion: str = "attention"
    margin: float = 0.1
    gamma: float = 1.0
    seed: int = 0

    def validate(self) -> None:
        if self.fusion not in FUSION_SCHEMES:
            raise ValueError(f"unknown fusion scheme {self.fusion!r}, expected one of {FUSION_SCHEMES}")
        if not 1 <= self.layer_count <= len(self.block_channels):
            raise ValueError(
                f"layer_count {self.layer_count} must lie in [1, {len(self.block_channels)}]"
            )
        if self.kernel % 2 != 1:
            raise ValueError(f"kernel must be odd for same-size stem padding, got {self.kernel}")
        if self.gamma < 0:
            raise ValueError(f"gamma must be non-negative, got {self.gamma}")
        if self.margin <= 0:
            raise ValueError(f"margin must be positive, got {self.margin}")


class _ConvLayer:
    """Conv + bias + optional ReLU with He-scaled Gaussian init."""

    def __init__(self, name: str, rng: np.random.Generator, c_in: int, c_out: int, kernel: int, stride: int):
        std = math.sqrt(2.0 / (c_in * kernel * kernel))
        self.weight = Tensor(
            rng.normal(0.0, std, size=(c_out, c_in, kernel, kernel)),
            requires_grad=True,
            name=f"{name}.weight",
        )
        # small positive bias keeps dead windows off the exact ReLU kink
        self.bias = Tensor(np.full(c_out, 0.01), requires_grad=True, name=f"{name}.bias")
        self.stride = stride
        self.padding = kernel // 2

    def __call__(self, x: Tensor) -> Tensor:
        return ad.relu(ad.conv2d(x, self.weight, bias=self.bias, stride=self.stride, padding=self.padding))

    def parameters(self) -> list[tuple[str, Tensor]]:
        return [(self.weight.name, self.weight), (self.bias.name, self.bias)]


@dataclass
class ForwardPass:
    """Model outputs for one batch."""

    logit: Tensor
    probability: Tensor
    embeddings: list[Tensor] = field(default_factory=list)
    attention: Tensor | None = None


@dataclass
class LossBreakdown:
    total: Tensor
    cross_entropy: Tensor
    triplet: Tensor


class TwoBranchModel:
    """Holds all trainable state and wires the two branches together."""

    def __init__(self, config: ModelConfig):
        config.validate()
        self.config = config
        rng = np.random.default_rng(config.seed)

        self.stem = _ConvLayer("backbone.stem", rng, config.in_channels, config.stem_channels, config.kernel, 1)
        self.blocks: list[_ConvLayer] = []
        c_prev = config.stem_channels
        for i, c_out in enumerate(config.block_channels):
            self.blocks.append(_ConvLayer(f"backbone.block{i + 1}", rng, c_prev, c_out, config.kernel, 2))
            c_prev = c_out
        self.head_weight = Tensor(
            rng.normal(0.0, 0.01, size=(config.block_channels[-1], 1)),
            requires_grad=True,
            name="head.weight",
        )
        self.head_bias = Tensor(np.zeros(1), requires_grad=True, name="head.bias")

        self.mask_bank: MaskBank | None = None
        self.freq_stem: _ConvLayer | None = None
        self.freq_blocks: list[_ConvLayer] = []
        self.att_logits: Tensor | None = None
        if config.fusion != "none":
            self.mask_bank = init_mask_logits(
                config.mask_mode,
                config.mask_init,
                config.n_bands,
                config.height,
                config.width,
                thresholds=config.mask_thresholds,
                sharpness=config.mask_sharpness,
            )
            self.freq_stem = _ConvLayer("freq.stem", rng, config.in_channels, config.stem_channels, config.kernel, 1)
            c_prev = config.stem_channels
            for i in range(config.layer_count):
                c_out = config.block_channels[i]
                self.freq_blocks.append(_ConvLayer(f"freq.block{i + 1}", rng, c_prev, c_out, config.kernel, 2))
                c_prev = c_out
            self.att_logits = Tensor(
                np.zeros((config.n_bands, config.layer_count)),
                requires_grad=config.fusion == "attention",
                name="fusion.att_logits",
            )
        self.transform: LearnableTransform | None = None

    def enable_adat(self) -> LearnableTransform:
        """Swap the fixed spectral transforms for learnable copies."""
        if self.transform is None:
            self.transform = adat_init(self.config.height, self.config.width)
        return self.transform

    def parameters(self) -> list[tuple[str, Tensor]]:
        """All trainable tensors in a stable order."""
        params: list[tuple[str, Tensor]] = []
        params.extend(self.stem.parameters())
        for block in self.blocks:
            params.extend(block.parameters())
        params.append(("head.weight", self.head_weight))
        params.append(("head.bias", self.head_bias))
        if self.config.fusion != "none":
            assert self.freq_stem is not None and self.mask_bank is not None
            params.extend(self.freq_stem.parameters())
            for block in self.freq_blocks:
                params.extend(block.parameters())
            params.extend(self.mask_bank.parameters())
            if self.config.fusion == "attention":
                params.append(("fusion.att_logits", self.att_logits))
        if self.transform is not None:
            params.extend(self.transform.parameters())
        return params

    def _check_images(self, images: Tensor) -> None:
        c, h, w = self.config.in_channels, self.config.height, self.config.width
        if images.ndim != 4 or images.shape[1:] != (c, h, w):
            raise ShapeError(
                f"expected images of shape (B, {c}, {h}, {w}), got {images.shape}"
            )

    def _spectral_pair(self):
        if self.transform is None:
            return dct2, idct2
        layer = self.transform
        return (lambda x: adat_forward(layer, x)), (lambda s: adat_inverse(layer, s))

    def _head(self, features: Tensor) -> Tensor:
        pooled = ad.global_avg_pool(features)
        logit = ad.add(ad.matmul(pooled, self.head_weight), self.head_bias)
        return ad.reshape(logit, (features.shape[0],))

    def forward(self, images: Tensor) -> ForwardPass:
        self._check_images(images)
        cfg = self.config
        freq_features: list[list[Tensor]] = []
        embeddings: list[Tensor] = []
        weights: Tensor | None = None
        if cfg.fusion != "none":
            freq_features, embeddings = freq_branch(self, images)
            weights = fusion_weight_matrix(cfg.fusion, cfg.n_bands, cfg.layer_count, self.att_logits)

        x = self.stem(images)
        for j, block in enumerate(self.blocks):
            x = block(x)
            if weights is not None and j < cfg.layer_count:
                x = _inject_layer(x, freq_features, weights, j)
        logit = self._head(x)
        return ForwardPass(
            logit=logit,
            probability=ad.sigmoid(logit),
            embeddings=embeddings,
            attention=weights,
        )

    def loss(self, images: Tensor, labels: np.ndarray) -> LossBreakdown:
        out = self.forward(images)
        if len(out.embeddings) >= 2:
            trip = triplet_loss(out.embeddings, self.config.margin)
        else:
            trip = Tensor(0.0)
        ce = cross_entropy(out.logit, labels)
        return LossBreakdown(
            total=total_loss(out.logit, labels, trip, self.config.gamma),
            cross_entropy=ce,
            triplet=trip,
        )


def backbone_forward(model: TwoBranchModel, images: Tensor) -> tuple[list[Tensor], Tensor]:
    """Pure spatial pass: entrance-layer features plus the pre-sigmoid logit."""
    model._check_images(images)
    x = model.stem(images)
    entrance: list[Tensor] = []
    for j, block in enumerate(model.blocks):
        x = block(x)
        if j < model.config.layer_count:
            entrance.append(x)
    return entrance, model._head(x)


def freq_branch(model: TwoBranchModel, images: Tensor) -> tuple[list[list[Tensor]], list[Tensor]]:
    """Per-band per-depth features plus pooled embeddings from the shared extractor."""
    model._check_images(images)
    if model.mask_bank is None or model.freq_stem is None:
        raise ValueError("freq_branch: model was built with fusion='none' and has no frequency branch")
    forward_t, inverse_t = model._spectral_pair()
    spectrum = forward_t(images)
    bands = decompose(spectrum, masks_from_logits(model.mask_bank), inverse_transform=inverse_t)
    features: list[list[Tensor]] = []
    embeddings: list[Tensor] = []
    for band in bands:
        x = model.freq_stem(band)
        depth_feats = []
        for block in model.freq_blocks:
            x = block(x)
            depth_feats.append(x)
        features.append(depth_feats)
        embeddings.append(ad.global_avg_pool(depth_feats[-1]))
    return features, embeddings


def fusion_weight_matrix(scheme: str, n: int, layer_count: int, att_logits: Tensor | None = None) -> Tensor:
    """(n, layer_count) per-(band, layer) injection weights for a scheme."""
    if scheme == "attention":
        if att_logits is None:
            raise ValueError("attention fusion requires att_logits")
        if att_logits.shape != (n, layer_count):
            raise ShapeError(f"att_logits must be ({n}, {layer_count}), got {att_logits.shape}")
        return ad.softmax(att_logits, axis=1)
    w = np.zeros((n, layer_count))
    if scheme == "all_entry":
        w[:, 0] = 1.0
    elif scheme == "all_exit":
        w[:, -1] = 1.0
    elif scheme == "predefined":
        # low band to the first entrance layer, high band to the last
        for i in range(n):
            j = round(i * (layer_count - 1) / (n - 1)) if n > 1 else 0
            w[i, j] = 1.0
    elif scheme != "none":
        raise ValueError(f"unknown fusion scheme {scheme!r}, expected one of {FUSION_SCHEMES}")
    return Tensor(w)


def _inject_layer(rgb_j: Tensor, freq_features: list[list[Tensor]], weights: Tensor, j: int) -> Tensor:
    out = rgb_j
    for i, per_depth in enumerate(freq_features):
        if per_depth[j].shape != rgb_j.shape:
            raise ShapeError(
                f"fusion at layer {j}: band {i} feature {per_depth[j].shape} does not match spatial {rgb_j.shape}"
            )
        out = ad.add(out, ad.mul(ad.take_element(weights, (i, j)), per_depth[j]))
    return out


def attention_fuse(rgb_features: list[Tensor], freq_features: list[list[Tensor]], attention: Tensor) -> list[Tensor]:
    """fused_j = rgb_j + sum_i attention[i, j] * freq[i][j]."""
    n, layer_count = attention.shape
    if len(rgb_features) != layer_count:
        raise ShapeError(f"attention_fuse: expected {layer_count} rgb features, got {len(rgb_features)}")
    if len(freq_features) != n:
        raise ShapeError(f"attention_fuse: expected {n} bands, got {len(freq_features)}")
    return [_inject_layer(rgb_features[j], freq_features, attention, j) for j in range(layer_count)]


def fuse_fixed(
    rgb_features: list[Tensor],
    freq_features: list[list[Tensor]],
    scheme: str,
    att_logits: Tensor | None = None,
) -> list[Tensor]:
    """Fuse with a fixed routing scheme; ``attention`` delegates to attention_fuse."""
    n = len(freq_features)
    layer_count = len(rgb_features)
    weights = fusion_weight_matrix(scheme, n, layer_count, att_logits)
    return [_inject_layer(rgb_features[j], freq_features, weights, j) for j in range(layer_count)]


def cross_entropy(logit: Tensor, labels: np.ndarray | Tensor) -> Tensor:
    """Mean sigmoid cross-entropy, softplus(z) - z*y, stable for large |z|."""
    y = labels.data if isinstance(labels, Tensor) else np.asarray(labels, dtype=np.float64)
    if not np.all(np.isin(y, (0.0, 1.0))):
        raise ValueError("cross_entropy: labels must be 0 (real) or 1 (fake)")
    if logit.shape != y.shape:
        raise ShapeError(f"cross_entropy: logit shape {logit.shape} vs labels {y.shape}")
    if not np.all(np.isfinite(logit.data)):
        raise ValueError("cross_entropy: non-finite logits")
    per_sample = ad.sub(ad.softplus(logit), ad.mul(logit, Tensor(y)))
    return ad.tensor_mean(per_sample)


def total_loss(logit: Tensor, labels: np.ndarray | Tensor, trip_loss: Tensor, gamma: float) -> Tensor:
    """L = gamma * L_trip + L_ce."""
    if gamma < 0:
        raise ValueError(f"total_loss: gamma must be non-negative, got {gamma}")
    if not np.all(np.isfinite(trip_loss.data)):
        raise ValueError("total_loss: non-finite triplet loss")
    ce = cross_entropy(logit, labels)
    return ad.add(ad.mul(Tensor(float(gamma)), trip_loss), ce)
