"""Learnable frequency-band masks and the heterogeneity (triplet) loss.

A mask bank holds one logit plane per band over the spectrum grid. Bands are
laid out along the anti-diagonal index u+v, exploiting the energy compaction
of the cosine transform: low frequencies live near the top-left corner.

Three mask modes:

* ``hard``: frozen 0/1 masks that partition the grid at the thresholds.
* ``soft_free``: sigmoid of the logits, each value free in (0, 1).
* ``soft_softmax``: softmax across the bands at every coordinate, so the
  masks form a partition of unity and the band images always sum back to the
  original image.

Two initializations: ``binary`` places +/-sharpness logits following the
threshold bands (a strong prior that still leaves gradients alive), and
``average`` starts from all-zero logits (uniform masks).
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import ShapeError, Tensor
from .spectral import idct2

__all__ = [
    "MASK_MODES",
    "MASK_INITS",
    "MaskBank",
    "default_thresholds",
    "init_mask_logits",
    "masks_from_logits",
    "decompose",
    "triplet_loss",
    "export_masks",
]

MASK_MODES = ("hard", "soft_free", "soft_softmax")
MASK_INITS = ("binary", "average")

# Band thresholds published for 299x299 inputs; other sizes scale them by the
# ratio of anti-diagonal ranges, (H + W - 2) / 596.
_REFERENCE_THRESHOLDS = (32, 64)
_REFERENCE_RANGE = 2 * (299 - 1)


def default_thresholds(height: int, width: int) -> tuple[int, int]:
    """Scale the reference 32/64 band boundaries to another grid size."""
    scale = (height + width - 2) / _REFERENCE_RANGE
    t1 = int(round(_REFERENCE_THRESHOLDS[0] * scale))
    t2 = int(round(_REFERENCE_THRESHOLDS[1] * scale))
    return max(t1, 1), max(t2, 2)


@dataclass
class MaskBank:
    """Per-band logits over the spectrum grid plus the derivation mode."""

    n: int
    height: int
    width: int
    mode: str
    init: str
    thresholds: tuple[int, int]
    sharpness: float
    logits: Tensor = field(repr=False)

    def band_index(self) -> np.ndarray:
        """Band id (0..n-1) of each (u, v) coordinate under the thresholds."""
        u = np.arange(self.height)[:, None]
        v = np.arange(self.width)[None, :]
        diag = u + v
        t1, t2 = self.thresholds
        idx = np.full((self.height, self.width), self.n - 1, dtype=np.int64)
        idx[diag < t2] = min(1, self.n - 1)
        idx[diag < t1] = 0
        return idx

    def parameters(self) -> list[tuple[str, Tensor]]:
        if self.mode == "hard":
            return []
        return [("masks.logits", self.logits)]


def init_mask_logits(
    mode: str,
    init: str,
    n: int,
    height: int,
    width: int,
    thresholds: tuple[int, int] | None = None,
    sharpness: float = 8.0,
) -> MaskBank:
    """Create a mask bank with banded or uniform starting logits."""
    if mode not in MASK_MODES:
        raise ValueError(f"unknown mask mode {mode!r}, expected one of {MASK_MODES}")
    if init not in MASK_INITS:
        raise ValueError(f"unknown mask init {init!r}, expected one of {MASK_INITS}")
    if n < 2:
        raise ValueError(f"need at least 2 masks, got {n}")
    if thresholds is None:
        thresholds = default_thresholds(height, width)
    t1, t2 = thresholds
    if not (0 < t1 < t2 < height + width - 1):
        raise ValueError(
            f"thresholds {thresholds} must satisfy 0 < t1 < t2 < {height + width - 1} for a {height}x{width} grid"
        )

    bank = MaskBank(
        n=n,
        height=height,
        width=width,
        mode=mode,
        init=init,
        thresholds=(t1, t2),
        sharpness=float(sharpness),
        logits=Tensor(np.zeros((n, height, width))),
    )
    if init == "binary":
        band = bank.band_index()
        logits = np.full((n, height, width), -sharpness)
        for i in range(n):
            logits[i][band == i] = sharpness
        bank.logits = Tensor(logits)
    bank.logits.requires_grad = mode != "hard"
    bank.logits.name = "masks.logits"
    return bank


def masks_from_logits(bank: MaskBank) -> Tensor:
    """Derive the (n, H, W) masks from the bank's logits per its mode."""
    if bank.mode == "soft_softmax":
        return ad.softmax(bank.logits, axis=0)
    if bank.mode == "soft_free":
        return ad.sigmoid(bank.logits)
    band = bank.band_index()
    hard = np.stack([(band == i).astype(np.float64) for i in range(bank.n)])
    return Tensor(hard)


def decompose(spectrum: Tensor, masks: Tensor, inverse_transform=None) -> list[Tensor]:
    """Split a spectrum into band images: inverse(spectrum * mask_i) per band.

    ``spectrum`` has shape (..., H, W); ``masks`` is (n, H, W) and broadcasts
    over the leading axes. With partition-of-unity masks the band images sum
    back to the plain inverse of the spectrum.
    """
    if masks.ndim != 3:
        raise ShapeError(f"decompose: masks must be (n, H, W), got {masks.shape}")
    if spectrum.shape[-2:] != masks.shape[-2:]:
        raise ShapeError(
            f"decompose: spectrum spatial dims {spectrum.shape[-2:]} do not match masks {masks.shape[-2:]}"
        )
    if inverse_transform is None:
        inverse_transform = idct2
    bands = []
    for i in range(masks.shape[0]):
        masked = ad.mul(spectrum, ad.take_slice(masks, i))
        bands.append(inverse_transform(masked))
    return bands


def triplet_loss(embeddings: list[Tensor], margin: float) -> Tensor:
    """Hinge pushing per-band embeddings apart by at least sqrt(margin).

    Each band acts as anchor in turn with itself as positive, so the positive
    distance vanishes and every ordered (anchor, other) pair contributes
    max(margin - ||f_a - f_n||^2, 0). The result is averaged over pairs and
    over the batch; identical embeddings therefore give exactly ``margin``.
    """
    n = len(embeddings)
    if n < 2:
        raise ValueError(f"triplet_loss: need at least 2 embeddings, got {n}")
    if margin <= 0:
        raise ValueError(f"triplet_loss: margin must be positive, got {margin}")
    total = Tensor(0.0)
    pairs = 0
    for a in range(n):
        for b in range(n):
            if a == b:
                continue
            diff = ad.sub(embeddings[a], embeddings[b])
            sq = diff * diff
            dist = ad.tensor_sum(sq, axis=tuple(range(1, sq.ndim))) if sq.ndim > 1 else sq
            hinge = ad.relu(ad.sub(Tensor(margin), dist))
            total = ad.add(total, ad.tensor_mean(hinge))
            pairs += 1
    return ad.mul(total, Tensor(1.0 / pairs))


def export_masks(bank: MaskBank, out_dir: str) -> list[str]:
    """Write each mask as an 8-bit grayscale PGM (binary P5) image.

    Values are scaled linearly from [0, 1] to [0, 255]. Files are named
    mask_<i>.pgm inside ``out_dir``.
    """
    os.makedirs(out_dir, exist_ok=True)
    masks = masks_from_logits(bank).data
    paths = []
    for i in range(bank.n):
        gray = np.clip(np.rint(masks[i] * 255.0), 0, 255).astype(np.uint8)
        path = os.path.join(out_dir, f"mask_{i}.pgm")
        with open(path, "wb") as fh:
            fh.write(f"P5\n{bank.width} {bank.height}\n255\n".encode("ascii"))
            fh.write(gray.tobytes())
        paths.append(path)
    return paths
