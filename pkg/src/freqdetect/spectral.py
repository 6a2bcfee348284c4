"""Orthonormal 2-D cosine transforms and their learnable replacements.

The forward transform of an image block X is ``S = D_H @ X @ D_W.T`` where
``D_N`` is the orthonormal type-II cosine matrix

    D[u, j] = c(u) * cos(pi * (2j + 1) * u / (2N)),
    c(0) = sqrt(1/N),  c(u > 0) = sqrt(2/N).

Orthonormality makes the inverse the transpose, so round trips and Parseval
energy preservation hold to machine precision. Channels are transformed
independently with the same basis.

A :class:`LearnableTransform` carries four free matrices (forward/inverse,
row/column) initialized to exact copies of the cosine basis. Before any
optimizer step it reproduces the fixed transforms bit for bit; after
fine-tuning the matrices are unconstrained.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import ShapeError, Tensor, bilinear_transform

__all__ = [
    "DctBasis",
    "LearnableTransform",
    "dct_matrix",
    "dct2",
    "idct2",
    "adat_init",
    "adat_forward",
    "adat_inverse",
]


@dataclass(frozen=True)
class DctBasis:
    """Orthonormal cosine basis of a given size: ``matrix @ matrix.T == I``."""

    size: int
    matrix: np.ndarray


def dct_matrix(n: int) -> DctBasis:
    """Build the orthonormal type-II cosine matrix of size n.

    Row 0 is the constant sqrt(1/n); row u samples a cosine of frequency u at
    the half-sample offsets (2j + 1) / (2n).
    """
    if n < 1:
        raise ValueError(f"dct_matrix: size must be >= 1, got {n}")
    u = np.arange(n)[:, None]
    j = np.arange(n)[None, :]
    d = np.cos(np.pi * (2 * j + 1) * u / (2 * n))
    d *= np.sqrt(2.0 / n)
    d[0, :] = np.sqrt(1.0 / n)
    return DctBasis(size=n, matrix=d)


def _bases_for(x: Tensor, basis_h: DctBasis | None, basis_w: DctBasis | None) -> tuple[DctBasis, DctBasis]:
    if x.ndim < 2:
        raise ShapeError(f"expected an array with 2+ dims (.., H, W), got {x.shape}")
    h, w = x.shape[-2], x.shape[-1]
    basis_h = basis_h or dct_matrix(h)
    basis_w = basis_w or dct_matrix(w)
    if basis_h.size != h or basis_w.size != w:
        raise ShapeError(
            f"basis sizes ({basis_h.size}, {basis_w.size}) do not match input spatial dims ({h}, {w})"
        )
    return basis_h, basis_w


def dct2(x: Tensor, basis_h: DctBasis | None = None, basis_w: DctBasis | None = None) -> Tensor:
    """Forward 2-D transform over the last two axes; channels stay separate."""
    basis_h, basis_w = _bases_for(x, basis_h, basis_w)
    return bilinear_transform(x, Tensor(basis_h.matrix), Tensor(basis_w.matrix))


def idct2(s: Tensor, basis_h: DctBasis | None = None, basis_w: DctBasis | None = None) -> Tensor:
    """Inverse 2-D transform; exact inverse of :func:`dct2` for the same bases."""
    basis_h, basis_w = _bases_for(s, basis_h, basis_w)
    return bilinear_transform(s, Tensor(basis_h.matrix.T), Tensor(basis_w.matrix.T))


@dataclass
class LearnableTransform:
    """Free row/column transform matrices, cosine-initialized.

    The four matrices are independent parameters; the inverse pair is not tied
    to the transpose of the forward pair, so fine-tuning may move them apart.
    """

    row_forward: Tensor
    col_forward: Tensor
    row_inverse: Tensor
    col_inverse: Tensor

    def parameters(self) -> list[tuple[str, Tensor]]:
        return [
            ("transform.row_forward", self.row_forward),
            ("transform.col_forward", self.col_forward),
            ("transform.row_inverse", self.row_inverse),
            ("transform.col_inverse", self.col_inverse),
        ]


def adat_init(height: int, width: int) -> LearnableTransform:
    """Create a learnable transform that starts as an exact cosine pair."""
    if height < 1 or width < 1:
        raise ValueError(f"adat_init: sizes must be >= 1, got ({height}, {width})")
    dh = dct_matrix(height).matrix
    dw = dct_matrix(width).matrix
    return LearnableTransform(
        row_forward=Tensor(dh.copy(), requires_grad=True, name="transform.row_forward"),
        col_forward=Tensor(dw.copy(), requires_grad=True, name="transform.col_forward"),
        row_inverse=Tensor(dh.T.copy(), requires_grad=True, name="transform.row_inverse"),
        col_inverse=Tensor(dw.T.copy(), requires_grad=True, name="transform.col_inverse"),
    )


def adat_forward(layer: LearnableTransform, x: Tensor) -> Tensor:
    """Image to spectrum through the learnable forward matrices."""
    return bilinear_transform(x, layer.row_forward, layer.col_forward)


def adat_inverse(layer: LearnableTransform, s: Tensor) -> Tensor:
    """Spectrum to image through the learnable inverse matrices."""
    return bilinear_transform(s, layer.row_inverse, layer.col_inverse)
