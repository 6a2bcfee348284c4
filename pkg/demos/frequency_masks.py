# Learnable frequency-band masks: initialization, partition of unity,
# and lossless band decomposition.
#
# The decomposition splits a DCT spectrum into n band images through masks
# M_i over frequency coordinates. Softmax masks guarantee sum_i M_i = 1 at
# every coordinate, so the band images always sum back to the original.

import os
import tempfile

import numpy as np

from freqdetect import Tensor, decompose, dct2, export_masks, gen_real, init_mask_logits, masks_from_logits

H = W = 32

# Binary init sharpens the masks toward the classic three-band split along
# anti-diagonals u + v (low, mid, high).
bank = init_mask_logits("soft_softmax", "binary", n=3, height=H, width=W)
masks = masks_from_logits(bank)
print("mask shapes:", masks.shape)
print("band thresholds:", bank.thresholds)

partition = masks.data.sum(axis=0)
print(f"partition of unity: max |sum - 1| = {np.abs(partition - 1.0).max():.3e}")

# Where does each mask put its weight? Report the mean anti-diagonal index.
u, v = np.meshgrid(np.arange(H), np.arange(W), indexing="ij")
for i in range(3):
    center = (masks.data[i] * (u + v)).sum() / masks.data[i].sum()
    print(f"mask {i}: weight-centred at u+v = {center:5.1f}, mass {masks.data[i].sum():8.1f}")

# Decompose a procedural image and reconstruct it from the bands.
image = Tensor(gen_real(seed=7, count=1, height=H, width=W)[0].astype(np.float64))
bands = decompose(dct2(image), masks)
total = np.sum([band.data for band in bands], axis=0)
print(f"\nreconstruction error: {np.abs(total - image.data).max():.3e}")
for i, band in enumerate(bands):
    print(f"band {i}: energy {np.sum(band.data**2):10.6f}")

# Masks export as plain 8-bit PGM images for eyeballing.
out = tempfile.mkdtemp(prefix="masks_")
for path in export_masks(bank, out):
    print("wrote", path, os.path.getsize(path), "bytes")
