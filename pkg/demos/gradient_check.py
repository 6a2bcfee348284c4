# Finite-difference audit of the tensor engine through the whole model.
#
# The training loop is only as trustworthy as its gradients. This script
# differentiates the full two-branch loss (convolutions, masks, attention,
# learnable transforms) with the tape, then re-derives every parameter
# entry by central differences and reports the worst relative error.
# ReLU kinks are detected by sign-pattern tracking and excluded rather
# than smoothed over.

import numpy as np

from freqdetect import ModelConfig, Tensor, TwoBranchModel, finite_diff_check

model = TwoBranchModel(
    ModelConfig(
        height=16,
        width=16,
        in_channels=1,
        stem_channels=2,
        block_channels=(3, 4, 4, 4),
        mask_thresholds=(4, 8),
        seed=1,
    )
)
model.enable_adat()

rng = np.random.default_rng(9)
images = Tensor(rng.normal(0.5, 0.2, size=(4, 1, 16, 16)))
labels = np.array([0, 1, 0, 1])

params = model.parameters()
total = sum(p.data.size for _, p in params)
print(f"auditing {total} parameter entries across {len(params)} tensors")

report = finite_diff_check(lambda: model.loss(images, labels).total, params, eps=1e-5)
print(f"checked  : {report.checked}")
print(f"excluded : {report.excluded} (ReLU active-set flips)")
print(f"max rel  : {report.max_rel_error:.3e}")
if report.worst is not None:
    name, index = report.worst
    print(f"worst at : {name}{list(index)}")
