"""Walk through the uncertainty-guided dual attention block on a random feature map."""

import torch

from ugda_seg.attention import UGDA, uncertainty_map

torch.manual_seed(0)
torch.set_grad_enabled(False)

# A feature map the size of the third encoder stage at 128x128 input
x = torch.randn(1, 128, 16, 16)
block = UGDA(128, reduction=8)

# The three gates: one weight per channel, one per pixel, and the
# channel-disagreement term which always sits in [0.5, 1)
channel, spatial, unc = block.components(x)
print("channel gate", tuple(channel.shape), float(channel.min()), float(channel.max()))
print("spatial gate", tuple(spatial.shape), float(spatial.min()), float(spatial.max()))
print("uncertainty ", tuple(unc.shape), float(unc.min()), float(unc.max()))

# Pixels where channels disagree get more attention.  Make a patch noisy and watch U rise
noisy = x.clone()
noisy[:, :, 4:8, 4:8] *= 5
print("mean U, calm vs noisy patch:",
      float(uncertainty_map(noisy)[..., :4, :4].mean()), float(uncertainty_map(noisy)[..., 4:8, 4:8].mean()))

# The residual scale starts at 0.1, so the block begins close to identity
y = block(x)
print("gamma", block.gamma.item(), "relative change", float((y - x).norm() / x.norm()))

block.gamma.zero_()
print("gamma=0 gives the input back exactly:", torch.equal(block(x), x))
