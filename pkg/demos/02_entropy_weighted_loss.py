"""How the entropy weighting reshapes the BCE term, and the warm-up switch."""

import torch

from ugda_seg.losses import LossConfig, active_loss, bce, entropy_weight_map, hybrid_loss, pixel_entropy

p = torch.tensor([0.0, 0.05, 0.25, 0.5, 0.75, 0.95, 1.0])
print("p       ", p.tolist())
print("entropy ", [round(v, 4) for v in pixel_entropy(p).tolist()])
print("weight  ", [round(v, 4) for v in entropy_weight_map(p, beta=0.3).tolist()])

# A toy prediction: confident inside the object, hesitant along its border
target = torch.zeros(1, 1, 16, 16)
target[..., 4:12, 4:12] = 1
logits = (target * 2 - 1) * 4
logits[..., 4, 4:12] = 0.1  # uncertain top edge
logits[..., 11, 4:12] = -0.2  # wrong and uncertain bottom edge

cfg = LossConfig()
print("plain BCE   ", float(bce(logits, target)))
print("hybrid loss ", float(hybrid_loss(logits, target, cfg)))

# Epochs 0-2 use plain BCE; from epoch 3 the hybrid loss takes over
for epoch in range(5):
    print("epoch", epoch, float(active_loss(epoch, cfg)(logits, target)))
