"""Deep-supervision loss combination."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence


@dataclass
class DSConfig:
    alpha: float = 0.05
    weights: tuple[float, float] = (0.3, 0.7)  # (shallow, deep)

    def __post_init__(self):
        self.weights = tuple(self.weights)
        if self.alpha < 0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")
        if len(self.weights) != 2 or abs(sum(self.weights) - 1.0) > 1e-9:
            raise ValueError(f"aux weights must be two values summing to 1, got {self.weights}")


def total_loss(main, aux: Sequence = (), cfg: DSConfig | None = None):
    """``main + alpha * (w_shallow * aux[0] + w_deep * aux[1])``.

    Works on Python floats and on tensors alike. An empty ``aux`` returns
    ``main`` unchanged.
    """
    cfg = cfg or DSConfig()
    if len(aux) == 0:
        return main
    if len(aux) != 2:
        raise ValueError(f"expected 0 or 2 auxiliary losses (shallow, deep), got {len(aux)}")
    w_shallow, w_deep = cfg.weights
    return main + cfg.alpha * (w_shallow * aux[0] + w_deep * aux[1])
