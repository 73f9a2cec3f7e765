"""Model pipeline: optional input-transform stages in front of a classifier.

Stages (binarizers) expose apply() for the forward pass and backward() for
the surrogate gradient, so attacks can differentiate through otherwise
non-differentiable preprocessing.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import netcore
from .data import Image
from .netcore import Network


def _flat(x) -> np.ndarray:
    if isinstance(x, Image):
        return x.flat()
    return np.asarray(x, dtype=np.float64).reshape(-1)


@dataclass
class ModelPipeline:
    """stages applied in order, then the network."""

    stages: list
    net: Network
    name: str = "model"

    def preprocess(self, x) -> np.ndarray:
        z = _flat(x)
        for stage in self.stages:
            z = stage.apply(z)
        return z

    def logits(self, x) -> np.ndarray:
        return netcore.forward(self.net, self.preprocess(x))

    def predict(self, x) -> int:
        return int(np.argmax(self.logits(x)))

    def loss(self, x, y: int) -> float:
        return netcore.cross_entropy(self.logits(x), y)

    def loss_and_input_grad(self, x, y: int) -> tuple[float, np.ndarray]:
        """Loss at the preprocessed point and its gradient pulled back to the
        raw input through each stage's surrogate backward rule."""
        z = self.preprocess(x)
        loss, grad = netcore.loss_and_input_grad(self.net, z, y)
        for stage in reversed(self.stages):
            grad = stage.backward(grad)
        return loss, grad

    def accuracy(self, images: np.ndarray, labels: np.ndarray) -> float:
        correct = sum(
            1 for img, y in zip(images, labels) if self.predict(img) == int(y)
        )
        return correct / max(len(labels), 1)
