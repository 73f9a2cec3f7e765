"""Robust feature augmentation toolkit.

Shock-absorbing classifier pipelines: input binarizers and group feature
extractors composed with standard classifiers, plus the PGD/BPDA attack and
adversarial-training machinery needed to measure the robustness gains.
"""

__version__ = "0.1.0"
