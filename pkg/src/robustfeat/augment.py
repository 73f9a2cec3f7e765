"""Classifier composition: intersect group feature extractors with each other
and with a standard classifier. An empty intersection is surfaced as a flag
(cross-group inconsistency), never silently resolved.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .groupfeat import GroupLabelMap
from .pipeline import ModelPipeline


class GroupExtractorError(Exception):
    """Raised when extractor i fails; carries the failing extractor index."""

    def __init__(self, index: int, cause: Exception):
        super().__init__(f"extractor {index} failed: {cause}")
        self.index = index
        self.cause = cause


@dataclass
class AugmentedClassifier:
    """Base pipeline plus (extractor, label-map) pairs over one label universe.

    class_names translates the base network's argmax index into the label
    vocabulary used by the group maps; with class_names=None the raw integer
    labels are used directly.
    """

    base: ModelPipeline
    extractors: list[tuple[object, GroupLabelMap]]
    class_names: list[str] | None = None

    def base_label(self, x):
        idx = self.base.predict(x)
        return self.class_names[idx] if self.class_names is not None else idx


@dataclass
class AugmentedVerdict:
    label_set: frozenset
    flagged: bool
    base_label: object
    group_values: list = field(default_factory=list)
    group_sets: list = field(default_factory=list)
    error: str | None = None

    def as_dict(self) -> dict:
        return {
            "base_label": self.base_label,
            "group_values": list(self.group_values),
            "group_sets": [sorted(s) for s in self.group_sets],
            "label_set": sorted(self.label_set),
            "flagged": self.flagged,
            "error": self.error,
        }


def intersect_groups(x, extractors) -> frozenset:
    """Intersection of the label sets proposed by every extractor."""
    if not extractors:
        raise ValueError("need at least one extractor")
    result: frozenset | None = None
    for i, (extractor, gmap) in enumerate(extractors):
        try:
            value = extractor.extract(x)
        except Exception as exc:  # surfaced with the failing extractor id
            raise GroupExtractorError(i, exc) from exc
        labels = gmap.labels_for(value)
        result = labels if result is None else (result & labels)
    return result


def augmented_classify(ac: AugmentedClassifier, x) -> AugmentedVerdict:
    """Intersect the base prediction with every group label set.

    flagged=True (empty intersection) signals an inconsistency that needs an
    oracle or a human; it is never auto-resolved here.
    """
    base = ac.base_label(x)
    values, sets = [], []
    for i, (extractor, gmap) in enumerate(ac.extractors):
        try:
            value = extractor.extract(x)
        except Exception as exc:
            return AugmentedVerdict(
                label_set=frozenset(),
                flagged=True,
                base_label=base,
                group_values=values,
                group_sets=sets,
                error=f"extractor {i} failed: {exc}",
            )
        values.append(value)
        sets.append(gmap.labels_for(value))
    label_set = frozenset({base})
    for s in sets:
        label_set &= s
    return AugmentedVerdict(
        label_set=label_set,
        flagged=not label_set,
        base_label=base,
        group_values=values,
        group_sets=sets,
    )


def correction_rate(ac: AugmentedClassifier, adversarial_examples) -> float:
    """Fraction of adversarial examples whose extracted group feature still
    matches the original, i.e. cross-group attacks that get caught.

    adversarial_examples: iterable of (image, original_group_value) pairs
    produced by a targeted attack toward a class outside the original group.
    """
    pairs = list(adversarial_examples)
    if not pairs:
        raise ValueError("correction_rate needs at least one adversarial example")
    extractor = ac.extractors[0][0]
    caught = sum(1 for img, original in pairs if extractor.extract(img) == original)
    return caught / len(pairs)
