"""Group feature extraction: dominant sign color.

The extractor localizes the sign surface via chromaticity/color maps, then
classifies the dominant color by a weighted hue vote against predefined
color centers, and maps the color to the set of class labels consistent with
it. Also includes the channel-shift robustness verifier that probes all
uniform per-channel shift combinations at a given budget.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import Image
from .errors import DataError

COLOR_NAMES = ("Red", "Yellow", "Blue")

_LOCALIZE_BOX = 10  # centered scoring box, in pixels
_LOCALIZE_MIN_FRACTION = 0.10
_ACHROMATIC_SATURATION = 0.05  # below this, a pixel abstains from voting


class ExtractionError(DataError):
    """Color extraction failed (e.g. no chromatic pixels under the mask)."""


@dataclass(frozen=True)
class HueCenters:
    """Hue angles (degrees) of the three color centers."""

    red: float = 0.0
    yellow: float = 60.0
    blue: float = 240.0

    def __post_init__(self) -> None:
        angles = [self.red % 360, self.yellow % 360, self.blue % 360]
        if len(set(angles)) != 3:
            raise ValueError("hue centers must be pairwise distinct")

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.red, self.yellow, self.blue)


DEFAULT_CENTERS = HueCenters()

# Default desk-scale grouping: red regulatory signs, the blue
# mandatory/keep/circle family, and the yellow-warning superclass. White sign
# labels can be added to every color group via a custom map so that
# hue-undefined signs are never falsely flagged.
DEFAULT_GROUP_MAP_TABLE: dict[str, frozenset[str]] = {
    "Red": frozenset({"stop", "doNotEnter"}),
    "Blue": frozenset(
        {
            "mandatoryRightTurn",
            "mandatoryLeftTurn",
            "mandatoryAhead",
            "mandatoryAheadOrRight",
            "mandatoryAheadOrLeft",
            "keepRight",
            "keepLeft",
            "trafficCircle",
        }
    ),
    "Yellow": frozenset({"yellowSigns"}),
}


@dataclass(frozen=True)
class GroupLabelMap:
    """color name -> set of class labels consistent with that color."""

    table: dict = field(default_factory=lambda: dict(DEFAULT_GROUP_MAP_TABLE))

    def labels_for(self, color: str) -> frozenset:
        return frozenset(self.table.get(color, frozenset()))


@dataclass
class ColorMaps:
    """Chromaticity map plus the four color maps, same spatial shape."""

    chroma: np.ndarray
    red: np.ndarray
    green: np.ndarray
    blue: np.ndarray
    yellow: np.ndarray

    def color_items(self):
        # fixed order doubles as the localization tie-break order
        return (("R", self.red), ("G", self.green), ("B", self.blue), ("Y", self.yellow))


@dataclass
class SignMask:
    mask: np.ndarray  # boolean, True = sign pixel

    def __post_init__(self) -> None:
        self.mask = np.asarray(self.mask).astype(bool)

    @property
    def count(self) -> int:
        return int(self.mask.sum())


def _rgb(img) -> np.ndarray:
    pixels = img.pixels if isinstance(img, Image) else np.asarray(img, dtype=np.float64)
    if pixels.ndim != 3 or pixels.shape[2] != 3:
        raise ValueError("expected a 3-channel color image")
    return pixels


def normalize_channels(img) -> np.ndarray:
    """Per-pixel intensity normalization: (r,g,b) / (r+g+b), black stays 0."""
    pixels = _rgb(img)
    total = pixels.sum(axis=2, keepdims=True)
    safe = np.where(total > 1e-9, total, 1.0)
    return np.where(total > 1e-9, pixels / safe, 0.0)


def color_maps(normalized: np.ndarray) -> ColorMaps:
    r, g, b = normalized[:, :, 0], normalized[:, :, 1], normalized[:, :, 2]
    return ColorMaps(
        chroma=normalized.max(axis=2) - normalized.min(axis=2),
        red=r - (g + b) / 2.0,
        green=g - (r + b) / 2.0,
        blue=b - (r + g) / 2.0,
        yellow=(r + g) / 2.0 - np.abs(r - g) / 2.0 + b,
    )


def binarize_map(m: np.ndarray) -> np.ndarray:
    """Threshold a map at the mean of its strictly-positive values.

    Negative entries are clamped to zero first; an all-zero map stays zero.
    """
    clamped = np.maximum(np.asarray(m, dtype=np.float64), 0.0)
    positive = clamped[clamped > 0]
    if positive.size == 0:
        return np.zeros_like(clamped, dtype=bool)
    # the 1e-12 slack keeps exact ties at 1 when the mean of identical values
    # rounds up by an ulp (flat synthetic maps hit this)
    return clamped >= positive.mean() - 1e-12


def _center_box(m: np.ndarray) -> np.ndarray:
    h, w = m.shape
    r0 = (h - _LOCALIZE_BOX) // 2
    c0 = (w - _LOCALIZE_BOX) // 2
    return m[r0 : r0 + _LOCALIZE_BOX, c0 : c0 + _LOCALIZE_BOX]


def localize_sign(img) -> SignMask:
    """Find the sign-surface pixels.

    Each color map is binarized, masked by the binarized chromaticity map,
    and scored by its hit count inside the centered box. If no color reaches
    the minimum box fraction the inverted chromaticity mask is returned
    (achromatic sign assumption); otherwise the best-scoring color mask wins.
    """
    pixels = _rgb(img)
    if min(pixels.shape[0], pixels.shape[1]) < 16:
        raise ValueError("image too small to localize (need min side >= 16)")
    maps = color_maps(normalize_channels(pixels))
    chroma_bin = binarize_map(maps.chroma)
    best_name, best_mask, best_score = None, None, -1
    for name, m in maps.color_items():
        masked = binarize_map(m) & chroma_bin
        score = int(_center_box(masked).sum())
        if score > best_score:  # strict: earlier names win ties
            best_name, best_mask, best_score = name, masked, score
    if best_score < _LOCALIZE_MIN_FRACTION * _LOCALIZE_BOX**2:
        return SignMask(~chroma_bin)
    return SignMask(best_mask)


def _hue_saturation(pixels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Standard hexagonal hue (degrees) and HSV saturation, vectorized."""
    r, g, b = pixels[..., 0], pixels[..., 1], pixels[..., 2]
    mx = pixels.max(axis=-1)
    mn = pixels.min(axis=-1)
    delta = mx - mn
    safe_delta = np.where(delta > 0, delta, 1.0)
    hue = np.zeros_like(mx)
    is_r = (mx == r) & (delta > 0)
    is_g = (mx == g) & (delta > 0) & ~is_r
    is_b = (delta > 0) & ~is_r & ~is_g
    hue[is_r] = 60.0 * (((g - b) / safe_delta)[is_r] % 6.0)
    hue[is_g] = 60.0 * (((b - r) / safe_delta)[is_g] + 2.0)
    hue[is_b] = 60.0 * (((r - g) / safe_delta)[is_b] + 4.0)
    saturation = np.where(mx > 0, delta / np.where(mx > 0, mx, 1.0), 0.0)
    return hue, saturation


def circular_hue_distance(h1, h2) -> np.ndarray:
    d = np.abs(np.asarray(h1) - np.asarray(h2)) % 360.0
    return np.minimum(d, 360.0 - d)


def color_votes(img, mask: SignMask, centers: HueCenters = DEFAULT_CENTERS) -> dict[str, float]:
    """Weighted vote totals per color over the masked chromatic pixels."""
    pixels = _rgb(img)
    if mask.mask.shape != pixels.shape[:2]:
        raise ValueError("mask shape does not match image")
    if not mask.mask.any():
        raise ValueError("mask must not be all-zero")
    sel = pixels[mask.mask]
    hue, sat = _hue_saturation(sel)
    chromatic = sat >= _ACHROMATIC_SATURATION
    if not chromatic.any():
        raise ExtractionError("no chromatic pixels under the mask")
    hue = hue[chromatic]
    dists = np.stack(
        [circular_hue_distance(hue, c) for c in centers.as_tuple()], axis=1
    )
    nearest = np.argmin(dists, axis=1)
    weights = 1.0 - dists[np.arange(len(hue)), nearest] / 180.0
    totals = {name: 0.0 for name in COLOR_NAMES}
    for idx, name in enumerate(COLOR_NAMES):
        totals[name] = float(weights[nearest == idx].sum())
    return totals


def classify_color(img, mask: SignMask, centers: HueCenters = DEFAULT_CENTERS) -> str:
    """Winner of the weighted hue vote; ties break Red < Yellow < Blue."""
    totals = color_votes(img, mask, centers)
    return max(COLOR_NAMES, key=lambda name: (totals[name], -COLOR_NAMES.index(name)))


def extract(img, centers: HueCenters = DEFAULT_CENTERS) -> str:
    """Full pipeline: localize the sign, then classify its dominant color."""
    return classify_color(img, localize_sign(img), centers)


def group_labels(color: str, gmap: GroupLabelMap) -> frozenset:
    if color not in COLOR_NAMES:
        raise ValueError(f"unknown color {color!r}")
    return gmap.labels_for(color)


@dataclass(frozen=True)
class ColorExtractor:
    """extract() wrapper carrying its hue centers; usable as a pipeline
    group-feature extractor."""

    centers: HueCenters = DEFAULT_CENTERS

    def extract(self, img) -> str:
        return extract(img, self.centers)


@dataclass
class RobustnessVerdict:
    robust: bool
    baseline_color: str
    eps: float
    # (channel shift triple, outcome) for every variant that disagreed
    failures: list[tuple[tuple[float, float, float], str]] = field(default_factory=list)


def channel_shift_variants(eps: float):
    """The 26 uniform per-channel shifts with offsets in {-eps, 0, +eps}."""
    offsets = (-eps, 0.0, +eps)
    for dr in offsets:
        for dg in offsets:
            for db in offsets:
                if dr == dg == db == 0.0:
                    continue
                yield (dr, dg, db)


def verify_color_robustness(
    img, eps: float, centers: HueCenters = DEFAULT_CENTERS
) -> RobustnessVerdict:
    """Probe all 26 channel-shift corners at the given budget.

    This checks the uniform-shift corners only, not the full perturbation
    ball. An extraction error on a variant counts as not-robust.
    """
    if not 0.0 <= eps <= 1.0:
        raise ValueError("eps must lie in [0, 1] pixel units")
    pixels = _rgb(img)
    baseline = extract(Image(pixels), centers)
    failures = []
    for shift in channel_shift_variants(eps):
        shifted = np.clip(pixels + np.asarray(shift).reshape(1, 1, 3), 0.0, 1.0)
        try:
            outcome = extract(Image(shifted), centers)
        except ExtractionError as exc:
            failures.append((shift, f"error: {exc}"))
            continue
        if outcome != baseline:
            failures.append((shift, outcome))
    return RobustnessVerdict(
        robust=not failures, baseline_color=baseline, eps=eps, failures=failures
    )
