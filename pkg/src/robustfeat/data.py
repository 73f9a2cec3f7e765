"""Dataset ingestion and synthetic fixtures.

Covers the MNIST IDX format, binary portable pixmaps (P5/P6), the pixel-mass
statistic, a synthetic traffic-sign generator, and a synthetic digit
generator used as a desk-scale stand-in when the real MNIST files are not on
disk. All pixels are float64 in [0, 1]; attack budgets quoted in 0-255 units
are converted at the boundary (eps=8 -> 8/255).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801

SIGN_SHAPES = ("octagon", "circle", "triangle", "square", "diamond")


@dataclass
class Image:
    """A single image: (H, W) grayscale or (H, W, 3) RGB, values in [0, 1]."""

    pixels: np.ndarray

    def __post_init__(self) -> None:
        self.pixels = np.asarray(self.pixels, dtype=np.float64)
        if self.pixels.ndim == 3 and self.pixels.shape[2] == 1:
            self.pixels = self.pixels[:, :, 0]
        if self.pixels.ndim not in (2, 3):
            raise ValueError(f"image must be 2-d or 3-d, got shape {self.pixels.shape}")
        if self.pixels.ndim == 3 and self.pixels.shape[2] != 3:
            raise ValueError("color images must have exactly 3 channels")
        lo, hi = float(self.pixels.min()), float(self.pixels.max())
        if not (np.isfinite(lo) and np.isfinite(hi) and lo >= 0.0 and hi <= 1.0):
            raise ValueError(f"pixel values must lie in [0, 1], got [{lo}, {hi}]")

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return 1 if self.pixels.ndim == 2 else 3

    def flat(self) -> np.ndarray:
        return self.pixels.reshape(-1)


@dataclass
class Dataset:
    """Stacked images with integer labels in [0, num_classes)."""

    images: np.ndarray  # (N, H, W) or (N, H, W, 3)
    labels: np.ndarray  # (N,)
    num_classes: int
    class_names: list[str] | None = field(default=None)

    def __post_init__(self) -> None:
        self.images = np.asarray(self.images, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.images.shape[0] != self.labels.shape[0]:
            raise DataError(
                f"{self.images.shape[0]} images but {self.labels.shape[0]} labels"
            )
        if self.images.size:
            lo, hi = float(self.images.min()), float(self.images.max())
            if lo < 0.0 or hi > 1.0:
                raise DataError(f"pixels outside [0, 1]: [{lo}, {hi}]")
        if self.labels.size and (
            self.labels.min() < 0 or self.labels.max() >= self.num_classes
        ):
            raise DataError("labels outside [0, num_classes)")
        if self.class_names is not None and len(self.class_names) != self.num_classes:
            raise DataError("class_names length does not match num_classes")

    def __len__(self) -> int:
        return int(self.images.shape[0])

    def image(self, i: int) -> Image:
        return Image(self.images[i])

    def subset(self, indices) -> "Dataset":
        idx = np.asarray(indices)
        return Dataset(
            self.images[idx], self.labels[idx], self.num_classes, self.class_names
        )


# ---------------------------------------------------------------------------
# MNIST IDX
# ---------------------------------------------------------------------------


def _read_exact(f, n: int, what: str) -> bytes:
    buf = f.read(n)
    if len(buf) != n:
        raise DataError(f"truncated IDX file while reading {what}")
    return buf


def load_mnist_idx(image_path, label_path) -> Dataset:
    """Parse the big-endian IDX pair (images + labels); pixels become byte/255."""
    with open(image_path, "rb") as f:
        magic, count, rows, cols = struct.unpack(">IIII", _read_exact(f, 16, "image header"))
        if magic != IDX_IMAGE_MAGIC:
            raise DataError(f"bad image magic 0x{magic:08x} in {image_path}")
        raw = _read_exact(f, count * rows * cols, "image pixels")
    with open(label_path, "rb") as f:
        magic, label_count = struct.unpack(">II", _read_exact(f, 8, "label header"))
        if magic != IDX_LABEL_MAGIC:
            raise DataError(f"bad label magic 0x{magic:08x} in {label_path}")
        if label_count != count:
            raise DataError(
                f"count mismatch: {count} images but {label_count} labels"
            )
        labels = np.frombuffer(_read_exact(f, label_count, "labels"), dtype=np.uint8)
    pixels = np.frombuffer(raw, dtype=np.uint8).astype(np.float64) / 255.0
    images = pixels.reshape(count, rows, cols)
    return Dataset(images, labels.astype(np.int64), num_classes=10,
                   class_names=[str(d) for d in range(10)])


def save_mnist_idx(ds: Dataset, image_path, label_path) -> None:
    """Re-encode a dataset as an IDX pair (8-bit quantized)."""
    if ds.images.ndim != 3:
        raise DataError("IDX export expects grayscale images")
    n, rows, cols = ds.images.shape
    quantized = np.rint(ds.images * 255.0).astype(np.uint8)
    with open(image_path, "wb") as f:
        f.write(struct.pack(">IIII", IDX_IMAGE_MAGIC, n, rows, cols))
        f.write(quantized.tobytes())
    with open(label_path, "wb") as f:
        f.write(struct.pack(">II", IDX_LABEL_MAGIC, n))
        f.write(ds.labels.astype(np.uint8).tobytes())


def find_mnist(data_dir) -> dict[str, tuple[Path, Path]] | None:
    """Locate the four standard MNIST files under data_dir, if present."""
    d = Path(data_dir)
    splits = {}
    for split, img_name, lbl_name in (
        ("train", "train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
        ("test", "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
    ):
        img, lbl = d / img_name, d / lbl_name
        if not (img.exists() and lbl.exists()):
            return None
        splits[split] = (img, lbl)
    return splits


# ---------------------------------------------------------------------------
# Pixel-mass statistic
# ---------------------------------------------------------------------------


def pixel_mass_stats(ds: Dataset, low_cut: float, high_cut: float) -> tuple[float, float, float]:
    """Fractions of all pixels in [0, low_cut], (low_cut, high_cut), [high_cut, 1]."""
    if not 0.0 <= low_cut < high_cut <= 1.0:
        raise ValueError(f"need 0 <= low_cut < high_cut <= 1, got ({low_cut}, {high_cut})")
    if len(ds) == 0:
        raise DataError("pixel_mass_stats needs a non-empty dataset")
    p = ds.images.reshape(-1)
    total = p.size
    n_low = int(np.count_nonzero(p <= low_cut))
    n_high = int(np.count_nonzero(p >= high_cut))
    n_mid = total - n_low - n_high
    return n_low / total, n_mid / total, n_high / total


# ---------------------------------------------------------------------------
# Portable pixmaps (binary P5 / P6, maxval 255)
# ---------------------------------------------------------------------------


def save_image(img: Image, path) -> None:
    quantized = np.rint(img.pixels * 255.0).astype(np.uint8)
    kind = b"P6" if img.channels == 3 else b"P5"
    with open(path, "wb") as f:
        f.write(kind + b"\n%d %d\n255\n" % (img.width, img.height))
        f.write(quantized.tobytes())


def _next_token(data: bytes, pos: int) -> tuple[bytes, int]:
    n = len(data)
    while pos < n:
        if data[pos : pos + 1].isspace():
            pos += 1
        elif data[pos : pos + 1] == b"#":  # comment to end of line
            while pos < n and data[pos : pos + 1] != b"\n":
                pos += 1
        else:
            break
    start = pos
    while pos < n and not data[pos : pos + 1].isspace():
        pos += 1
    if start == pos:
        raise DataError("truncated pixmap header")
    return data[start:pos], pos


def load_image(path) -> Image:
    with open(path, "rb") as f:
        data = f.read()
    if data[:2] not in (b"P5", b"P6"):
        raise DataError(f"not a binary pixmap (P5/P6): {path}")
    channels = 3 if data[:2] == b"P6" else 1
    pos = 2
    fields = []
    for _ in range(3):
        tok, pos = _next_token(data, pos)
        if not tok.isdigit():
            raise DataError(f"malformed pixmap header token {tok!r} in {path}")
        fields.append(int(tok))
    width, height, maxval = fields
    if maxval != 255:
        raise DataError(f"only maxval 255 supported, got {maxval}")
    pos += 1  # single whitespace byte after maxval
    need = width * height * channels
    raw = data[pos : pos + need]
    if len(raw) != need:
        raise DataError(f"truncated pixmap payload in {path}")
    arr = np.frombuffer(raw, dtype=np.uint8).astype(np.float64) / 255.0
    shape = (height, width) if channels == 1 else (height, width, 3)
    return Image(arr.reshape(shape))


def load_image_dir(root) -> Dataset:
    """Ingest <root>/<class_name>/*.p?m as a labeled dataset (sorted classes)."""
    root = Path(root)
    if not root.is_dir():
        raise DataError(f"not a directory: {root}")
    class_dirs = sorted(p for p in root.iterdir() if p.is_dir())
    if not class_dirs:
        raise DataError(f"no class subdirectories under {root}")
    names = [p.name for p in class_dirs]
    images, labels = [], []
    for label, cdir in enumerate(class_dirs):
        for f in sorted(cdir.glob("*.p[gp]m")):
            images.append(load_image(f).pixels)
            labels.append(label)
    if not images:
        raise DataError(f"no .pgm/.ppm files under {root}")
    shapes = {im.shape for im in images}
    if len(shapes) != 1:
        raise DataError(f"mixed image shapes {shapes}")
    return Dataset(np.stack(images), np.array(labels), len(names), names)


# ---------------------------------------------------------------------------
# Synthetic traffic signs
# ---------------------------------------------------------------------------


def _shape_mask(shape: str, size: int) -> np.ndarray:
    """Boolean mask of pixels whose centers fall inside the sign polygon.

    Geometry is sized so the sign covers at least 30% of the image.
    """
    c = (size - 1) / 2.0
    yy, xx = np.mgrid[0:size, 0:size]
    u = (xx - c) / size  # centered, roughly [-0.5, 0.5]
    v = (yy - c) / size
    if shape == "circle":
        return u * u + v * v <= 0.40**2
    if shape == "square":
        return (np.abs(u) <= 0.375) & (np.abs(v) <= 0.375)
    if shape == "diamond":
        return np.abs(u) + np.abs(v) <= 0.48
    if shape == "octagon":
        # regular octagon: |u|,|v| and the two diagonals bounded
        a = 0.44
        return (
            (np.abs(u) <= a)
            & (np.abs(v) <= a)
            & (np.abs(u) + np.abs(v) <= a * (1 + 1 / np.sqrt(2.0)))
        )
    if shape == "triangle":
        # upward equilateral-ish triangle spanning most of the frame
        top, bottom, half = -0.42, 0.38, 0.47
        inside = (v >= top) & (v <= bottom)
        frac = (v - top) / (bottom - top)
        return inside & (np.abs(u) <= half * frac)
    raise ValueError(f"unknown sign shape {shape!r}")


def _glyph_mask(glyph: str | None, size: int) -> np.ndarray:
    """Small central marking distinguishing sign classes; drawn in white."""
    if glyph is None or glyph == "none":
        return np.zeros((size, size), dtype=bool)
    c = (size - 1) / 2.0
    yy, xx = np.mgrid[0:size, 0:size]
    u = (xx - c) / size
    v = (yy - c) / size
    w, r = 0.06, 0.22
    if glyph == "hbar":
        return (np.abs(v) <= w) & (np.abs(u) <= r)
    if glyph == "vbar":
        return (np.abs(u) <= w) & (np.abs(v) <= r)
    if glyph == "slash":
        return (np.abs(u + v) <= w * 1.4) & (np.abs(u) <= r) & (np.abs(v) <= r)
    if glyph == "backslash":
        return (np.abs(u - v) <= w * 1.4) & (np.abs(u) <= r) & (np.abs(v) <= r)
    if glyph == "cross":
        return ((np.abs(v) <= w) | (np.abs(u) <= w)) & (np.abs(u) <= r) & (np.abs(v) <= r)
    if glyph == "dot":
        return u * u + v * v <= 0.11**2
    if glyph == "ring":
        rr = np.sqrt(u * u + v * v)
        return (rr >= 0.14) & (rr <= 0.22)
    raise ValueError(f"unknown glyph {glyph!r}")


def synth_sign(
    shape: str,
    fill_color,
    background,
    size: int,
    noise_amplitude: float,
    seed: int,
    glyph: str | None = None,
) -> Image:
    """Render a centered sign polygon on a flat background, plus uniform noise."""
    if size < 16:
        raise ValueError(f"size {size} too small to render a sign (need >= 16)")
    if shape not in SIGN_SHAPES:
        raise ValueError(f"unknown sign shape {shape!r}")
    if not 0.0 <= noise_amplitude <= 0.1:
        raise ValueError("noise_amplitude must lie in [0, 0.1]")
    fill = np.asarray(fill_color, dtype=np.float64)
    bg = np.asarray(background, dtype=np.float64)
    if fill.shape != (3,) or bg.shape != (3,):
        raise ValueError("colors must be rgb triples")
    if fill.min() < 0 or fill.max() > 1 or bg.min() < 0 or bg.max() > 1:
        raise ValueError("colors must lie in [0, 1]^3")

    img = np.empty((size, size, 3), dtype=np.float64)
    img[:] = bg
    mask = _shape_mask(shape, size)
    img[mask] = fill
    gmask = _glyph_mask(glyph, size) & mask
    img[gmask] = 1.0  # white marking

    if noise_amplitude > 0:
        rng = np.random.default_rng(seed)
        img = img + rng.uniform(-noise_amplitude, noise_amplitude, img.shape)
    return Image(np.clip(img, 0.0, 1.0))


# Desk-scale sign classes: (name, shape, base rgb fill, glyph). Red and blue
# groupings follow the standard US/German split; yellow warning signs are a
# single superclass.
SIGN_CLASSES: list[tuple[str, str, tuple[float, float, float], str | None]] = [
    ("stop", "octagon", (0.80, 0.05, 0.10), None),
    ("doNotEnter", "circle", (0.80, 0.05, 0.10), "hbar"),
    ("mandatoryRightTurn", "circle", (0.05, 0.15, 0.75), "slash"),
    ("mandatoryLeftTurn", "circle", (0.05, 0.15, 0.75), "backslash"),
    ("mandatoryAhead", "circle", (0.05, 0.15, 0.75), "vbar"),
    ("mandatoryAheadOrRight", "circle", (0.05, 0.15, 0.75), "cross"),
    ("mandatoryAheadOrLeft", "circle", (0.05, 0.15, 0.75), "dot"),
    ("keepRight", "circle", (0.05, 0.15, 0.75), "hbar"),
    ("keepLeft", "circle", (0.05, 0.15, 0.75), "ring"),
    ("trafficCircle", "circle", (0.05, 0.15, 0.75), None),
    ("yellowSigns", "diamond", (0.95, 0.80, 0.05), None),
]

SIGN_CLASS_NAMES = [name for name, _, _, _ in SIGN_CLASSES]


def synth_sign_dataset(
    n_per_class: int,
    seed: int,
    size: int = 24,
    noise_amplitude: float = 0.02,
    color_jitter: float = 0.12,
) -> Dataset:
    """Randomized sign dataset over SIGN_CLASSES, deterministic per seed.

    Fill/background colors are jittered per sample so the downstream
    classifier has to work with realistic intra-class variation.
    """
    rng = np.random.default_rng(seed)
    images, labels = [], []
    for label, (_, shape, base_fill, glyph) in enumerate(SIGN_CLASSES):
        for i in range(n_per_class):
            fill = np.clip(
                np.asarray(base_fill) + rng.uniform(-color_jitter, color_jitter, 3),
                0.0,
                1.0,
            )
            gray = rng.uniform(0.35, 0.65)
            bg = np.clip(gray + rng.uniform(-0.05, 0.05, 3), 0.0, 1.0)
            img = synth_sign(
                shape,
                fill,
                bg,
                size,
                noise_amplitude,
                seed=int(rng.integers(2**31)),
                glyph=glyph,
            )
            images.append(img.pixels)
            labels.append(label)
    order = rng.permutation(len(images))
    return Dataset(
        np.stack(images)[order],
        np.array(labels)[order],
        len(SIGN_CLASSES),
        SIGN_CLASS_NAMES,
    )


# ---------------------------------------------------------------------------
# Synthetic digits (MNIST stand-in when the real files are absent)
# ---------------------------------------------------------------------------

# Stroke skeletons on a [0,1]^2 canvas, seven-segment style with a diagonal 7.
_D = {
    "tl": ((0.25, 0.2), (0.25, 0.5)),
    "tr": ((0.75, 0.2), (0.75, 0.5)),
    "bl": ((0.25, 0.5), (0.25, 0.8)),
    "br": ((0.75, 0.5), (0.75, 0.8)),
    "top": ((0.25, 0.2), (0.75, 0.2)),
    "mid": ((0.25, 0.5), (0.75, 0.5)),
    "bot": ((0.25, 0.8), (0.75, 0.8)),
    "diag7": ((0.75, 0.2), (0.40, 0.8)),
    "stem1": ((0.55, 0.2), (0.55, 0.8)),
    "serif1": ((0.40, 0.32), (0.55, 0.2)),
}

_DIGIT_SEGMENTS = {
    0: ("top", "tl", "tr", "bl", "br", "bot"),
    1: ("stem1", "serif1"),
    2: ("top", "tr", "mid", "bl", "bot"),
    3: ("top", "tr", "mid", "br", "bot"),
    4: ("tl", "mid", "tr", "br"),
    5: ("top", "tl", "mid", "br", "bot"),
    6: ("top", "tl", "mid", "bl", "br", "bot"),
    7: ("top", "diag7"),
    8: ("top", "tl", "tr", "mid", "bl", "br", "bot"),
    9: ("top", "tl", "tr", "mid", "br", "bot"),
}


def _render_strokes(segments, size: int, rng: np.random.Generator) -> np.ndarray:
    """Draw jittered stroke segments with saturating soft edges."""
    theta = rng.uniform(-0.18, 0.18)
    scale = rng.uniform(0.85, 1.1)
    shift = rng.uniform(-0.06, 0.06, size=2)
    halfwidth = rng.uniform(0.035, 0.06)
    rot = np.array(
        [[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]]
    )

    def tf(p):
        q = (np.asarray(p) - 0.5) * scale
        return rot @ q + 0.5 + shift

    grid = (np.stack(np.mgrid[0:size, 0:size], axis=-1) + 0.5) / size
    pts = grid[..., ::-1]  # (y, x) -> (x, y)
    dist = np.full((size, size), np.inf)
    for name in segments:
        a, b = (tf(p) for p in _D[name])
        ab = b - a
        denom = float(ab @ ab)
        t = np.clip(((pts - a) @ ab) / denom, 0.0, 1.0)
        proj = a + t[..., None] * ab
        d = np.linalg.norm(pts - proj, axis=-1)
        dist = np.minimum(dist, d)
    softness = 0.03
    return np.clip((halfwidth - dist) / softness + 1.0, 0.0, 1.0)


def synth_digits(n: int, seed: int, size: int = 28) -> Dataset:
    """Deterministic MNIST-like dataset: jittered stroke digits on black."""
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, 10, size=n)
    images = np.empty((n, size, size), dtype=np.float64)
    for i, y in enumerate(labels):
        img = _render_strokes(_DIGIT_SEGMENTS[int(y)], size, rng)
        images[i] = np.rint(img * 255.0) / 255.0  # match 8-bit storage
    return Dataset(images, labels, 10, [str(d) for d in range(10)])
