"""Image ingestion, deterministic splits and batches, synthetic defect images.

On-disk layout is ``root/<class_name>/*.pgm`` with binary 8-bit PGM (P5).
Classes are numbered by lexicographic order of their directory names.
Pixels are mapped ``p -> p / 127.5 - 1`` into ``[-1, 1]``.

Resizing is bilinear with corner-aligned sampling: output row ``i`` of
``out_h`` samples source row ``y = i * (H - 1) / (out_h - 1)`` (``0`` when
``out_h == 1``), likewise for columns, and the value is::

    (1-wy)(1-wx) I[y0,x0] + (1-wy) wx I[y0,x1] + wy (1-wx) I[y1,x0] + wy wx I[y1,x1]

with ``y0 = floor(y)``, ``y1 = min(y0 + 1, H - 1)``, ``wy = y - y0``.
Resizing happens on raw 0..255 values, before the affine map.

NEU and Severstal ship as BMP/JPG/PNG; convert them first, e.g. with
ImageMagick: ``mogrify -format pgm -colorspace gray -depth 8 */*.bmp``.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

NEU_CLASSES = ("Crack", "Inclusion", "Patch", "Pitted_Surface", "Rolled-in_Scale", "Scratches")


class MalformedPGMError(ValueError):
    pass


@dataclass
class LabeledImage:
    pixels: np.ndarray  # [c, H, W] in [-1, 1]
    label: int
    source_id: str


@dataclass
class DatasetSplit:
    train: list[LabeledImage]
    val: list[LabeledImage]
    test: list[LabeledImage]
    class_names: list[str] = field(default_factory=list)


# -- PGM ---------------------------------------------------------------------

_TOKEN = re.compile(rb"(?:\s|#[^\n]*\n?)*([^\s#]+)")


def decode_pgm(raw: bytes, name: str = "<bytes>") -> np.ndarray:
    """Decode a binary P5 PGM with maxval 255 into a uint8 ``[H, W]`` array."""
    pos = 0
    tokens = []
    for _ in range(4):
        m = _TOKEN.match(raw, pos)
        if m is None:
            raise MalformedPGMError(f"{name}: truncated header")
        tokens.append(m.group(1))
        pos = m.end()
    magic, w, h, maxval = tokens
    if magic != b"P5":
        raise MalformedPGMError(f"{name}: bad magic {magic[:8]!r}, expected b'P5'")
    try:
        width, height, depth = int(w), int(h), int(maxval)
    except ValueError:
        raise MalformedPGMError(f"{name}: non-integer header field") from None
    if depth != 255:
        raise MalformedPGMError(f"{name}: maxval {depth} unsupported, expected 255")
    if width < 1 or height < 1:
        raise MalformedPGMError(f"{name}: invalid size {width}x{height}")
    if pos >= len(raw) or not raw[pos : pos + 1].isspace():
        raise MalformedPGMError(f"{name}: missing whitespace after header")
    pos += 1
    body = raw[pos : pos + width * height]
    if len(body) != width * height:
        raise MalformedPGMError(f"{name}: expected {width * height} pixel bytes, got {len(body)}")
    return np.frombuffer(body, dtype=np.uint8).reshape(height, width).copy()


def encode_pgm(pixels: np.ndarray) -> bytes:
    pixels = np.asarray(pixels)
    if pixels.ndim != 2 or pixels.dtype != np.uint8:
        raise ValueError(f"encode_pgm needs a 2-D uint8 array, got {pixels.dtype} {pixels.shape}")
    h, w = pixels.shape
    return b"P5\n%d %d\n255\n" % (w, h) + pixels.tobytes()


def read_pgm(path) -> np.ndarray:
    path = Path(path)
    return decode_pgm(path.read_bytes(), str(path))


def write_pgm(path, pixels: np.ndarray) -> None:
    Path(path).write_bytes(encode_pgm(pixels))


# -- preprocessing -----------------------------------------------------------

def resize_bilinear(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    H, W = img.shape

    def coords(n_in, n_out):
        if n_out == 1:
            pos = np.zeros(1)
        else:
            pos = np.arange(n_out) * (n_in - 1) / (n_out - 1)
        lo = np.floor(pos).astype(np.int64)
        lo = np.minimum(lo, n_in - 1)
        hi = np.minimum(lo + 1, n_in - 1)
        return lo, hi, pos - lo

    y0, y1, wy = coords(H, out_h)
    x0, x1, wx = coords(W, out_w)
    wy = wy[:, None]
    wx = wx[None, :]
    return (
        (1 - wy) * (1 - wx) * img[np.ix_(y0, x0)]
        + (1 - wy) * wx * img[np.ix_(y0, x1)]
        + wy * (1 - wx) * img[np.ix_(y1, x0)]
        + wy * wx * img[np.ix_(y1, x1)]
    )


def to_unit_range(raw: np.ndarray) -> np.ndarray:
    return np.asarray(raw, dtype=np.float64) / 127.5 - 1.0


def to_bytes(pixels: np.ndarray) -> np.ndarray:
    return np.clip(np.rint((np.asarray(pixels) + 1.0) * 127.5), 0, 255).astype(np.uint8)


def preprocess(raw: np.ndarray, resize: Sequence[int] | None, channels: int) -> np.ndarray:
    img = np.asarray(raw, dtype=np.float64)
    if resize is not None and tuple(resize) != img.shape:
        img = resize_bilinear(img, int(resize[0]), int(resize[1]))
    img = to_unit_range(img)
    return np.repeat(img[None], channels, axis=0)


def load_image_folder(root, resize: Sequence[int] | None = None, channels: int = 1) -> tuple[list[LabeledImage], list[str]]:
    """Load ``root/<class>/*.pgm``; returns the images and the ordered class names."""
    root = Path(root)
    if not root.is_dir():
        raise FileNotFoundError(f"data directory not found: {root}")
    class_dirs = sorted((p for p in root.iterdir() if p.is_dir()), key=lambda p: p.name)
    if not class_dirs:
        raise ValueError(f"{root}: no class subdirectories")
    images = []
    for label, d in enumerate(class_dirs):
        files = sorted(d.glob("*.pgm"), key=lambda p: p.name)
        if not files:
            raise ValueError(f"{d}: class directory holds no .pgm files")
        for f in files:
            px = preprocess(read_pgm(f), resize, channels)
            images.append(LabeledImage(px, label, f"{d.name}/{f.name}"))
    return images, [d.name for d in class_dirs]


def write_image_folder(images: Sequence[LabeledImage], root, class_names: Sequence[str]) -> None:
    """Write images as 8-bit PGMs (first channel) under ``root/<class_name>/``."""
    root = Path(root)
    for name in class_names:
        (root / name).mkdir(parents=True, exist_ok=True)
    for img in images:
        write_pgm(root / img.source_id, to_bytes(img.pixels[0]))


# -- splits and batches ------------------------------------------------------

def stratified_split(
    images: Sequence[LabeledImage],
    fractions: Sequence[float] = (0.8, 0.1, 0.1),
    seed: int = 0,
    class_names: Sequence[str] | None = None,
    min_per_class: int = 10,
) -> DatasetSplit:
    if len(fractions) != 3 or min(fractions) < 0 or abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError(f"fractions must be three non-negative numbers summing to 1, got {fractions}")
    by_class: dict[int, list[LabeledImage]] = {}
    for img in images:
        by_class.setdefault(img.label, []).append(img)
    train, val, test = [], [], []
    for label in sorted(by_class):
        members = by_class[label]
        n = len(members)
        if n < min_per_class:
            raise ValueError(f"class {label} has {n} images; stratified_split needs at least {min_per_class}")
        order = np.random.default_rng([seed, label]).permutation(n)
        n_train = int(round(fractions[0] * n))
        n_val = int(round(fractions[1] * n))
        train += [members[i] for i in order[:n_train]]
        val += [members[i] for i in order[n_train : n_train + n_val]]
        test += [members[i] for i in order[n_train + n_val :]]
    names = list(class_names) if class_names is not None else [str(c) for c in sorted(by_class)]
    return DatasetSplit(train, val, test, names)


def write_split_manifest(split: DatasetSplit, path) -> None:
    manifest = {
        "class_names": list(split.class_names),
        "train": [im.source_id for im in split.train],
        "val": [im.source_id for im in split.val],
        "test": [im.source_id for im in split.test],
    }
    Path(path).write_text(json.dumps(manifest, indent=2) + "\n")


def apply_split_manifest(images: Sequence[LabeledImage], path) -> DatasetSplit:
    manifest = json.loads(Path(path).read_text())
    by_id = {im.source_id: im for im in images}
    try:
        parts = [[by_id[s] for s in manifest[k]] for k in ("train", "val", "test")]
    except KeyError as exc:
        raise ValueError(f"{path}: manifest names unknown image {exc}") from None
    return DatasetSplit(*parts, class_names=manifest["class_names"])


def stack(images: Sequence[LabeledImage]) -> tuple[np.ndarray, np.ndarray]:
    x = np.stack([im.pixels for im in images]) if images else np.zeros((0, 1, 1, 1))
    y = np.array([im.label for im in images], dtype=np.int64)
    return x, y


def batch_iter(
    images: Sequence[LabeledImage], batch_size: int, seed: int = 0, epoch: int = 0
) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    """Shuffle with a (seed, epoch)-derived generator and yield fixed-order batches."""
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    order = np.random.default_rng([seed, epoch]).permutation(len(images))
    for start in range(0, len(order), batch_size):
        yield stack([images[i] for i in order[start : start + batch_size]])


# -- synthetic defects -------------------------------------------------------

def _smooth_noise(rng, h, w, cells=6):
    coarse = rng.normal(0.0, 1.0, size=(cells, cells))
    return resize_bilinear(coarse, h, w)


def _segment_distance(yy, xx, p, q):
    d = q - p
    L2 = float(d @ d) or 1e-12
    t = np.clip(((yy - p[0]) * d[0] + (xx - p[1]) * d[1]) / L2, 0.0, 1.0)
    return np.hypot(yy - (p[0] + t * d[0]), xx - (p[1] + t * d[1]))


def _soft_mask(dist, width):
    # 1 inside, linear falloff over one pixel
    return np.clip(width + 0.5 - dist, 0.0, 1.0)


def _crack(rng, yy, xx, h, w):
    mask = np.zeros((h, w))
    step = max(h, w) / rng.uniform(7.0, 10.0)
    for _ in range(int(rng.integers(3, 5))):
        p = np.array([rng.uniform(0.1, 0.9) * h, rng.uniform(0.1, 0.9) * w])
        angle = rng.uniform(0, 2 * np.pi)
        width = rng.uniform(0.9, 1.4)
        for _ in range(int(rng.integers(8, 14))):
            angle += rng.normal(0.0, 0.5)
            q = p + step * np.array([np.sin(angle), np.cos(angle)])
            mask = np.maximum(mask, _soft_mask(_segment_distance(yy, xx, p, q), width))
            p = q
    return -mask


def _inclusion(rng, yy, xx, h, w):
    mask = np.zeros((h, w))
    s = min(h, w) / 64.0
    for _ in range(int(rng.integers(8, 14))):
        cy, cx = rng.uniform(0.05, 0.95) * h, rng.uniform(0.05, 0.95) * w
        a, b = rng.uniform(2.2, 3.8) * s, rng.uniform(2.2, 3.8) * s
        th = rng.uniform(0, np.pi)
        u = (yy - cy) * np.cos(th) + (xx - cx) * np.sin(th)
        v = -(yy - cy) * np.sin(th) + (xx - cx) * np.cos(th)
        r = np.sqrt((u / a) ** 2 + (v / b) ** 2)
        mask = np.maximum(mask, np.clip((1.0 - r) * 3.0, 0.0, 1.0))
    return mask


def _patch(rng, yy, xx, h, w):
    cy, cx = rng.uniform(0.25, 0.75) * h, rng.uniform(0.25, 0.75) * w
    field_ = np.zeros((h, w))
    for _ in range(int(rng.integers(3, 6))):
        oy, ox = cy + rng.normal(0, h / 10), cx + rng.normal(0, w / 10)
        sig = rng.uniform(0.08, 0.16) * min(h, w)
        field_ += np.exp(-((yy - oy) ** 2 + (xx - ox) ** 2) / (2 * sig**2))
    field_ += 0.25 * _smooth_noise(rng, h, w, 8)
    level = rng.uniform(0.5, 0.8)
    return np.clip((field_ - level) * 4.0, 0.0, 1.0)


def _pitted(rng, yy, xx, h, w):
    mask = np.zeros((h, w))
    s = min(h, w) / 64.0
    cy, cx = rng.uniform(0.3, 0.7) * h, rng.uniform(0.3, 0.7) * w
    spread = rng.uniform(0.2, 0.35) * min(h, w)
    n = int(rng.integers(60, 120))
    ys = np.clip(cy + rng.normal(0, spread, n), 0, h - 1)
    xs = np.clip(cx + rng.normal(0, spread, n), 0, w - 1)
    rad = rng.uniform(0.6, 1.3, n) * s
    for y0, x0, r in zip(ys, xs, rad):
        lo_y, hi_y = int(max(0, y0 - 3 * s - 1)), int(min(h, y0 + 3 * s + 2))
        lo_x, hi_x = int(max(0, x0 - 3 * s - 1)), int(min(w, x0 + 3 * s + 2))
        d = np.hypot(yy[lo_y:hi_y, lo_x:hi_x] - y0, xx[lo_y:hi_y, lo_x:hi_x] - x0)
        mask[lo_y:hi_y, lo_x:hi_x] = np.maximum(mask[lo_y:hi_y, lo_x:hi_x], _soft_mask(d, r))
    return -mask


def _rolled_in_scale(rng, yy, xx, h, w):
    period = rng.uniform(5.0, 10.0) * h / 64.0
    phase = rng.uniform(0, 2 * np.pi)
    wobble = 1.5 * _smooth_noise(rng, h, w, 4)
    bands = np.sin(2 * np.pi * yy / period + phase + wobble)
    extent = np.clip(_smooth_noise(rng, h, w, 3) + 0.8, 0.0, 1.0)
    return 0.8 * bands * extent


def _scratches(rng, yy, xx, h, w):
    mask = np.zeros((h, w))
    base = rng.uniform(0, np.pi)
    for _ in range(int(rng.integers(3, 6))):
        th = base + rng.normal(0, 0.15)
        cy, cx = rng.uniform(0.2, 0.8) * h, rng.uniform(0.2, 0.8) * w
        L = 2.0 * max(h, w)
        d = L * np.array([np.sin(th), np.cos(th)])
        c = np.array([cy, cx])
        mask = np.maximum(mask, _soft_mask(_segment_distance(yy, xx, c - d, c + d), rng.uniform(0.6, 1.0)))
    return mask


# nuisance levels: global brightness offset, smooth shading amplitude, pixel grain sigma
BRIGHTNESS = 0.2
SHADING = 0.15
GRAIN = 0.06

_DRAWERS = (_crack, _inclusion, _patch, _pitted, _rolled_in_scale, _scratches)


def synthetic_image(rng: np.random.Generator, label: int, size: Sequence[int] = (64, 64)) -> np.ndarray:
    """One ``[H, W]`` image in ``[-1, 1]`` of defect class ``label`` (index into NEU_CLASSES)."""
    h, w = int(size[0]), int(size[1])
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    brightness = rng.uniform(-BRIGHTNESS, BRIGHTNESS)
    contrast = rng.uniform(0.7, 1.0)
    background = brightness + SHADING * _smooth_noise(rng, h, w, int(rng.integers(3, 9)))
    defect = _DRAWERS[label](rng, yy, xx, h, w)
    img = background + contrast * defect + rng.normal(0.0, GRAIN, size=(h, w))
    return np.clip(img, -1.0, 1.0)


def generate_synthetic(
    n_per_class: int, size: Sequence[int] = (64, 64), seed: int = 0, channels: int = 1
) -> list[LabeledImage]:
    """Six procedurally drawn defect classes on noisy, unevenly lit backgrounds.

    Images are produced class by class from one generator seeded with
    ``seed``, so the output is bit-identical for a given seed.
    """
    if n_per_class < 1:
        raise ValueError(f"n_per_class must be >= 1, got {n_per_class}")
    rng = np.random.default_rng(seed)
    out = []
    for label, name in enumerate(NEU_CLASSES):
        for i in range(n_per_class):
            img = synthetic_image(rng, label, size)
            out.append(LabeledImage(np.repeat(img[None], channels, axis=0), label, f"{name}/{name}_{i:04d}.pgm"))
    return out
