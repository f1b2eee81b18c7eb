"""Dataset ingestion and generation.

Covers IDX-format image/label files (MNIST's container), deterministic
class-stratified subsetting, a seeded synthetic event-stream task for
the supervised network, and a seeded stroke-rendered digit corpus used
as a desk-scale stand-in when the real MNIST files are not on disk.
No loader ever touches the network.
"""

from __future__ import annotations

import gzip
import hashlib
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "DataError",
    "BadMagicError",
    "TruncatedError",
    "CountMismatchError",
    "LabelRangeError",
    "EmptyDatasetError",
    "ImageDataset",
    "EventDataset",
    "load_idx",
    "load_idx_dir",
    "serialize_idx_images",
    "serialize_idx_labels",
    "subset",
    "gen_events",
    "make_digits",
]

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801


class DataError(Exception):
    """Base for dataset ingestion failures."""


class BadMagicError(DataError):
    pass


class TruncatedError(DataError):
    pass


class CountMismatchError(DataError):
    pass


class LabelRangeError(DataError):
    pass


class EmptyDatasetError(DataError):
    pass


@dataclass
class ImageDataset:
    """Grayscale images with integer class labels."""

    images: np.ndarray  # (n, h, w) uint8
    labels: np.ndarray  # (n,) int64
    split: str = ""

    def __post_init__(self) -> None:
        if len(self.images) != len(self.labels):
            raise CountMismatchError(
                f"{len(self.images)} images vs {len(self.labels)} labels"
            )

    def __len__(self) -> int:
        return len(self.images)

    @property
    def n_classes(self) -> int:
        return int(self.labels.max()) + 1 if len(self.labels) else 0

    def content_hash(self) -> str:
        h = hashlib.sha256()
        h.update(self.images.tobytes())
        h.update(np.ascontiguousarray(self.labels, dtype=np.int64).tobytes())
        return h.hexdigest()


@dataclass
class EventDataset:
    """Sparse spatio-temporal event streams with class labels.

    Each sample is an (n_events, 4) int32 array of
    (timestep, x, y, polarity) rows.
    """

    events: list[np.ndarray]
    labels: np.ndarray
    frame: tuple[int, int]
    duration: int
    n_classes: int
    seed: int
    rate_maps: np.ndarray = field(repr=False)  # (n_classes, h, w)

    def __len__(self) -> int:
        return len(self.events)

    def to_dense(self, idx: int) -> np.ndarray:
        """Binary (duration, h*w) frame stack for one sample."""
        h, w = self.frame
        dense = np.zeros((self.duration, h * w), dtype=np.float64)
        ev = self.events[idx]
        if len(ev):
            dense[ev[:, 0], ev[:, 2] * w + ev[:, 1]] = 1.0
        return dense

    def content_hash(self) -> str:
        h = hashlib.sha256()
        h.update(
            repr((self.frame, self.duration, self.n_classes, self.seed)).encode()
        )
        for ev in self.events:
            h.update(ev.tobytes())
        h.update(np.ascontiguousarray(self.labels, dtype=np.int64).tobytes())
        return h.hexdigest()


# --- IDX container ----------------------------------------------------------


def _maybe_gunzip(raw: bytes) -> bytes:
    if raw[:2] == b"\x1f\x8b":
        return gzip.decompress(raw)
    return raw


def _read_header(raw: bytes, n_fields: int, what: str) -> tuple[int, ...]:
    need = 4 * n_fields
    if len(raw) < need:
        raise TruncatedError(f"{what}: header needs {need} bytes, got {len(raw)}")
    return struct.unpack(">" + "I" * n_fields, raw[:need])


def load_idx(image_bytes: bytes, label_bytes: bytes, split: str = "") -> ImageDataset:
    """Parse big-endian IDX image and label payloads into a dataset."""
    image_bytes = _maybe_gunzip(image_bytes)
    label_bytes = _maybe_gunzip(label_bytes)

    magic, n, rows, cols = _read_header(image_bytes, 4, "image file")
    if magic != IMAGE_MAGIC:
        raise BadMagicError(f"image file magic {magic:#010x}, expected {IMAGE_MAGIC:#010x}")
    pixels = image_bytes[16:]
    if len(pixels) != n * rows * cols:
        raise TruncatedError(
            f"image payload holds {len(pixels)} bytes, expected {n * rows * cols}"
        )

    lmagic, ln = _read_header(label_bytes, 2, "label file")
    if lmagic != LABEL_MAGIC:
        raise BadMagicError(f"label file magic {lmagic:#010x}, expected {LABEL_MAGIC:#010x}")
    lpayload = label_bytes[8:]
    if len(lpayload) != ln:
        raise TruncatedError(f"label payload holds {len(lpayload)} bytes, expected {ln}")
    if n != ln:
        raise CountMismatchError(f"{n} images vs {ln} labels")
    if n == 0:
        raise EmptyDatasetError("dataset declares zero items")

    labels = np.frombuffer(lpayload, dtype=np.uint8).astype(np.int64)
    if labels.max() > 9:
        raise LabelRangeError(f"label {labels.max()} outside 0-9")
    images = np.frombuffer(pixels, dtype=np.uint8).reshape(n, rows, cols)
    return ImageDataset(images.copy(), labels, split=split)


def serialize_idx_images(images: np.ndarray) -> bytes:
    n, rows, cols = images.shape
    header = struct.pack(">IIII", IMAGE_MAGIC, n, rows, cols)
    return header + np.ascontiguousarray(images, dtype=np.uint8).tobytes()


def serialize_idx_labels(labels: np.ndarray) -> bytes:
    header = struct.pack(">II", LABEL_MAGIC, len(labels))
    return header + np.ascontiguousarray(labels, dtype=np.uint8).tobytes()


_IDX_NAMES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}


def load_idx_dir(data_dir: str | Path, split: str) -> ImageDataset:
    """Load a standard MNIST-layout directory (plain or .gz files)."""
    data_dir = Path(data_dir)
    img_name, lbl_name = _IDX_NAMES[split]
    paths = []
    for name in (img_name, lbl_name):
        cands = [data_dir / name, data_dir / (name + ".gz")]
        found = next((p for p in cands if p.exists()), None)
        if found is None:
            raise DataError(f"missing {name}[.gz] under {data_dir}")
        paths.append(found)
    return load_idx(paths[0].read_bytes(), paths[1].read_bytes(), split=split)


# --- subsetting -------------------------------------------------------------


def subset(
    dataset: ImageDataset, n_train: int, n_test: int, seed: int
) -> tuple[ImageDataset, ImageDataset]:
    """Seeded class-stratified disjoint (train, test) draw.

    Per-class counts differ by at most one; a request larger than the
    available per-class supply is an error.
    """
    if n_train + n_test > len(dataset):
        raise DataError(
            f"requested {n_train}+{n_test} samples, dataset has {len(dataset)}"
        )
    classes = np.unique(dataset.labels)
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0x5AB5E7)))
    want = {}
    for part, n in (("train", n_train), ("test", n_test)):
        base, extra = divmod(n, len(classes))
        want[part] = {c: base + (1 if k < extra else 0) for k, c in enumerate(classes)}

    picks = {"train": [], "test": []}
    for c in classes:
        pool = np.flatnonzero(dataset.labels == c)
        pool = pool[rng.permutation(len(pool))]
        need = want["train"][c] + want["test"][c]
        if need > len(pool):
            raise DataError(
                f"class {c} has {len(pool)} samples, stratified draw needs {need}"
            )
        picks["train"].append(pool[: want["train"][c]])
        picks["test"].append(pool[want["train"][c] : need])

    out = []
    for part in ("train", "test"):
        idx = np.sort(np.concatenate(picks[part])) if picks[part] else np.array([], int)
        out.append(
            ImageDataset(dataset.images[idx], dataset.labels[idx], split=part)
        )
    return out[0], out[1]


# --- synthetic event streams ------------------------------------------------


def _box_blur(a: np.ndarray) -> np.ndarray:
    """Separable [1,2,1]/4 blur with edge clamping."""
    for axis in (0, 1):
        p = np.moveaxis(a, axis, 0)
        padded = np.concatenate([p[:1], p, p[-1:]], axis=0)
        p = (padded[:-2] + 2 * padded[1:-1] + padded[2:]) / 4.0
        a = np.moveaxis(p, 0, axis)
    return a


def gen_events(
    seed: int,
    n_classes: int,
    n_samples: int,
    frame: tuple[int, int] = (32, 32),
    duration: int = 100,
    peak_rate: float = 0.12,
    sample_offset: int = 0,
) -> EventDataset:
    """Synthetic event-stream task: one fixed random rate map per class,
    independent per-bin event draws per sample.  Fully determined by the
    arguments; the class rate maps depend only on ``seed``, so disjoint
    train/test splits come from the same seed with different
    ``sample_offset``."""
    if n_classes <= 0 or n_samples <= 0:
        raise ValueError("n_classes and n_samples must be positive")
    h, w = frame
    maps = np.empty((n_classes, h, w))
    for c in range(n_classes):
        rng = np.random.default_rng(np.random.SeedSequence((seed, 0xC1A55, c)))
        maps[c] = _box_blur(rng.uniform(0.0, peak_rate, size=(h, w)))

    labels = np.arange(sample_offset, sample_offset + n_samples, dtype=np.int64) % n_classes
    events = []
    for i in range(n_samples):
        rng = np.random.default_rng(
            np.random.SeedSequence((seed, 0xE7E27, sample_offset + i))
        )
        hits = rng.random((duration, h, w)) < maps[labels[i]]
        t, y, x = np.nonzero(hits)
        pol = rng.integers(0, 2, size=len(t))
        ev = np.column_stack([t, x, y, pol]).astype(np.int32)
        events.append(ev)
    return EventDataset(
        events=events,
        labels=labels,
        frame=frame,
        duration=duration,
        n_classes=n_classes,
        seed=seed,
        rate_maps=maps,
    )


# --- stroke-rendered digit corpus -------------------------------------------
#
# Ten digit classes drawn as line segments in a unit box, rasterized with
# per-sample affine jitter and pixel noise.  Used when no IDX files are
# available so the desk-scale pipeline stays self-contained.

_SEG = {
    "top": ((0, 0), (1, 0)),
    "mid": ((0, 0.5), (1, 0.5)),
    "bot": ((0, 1), (1, 1)),
    "ul": ((0, 0), (0, 0.5)),
    "ll": ((0, 0.5), (0, 1)),
    "ur": ((1, 0), (1, 0.5)),
    "lr": ((1, 0.5), (1, 1)),
}

_DIGIT_SEGMENTS: dict[int, list[tuple[tuple[float, float], tuple[float, float]]]] = {
    0: [_SEG["top"], _SEG["ur"], _SEG["lr"], _SEG["bot"], _SEG["ll"], _SEG["ul"]],
    1: [((0.5, 0), (0.5, 1)), ((0.2, 0.3), (0.5, 0))],
    2: [_SEG["top"], _SEG["ur"], _SEG["mid"], _SEG["ll"], _SEG["bot"]],
    3: [_SEG["top"], _SEG["ur"], ((0.3, 0.5), (1, 0.5)), _SEG["lr"], _SEG["bot"]],
    4: [_SEG["ul"], _SEG["mid"], _SEG["ur"], _SEG["lr"]],
    5: [_SEG["top"], _SEG["ul"], _SEG["mid"], _SEG["lr"], _SEG["bot"]],
    6: [_SEG["top"], _SEG["ul"], _SEG["ll"], _SEG["bot"], _SEG["lr"], _SEG["mid"]],
    7: [_SEG["top"], ((1, 0), (0.35, 1))],
    8: [_SEG["top"], _SEG["ur"], _SEG["lr"], _SEG["bot"], _SEG["ll"], _SEG["ul"], _SEG["mid"]],
    9: [_SEG["top"], _SEG["ul"], _SEG["mid"], _SEG["ur"], _SEG["lr"], _SEG["bot"]],
}


# width-to-height ratio per digit: global shape cues analogous to the
# naturally narrow 1 or round 0 of handwritten digits
_DIGIT_ASPECT = {0: 0.88, 1: 0.34, 2: 0.70, 3: 0.64, 4: 0.76, 5: 0.64,
                 6: 0.58, 7: 0.70, 8: 0.80, 9: 0.58}


def _render_digit(digit: int, rng: np.random.Generator, side: int = 28) -> np.ndarray:
    segs = np.asarray(_DIGIT_SEGMENTS[digit], dtype=np.float64)  # (k, 2, 2)
    # unit box -> pixel coords with jittered similarity transform; jitter is
    # kept mild because the corpus stands in for centered, size-normalized
    # handwritten digits
    size = side * 0.54 * rng.uniform(0.92, 1.06)
    angle = np.deg2rad(rng.uniform(-5.0, 5.0))
    center = side / 2 - 0.5 + rng.uniform(-1.5, 1.5, size=2)
    rot = np.array(
        [[np.cos(angle), -np.sin(angle)], [np.sin(angle), np.cos(angle)]]
    )
    pts = (segs - 0.5) * np.array([size * _DIGIT_ASPECT[digit], size])
    pts = pts @ rot.T + center

    yy, xx = np.mgrid[0:side, 0:side]
    pix = np.stack([xx.ravel(), yy.ravel()], axis=1).astype(np.float64)
    a, b = pts[:, 0], pts[:, 1]  # (k, 2)
    ab = b - a
    denom = np.maximum((ab**2).sum(axis=1), 1e-12)
    rel = pix[:, None, :] - a[None, :, :]
    t = np.clip((rel * ab[None, :, :]).sum(axis=2) / denom, 0.0, 1.0)
    closest = a[None, :, :] + t[:, :, None] * ab[None, :, :]
    dist = np.sqrt(((pix[:, None, :] - closest) ** 2).sum(axis=2)).min(axis=1)

    thickness = rng.uniform(1.05, 1.4)
    img = np.clip(1.0 - (dist - thickness) / 1.3, 0.0, 1.0).reshape(side, side)
    img *= rng.uniform(0.8, 1.0)
    img = img * 255.0 + rng.normal(0.0, 10.0, size=img.shape)
    return np.clip(img, 0, 255).astype(np.uint8)


def make_digits(seed: int, n_samples: int, split: str = "") -> ImageDataset:
    """Deterministic 28x28 ten-class stroke-digit dataset."""
    images = np.empty((n_samples, 28, 28), dtype=np.uint8)
    labels = np.arange(n_samples, dtype=np.int64) % 10
    for i in range(n_samples):
        rng = np.random.default_rng(np.random.SeedSequence((seed, 0xD1617, i)))
        images[i] = _render_digit(int(labels[i]), rng)
    return ImageDataset(images, labels, split=split)
