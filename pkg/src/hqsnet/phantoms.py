"""Synthetic ellipse phantoms standing in for clinical MR slices, and the
on-disk dataset manifest that ties ground truths, splits and a mask together.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import DataError, DimensionError
from .numerics import read_grid, write_grid

SPLITS = ("train", "val", "test")


def phantom(h: int, w: int, rng: np.random.Generator) -> np.ndarray:
    """One image of 5-10 overlapping rotated ellipses in [0, 1]."""
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    img = np.zeros((h, w))
    side = min(h, w)
    for _ in range(rng.integers(5, 11)):
        cy, cx = rng.uniform(0, h), rng.uniform(0, w)
        # full axis lengths; semi-axes are half of these
        a, b = rng.uniform(0.1, 0.4, size=2) * side / 2.0
        theta = rng.uniform(0.0, np.pi)
        amp = rng.uniform(0.2, 0.6)
        c, s = np.cos(theta), np.sin(theta)
        u = (xx - cx) * c + (yy - cy) * s
        v = -(xx - cx) * s + (yy - cy) * c
        img[(u / a) ** 2 + (v / b) ** 2 <= 1.0] += amp
    img = ndimage.uniform_filter(np.clip(img, 0.0, 1.0), size=3, mode="nearest")
    # the filter's running sum leaves roundoff just outside [0, 1]
    return np.clip(img, 0.0, 1.0)


def make_phantoms(count: int, h: int, w: int, seed: int) -> np.ndarray:
    """Stack of ``count`` phantoms, shape ``(count, h, w)``."""
    rng = np.random.default_rng(seed)
    return np.stack([phantom(h, w, rng) for _ in range(count)])


@dataclass
class Entry:
    id: str
    path: str
    split: str


@dataclass
class DatasetManifest:
    root: Path
    entries: list[Entry] = field(default_factory=list)
    mask_path: str | None = None
    seed: int = 0
    height: int = 0
    width: int = 0

    FILENAME = "manifest.json"

    def split(self, name: str) -> list[Entry]:
        return [e for e in self.entries if e.split == name]

    def load(self, entry: Entry) -> np.ndarray:
        return read_grid(self.root / entry.path)

    def load_split(self, name: str) -> tuple[list[str], np.ndarray]:
        entries = self.split(name)
        if not entries:
            return [], np.zeros((0, self.height, self.width))
        return [e.id for e in entries], np.stack([self.load(e) for e in entries])

    def save(self) -> Path:
        out = self.root / self.FILENAME
        doc = {
            "entries": [asdict(e) for e in self.entries],
            "mask_path": self.mask_path,
            "seed": self.seed,
            "height": self.height,
            "width": self.width,
        }
        out.write_text(json.dumps(doc, indent=1) + "\n")
        return out

    @classmethod
    def open(cls, root: str | Path) -> "DatasetManifest":
        root = Path(root)
        path = root / cls.FILENAME
        try:
            doc = json.loads(path.read_text())
            entries = [Entry(**e) for e in doc["entries"]]
            man = cls(root, entries, doc.get("mask_path"), int(doc["seed"]),
                      int(doc["height"]), int(doc["width"]))
        except FileNotFoundError:
            raise DataError(f"no dataset manifest at {path}") from None
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"malformed manifest {path}: {exc}") from None
        man.validate()
        return man

    def validate(self) -> None:
        ids = [e.id for e in self.entries]
        if len(set(ids)) != len(ids):
            raise DataError("duplicate entry ids")
        for e in self.entries:
            if e.split not in SPLITS:
                raise DataError(f"entry {e.id}: unknown split {e.split!r}")
            if not (self.root / e.path).is_file():
                raise DataError(f"entry {e.id}: missing file {e.path}")


def split_counts(count: int, fractions=(0.7, 0.1, 0.2)) -> tuple[int, int, int]:
    n_train = int(round(count * fractions[0]))
    n_val = int(round(count * fractions[1]))
    n_train = min(n_train, count)
    n_val = min(n_val, count - n_train)
    return n_train, n_val, count - n_train - n_val


def gen_phantoms(
    root: str | Path, count: int, h: int, w: int, seed: int, fractions=(0.7, 0.1, 0.2)
) -> DatasetManifest:
    """Write ``count`` phantoms as GRD1 files under ``root`` with a manifest."""
    for n in (h, w):
        if n < 4 or n & (n - 1):
            raise DimensionError(f"phantom sides must be powers of two >= 4, got {h}x{w}")
    root = Path(root)
    (root / "truth").mkdir(parents=True, exist_ok=True)
    images = make_phantoms(count, h, w, seed)
    sizes = split_counts(count, fractions)
    labels = [s for s, n in zip(SPLITS, sizes) for _ in range(n)]
    man = DatasetManifest(root, seed=seed, height=h, width=w)
    for i, (img, split) in enumerate(zip(images, labels)):
        rel = f"truth/{i:05d}.grd"
        write_grid(root / rel, img)
        man.entries.append(Entry(f"{i:05d}", rel, split))
    man.save()
    return man
