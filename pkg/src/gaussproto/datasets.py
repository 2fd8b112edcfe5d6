"""Dataset layout on disk and the synthetic disc-image generator.

Layout: <root>/images/*.png (8-bit RGB) and <root>/masks/*.png (8-bit
gray, 0 = background, 255 = foreground) paired by filename, with split
manifests train.txt / val.txt listing basenames.  The generator paints
red/purple discs ("fruit") over textured green/brown backgrounds; higher
difficulty adds occluding stripes and pulls the disc colors into the
background's hue range.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .colors import hsv_to_rgb
from .errors import DatasetError


@dataclass
class DatasetLayout:
    root: Path
    train_ids: list[str]
    val_ids: list[str]

    @staticmethod
    def load(root) -> "DatasetLayout":
        root = Path(root)
        layout = DatasetLayout(
            root=root,
            train_ids=_read_manifest(root / "train.txt"),
            val_ids=_read_manifest(root / "val.txt"),
        )
        layout.validate()
        return layout

    def validate(self) -> None:
        if not self.train_ids:
            raise DatasetError(f"empty train split in {self.root}")
        for name in self.train_ids + self.val_ids:
            image_path = self.root / "images" / f"{name}.png"
            mask_path = self.root / "masks" / f"{name}.png"
            if not image_path.exists():
                raise DatasetError(f"missing image file: {image_path}")
            if not mask_path.exists():
                raise DatasetError(f"missing mask file: {mask_path}")
            with Image.open(image_path) as im, Image.open(mask_path) as mk:
                if im.size != mk.size:
                    raise DatasetError(
                        f"image/mask size mismatch for {name}: {im.size} vs {mk.size}")

    def image_path(self, name: str) -> Path:
        return self.root / "images" / f"{name}.png"

    def load_image(self, name: str) -> np.ndarray:
        """(H, W, 3) float RGB in [0, 1]."""
        with Image.open(self.image_path(name)) as im:
            return np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0

    def load_mask(self, name: str) -> np.ndarray:
        """(H, W) uint8 with values in {0, 255}."""
        with Image.open(self.root / "masks" / f"{name}.png") as im:
            return np.asarray(im.convert("L"), dtype=np.uint8)

    def load_labels(self, name: str) -> np.ndarray:
        """(H, W) class labels: 1 = background, 2 = foreground."""
        return mask_to_labels(self.load_mask(name))


def mask_to_labels(mask: np.ndarray) -> np.ndarray:
    return np.where(np.asarray(mask) > 0, 2, 1).astype(np.int64)


def labels_to_mask(labels: np.ndarray) -> np.ndarray:
    return np.where(np.asarray(labels) >= 2, 255, 0).astype(np.uint8)


def _read_manifest(path: Path) -> list[str]:
    if not path.exists():
        raise DatasetError(f"missing split manifest: {path}")
    return [line.strip() for line in path.read_text().splitlines() if line.strip()]


def save_image(path: Path, rgb01: np.ndarray) -> None:
    arr = np.clip(np.round(rgb01 * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(arr, mode="RGB").save(path)


def save_mask(path: Path, mask: np.ndarray) -> None:
    Image.fromarray(np.asarray(mask, dtype=np.uint8), mode="L").save(path)


# -- synthetic data ---------------------------------------------------------------


def _smooth_noise(rng: np.random.Generator, size: int, cells: int = 4) -> np.ndarray:
    """Low-frequency field in [0, 1]: a coarse grid upsampled bilinearly."""
    coarse = rng.random((cells, cells))
    xs = np.linspace(0, cells - 1, size)
    ix = np.floor(xs).astype(int).clip(0, cells - 2)
    fx = xs - ix
    rows = coarse[ix][:, ix] * np.outer(1 - fx, 1 - fx) \
        + coarse[ix][:, ix + 1] * np.outer(1 - fx, fx) \
        + coarse[ix + 1][:, ix] * np.outer(fx, 1 - fx) \
        + coarse[ix + 1][:, ix + 1] * np.outer(fx, fx)
    return rows


def _render_image(rng: np.random.Generator, size: int, difficulty: int
                  ) -> tuple[np.ndarray, np.ndarray]:
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)

    # textured green/brown background
    green_hue = rng.uniform(0.26, 0.34)
    brown_hue = rng.uniform(0.07, 0.11) if difficulty < 2 else rng.uniform(0.04, 0.09)
    blend = _smooth_noise(rng, size)
    hue = green_hue + (brown_hue - green_hue) * blend
    sat = 0.45 + (0.25 + 0.10 * min(difficulty, 2)) * blend
    val = 0.40 + 0.15 * _smooth_noise(rng, size)
    texture = rng.uniform(-1.0, 1.0, size=(size, size)) * (0.06 + 0.045 * difficulty)
    hsv = np.stack([hue % 1.0, np.clip(sat, 0, 1), np.clip(val + texture, 0.05, 1)], axis=-1)
    image = hsv_to_rgb(hsv)

    # fruit discs: smooth, radially shaded
    mask = np.zeros((size, size), dtype=bool)
    num_discs = int(rng.integers(1, 4))
    r_lo, r_hi = max(4, size * 9 // 64), max(6, size * 15 // 64)
    for _ in range(num_discs):
        radius = float(rng.uniform(r_lo, r_hi))
        cy = float(rng.uniform(radius + 1, size - radius - 1))
        cx = float(rng.uniform(radius + 1, size - radius - 1))
        if difficulty < 2:
            hue_d = rng.choice([rng.uniform(0.96, 1.03) % 1.0, rng.uniform(0.78, 0.85)])
            sat_d = rng.uniform(0.7, 0.9)
        else:
            # overlap the background hue range so color alone is ambiguous
            hue_d = rng.uniform(0.02, 0.10)
            sat_d = rng.uniform(0.5, 0.75)
        val_d = rng.uniform(0.5, 0.7)
        dist2 = (yy - cy) ** 2 + (xx - cx) ** 2
        disc = dist2 <= radius ** 2
        shade = np.clip(1.0 - 0.35 * dist2 / radius ** 2, 0.0, 1.0)
        disc_hsv = np.stack([np.full((size, size), hue_d),
                             np.full((size, size), sat_d),
                             np.clip(val_d * shade, 0, 1)], axis=-1)
        disc_rgb = hsv_to_rgb(disc_hsv)
        image[disc] = disc_rgb[disc]
        mask |= disc

    # occluding stripes cover fruit: those pixels are background truth
    if difficulty >= 1:
        for _ in range(int(rng.integers(1, 3))):
            theta = rng.uniform(0, np.pi)
            offset = rng.uniform(0.2, 0.8) * size
            width = rng.uniform(1.0, 2.0)
            line = np.abs(np.cos(theta) * xx + np.sin(theta) * yy - offset) <= width
            stripe_rgb = hsv_to_rgb(np.array([green_hue, 0.5, 0.35]))
            image[line] = stripe_rgb
            mask &= ~line

    noise = rng.normal(scale=0.02 + 0.015 * difficulty, size=image.shape)
    image = np.clip(image + noise, 0.0, 1.0)
    return image, mask


def generate_synthetic(out_dir, count: int, image_size: int = 64, seed: int = 0,
                       difficulty: int = 0, val_fraction: float = 0.2) -> DatasetLayout:
    """Write a deterministic synthetic dataset and its split manifests."""
    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    (out / "masks").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    names = []
    for i in range(count):
        image, mask = _render_image(rng, image_size, difficulty)
        name = f"{i:04d}"
        save_image(out / "images" / f"{name}.png", image)
        save_mask(out / "masks" / f"{name}.png", np.where(mask, 255, 0))
        names.append(name)
    n_train = max(1, int(round(count * (1.0 - val_fraction))))
    (out / "train.txt").write_text("\n".join(names[:n_train]) + "\n")
    (out / "val.txt").write_text("\n".join(names[n_train:]) + ("\n" if names[n_train:] else ""))
    (out / "meta.json").write_text(json.dumps({
        "count": count, "image_size": image_size, "seed": seed,
        "difficulty": difficulty, "val_fraction": val_fraction,
    }, indent=2) + "\n")
    return DatasetLayout(root=out, train_ids=names[:n_train], val_ids=names[n_train:])
