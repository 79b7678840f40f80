"""Desk-scale grayscale test corpus built from the scikit-image sample set."""

from pathlib import Path

import numpy as np
import skimage.data
from skimage.color import rgb2gray
from skimage.transform import resize

from awm.imageio import write_image

NAMES = (
    "camera", "moon", "coins", "clock", "brick", "grass",
    "gravel", "cell", "astronaut", "coffee", "chelsea", "rocket",
)


def gray_image(name: str, size: int = 256) -> np.ndarray:
    img = getattr(skimage.data, name)()
    if img.ndim == 3:
        img = rgb2gray(img[..., :3])
    else:
        img = img / 255.0
    small = resize(img, (size, size), anti_aliasing=True)
    return np.round(np.clip(small, 0, 1) * 255.0)


def build_corpus(directory: Path, size: int = 256, names=NAMES) -> list[Path]:
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, name in enumerate(names):
        p = directory / f"{i:02d}_{name}.pgm"
        write_image(p, gray_image(name, size))
        paths.append(p)
    return paths
