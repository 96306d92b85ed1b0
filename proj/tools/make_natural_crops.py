#!/usr/bin/env python3
"""Writes the 64x64 natural test crops bundled under tests/data/natural.

Crops are taken from the sample images that ship with scikit-image, so the
set can be regenerated offline:

    python3 tools/make_natural_crops.py tests/data/natural
"""
import argparse
import pathlib

import numpy as np
from skimage import data, transform, util
from skimage.io import imsave

# (image name, row fraction, column fraction, crop side as fraction of min dim)
CROPS = [
    ("astronaut", 0.25, 0.45, 0.35),
    ("astronaut", 0.70, 0.30, 0.45),
    ("camera", 0.30, 0.50, 0.40),
    ("camera", 0.75, 0.30, 0.40),
    ("coffee", 0.50, 0.50, 0.55),
    ("chelsea", 0.45, 0.40, 0.60),
    ("chelsea", 0.35, 0.70, 0.40),
    ("rocket", 0.50, 0.50, 0.55),
    ("coins", 0.50, 0.50, 0.50),
    ("moon", 0.50, 0.50, 0.50),
    ("page", 0.50, 0.50, 0.60),
    ("text", 0.50, 0.40, 0.80),
    ("brick", 0.50, 0.50, 0.40),
    ("grass", 0.50, 0.50, 0.40),
    ("gravel", 0.50, 0.50, 0.40),
    ("immunohistochemistry", 0.50, 0.50, 0.50),
    ("hubble_deep_field", 0.50, 0.50, 0.40),
    ("retina", 0.50, 0.50, 0.45),
    ("cat", 0.40, 0.45, 0.55),
    ("colorwheel", 0.50, 0.50, 0.70),
]


def crop(image, fy, fx, fs, size):
    h, w = image.shape[:2]
    side = int(round(fs * min(h, w)))
    y0 = int(np.clip(round(fy * h - side / 2), 0, h - side))
    x0 = int(np.clip(round(fx * w - side / 2), 0, w - side))
    patch = image[y0:y0 + side, x0:x0 + side]
    patch = transform.resize(patch, (size, size), order=1, anti_aliasing=True)
    return util.img_as_ubyte(np.clip(patch, 0, 1))


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("out_dir", type=pathlib.Path)
    parser.add_argument("--size", type=int, default=64)
    args = parser.parse_args()
    args.out_dir.mkdir(parents=True, exist_ok=True)
    for i, (name, fy, fx, fs) in enumerate(CROPS):
        image = getattr(data, name)()
        if image.ndim == 3 and image.shape[2] == 4:
            image = image[..., :3]
        if image.ndim == 2:
            image = np.stack([image] * 3, axis=-1)
        out = crop(image, fy, fx, fs, args.size)
        imsave(args.out_dir / f"{i:02d}_{name}.png", out, check_contrast=False)


if __name__ == "__main__":
    main()
