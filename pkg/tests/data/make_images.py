"""Regenerate the bundled bilateral test images (128x128 PNGs).

Sources are scikit-image's sample images plus one synthetic face render.
"""

import os

import numpy as np
from skimage import data, transform

from bifas.data import _face_geometry, render_live
from bifas.imageio import save_png

HERE = os.path.join(os.path.dirname(__file__), "bilateral")


def main():
    os.makedirs(HERE, exist_ok=True)
    for name in ("astronaut", "camera", "chelsea", "coffee"):
        img = transform.resize(getattr(data, name)(), (128, 128), anti_aliasing=True)
        save_png(os.path.join(HERE, f"{name}.png"), img)
    rng = np.random.default_rng(0)
    face = render_live(_face_geometry(rng, 256), rng)
    save_png(os.path.join(HERE, "synthetic_face.png"), transform.resize(face, (128, 128), anti_aliasing=True))


if __name__ == "__main__":
    main()
