"""Manifests and the synthetic face / spoof generator.

A manifest is a JSON-lines file, one object per sample::

    {"image_path": "images/00000.png", "label": "live", "attack_type": null,
     "depth_map_path": "maps/00000_depth.png", "reflection_map_path": "maps/00000_reflection.png"}

Relative paths resolve against the manifest's directory. ``material`` is an
optional extra field naming the class for 5-way material recognition.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass

import numpy as np
from scipy import ndimage

from .imageio import load_image, resize_area, save_png
from .supervision import LIVE, SPOOF, make_targets, stack_targets, synthetic_reflection

IMAGE_SIZE = 256
MAP_SIZE = 32
REPLAY_BLACK_LEVEL = 0.12


@dataclass
class ManifestEntry:
    image_path: str
    label: str
    attack_type: str | None = None
    depth_map_path: str | None = None
    reflection_map_path: str | None = None
    material: str | None = None

    def __post_init__(self):
        if self.label not in (LIVE, SPOOF):
            raise ValueError(f"label must be 'live' or 'spoof', got {self.label!r}")


def read_manifest(path):
    root = os.path.dirname(os.path.abspath(path))
    entries = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
            for key in ("image_path", "depth_map_path", "reflection_map_path"):
                if raw.get(key) and not os.path.isabs(raw[key]):
                    raw[key] = os.path.normpath(os.path.join(root, raw[key]))
            entry = ManifestEntry(**raw)
            if not os.path.exists(entry.image_path):
                raise FileNotFoundError(f"{path}:{lineno}: image {entry.image_path} not found")
            entries.append(entry)
    return entries


def write_manifest(path, entries, relative_to=None):
    root = relative_to or os.path.dirname(os.path.abspath(path))
    with open(path, "w") as fh:
        for e in entries:
            d = asdict(e)
            for key in ("image_path", "depth_map_path", "reflection_map_path"):
                if d[key]:
                    d[key] = os.path.relpath(d[key], root)
            if d["material"] is None:
                del d["material"]
            fh.write(json.dumps(d, sort_keys=True) + "\n")


def load_samples(entries, input_size, map_size, material_mode=False):
    """Decode a manifest into (images NCHW, (depth, reflection, patch), labels, attack_types)."""
    images, targets = [], []
    for i, e in enumerate(entries):
        img = resize_area(load_image(e.image_path), input_size)
        images.append(img.transpose(2, 0, 1))
        targets.append(make_targets(
            e.label, e.attack_type, e.depth_map_path, e.reflection_map_path,
            size=map_size, material=(e.material or (LIVE if e.label == LIVE else e.attack_type))
            if material_mode else None, seed=i))
    labels = np.array([e.label == LIVE for e in entries], dtype=np.int64)
    return np.stack(images).astype(np.float32), stack_targets(targets), labels, [e.attack_type for e in entries]


# --- synthetic generator -------------------------------------------------


def _face_geometry(rng, size):
    return {
        "cy": size * (0.5 + rng.uniform(-0.05, 0.05)),
        "cx": size * (0.5 + rng.uniform(-0.05, 0.05)),
        "ay": size * rng.uniform(0.38, 0.44),
        "ax": size * rng.uniform(0.28, 0.34),
        "light": rng.normal(size=3) * np.array([0.5, 0.5, 0.0]) + np.array([0.0, 0.0, 1.0]),
        "skin": np.array([0.78, 0.58, 0.48]) + rng.normal(0, 0.05, size=3),
        "bg_a": rng.uniform(0.1, 0.7, size=3),
        "bg_b": rng.uniform(0.1, 0.7, size=3),
    }


def _ellipsoid(geo, size, scale=1.0):
    """Height field of the face ellipsoid on a ``size`` grid; geometry given at IMAGE_SIZE."""
    s = size / IMAGE_SIZE
    yy, xx = np.mgrid[0:size, 0:size] + 0.5
    u = (yy - geo["cy"] * s) / (geo["ay"] * s)
    v = (xx - geo["cx"] * s) / (geo["ax"] * s)
    q = u * u + v * v
    return np.sqrt(np.clip(1.0 - q, 0.0, None)), u, v, q < 1.0


def render_live(geo, rng, size=IMAGE_SIZE):
    z, u, v, inside = _ellipsoid(geo, size)
    light = geo["light"] / np.linalg.norm(geo["light"])
    zn = np.maximum(z, 1e-3)
    normal = np.stack([v, -u, zn], axis=-1) / np.sqrt(u * u + v * v + zn * zn)[..., None]
    shade = np.clip(normal @ light, 0.0, 1.0)
    face = geo["skin"][None, None, :] * (0.35 + 0.65 * shade[..., None])
    # fine skin texture
    face = face + ndimage.gaussian_filter(rng.normal(0, 0.05, size=(size, size)), 0.7)[..., None]
    t = np.linspace(0.0, 1.0, size)[:, None, None]
    bg = geo["bg_a"] * (1 - t) + geo["bg_b"] * t + rng.normal(0, 0.01, size=(size, size, 3))
    soft = ndimage.gaussian_filter(inside.astype(np.float64), 1.5)[..., None]
    return np.clip(soft * face + (1 - soft) * bg, 0.0, 1.0)


def render_print(live, rng):
    size = live.shape[0]
    grain = rng.normal(0, 1, size=(size // 8, size // 8))
    grain = np.kron(grain, np.ones((8, 8)))
    grain = ndimage.gaussian_filter(grain, 2.0)
    tint = np.array([1.0, 0.97, 0.86])
    out = (0.6 * live + 0.2) * tint + 0.06 * grain[..., None]
    return np.clip(out, 0.0, 1.0)


def render_replay(live, rng):
    size = live.shape[0]
    yy, xx = np.mgrid[0:size, 0:size]
    theta = rng.uniform(0, np.pi)
    period = rng.uniform(6.0, 12.0)
    moire = np.sin(2 * np.pi * (xx * np.cos(theta) + yy * np.sin(theta)) / period)
    # broad beat pattern survives downsampling
    beat = np.sin(2 * np.pi * (xx * np.sin(theta) - yy * np.cos(theta)) / (period * 6))
    offset = rng.uniform(-0.3, 0.3) * size
    band = np.exp(-(((xx + yy - size + offset) / (0.12 * size)) ** 2))
    tint = np.array([0.92, 0.98, 1.08])
    out = live * tint + 0.08 * moire[..., None] + 0.06 * beat[..., None] + 0.3 * band[..., None]
    # screens never reach true black
    out = REPLAY_BLACK_LEVEL + (1.0 - REPLAY_BLACK_LEVEL) * out
    return np.clip(out, 0.0, 1.0)


def synth_dataset(n_live, n_spoof, seed, out_dir):
    """Render a labelled synthetic set under ``out_dir``; returns the manifest path.

    Spoofs alternate between print and replay attacks. Every sample gets a
    32x32 depth map (the face ellipsoid for live, black for spoof) and a
    32x32x3 reflection map (black for live).
    """
    if n_live <= 0 or n_spoof <= 0:
        raise ValueError("need at least one live and one spoof sample")
    img_dir = os.path.join(out_dir, "images")
    map_dir = os.path.join(out_dir, "maps")
    os.makedirs(img_dir, exist_ok=True)
    os.makedirs(map_dir, exist_ok=True)
    labels = [LIVE] * n_live + [SPOOF] * n_spoof
    order = np.random.default_rng([seed, 0xFACE]).permutation(len(labels))
    entries = []
    for idx, k in enumerate(order):
        label = labels[k]
        rng = np.random.default_rng([seed, idx])
        geo = _face_geometry(rng, IMAGE_SIZE)
        live = render_live(geo, rng)
        attack = None
        if label == SPOOF:
            attack = "print" if k % 2 == 0 else "replay"
            img = render_print(live, rng) if attack == "print" else render_replay(live, rng)
            depth = np.zeros((MAP_SIZE, MAP_SIZE))
            reflection = synthetic_reflection(MAP_SIZE, rng)
        else:
            img = live
            z = _ellipsoid(geo, MAP_SIZE)[0]
            depth = z / z.max()
            reflection = np.zeros((MAP_SIZE, MAP_SIZE, 3))
        stem = f"{idx:05d}"
        image_path = os.path.join(img_dir, f"{stem}.png")
        depth_path = os.path.join(map_dir, f"{stem}_depth.png")
        refl_path = os.path.join(map_dir, f"{stem}_reflection.png")
        save_png(image_path, img)
        save_png(depth_path, depth)
        save_png(refl_path, reflection)
        entries.append(ManifestEntry(image_path, label, attack, depth_path, refl_path))
    manifest = os.path.join(out_dir, "manifest.jsonl")
    write_manifest(manifest, entries)
    return manifest
