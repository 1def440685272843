"""Synthetic two-class slice corpus standing in for restricted scans.

Each subject gets a brain-like ellipse with its own blob texture. Slices
sweep through depth (the ellipse grows and shrinks) and time (fresh noise).
Class 1 subjects have the intensity inside a fixed elliptical region
attenuated by ``amplitude``; with ``amplitude=0`` the classes share one
distribution.
"""
from __future__ import annotations

import numpy as np

from ..errors import UsageError
from .slices import normalize_minmax
from .store import PIXEL_F32, SliceRecordStore

DEFAULT_AMPLITUDE = 0.3
DEFAULT_NOISE = 0.08
DEPTH = 35


def _soft_ellipse(yy, xx, cy, cx, ry, rx, edge=0.08):
    r = np.sqrt(((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2)
    return np.clip((1.0 - r) / edge + 0.5, 0.0, 1.0)


def generate_synthetic(
    n_subjects: int,
    slices_per_subject: int,
    height: int = 28,
    width: int = 28,
    seed: int = 0,
    amplitude: float = DEFAULT_AMPLITUDE,
    noise: float = DEFAULT_NOISE,
    pixel_format: int = PIXEL_F32,
) -> SliceRecordStore:
    """Subjects alternate labels 0, 1, 0, ... so even counts are balanced."""
    if min(n_subjects, slices_per_subject, height, width) < 1:
        raise UsageError("all counts must be >= 1")
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:height, 0:width] / np.array([height, width]).reshape(2, 1, 1)

    n = n_subjects * slices_per_subject
    pixels = np.empty((n, height, width))
    labels = np.empty(n, dtype=np.uint8)
    z_idx = np.empty(n, dtype=np.uint16)
    t_idx = np.empty(n, dtype=np.uint16)
    subjects = []

    lesion = _soft_ellipse(yy, xx, 0.58, 0.36, 0.13, 0.10)
    k = 0
    for s in range(n_subjects):
        label = s % 2
        sid = f"synth{s:04d}"
        cy, cx = 0.5 + rng.normal(0, 0.02, size=2)
        ry, rx = np.array([0.40, 0.34]) * (1 + rng.normal(0, 0.04, size=2))
        texture = np.zeros((height, width))
        for _ in range(6):
            by, bx = rng.uniform(0.25, 0.75, size=2)
            bs = rng.uniform(0.05, 0.15)
            texture += rng.uniform(0.05, 0.25) * np.exp(-((yy - by) ** 2 + (xx - bx) ** 2) / (2 * bs**2))
        for j in range(slices_per_subject):
            z, t = j % DEPTH, j // DEPTH
            scale = 0.75 + 0.25 * np.cos(np.pi * (z - DEPTH / 2) / DEPTH)
            brain = _soft_ellipse(yy, xx, cy, cx, ry * scale, rx * scale)
            img = brain * (0.55 + texture)
            if label == 1:
                img = img * (1.0 - amplitude * lesion)
            img = img + rng.normal(0, noise, size=img.shape)
            pixels[k] = normalize_minmax(img)
            labels[k], z_idx[k], t_idx[k] = label, z, t
            subjects.append(sid)
            k += 1

    return SliceRecordStore.from_arrays(pixels, labels, subjects, z_idx, t_idx, pixel_format, seed)
