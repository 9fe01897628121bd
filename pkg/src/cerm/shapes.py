"""Synthetic closed-shape datasets: radial-harmonic generators with known latents,
preprocessed into top-level approximation coefficient targets."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .contours import (
    PeriodicContour,
    canonical_start,
    contour_from_points,
    eval_contour,
    midpoint_green,
    truncate_fourier,
)
from .wavelets import init_coeffs_from_samples

# latent layout: (cx, cy, r0, a_2, b_2, a_3, b_3, ..., a_7, b_7)
HARMONICS = (2, 3, 4, 5, 6, 7)
LATENT_DIM = 3 + 2 * len(HARMONICS)


@dataclass(frozen=True)
class ShapeSample:
    """A generated shape: latent generator parameters and per-component targets.

    target has shape (2, 2^j2): top-level approximation coefficients of the
    canonicalized arc-length parameterization, one row per spatial component.
    """

    latent: np.ndarray
    target: np.ndarray


def radial_points(latent: np.ndarray, n_points: int = 256) -> np.ndarray:
    """Boundary polygon of the radial-harmonic shape encoded by a latent vector."""
    cx, cy, r0 = latent[:3]
    phi = 2 * np.pi * np.arange(n_points) / n_points
    radius = np.full(n_points, 1.0)
    for i, harmonic in enumerate(HARMONICS):
        a, b = latent[3 + 2 * i], latent[4 + 2 * i]
        radius += a * np.cos(harmonic * phi) + b * np.sin(harmonic * phi)
    radius *= r0
    return np.column_stack([cx + radius * np.cos(phi), cy + radius * np.sin(phi)])


def _segments_intersect(p, q, r, s) -> bool:
    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    d1, d2 = orient(p, q, r), orient(p, q, s)
    d3, d4 = orient(r, s, p), orient(r, s, q)
    return ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0))


def is_simple_polygon(points: np.ndarray) -> bool:
    """Segment-intersection scan over all non-adjacent edge pairs."""
    n = points.shape[0]
    edges = [(points[i], points[(i + 1) % n]) for i in range(n)]
    for i in range(n):
        for j in range(i + 2, n):
            if i == 0 and j == n - 1:
                continue
            if _segments_intersect(*edges[i], *edges[j]):
                return False
    return True


def draw_latent(rng: np.random.Generator, family: str) -> np.ndarray:
    """One latent vector; the ellipse family uses only the degree-2 harmonic."""
    latent = np.zeros(LATENT_DIM)
    latent[0] = rng.uniform(-0.2, 0.2)
    latent[1] = rng.uniform(-0.2, 0.2)
    latent[2] = rng.uniform(0.8, 1.2)
    if family == "ellipse":
        amp = rng.uniform(0.05, 0.22)
        phase = rng.uniform(0, 2 * np.pi)
        latent[3] = amp * np.cos(phase)
        latent[4] = amp * np.sin(phase)
    elif family == "star":
        lobes = int(rng.integers(3, 8))
        amp = rng.uniform(0.08, 0.18)
        phase = rng.uniform(0, 2 * np.pi)
        i = HARMONICS.index(lobes)
        latent[3 + 2 * i] = amp * np.cos(phase)
        latent[4 + 2 * i] = amp * np.sin(phase)
        wobble = rng.uniform(0.0, 0.04)
        latent[3] = wobble * np.cos(rng.uniform(0, 2 * np.pi))
        latent[4] = wobble * np.sin(rng.uniform(0, 2 * np.pi))
    else:
        raise ValueError(f"unknown family {family!r}")
    return latent


def shape_contour(latent: np.ndarray, n_coeffs: int = 64) -> PeriodicContour:
    """Canonicalized truncated Fourier contour of a generated shape."""
    points = radial_points(latent)
    base = contour_from_points(points, n_coeffs=n_coeffs)
    centre = np.asarray(midpoint_green(base))
    reordered = canonical_start(points, centre)
    return truncate_fourier(contour_from_points(reordered, n_coeffs=n_coeffs))


def coefficients_from_contour(
    contour: PeriodicContour, j2: int, order: int, centre_offset: np.ndarray | None = None
) -> np.ndarray:
    """Per-component top-level approximation coefficients of a contour."""
    offset = np.zeros(2) if centre_offset is None else np.asarray(centre_offset, dtype=float)

    rows = []
    for s in range(2):
        def sampler(t, s=s):
            return eval_contour(contour, t)[..., s] - offset[s]

        rows.append(init_coeffs_from_samples(sampler, j2, order))
    return np.vstack(rows)


def contour_points_from_coefficients(target: np.ndarray, j2: int) -> np.ndarray:
    """Invert the sample-value coefficient map back to an ordered boundary polygon."""
    return (2.0 ** (j2 / 2) * np.asarray(target)).T


@dataclass(frozen=True)
class ShapeDataset:
    samples: tuple[ShapeSample, ...]
    family: str
    order: int
    j2: int
    centre_offset: np.ndarray  # mean midpoint subtracted from every contour

    def latents(self) -> np.ndarray:
        return np.vstack([s.latent for s in self.samples])


def synthesize_shapes(
    seed: int,
    count: int,
    family: str = "ellipse",
    order: int = 5,
    j2: int = 7,
    n_coeffs: int = 64,
) -> ShapeDataset:
    """Deterministic dataset of simple closed shapes with coefficient targets.

    family "mixed" alternates ellipse and star draws. Generated polygons are
    re-drawn until they pass the self-intersection scan (radial shapes with
    bounded harmonics essentially always do).
    """
    rng = np.random.default_rng(seed)
    latents = []
    contours = []
    while len(latents) < count:
        fam = family
        if family == "mixed":
            fam = "ellipse" if len(latents) % 2 == 0 else "star"
        latent = draw_latent(rng, fam)
        points = radial_points(latent, n_points=128)
        if np.min(np.linalg.norm(points - latent[:2], axis=1)) <= 0.05:
            continue
        if not is_simple_polygon(points):
            continue
        latents.append(latent)
        contours.append(shape_contour(latent, n_coeffs=n_coeffs))

    centre_offset = np.mean([c.midpoint for c in contours], axis=0)
    samples = tuple(
        ShapeSample(
            latent=lat,
            target=coefficients_from_contour(cont, j2, order, centre_offset),
        )
        for lat, cont in zip(latents, contours)
    )
    return ShapeDataset(
        samples=samples, family=family, order=order, j2=j2, centre_offset=centre_offset
    )
