"""Closed-curve representation: arc-length Fourier parameterization, coefficient
truncation, the area-integral midpoint, canonical start, and a rasterized dice metric."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, replace

import numpy as np

from .dftconv import two_sided_conv
from .errors import DegeneratePolygon, EmptyMask, ZeroArea


@dataclass(frozen=True)
class PeriodicContour:
    """A simple closed curve stored as one-sided Fourier coefficients per component.

    fourier has shape (2, N) with coefficient index m = 0..N-1 in normalized
    time; the curve is real, so the negative coefficients are conjugates.
    Orientation is normalized to anticlockwise at construction.
    """

    fourier: np.ndarray
    tau: float
    midpoint: np.ndarray
    anticlockwise: bool = True

    @property
    def n_coeffs(self) -> int:
        return self.fourier.shape[1]

    def to_json(self) -> dict:
        return {
            "tau": self.tau,
            "midpoint": self.midpoint.tolist(),
            "fourier": [
                [[float(c.real), float(c.imag)] for c in comp] for comp in self.fourier
            ],
        }

    @classmethod
    def from_json(cls, payload: dict) -> "PeriodicContour":
        four = np.array(
            [[complex(re, im) for re, im in comp] for comp in payload["fourier"]]
        )
        return cls(
            fourier=four,
            tau=float(payload["tau"]),
            midpoint=np.asarray(payload["midpoint"], dtype=float),
        )


def save_contour(contour: PeriodicContour, path) -> None:
    with open(path, "w") as fh:
        json.dump(contour.to_json(), fh)


def load_contour(path) -> PeriodicContour:
    with open(path) as fh:
        return PeriodicContour.from_json(json.load(fh))


def load_points_csv(path) -> np.ndarray:
    """Read a polygon from a CSV of x,y rows."""
    with open(path, newline="") as fh:
        rows = [(float(r[0]), float(r[1])) for r in csv.reader(fh) if r]
    return np.asarray(rows, dtype=float)


def signed_area(points: np.ndarray) -> float:
    """Shoelace signed area; positive for anticlockwise polygons."""
    x = points[:, 0]
    y = points[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def contour_from_points(points: np.ndarray, n_coeffs: int = 64) -> PeriodicContour:
    """Arc-length Fourier parameterization of a closed polygon.

    The polygon is resampled by linear interpolation at 2N-1 equispaced
    normalized times and transformed with the DFT; only the one-sided
    coefficients m = 0..N-1 are stored. Clockwise input is reversed first.
    """
    points = np.asarray(points, dtype=float)
    if points.ndim != 2 or points.shape[1] != 2 or points.shape[0] < 3:
        raise DegeneratePolygon(f"need at least 3 planar points, got shape {points.shape}")
    area = signed_area(points)
    scale = np.max(np.abs(points - points.mean(axis=0))) + 1e-300
    if abs(area) < 1e-12 * scale**2:
        raise DegeneratePolygon(f"polygon area {area:.3e} is numerically zero")
    if area < 0:
        points = points[::-1]

    closed = np.vstack([points, points[:1]])
    seglen = np.linalg.norm(np.diff(closed, axis=0), axis=1)
    tau = float(seglen.sum())
    if tau <= 0:
        raise DegeneratePolygon("polygon has zero perimeter")
    knots = np.concatenate([[0.0], np.cumsum(seglen)]) / tau

    n_samp = 2 * n_coeffs - 1
    t = np.arange(n_samp) / n_samp
    resampled = np.column_stack(
        [np.interp(t, knots, closed[:, 0]), np.interp(t, knots, closed[:, 1])]
    )
    spectrum = np.fft.fft(resampled, axis=0) / n_samp
    contour = PeriodicContour(
        fourier=spectrum[:n_coeffs].T.copy(),
        tau=tau,
        midpoint=np.zeros(2),
        anticlockwise=True,
    )
    return replace(contour, midpoint=np.asarray(midpoint_green(contour)))


def eval_contour(contour: PeriodicContour, t) -> np.ndarray:
    """Evaluate the curve at normalized times; shape (..., 2).

    Real-signal reconstruction from the one-sided coefficients:
    x(t) = Re eta_0 + 2 Re sum_{m>=1} eta_m exp(2 pi i m t).
    """
    t = np.asarray(t, dtype=float)
    ms = np.arange(1, contour.n_coeffs)
    phases = np.exp(2j * np.pi * np.multiply.outer(t, ms))
    out = np.empty(t.shape + (2,))
    for s in range(2):
        out[..., s] = contour.fourier[s, 0].real + 2.0 * (phases @ contour.fourier[s, 1:]).real
    return out


def _line_fit_residual(ms: np.ndarray, cums: np.ndarray) -> float:
    if ms.size < 3:
        return 0.0
    design = np.column_stack([ms, np.ones_like(ms)])
    coef, *_ = np.linalg.lstsq(design, cums, rcond=None)
    return float(np.linalg.norm(cums - design @ coef))


def truncate_fourier(contour: PeriodicContour, delta: float = 0.1) -> PeriodicContour:
    """Zero out coefficients beyond the order where their cumulative size goes flat.

    For each component, the critical order is the smallest start index whose
    cumulative magnitude sums are fit by a line with residual below delta;
    everything strictly above it is set to zero. Components with no such
    order are left untouched.
    """
    fourier = contour.fourier.copy()
    n = contour.n_coeffs
    for s in range(2):
        mags = np.abs(fourier[s])
        for m0 in range(1, n):
            ms = np.arange(m0, n, dtype=float)
            cums = np.cumsum(mags[m0:])
            if _line_fit_residual(ms, cums) < delta:
                fourier[s, m0 + 1 :] = 0.0
                break
    return replace(contour, fourier=fourier)


def _two_sided(coeffs: np.ndarray) -> np.ndarray:
    """One-sided coefficients of a real signal to the full two-sided array."""
    return np.concatenate([np.conj(coeffs[:0:-1]), coeffs])


def midpoint_green(contour: PeriodicContour) -> tuple[float, float]:
    """Centroid of the enclosed region from the Fourier coefficients.

    Area integrals of the coordinate functions reduce to zero-lag values of
    triple convolutions of the coefficients with those of the derivative.
    """
    eta = [_two_sided(contour.fourier[s]) for s in range(2)]
    ms = np.arange(1 - contour.n_coeffs, contour.n_coeffs)
    deriv = [2j * np.pi * ms * eta[s] for s in range(2)]

    den_arr = two_sided_conv(eta[0], deriv[1])
    den = den_arr[den_arr.size // 2].real
    if abs(den) < 1e-14:
        raise ZeroArea(f"contour area integral {den:.3e} vanishes")

    xy = two_sided_conv(eta[0], eta[1])
    out = []
    for s in range(2):
        num_arr = two_sided_conv(xy, deriv[s])
        num = num_arr[num_arr.size // 2].real
        sign = -1.0 if s == 0 else 1.0
        out.append(sign * num / den)
    return float(out[0]), float(out[1])


def canonical_start(points: np.ndarray, centre: np.ndarray) -> np.ndarray:
    """Cyclically shift a polygon to start at the point of angle nearest zero.

    The angle is measured from the centre; ties between symmetric candidates
    prefer a non-negative second component, then the lowest index.
    """
    points = np.asarray(points, dtype=float)
    rel = points - np.asarray(centre, dtype=float)
    norms = np.linalg.norm(rel, axis=1)
    cosines = rel[:, 0] / np.maximum(norms, 1e-300)
    best = np.max(cosines)
    candidates = np.flatnonzero(cosines >= best - 1e-12)
    upper = candidates[rel[candidates, 1] >= 0]
    k_star = int(upper[0] if upper.size else candidates[0])
    return np.roll(points, -k_star, axis=0)


def _rasterize(poly: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Even-odd scanline rasterization of a polygon onto a lattice."""
    x0, y0 = poly[:, 0], poly[:, 1]
    x1, y1 = np.roll(x0, -1), np.roll(y0, -1)
    mask = np.zeros((ys.size, xs.size), dtype=bool)
    for row, y in enumerate(ys):
        hits = (y0 <= y) != (y1 <= y)
        if not hits.any():
            continue
        t = (y - y0[hits]) / (y1[hits] - y0[hits])
        crossings = np.sort(x0[hits] + t * (x1[hits] - x0[hits]))
        inside = np.searchsorted(crossings, xs, side="right") % 2 == 1
        mask[row] = inside
    return mask


def rasterized_dice(
    contour_a: PeriodicContour,
    contour_b: PeriodicContour,
    grid_n: int = 512,
    n_samples: int = 2048,
) -> float:
    """Dice overlap of two closed curves on a shared lattice over their joint bounding box."""
    polys = [eval_contour(c, np.arange(n_samples) / n_samples) for c in (contour_a, contour_b)]
    allpts = np.vstack(polys)
    lo = allpts.min(axis=0)
    hi = allpts.max(axis=0)
    margin = 0.01 * np.max(hi - lo) + 1e-12
    lo -= margin
    hi += margin
    xs = lo[0] + (np.arange(grid_n) + 0.5) * (hi[0] - lo[0]) / grid_n
    ys = lo[1] + (np.arange(grid_n) + 0.5) * (hi[1] - lo[1]) / grid_n
    mask_a = _rasterize(polys[0], xs, ys)
    mask_b = _rasterize(polys[1], xs, ys)
    total = int(mask_a.sum()) + int(mask_b.sum())
    if mask_a.sum() == 0 or mask_b.sum() == 0:
        raise EmptyMask("a contour rasterized to an empty mask")
    return 2.0 * int((mask_a & mask_b).sum()) / total
