"""Wavelet machinery: refinement masks, the periodic DWT pyramid, scaling-function
evaluation, and approximation-coefficient initialization for periodic signals.

Coefficient arrays at level j have length 2^j and represent one period of a
2^j-periodic sequence; array position i holds the coefficient with spatial
index i for i < 2^(j-1) and i - 2^j otherwise, i.e. normalized time i / 2^j.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dftconv import lags, seq_order
from .errors import JTooSmall, LengthMismatch, OddLength, RangeEmpty
from .systems import SQRT2, WaveletFilter


def _filter_values(h) -> np.ndarray:
    if isinstance(h, WaveletFilter):
        return h.values
    return np.asarray(h, dtype=float)


def mask_eval(h, xi) -> np.ndarray:
    """Refinement mask H(xi) = 2^(-1/2) sum_k h_k exp(-2 pi i xi k); accepts complex xi."""
    h = _filter_values(h)
    ks = lags(seq_order(h))
    xi = np.asarray(xi, dtype=complex)
    return np.exp(-2j * np.pi * np.multiply.outer(xi, ks)) @ h.astype(complex) / SQRT2


def highpass_from_lowpass(h) -> np.ndarray:
    """High-pass filter g_k = (-1)^(k-1) h_{1-k}, widened by one order to hold the shift."""
    h = _filter_values(h)
    m = seq_order(h)
    out = np.zeros(2 * (m + 1) - 1)
    for k in range(1 - m, m + 1):  # support of g is {2-m, ..., m}
        src = 1 - k
        if 1 - m <= src <= m - 1:
            out[k + m] = (-1.0) ** (k - 1) * h[src + m - 1]
    return out


def _analysis(x: np.ndarray, taps: np.ndarray, tap_lags: np.ndarray) -> np.ndarray:
    """Downsampled circular correlation: out[k] = sum_m taps[m] x[(2k + lag_m) mod n]."""
    n = x.size
    idx = (2 * np.arange(n // 2)[:, None] + tap_lags[None, :]) % n
    return x[idx] @ taps


def _synthesis(coeffs: np.ndarray, taps: np.ndarray, tap_lags: np.ndarray, n: int) -> np.ndarray:
    """Circular convolution of the zero-upsampled coefficients with the filter."""
    up = np.zeros(n, dtype=coeffs.dtype)
    up[::2] = coeffs
    idx = (np.arange(n)[:, None] - tap_lags[None, :]) % n
    return up[idx] @ taps


def dwt_level_periodic(a_next: np.ndarray, h) -> tuple[np.ndarray, np.ndarray]:
    """One analysis level of the periodic pyramid.

    Returns approximation and detail coefficients of half the input length;
    periodic wraparound handles any even length, including filters longer
    than the signal.
    """
    a_next = np.asarray(a_next, dtype=float)
    if a_next.size % 2 != 0 or a_next.size == 0:
        raise OddLength(f"periodic analysis needs even input length, got {a_next.size}")
    h = _filter_values(h)
    g = highpass_from_lowpass(h)
    a = _analysis(a_next, h, lags(seq_order(h)))
    d = _analysis(a_next, g, lags(seq_order(g)))
    return a, d


def idwt_level_periodic(a: np.ndarray, d: np.ndarray, h) -> np.ndarray:
    """One synthesis level of the periodic pyramid."""
    a = np.asarray(a, dtype=float)
    d = np.asarray(d, dtype=float)
    if a.size != d.size:
        raise LengthMismatch(f"approximation/detail lengths differ: {a.size} vs {d.size}")
    h = _filter_values(h)
    g = highpass_from_lowpass(h)
    n = 2 * a.size
    return _synthesis(a, h, lags(seq_order(h)), n) + _synthesis(d, g, lags(seq_order(g)), n)


@dataclass(frozen=True)
class MultiresDecomp:
    """Approximation coefficients at level j0 plus details at levels j0..j1-1.

    Levels j1..j2-1 carry no stored details; reconstruction uses zeros there.
    """

    j0: int
    j1: int
    j2: int
    approx: np.ndarray
    details: tuple[np.ndarray, ...]

    def __post_init__(self):
        if not self.j0 <= self.j1 <= self.j2:
            raise ValueError(f"need j0 <= j1 <= j2, got {self.j0}, {self.j1}, {self.j2}")
        if self.approx.size != 2**self.j0:
            raise LengthMismatch(f"approx must have length {2 ** self.j0}")
        if len(self.details) != self.j1 - self.j0:
            raise LengthMismatch(f"expected {self.j1 - self.j0} detail levels")
        for offset, det in enumerate(self.details):
            if det.size != 2 ** (self.j0 + offset):
                raise LengthMismatch(f"detail level {self.j0 + offset} has wrong length")

    def coefficient_count(self) -> int:
        return self.approx.size + sum(d.size for d in self.details)

    def to_json(self) -> dict:
        return {
            "j0": self.j0,
            "j1": self.j1,
            "j2": self.j2,
            "approx": self.approx.tolist(),
            "details": [d.tolist() for d in self.details],
        }

    @classmethod
    def from_json(cls, payload: dict) -> "MultiresDecomp":
        return cls(
            j0=int(payload["j0"]),
            j1=int(payload["j1"]),
            j2=int(payload["j2"]),
            approx=np.asarray(payload["approx"], dtype=float),
            details=tuple(np.asarray(d, dtype=float) for d in payload["details"]),
        )


def wavedec(a_top: np.ndarray, h, j0: int, j1: int) -> MultiresDecomp:
    """Multi-level periodic analysis of top-level approximation coefficients.

    Details at levels j1..j2-1 are discarded, matching a decoder that
    reconstructs those levels without detail coefficients.
    """
    a_top = np.asarray(a_top, dtype=float)
    j2 = int(round(math.log2(a_top.size)))
    if 2**j2 != a_top.size:
        raise LengthMismatch(f"top level length {a_top.size} is not a power of two")
    if not j0 <= j1 <= j2:
        raise ValueError(f"need j0 <= j1 <= j2, got {j0}, {j1}, {j2}")
    details: list[np.ndarray] = []
    a = a_top
    for j in range(j2 - 1, j0 - 1, -1):
        a, d = dwt_level_periodic(a, h)
        if j < j1:
            details.append(d)
    return MultiresDecomp(j0=j0, j1=j1, j2=j2, approx=a, details=tuple(reversed(details)))


def waverec(decomp: MultiresDecomp, h) -> np.ndarray:
    """Reconstruct top-level approximation coefficients from a decomposition."""
    a = decomp.approx
    for j in range(decomp.j0, decomp.j2):
        if j < decomp.j1:
            d = decomp.details[j - decomp.j0]
        else:
            d = np.zeros_like(a)
        a = idwt_level_periodic(a, d, h)
    return a


def cascade_phi(h, depth: int = 14, grid_size: int = 2**14) -> tuple[np.ndarray, np.ndarray]:
    """Sample the scaling function on a uniform grid via its Fourier transform.

    The transform is approximated by the depth-truncated product of dilated
    refinement masks and inverted with an exact-length FFT. Returns the time
    grid and the sampled values; the grid covers a power-of-two window
    containing the support [1-M, M-1].
    """
    h = _filter_values(h)
    m = seq_order(h)
    window = 2 ** math.ceil(math.log2(2 * m))
    n = grid_size
    xi = (np.arange(n) - n // 2) / window
    product = np.ones(n, dtype=complex)
    for j in range(1, depth + 1):
        product *= mask_eval(h, xi / 2**j)
    values = np.fft.fftshift(np.fft.ifft(np.fft.ifftshift(product))) * (n / window)
    t = (np.arange(n) - n // 2) * (window / n)
    return t, values.real


def min_resolution_level(order: int) -> int:
    """Smallest level at which the two-sided sample window fits the filter support."""
    r1 = r2 = order - 1
    lo = math.ceil(math.log2(r1 + 1) + 1)
    hi = math.ceil(math.log2(r2 - 1) + 1) if r2 > 1 else 1
    return max(lo, hi)


def init_coeffs_from_samples(sampler, j1: int, order: int) -> np.ndarray:
    """Top-level coefficients as scaled samples of a 1-periodic signal.

    sampler(t) evaluates the signal at normalized times (vectorized). The
    returned array follows the module's periodic window layout.
    """
    if j1 < min_resolution_level(order):
        raise JTooSmall(
            f"level {j1} below minimum {min_resolution_level(order)} for order {order}"
        )
    t = np.arange(2**j1) / 2**j1
    return 2.0 ** (-j1 / 2) * np.asarray(sampler(t), dtype=float)


def init_coeffs_from_fourier(
    fourier: np.ndarray,
    tau: float,
    h,
    j: int,
    depth: int = 30,
) -> tuple[np.ndarray, np.ndarray]:
    """Approximation coefficients of a periodic signal from its Fourier coefficients.

    fourier holds the one-sided coefficients (index m = 0..N-1) of a real
    tau-periodic signal. Returns (k_indices, coefficients) over the admissible
    index range where the inner product against the dilated scaling function
    reduces to a weighted Fourier sum; the mask product is truncated at the
    given depth, far below machine precision per factor.
    """
    h = _filter_values(h)
    m_order = seq_order(h)
    r1 = r2 = m_order - 1
    k_lo = math.ceil(r1 - 2**j * tau)
    k_hi = math.floor(2**j * tau - r2)
    if k_lo > k_hi:
        raise RangeEmpty(f"no admissible indices at level {j} for order {m_order}")
    fourier = np.asarray(fourier, dtype=complex)
    n_coef = fourier.size
    ms = np.arange(1 - n_coef, n_coef)
    two_sided = np.concatenate([np.conj(fourier[:0:-1]), fourier])

    product = np.ones(ms.size, dtype=complex)
    for n in range(1, depth + 1):
        product *= mask_eval(h, -ms / (tau * 2.0 ** (j + n)))

    ks = np.arange(k_lo, k_hi + 1)
    omega = 2 * np.pi / tau
    phases = np.exp(1j * omega * np.multiply.outer(ks, ms) / 2**j)
    coeffs = 2.0 ** (-j / 2) * (phases @ (two_sided * product))
    return ks, coeffs.real
