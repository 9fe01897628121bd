"""Exact two-sided and periodic discrete convolution of finite sequences via the DFT.

A two-sided sequence of order M maps indices {1-M, ..., M-1} to values and is
stored as a flat array of length 2M-1 with index 0 at array position M-1.
All transforms below use exact lengths; no power-of-two rounding is applied.
"""

from __future__ import annotations

import numpy as np

from .errors import BadOrder


def seq_order(a: np.ndarray) -> int:
    """Order M of a two-sided sequence stored as a length 2M-1 array."""
    a = np.asarray(a)
    if a.ndim != 1 or a.size % 2 == 0 or a.size == 0:
        raise BadOrder(f"two-sided sequence must have odd length, got shape {a.shape}")
    return (a.size + 1) // 2


def lags(order: int) -> np.ndarray:
    """Index set {1-M, ..., M-1} of a two-sided sequence of order M."""
    return np.arange(1 - order, order)


def fft_shift(a: np.ndarray) -> np.ndarray:
    """Reorder a two-sided sequence one-sidedly: negative indices go after positive ones."""
    return np.fft.ifftshift(np.asarray(a))


def fft_unshift(a: np.ndarray) -> np.ndarray:
    """Inverse of :func:`fft_shift`."""
    return np.fft.fftshift(np.asarray(a))


def pad(a: np.ndarray, order: int) -> np.ndarray:
    """Zero-pad a two-sided sequence to a larger order, preserving indices."""
    a = np.asarray(a)
    m = seq_order(a)
    if order < m:
        raise BadOrder(f"cannot pad order {m} down to order {order}")
    out = np.zeros(2 * order - 1, dtype=np.result_type(a.dtype, np.complex128))
    out[order - m : order + m - 1] = a
    return out


def two_sided_conv(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Two-sided convolution (a*b)_k = sum_{m+n=k} a_m b_n, order M+N-1.

    Both inputs are padded to the output order, shifted one-sidedly,
    multiplied in the DFT domain at exact length, and shifted back.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    k = seq_order(a) + seq_order(b) - 1
    fa = np.fft.fft(fft_shift(pad(a, k)))
    fb = np.fft.fft(fft_shift(pad(b, k)))
    return fft_unshift(np.fft.ifft(fa * fb))


def partial_periodic_extension(a: np.ndarray, order_b: int) -> np.ndarray:
    """Extend a periodically to order M+N-1, enough to convolve with an order-N sequence."""
    m = seq_order(np.asarray(a))
    idx = (lags(m + order_b - 1) + (m - 1)) % (2 * m - 1)
    return np.asarray(a)[idx]


def periodic_conv(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Convolve the (2M-1)-periodic extension of a with b, restricted to order M.

    Implemented by partially extending a to order M+N-1 and running the
    two-sided DFT pipeline at order M+2(N-1), then slicing the centre.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    m = seq_order(a)
    n = seq_order(b)
    full = two_sided_conv(partial_periodic_extension(a, n), b)
    k = m + 2 * (n - 1)
    return full[k - m : k + m - 1]
