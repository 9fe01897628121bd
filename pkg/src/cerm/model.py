"""Coefficient-head decoder: latent features -> wavelet coefficients -> curve,
with a hand-written adjoint through the reconstruction pyramid."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dftconv import lags, seq_order
from .wavelets import _analysis, _synthesis, highpass_from_lowpass


def quadratic_features(latent: np.ndarray) -> np.ndarray:
    """Degree-2 monomial features: constant, linear, and upper-triangle products."""
    z = np.asarray(latent, dtype=float)
    iu = np.triu_indices(z.size)
    return np.concatenate([[1.0], z, (z[:, None] * z[None, :])[iu]])


def feature_dim(latent_dim: int) -> int:
    return 1 + latent_dim + latent_dim * (latent_dim + 1) // 2


@dataclass
class CoeffHeadModel:
    """Linear head on standardized quadratic latent features, one filter per component.

    weights_v[s] maps features to the coarse approximation coefficients of
    component s; weights_w[s][i] to the detail coefficients at level j0 + i.
    Filter arrays always satisfy the QMF residual bound during training; the
    head weights are unconstrained.
    """

    j0: int
    j1: int
    j2: int
    weights_v: list[np.ndarray]
    weights_w: list[list[np.ndarray]]
    filters: list[np.ndarray]
    feat_mean: np.ndarray
    feat_scale: np.ndarray

    @classmethod
    def zeros(
        cls,
        latent_dim: int,
        j0: int,
        j1: int,
        j2: int,
        filters: list[np.ndarray],
        feat_mean: np.ndarray | None = None,
        feat_scale: np.ndarray | None = None,
    ) -> "CoeffHeadModel":
        n_feat = feature_dim(latent_dim)
        return cls(
            j0=j0,
            j1=j1,
            j2=j2,
            weights_v=[np.zeros((2**j0, n_feat)) for _ in range(2)],
            weights_w=[
                [np.zeros((2**j, n_feat)) for j in range(j0, j1)] for _ in range(2)
            ],
            filters=[np.asarray(f, dtype=float).copy() for f in filters],
            feat_mean=np.zeros(n_feat) if feat_mean is None else feat_mean,
            feat_scale=np.ones(n_feat) if feat_scale is None else feat_scale,
        )

    def features(self, latent: np.ndarray) -> np.ndarray:
        return (quadratic_features(latent) - self.feat_mean) / self.feat_scale

    # -- flat/manifold parameter vector interface ---------------------------------
    def flat_params(self) -> np.ndarray:
        parts = [w.ravel() for w in self.weights_v]
        for comp in self.weights_w:
            parts.extend(w.ravel() for w in comp)
        return np.concatenate(parts) if parts else np.array([])

    def set_flat_params(self, alpha: np.ndarray) -> None:
        pos = 0
        for s in range(2):
            size = self.weights_v[s].size
            self.weights_v[s] = alpha[pos : pos + size].reshape(self.weights_v[s].shape).copy()
            pos += size
        for s in range(2):
            for i, w in enumerate(self.weights_w[s]):
                self.weights_w[s][i] = alpha[pos : pos + w.size].reshape(w.shape).copy()
                pos += w.size

    def filter_params(self) -> np.ndarray:
        return np.concatenate(self.filters)

    def set_filter_params(self, theta: np.ndarray) -> None:
        n = self.filters[0].size
        self.filters = [theta[:n].copy(), theta[n : 2 * n].copy()]


def forward(model: CoeffHeadModel, latent: np.ndarray) -> tuple[np.ndarray, dict]:
    """Decode a latent to per-component top-level coefficients, caching the pyramid."""
    phi = model.features(latent)
    cache: dict = {"phi": phi, "levels": []}
    outputs = []
    for s in range(2):
        h = model.filters[s]
        g = highpass_from_lowpass(h)
        a = model.weights_v[s] @ phi
        levels = []
        for j in range(model.j0, model.j2):
            d = (
                model.weights_w[s][j - model.j0] @ phi
                if j < model.j1
                else np.zeros_like(a)
            )
            levels.append((a, d))
            n = 2 * a.size
            a = _synthesis(a, h, lags(seq_order(h)), n) + _synthesis(
                d, g, lags(seq_order(g)), n
            )
        cache["levels"].append(levels)
        outputs.append(a)
    return np.vstack(outputs), cache


def _filter_grad(upstream: np.ndarray, coeffs: np.ndarray, tap_lags: np.ndarray) -> np.ndarray:
    """d(synthesis)/d(taps) applied to the upstream signal: correlations at each lag."""
    n = upstream.size
    idx = (2 * np.arange(coeffs.size)[:, None] + tap_lags[None, :]) % n
    return coeffs @ upstream[idx]


def backward(
    model: CoeffHeadModel,
    latent: np.ndarray,
    upstream: np.ndarray,
    cache: dict | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Adjoint of :func:`forward`: flat-weight gradients and ambient filter partials.

    upstream has shape (2, 2^j2), the loss partials with respect to the
    decoded coefficients. Coefficient gradients propagate down the pyramid by
    correlation with the filters; filter gradients accumulate correlations of
    the upsampled coefficients with the upstream signal, with the high-pass
    contributions mapped back through the alternating-flip relation.
    """
    if cache is None:
        _, cache = forward(model, latent)
    phi = cache["phi"]
    grad_v = [np.zeros_like(w) for w in model.weights_v]
    grad_w = [[np.zeros_like(w) for w in comp] for comp in model.weights_w]
    grad_h = [np.zeros_like(f) for f in model.filters]

    m = seq_order(model.filters[0])
    h_lags = lags(m)
    g_lags = lags(m + 1)

    for s in range(2):
        h = model.filters[s]
        g = highpass_from_lowpass(h)
        u = np.asarray(upstream[s], dtype=float)
        for j in range(model.j2 - 1, model.j0 - 1, -1):
            a, d = cache["levels"][s][j - model.j0]
            gh = _filter_grad(u, a, h_lags)
            gg = _filter_grad(u, d, g_lags) if j < model.j1 else np.zeros(g.size)
            # g_k = (-1)^(k-1) h_{1-k}: fold the high-pass gradient back onto h
            for pos, k in enumerate(h_lags):
                gk = 1 - k
                gh[pos] += (-1.0) ** k * gg[gk + m]
            grad_h[s] += gh
            u_detail = _analysis(u, g, g_lags)
            if j < model.j1:
                grad_w[s][j - model.j0] += np.outer(u_detail, phi)
            u = _analysis(u, h, h_lags)
        grad_v[s] += np.outer(u, phi)

    parts = [gw.ravel() for gw in grad_v]
    for comp in grad_w:
        parts.extend(w.ravel() for w in comp)
    return np.concatenate(parts), np.concatenate(grad_h)


def curve_loss(pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    """Sum over components of the l2 coefficient error, with analytic partials.

    Partials are the normalized residual directions; the zero subgradient is
    returned at exactly zero residual.
    """
    pred = np.asarray(pred, dtype=float)
    target = np.asarray(target, dtype=float)
    grads = np.zeros_like(pred)
    loss = 0.0
    for s in range(pred.shape[0]):
        residual = pred[s] - target[s]
        norm = float(np.linalg.norm(residual))
        loss += norm
        if norm > 0:
            grads[s] = residual / norm
    return loss, grads
