"""Pullback metric, gradients, Christoffel symbols, and geodesic Taylor steps in chart coordinates."""

from __future__ import annotations

import numpy as np
import scipy.linalg

from .charts import (
    DEFAULT_NEWTON_MAX_ITER,
    DEFAULT_NEWTON_TOL,
    ConstraintSystem,
    GraphChart,
    embed,
)
from .errors import SingularMetric


def metric_at(chart: GraphChart) -> np.ndarray:
    """Metric components in the chart: identity plus the Gram matrix of the implicit Jacobian."""
    z = chart.d_zeta_tilde
    return np.eye(chart.dim) + z.T @ z


def _metric_cho(metric: np.ndarray):
    try:
        return scipy.linalg.cho_factor(metric)
    except (scipy.linalg.LinAlgError, ValueError) as exc:
        raise SingularMetric(str(exc)) from exc


def chart_partials(chart: GraphChart, dL_dtheta: np.ndarray) -> np.ndarray:
    """Partial derivatives of a loss with respect to the chart coordinates.

    Chain rule through the local parameterization: the i-th component is the
    ambient differential applied to the i-th coordinate tangent vector.
    """
    dL_dtheta = np.asarray(dL_dtheta, dtype=float)
    return chart.d_zeta_tilde.T @ dL_dtheta[chart.pivots] + dL_dtheta[chart.complement]


def gradient_at(
    chart: GraphChart,
    dL_dtheta: np.ndarray,
    dL_dalpha: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Gradient components relative to the product chart.

    The flat block is the plain Euclidean gradient; the manifold block solves
    the metric system g . c = dL in chart coordinates.
    """
    c_flat = (
        np.array([], dtype=float)
        if dL_dalpha is None
        else np.asarray(dL_dalpha, dtype=float).copy()
    )
    rhs = chart_partials(chart, dL_dtheta)
    c_man = scipy.linalg.cho_solve(_metric_cho(metric_at(chart)), rhs)
    return c_flat, c_man


def metric_derivatives(chart: GraphChart) -> np.ndarray:
    """Partial derivatives D[l, i, j] of the metric components along chart directions.

    Requires the second derivative of the implicit map on the chart.
    """
    if chart.d2_zeta_tilde is None:
        raise ValueError("chart has no d2_zeta_tilde; call chart_with_second_order first")
    z = chart.d_zeta_tilde
    t = chart.d2_zeta_tilde
    deriv = np.einsum("qi,qlj->lij", z, t) + np.einsum("qj,qli->lij", z, t)
    return deriv


def christoffel_at(chart: GraphChart) -> np.ndarray:
    """Christoffel symbols gamma[k, i, j] of the pullback metric at the base point.

    Flat-block symbols vanish identically and are never stored; only the
    manifold block is returned.
    """
    n = chart.dim
    deriv = metric_derivatives(chart)
    w = 0.5 * (deriv + np.swapaxes(deriv, 0, 1) - np.moveaxis(deriv, 0, 2))
    # w[i, j, l]; solve g . gamma[:, i, j] = w[i, j, :] for all (i, j) at once
    cho = _metric_cho(metric_at(chart))
    flat = scipy.linalg.cho_solve(cho, w.reshape(n * n, n).T)
    return flat.reshape(n, n, n)


def step_first_order(beta_star: np.ndarray, c_man: np.ndarray, h: float) -> np.ndarray:
    """First-order geodesic step in chart coordinates."""
    return np.asarray(beta_star) - h * np.asarray(c_man)


def step_second_order(
    beta_star: np.ndarray,
    c_man: np.ndarray,
    christoffel: np.ndarray,
    h: float,
) -> np.ndarray:
    """Second-order geodesic step: adds the Christoffel correction to the linear step."""
    c = np.asarray(c_man)
    correction = np.einsum("kij,i,j->k", christoffel, c, c)
    return np.asarray(beta_star) - h * c - 0.5 * h * h * correction


def retract(
    system: ConstraintSystem,
    chart: GraphChart,
    beta_new: np.ndarray,
    tol: float = DEFAULT_NEWTON_TOL,
    max_iter: int = DEFAULT_NEWTON_MAX_ITER,
    order: int = 1,
) -> np.ndarray:
    """Map chart coordinates back onto the constraint zero set.

    Raises NonConvergence when Newton fails; the caller is expected to halve
    the step and retry.
    """
    return embed(system, chart, beta_new, order=order, tol=tol, max_iter=max_iter)
