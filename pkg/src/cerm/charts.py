"""Graph-coordinate charts on the zero set of a constraint system.

A chart at a base point splits the constrained parameters into q pivot
coordinates v (dependent) and the remaining coordinates beta (free); the
zero set is locally the graph of an implicit map beta -> v whose first and
second derivatives are obtained by solving linear systems in the pivot
block of the constraint Jacobian.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg

from .errors import NonConvergence, NotOnManifold, RankDeficient, SingularPivotBlock

DEFAULT_KAPPA_MAX = 1e8
DEFAULT_NEWTON_TOL = 1e-11
DEFAULT_NEWTON_MAX_ITER = 25
_NEWTON_MAX_HALVINGS = 10


@dataclass(frozen=True)
class ConstraintSystem:
    """A twice differentiable map F: R^p_tilde -> R^q with q < p_tilde.

    eval_D2F_apply(theta, s1, s2) applies the bilinear second derivative
    of F at theta to the pair of directions (s1, s2).
    """

    p_tilde: int
    q: int
    eval_F: Callable[[np.ndarray], np.ndarray]
    eval_DF: Callable[[np.ndarray], np.ndarray]
    eval_D2F_apply: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]

    def __post_init__(self):
        if not 0 < self.q < self.p_tilde:
            raise ValueError(f"need 0 < q < p_tilde, got q={self.q}, p_tilde={self.p_tilde}")


@dataclass(frozen=True)
class PermutationNu:
    """Permutation assembling pivot coordinates v and free coordinates beta into theta."""

    pivots: np.ndarray
    complement: np.ndarray

    def assemble(self, v: np.ndarray, beta: np.ndarray) -> np.ndarray:
        theta = np.empty(self.pivots.size + self.complement.size)
        theta[self.pivots] = v
        theta[self.complement] = beta
        return theta

    def split(self, theta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        theta = np.asarray(theta)
        return theta[self.pivots], theta[self.complement]


@dataclass(frozen=True)
class GraphChart:
    """Graph chart of the constraint zero set at theta_star.

    d_zeta_tilde is the q x (p_tilde - q) Jacobian of the implicit map at the
    base point; d2_zeta_tilde, when computed, holds its second derivative with
    shape (q, p_tilde - q, p_tilde - q), symmetric in the last two indices.
    Instances are immutable and safe to share across workers.
    """

    theta_star: np.ndarray
    pivots: np.ndarray
    complement: np.ndarray
    beta_star: np.ndarray
    d_zeta_tilde: np.ndarray
    d2_zeta_tilde: np.ndarray | None = None

    @property
    def nu(self) -> PermutationNu:
        return PermutationNu(self.pivots, self.complement)

    @property
    def dim(self) -> int:
        return self.complement.size

    @property
    def v_star(self) -> np.ndarray:
        return self.theta_star[self.pivots]


def _complement_of(pivots: np.ndarray, p_tilde: int) -> np.ndarray:
    mask = np.ones(p_tilde, dtype=bool)
    mask[pivots] = False
    return np.flatnonzero(mask)


def select_pivots(jacobian: np.ndarray, kappa_max: float = DEFAULT_KAPPA_MAX) -> np.ndarray:
    """Pick q columns of the constraint Jacobian forming a well-conditioned block.

    Uses column-pivoted QR, so the selection is deterministic and near
    optimal in conditioning.
    """
    jacobian = np.asarray(jacobian, dtype=float)
    q = jacobian.shape[0]
    _, _, perm = scipy.linalg.qr(jacobian, mode="economic", pivoting=True)
    pivots = np.sort(perm[:q])
    cond = np.linalg.cond(jacobian[:, pivots])
    if not np.isfinite(cond) or cond > kappa_max:
        raise RankDeficient(
            f"best pivot block has condition {cond:.3e} > kappa_max {kappa_max:.3e}"
        )
    return pivots


def solve_dzeta(system: ConstraintSystem, chart: GraphChart) -> np.ndarray:
    """First derivative of the implicit map: D_v F . dzeta = -D_beta F at the base point."""
    jac = np.asarray(system.eval_DF(chart.theta_star), dtype=float)
    block = jac[:, chart.pivots]
    rhs = -jac[:, chart.complement]
    try:
        return np.linalg.solve(block, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularPivotBlock(str(exc)) from exc


def chart_at(
    system: ConstraintSystem,
    theta_star: np.ndarray,
    kappa_max: float = DEFAULT_KAPPA_MAX,
    tol: float = 1e-8,
    pivots: np.ndarray | None = None,
) -> GraphChart:
    """Build the graph chart at a point of the zero set.

    Pivot columns are chosen by :func:`select_pivots` unless given explicitly.
    """
    theta_star = np.asarray(theta_star, dtype=float).copy()
    residual = np.max(np.abs(system.eval_F(theta_star)))
    if residual > tol:
        raise NotOnManifold(f"constraint residual {residual:.3e} exceeds tol {tol:.3e}")
    if pivots is None:
        pivots = select_pivots(system.eval_DF(theta_star), kappa_max)
    else:
        pivots = np.sort(np.asarray(pivots, dtype=int))
    complement = _complement_of(pivots, system.p_tilde)
    chart = GraphChart(
        theta_star=theta_star,
        pivots=pivots,
        complement=complement,
        beta_star=theta_star[complement].copy(),
        d_zeta_tilde=np.zeros((system.q, system.p_tilde - system.q)),
    )
    return dataclasses.replace(chart, d_zeta_tilde=solve_dzeta(system, chart))


def solve_d2zeta(system: ConstraintSystem, chart: GraphChart) -> np.ndarray:
    """Second derivative of the implicit map, shape (q, dim, dim).

    Column (i, j) solves D_v F . y = -D^2 F[(dzeta_i, e_i), (dzeta_j, e_j)].
    """
    q, dim = system.q, chart.dim
    jac = np.asarray(system.eval_DF(chart.theta_star), dtype=float)
    try:
        lu = scipy.linalg.lu_factor(jac[:, chart.pivots])
    except (scipy.linalg.LinAlgError, ValueError) as exc:
        raise SingularPivotBlock(str(exc)) from exc

    directions = np.zeros((dim, system.p_tilde))
    for i in range(dim):
        directions[i, chart.pivots] = chart.d_zeta_tilde[:, i]
        directions[i, chart.complement[i]] = 1.0

    tensor = np.empty((q, dim, dim))
    for i in range(dim):
        for j in range(i, dim):
            rhs = -np.asarray(
                system.eval_D2F_apply(chart.theta_star, directions[i], directions[j])
            )
            col = scipy.linalg.lu_solve(lu, rhs)
            tensor[:, i, j] = col
            tensor[:, j, i] = col
    return tensor


def chart_with_second_order(system: ConstraintSystem, chart: GraphChart) -> GraphChart:
    """Copy of the chart carrying the second derivative of the implicit map."""
    if chart.d2_zeta_tilde is not None:
        return chart
    return dataclasses.replace(chart, d2_zeta_tilde=solve_d2zeta(system, chart))


def newton_refine(
    system: ConstraintSystem,
    pivots: np.ndarray,
    beta: np.ndarray,
    v0: np.ndarray,
    tol: float = DEFAULT_NEWTON_TOL,
    max_iter: int = DEFAULT_NEWTON_MAX_ITER,
) -> np.ndarray:
    """Solve F(theta) = 0 for the pivot coordinates v, holding beta fixed.

    Newton iteration on v with a half-step fallback whenever the residual
    would increase.
    """
    pivots = np.asarray(pivots, dtype=int)
    complement = _complement_of(pivots, system.p_tilde)
    nu = PermutationNu(pivots, complement)
    v = np.asarray(v0, dtype=float).copy()
    beta = np.asarray(beta, dtype=float)

    residual = np.asarray(system.eval_F(nu.assemble(v, beta)), dtype=float)
    norm = np.max(np.abs(residual))
    for _ in range(max_iter):
        if norm <= tol:
            return v
        block = np.asarray(system.eval_DF(nu.assemble(v, beta)), dtype=float)[:, pivots]
        try:
            delta = np.linalg.solve(block, residual)
        except np.linalg.LinAlgError as exc:
            raise SingularPivotBlock(str(exc)) from exc
        step = 1.0
        for _ in range(_NEWTON_MAX_HALVINGS):
            v_new = v - step * delta
            res_new = np.asarray(system.eval_F(nu.assemble(v_new, beta)), dtype=float)
            norm_new = np.max(np.abs(res_new))
            if norm_new < norm or norm_new <= tol:
                break
            step *= 0.5
        v, residual, norm = v_new, res_new, norm_new
    if norm <= tol:
        return v
    raise NonConvergence(max_iter, norm)


def embed(
    system: ConstraintSystem,
    chart: GraphChart,
    beta: np.ndarray,
    order: int = 1,
    tol: float = DEFAULT_NEWTON_TOL,
    max_iter: int = DEFAULT_NEWTON_MAX_ITER,
) -> np.ndarray:
    """Evaluate the inverse chart at beta: Taylor seed for v, then Newton refinement."""
    beta = np.asarray(beta, dtype=float)
    d = beta - chart.beta_star
    v_seed = chart.v_star + chart.d_zeta_tilde @ d
    if order >= 2:
        if chart.d2_zeta_tilde is None:
            raise ValueError("second-order seed requested but chart has no d2_zeta_tilde")
        v_seed = v_seed + 0.5 * np.einsum("qij,i,j->q", chart.d2_zeta_tilde, d, d)
    v = newton_refine(system, chart.pivots, beta, v_seed, tol=tol, max_iter=max_iter)
    return chart.nu.assemble(v, beta)


def product_system(*systems: ConstraintSystem) -> ConstraintSystem:
    """Block-diagonal product of independent constraint systems."""
    p_total = sum(s.p_tilde for s in systems)
    q_total = sum(s.q for s in systems)
    p_splits = np.cumsum([s.p_tilde for s in systems])[:-1]

    def eval_F(theta):
        return np.concatenate(
            [s.eval_F(part) for s, part in zip(systems, np.split(np.asarray(theta), p_splits))]
        )

    def eval_DF(theta):
        jac = np.zeros((q_total, p_total))
        row = col = 0
        for s, part in zip(systems, np.split(np.asarray(theta), p_splits)):
            jac[row : row + s.q, col : col + s.p_tilde] = s.eval_DF(part)
            row += s.q
            col += s.p_tilde
        return jac

    def eval_D2F_apply(theta, s1, s2):
        thetas = np.split(np.asarray(theta), p_splits)
        s1s = np.split(np.asarray(s1), p_splits)
        s2s = np.split(np.asarray(s2), p_splits)
        return np.concatenate(
            [s.eval_D2F_apply(t, a, b) for s, t, a, b in zip(systems, thetas, s1s, s2s)]
        )

    return ConstraintSystem(p_total, q_total, eval_F, eval_DF, eval_D2F_apply)


def finite_difference_system(
    eval_F: Callable[[np.ndarray], np.ndarray],
    p_tilde: int,
    q: int,
    eps: float = 1e-6,
) -> ConstraintSystem:
    """Wrap a constraint map with central-difference derivatives.

    Intended for tests and prototyping only; analytic derivatives should be
    supplied for production constraint systems.
    """

    def eval_DF(theta):
        theta = np.asarray(theta, dtype=float)
        jac = np.empty((q, p_tilde))
        for i in range(p_tilde):
            e = np.zeros(p_tilde)
            e[i] = eps
            jac[:, i] = (eval_F(theta + e) - eval_F(theta - e)) / (2 * eps)
        return jac

    def eval_D2F_apply(theta, s1, s2):
        theta = np.asarray(theta, dtype=float)
        s1 = np.asarray(s1, dtype=float)
        s2 = np.asarray(s2, dtype=float)
        h = eps
        plus = eval_DF(theta + h * s2) @ s1
        minus = eval_DF(theta - h * s2) @ s1
        return (plus - minus) / (2 * h)

    return ConstraintSystem(p_tilde, q, eval_F, eval_DF, eval_D2F_apply)
