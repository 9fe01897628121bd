"""Geodesic SGD on the product of a flat block and an implicit constraint manifold."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .charts import ConstraintSystem, GraphChart, chart_at, chart_with_second_order, embed
from .errors import NonConvergence, StepRejected
from .riemann import (
    chart_partials,
    christoffel_at,
    gradient_at,
    metric_at,
    step_first_order,
    step_second_order,
)


@dataclass
class ProductPoint:
    """A point (alpha, theta) with alpha unconstrained and theta on the manifold."""

    alpha: np.ndarray
    theta: np.ndarray

    def copy(self) -> "ProductPoint":
        return ProductPoint(self.alpha.copy(), self.theta.copy())


@dataclass(frozen=True)
class Objective:
    """Loss with ambient Euclidean partials; batch semantics belong to the objective.

    eval(point, batch) returns a scalar; eval_partials(point, batch) returns
    (dL/dalpha, dL/dtheta). Both must be deterministic given the batch id.
    """

    eval: Callable[[ProductPoint, int], float]
    eval_partials: Callable[[ProductPoint, int], tuple[np.ndarray, np.ndarray]]


@dataclass
class SgdConfig:
    step_order: int = 1
    manifold_lr: float = 1e-2
    manifold_lr_start: float = 1e-4
    flat_lr: float = 2e-4
    flat_lr_start: float = 1e-5
    warmup_epochs: int = 8
    n_steps: int = 100
    n_batches: int = 1
    retraction_tol: float = 1e-11
    max_newton_iter: int = 25
    halving_limit: int = 10
    seed: int = 0
    kappa_max: float = 1e8
    chart_tol: float = 1e-8
    flat_optimizer: str = "sgd"  # "sgd" or "adam" after warmup
    lr_scale: float = 1.0  # external decay hook, multiplies both schedules

    def manifold_rate(self, epoch: float) -> float:
        return self.lr_scale * _warmup(epoch, self.manifold_lr_start, self.manifold_lr, self.warmup_epochs)

    def flat_rate(self, epoch: float) -> float:
        return self.lr_scale * _warmup(epoch, self.flat_lr_start, self.flat_lr, self.warmup_epochs)


def _warmup(epoch: float, start: float, end: float, n_epochs: int) -> float:
    if n_epochs <= 0 or epoch >= n_epochs:
        return end
    return start + (end - start) * (epoch / n_epochs)


@dataclass
class TrajectoryRecord:
    step: int
    loss: float
    constraint_residual: float
    step_size: float
    alpha: np.ndarray
    theta: np.ndarray


@dataclass
class AdamState:
    """Adam moments for the flat block."""

    m: np.ndarray
    v: np.ndarray
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def update(self, grad: np.ndarray, lr: float) -> np.ndarray:
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad * grad
        m_hat = self.m / (1 - self.beta1**self.t)
        v_hat = self.v / (1 - self.beta2**self.t)
        return lr * m_hat / (np.sqrt(v_hat) + self.eps)


def constraint_residual(constraint: ConstraintSystem | None, theta: np.ndarray) -> float:
    if constraint is None or theta.size == 0:
        return 0.0
    return float(np.max(np.abs(constraint.eval_F(theta))))


def manifold_step(
    constraint: ConstraintSystem,
    chart: GraphChart,
    c_man: np.ndarray,
    h: float,
    config: SgdConfig,
) -> tuple[np.ndarray, float]:
    """One geodesic Taylor step plus retraction, halving h until Newton converges."""
    gamma = None
    if config.step_order >= 2:
        gamma = christoffel_at(chart)
    h_try = h
    for _ in range(config.halving_limit + 1):
        if config.step_order >= 2:
            beta_new = step_second_order(chart.beta_star, c_man, gamma, h_try)
        else:
            beta_new = step_first_order(chart.beta_star, c_man, h_try)
        try:
            theta_new = embed(
                constraint,
                chart,
                beta_new,
                order=config.step_order,
                tol=config.retraction_tol,
                max_iter=config.max_newton_iter,
            )
            return theta_new, h_try
        except NonConvergence:
            h_try *= 0.5
    raise StepRejected(f"retraction failed down to step size {h_try * 2:.3e}")


def sgd_run(
    objective: Objective,
    constraint: ConstraintSystem | None,
    x0: ProductPoint,
    config: SgdConfig,
) -> list[TrajectoryRecord]:
    """Run geodesic SGD, rebuilding the chart at every accepted iterate.

    Returns the logged trajectory; every record's theta satisfies the
    constraint to the retraction tolerance. Deterministic given the seed.
    """
    rng = np.random.default_rng(config.seed)
    point = x0.copy()
    if constraint is not None and point.theta.size:
        res0 = constraint_residual(constraint, point.theta)
        if res0 > config.chart_tol:
            raise StepRejected(f"initial point violates the constraint ({res0:.3e})")

    adam = None
    if config.flat_optimizer == "adam" and point.alpha.size:
        adam = AdamState(np.zeros_like(point.alpha), np.zeros_like(point.alpha))

    batch_order: list[int] = []
    trajectory: list[TrajectoryRecord] = []
    for step in range(config.n_steps):
        if not batch_order:
            batch_order = list(rng.permutation(config.n_batches))
        batch = int(batch_order.pop(0))
        epoch = step / config.n_batches

        loss = float(objective.eval(point, batch))
        d_alpha, d_theta = objective.eval_partials(point, batch)

        h_used = 0.0
        if constraint is not None and point.theta.size:
            chart = chart_at(
                constraint, point.theta, kappa_max=config.kappa_max, tol=config.chart_tol
            )
            if config.step_order >= 2:
                chart = chart_with_second_order(constraint, chart)
            _, c_man = gradient_at(chart, np.asarray(d_theta, dtype=float))
            point.theta, h_used = manifold_step(
                constraint, chart, c_man, config.manifold_rate(epoch), config
            )

        if point.alpha.size:
            grad = np.asarray(d_alpha, dtype=float)
            lr = config.flat_rate(epoch)
            if adam is not None and epoch >= config.warmup_epochs:
                point.alpha = point.alpha - adam.update(grad, lr)
            else:
                point.alpha = point.alpha - lr * grad

        trajectory.append(
            TrajectoryRecord(
                step=step,
                loss=loss,
                constraint_residual=constraint_residual(constraint, point.theta),
                step_size=h_used,
                alpha=point.alpha.copy(),
                theta=point.theta.copy(),
            )
        )
    return trajectory


def fd_gradient_check(
    objective: Objective,
    constraint: ConstraintSystem | None,
    point: ProductPoint,
    eps: float = 1e-5,
    batch: int = 0,
    max_flat_coords: int = 64,
    seed: int = 0,
) -> float:
    """Max relative error between chart-coordinate finite differences and the gradient.

    Each manifold coordinate perturbation is re-embedded through the chart's
    Newton refinement, so the finite differences probe the loss restricted to
    the manifold. Flat blocks wider than max_flat_coords are checked on a
    seeded random coordinate subset.
    """
    d_alpha, d_theta = objective.eval_partials(point, batch)
    errors = []

    if point.alpha.size:
        n_flat = point.alpha.size
        if n_flat > max_flat_coords:
            rng = np.random.default_rng(seed)
            coords = rng.choice(n_flat, size=max_flat_coords, replace=False)
        else:
            coords = np.arange(n_flat)
        fd_flat = np.empty(coords.size)
        for pos, i in enumerate(coords):
            shift = np.zeros(n_flat)
            shift[i] = eps
            up = ProductPoint(point.alpha + shift, point.theta)
            down = ProductPoint(point.alpha - shift, point.theta)
            fd_flat[pos] = (objective.eval(up, batch) - objective.eval(down, batch)) / (2 * eps)
        scale = max(np.max(np.abs(fd_flat)), 1e-12)
        analytic = np.asarray(d_alpha, dtype=float)[coords]
        errors.append(np.max(np.abs(fd_flat - analytic)) / scale)

    if constraint is not None and point.theta.size:
        chart = chart_at(constraint, point.theta)
        _, c_man = gradient_at(chart, np.asarray(d_theta, dtype=float))
        predicted = metric_at(chart) @ c_man  # the chart-coordinate differential
        fd_man = np.empty(chart.dim)
        for i in range(chart.dim):
            shift = np.zeros(chart.dim)
            shift[i] = eps
            up = embed(constraint, chart, chart.beta_star + shift)
            down = embed(constraint, chart, chart.beta_star - shift)
            loss_up = objective.eval(ProductPoint(point.alpha, up), batch)
            loss_down = objective.eval(ProductPoint(point.alpha, down), batch)
            fd_man[i] = (loss_up - loss_down) / (2 * eps)
        scale = max(np.max(np.abs(fd_man)), 1e-12)
        errors.append(np.max(np.abs(fd_man - predicted)) / scale)

    return float(max(errors)) if errors else 0.0


def save_trajectory_csv(trajectory: list[TrajectoryRecord], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iter", "loss", "constraint_residual", "step_size"])
        for rec in trajectory:
            writer.writerow(
                [rec.step, repr(rec.loss), repr(rec.constraint_residual), repr(rec.step_size)]
            )


def save_params_json(point: ProductPoint, path) -> None:
    with open(path, "w") as fh:
        json.dump({"alpha": point.alpha.tolist(), "theta": point.theta.tolist()}, fh, indent=2)
