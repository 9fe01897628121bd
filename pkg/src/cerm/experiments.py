"""Reproducible desk-scale experiment runners behind the CLI subcommands."""

from __future__ import annotations

import dataclasses
import json
import os
import time
from dataclasses import dataclass, field

import numpy as np

from .charts import chart_at, product_system
from .contours import contour_from_points, rasterized_dice, save_contour
from .errors import CermError, ZeroOnContour
from .model import CoeffHeadModel, backward, curve_loss, forward, quadratic_features
from .riemann import gradient_at
from .sgd import (
    AdamState,
    Objective,
    ProductPoint,
    SgdConfig,
    fd_gradient_check,
    manifold_step,
    save_params_json,
    save_trajectory_csv,
    sgd_run,
)
from .shapes import ShapeDataset, contour_points_from_coefficients, synthesize_shapes
from .systems import (
    WaveletFilter,
    find_qmf_filter,
    orthogonal_filter_system,
    qmf_residual,
    qmf_system,
    random_qmf_filter,
    save_filter,
    sphere_system,
    winding_zero_count,
)
from .wavelets import dwt_level_periodic, idwt_level_periodic

DEFAULT_J0 = {3: 3, 4: 3, 5: 4, 6: 4, 7: 4, 8: 4}


@dataclass
class ExperimentConfig:
    seed: int = 0
    out_dir: str = "out"
    order: int = 5  # wavelet order M
    j0: int | None = None  # lowest resolution level; per-order default when None
    j1: int | None = None  # defaults to j2
    j2: int = 7
    orders: tuple[int, ...] = (3, 4, 5, 6, 7, 8)
    n_train: int = 200
    n_heldout: int = 50
    n_epochs: int = 200
    batch_size: int = 8
    family: str = "mixed"
    decay_factor: float = 0.85
    decay_patience: int = 10
    decay_significance: float = 1e-2  # relative validation improvement that resets the patience
    dice_grid: int = 512
    # Manifold peak rate for the curve-fitting run. The generic warmup default
    # ramps to 1e-2, but at desk scale the filter block sits on a loss plateau
    # once the head has adapted, and steps that large random-walk the masks
    # into the degenerate region flagged by the winding monitor.
    fit_manifold_lr: float = 2e-3
    fit_init_noise: float = 0.02
    sgd: SgdConfig = field(default_factory=SgdConfig)

    def resolved_j0(self) -> int:
        if self.j0 is not None:
            return self.j0
        if not 3 <= self.order <= 8:
            raise ValueError(f"no default lowest level for order {self.order}")
        return DEFAULT_J0[self.order]

    def resolved_j1(self) -> int:
        return self.j2 if self.j1 is None else self.j1

    @classmethod
    def from_dict(cls, payload: dict) -> "ExperimentConfig":
        payload = dict(payload)
        sgd_payload = payload.pop("sgd", {})
        base = cls(**payload)
        base.sgd = dataclasses.replace(SgdConfig(), **sgd_payload)
        if "orders" in payload:
            base.orders = tuple(payload["orders"])
        return base


def _write_metrics(out_dir: str, metrics: dict) -> None:
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "metrics.json"), "w") as fh:
        json.dump(metrics, fh, indent=2, default=float)


def run_sphere_demo(cfg: ExperimentConfig) -> dict:
    """Geodesic SGD toward a known minimizer on the unit sphere."""
    system = sphere_system()
    target = np.array([0.0, 0.0, 1.0])
    objective = Objective(
        eval=lambda p, b: float(np.sum((p.theta - target) ** 2)),
        eval_partials=lambda p, b: (np.array([]), 2.0 * (p.theta - target)),
    )
    sgd_cfg = dataclasses.replace(
        cfg.sgd,
        n_steps=500,
        manifold_lr=0.1,
        manifold_lr_start=0.1,
        warmup_epochs=0,
        seed=cfg.seed,
    )
    x0 = ProductPoint(np.array([]), np.array([1.0, 0.0, 0.0]))
    trajectory = sgd_run(objective, system, x0, sgd_cfg)
    final = ProductPoint(trajectory[-1].alpha, trajectory[-1].theta)
    final_loss = float(objective.eval(final, 0))
    max_residual = max(r.constraint_residual for r in trajectory)

    os.makedirs(cfg.out_dir, exist_ok=True)
    save_trajectory_csv(trajectory, os.path.join(cfg.out_dir, "trajectory.csv"))
    save_params_json(final, os.path.join(cfg.out_dir, "params.json"))
    metrics = {
        "status": "ok",
        "final_loss": final_loss,
        "max_constraint_residual": max_residual,
        "passed": bool(final_loss <= 1e-6 and max_residual <= 1e-9),
    }
    _write_metrics(cfg.out_dir, metrics)
    return metrics


def run_qmf_find(cfg: ExperimentConfig) -> dict:
    """Solve the QMF equations from random starts for each configured order."""
    os.makedirs(cfg.out_dir, exist_ok=True)
    per_order = {}
    for order in cfg.orders:
        h = find_qmf_filter(order, seed=cfg.seed + order)
        residual = float(np.max(np.abs(qmf_residual(h))))
        winding = winding_zero_count(h)
        save_filter(
            WaveletFilter(order=order, values=h),
            os.path.join(cfg.out_dir, f"filter_order{order}.json"),
        )
        per_order[str(order)] = {"residual": residual, "winding": winding}
    metrics = {
        "status": "ok",
        "orders": per_order,
        "passed": bool(
            all(v["residual"] <= 1e-10 and v["winding"] == 0 for v in per_order.values())
        ),
    }
    _write_metrics(cfg.out_dir, metrics)
    return metrics


def run_dwt_roundtrip(cfg: ExperimentConfig) -> dict:
    """Perfect-reconstruction and energy checks over random signals and filters."""
    rng = np.random.default_rng(cfg.seed)
    worst_rec = worst_energy = 0.0
    for order in cfg.orders:
        h = random_qmf_filter(order, seed=cfg.seed + order)
        for _ in range(10):
            x = rng.standard_normal(128)
            a, d = dwt_level_periodic(x, h)
            rec = idwt_level_periodic(a, d, h)
            worst_rec = max(worst_rec, float(np.max(np.abs(rec - x))))
            energy = abs(np.sum(a**2) + np.sum(d**2) - np.sum(x**2)) / np.sum(x**2)
            worst_energy = max(worst_energy, float(energy))
    metrics = {
        "status": "ok",
        "max_reconstruction_error": worst_rec,
        "max_energy_defect": worst_energy,
        "passed": bool(worst_rec <= 1e-10 and worst_energy <= 1e-10),
    }
    _write_metrics(cfg.out_dir, metrics)
    return metrics


def make_fit_objective(model: CoeffHeadModel, dataset: ShapeDataset, batches: list[np.ndarray]):
    """Wrap the coefficient-head fit as an Objective over (head weights, filters)."""

    def load(point: ProductPoint):
        model.set_flat_params(point.alpha)
        model.set_filter_params(point.theta)

    def eval_loss(point: ProductPoint, batch: int) -> float:
        load(point)
        idxs = batches[batch % len(batches)]
        total = 0.0
        for i in idxs:
            sample = dataset.samples[i]
            out, _ = forward(model, sample.latent)
            total += curve_loss(out, sample.target)[0]
        return total / len(idxs)

    def eval_partials(point: ProductPoint, batch: int):
        load(point)
        idxs = batches[batch % len(batches)]
        g_alpha = np.zeros(point.alpha.size)
        g_theta = np.zeros(point.theta.size)
        for i in idxs:
            sample = dataset.samples[i]
            out, cache = forward(model, sample.latent)
            _, dpred = curve_loss(out, sample.target)
            ga, gh = backward(model, sample.latent, dpred, cache)
            g_alpha += ga
            g_theta += gh
        return g_alpha / len(idxs), g_theta / len(idxs)

    return Objective(eval=eval_loss, eval_partials=eval_partials)


def run_grad_check(cfg: ExperimentConfig) -> dict:
    """Finite-difference validation of chart gradients and the pyramid adjoint."""
    rng = np.random.default_rng(cfg.seed)
    results = {}

    # quadratic loss on the sphere
    sys3 = sphere_system()
    a_mat = rng.standard_normal((3, 3))
    a_mat = a_mat @ a_mat.T / 3
    quad = Objective(
        eval=lambda p, b: float(p.theta @ a_mat @ p.theta),
        eval_partials=lambda p, b: (np.array([]), 2 * a_mat @ p.theta),
    )
    v = rng.standard_normal(3)
    v /= np.linalg.norm(v)
    results["sphere_quadratic"] = fd_gradient_check(
        quad, sys3, ProductPoint(np.array([]), v)
    )

    # wavelet-fit objective at random feasible filter points
    order = cfg.order
    dataset = synthesize_shapes(cfg.seed, 4, family="mixed", order=order, j2=cfg.j2)
    j0, j1 = cfg.resolved_j0(), cfg.resolved_j1()
    filters = [
        random_qmf_filter(order, seed=cfg.seed + 11, noise=0.05),
        random_qmf_filter(order, seed=cfg.seed + 12, noise=0.05),
    ]
    model = CoeffHeadModel.zeros(dataset.samples[0].latent.size, j0, j1, cfg.j2, filters)
    constraint = product_system(qmf_system(order), qmf_system(order))
    batches = [np.arange(len(dataset.samples))]
    objective = make_fit_objective(model, dataset, batches)
    alpha0 = 0.05 * rng.standard_normal(model.flat_params().size)
    point = ProductPoint(alpha0, model.filter_params())
    results["wavelet_fit"] = fd_gradient_check(objective, constraint, point)

    # pyramid-adjoint filter partials against finite differences
    model.set_flat_params(alpha0)
    sample = dataset.samples[0]
    out, cache = forward(model, sample.latent)
    _, dpred = curve_loss(out, sample.target)
    _, gh = backward(model, sample.latent, dpred, cache)
    theta = model.filter_params()
    eps = 1e-6
    fd = np.zeros_like(gh)
    for i in range(theta.size):
        values = []
        for sign in (1, -1):
            shifted = theta.copy()
            shifted[i] += sign * eps
            model.set_filter_params(shifted)
            values.append(curve_loss(forward(model, sample.latent)[0], sample.target)[0])
        fd[i] = (values[0] - values[1]) / (2 * eps)
    model.set_filter_params(theta)
    results["filter_partials"] = float(np.max(np.abs(gh - fd)) / max(np.max(np.abs(fd)), 1e-12))

    metrics = {
        "status": "ok",
        **results,
        "passed": bool(
            results["sphere_quadratic"] <= 1e-4
            and results["wavelet_fit"] <= 1e-4
            and results["filter_partials"] <= 1e-6
        ),
    }
    _write_metrics(cfg.out_dir, metrics)
    return metrics


def _dice_for_sample(model: CoeffHeadModel, sample, j2: int, grid_n: int) -> float:
    pred, _ = forward(model, sample.latent)
    pred_contour = contour_from_points(contour_points_from_coefficients(pred, j2))
    true_contour = contour_from_points(contour_points_from_coefficients(sample.target, j2))
    return rasterized_dice(pred_contour, true_contour, grid_n=grid_n)


def run_contour_fit(cfg: ExperimentConfig) -> dict:
    """Train the constrained coefficient head on synthetic shapes.

    Two optimizers: plain SGD warmup then Adam on the head weights, geodesic
    SGD on the two filter blocks, with a validation-triggered decay shared by
    both schedules. Constraint residuals are logged at every step and the
    mask winding number at every epoch.
    """
    start_time = time.time()
    j0, j1, j2 = cfg.resolved_j0(), cfg.resolved_j1(), cfg.j2
    order = cfg.order
    dataset = synthesize_shapes(
        cfg.seed, cfg.n_train + cfg.n_heldout, family=cfg.family, order=order, j2=j2
    )
    train_idx = np.arange(cfg.n_train)
    held_idx = np.arange(cfg.n_train, cfg.n_train + cfg.n_heldout)

    filters = []
    for s in range(2):
        for attempt in range(20):
            h = random_qmf_filter(
                order, seed=cfg.seed + 31 * (s + 1) + attempt, noise=cfg.fit_init_noise
            )
            try:
                if winding_zero_count(h) == 0:
                    filters.append(h)
                    break
            except ZeroOnContour:
                continue
        else:
            raise CermError("could not initialize a non-degenerate filter")

    latents = dataset.latents()[train_idx]
    feats = np.vstack([quadratic_features(z) for z in latents])
    feat_mean = feats.mean(axis=0)
    feat_scale = np.maximum(feats.std(axis=0), 1e-8)
    feat_mean[0], feat_scale[0] = 0.0, 1.0  # keep the bias feature intact

    model = CoeffHeadModel.zeros(
        latents.shape[1], j0, j1, j2, filters, feat_mean=feat_mean, feat_scale=feat_scale
    )
    constraint = product_system(qmf_system(order), qmf_system(order))
    sgd_cfg = dataclasses.replace(cfg.sgd, seed=cfg.seed, manifold_lr=cfg.fit_manifold_lr)

    alpha = model.flat_params()
    theta = model.filter_params()
    adam: AdamState | None = None
    rng = np.random.default_rng(cfg.seed)

    def mean_loss(idxs) -> float:
        model.set_flat_params(alpha)
        model.set_filter_params(theta)
        total = 0.0
        for i in idxs:
            sample = dataset.samples[i]
            total += curve_loss(forward(model, sample.latent)[0], sample.target)[0]
        return total / len(idxs)

    loss_init = mean_loss(train_idx)
    best_val = np.inf
    stall = 0
    lr_scale = 1.0
    step = 0
    rows = []
    epoch_losses = []
    windings_ok = True
    max_residual = 0.0

    for epoch in range(cfg.n_epochs):
        order_idx = rng.permutation(train_idx)
        epoch_sum = 0.0
        n_batches = 0
        for lo in range(0, len(order_idx), cfg.batch_size):
            idxs = order_idx[lo : lo + cfg.batch_size]
            model.set_flat_params(alpha)
            model.set_filter_params(theta)
            batch_loss = 0.0
            g_alpha = np.zeros_like(alpha)
            g_theta = np.zeros_like(theta)
            for i in idxs:
                sample = dataset.samples[i]
                out, cache = forward(model, sample.latent)
                li, dpred = curve_loss(out, sample.target)
                ga, gh = backward(model, sample.latent, dpred, cache)
                batch_loss += li
                g_alpha += ga
                g_theta += gh
            batch_loss /= len(idxs)
            g_alpha /= len(idxs)
            g_theta /= len(idxs)
            epoch_sum += batch_loss
            n_batches += 1

            chart = chart_at(constraint, theta, kappa_max=sgd_cfg.kappa_max)
            _, c_man = gradient_at(chart, g_theta)
            h_rate = lr_scale * sgd_cfg.manifold_rate(epoch)
            theta, h_used = manifold_step(constraint, chart, c_man, h_rate, sgd_cfg)

            flat_rate = lr_scale * sgd_cfg.flat_rate(epoch)
            if epoch >= sgd_cfg.warmup_epochs:
                if adam is None:
                    adam = AdamState(np.zeros_like(alpha), np.zeros_like(alpha))
                alpha = alpha - adam.update(g_alpha, flat_rate)
            else:
                alpha = alpha - flat_rate * g_alpha

            residual = max(
                float(np.max(np.abs(qmf_residual(theta[: 2 * order - 1])))),
                float(np.max(np.abs(qmf_residual(theta[2 * order - 1 :])))),
            )
            max_residual = max(max_residual, residual)
            rows.append((step, batch_loss, residual, h_used))
            step += 1

        epoch_losses.append(epoch_sum / n_batches)
        val_loss = mean_loss(held_idx)
        if val_loss < best_val * (1 - cfg.decay_significance):
            best_val = val_loss
            stall = 0
        else:
            stall += 1
            if stall >= cfg.decay_patience:
                lr_scale *= cfg.decay_factor
                stall = 0
        for block in (theta[: 2 * order - 1], theta[2 * order - 1 :]):
            try:
                if winding_zero_count(block) != 0:
                    windings_ok = False  # monitor only; training continues
            except ZeroOnContour:
                windings_ok = False

    model.set_flat_params(alpha)
    model.set_filter_params(theta)
    loss_final = epoch_losses[-1]
    dices = [
        _dice_for_sample(model, dataset.samples[i], j2, cfg.dice_grid) for i in held_idx
    ]
    mean_dice = float(np.mean(dices))

    os.makedirs(cfg.out_dir, exist_ok=True)
    contours_dir = os.path.join(cfg.out_dir, "contours")
    os.makedirs(contours_dir, exist_ok=True)
    for rank, i in enumerate(held_idx[:5]):
        pred, _ = forward(model, dataset.samples[i].latent)
        contour = contour_from_points(contour_points_from_coefficients(pred, j2))
        save_contour(contour, os.path.join(contours_dir, f"heldout_{rank}.json"))
    for s in range(2):
        save_filter(
            WaveletFilter(order=order, values=model.filters[s]),
            os.path.join(cfg.out_dir, f"filters_component{s + 1}.json"),
        )
    with open(os.path.join(cfg.out_dir, "trajectory.csv"), "w") as fh:
        fh.write("iter,loss,constraint_residual,step_size\n")
        for row in rows:
            fh.write(f"{row[0]},{row[1]!r},{row[2]!r},{row[3]!r}\n")

    jitter = 0.02 * loss_init  # plateau tolerance for the monotone-trend check
    metrics = {
        "status": "ok",
        "loss_init": loss_init,
        "loss_final": loss_final,
        "loss_ratio": loss_init / max(loss_final, 1e-300),
        "mean_dice": mean_dice,
        "max_constraint_residual": max_residual,
        "windings_zero_throughout": windings_ok,
        "epoch_losses_strictly_non_increasing": bool(
            all(b <= a * (1 + 1e-12) for a, b in zip(epoch_losses, epoch_losses[1:]))
        ),
        "epoch_losses_non_increasing_to_tolerance": bool(
            all(
                epoch_losses[k] <= min(epoch_losses[: k + 1]) + jitter
                for k in range(len(epoch_losses))
            )
        ),
        "runtime_seconds": time.time() - start_time,
        "passed": bool(
            loss_init / max(loss_final, 1e-300) >= 50.0
            and mean_dice >= 0.95
            and max_residual <= 1e-9
        ),
    }
    _write_metrics(cfg.out_dir, metrics)
    return metrics


def run_constraint_suite(cfg: ExperimentConfig, n_steps: int = 500) -> dict:
    """SGD runs on the sphere, orthogonal filters, and QMF manifolds; residual audit."""
    rng = np.random.default_rng(cfg.seed)
    runs = {}

    def quadratic_objective(dim, seed):
        target = np.random.default_rng(seed).standard_normal(dim)
        return Objective(
            eval=lambda p, b: float(np.sum((p.theta - target) ** 2)),
            eval_partials=lambda p, b: (np.array([]), 2.0 * (p.theta - target)),
        )

    specs = [("sphere", sphere_system(), np.array([1.0, 0.0, 0.0]))]
    q_orth = np.linalg.qr(rng.standard_normal((3, 3)))[0]
    specs.append(("orthogonal3", orthogonal_filter_system(3), q_orth.ravel()))
    for order in cfg.orders:
        specs.append(
            (f"qmf{order}", qmf_system(order), random_qmf_filter(order, seed=cfg.seed + order))
        )

    for run_id, (name, system, theta0) in enumerate(specs):
        sgd_cfg = dataclasses.replace(
            cfg.sgd,
            n_steps=n_steps,
            manifold_lr=1e-2,
            manifold_lr_start=1e-2,
            warmup_epochs=0,
            seed=cfg.seed,
            retraction_tol=1e-12,
        )
        objective = quadratic_objective(theta0.size, cfg.seed + 17 * run_id)
        trajectory = sgd_run(objective, system, ProductPoint(np.array([]), theta0), sgd_cfg)
        max_res = max(r.constraint_residual for r in trajectory)
        if name.startswith("qmf"):
            order = int(name[3:])
            max_res = max(
                float(np.max(np.abs(qmf_residual(r.theta)))) for r in trajectory
            )
        runs[name] = max_res
    metrics = {
        "status": "ok",
        "max_residuals": runs,
        "passed": bool(max(runs.values()) <= 1e-9),
    }
    _write_metrics(cfg.out_dir, metrics)
    return metrics
