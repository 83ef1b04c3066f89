"""Mini-batch SGD with block-diagonal Hessian preconditioning.

One iteration draws a gradient batch and a Hessian batch from separate
germ streams, averages them, solves the per-block symmetric systems, and
applies the diminishing-rate update.  The nonlinear Hessian part can be
deferred for a number of iterations ("staged" mode) because it depends on
the coefficients and is therefore very noisy while the iterates are.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
import scipy.linalg

from .estimators import (
    ControlVariateState,
    Kernel,
    estimate_cv_lambda,
    kernel_for,
)
from .fem1d import Mesh1D
from .pc_basis import PcBasisSet
from .problem import ProblemInstance
from .random_field import GermSampler

HESSIAN_MODES = ("none", "linear-only", "staged", "full")


@dataclass(eq=False)
class LearningRateSchedule:
    """Diminishing rate numerator / (offset + n)."""

    numerator: float
    offset: float = 0.0

    def __post_init__(self):
        if self.numerator <= 0:
            raise ValueError("rate numerator must be positive")
        if self.offset + 1 <= 0:
            raise ValueError("offset must keep the first rate finite")

    def rate(self, n: int) -> float:
        return self.numerator / (self.offset + n)


@dataclass(eq=False)
class SgdConfig:
    n_iterations: int
    batch_gradient: int
    batch_hessian: int
    schedule: LearningRateSchedule
    cv_mode: str = "none"
    cv_pilot_size: int = 1000
    cv_refresh_every: Optional[int] = None  # None: estimate once
    hessian_mode: str = "staged"
    n_switch: int = 100
    ridge: float = 1e-8
    seed: int = 0
    init: str = "zero"
    init_scale: float = 1.0
    record_stride: int = 1
    monitor_samples: int = 10_000
    step_clip: Optional[float] = None  # max step norm, escape hatch for eta_1 >> 1

    def __post_init__(self):
        if self.n_iterations < 0:
            raise ValueError("iteration count must be non-negative")
        if self.batch_gradient < 1 or self.batch_hessian < 1:
            raise ValueError("batch sizes must be at least 1")
        if self.cv_mode not in ("none", "order0", "order1"):
            raise ValueError(f"unknown cv_mode {self.cv_mode!r}")
        if self.hessian_mode not in HESSIAN_MODES:
            raise ValueError(f"unknown hessian_mode {self.hessian_mode!r}")
        if self.hessian_mode == "staged" and self.n_switch > max(self.n_iterations, 1):
            raise ValueError("n_switch must not exceed the iteration count")
        if self.init not in ("zero", "gaussian"):
            raise ValueError(f"unknown init rule {self.init!r}")
        if self.record_stride < 1:
            raise ValueError("record_stride must be >= 1")


@dataclass(eq=False)
class Trajectory:
    iterations: np.ndarray
    rates: np.ndarray
    energy_mean: np.ndarray
    energy_se: np.ndarray
    gradient_norm: np.ndarray
    fallback_count: np.ndarray
    monitor_samples: int
    snapshots: dict = field(default_factory=dict)


class SgdDivergenceError(RuntimeError):
    """Raised when an update produces non-finite coefficients."""

    def __init__(self, iteration: int, seed: int, block_index: int | None = None):
        self.iteration = iteration
        self.seed = seed
        self.block_index = block_index
        where = f" (block {block_index})" if block_index is not None else ""
        super().__init__(
            f"non-finite update at iteration {iteration}{where}; "
            f"germ streams derive from seed {seed}"
        )


def precondition_solve(
    blocks: np.ndarray, gradient: np.ndarray, ridge: float
) -> tuple[np.ndarray, int]:
    """Solve the block systems (B_j + ridge tr(B_j)/M I) s_j = g_j.

    Blocks that fail the symmetric factorization fall back to identity
    scaling (s_j = g_j); the count of such blocks is returned.
    """
    n_blocks, m, _ = blocks.shape
    g = gradient.reshape(n_blocks, m)
    step = np.empty_like(g)
    fallbacks = 0
    eye = np.eye(m)
    for j in range(n_blocks):
        block = blocks[j]
        if not np.all(np.isfinite(block)):
            step[j] = g[j]
            fallbacks += 1
            continue
        shift = ridge * abs(np.trace(block)) / m
        try:
            factor = scipy.linalg.cho_factor(
                block + shift * eye, lower=True, check_finite=False
            )
            step[j] = scipy.linalg.cho_solve(factor, g[j], check_finite=False)
        except scipy.linalg.LinAlgError:
            step[j] = g[j]
            fallbacks += 1
    return step.reshape(-1), fallbacks


def _initial_coefficients(kernel: Kernel, config: SgdConfig) -> np.ndarray:
    if config.init == "zero":
        return np.zeros(kernel.dim)
    rng = np.random.default_rng(
        np.random.SeedSequence(entropy=config.seed, spawn_key=(0, 0x1A17))
    )
    return config.init_scale * rng.standard_normal(kernel.dim)


def _hessian_stage(config: SgdConfig, n: int) -> str:
    if config.hessian_mode == "linear-only":
        return "linear-only"
    if config.hessian_mode == "staged" and n <= config.n_switch:
        return "linear-only"
    return "full"


def run(
    problem: ProblemInstance,
    mesh: Mesh1D,
    basis: PcBasisSet,
    config: SgdConfig,
) -> tuple[Trajectory, np.ndarray]:
    """Execute the preconditioned mini-batch SGD iteration.

    Returns the recorded trajectory and the final coefficient vector.  On a
    non-finite update the partial trajectory is attached to the raised
    SgdDivergenceError as `.trajectory`.
    """
    kernel = kernel_for(problem, mesh, basis)
    sampler = GermSampler(config.seed, problem.germ_dim)
    c = _initial_coefficients(kernel, config)

    monitor_germs = sampler.sample_batch(0, config.monitor_samples, "monitor")

    cv_state = ControlVariateState(mode="none")
    if config.cv_mode != "none":
        cv_state = estimate_cv_lambda(
            problem, mesh, basis, c, config.cv_mode, config.cv_pilot_size, sampler
        )

    records: dict[str, list] = {k: [] for k in ("n", "eta", "jm", "jse", "gn", "fb")}
    snapshots: dict[int, np.ndarray] = {}

    def record(n: int, eta: float, grad_norm: float, fallbacks: int):
        energies = kernel.energies(c, monitor_germs)
        records["n"].append(n)
        records["eta"].append(eta)
        records["jm"].append(float(energies.mean()))
        records["jse"].append(float(energies.std(ddof=1) / np.sqrt(energies.size)))
        records["gn"].append(grad_norm)
        records["fb"].append(fallbacks)
        snapshots[n] = c.copy()

    record(0, 0.0, np.nan, 0)

    def build_trajectory() -> Trajectory:
        return Trajectory(
            iterations=np.array(records["n"]),
            rates=np.array(records["eta"]),
            energy_mean=np.array(records["jm"]),
            energy_se=np.array(records["jse"]),
            gradient_norm=np.array(records["gn"]),
            fallback_count=np.array(records["fb"]),
            monitor_samples=config.monitor_samples,
            snapshots=snapshots,
        )

    for n in range(1, config.n_iterations + 1):
        eta = config.schedule.rate(n)
        if (
            config.cv_mode != "none"
            and config.cv_refresh_every is not None
            and n > 1
            and (n - 1) % config.cv_refresh_every == 0
        ):
            cv_state = estimate_cv_lambda(
                problem, mesh, basis, c, config.cv_mode, config.cv_pilot_size,
                sampler, iteration=n,
            )
        germs_g = sampler.sample_batch(n, config.batch_gradient, "gradient")
        if cv_state.mode == "none":
            grad_batch = kernel.gradient_batch(c, germs_g)
        else:
            grad_batch = kernel.cv_gradient_batch(c, germs_g, cv_state)
        grad = grad_batch.mean(axis=0)

        fallbacks = 0
        if config.hessian_mode == "none":
            step = grad
        else:
            stage = _hessian_stage(config, n)
            germs_h = sampler.sample_batch(n, config.batch_hessian, "hessian")
            blocks = kernel.averaged_hessian_blocks(c, germs_h, stage)
            step, fallbacks = precondition_solve(blocks, grad, config.ridge)

        if config.step_clip is not None:
            norm = np.linalg.norm(step)
            if norm > config.step_clip:
                step = step * (config.step_clip / norm)

        c = c - eta * step
        if not np.all(np.isfinite(c)):
            err = SgdDivergenceError(iteration=n, seed=config.seed)
            err.trajectory = build_trajectory()
            raise err

        if n % config.record_stride == 0 or n == config.n_iterations:
            record(n, eta, float(np.linalg.norm(grad)), fallbacks)

    return build_trajectory(), c


def first_order_run(
    problem: ProblemInstance,
    mesh: Mesh1D,
    basis: PcBasisSet,
    config: SgdConfig,
) -> tuple[Trajectory, np.ndarray]:
    """Plain mini-batch SGD: identity preconditioner, everything else equal."""
    return run(problem, mesh, basis, replace(config, hessian_mode="none"))
