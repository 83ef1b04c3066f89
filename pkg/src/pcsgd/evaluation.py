"""Post-hoc analysis: energies, pointwise errors, CDFs, reference solves.

Monte Carlo estimates are reproducible given (seed, n_samples) and always
carry a standard error.  Evaluation germ streams use their own purpose tag
so they never collide with optimization streams.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import scipy.linalg

from .estimators import coefficient_matrix, kernel_for
from .fem1d import LiftingFunction, Mesh1D, eval_phi
from .pc_basis import PcBasisSet, eval_all
from .problem import ProblemInstance, _simpson_grid
from .random_field import GermSampler
from .sgd import Trajectory

EVAL_PURPOSE = "eval"
DEFAULT_CHUNK = 20_000


@dataclass(eq=False)
class EnergyEstimate:
    mean: float
    standard_error: float
    sample_count: int


@dataclass(eq=False)
class CdfEstimate:
    points: tuple[float, ...]
    thresholds: tuple[np.ndarray, ...]
    probabilities: np.ndarray
    sample_count: int


def _chunked_batches(sampler: GermSampler, n_samples: int, chunk: int):
    """Yield germ chunks from one prefix-stable batch stream."""
    done = 0
    rng_batch = sampler.sample_batch(0, n_samples, EVAL_PURPOSE)
    while done < n_samples:
        yield rng_batch[done : done + chunk]
        done += chunk


def estimate_energy(
    problem: ProblemInstance,
    mesh: Mesh1D,
    basis: PcBasisSet,
    c: np.ndarray,
    n_samples: int,
    seed: int,
    chunk: int = DEFAULT_CHUNK,
) -> EnergyEstimate:
    """MC estimate of the energy at coefficients c."""
    if n_samples < 2:
        raise ValueError("need at least two samples for a standard error")
    kernel = kernel_for(problem, mesh, basis)
    sampler = GermSampler(seed, problem.germ_dim)
    energies = np.concatenate(
        [kernel.energies(c, germs) for germs in _chunked_batches(sampler, n_samples, chunk)]
    )
    return EnergyEstimate(
        mean=float(energies.mean()),
        standard_error=float(energies.std(ddof=1) / np.sqrt(n_samples)),
        sample_count=n_samples,
    )


def solution_at_point(
    problem: ProblemInstance,
    mesh: Mesh1D,
    basis: PcBasisSet,
    c: np.ndarray,
    x: float,
    germs: np.ndarray,
) -> np.ndarray:
    """Expansion values u_c(x, Y) (lifting included) for a germ batch."""
    phi_x = np.array([eval_phi(mesh, i, x) for i in range(1, mesh.n_interior + 1)])
    lift = LiftingFunction(*problem.boundary).value(mesh, x)
    psi = eval_all(basis, np.atleast_2d(germs))
    spatial = coefficient_matrix(c, mesh.n_interior) @ phi_x  # (N+1,)
    return psi @ spatial + float(lift)


def pointwise_l2_error(
    problem: ProblemInstance,
    mesh: Mesh1D,
    basis: PcBasisSet,
    c: np.ndarray,
    x: float,
    n_samples: int,
    seed: int,
    chunk: int = DEFAULT_CHUNK,
) -> EnergyEstimate:
    """MC estimate of E[(u*(x, Y) - u_c(x, Y))^2]."""
    if problem.exact_solution is None:
        raise ValueError(f"problem {problem.name!r} has no exact solution")
    sampler = GermSampler(seed, problem.germ_dim)
    sq = []
    for germs in _chunked_batches(sampler, n_samples, chunk):
        diff = problem.exact_solution(x, germs) - solution_at_point(
            problem, mesh, basis, c, x, germs
        )
        sq.append(diff**2)
    sq = np.concatenate(sq)
    return EnergyEstimate(
        mean=float(sq.mean()),
        standard_error=float(sq.std(ddof=1) / np.sqrt(n_samples)),
        sample_count=n_samples,
    )


def _empirical_cdf_of_values(
    values: Sequence[np.ndarray], thresholds: tuple[np.ndarray, ...]
) -> np.ndarray:
    if len(values) == 1:
        sorted_vals = np.sort(values[0])
        return np.searchsorted(sorted_vals, thresholds[0], side="right") / sorted_vals.size
    v1, v2 = values
    grid1, grid2 = thresholds
    n = v1.size
    probs = np.empty((grid1.size, grid2.size))
    order = np.argsort(v1)
    v1s, v2s = v1[order], v2[order]
    for a, t1 in enumerate(grid1):
        m = np.searchsorted(v1s, t1, side="right")
        probs[a] = np.searchsorted(np.sort(v2s[:m]), grid2, side="right") / n
    return probs


def empirical_cdf(
    problem: ProblemInstance,
    mesh: Mesh1D,
    basis: PcBasisSet,
    c: np.ndarray,
    points: Sequence[float],
    thresholds: Sequence[np.ndarray],
    n_samples: int,
    seed: int,
    use_exact_solution: bool = False,
) -> CdfEstimate:
    """Empirical (joint) CDF of the solution at one or two spatial points.

    With `use_exact_solution` the attached per-germ exact solution is
    sampled instead of the expansion, giving the reference CDF.
    """
    if not 1 <= len(points) <= 2:
        raise ValueError("one or two evaluation points supported")
    if len(thresholds) != len(points):
        raise ValueError("need one threshold grid per evaluation point")
    sampler = GermSampler(seed, problem.germ_dim)
    germs = sampler.sample_batch(0, n_samples, EVAL_PURPOSE)
    if use_exact_solution:
        if problem.exact_solution is None:
            raise ValueError(f"problem {problem.name!r} has no exact solution")
        values = [problem.exact_solution(x, germs) for x in points]
    else:
        values = [
            solution_at_point(problem, mesh, basis, c, x, germs) for x in points
        ]
    grids = tuple(np.asarray(t, dtype=float) for t in thresholds)
    return CdfEstimate(
        points=tuple(float(x) for x in points),
        thresholds=grids,
        probabilities=_empirical_cdf_of_values(values, grids),
        sample_count=n_samples,
    )


def reference_solve_linear(
    problem: ProblemInstance, mesh: Mesh1D, germ: np.ndarray
) -> np.ndarray:
    """Deterministic FEM solve of the sampled linear problem at one germ.

    Returns nodal solution values including the boundary nodes.
    """
    if not problem.is_linear:
        raise ValueError("reference solve only applies to linear problems")
    kernel = kernel_for(problem, mesh, problem.basis)
    kap = kernel.kappa(np.atleast_2d(germ))[0]
    weighted = kernel.w * kap
    stiffness = kernel.dphi.T @ (weighted[:, None] * kernel.dphi)
    rhs = -kernel.dphi.T @ (weighted * kernel.lift_dvals)
    if problem.source is not None:
        src = problem.source(kernel.x, np.atleast_2d(germ))[0]
        rhs = rhs - kernel.phi.T @ (kernel.w * src)
    interior = scipy.linalg.solve(stiffness, rhs, assume_a="pos")
    left, right = problem.boundary
    return np.concatenate([[left], interior, [right]])


def exact_energy_mc(
    problem: ProblemInstance,
    n_samples: int,
    seed: int,
    n_grid: int = 801,
    chunk: int = 2_000,
) -> EnergyEstimate:
    """MC energy of the attached exact solution on an independent Simpson grid.

    Deliberately avoids the FEM quadrature tables so it can serve as an
    oracle for the expansion-based energy estimates.
    """
    if problem.exact_solution is None or problem.exact_solution_derivative is None:
        raise ValueError(f"problem {problem.name!r} has no exact solution data")
    half = problem.mesh.length / 2.0
    x, w = _simpson_grid(-half, half, n_grid)
    sampler = GermSampler(seed, problem.germ_dim)
    energies = []
    for germs in _chunked_batches(sampler, n_samples, chunk):
        u = np.stack([problem.exact_solution(xi, germs) for xi in x], axis=1)
        du = np.stack(
            [problem.exact_solution_derivative(xi, germs) for xi in x], axis=1
        )
        kap = problem.field.values(x, germs)
        density = 0.5 * kap * du**2
        if not problem.nonlinearity.is_zero:
            density = density + problem.nonlinearity.antiderivative(x, u)
        if problem.source is not None:
            density = density + problem.source(x, germs) * u
        energies.append(density @ w)
    energies = np.concatenate(energies)
    return EnergyEstimate(
        mean=float(energies.mean()),
        standard_error=float(energies.std(ddof=1) / np.sqrt(n_samples)),
        sample_count=n_samples,
    )


def fit_convergence_rate(
    trajectory: Trajectory,
    j_star: float,
    n_range: tuple[int, int],
) -> float:
    """Least-squares slope of log(J(c_n) - j_star) against log(n)."""
    n = trajectory.iterations
    gap = trajectory.energy_mean - j_star
    mask = (n >= n_range[0]) & (n <= n_range[1]) & (n > 0)
    positive = mask & (gap > 0)
    if positive.sum() < mask.sum():
        warnings.warn(
            "non-positive energy gap inside the fit range; range truncated",
            RuntimeWarning,
        )
    if positive.sum() < 2:
        raise ValueError("not enough usable records to fit a rate")
    slope, _ = np.polyfit(np.log(n[positive]), np.log(gap[positive]), 1)
    return float(slope)
