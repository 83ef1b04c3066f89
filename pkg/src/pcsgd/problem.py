"""Built-in semilinear problem instances and their exact solutions.

Each instance bundles a diffusivity field, a reaction nonlinearity, an
optional deterministic-in-u source term, Dirichlet boundary data, and the
FEM/PC discretization it is meant to be solved on.  Exact solutions are
attached where known so the evaluation module can measure errors.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Callable

import numpy as np

from .fem1d import Mesh1D
from .pc_basis import PcBasisSet, generate_basis
from .random_field import (
    DiffusionField,
    HomogeneousLogNormalField,
    TrigLogNormalField,
)


@dataclass(eq=False)
class Nonlinearity:
    """Reaction term f(x, u) with antiderivative and u-derivative.

    `antiderivative` satisfies d/du antiderivative = value.  When the
    derivative admits a positive uniform lower bound it is recorded in
    `delta_lower_bound`; the sine reaction has none (cos(u) hits -1) and
    stores None, which is what forces the ridge/fallback logic in the
    optimizer.
    """

    name: str
    value: Callable[[np.ndarray, np.ndarray], np.ndarray]
    antiderivative: Callable[[np.ndarray, np.ndarray], np.ndarray]
    derivative: Callable[[np.ndarray, np.ndarray], np.ndarray]
    delta_lower_bound: float | None = None
    is_zero: bool = False
    # |f| bound and Lipschitz constant, when finite
    value_bound: float | None = None
    lipschitz_bound: float | None = None


ZERO_REACTION = Nonlinearity(
    name="zero",
    value=lambda x, u: np.zeros_like(u),
    antiderivative=lambda x, u: np.zeros_like(u),
    derivative=lambda x, u: np.zeros_like(u),
    delta_lower_bound=0.0,
    is_zero=True,
    value_bound=0.0,
    lipschitz_bound=0.0,
)

SINE_REACTION = Nonlinearity(
    name="sine",
    value=lambda x, u: np.sin(u),
    antiderivative=lambda x, u: -np.cos(u),
    derivative=lambda x, u: np.cos(u),
    delta_lower_bound=None,
    value_bound=1.0,
    lipschitz_bound=1.0,
)


@dataclass(eq=False)
class ProblemInstance:
    """A semilinear elliptic problem bound to its discretization.

    `source` maps (quadrature points (P,), germs (n, K)) to per-germ source
    values (n, P); it enters the energy as source * u and the gradient as
    its projection onto the basis.  `exact_solution` maps (x scalar, germs)
    to per-germ solution values.
    """

    name: str
    field: DiffusionField
    nonlinearity: Nonlinearity
    mesh: Mesh1D
    basis: PcBasisSet
    boundary: tuple[float, float] = (0.0, 0.0)
    source: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None
    exact_solution: Callable[[float, np.ndarray], np.ndarray] | None = None
    exact_solution_derivative: Callable[[float, np.ndarray], np.ndarray] | None = None
    exact_energy: float | None = None
    _cache: dict = dc_field(default_factory=dict, repr=False)

    @property
    def is_linear(self) -> bool:
        return self.nonlinearity.is_zero

    @property
    def germ_dim(self) -> int:
        return self.field.germ_dim


def _simpson_grid(a: float, b: float, n_grid: int) -> tuple[np.ndarray, np.ndarray]:
    """Odd-sized Simpson grid and weights on [a, b]."""
    if n_grid % 2 == 0:
        n_grid += 1
    x = np.linspace(a, b, n_grid)
    w = np.ones(n_grid)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    w *= (b - a) / (n_grid - 1) / 3.0
    return x, w


def _inverse_kappa_integral(
    field: DiffusionField, a: float, b: float, germs: np.ndarray, n_grid: int = 801
) -> np.ndarray:
    """Per-germ integral of 1/kappa over [a, b] by composite Simpson."""
    if b <= a:
        return np.zeros(np.atleast_2d(germs).shape[0])
    x, w = _simpson_grid(a, b, n_grid)
    return (1.0 / field.values(x, germs)) @ w


def builtin_linear_homogeneous(
    beta: float, n_pairs: int, length: float, n_interior: int, degree_bound: int
) -> ProblemInstance:
    """Linear diffusion, zero source, zero boundary: the minimizer is u = 0."""
    field = TrigLogNormalField(beta, n_pairs, length)
    return ProblemInstance(
        name="linear_homogeneous",
        field=field,
        nonlinearity=ZERO_REACTION,
        mesh=Mesh1D(length, n_interior),
        basis=generate_basis(field.germ_dim, degree_bound),
        exact_solution=lambda x, germs: np.zeros(np.atleast_2d(germs).shape[0]),
        exact_solution_derivative=lambda x, germs: np.zeros(
            np.atleast_2d(germs).shape[0]
        ),
        exact_energy=0.0,
    )


def builtin_linear_nonhomogeneous(
    beta: float, n_pairs: int, length: float, n_interior: int, degree_bound: int
) -> ProblemInstance:
    """Linear diffusion with boundary data (0, 1).

    The per-germ solution is the quotient of cumulative over total
    inverse-diffusivity integrals; constant flux kappa * u' follows.
    """
    field = TrigLogNormalField(beta, n_pairs, length)
    half = length / 2.0

    def exact(x: float, germs: np.ndarray) -> np.ndarray:
        num = _inverse_kappa_integral(field, -half, float(x), germs)
        den = _inverse_kappa_integral(field, -half, half, germs)
        return num / den

    def exact_derivative(x: float, germs: np.ndarray) -> np.ndarray:
        den = _inverse_kappa_integral(field, -half, half, germs)
        inv_kappa = 1.0 / field.values(np.atleast_1d(float(x)), germs)[:, 0]
        return inv_kappa / den

    return ProblemInstance(
        name="linear_nonhomogeneous",
        field=field,
        nonlinearity=ZERO_REACTION,
        mesh=Mesh1D(length, n_interior),
        basis=generate_basis(field.germ_dim, degree_bound),
        boundary=(0.0, 1.0),
        exact_solution=exact,
        exact_solution_derivative=exact_derivative,
    )


def builtin_semilinear_homogeneous_field(
    length: float, n_interior: int, degree_bound: int
) -> ProblemInstance:
    """Sine reaction with a spatially constant log-normal diffusivity.

    The source is the unique choice making u = sin(pi x) / kappa an exact
    solution of -(kappa u')' + source + sin(u) = 0, namely
    source(x, y) = -pi^2 sin(pi x) - sin(sin(pi x) / kappa(y)).
    """
    if length != int(length) or int(length) % 2 != 0:
        raise ValueError("length must be an even integer so sin(pi x) vanishes on the boundary")
    field = HomogeneousLogNormalField()

    def source(x: np.ndarray, germs: np.ndarray) -> np.ndarray:
        kap = field.scalar_values(germs)[:, None]
        sx = np.sin(np.pi * np.asarray(x, dtype=float))[None, :]
        return -np.pi**2 * sx - np.sin(sx / kap)

    def exact(x: float, germs: np.ndarray) -> np.ndarray:
        return np.sin(np.pi * float(x)) / field.scalar_values(germs)

    def exact_derivative(x: float, germs: np.ndarray) -> np.ndarray:
        return np.pi * np.cos(np.pi * float(x)) / field.scalar_values(germs)

    return ProblemInstance(
        name="semilinear_homogeneous_field",
        field=field,
        nonlinearity=SINE_REACTION,
        mesh=Mesh1D(length, n_interior),
        basis=generate_basis(field.germ_dim, degree_bound),
        source=source,
        exact_solution=exact,
        exact_solution_derivative=exact_derivative,
    )


def builtin_semilinear_nonhomogeneous_field(
    beta: float, n_pairs: int, length: float, n_interior: int, degree_bound: int
) -> ProblemInstance:
    """Sine reaction with the trigonometric log-normal diffusivity.

    u = 0 solves the problem; the minimum energy is the integral of
    -cos(0), i.e. -length.
    """
    field = TrigLogNormalField(beta, n_pairs, length)
    return ProblemInstance(
        name="semilinear_nonhomogeneous_field",
        field=field,
        nonlinearity=SINE_REACTION,
        mesh=Mesh1D(length, n_interior),
        basis=generate_basis(field.germ_dim, degree_bound),
        exact_solution=lambda x, germs: np.zeros(np.atleast_2d(germs).shape[0]),
        exact_solution_derivative=lambda x, germs: np.zeros(
            np.atleast_2d(germs).shape[0]
        ),
        exact_energy=-length,
    )
