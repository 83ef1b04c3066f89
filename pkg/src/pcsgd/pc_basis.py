"""Multivariate probabilists' Hermite basis with analytic moment tables.

The stochastic subspace is spanned by products of univariate probabilists'
Hermite polynomials indexed by multi-indices of bounded total degree.  The
basis is un-normalized: the second moment of a basis function with
multi-index ``a`` is ``prod(a_k!)``.  All moments used by the control
variates are computed analytically from the three-term recurrence; Gauss
quadrature is only ever used as an independent oracle in the tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

# Basis sets beyond this count are refused outright: the coefficient vector
# would not fit in memory anyway.
MAX_BASIS_SIZE = 10_000_000


def _compositions(total: int, parts: int) -> Iterator[tuple[int, ...]]:
    """All ways to write `total` as an ordered sum of `parts` non-negatives."""
    if parts == 1:
        yield (total,)
        return
    for head in range(total + 1):
        for tail in _compositions(total - head, parts - 1):
            yield (head,) + tail


@dataclass(eq=False)
class PcBasisSet:
    """Ordered multivariate Hermite basis of total degree <= degree_bound.

    Ordering is graded lexicographic: ascending total degree, lexicographic
    within a degree.  Index 0 is always the constant polynomial.
    """

    germ_dim: int
    degree_bound: int
    indices: tuple[tuple[int, ...], ...]
    _position: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if not self._position:
            self._position = {m: i for i, m in enumerate(self.indices)}

    @property
    def size(self) -> int:
        return len(self.indices)

    @property
    def degrees(self) -> np.ndarray:
        """Multi-indices as an int array of shape (size, germ_dim)."""
        return np.array(self.indices, dtype=np.int64)

    def position(self, multi_index: Sequence[int]) -> int | None:
        return self._position.get(tuple(multi_index))


def generate_basis(germ_dim: int, degree_bound: int) -> PcBasisSet:
    """Enumerate all multi-indices of total degree <= degree_bound."""
    if germ_dim < 1:
        raise ValueError(f"germ_dim must be >= 1, got {germ_dim}")
    if degree_bound < 0:
        raise ValueError(f"degree_bound must be >= 0, got {degree_bound}")
    count = math.comb(degree_bound + germ_dim, germ_dim)
    if count > MAX_BASIS_SIZE:
        raise OverflowError(
            f"basis of size {count} exceeds the supported maximum {MAX_BASIS_SIZE}"
        )
    indices = tuple(
        m
        for total in range(degree_bound + 1)
        for m in _compositions(total, germ_dim)
    )
    assert len(indices) == count
    return PcBasisSet(germ_dim, degree_bound, indices)


def eval_univariate(degree: int, y):
    """Probabilists' Hermite polynomial He_n via the three-term recurrence."""
    if degree < 0:
        raise ValueError("degree must be non-negative")
    y = np.asarray(y, dtype=float)
    return hermite_table(degree, y)[..., degree]


def hermite_table(max_degree: int, y: np.ndarray) -> np.ndarray:
    """He_0..He_max_degree stacked on a trailing axis, shape y.shape + (max_degree+1,)."""
    y = np.asarray(y, dtype=float)
    out = np.empty(y.shape + (max_degree + 1,))
    out[..., 0] = 1.0
    if max_degree >= 1:
        out[..., 1] = y
    for n in range(1, max_degree):
        # He_{n+1} = y He_n - n He_{n-1}
        out[..., n + 1] = y * out[..., n] - n * out[..., n - 1]
    return out


def eval_all(basis: PcBasisSet, y) -> np.ndarray:
    """Evaluate every basis polynomial at germ(s) y.

    y of shape (germ_dim,) gives a (size,) vector; shape (n, germ_dim) gives
    an (n, size) matrix.
    """
    y = np.asarray(y, dtype=float)
    single = y.ndim == 1
    if single:
        y = y[None, :]
    if y.shape[1] != basis.germ_dim:
        raise ValueError(
            f"germ has dimension {y.shape[1]}, basis expects {basis.germ_dim}"
        )
    uni = hermite_table(basis.degree_bound, y)  # (n, K, p+1)
    out = np.ones((y.shape[0], basis.size))
    for j, alpha in enumerate(basis.indices):
        for k, a_k in enumerate(alpha):
            if a_k:
                out[:, j] *= uni[:, k, a_k]
    return out[0] if single else out


def _norm(alpha: Sequence[int]) -> float:
    return float(math.prod(math.factorial(a) for a in alpha))


def pair_moment(basis: PcBasisSet, a: int, b: int) -> float:
    """E[psi_a psi_b]; diagonal by orthogonality, with value prod(alpha_k!)."""
    if basis.indices[a] != basis.indices[b]:
        return 0.0
    return _norm(basis.indices[a])


def linear_weighted_moment(basis: PcBasisSet, k: int, a: int, b: int) -> float:
    """E[Y_k psi_a psi_b], analytically.

    Uses y He_n = He_{n+1} + n He_{n-1} on component k of index a, then
    orthogonality against index b.  The shifted indices need not belong to
    the truncated basis; only their tuples matter.
    """
    if not 0 <= k < basis.germ_dim:
        raise ValueError(f"germ component {k} out of range")
    alpha = basis.indices[a]
    beta = basis.indices[b]
    up = alpha[:k] + (alpha[k] + 1,) + alpha[k + 1 :]
    total = 0.0
    if up == beta:
        total += _norm(beta)
    if alpha[k] > 0:
        down = alpha[:k] + (alpha[k] - 1,) + alpha[k + 1 :]
        if down == beta:
            total += alpha[k] * _norm(beta)
    return total


@dataclass(eq=False)
class MomentTable:
    """Precomputed E[psi_a psi_b] and E[Y_k psi_a psi_b] for a basis set."""

    pair_moments: np.ndarray  # (size, size), diagonal
    linear_moments: np.ndarray  # (germ_dim, size, size)


def moment_table(basis: PcBasisSet) -> MomentTable:
    n = basis.size
    pair = np.zeros((n, n))
    for a in range(n):
        pair[a, a] = _norm(basis.indices[a])
    linear = np.zeros((basis.germ_dim, n, n))
    for k in range(basis.germ_dim):
        for a in range(n):
            alpha = basis.indices[a]
            # only indices one degree apart along k can contribute
            for shift, weight in (((1), 1.0), ((-1), alpha[k])):
                if alpha[k] + shift < 0 or weight == 0:
                    continue
                moved = alpha[:k] + (alpha[k] + shift,) + alpha[k + 1 :]
                b = basis.position(moved)
                if b is not None:
                    linear[k, a, b] = weight * _norm(moved)
    return MomentTable(pair, linear)
