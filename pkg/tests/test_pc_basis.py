import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pcsgd import (
    eval_all,
    eval_univariate,
    generate_basis,
    linear_weighted_moment,
    moment_table,
    pair_moment,
)
from pcsgd.pc_basis import hermite_table


def binom(n, k):
    return math.comb(n, k)


def test_basis_size_formula():
    for k, p in itertools.product(range(1, 5), range(0, 5)):
        basis = generate_basis(k, p)
        assert basis.size == binom(p + k, k)
        assert basis.germ_dim == k
        assert basis.degree_bound == p


def test_graded_ordering():
    basis = generate_basis(3, 4)
    degrees = [sum(alpha) for alpha in basis.indices]
    assert degrees[0] == 0
    assert all(a <= b for a, b in zip(degrees, degrees[1:]))
    # no duplicates, all within bound
    assert len(set(basis.indices)) == basis.size
    assert max(degrees) == 4


def test_univariate_values_match_explicit_polynomials():
    """First few probabilists' Hermite polynomials, written out by hand."""
    y = np.linspace(-3.0, 3.0, 41)
    explicit = [
        np.ones_like(y),
        y,
        y**2 - 1,
        y**3 - 3 * y,
        y**4 - 6 * y**2 + 3,
        y**5 - 10 * y**3 + 15 * y,
    ]
    for n, ref in enumerate(explicit):
        np.testing.assert_allclose(eval_univariate(n, y), ref, atol=1e-10)


def test_hermite_table_matches_eval_univariate():
    y = np.array([-1.7, 0.0, 0.3, 2.2])
    table = hermite_table(5, y)
    for n in range(6):
        np.testing.assert_allclose(table[..., n], eval_univariate(n, y))


def gauss_hermite_expectation(f, dim, n_nodes=24):
    """E[f(Y)] for standard normal Y via tensor Gauss-Hermite quadrature."""
    nodes, weights = np.polynomial.hermite_e.hermegauss(n_nodes)
    weights = weights / np.sqrt(2.0 * np.pi)
    total = 0.0
    for combo in itertools.product(range(n_nodes), repeat=dim):
        y = np.array([nodes[i] for i in combo])
        w = np.prod([weights[i] for i in combo])
        total += w * f(y)
    return total


def test_pair_moments_against_quadrature():
    """Criterion 8 (moments part): analytic E[Psi_a Psi_b] vs quadrature."""
    basis = generate_basis(2, 3)

    def product(a, b):
        def f(y):
            pa = np.prod([eval_univariate(n, np.array([yi]))[0] for n, yi in zip(basis.indices[a], y)])
            pb = np.prod([eval_univariate(n, np.array([yi]))[0] for n, yi in zip(basis.indices[b], y)])
            return pa * pb
        return f

    for a in range(basis.size):
        for b in range(a, basis.size):
            numeric = gauss_hermite_expectation(product(a, b), 2)
            assert abs(pair_moment(basis, a, b) - numeric) < 1e-10


def test_linear_weighted_moments_against_quadrature():
    basis = generate_basis(2, 3)

    def triple(k, a, b):
        def f(y):
            pa = np.prod([eval_univariate(n, np.array([yi]))[0] for n, yi in zip(basis.indices[a], y)])
            pb = np.prod([eval_univariate(n, np.array([yi]))[0] for n, yi in zip(basis.indices[b], y)])
            return y[k] * pa * pb
        return f

    for k in range(2):
        for a in range(basis.size):
            for b in range(basis.size):
                numeric = gauss_hermite_expectation(triple(k, a, b), 2)
                assert abs(linear_weighted_moment(basis, k, a, b) - numeric) < 1e-10


@given(st.lists(st.integers(min_value=0, max_value=6), min_size=1, max_size=4))
@settings(max_examples=50, deadline=None)
def test_squared_norm_is_product_of_factorials(alpha):
    basis = generate_basis(len(alpha), sum(alpha))
    a = basis.indices.index(tuple(alpha))
    expected = np.prod([math.factorial(n) for n in alpha])
    assert pair_moment(basis, a, a) == pytest.approx(expected)


def test_orthogonality_off_diagonal():
    basis = generate_basis(3, 3)
    for a in range(basis.size):
        for b in range(basis.size):
            if a != b:
                assert pair_moment(basis, a, b) == 0.0


def test_moment_table_consistency():
    basis = generate_basis(2, 2)
    table = moment_table(basis)
    assert table.pair_moments.shape == (basis.size, basis.size)
    assert table.linear_moments.shape == (2, basis.size, basis.size)
    for a in range(basis.size):
        for b in range(basis.size):
            assert table.pair_moments[a, b] == pair_moment(basis, a, b)
            for k in range(2):
                assert table.linear_moments[k, a, b] == linear_weighted_moment(
                    basis, k, a, b
                )
    # the linear tables are symmetric
    for k in range(2):
        np.testing.assert_array_equal(
            table.linear_moments[k], table.linear_moments[k].T
        )


def test_eval_all_is_product_of_univariate():
    basis = generate_basis(3, 2)
    rng = np.random.default_rng(5)
    germs = rng.standard_normal((17, 3))
    values = eval_all(basis, germs)
    assert values.shape == (17, basis.size)
    for j, alpha in enumerate(basis.indices):
        ref = np.ones(17)
        for k, n in enumerate(alpha):
            ref *= eval_univariate(n, germs[:, k])
        np.testing.assert_allclose(values[:, j], ref, rtol=1e-12)


def test_empirical_orthonormality():
    """Monte Carlo sanity check on E[Psi_a Psi_b] with large samples."""
    basis = generate_basis(2, 2)
    rng = np.random.default_rng(11)
    germs = rng.standard_normal((400_000, 2))
    psi = eval_all(basis, germs)
    gram = psi.T @ psi / germs.shape[0]
    analytic = moment_table(basis).pair_moments
    assert np.max(np.abs(gram - analytic)) < 0.15


def test_oversized_basis_rejected():
    with pytest.raises(OverflowError):
        generate_basis(30, 12)
