"""Germ sampling and the log-normal diffusivity fields.

Sampling is counter-based: a germ batch is fully determined by
(seed, iteration, purpose), and row `index` of a batch does not depend on
the batch size.  Distinct purposes ("gradient", "hessian", "monitor", ...)
therefore give non-colliding, independently reproducible streams without
any shared mutable state.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np


def _purpose_code(purpose: str) -> int:
    return zlib.crc32(purpose.encode("utf-8"))


@dataclass(eq=False)
class GermSampler:
    """Reproducible standard-normal germ streams keyed by (seed, iteration, purpose)."""

    seed: int
    dim: int

    def _rng(self, iteration: int, purpose: str) -> np.random.Generator:
        key = np.random.SeedSequence(
            entropy=self.seed, spawn_key=(iteration, _purpose_code(purpose))
        )
        return np.random.default_rng(key)

    def sample_batch(self, iteration: int, size: int, purpose: str) -> np.ndarray:
        """Standard-normal germs of shape (size, dim); rows are batch-size invariant."""
        return self._rng(iteration, purpose).standard_normal((size, self.dim))

    def sample_germ(self, iteration: int, index: int, purpose: str) -> np.ndarray:
        return self.sample_batch(iteration, index + 1, purpose)[index]


class DiffusionField:
    """Positive random diffusivity parameterized by a standard-normal germ."""

    germ_dim: int

    def values(self, x: np.ndarray, germs: np.ndarray) -> np.ndarray:
        """Field at points x (n_pts,) for germs (n, germ_dim) -> (n, n_pts)."""
        raise NotImplementedError

    def value_at_mean(self, x: np.ndarray) -> np.ndarray:
        """Field with the germ frozen at its mean (the zero vector)."""
        raise NotImplementedError

    def gradient_at_mean(self, x: np.ndarray) -> np.ndarray:
        """Germ-gradient of the field at the germ mean, shape (germ_dim, n_pts)."""
        raise NotImplementedError


class TrigLogNormalField(DiffusionField):
    """kappa = exp(beta * V) with V a finite random Fourier series.

    V(x, Y) = (1/sqrt(n_pairs)) * sum_k A_k cos(2 pi k x / period)
                                      + B_k sin(2 pi k x / period)
    with germ layout (A_1..A_n, B_1..B_n).  V has zero mean and stationary
    covariance (1/n_pairs) sum_k cos(2 pi k (x2-x1) / period).
    """

    def __init__(self, amplitude: float, n_pairs: int, period: float):
        if n_pairs < 1:
            raise ValueError("need at least one harmonic pair")
        self.amplitude = amplitude
        self.n_pairs = n_pairs
        self.period = period
        self.germ_dim = 2 * n_pairs

    def harmonics(self, x: np.ndarray) -> np.ndarray:
        """Scaled cos/sin rows, shape (germ_dim, n_pts); V = germ @ harmonics."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        k = np.arange(1, self.n_pairs + 1)[:, None]
        angles = 2.0 * np.pi * k * x[None, :] / self.period
        scale = 1.0 / np.sqrt(self.n_pairs)
        return np.concatenate([np.cos(angles), np.sin(angles)]) * scale

    def values(self, x, germs):
        germs = np.atleast_2d(np.asarray(germs, dtype=float))
        return np.exp(self.amplitude * (germs @ self.harmonics(x)))

    def value_at_mean(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return np.ones_like(x)

    def gradient_at_mean(self, x):
        # d/dy_k exp(beta * y @ H) at y = 0 is beta * H_k
        return self.amplitude * self.harmonics(x)


class HomogeneousLogNormalField(DiffusionField):
    """Spatially constant kappa = exp(coefficient * (Y_1 + Y_2))."""

    def __init__(self, coefficient: float = 0.2, germ_dim: int = 2):
        if germ_dim < 2:
            raise ValueError("field uses the first two germ components")
        self.coefficient = coefficient
        self.germ_dim = germ_dim

    def scalar_values(self, germs: np.ndarray) -> np.ndarray:
        germs = np.atleast_2d(np.asarray(germs, dtype=float))
        return np.exp(self.coefficient * (germs[:, 0] + germs[:, 1]))

    def values(self, x, germs):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return np.broadcast_to(
            self.scalar_values(germs)[:, None], (np.atleast_2d(germs).shape[0], x.size)
        ).copy()

    def value_at_mean(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return np.ones_like(x)

    def gradient_at_mean(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        grad = np.zeros((self.germ_dim, x.size))
        grad[0] = self.coefficient
        grad[1] = self.coefficient
        return grad


def eval_kappa(field: DiffusionField, x, y) -> np.ndarray | float:
    """Convenience scalar/array evaluation of the field."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.asarray(y, dtype=float)
    single = y.ndim == 1
    out = field.values(x, y if not single else y[None, :])
    if single:
        out = out[0]
    return float(out[0]) if out.size == 1 else out


def kappa_at_mean(field: DiffusionField, x):
    out = field.value_at_mean(np.atleast_1d(np.asarray(x, dtype=float)))
    return float(out[0]) if out.size == 1 else out


def kappa_gradient_at_mean(field: DiffusionField, x) -> np.ndarray:
    grad = field.gradient_at_mean(np.atleast_1d(np.asarray(x, dtype=float)))
    return grad[:, 0] if grad.shape[1] == 1 else grad
