"""Randomized SVD and the factored momentum it produces."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from limuon.linalg import as_matrix, gaussian_matrix, qr_decompose, svd


@dataclass(frozen=True)
class RsvdParams:
    r_hat: int
    s: int

    def __post_init__(self):
        if self.r_hat < 1:
            raise ValueError(f"target rank must be >= 1, got {self.r_hat}")
        if self.s < 2:
            raise ValueError(f"oversampling must be >= 2, got {self.s}")

    @property
    def sketch_width(self) -> int:
        return self.r_hat + self.s

    def check_fits(self, m: int, n: int) -> None:
        if self.sketch_width > min(m, n):
            raise ValueError(
                f"r_hat + s = {self.sketch_width} exceeds min(m, n) = {min(m, n)}"
            )


@dataclass(frozen=True)
class FactoredMomentum:
    """Rank-``r_hat`` factors ``u_hat @ diag(s_hat) @ v_hat.T``.

    The diagonal middle factor is kept as a vector, so the persistent size is
    ``(m + n + 1) * r_hat`` floats.
    """

    u_hat: np.ndarray
    s_hat: np.ndarray
    v_hat: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return self.u_hat.shape[0], self.v_hat.shape[0]

    @property
    def rank(self) -> int:
        return self.s_hat.size

    @property
    def element_count(self) -> int:
        return self.u_hat.size + self.s_hat.size + self.v_hat.size


def reconstruct(f: FactoredMomentum) -> np.ndarray:
    m, n = f.shape
    assert f.element_count == (m + n + 1) * f.rank
    return (f.u_hat * f.s_hat) @ f.v_hat.T


def rsvd(a, params: RsvdParams, rng: np.random.Generator) -> FactoredMomentum:
    """Sketch-and-solve randomized SVD truncated to the leading ``r_hat`` triples.

    A fresh Gaussian test matrix of width ``r_hat + s`` is drawn from ``rng``
    on every call.
    """
    a = as_matrix(a, name="A")
    m, n = a.shape
    params.check_fits(m, n)
    omega = gaussian_matrix(n, params.sketch_width, rng)
    q, _ = qr_decompose(a @ omega)
    b = q.T @ a
    u_small, sigma, v = svd(b)
    k = params.r_hat
    return FactoredMomentum(q @ u_small[:, :k], sigma[:k].copy(), v[:, :k].copy())


def tail_energy(singular_values, r_hat: int) -> float:
    """sqrt(sum_{j > r_hat} nu_j^2)."""
    if r_hat < 0:
        raise ValueError("r_hat must be >= 0")
    nu = np.asarray(singular_values, dtype=np.float64)
    tail = nu[r_hat:]
    return float(np.sqrt(np.sum(tail * tail)))


def rsvd_error_bound(singular_values, r_hat: int, s: int) -> float:
    """Expected-error bound (1 + r_hat/(s-1))^(1/2) * tail_energy for the sketch."""
    if s < 2:
        raise ValueError(f"oversampling must be >= 2, got {s}")
    if r_hat < 1 or r_hat > len(singular_values):
        raise ValueError(f"r_hat must be in [1, {len(singular_values)}], got {r_hat}")
    return math.sqrt(1.0 + r_hat / (s - 1)) * tail_energy(singular_values, r_hat)
