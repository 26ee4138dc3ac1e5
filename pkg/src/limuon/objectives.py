"""Synthetic finite-sum objectives with exact gradients and known constants.

Every oracle is a finite sum ``f(W) = mean_i f(W; i)`` over ``N`` fixed
targets.  A sample is just the integer index ``i``; because it is a plain
value, the optimizer can evaluate the same sample at two iterates, which the
recursive momentum estimator depends on.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from limuon.linalg import as_matrix, gaussian_matrix, random_orthonormal


@dataclass(frozen=True)
class OracleConstants:
    L: float | None = None
    L0: float | None = None
    L1: float | None = None
    sigma: float = 0.0
    f_star: float | None = None
    w_star: np.ndarray | None = None


class StochasticOracle:
    """Base class: finite sum over ``targets`` with per-sample loss/gradient."""

    name = "oracle"

    def __init__(self, targets: np.ndarray):
        targets = np.asarray(targets, dtype=np.float64)
        if targets.ndim != 3 or targets.shape[0] < 1:
            raise ValueError("targets must have shape (N, m, n) with N >= 1")
        self.targets = targets
        self.targets.setflags(write=False)
        self.target_mean = targets.mean(axis=0)
        self.target_mean.setflags(write=False)
        self.constants = self._constants()

    @property
    def dims(self) -> tuple[int, int]:
        return self.targets.shape[1], self.targets.shape[2]

    @property
    def num_samples(self) -> int:
        return self.targets.shape[0]

    def sample(self, rng: np.random.Generator) -> int:
        return int(rng.integers(self.num_samples))

    def _check(self, w) -> np.ndarray:
        w = np.asarray(w, dtype=np.float64)
        if w.shape != self.dims:
            raise ValueError(f"expected W of shape {self.dims}, got {w.shape}")
        return w

    def stochastic_grad(self, w, sample: int) -> np.ndarray:
        raise NotImplementedError

    def full_grad(self, w) -> np.ndarray:
        raise NotImplementedError

    def loss(self, w) -> float:
        raise NotImplementedError

    def sample_loss(self, w, sample: int) -> float:
        raise NotImplementedError

    def _constants(self) -> OracleConstants:
        return OracleConstants()


class QuadraticOracle(StochasticOracle):
    """f(W; i) = 0.5 ||W - A_i||_F^2 (1-smooth, minimizer = mean target)."""

    name = "noisy_quadratic"

    def _constants(self):
        resid = self.targets - self.target_mean
        spread = float(np.mean(np.sum(resid * resid, axis=(1, 2))))
        return OracleConstants(
            L=1.0,
            sigma=float(np.sqrt(spread)),
            f_star=0.5 * spread,
            w_star=self.target_mean,
        )

    def stochastic_grad(self, w, sample):
        return self._check(w) - self.targets[sample]

    def full_grad(self, w):
        return self._check(w) - self.target_mean

    def loss(self, w):
        d = self._check(w) - self.target_mean
        return 0.5 * float(np.sum(d * d)) + self.constants.f_star

    def sample_loss(self, w, sample):
        d = self._check(w) - self.targets[sample]
        return 0.5 * float(np.sum(d * d))


class QuarticOracle(StochasticOracle):
    """f(W; i) = 0.25 ||W - A_i||_F^4.

    Hessian norm is 3 d^2 and gradient norm d^3 for d = ||W - A_i||_F, so
    ``3 d^2 <= L0 + L1 d^3`` with ``L1 = 1`` and ``L0 = max_d (3 d^2 - d^3) = 4``.
    No global Lipschitz constant for the gradient exists.
    """

    name = "quartic"

    def _constants(self):
        resid = self.targets - self.target_mean
        known = bool(np.all(resid == 0.0))
        return OracleConstants(
            L0=4.0,
            L1=1.0,
            sigma=self._sigma_at(self.target_mean),
            f_star=0.0 if known else None,
            w_star=self.target_mean if known else None,
        )

    def _sigma_at(self, w) -> float:
        g = self.per_sample_grads(w)
        dev = g - g.mean(axis=0)
        return float(np.sqrt(np.mean(np.sum(dev * dev, axis=(1, 2)))))

    def per_sample_grads(self, w) -> np.ndarray:
        d = self._check(w)[None] - self.targets
        sq = np.sum(d * d, axis=(1, 2))
        return sq[:, None, None] * d

    def stochastic_grad(self, w, sample):
        d = self._check(w) - self.targets[sample]
        return float(np.sum(d * d)) * d

    def full_grad(self, w):
        return self.per_sample_grads(w).mean(axis=0)

    def loss(self, w):
        d = self._check(w)[None] - self.targets
        sq = np.sum(d * d, axis=(1, 2))
        return 0.25 * float(np.mean(sq * sq))

    def sample_loss(self, w, sample):
        d = self._check(w) - self.targets[sample]
        sq = float(np.sum(d * d))
        return 0.25 * sq * sq


def _noise(m, n, count, noise_scale, rng):
    # normalized so that E||E_i||_F^2 = noise_scale^2
    return noise_scale * rng.standard_normal((count, m, n)) / np.sqrt(m * n)


def noisy_quadratic(m: int, n: int, N: int, noise_scale: float, rng, target=None):
    """Finite-sum quadratic around a Gaussian target ``A`` (or the one given).

    ``noise_scale`` is the RMS Frobenius norm of the per-sample perturbations,
    so the gradient noise level sigma comes out close to it.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    if target is None:
        target = gaussian_matrix(m, n, rng)
    target = as_matrix(target, name="target")
    if target.shape != (m, n):
        raise ValueError(f"target shape {target.shape} != ({m}, {n})")
    return QuadraticOracle(target[None] + _noise(m, n, N, noise_scale, rng))


def quartic_oracle(m: int, n: int, A, N: int, noise_scale: float, rng):
    A = as_matrix(A, name="A")
    if A.shape != (m, n):
        raise ValueError(f"A shape {A.shape} != ({m}, {n})")
    if N < 1:
        raise ValueError("N must be >= 1")
    return QuarticOracle(A[None] + _noise(m, n, N, noise_scale, rng))


class LowRankQuadraticOracle(QuadraticOracle):
    name = "lowrank_target"

    def __init__(self, targets, left, right):
        self.left = left
        self.right = right
        super().__init__(targets)


def lowrank_target_oracle(
    m: int, n: int, true_rank: int, N: int, noise_scale: float, rng, confine_noise: bool = True
):
    """Quadratic around a rank-``true_rank`` mean target ``U diag(s) V^T``.

    With ``confine_noise`` each sample perturbs only the ``true_rank x
    true_rank`` core, so every per-sample and full gradient at a W in the same
    subspace (W = 0 included) has rank <= ``true_rank``.  Without it the
    perturbations are full rank and the momentum is only approximately low
    rank.
    """
    if not 1 <= true_rank <= min(m, n):
        raise ValueError(f"true_rank must be in [1, {min(m, n)}]")
    if N < 1:
        raise ValueError("N must be >= 1")
    left = random_orthonormal(m, true_rank, rng)
    right = random_orthonormal(n, true_rank, rng)
    core = np.diag(np.linspace(2.0, 1.0, true_rank))
    if confine_noise:
        noise = noise_scale * rng.standard_normal((N, true_rank, true_rank)) / true_rank
        targets = np.einsum("ia,nab,jb->nij", left, core[None] + noise, right)
    else:
        targets = (left @ core @ right.T)[None] + _noise(m, n, N, noise_scale, rng)
    return LowRankQuadraticOracle(targets, left, right)


def finite_diff_grad(oracle: StochasticOracle, w, h: float = 1e-5) -> np.ndarray:
    """Entrywise central differences of ``oracle.loss``."""
    if h <= 0:
        raise ValueError("h must be positive")
    w = np.array(oracle._check(w), dtype=np.float64)
    g = np.empty_like(w)
    for idx in np.ndindex(*w.shape):
        orig = w[idx]
        w[idx] = orig + h
        fp = oracle.loss(w)
        w[idx] = orig - h
        fm = oracle.loss(w)
        w[idx] = orig
        g[idx] = (fp - fm) / (2.0 * h)
    return g


PROBLEMS = ("noisy_quadratic", "quartic", "lowrank_target")


@dataclass
class ProblemSpec:
    """Declarative problem description used by the harness."""

    kind: str = "noisy_quadratic"
    m: int = 16
    n: int = 8
    samples: int = 64
    noise_scale: float = 0.1
    target_scale: float = 1.0
    true_rank: int = 2
    confine_noise: bool = True
    seed: int = 0

    def build(self) -> StochasticOracle:
        if self.kind not in PROBLEMS:
            raise ValueError(f"unknown problem {self.kind!r}; expected one of {PROBLEMS}")
        rng = np.random.default_rng(self.seed)
        if self.kind == "noisy_quadratic":
            target = self.target_scale * gaussian_matrix(self.m, self.n, rng)
            return noisy_quadratic(self.m, self.n, self.samples, self.noise_scale, rng, target)
        if self.kind == "quartic":
            A = self.target_scale * gaussian_matrix(self.m, self.n, rng)
            return quartic_oracle(self.m, self.n, A, self.samples, self.noise_scale, rng)
        return lowrank_target_oracle(
            self.m, self.n, self.true_rank, self.samples, self.noise_scale, rng, self.confine_noise
        )
