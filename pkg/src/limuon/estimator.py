"""Gradient-estimator states: heavy-ball Muon momentum, dense STORM, compressed STORM.

States are immutable values and every update returns a new state, so a
trajectory can be replayed or compared step by step.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from limuon.linalg import frobenius_norm
from limuon.rsvd import FactoredMomentum, RsvdParams, reconstruct, rsvd


@dataclass(frozen=True)
class ClassicMuon:
    b: np.ndarray
    mu: float

    def __post_init__(self):
        if not 0.0 <= self.mu < 1.0:
            raise ValueError(f"mu must be in [0, 1), got {self.mu}")

    @property
    def element_count(self) -> int:
        return self.b.size

    def dense(self) -> np.ndarray:
        return self.b


@dataclass(frozen=True)
class StormDense:
    m: np.ndarray

    @property
    def element_count(self) -> int:
        return self.m.size

    def dense(self) -> np.ndarray:
        return self.m


@dataclass(frozen=True)
class StormCompressed:
    factors: FactoredMomentum
    params: RsvdParams

    @property
    def element_count(self) -> int:
        return self.factors.element_count

    def dense(self) -> np.ndarray:
        return reconstruct(self.factors)


MomentumState = Union[ClassicMuon, StormDense, StormCompressed]


@dataclass(frozen=True)
class SamplePair:
    """Gradients of one sample xi_{t+1} at the new and the old iterate."""

    grad_new: np.ndarray
    grad_old: np.ndarray

    def __post_init__(self):
        if self.grad_new.shape != self.grad_old.shape:
            raise ValueError(
                f"sample pair shapes differ: {self.grad_new.shape} vs {self.grad_old.shape}"
            )


def _check_shape(expected, got):
    if expected != got:
        raise ValueError(f"shape mismatch: state {expected} vs gradient {got}")


def init_classic(shape, mu: float) -> ClassicMuon:
    return ClassicMuon(np.zeros(shape), mu)


def init_storm(grad0) -> StormDense:
    return StormDense(np.array(grad0, dtype=np.float64, copy=True))


def classic_muon_update(state: ClassicMuon, grad) -> ClassicMuon:
    if not isinstance(state, ClassicMuon):
        raise TypeError(f"expected ClassicMuon state, got {type(state).__name__}")
    grad = np.asarray(grad, dtype=np.float64)
    _check_shape(state.b.shape, grad.shape)
    return ClassicMuon(state.mu * state.b + grad, state.mu)


def _storm_formula(m, pair: SamplePair, beta: float) -> np.ndarray:
    return pair.grad_new + (1.0 - beta) * (m - pair.grad_old)


def _check_beta(beta):
    if not 0.0 < beta <= 1.0:
        raise ValueError(f"beta must be in (0, 1], got {beta}")


def storm_update(state: StormDense, pair: SamplePair, beta: float) -> StormDense:
    """M <- g(W_{t+1}; xi) + (1 - beta) (M - g(W_t; xi))."""
    if not isinstance(state, StormDense):
        raise TypeError(f"expected StormDense state, got {type(state).__name__}")
    _check_beta(beta)
    _check_shape(state.m.shape, pair.grad_new.shape)
    return StormDense(_storm_formula(state.m, pair, beta))


def compressed_storm_update(
    state: MomentumState,
    pair: SamplePair,
    beta: float,
    rng: np.random.Generator,
    params: RsvdParams | None = None,
) -> tuple[StormCompressed, np.ndarray]:
    """STORM step driven by the low-rank momentum, then re-compression.

    ``state`` is either the dense initial momentum (``params`` required) or a
    compressed state.  Returns the new factored state together with the dense
    ``M_{t+1}``, which the caller orthogonalizes and then drops.
    """
    _check_beta(beta)
    if isinstance(state, StormCompressed):
        params = state.params
        m_hat = reconstruct(state.factors)
    elif isinstance(state, StormDense):
        if params is None:
            raise ValueError("params required to compress a dense initial state")
        # the initial momentum is compressed before it feeds the recursion
        m_hat = reconstruct(rsvd(state.m, params, rng))
    else:
        raise TypeError(f"cannot run compressed STORM from {type(state).__name__}")
    _check_shape(m_hat.shape, pair.grad_new.shape)
    params.check_fits(*m_hat.shape)
    m_next = _storm_formula(m_hat, pair, beta)
    return StormCompressed(rsvd(m_next, params, rng), params), m_next


def estimator_error(state: MomentumState, true_grad) -> float:
    return frobenius_norm(state.dense() - np.asarray(true_grad, dtype=np.float64))
