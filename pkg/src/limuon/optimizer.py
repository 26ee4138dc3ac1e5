"""Muon and LiMuon step loops."""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from limuon import estimator as est
from limuon.linalg import frobenius_norm, newton_schulz, nuclear_norm, svd, numerical_rank
from limuon.rsvd import RsvdParams

VARIANTS = ("muon", "limuon_opt1", "limuon_opt2")
SCHEDULES = ("constant", "two_thirds_power")
ORTHOGONALIZERS = ("svd", "newton_schulz")

BETA_CLAMP = 1e-6
ZERO_MOMENTUM = 1e-14


class DivergenceError(RuntimeError):
    """Raised when a loss or gradient becomes non-finite; keeps the partial trajectory."""

    def __init__(self, t: int, records: list):
        super().__init__(f"run diverged at step {t}")
        self.t = t
        self.records = records


@dataclass(frozen=True)
class OptimizerConfig:
    variant: str = "limuon_opt1"
    T: int = 1000
    eta0: float | None = None
    beta0: float = 1.0
    mu: float = 0.95
    r_hat: int = 8
    s: int = 5
    schedule: str = "two_thirds_power"
    orthogonalizer: str = "svd"
    ns_iters: int = 30
    seed: int = 0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if self.schedule not in SCHEDULES:
            raise ValueError(f"unknown schedule {self.schedule!r}; expected one of {SCHEDULES}")
        if self.orthogonalizer not in ORTHOGONALIZERS:
            raise ValueError(
                f"unknown orthogonalizer {self.orthogonalizer!r}; expected one of {ORTHOGONALIZERS}"
            )
        if self.T < 0:
            raise ValueError("T must be >= 0")
        if self.eta0 is not None and self.eta0 <= 0:
            raise ValueError("eta0 must be positive")
        if self.beta0 <= 0:
            raise ValueError("beta0 must be positive")
        if self.variant == "muon" and not 0.0 <= self.mu < 1.0:
            raise ValueError("mu must be in [0, 1)")
        if self.variant == "limuon_opt2":
            RsvdParams(self.r_hat, self.s)
        if self.ns_iters < 1:
            raise ValueError("ns_iters must be positive")

    @property
    def rsvd_params(self) -> RsvdParams:
        return RsvdParams(self.r_hat, self.s)

    def resolved_eta0(self, m: int, n: int) -> float:
        if self.eta0 is not None:
            return self.eta0
        return 0.05 / math.sqrt(min(m, n))

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class StepRecord:
    t: int
    loss: float
    grad_frobenius: float
    grad_nuclear: float
    estimator_error: float
    state_elements: int
    wall_ms: float = 0.0
    momentum_spectrum: np.ndarray | None = field(default=None, repr=False, compare=False)


def schedule(config: OptimizerConfig, T: int, dims: tuple[int, int] | None = None):
    """Step size and STORM weight for a horizon ``T``; constant over the run."""
    if T < 1:
        raise ValueError("T must be >= 1")
    eta0 = config.resolved_eta0(*dims) if dims is not None else config.eta0
    if eta0 is None:
        raise ValueError("eta0 unset and no dimensions to derive a default from")
    if config.schedule == "constant":
        return eta0, config.beta0
    scale = T ** (-2.0 / 3.0)
    beta = min(max(config.beta0 * scale, BETA_CLAMP), 1.0 - BETA_CLAMP)
    return eta0 * scale, beta


def state_memory(config: OptimizerConfig, m: int, n: int) -> int:
    if config.variant == "limuon_opt2":
        return (m + n + 1) * config.r_hat
    return m * n


def orthogonalize(m: np.ndarray, config: OptimizerConfig):
    """Direction U V^T for the update and, for the exact path, the spectrum of ``m``."""
    if config.orthogonalizer == "newton_schulz":
        return newton_schulz(m, config.ns_iters), None
    u, sigma, v = svd(m)
    k = numerical_rank(sigma)
    return u[:, :k] @ v[:, :k].T, sigma


def muon_step(w, state: est.ClassicMuon, grad, eta: float, config: OptimizerConfig | None = None):
    """B <- mu B + G; W <- W - eta * polar(B).  Zero momentum leaves W unchanged."""
    config = config or OptimizerConfig(variant="muon", mu=state.mu)
    state = est.classic_muon_update(state, grad)
    if frobenius_norm(state.b) <= ZERO_MOMENTUM:
        return np.array(w, dtype=np.float64, copy=True), state
    direction, _ = orthogonalize(state.b, config)
    return w - eta * direction, state


def _check_finite(t, loss, grad, records):
    if not (math.isfinite(loss) and np.all(np.isfinite(grad))):
        raise DivergenceError(t, records)


def limuon_run(config: OptimizerConfig, oracle, w0, *, timing: bool = False):
    """Run ``config.T`` steps of the configured optimizer from ``w0``.

    Returns ``(records, w_T)``; record ``t`` describes the iterate ``W_t``
    before its update.  Sampling and sketching use independent streams
    spawned from ``config.seed``, so LiMuon Option #1 and #2 draw identical
    samples for the same seed.
    """
    w = np.array(w0, dtype=np.float64, copy=True)
    m, n = w.shape
    if oracle.dims != (m, n):
        raise ValueError(f"oracle dims {oracle.dims} != W0 shape {w.shape}")
    records: list[StepRecord] = []
    T = config.T
    if T == 0:
        return records, w
    if config.variant == "limuon_opt2":
        config.rsvd_params.check_fits(m, n)
    eta, beta = schedule(config, T, (m, n))
    # overflow is reported as DivergenceError, not as numpy warnings
    with np.errstate(over="ignore", invalid="ignore"):
        return _run(config, oracle, w, eta, beta, timing)


def _run(config, oracle, w, eta, beta, timing):
    m, n = w.shape
    T = config.T
    records: list[StepRecord] = []
    sample_seq, sketch_seq = np.random.SeedSequence(config.seed).spawn(2)
    sample_rng = np.random.Generator(np.random.PCG64(sample_seq))
    sketch_rng = np.random.Generator(np.random.PCG64(sketch_seq))

    xi = oracle.sample(sample_rng)
    if config.variant == "muon":
        state = est.init_classic((m, n), config.mu)
        g = oracle.stochastic_grad(w, xi)
        state = est.classic_muon_update(state, g)
    else:
        state = est.init_storm(oracle.stochastic_grad(w, xi))
    momentum = state.dense()

    for t in range(T):
        start = time.perf_counter() if timing else 0.0
        loss = oracle.loss(w)
        true_grad = oracle.full_grad(w)
        _check_finite(t, loss, true_grad, records)
        fro = frobenius_norm(true_grad)
        nuc = nuclear_norm(true_grad)
        err = frobenius_norm(momentum - true_grad)

        spectrum = None
        w_prev = w
        if frobenius_norm(momentum) > ZERO_MOMENTUM:
            direction, spectrum = orthogonalize(momentum, config)
            w = w - eta * direction

        xi = oracle.sample(sample_rng)
        if config.variant == "muon":
            state = est.classic_muon_update(state, oracle.stochastic_grad(w, xi))
            momentum = state.b
        else:
            pair = est.SamplePair(oracle.stochastic_grad(w, xi), oracle.stochastic_grad(w_prev, xi))
            if config.variant == "limuon_opt1":
                state = est.storm_update(state, pair, beta)
                momentum = state.m
            else:
                state, momentum = est.compressed_storm_update(
                    state, pair, beta, sketch_rng, config.rsvd_params
                )
        if not np.all(np.isfinite(momentum)):
            raise DivergenceError(t, records)

        elapsed = (time.perf_counter() - start) * 1e3 if timing else 0.0
        # persistent state size, measured after the step's update
        records.append(StepRecord(t, loss, fro, nuc, err, state.element_count, elapsed, spectrum))
    return records, w
