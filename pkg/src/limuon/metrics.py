"""Stationarity summaries, power-law rate fits and theory envelopes."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from limuon.rsvd import tail_energy

NEAR_STATIONARY = 1e-12


@dataclass
class RunRecord:
    config: dict
    records: list
    avg_nuclear: float
    min_frobenius: float
    final_loss: float
    rho_hat: float | None = None

    @property
    def T(self) -> int:
        return int(self.config.get("T", len(self.records)))


@dataclass
class RateFit:
    points: list[tuple[int, float]]
    slope: float
    intercept: float
    r_squared: float
    per_horizon_std: dict = field(default_factory=dict)


def summarize(records: Sequence, config: dict | None = None, r_hat: int | None = None) -> RunRecord:
    """Collapse a trajectory into the quantities the convergence theory talks about."""
    if len(records) == 0:
        raise ValueError("cannot summarize an empty trajectory")
    nuc = np.array([r.grad_nuclear for r in records], dtype=np.float64)
    fro = np.array([r.grad_frobenius for r in records], dtype=np.float64)
    rho = None
    if r_hat is not None:
        spectra = [r.momentum_spectrum for r in records]
        if all(s is not None for s in spectra):
            rho = rho_hat(spectra, fro, r_hat)
    return RunRecord(
        config=dict(config or {}),
        records=list(records),
        avg_nuclear=float(np.mean(nuc)),
        min_frobenius=float(np.min(fro)),
        final_loss=float(records[-1].loss),
        rho_hat=rho,
    )


def fit_power_law(horizons, values) -> tuple[float, float, float]:
    """Least-squares line through (log T, log value); returns slope, intercept, r^2."""
    x = np.log(np.asarray(horizons, dtype=np.float64))
    y = np.log(np.asarray(values, dtype=np.float64))
    if np.unique(x).size < 2:
        raise ValueError("need at least two distinct horizons")
    A = np.column_stack([x, np.ones_like(x)])
    (slope, intercept), *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), r2


def fit_rate(runs: Sequence[RunRecord]) -> RateFit:
    """Fit avg_nuclear ~ c * T^slope, averaging runs that share a horizon."""
    by_T: dict[int, list[float]] = {}
    for run in runs:
        by_T.setdefault(run.T, []).append(run.avg_nuclear)
    if len(by_T) < 3:
        raise ValueError(f"need >= 3 distinct horizons, got {sorted(by_T)}")
    horizons = sorted(by_T)
    means = [float(np.mean(by_T[T])) for T in horizons]
    slope, intercept, r2 = fit_power_law(horizons, means)
    return RateFit(
        points=list(zip(horizons, means)),
        slope=slope,
        intercept=intercept,
        r_squared=r2,
        per_horizon_std={T: float(np.std(by_T[T])) for T in horizons},
    )


def lemma1_envelope(beta: float, eta: float, sigma: float, L: float, r: float, t: int) -> float:
    """Bound on E||M_t - grad f(W_t)||_F for the dense STORM estimator at step t."""
    if not 0.0 < beta < 1.0:
        raise ValueError(f"beta must be in (0, 1), got {beta}")
    return (
        (1.0 - beta) ** t * sigma
        + math.sqrt(beta / (2.0 - beta)) * sigma
        + math.sqrt((1.0 - beta) ** 2 / ((2.0 - beta) * beta)) * L * eta * r
    )


def rho_hat(momentum_spectra, grad_norms, r_hat: int) -> float:
    """Largest observed ratio tail_energy(sigma(M_t), r_hat) / ||grad f(W_t)||_F.

    Steps with a gradient norm at or below 1e-12 are skipped.
    """
    if len(momentum_spectra) != len(grad_norms):
        raise ValueError("spectra and gradient norms must have equal length")
    worst = 0.0
    for spectrum, g in zip(momentum_spectra, grad_norms):
        if g <= NEAR_STATIONARY:
            continue
        worst = max(worst, tail_energy(spectrum, r_hat) / g)
    return worst
