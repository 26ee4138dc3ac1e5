import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from limuon.linalg import make_rng
from limuon.metrics import RunRecord, fit_rate, lemma1_envelope, rho_hat, summarize
from limuon.objectives import lowrank_target_oracle
from limuon.optimizer import OptimizerConfig, StepRecord, limuon_run


def rec(t, nuc, fro=None, loss=0.0):
    return StepRecord(t, loss, nuc if fro is None else fro, nuc, 0.0, 1)


def test_summarize_single():
    run = summarize([rec(0, 2.0)])
    assert run.avg_nuclear == 2.0 and run.min_frobenius == 2.0


def test_summarize_constant_trajectory():
    run = summarize([rec(t, 1.5) for t in range(7)])
    assert run.avg_nuclear == run.min_frobenius == 1.5


def test_summarize_random_against_resummation():
    rng = make_rng(0)
    nuc = rng.uniform(0, 5, 100)
    fro = nuc * rng.uniform(0.3, 1.0, 100)
    records = [rec(t, n, f, loss=float(t)) for t, (n, f) in enumerate(zip(nuc, fro))]
    run = summarize(records)
    assert run.avg_nuclear == pytest.approx(math.fsum(nuc) / 100, abs=1e-12)
    assert run.min_frobenius == min(fro)
    assert run.final_loss == 99.0


def test_summarize_permutation_invariant_averages():
    rng = make_rng(1)
    records = [rec(t, float(v)) for t, v in enumerate(rng.uniform(0, 1, 50))]
    shuffled = [records[i] for i in rng.permutation(50)]
    assert summarize(records).avg_nuclear == pytest.approx(summarize(shuffled).avg_nuclear, abs=1e-15)
    assert summarize(records).min_frobenius == summarize(shuffled).min_frobenius


def test_summarize_rejects_empty():
    with pytest.raises(ValueError):
        summarize([])


def _runs(horizons, values):
    return [RunRecord({"T": T}, [], v, v, 0.0) for T, v in zip(horizons, values)]


@pytest.mark.parametrize("exponent", [-1 / 3, -0.5, 0.0, 0.25])
def test_fit_rate_recovers_planted_exponent(exponent):
    horizons = [300, 3000, 30000, 100_000]
    fit = fit_rate(_runs(horizons, [2.5 * T**exponent for T in horizons]))
    assert fit.slope == pytest.approx(exponent, abs=1e-10)
    assert fit.r_squared == pytest.approx(1.0, abs=1e-10) or exponent == 0.0


def test_fit_rate_averages_repeats():
    runs = _runs([10, 10, 100, 1000], [1.0, 3.0, 2.0 / 10**0.5, 2.0 / 100**0.5])
    fit = fit_rate(runs)
    assert fit.slope == pytest.approx(-0.5, abs=1e-10)


def test_fit_rate_rejects_degenerate():
    with pytest.raises(ValueError):
        fit_rate(_runs([10, 10, 10], [1.0, 2.0, 3.0]))
    with pytest.raises(ValueError):
        fit_rate(_runs([10, 100], [1.0, 2.0]))


def test_envelope_noise_free():
    beta, eta, L, r = 0.2, 0.01, 1.5, 4
    expected = math.sqrt((1 - beta) ** 2 / ((2 - beta) * beta)) * L * eta * r
    for t in (0, 5, 100):
        assert lemma1_envelope(beta, eta, 0.0, L, r, t) == pytest.approx(expected, rel=1e-14)


def test_envelope_near_one():
    sigma = 0.7
    val = lemma1_envelope(0.999, 0.01, sigma, 1.0, 3, 3)
    assert val == pytest.approx(sigma, rel=2e-3)


def test_envelope_reference_value():
    # 0.5**10 + sqrt(1/3) + sqrt(1/3) * 0.04, evaluated at 30 digits with mpmath
    assert lemma1_envelope(0.5, 0.01, 1.0, 1.0, 4, 10) == pytest.approx(
        0.601420842457210795089514731722, rel=1e-14
    )


def test_envelope_rejects_beta_outside():
    for beta in (0.0, 1.0):
        with pytest.raises(ValueError):
            lemma1_envelope(beta, 0.1, 1.0, 1.0, 1.0, 0)


@settings(max_examples=200, deadline=None)
@given(
    beta=st.floats(0.01, 0.99),
    eta=st.floats(1e-4, 1.0),
    sigma=st.floats(0.0, 5.0),
    L=st.floats(0.1, 10.0),
    r=st.integers(1, 64),
    t=st.integers(0, 1000),
    bump=st.floats(1.01, 3.0),
)
def test_envelope_monotone(beta, eta, sigma, L, r, t, bump):
    base = lemma1_envelope(beta, eta, sigma, L, r, t)
    assert lemma1_envelope(beta, eta, sigma * bump + 1e-3, L, r, t) > base
    assert lemma1_envelope(beta, eta * bump, sigma, L, r, t) > base
    assert lemma1_envelope(beta, eta, sigma, L * bump, r, t) > base
    assert lemma1_envelope(beta, eta, sigma, L, r + 1, t) > base


def test_rho_hat_examples():
    assert rho_hat([np.array([3.0, 0.0, 0.0])], [1.0], 1) == 0.0
    assert rho_hat([np.array([2.0, 1.0])], [2.0], 1) == pytest.approx(0.5)
    assert rho_hat([np.array([2.0, 1.0]), np.array([5.0, 5.0])], [2.0, 0.0], 1) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        rho_hat([np.array([1.0])], [1.0, 2.0], 1)


def test_rho_hat_on_lowrank_runs_is_finite_and_stable():
    # full-rank noise, so the tail beyond r_hat is genuine rather than roundoff
    oracle = lowrank_target_oracle(12, 8, 2, 32, 0.1, make_rng(2), confine_noise=False)
    estimates = []
    for seed in range(5):
        cfg = OptimizerConfig("limuon_opt2", T=500, eta0=0.5, beta0=1.0, r_hat=2, s=3, seed=seed)
        records, _ = limuon_run(cfg, oracle, np.zeros((12, 8)))
        run = summarize(records, cfg.to_dict(), r_hat=2)
        assert run.rho_hat is not None and math.isfinite(run.rho_hat)
        estimates.append(run.rho_hat)
    estimates = np.array(estimates)
    assert np.all(np.abs(estimates - estimates.mean()) <= 0.2 * max(estimates.mean(), 1e-12) + 1e-9)
