"""Baseline access schemes: barring, scheduling, non-orthogonal pilots."""

import numpy as np
import pytest

from gfra.baselines import (barring_probability, baseline1_step, baseline2_step,
                            nonorth_combining, nonorth_mmse_estimate,
                            nonorth_pilot_book, nonorth_pilot_phase)
from gfra.channel import LsfcVector, crandn, mmse_estimate, pilot_phase


def test_barring_probability():
    assert barring_probability(12, 6) == pytest.approx(0.5)
    assert barring_probability(6, 6) == 1.0
    assert barring_probability(3, 6) == 1.0
    assert barring_probability(0, 6) == 1.0


def test_baseline1_access_frequency():
    rng = np.random.default_rng(0)
    backlogged = np.ones(12, bool)
    n_tx, n_slots = 0, 20_000
    for _ in range(n_slots):
        a, rho = baseline1_step(backlogged, 6, 3.0, rng)
        n_tx += np.count_nonzero(a)
        assert np.all(rho[a >= 1] == 3.0) and np.all(rho[a == 0] == 0.0)
        assert np.all((a >= 0) & (a <= 6))
    freq = n_tx / (12 * n_slots)
    se = np.sqrt(0.5 * 0.5 / (12 * n_slots))
    assert abs(freq - 0.5) < 3 * se


def test_baseline1_idle_users_never_transmit():
    rng = np.random.default_rng(1)
    backlogged = np.array([True, False] * 6)
    for _ in range(200):
        a, _ = baseline1_step(backlogged, 6, 1.0, rng)
        assert np.all(a[~backlogged] == 0)


def test_baseline2_schedule():
    backlogged = np.ones(12, bool)
    a, rho = baseline2_step(0, backlogged, 6, 2.0)          # even slot
    assert a[2] == 3 and rho[2] == 2.0                       # user 3 -> pilot 3
    assert np.all(a[6:] == 0)
    a, _ = baseline2_step(1, backlogged, 6, 2.0)             # odd slot
    assert a[2] == 0
    assert a[8] == 3                                         # user 9 -> pilot 3


def test_baseline2_never_collides():
    rng = np.random.default_rng(2)
    for slot in range(10_000):
        backlogged = rng.random(12) < 0.8
        a, _ = baseline2_step(slot, backlogged, 6, 1.0)
        active = a[a >= 1]
        assert active.size == np.unique(active).size


def test_baseline2_requires_paired_layout():
    with pytest.raises(ValueError):
        baseline2_step(0, np.ones(10, bool), 6, 1.0)


def test_pilot_book_unit_norm():
    psi = nonorth_pilot_book(6, 12, np.random.default_rng(3))
    assert psi.shape == (6, 12)
    assert np.allclose(np.linalg.norm(psi, axis=0), 1.0, atol=1e-12)


def test_nonorth_reduces_to_orthogonal_estimator():
    """With orthonormal pilot columns, the joint estimate equals the
    single-pilot estimator applied to the same received signal."""
    rng = np.random.default_rng(4)
    m, n_pilots = 32, 4
    psi_act = np.eye(n_pilots)[:, :1].astype(complex)       # pilot = e_1
    rho0 = 8.0
    h_act = crandn(rng, m, 1)
    yp = nonorth_pilot_phase(h_act, psi_act, rho0, rng)
    h_hat = nonorth_mmse_estimate(yp, psi_act, rho0)

    lsfc = LsfcVector(beta=np.ones(1), beta_min=1.0, rho0=rho0)
    real = pilot_phase(lsfc, np.array([1]), m, n_pilots, rng)
    real.yp = yp                                            # same observation
    g_hat, _ = mmse_estimate(real, rho0)
    assert np.max(np.abs(h_hat[:, 0] - g_hat[:, 0])) < 1e-9


def test_nonorth_combining_fallback():
    rng = np.random.default_rng(5)
    n_pilots = 4
    tall = crandn(rng, 32, n_pilots)
    v, kind = nonorth_combining(tall, n_pilots)
    assert kind == "zf"
    assert np.max(np.abs(v.conj().T @ tall - np.eye(n_pilots))) < 1e-9
    over = crandn(rng, 32, n_pilots + 1)
    v, kind = nonorth_combining(over, n_pilots)
    assert kind == "mr" and v is over


def test_nonorth_mmse_error_covariance():
    """Monte-Carlo channel-estimation error vs the analytic MMSE error
    covariance trace (I + rho0 Psi^H Psi)^{-1}, within 2%."""
    rng = np.random.default_rng(6)
    m, n_pilots, k, rho0 = 16, 6, 4, 5.0
    psi = nonorth_pilot_book(n_pilots, k, rng)
    analytic = np.trace(np.linalg.inv(
        np.eye(k) + rho0 * psi.conj().T @ psi)).real
    err = 0.0
    n_draws = 10_000
    for _ in range(n_draws):
        h = crandn(rng, m, k)
        yp = nonorth_pilot_phase(h, psi, rho0, rng)
        h_hat = nonorth_mmse_estimate(yp, psi, rho0)
        err += np.sum(np.abs(h - h_hat) ** 2) / m
    assert err / n_draws == pytest.approx(analytic, rel=0.02)
