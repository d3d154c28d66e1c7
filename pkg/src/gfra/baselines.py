"""Baseline access schemes: genie-barred ALOHA, scheduled pairs, and
pre-assigned non-orthogonal pilots with joint MMSE estimation."""

from __future__ import annotations

import numpy as np

from .channel import ZF_COND_LIMIT, crandn


def barring_probability(n_backlogged: int, n_pilots: int) -> float:
    """Genie access-barring parameter min{L/|K|, 1}."""
    if n_backlogged <= 0:
        return 1.0
    return min(n_pilots / n_backlogged, 1.0)


def baseline1_step(backlogged: np.ndarray, n_pilots: int, rho_max: float,
                   rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Each backlogged user transmits with the barred probability on a
    uniformly random pilot at full power."""
    n_users = backlogged.shape[0]
    a = np.zeros(n_users, dtype=int)
    rho = np.zeros(n_users)
    p_bar = barring_probability(int(np.count_nonzero(backlogged)), n_pilots)
    for i in np.flatnonzero(backlogged):
        if rng.random() < p_bar:
            a[i] = int(rng.integers(1, n_pilots + 1))
            rho[i] = rho_max
    return a, rho


def baseline2_step(slot: int, backlogged: np.ndarray, n_pilots: int,
                   rho_max: float) -> tuple[np.ndarray, np.ndarray]:
    """Scheduled pairs: users 1..L own pilots 1..L on even slots, users
    L+1..2L reuse them on odd slots; collision-free by construction."""
    n_users = backlogged.shape[0]
    if n_users != 2 * n_pilots:
        raise ValueError("scheduled-pair baseline needs n_users = 2 * n_pilots")
    a = np.zeros(n_users, dtype=int)
    rho = np.zeros(n_users)
    first_half = slot % 2 == 0
    for i in np.flatnonzero(backlogged):
        if first_half and i < n_pilots:
            a[i] = i + 1
        elif not first_half and i >= n_pilots:
            a[i] = i - n_pilots + 1
        if a[i]:
            rho[i] = rho_max
    return a, rho


def nonorth_pilot_book(n_pilots: int, n_users: int,
                       rng: np.random.Generator) -> np.ndarray:
    """(L, N) unit-energy pilot matrix, one unique column per user."""
    psi = crandn(rng, n_pilots, n_users)
    return psi / np.linalg.norm(psi, axis=0, keepdims=True)


def nonorth_pilot_phase(h_act: np.ndarray, psi_act: np.ndarray, rho0: float,
                        rng: np.random.Generator) -> np.ndarray:
    """Received pilot matrix (M, L) with channel-inversion pilot power, i.e.
    every active user arrives at pilot SNR rho0."""
    n_antennas = h_act.shape[0]
    noise = crandn(rng, n_antennas, psi_act.shape[0])
    return np.sqrt(rho0) * h_act @ psi_act.T + noise


def nonorth_mmse_estimate(yp: np.ndarray, psi_act: np.ndarray, rho0: float) -> np.ndarray:
    """Joint MMSE estimate of the active user channels (estimates are coupled
    across users because the pilots are not orthogonal)."""
    psi_t = np.sqrt(rho0) * psi_act.conj()
    gram = psi_t.conj().T @ psi_t
    return yp @ psi_t @ np.linalg.inv(gram + np.eye(gram.shape[0]))


def nonorth_combining(h_hat_act: np.ndarray, n_pilots: int) -> tuple[np.ndarray, str]:
    """ZF on the joint estimates when they can be linearly independent
    (|active| <= L and a well-conditioned Gram matrix); MR otherwise."""
    k = h_hat_act.shape[1]
    if 0 < k <= n_pilots:
        gram = h_hat_act.conj().T @ h_hat_act
        if np.linalg.cond(gram) <= ZF_COND_LIMIT:
            return h_hat_act @ np.linalg.inv(gram), "zf"
    return h_hat_act, "mr"
