"""Vectorized Monte-Carlo machinery for validating the closed-form results.

These helpers sample the full receive chain (effective channels, MMSE
estimates, combining, instantaneous SINR) in the de-spread domain, batched
over channel draws, and are used by the verification suite to check the
harmonic-mean SINR proxy, the Jensen rate bound, and the combining-vector
norm identity. They never run inside the simulation or training loops.
"""

from __future__ import annotations

import numpy as np


def _crandn(rng: np.random.Generator, *shape: int) -> np.ndarray:
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def mc_sinr_samples(assignment, rho, beta, rho0: float, n_antennas: int,
                    combiner: str, user: int, n_draws: int,
                    rng: np.random.Generator, chunk: int = 5000) -> np.ndarray:
    """Instantaneous-SINR draws for ``user`` under a fixed pilot assignment.

    The user must be non-collided. Interference includes every other active
    user, collided or not; estimates use the true multiplicities.
    """
    a = np.asarray(assignment, dtype=int)
    rho = np.asarray(rho, dtype=float)
    beta = np.asarray(beta, dtype=float)
    active = np.flatnonzero(a >= 1)
    pilots = np.unique(a[active])
    mult = {int(p): int(np.count_nonzero(a == p)) for p in pilots}
    if a[user] == 0 or mult[int(a[user])] != 1:
        raise ValueError("probe user must be active and non-collided")
    k = len(pilots)
    col = {int(p): j for j, p in enumerate(pilots)}
    u = np.array([mult[int(p)] for p in pilots], dtype=float)
    c = rho0 * u / (rho0 * u + 1.0)
    est_coef = np.sqrt(rho0 * u) / (rho0 * u + 1.0)
    user_col = col[int(a[user])]

    out = np.empty(n_draws)
    done = 0
    while done < n_draws:
        s = min(chunk, n_draws - done)
        h = _crandn(rng, s, n_antennas, active.size)
        g = np.zeros((s, n_antennas, k), dtype=complex)
        for j, i in enumerate(active):
            g[:, :, col[int(a[i])]] += h[:, :, j]
        g /= np.sqrt(u)
        despread = np.sqrt(rho0 * u) * g + _crandn(rng, s, n_antennas, k)
        g_hat = est_coef * despread
        if combiner == "mr":
            v_mat = g_hat
        elif combiner == "zf":
            gram = np.einsum("smk,sml->skl", g_hat.conj(), g_hat)
            v_mat = np.einsum("smk,skl->sml", g_hat, np.linalg.inv(gram))
        else:
            raise ValueError(f"unknown combiner {combiner!r}")
        v = v_mat[:, :, user_col]
        g_err = g[:, :, user_col] - g_hat[:, :, user_col]
        own = beta[user] * rho[user]
        num = own * np.abs(np.einsum("sm,sm->s", v.conj(), g_hat[:, :, user_col])) ** 2
        den = own * np.abs(np.einsum("sm,sm->s", v.conj(), g_err)) ** 2
        proj = np.einsum("sm,smj->sj", v.conj(), h)
        for j, i in enumerate(active):
            if i != user:
                den += beta[i] * rho[i] * np.abs(proj[:, j]) ** 2
        den += np.einsum("sm,sm->s", v.conj(), v).real
        out[done:done + s] = num / den
        done += s
    return out


def mc_inverse_sinr(assignment, rho, beta, rho0, n_antennas, combiner, user,
                    n_draws, rng) -> float:
    """(E[1/SINR])^{-1} estimated by Monte Carlo."""
    samples = mc_sinr_samples(assignment, rho, beta, rho0, n_antennas,
                              combiner, user, n_draws, rng)
    return float(1.0 / np.mean(1.0 / samples))


def mc_rate_stats(assignment, rho, beta, rho0, n_antennas, combiner, user,
                  ell: float, n_draws, rng) -> tuple[float, float]:
    """Mean instantaneous rate and its standard error."""
    sinr = mc_sinr_samples(assignment, rho, beta, rho0, n_antennas, combiner,
                           user, n_draws, rng)
    rates = np.log2(1.0 + ell * sinr)
    return float(rates.mean()), float(rates.std(ddof=1) / np.sqrt(n_draws))


def mc_combining_norms(multiplicities, rho0: float, n_antennas: int,
                       combiner: str, column: int, n_draws: int,
                       rng: np.random.Generator, chunk: int = 5000) -> np.ndarray:
    """Draws of ||v||^2 for one combining column, sampling the estimates from
    their exact distribution (CN(0, c_l) per antenna)."""
    u = np.asarray(multiplicities, dtype=float)
    c = rho0 * u / (rho0 * u + 1.0)
    k = u.shape[0]
    out = np.empty(n_draws)
    done = 0
    while done < n_draws:
        s = min(chunk, n_draws - done)
        g_hat = np.sqrt(c) * _crandn(rng, s, n_antennas, k)
        if combiner == "mr":
            v = g_hat[:, :, column]
        else:
            gram = np.einsum("smk,sml->skl", g_hat.conj(), g_hat)
            v = np.einsum("smk,skl->sml", g_hat, np.linalg.inv(gram))[:, :, column]
        out[done:done + s] = np.einsum("sm,sm->s", v.conj(), v).real
        done += s
    return out
