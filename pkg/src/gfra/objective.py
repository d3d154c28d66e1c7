"""Closed-form, differentiable expected sum-priority objective.

Given a stochastic pilot-selection matrix (rows sum to one over
{back-off, pilot 1..L}) and per-user transmit powers, the objective is the
priority-weighted sum of per-user success probabilities: the probability of
transmitting without collision times a normal-approximated probability that
the interference-plus-noise stays below the user's own-power tolerance.

Everything here is pure torch (float64) so gradients flow to policy
parameters; simulation-side callers can pass numpy arrays, which are
converted on entry.

Batching convention: ``pi`` has shape (..., N, L+1); per-user quantities have
shape (..., N); coefficient tensors broadcast against (..., N).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

DTYPE = torch.float64
VAR_FLOOR = 1e-12       # below this the Gaussian factor degenerates to a hard threshold
SELF_COEFF_FLOOR = 1e-9  # keeps the tolerance positive when the table numerator is not

_SQRT2 = float(np.sqrt(2.0))


def _as_tensor(x) -> torch.Tensor:
    if isinstance(x, torch.Tensor):
        return x.to(DTYPE)
    return torch.as_tensor(x, dtype=DTYPE)


def std_normal_cdf(x: torch.Tensor) -> torch.Tensor:
    """Phi(x) = 1 - S(x), evaluated through erfc for full-range accuracy."""
    return 0.5 * torch.erfc(-x / _SQRT2)


def inverse_sinr_limit(rate_threshold, ell: float):
    """Largest tolerable inverse (proxy) SINR for a rate target:
    ell / (2**rate_threshold - 1)."""
    return ell / (2.0 ** np.asarray(rate_threshold, dtype=float) - 1.0)


@dataclass
class InterferenceCoeffs:
    """Collision-free approximation of the interference/tolerance scales.

    ``cross`` multiplies each interferer's received power; ``self_scale``
    multiplies the user's own received power to give its interference
    tolerance. Shapes broadcast against (..., N).
    """

    cross: torch.Tensor
    self_scale: torch.Tensor


def interference_coeffs(omega, rho0, n_antennas: int, n_pilots: int,
                        combiner: str) -> InterferenceCoeffs:
    """Build the coefficient table under the all-pilots-used, no-collision
    approximation (estimate mean-square c ~ rho0/(1+rho0)).

    MR: cross = 1,            self = ((M-1) w rho0 - 1)/(rho0 + 1)
    ZF: cross = 1/(rho0 + 1), self = ((M-L) w rho0 - 1)/(rho0 + 1)

    ``self_scale`` is floored at a small positive value; at the floor the
    tolerance never exceeds the unit noise power, so success is effectively
    impossible rather than numerically undefined.
    """
    omega = _as_tensor(omega)
    rho0 = _as_tensor(rho0)
    if combiner == "mr":
        if n_antennas <= 1:
            raise ValueError("MR coefficients need n_antennas > 1")
        cross = torch.ones_like(rho0)
        self_scale = ((n_antennas - 1) * omega * rho0 - 1.0) / (rho0 + 1.0)
    elif combiner == "zf":
        if n_antennas <= n_pilots:
            raise ValueError("ZF coefficients need n_antennas > n_pilots")
        cross = 1.0 / (rho0 + 1.0)
        self_scale = ((n_antennas - n_pilots) * omega * rho0 - 1.0) / (rho0 + 1.0)
    else:
        raise ValueError(f"unknown combiner {combiner!r}")
    return InterferenceCoeffs(cross=cross, self_scale=self_scale.clamp_min(SELF_COEFF_FLOOR))


def _forced_backoff(pi: torch.Tensor, rho: torch.Tensor, backlogged) -> tuple[torch.Tensor, torch.Tensor]:
    """Replace idle users' rows by a deterministic back-off and zero power."""
    if backlogged is None:
        return pi, rho
    backlogged = torch.as_tensor(backlogged, dtype=torch.bool)
    off = torch.zeros(pi.shape[-1], dtype=pi.dtype)
    off[0] = 1.0
    pi = torch.where(backlogged.unsqueeze(-1), pi, off)
    rho = torch.where(backlogged, rho, torch.zeros((), dtype=rho.dtype))
    return pi, rho


def noncollision_prob(pi) -> torch.Tensor:
    """Per-user probability of transmitting alone on some pilot:
    sum_l pi_il * prod_{j != i} (1 - pi_jl)."""
    pi = _as_tensor(pi)
    q = 1.0 - pi[..., 1:]                              # (..., N, L)
    n = q.shape[-2]
    eye = torch.eye(n, dtype=torch.bool).unsqueeze(-1)  # (N, N, 1)
    # leave-one-out product without division (robust to q entries of exactly 0)
    stacked = q.unsqueeze(-3).expand(*q.shape[:-2], n, n, q.shape[-1])
    stacked = torch.where(eye, torch.ones((), dtype=pi.dtype), stacked)
    loo = stacked.prod(dim=-2)                          # (..., N, L)
    return (pi[..., 1:] * loo).sum(dim=-1)


def data_success_factor(tolerance: torch.Tensor, mean: torch.Tensor,
                        var: torch.Tensor) -> torch.Tensor:
    """Normal-approximated P{interference-plus-noise <= tolerance}.

    Below VAR_FLOOR the variance is clamped, which smoothly degenerates the
    factor to the hard threshold 1{tolerance >= mean} while keeping
    gradients defined.
    """
    return std_normal_cdf((tolerance - mean) / torch.sqrt(var.clamp_min(VAR_FLOOR)))


def interference_stats(pi, rho, beta, coeffs: InterferenceCoeffs
                       ) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Per-user (tolerance, mean, variance) of the interference-plus-noise
    comparison: each interferer contributes a Bernoulli(1 - pi_j0) activity
    times its scaled received power."""
    pi, rho, beta = _as_tensor(pi), _as_tensor(rho), _as_tensor(beta)
    recv = beta * rho                                  # received data power
    p_tx = 1.0 - pi[..., 0]
    mean_term = coeffs.cross * recv * p_tx
    var_term = coeffs.cross ** 2 * recv ** 2 * p_tx * (1.0 - p_tx)
    mean = mean_term.sum(dim=-1, keepdim=True) - mean_term + 1.0
    var = var_term.sum(dim=-1, keepdim=True) - var_term
    tolerance = coeffs.self_scale * recv
    return tolerance, mean, var


def success_prob(pi, rho, beta, coeffs: InterferenceCoeffs | None,
                 backlogged=None, collision_only: bool = False) -> torch.Tensor:
    """Per-user success probability under the stochastic policy."""
    pi, rho = _as_tensor(pi), _as_tensor(rho)
    pi, rho = _forced_backoff(pi, rho, backlogged)
    p_pilot = noncollision_prob(pi)
    if collision_only:
        return p_pilot
    if coeffs is None:
        raise ValueError("coefficient table required unless collision_only")
    tolerance, mean, var = interference_stats(pi, rho, beta, coeffs)
    return p_pilot * data_success_factor(tolerance, mean, var)


def expected_sum_priority(pi, rho, eta, beta, coeffs: InterferenceCoeffs | None,
                          backlogged=None, collision_only: bool = False) -> torch.Tensor:
    """Priority-weighted expected number of successes in the slot."""
    p_suc = success_prob(pi, rho, beta, coeffs, backlogged, collision_only)
    return (_as_tensor(eta) * p_suc).sum(dim=-1)


def masked_softmax(logits: torch.Tensor, pilot_mask=None) -> torch.Tensor:
    """Row softmax with disallowed pilots pinned to probability zero."""
    if pilot_mask is not None:
        mask = torch.as_tensor(pilot_mask, dtype=torch.bool)
        logits = logits.masked_fill(~mask, float("-inf"))
    return torch.softmax(logits, dim=-1)


def power_from_preact(preact: torch.Tensor, rho_max: float) -> torch.Tensor:
    """Sigmoid squashing scaled to the admissible power range."""
    return torch.sigmoid(preact) * rho_max


def objective_gradients(pi_logits, power_preacts, *, eta, beta, rho_max: float,
                        coeffs: InterferenceCoeffs | None = None, backlogged=None,
                        pilot_mask=None, collision_only: bool = False):
    """Exact gradients of the objective w.r.t. unconstrained pilot logits and
    power pre-activations. Returns (d_logits, d_preacts, objective_value)."""
    logits = _as_tensor(pi_logits).clone().requires_grad_(True)
    preacts = _as_tensor(power_preacts).clone().requires_grad_(True)
    pi = masked_softmax(logits, pilot_mask)
    rho = power_from_preact(preacts, rho_max)
    value = expected_sum_priority(pi, rho, eta, beta, coeffs, backlogged, collision_only)
    value.sum().backward()
    return logits.grad.numpy(), preacts.grad.numpy(), float(value.sum().item())
