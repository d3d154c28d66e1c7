"""Physical layer: LSFC drops, pilot phase, MMSE estimation, combining, SINR.

All quantities are noise-normalized (receiver noise has unit variance).
Pilots are mutually orthogonal with unit energy; they are represented in
their own basis, so the de-spread statistic of pilot ``l`` is simply column
``l`` of the received pilot matrix and the de-spread noise is CN(0, 1) per
antenna.

Pilot labels are 1-based (0 means back-off); matrix columns for the active
pilots are stored in increasing pilot order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import SystemConfig

ZF_COND_LIMIT = 1e12


class SingularGramError(np.linalg.LinAlgError):
    """Zero-forcing Gram matrix is numerically singular."""


def crandn(rng: np.random.Generator, *shape: int) -> np.ndarray:
    """Circularly-symmetric complex Gaussian with unit variance per entry
    (two independent real Gaussians of variance 1/2 each)."""
    flat = rng.standard_normal(shape + (2,))
    return flat.view(np.complex128).reshape(shape) / np.sqrt(2.0)


# ---------------------------------------------------------------------------
# Large-scale fading
# ---------------------------------------------------------------------------

@dataclass
class LsfcVector:
    """Noise-normalized linear LSFCs of one user drop.

    ``rho0 = L * beta_min * rho_max`` is the common pilot SNR produced by
    channel-inversion pilot power control.
    """

    beta: np.ndarray
    beta_min: float
    rho0: float

    @property
    def beta_db(self) -> np.ndarray:
        return 10.0 * np.log10(self.beta)


def _hex_points(n: int, radius: float, exclusion: float, rng: np.random.Generator) -> np.ndarray:
    """Uniform points in a hexagon (circumradius ``radius``, vertex on +x axis)
    minus the central exclusion disk."""
    apothem = np.sqrt(3.0) / 2.0 * radius
    axes = np.stack(
        [[np.cos(a), np.sin(a)] for a in np.deg2rad([30.0, 90.0, 150.0])]
    )  # edge-normal directions
    pts = np.empty((n, 2))
    got = 0
    while got < n:
        cand = rng.uniform(-radius, radius, size=(2 * (n - got) + 8, 2))
        inside = np.all(np.abs(cand @ axes.T) <= apothem, axis=1)
        inside &= np.hypot(cand[:, 0], cand[:, 1]) >= exclusion
        cand = cand[inside]
        take = min(len(cand), n - got)
        pts[got:got + take] = cand[:take]
        got += take
    return pts


def wraparound_bs_positions(radius: float) -> np.ndarray:
    """Central BS plus the 6 first-tier neighbors at distance sqrt(3)*radius."""
    angles = np.deg2rad(30.0 + 60.0 * np.arange(6))
    ring = np.sqrt(3.0) * radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    return np.vstack([[0.0, 0.0], ring])


def path_gain_db(system: SystemConfig, dist_km) -> np.ndarray:
    """Deterministic urban-micro path gain in dB (before shadowing and noise
    normalization)."""
    return system.pathloss_offset_db - system.pathloss_slope_db * np.log10(dist_km)


def draw_lsfc(system: SystemConfig, rng: np.random.Generator) -> LsfcVector:
    """One user drop: uniform hexagonal placement, urban-micro path gain
    ``pathloss_offset_db - pathloss_slope_db*log10(dist_km)`` plus lognormal
    shadowing per BS link, wrap-around maximum over the 7 BS candidates,
    then noise normalization."""
    if system.exclusion_radius_km >= system.cell_radius_km:
        raise ValueError("exclusion radius must be smaller than the cell radius")
    pos = _hex_points(system.n_users, system.cell_radius_km,
                      system.exclusion_radius_km, rng)
    bs = wraparound_bs_positions(system.cell_radius_km)
    dist = np.hypot(pos[:, None, 0] - bs[None, :, 0], pos[:, None, 1] - bs[None, :, 1])
    shadow = rng.normal(0.0, np.sqrt(system.shadow_variance_db), size=dist.shape)
    gain_db = path_gain_db(system, dist) + shadow
    beta_db = gain_db.max(axis=1) - system.noise_dbm
    beta = 10.0 ** (beta_db / 10.0)
    beta_min = float(beta.min())
    rho0 = float(system.n_pilots * beta_min * system.rho_max)
    return LsfcVector(beta=beta, beta_min=beta_min, rho0=rho0)


# ---------------------------------------------------------------------------
# Pilot phase, estimation, combining
# ---------------------------------------------------------------------------

@dataclass
class ChannelRealization:
    """Everything the receiver sees and derives in one slot."""

    assignment: np.ndarray          # (N,) pilot choices in {0..L}
    multiplicities: np.ndarray      # (L,) true per-pilot user counts
    active_pilots: np.ndarray       # (k,) active pilot labels, increasing
    h: np.ndarray                   # (M, N) small-scale channels
    yp: np.ndarray                  # (M, L) de-spread received pilot signal
    g_act: np.ndarray               # (M, k) true effective channels
    g_hat: np.ndarray | None = None  # (M, k) MMSE estimates
    c: np.ndarray | None = None     # (k,) mean-square of the estimates
    v: np.ndarray | None = None     # (M, k) combining matrix
    combiner: str | None = None
    _col: dict = field(default_factory=dict, repr=False)

    def column_of_pilot(self, pilot: int) -> int:
        if not self._col:
            self._col.update({int(p): j for j, p in enumerate(self.active_pilots)})
        return self._col[int(pilot)]


def pilot_phase(lsfc: LsfcVector, assignment: np.ndarray, n_antennas: int,
                n_pilots: int, rng: np.random.Generator) -> ChannelRealization:
    """Draw the slot's small-scale fading and form the received pilot matrix.

    With channel-inversion pilot power every active user arrives at pilot SNR
    ``rho0``, so column ``l`` of the de-spread signal is
    ``sqrt(rho0 * u_l) * g_l + noise`` with ``g_l`` the unit-variance
    effective channel of pilot ``l``.
    """
    assignment = np.asarray(assignment, dtype=int)
    n_users = assignment.shape[0]
    h = crandn(rng, n_antennas, n_users)
    noise = crandn(rng, n_antennas, n_pilots)

    mult = np.bincount(assignment[assignment >= 1], minlength=n_pilots + 1)[1:]
    active = np.flatnonzero(mult >= 1) + 1
    yp = noise.astype(complex)
    g_cols = []
    for pilot in active:
        users = np.flatnonzero(assignment == pilot)
        summed = h[:, users].sum(axis=1)
        yp[:, pilot - 1] += np.sqrt(lsfc.rho0) * summed
        g_cols.append(summed / np.sqrt(len(users)))
    g_act = np.stack(g_cols, axis=1) if g_cols else np.zeros((n_antennas, 0), complex)
    return ChannelRealization(assignment=assignment, multiplicities=mult,
                              active_pilots=active, h=h, yp=yp, g_act=g_act)


def detect_multiplicities(realization: ChannelRealization, rho0: float) -> np.ndarray:
    """Energy-detection estimate of the per-pilot multiplicities.

    Statistic per pilot: mean de-spread energy over antennas, which
    concentrates to ``rho0 * u_l + 1``. Validation tool only; the simulation
    pipeline uses the true multiplicities (perfect-detection assumption).
    """
    t_stat = np.mean(np.abs(realization.yp) ** 2, axis=0)
    return np.maximum(0, np.round((t_stat - 1.0) / rho0)).astype(int)


def mmse_estimate(realization: ChannelRealization, rho0: float
                  ) -> tuple[np.ndarray, np.ndarray]:
    """MMSE estimates of the active effective channels.

    ``g_hat_l = sqrt(rho0 u_l)/(rho0 u_l + 1) * despread_l`` with mean-square
    ``c_l = rho0 u_l / (rho0 u_l + 1)``; inactive pilots are excluded.
    """
    u = realization.multiplicities[realization.active_pilots - 1]
    snr = rho0 * u
    coef = np.sqrt(snr) / (snr + 1.0)
    g_hat = realization.yp[:, realization.active_pilots - 1] * coef
    c = snr / (snr + 1.0)
    return g_hat, c


def combining_matrix(g_hat_act: np.ndarray, combiner: str) -> np.ndarray:
    """Receive combining over the active-pilot estimates.

    MR returns the estimates themselves; ZF returns
    ``G_hat (G_hat^H G_hat)^{-1}`` so that ``V^H G_hat = I``.
    """
    if combiner == "mr":
        return g_hat_act
    if combiner == "zf":
        if g_hat_act.shape[1] == 0:
            return g_hat_act
        gram = g_hat_act.conj().T @ g_hat_act
        eig = np.linalg.eigvalsh(gram)  # Hermitian PSD: cond from extreme eigenvalues
        if eig[0] <= 0 or eig[-1] / eig[0] > ZF_COND_LIMIT:
            raise SingularGramError("zero-forcing Gram matrix is ill-conditioned")
        return g_hat_act @ np.linalg.inv(gram)
    raise ValueError(f"unknown combiner {combiner!r}")


def slot_channel(lsfc: LsfcVector, assignment: np.ndarray, n_antennas: int,
                 n_pilots: int, combiner: str,
                 rng: np.random.Generator) -> ChannelRealization:
    """Full receiver pipeline for one slot: pilot phase, MMSE, combining."""
    real = pilot_phase(lsfc, assignment, n_antennas, n_pilots, rng)
    real.g_hat, real.c = mmse_estimate(real, lsfc.rho0)
    real.v = combining_matrix(real.g_hat, combiner)
    real.combiner = combiner
    return real


# ---------------------------------------------------------------------------
# Instantaneous SINR and rate
# ---------------------------------------------------------------------------

def instantaneous_sinr(realization: ChannelRealization, rho: np.ndarray,
                       lsfc: LsfcVector, user: int) -> float:
    """SINR of a non-collided user with the drawn channels and estimates.

    Numerator: desired signal through the combining vector and the channel
    estimate; denominator: estimation-error leakage, interference from every
    other active user (collided or not), and combined noise.
    """
    a_u = int(realization.assignment[user])
    if a_u == 0:
        raise ValueError("idle/backed-off user has no SINR")
    if realization.multiplicities[a_u - 1] != 1:
        raise ValueError("SINR undefined for a collided user")
    col = realization.column_of_pilot(a_u)
    v = realization.v[:, col]
    g_hat = realization.g_hat[:, col]
    g_err = realization.g_act[:, col] - g_hat

    beta, rho = lsfc.beta, np.asarray(rho, dtype=float)
    num = beta[user] * rho[user] * np.abs(v.conj() @ g_hat) ** 2
    den = beta[user] * rho[user] * np.abs(v.conj() @ g_err) ** 2
    others = np.flatnonzero((realization.assignment >= 1))
    for j in others:
        if j == user:
            continue
        den += beta[j] * rho[j] * np.abs(v.conj() @ realization.h[:, j]) ** 2
    den += np.linalg.norm(v) ** 2
    return float(num / den)


def instantaneous_rate(sinr: float, ell: float) -> float:
    """Achievable rate in bits/s/Hz with the SINR-gap penalty."""
    return float(np.log2(1.0 + ell * sinr))


def slot_sinrs(realization: ChannelRealization, rho: np.ndarray,
               lsfc: LsfcVector) -> np.ndarray:
    """Vectorized per-user SINRs for one slot; NaN for idle or collided users.

    Same quantity as :func:`instantaneous_sinr`, computed with one pass of
    matrix products for the whole slot.
    """
    a = realization.assignment
    n_users = a.shape[0]
    out = np.full(n_users, np.nan)
    active = np.flatnonzero(a >= 1)
    if active.size == 0:
        return out
    v_h = realization.v.conj().T                      # (k, M)
    proj_h = v_h @ realization.h[:, active]           # (k, n_act)
    sig = np.einsum("km,mk->k", v_h, realization.g_hat)
    err = np.einsum("km,mk->k", v_h, realization.g_act - realization.g_hat)
    v_norm2 = np.einsum("mk,mk->k", realization.v.conj(), realization.v).real
    weights = lsfc.beta[active] * np.asarray(rho, float)[active]
    inter_all = np.abs(proj_h) ** 2 @ weights         # (k,) total over active users
    for pos, i in enumerate(active):
        pilot = a[i]
        if realization.multiplicities[pilot - 1] != 1:
            continue
        col = realization.column_of_pilot(pilot)
        own = lsfc.beta[i] * rho[i]
        interference = inter_all[col] - weights[pos] * np.abs(proj_h[col, pos]) ** 2
        den = own * np.abs(err[col]) ** 2 + interference + v_norm2[col]
        out[i] = own * np.abs(sig[col]) ** 2 / den
    return out


# ---------------------------------------------------------------------------
# Closed-form proxies (design-time only; simulations use the instantaneous SINR)
# ---------------------------------------------------------------------------

@dataclass
class RateProxyInput:
    """Macroscopic variables the proxies depend on."""

    assignment: np.ndarray
    rho: np.ndarray
    beta: np.ndarray
    rho0: float
    n_antennas: int
    combiner: str

    @property
    def multiplicities(self) -> np.ndarray:
        a = np.asarray(self.assignment, dtype=int)
        return np.bincount(a[a >= 1], minlength=int(a.max(initial=0)) + 1)[1:]

    @property
    def n_active_pilots(self) -> int:
        return int(np.count_nonzero(self.multiplicities))


def _estimate_ms(rho0: float, u) -> np.ndarray:
    """Mean-square of the MMSE estimate for multiplicity ``u``."""
    snr = rho0 * np.asarray(u, dtype=float)
    return snr / (snr + 1.0)


def sinr_proxy(inp: RateProxyInput, user: int) -> float:
    """Harmonic-mean SINR proxy ``(E[1/SINR])^{-1}`` of a non-collided user.

    MR:  (M-1) c_i b_i r_i / (sum_j b_j r_j - c_i b_i r_i + 1)
    ZF:  (M-k) c_i b_i r_i / ((1-c_i) b_i r_i
                              + sum_{j!=i} (1 - c_j/u_j) b_j r_j + 1)
    with c the estimate mean-square of the user's own pilot (MR/ZF) and of
    each interferer's pilot (ZF), k the number of active pilots, b*r the
    noise-normalized received data power.
    """
    a = np.asarray(inp.assignment, dtype=int)
    a_u = int(a[user])
    if a_u == 0:
        raise ValueError("idle/backed-off user has no SINR proxy")
    mult = inp.multiplicities
    if mult[a_u - 1] != 1:
        raise ValueError("SINR proxy requires a non-collided user")

    beta = np.asarray(inp.beta, dtype=float)
    rho = np.asarray(inp.rho, dtype=float)
    m = inp.n_antennas
    c_own = float(_estimate_ms(inp.rho0, 1))
    own = beta[user] * rho[user]
    active = np.flatnonzero(a >= 1)

    if inp.combiner == "mr":
        total = float(np.sum(beta[active] * rho[active]))
        return (m - 1) * c_own * own / (total - c_own * own + 1.0)
    if inp.combiner == "zf":
        k = inp.n_active_pilots
        if m <= k:
            raise ValueError("zero-forcing proxy needs n_antennas > active pilots")
        den = (1.0 - c_own) * own + 1.0
        for j in active:
            if j == user:
                continue
            u_j = mult[a[j] - 1]
            c_j = float(_estimate_ms(inp.rho0, u_j))
            den += (1.0 - c_j / u_j) * beta[j] * rho[j]
        return (m - k) * c_own * own / den
    raise ValueError(f"unknown combiner {inp.combiner!r}")


def rate_proxy(inp: RateProxyInput, user: int, ell: float) -> float:
    """Rate lower bound ``log2(1 + ell * sinr_proxy)`` (Jensen)."""
    return float(np.log2(1.0 + ell * sinr_proxy(inp, user)))
