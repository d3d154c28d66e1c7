"""Slot and episode simulation: glues traffic, fairness, the physical layer,
and an actor (learned policy or baseline) together.

Per-slot ordering: draw arrivals -> observe -> decide -> pilot + data phase
-> success/drop resolution -> deadline decrement -> append arrivals. The
slot's arrival is observable but becomes transmittable next slot.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from . import baselines
from .channel import (LsfcVector, crandn, instantaneous_rate, slot_channel,
                      slot_sinrs)
from .config import Config
from .fairness import FairnessTracker
from .policy import PolicyNetwork, EpisodeRecord, sample_action
from .traffic import UserQueue, success_indicator, urgency

FEEDBACK_IDLE, FEEDBACK_COLLISION, FEEDBACK_SUCCESS = 0, 1, 2


# ---------------------------------------------------------------------------
# Slot resolution (physical layer outcomes)
# ---------------------------------------------------------------------------

def resolve_slot(cfg: Config, lsfc: LsfcVector, assignment: np.ndarray,
                 rho: np.ndarray, fading_rng: np.random.Generator
                 ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Outcomes of one orthogonal-pilot slot.

    Returns (mu, multiplicities, pilot_status) where pilot_status holds the
    per-pilot ternary broadcast: idle (unused), success (single user whose
    packet was delivered), collision (multiple users, or a decoding failure
    of a lone user, which the ternary alphabet cannot distinguish).
    """
    system = cfg.system
    n_pilots = system.n_pilots
    assignment = np.asarray(assignment, dtype=int)
    mult = np.bincount(assignment[assignment >= 1], minlength=n_pilots + 1)[1:]
    mu = np.zeros(assignment.shape[0], dtype=int)

    if system.success_model == "collision_only":
        for i in np.flatnonzero(assignment >= 1):
            if mult[assignment[i] - 1] == 1:
                mu[i] = 1
    elif np.any(assignment >= 1):
        real = slot_channel(lsfc, assignment, system.n_antennas, n_pilots,
                            system.combiner, fading_rng)
        sinrs = slot_sinrs(real, rho, lsfc)
        r_th = system.rate_thresholds
        for i in np.flatnonzero(assignment >= 1):
            if mult[assignment[i] - 1] != 1:
                continue
            rate = instantaneous_rate(sinrs[i], system.penalty_ell)
            mu[i] = success_indicator(assignment[i], mult, rate, r_th[i])

    status = np.full(n_pilots, FEEDBACK_IDLE, dtype=int)
    for pilot in np.flatnonzero(mult >= 1) + 1:
        if mult[pilot - 1] >= 2:
            status[pilot - 1] = FEEDBACK_COLLISION
        else:
            user = int(np.flatnonzero(assignment == pilot)[0])
            status[pilot - 1] = FEEDBACK_SUCCESS if mu[user] else FEEDBACK_COLLISION
    return mu, mult, status


def resolve_slot_nonorth(cfg: Config, lsfc: LsfcVector, active: np.ndarray,
                         rho: np.ndarray, psi: np.ndarray,
                         fading_rng: np.random.Generator) -> np.ndarray:
    """Outcomes of one non-orthogonal-pilot slot (unique pilots, perfect
    activity detection): every active user is treated as non-collided and
    succeeds iff it meets its rate target."""
    system = cfg.system
    idx = np.flatnonzero(active)
    mu = np.zeros(active.shape[0], dtype=int)
    if idx.size == 0:
        return mu
    h_act = crandn(fading_rng, system.n_antennas, idx.size)
    yp = baselines.nonorth_pilot_phase(h_act, psi[:, idx], lsfc.rho0, fading_rng)
    h_hat = baselines.nonorth_mmse_estimate(yp, psi[:, idx], lsfc.rho0)
    v_mat, _ = baselines.nonorth_combining(h_hat, system.n_pilots)
    beta = lsfc.beta
    for col, i in enumerate(idx):
        v = v_mat[:, col]
        num = beta[i] * rho[i] * np.abs(v.conj() @ h_hat[:, col]) ** 2
        den = beta[i] * rho[i] * np.abs(v.conj() @ (h_act[:, col] - h_hat[:, col])) ** 2
        for other_col, j in enumerate(idx):
            if j != i:
                den += beta[j] * rho[j] * np.abs(v.conj() @ h_act[:, other_col]) ** 2
        den += np.linalg.norm(v) ** 2
        rate = instantaneous_rate(float(num / den), system.penalty_ell)
        mu[i] = int(rate >= system.rate_thresholds[i])
    return mu


# ---------------------------------------------------------------------------
# Observations and actors
# ---------------------------------------------------------------------------

class ObservationEncoder:
    """Builds the per-user observation vector:

    [head deadline, arrival flag, normalized LSFC (dB), fairness observable]
    ++ agent one-hot (N) ++ last executed action (L+1 one-hot, all-zero
    before the first slot) ++ last executed power / rho_max ++ per-pilot
    ternary feedback one-hots (3L, optional).
    """

    def __init__(self, cfg: Config):
        self.cfg = cfg
        system, pol = cfg.system, cfg.policy
        self.n_users, self.n_pilots = system.n_users, system.n_pilots
        self.feedback = pol.feedback
        self.obs_dim = 4 + self.n_users + (self.n_pilots + 2) \
            + (3 * self.n_pilots if self.feedback else 0)
        self._agent_eye = np.eye(self.n_users)

    def encode(self, head_d, gamma, beta_db, nu, last_pilot, last_power,
               pilot_status) -> np.ndarray:
        pol = self.cfg.policy
        n, L = self.n_users, self.n_pilots
        obs = np.zeros((n, self.obs_dim))
        obs[:, 0] = head_d
        obs[:, 1] = gamma
        obs[:, 2] = (beta_db - pol.beta_db_center) / pol.beta_db_scale
        obs[:, 3] = nu
        obs[:, 4:4 + n] = self._agent_eye
        base = 4 + n
        rows = np.flatnonzero(last_pilot >= 0)
        obs[rows, base + last_pilot[rows]] = 1.0
        obs[:, base + L + 1] = last_power / self.cfg.system.rho_max
        if self.feedback:
            fb = base + L + 2
            obs[np.arange(n)[:, None], fb + 3 * np.arange(L)[None, :]
                + pilot_status[None, :]] = 1.0
        return obs


class PolicyActor:
    """Distributed execution of the shared policy network: each user's
    action depends only on its own observation stream."""

    phy = "orth"

    def __init__(self, net: PolicyNetwork, cfg: Config, pilot_mask: torch.Tensor | None):
        self.net = net
        self.cfg = cfg
        self.pilot_mask = pilot_mask
        self.encoder = ObservationEncoder(cfg)

    def begin_episode(self, lsfc: LsfcVector, rng: np.random.Generator) -> None:
        n = self.cfg.system.n_users
        self.rng = rng
        self.beta_db = lsfc.beta_db
        self.hidden = self.net.initial_hidden(n)
        self.last_pilot = np.full(n, -1, dtype=int)
        self.last_power = np.zeros(n)
        self.pilot_status = np.full(self.cfg.system.n_pilots, FEEDBACK_IDLE, dtype=int)

    def act(self, slot: int, backlogged, head_d, gamma, nu):
        obs = self.encoder.encode(head_d, gamma, self.beta_db, nu,
                                  self.last_pilot, self.last_power, self.pilot_status)
        with torch.no_grad():
            pi, rho_t, self.hidden = self.net(
                torch.as_tensor(obs, dtype=torch.float64), self.hidden, self.pilot_mask)
        pi = pi.numpy()
        rho = rho_t.numpy().copy()
        a = np.zeros(self.cfg.system.n_users, dtype=int)
        for i in np.flatnonzero(backlogged):
            a[i] = sample_action(pi[i], self.rng)
        rho[a == 0] = 0.0
        self.last_pilot = a.copy()
        self.last_power = rho.copy()
        return a, rho, obs

    def notify(self, pilot_status) -> None:
        if pilot_status is not None:
            self.pilot_status = pilot_status


class Baseline1Actor:
    """Genie-barred ALOHA at full power."""

    phy = "orth"

    def __init__(self, cfg: Config):
        self.cfg = cfg

    def begin_episode(self, lsfc, rng) -> None:
        self.rng = rng

    def act(self, slot, backlogged, head_d, gamma, nu):
        a, rho = baselines.baseline1_step(backlogged, self.cfg.system.n_pilots,
                                          self.cfg.system.rho_max, self.rng)
        return a, rho, None

    def notify(self, pilot_status) -> None:
        pass


class Baseline2Actor:
    """Collision-free scheduled pairs at full power."""

    phy = "orth"

    def __init__(self, cfg: Config):
        if cfg.system.n_users != 2 * cfg.system.n_pilots:
            raise ValueError("scheduled-pair baseline needs n_users = 2 * n_pilots")
        self.cfg = cfg

    def begin_episode(self, lsfc, rng) -> None:
        pass

    def act(self, slot, backlogged, head_d, gamma, nu):
        a, rho = baselines.baseline2_step(slot, backlogged, self.cfg.system.n_pilots,
                                          self.cfg.system.rho_max)
        return a, rho, None

    def notify(self, pilot_status) -> None:
        pass


class Baseline3Actor:
    """Unique non-orthogonal pilots with the genie barring of baseline 1.

    ``act`` returns the active mask in place of a pilot assignment; the
    episode loop dispatches on ``phy`` to the joint-estimation resolver.
    """

    phy = "nonorth"

    def __init__(self, cfg: Config, book_rng: np.random.Generator):
        self.cfg = cfg
        self.psi = baselines.nonorth_pilot_book(cfg.system.n_pilots,
                                                cfg.system.n_users, book_rng)

    def begin_episode(self, lsfc, rng) -> None:
        self.rng = rng

    def act(self, slot, backlogged, head_d, gamma, nu):
        system = self.cfg.system
        active = np.zeros(system.n_users, dtype=int)
        rho = np.zeros(system.n_users)
        p_bar = baselines.barring_probability(int(np.count_nonzero(backlogged)),
                                              system.n_pilots)
        for i in np.flatnonzero(backlogged):
            if self.rng.random() < p_bar:
                active[i] = 1
                rho[i] = system.rho_max
        return active, rho, None

    def notify(self, pilot_status) -> None:
        pass


# ---------------------------------------------------------------------------
# Episode loop
# ---------------------------------------------------------------------------

@dataclass
class EpisodeCounters:
    arrivals: np.ndarray
    successes: np.ndarray
    drops: np.ndarray
    final_backlog: np.ndarray
    n_slots: int


def run_episode(cfg: Config, actor, lsfc: LsfcVector,
                fading_rng: np.random.Generator, arrival_rng: np.random.Generator,
                action_rng: np.random.Generator, record: bool = False,
                event_cb=None) -> tuple[EpisodeCounters, EpisodeRecord | None]:
    """Simulate one episode of ``frame_len`` slots; optionally collect the
    training record (observations, priorities, masks) and per-slot events."""
    system = cfg.system
    n = system.n_users
    n_slots = cfg.fairness.frame_len
    max_delays = system.max_delays
    arrival_rates = system.arrival_rates

    queues = [UserQueue(int(d)) for d in max_delays]
    tracker = FairnessTracker(cfg.fairness, system.drop_thresholds)
    actor.begin_episode(lsfc, action_rng)

    rec_obs, rec_eta, rec_backlogged = [], [], []
    for t in range(n_slots):
        gamma = (arrival_rng.random(n) < arrival_rates).astype(int)
        head_d = np.array([q.head_deadline for q in queues])
        backlogged = head_d > 0
        urg = np.array([urgency(int(head_d[i]), int(max_delays[i])) for i in range(n)])
        _, eta = tracker.priorities(urg)

        a, rho, obs = actor.act(t, backlogged, head_d, gamma, tracker.nu.copy())
        a = np.where(backlogged, a, 0)

        if actor.phy == "orth":
            mu, _, status = resolve_slot(cfg, lsfc, a, rho, fading_rng)
        else:
            mu = resolve_slot_nonorth(cfg, lsfc, a.astype(bool), rho,
                                      actor.psi, fading_rng)
            status = None
        drops = np.array([queues[i].step(int(mu[i]), int(gamma[i]), t)
                          for i in range(n)])
        tracker.update(drops)
        actor.notify(status)

        if event_cb is not None:
            event_cb(t, gamma, a, mu, drops)
        if record:
            rec_obs.append(obs)
            rec_eta.append(eta)
            rec_backlogged.append(backlogged)

    counters = EpisodeCounters(
        arrivals=np.array([q.cum_arrivals for q in queues]),
        successes=np.array([q.cum_successes for q in queues]),
        drops=np.array([q.cum_drops for q in queues]),
        final_backlog=np.array([q.backlog for q in queues]),
        n_slots=n_slots)
    rec = None
    if record:
        rec = EpisodeRecord(obs=np.stack(rec_obs), eta=np.stack(rec_eta),
                            backlogged=np.stack(rec_backlogged),
                            beta=lsfc.beta.copy(), rho0=lsfc.rho0)
    return counters, rec
