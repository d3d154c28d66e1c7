"""Shared recurrent policy network, replay buffer, and trainer.

One parameter set serves every user (parameter sharing); users are
distinguished only through their observations. The network maps an
observation and the previous recurrent state to a pilot-selection
distribution over {back-off, pilot 1..L} and a transmit power in
[0, rho_max].
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .config import Config
from .objective import (DTYPE, InterferenceCoeffs, expected_sum_priority,
                        interference_coeffs, inverse_sinr_limit, masked_softmax,
                        power_from_preact)

CHECKPOINT_FORMAT = 1


class PolicyNetwork(nn.Module):
    """Input layer (ReLU) -> GRU layer -> two output heads.

    The pilot head emits L+1 logits turned into probabilities by a row
    softmax (disallowed pilots masked to -inf first); the power head emits a
    single pre-activation squashed by a sigmoid and scaled by rho_max.
    """

    def __init__(self, obs_dim: int, n_pilots: int, hidden_size: int = 64,
                 rho_max: float = 1.0):
        super().__init__()
        self.obs_dim = obs_dim
        self.n_pilots = n_pilots
        self.hidden_size = hidden_size
        self.rho_max = float(rho_max)
        self.input_layer = nn.Linear(obs_dim, hidden_size)
        self.gru = nn.GRU(hidden_size, hidden_size)
        self.pilot_head = nn.Sequential(nn.Linear(hidden_size, hidden_size), nn.ReLU(),
                                        nn.Linear(hidden_size, n_pilots + 1))
        self.power_head = nn.Sequential(nn.Linear(hidden_size, hidden_size), nn.ReLU(),
                                        nn.Linear(hidden_size, 1))
        self.to(DTYPE)

    def initial_hidden(self, n_rows: int) -> torch.Tensor:
        return torch.zeros(n_rows, self.hidden_size, dtype=DTYPE)

    def _heads(self, features: torch.Tensor, pilot_mask):
        pi = masked_softmax(self.pilot_head(features), pilot_mask)
        rho = power_from_preact(self.power_head(features).squeeze(-1), self.rho_max)
        return pi, rho

    def forward(self, obs: torch.Tensor, hidden: torch.Tensor, pilot_mask=None):
        """Single slot step: obs (B, obs_dim), hidden (B, hidden_size)."""
        x = torch.relu(self.input_layer(obs))
        out, h_next = self.gru(x.unsqueeze(0), hidden.unsqueeze(0))
        pi, rho = self._heads(out.squeeze(0), pilot_mask)
        return pi, rho, h_next.squeeze(0)

    def forward_sequence(self, obs: torch.Tensor, pilot_mask=None):
        """Whole-episode pass: obs (T, B, obs_dim) from a zero initial state.
        Returns pi (T, B, n_pilots+1) and rho (T, B)."""
        x = torch.relu(self.input_layer(obs))
        out, _ = self.gru(x)
        return self._heads(out, pilot_mask)


def build_pilot_mask(n_users: int, n_pilots: int, prealloc: list[dict] | None) -> torch.Tensor:
    """(N, L+1) boolean mask; back-off is always allowed."""
    if prealloc is None:
        return torch.ones(n_users, n_pilots + 1, dtype=torch.bool)
    mask = torch.zeros(n_users, n_pilots + 1, dtype=torch.bool)
    mask[:, 0] = True
    for group in prealloc:
        for user in group["users"]:
            for pilot in group["pilots"]:
                mask[user - 1, pilot] = True
    return mask


def sample_action(pi_row: np.ndarray, rng: np.random.Generator) -> int:
    """Categorical draw from a pilot-probability row by inverse CDF."""
    cdf = np.cumsum(pi_row)
    idx = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
    return min(idx, len(pi_row) - 1)


@dataclass
class EpisodeRecord:
    """Environment-side trace of one episode, enough to re-evaluate the
    objective under current parameters (teacher-forced observations)."""

    obs: np.ndarray          # (T, N, obs_dim)
    eta: np.ndarray          # (T, N) normalized priorities
    backlogged: np.ndarray   # (T, N) bool
    beta: np.ndarray         # (N,) linear LSFCs
    rho0: float


class ReplayBuffer:
    """FIFO ring buffer of episodes with uniform minibatch sampling."""

    def __init__(self, capacity: int):
        self.capacity = capacity
        self._buf: deque[EpisodeRecord] = deque(maxlen=capacity)

    def __len__(self) -> int:
        return len(self._buf)

    def add(self, episode: EpisodeRecord) -> None:
        self._buf.append(episode)

    def extend(self, episodes) -> None:
        for ep in episodes:
            self.add(ep)

    def sample(self, batch_size: int, rng: np.random.Generator) -> list[EpisodeRecord]:
        """Uniform without replacement (whole buffer if smaller than batch)."""
        n = len(self._buf)
        idx = rng.choice(n, size=min(batch_size, n), replace=False)
        return [self._buf[int(i)] for i in idx]


@dataclass
class TrainStepResult:
    objective: float         # minibatch value of the maximized objective
    grad_norm: float
    aborted: bool = False
    note: str = ""


class PolicyTrainer:
    """Maximizes the expected per-episode sum of slot objectives with an
    RMS-style adaptive optimizer; backprop runs through time and through the
    closed-form objective."""

    def __init__(self, net: PolicyNetwork, cfg: Config, pilot_mask: torch.Tensor | None):
        self.net = net
        self.cfg = cfg
        self.pilot_mask = pilot_mask
        self.collision_only = cfg.system.success_model == "collision_only"
        self.omega = torch.as_tensor(
            inverse_sinr_limit(cfg.system.rate_thresholds, cfg.system.penalty_ell),
            dtype=DTYPE)
        tr = cfg.training
        self.optimizer = torch.optim.RMSprop(
            net.parameters(), lr=tr.learning_rate, alpha=tr.rms_smoothing,
            momentum=0.0, weight_decay=0.0)

    def _coeffs(self, rho0: torch.Tensor) -> InterferenceCoeffs | None:
        if self.collision_only:
            return None
        sys = self.cfg.system
        return interference_coeffs(self.omega, rho0.unsqueeze(-1),
                                   sys.n_antennas, sys.n_pilots, sys.combiner)

    def episode_objective(self, episodes: list[EpisodeRecord]) -> torch.Tensor:
        """(B,) per-episode sums of the slot objective under current params.

        One fused pass: observations are teacher-forced through the recurrent
        network for all episodes, users, and slots at once, then the
        closed-form objective is evaluated batched over (slot, episode).
        """
        obs = torch.as_tensor(np.stack([e.obs for e in episodes]), dtype=DTYPE)
        eta = torch.as_tensor(np.stack([e.eta for e in episodes]), dtype=DTYPE)
        backlogged = torch.as_tensor(np.stack([e.backlogged for e in episodes]))
        beta = torch.as_tensor(np.stack([e.beta for e in episodes]), dtype=DTYPE)
        rho0 = torch.as_tensor([e.rho0 for e in episodes], dtype=DTYPE)
        n_ep, n_slots, n_users, obs_dim = obs.shape
        coeffs = self._coeffs(rho0)
        mask = None
        if self.pilot_mask is not None:
            mask = self.pilot_mask.repeat(n_ep, 1)
        seq = obs.permute(1, 0, 2, 3).reshape(n_slots, n_ep * n_users, obs_dim)
        pi, rho = self.net.forward_sequence(seq, mask)
        pi = pi.view(n_slots, n_ep, n_users, -1)
        rho = rho.view(n_slots, n_ep, n_users)
        j_slots = expected_sum_priority(
            pi, rho, eta.permute(1, 0, 2), beta.unsqueeze(0), coeffs,
            backlogged=backlogged.permute(1, 0, 2),
            collision_only=self.collision_only)          # (T, B)
        return j_slots.sum(dim=0)

    def train_step(self, episodes: list[EpisodeRecord]) -> TrainStepResult:
        self.optimizer.zero_grad()
        objective = self.episode_objective(episodes).mean()
        loss = -objective
        if not torch.isfinite(loss):
            self.optimizer.zero_grad()
            return TrainStepResult(float("nan"), float("nan"), aborted=True,
                                   note="non-finite objective")
        loss.backward()
        grads = [p.grad for p in self.net.parameters() if p.grad is not None]
        if any(not torch.all(torch.isfinite(g)) for g in grads):
            self.optimizer.zero_grad()
            return TrainStepResult(float(objective), float("nan"), aborted=True,
                                   note="non-finite gradient")
        gru_norm = nn.utils.clip_grad_norm_(self.net.gru.parameters(),
                                            self.cfg.training.grad_clip_gru)
        self.optimizer.step()
        return TrainStepResult(float(objective.detach()), float(gru_norm))


def save_checkpoint(path, net: PolicyNetwork, meta: dict | None = None) -> None:
    torch.save({
        "format_version": CHECKPOINT_FORMAT,
        "arch": {"obs_dim": net.obs_dim, "n_pilots": net.n_pilots,
                 "hidden_size": net.hidden_size, "rho_max": net.rho_max},
        "state_dict": net.state_dict(),
        "meta": meta or {},
    }, path)


def load_checkpoint(path) -> tuple[PolicyNetwork, dict]:
    blob = torch.load(path, map_location="cpu", weights_only=False)
    if blob.get("format_version") != CHECKPOINT_FORMAT:
        raise ValueError(f"unsupported checkpoint format: {blob.get('format_version')}")
    arch = blob["arch"]
    net = PolicyNetwork(**arch)
    net.load_state_dict(blob["state_dict"])
    return net, blob["meta"]
