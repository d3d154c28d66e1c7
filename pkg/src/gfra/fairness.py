"""Per-slot priority levels for the two fairness formulations.

The log-sum-exp scheduler (s1) maps each user's consumed drop budget within
the current frame through a convex fairness-promoting function; the
virtual-queue scheduler (s2) weights urgency by a Lyapunov virtual-queue
backlog. Both produce nonnegative raw priorities that are normalized to sum
to one over the backlogged users.
"""

from __future__ import annotations

import numpy as np

from .config import FairnessConfig


def fairness_fn(x, alpha: float):
    """(exp(alpha x) - 1)/(exp(alpha) - 1); identity as alpha -> 0."""
    return np.expm1(alpha * np.asarray(x, dtype=float)) / np.expm1(alpha)


def priority_s1(xi_prev, delta_norm, alpha: float):
    """f(xi + delta) - f(xi): the marginal budget cost avoided by success."""
    xi_prev = np.asarray(xi_prev, dtype=float)
    delta_norm = np.asarray(delta_norm, dtype=float)
    return np.exp(alpha * xi_prev) * np.expm1(alpha * delta_norm) / np.expm1(alpha)


def priority_s2(vq_backlog, delta_norm):
    """Virtual-queue backlog times normalized urgency."""
    return np.asarray(vq_backlog, dtype=float) * np.asarray(delta_norm, dtype=float)


class FairnessTracker:
    """Holds the per-user fairness state across the slots of one run.

    For s1 the consumed-budget ratio resets at every frame boundary
    (``frame_len`` slots); the virtual queue of s2 evolves freely.
    """

    def __init__(self, cfg: FairnessConfig, drop_thresholds: np.ndarray):
        self.cfg = cfg
        self.d_th = np.asarray(drop_thresholds, dtype=float)
        n = self.d_th.shape[0]
        self.xi = np.zeros(n)
        self.vq = np.zeros(n)
        self._slot = 0

    @property
    def nu(self) -> np.ndarray:
        """The fairness observable fed to the policy (xi for s1, X for s2)."""
        return self.xi if self.cfg.objective == "s1" else self.vq

    def normalized_urgency(self, urgencies: np.ndarray) -> np.ndarray:
        return np.asarray(urgencies, dtype=float) / (self.cfg.frame_len * self.d_th)

    def priorities(self, urgencies: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Raw and normalized priorities given this slot's urgency levels."""
        delta = self.normalized_urgency(urgencies)
        if self.cfg.objective == "s1":
            raw = priority_s1(self.xi, delta, self.cfg.alpha)
        else:
            raw = priority_s2(self.vq, delta)
        total = raw.sum()
        eta = raw / total if total > 0 else np.zeros_like(raw)
        return raw, eta

    def update(self, drops: np.ndarray) -> None:
        """Consume this slot's drop indicators; advance frame bookkeeping."""
        drops = np.asarray(drops, dtype=float)
        scaled = drops / self.d_th
        if self.cfg.objective == "s1":
            self.xi += scaled / self.cfg.frame_len
            self._slot += 1
            if self._slot % self.cfg.frame_len == 0:
                self.xi[:] = 0.0
        else:
            z = self.cfg.z_max if self.vq.sum() > self.cfg.lyapunov_v else 0.0
            self.vq = np.maximum(self.vq - z, 0.0) + scaled
            self._slot += 1


def ncpdr_step(xi: np.ndarray, drops: np.ndarray, drop_thresholds: np.ndarray,
               frame_len: int) -> np.ndarray:
    """One step of the consumed-budget ratio (no frame reset)."""
    return xi + np.asarray(drops, float) / (frame_len * np.asarray(drop_thresholds, float))


def vq_step(vq: np.ndarray, drops: np.ndarray, drop_thresholds: np.ndarray,
            lyapunov_v: float, z_max: float) -> np.ndarray:
    """One virtual-queue update: serve z (bang-bang on the backlog sum), add
    the drop-over-threshold arrivals."""
    vq = np.asarray(vq, dtype=float)
    z = z_max if vq.sum() > lyapunov_v else 0.0
    return np.maximum(vq - z, 0.0) + np.asarray(drops, float) / np.asarray(drop_thresholds, float)
