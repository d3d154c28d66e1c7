"""Configuration objects for the simulator and the training harness.

Power convention: scenario powers are given in dBm; internally everything is
converted to linear scale and divided by the total noise power
(``noise_dbm_per_hz + 10 log10(bandwidth_hz)``), so the receiver noise has
unit variance and LSFCs/powers are dimensionless throughout.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml


@dataclass
class TrafficClass:
    """One homogeneous group of users (arrival/QoS parameters shared)."""

    n_users: int
    arrival_rate: float        # packets/slot, Bernoulli
    drop_threshold: float      # tolerated drop rate (packets/slot)
    rate_threshold: float      # bits/s/Hz needed to deliver a packet
    max_delay: int             # slots until a packet expires


@dataclass
class SystemConfig:
    """Static scenario parameters shared by all layers."""

    n_users: int = 12
    n_pilots: int = 6
    n_antennas: int = 100
    max_power_dbm: float = 23.0
    noise_dbm_per_hz: float = -169.0
    bandwidth_hz: float = 180e3
    cell_radius_km: float = 1.0
    exclusion_radius_km: float = 0.05
    shadow_variance_db: float = 8.0
    pathloss_offset_db: float = -140.6
    pathloss_slope_db: float = 36.7   # dB per decade of distance
    penalty_ell: float = 0.25
    combiner: str = "zf"              # "mr" | "zf"
    success_model: str = "full"       # "full" | "collision_only"
    traffic_classes: list[TrafficClass] = field(
        default_factory=lambda: [
            TrafficClass(4, 0.2, 0.05, 1.0, 2),
            TrafficClass(8, 0.65, 0.2, 2.0, 5),
        ]
    )

    @property
    def noise_dbm(self) -> float:
        """Total noise power over the system bandwidth, in dBm."""
        return self.noise_dbm_per_hz + 10.0 * np.log10(self.bandwidth_hz)

    @property
    def rho_max(self) -> float:
        """Maximum transmit power in noise-normalized linear units."""
        return float(10.0 ** ((self.max_power_dbm - self.noise_dbm) / 10.0))

    def _per_user(self, attr: str, dtype=float) -> np.ndarray:
        vals = []
        for cls in self.traffic_classes:
            vals.extend([getattr(cls, attr)] * cls.n_users)
        return np.asarray(vals, dtype=dtype)

    @property
    def arrival_rates(self) -> np.ndarray:
        return self._per_user("arrival_rate")

    @property
    def drop_thresholds(self) -> np.ndarray:
        return self._per_user("drop_threshold")

    @property
    def rate_thresholds(self) -> np.ndarray:
        return self._per_user("rate_threshold")

    @property
    def max_delays(self) -> np.ndarray:
        return self._per_user("max_delay", dtype=int)

    def validate(self) -> None:
        if not self.n_pilots < self.n_users:
            raise ValueError("need n_pilots < n_users (limited coherence regime)")
        if self.combiner not in ("mr", "zf"):
            raise ValueError(f"unknown combiner {self.combiner!r}")
        if self.combiner == "zf" and not self.n_antennas > self.n_pilots:
            raise ValueError("zero-forcing needs n_antennas > n_pilots")
        if self.n_antennas < 2:
            raise ValueError("need at least 2 antennas")
        if not 0.0 < self.penalty_ell <= 1.0:
            raise ValueError("penalty_ell must lie in (0, 1]")
        if self.exclusion_radius_km >= self.cell_radius_km:
            raise ValueError("exclusion radius must be smaller than the cell radius")
        if self.success_model not in ("full", "collision_only"):
            raise ValueError(f"unknown success_model {self.success_model!r}")
        if sum(c.n_users for c in self.traffic_classes) != self.n_users:
            raise ValueError("traffic classes must cover exactly n_users users")
        if any(c.max_delay < 1 for c in self.traffic_classes):
            raise ValueError("max_delay must be >= 1 slot")
        if any(not 0.0 <= c.arrival_rate <= 1.0 for c in self.traffic_classes):
            raise ValueError("arrival_rate must lie in [0, 1]")


@dataclass
class FairnessConfig:
    objective: str = "s1"      # "s1" (log-sum-exp) | "s2" (virtual queue)
    alpha: float = 3.0         # inverse temperature of the fairness function
    frame_len: int = 20        # slots per frame; also the episode length
    lyapunov_v: float = 1000.0
    z_max: float = 100.0

    def validate(self) -> None:
        if self.objective not in ("s1", "s2"):
            raise ValueError(f"unknown objective {self.objective!r}")
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if self.frame_len < 1:
            raise ValueError("frame_len must be >= 1")


@dataclass
class PolicyConfig:
    hidden_size: int = 64
    feedback: bool = True      # include per-pilot ternary feedback in observations
    # Pilot pre-allocation: list of {"users": [...], "pilots": [...]} groups,
    # 1-based indices; pilots must partition {1..L}, users must partition {1..N}.
    prealloc: list[dict] | None = None
    beta_db_center: float = -14.5  # observation normalization of the LSFC in dB
    beta_db_scale: float = 8.0

    def validate(self, system: SystemConfig) -> None:
        if self.hidden_size < 1:
            raise ValueError("hidden_size must be >= 1")
        if self.prealloc is not None:
            pilots, users = [], []
            for group in self.prealloc:
                pilots.extend(group["pilots"])
                users.extend(group["users"])
            if sorted(pilots) != list(range(1, system.n_pilots + 1)):
                raise ValueError("prealloc pilot groups must partition the pilot set")
            if sorted(users) != list(range(1, system.n_users + 1)):
                raise ValueError("prealloc user groups must be disjoint and cover all users")


def paired_prealloc(n_users: int, n_pilots: int) -> list[dict]:
    """The paired layout: users i and i+L share pilot i (requires N = 2L)."""
    if n_users != 2 * n_pilots:
        raise ValueError("paired pre-allocation needs n_users = 2 * n_pilots")
    return [
        {"users": [i, i + n_pilots], "pilots": [i]} for i in range(1, n_pilots + 1)
    ]


@dataclass
class TrainConfig:
    epochs: int = 1000
    episodes_per_epoch: int = 100
    steps_per_epoch: int = 100
    batch_episodes: int = 32
    buffer_capacity: int = 5000
    learning_rate: float = 5e-4
    rms_smoothing: float = 0.99
    grad_clip_gru: float = 10.0
    eval_epochs: int = 200

    def validate(self) -> None:
        for name in ("epochs", "episodes_per_epoch", "steps_per_epoch",
                     "batch_episodes", "buffer_capacity", "eval_epochs"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")


@dataclass
class RunConfig:
    mode: str = "train"        # train | eval | baseline1 | baseline2 | baseline3
    seed: int = 1
    out_dir: str = "runs/out"
    trials: int = 1            # independent repetitions (seed, seed+1, ...)
    smooth_window: int = 1     # moving-average window for emitted plot data
    event_log: bool = False    # also emit a per-slot event log
    checkpoint: str | None = None  # required for eval mode

    def validate(self) -> None:
        if self.mode not in ("train", "eval", "baseline1", "baseline2", "baseline3"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.trials < 1 or self.smooth_window < 1:
            raise ValueError("trials and smooth_window must be >= 1")


@dataclass
class Config:
    system: SystemConfig = field(default_factory=SystemConfig)
    fairness: FairnessConfig = field(default_factory=FairnessConfig)
    policy: PolicyConfig = field(default_factory=PolicyConfig)
    training: TrainConfig = field(default_factory=TrainConfig)
    run: RunConfig = field(default_factory=RunConfig)

    def validate(self) -> "Config":
        self.system.validate()
        self.fairness.validate()
        self.policy.validate(self.system)
        self.training.validate()
        self.run.validate()
        return self

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _merge_section(obj, data: dict):
    fields = {f.name for f in dataclasses.fields(obj)}
    for key, val in data.items():
        if key not in fields:
            raise ValueError(f"unknown config key {key!r} for {type(obj).__name__}")
        setattr(obj, key, val)


def config_from_dict(data: dict) -> Config:
    cfg = Config()
    data = dict(data or {})
    sys_data = dict(data.pop("system", {}))
    classes = sys_data.pop("traffic_classes", None)
    _merge_section(cfg.system, sys_data)
    if classes is not None:
        cfg.system.traffic_classes = [TrafficClass(**c) for c in classes]
    for name in ("fairness", "policy", "training", "run"):
        if name in data:
            _merge_section(getattr(cfg, name), data.pop(name))
    if data:
        raise ValueError(f"unknown config sections: {sorted(data)}")
    return cfg.validate()


def load_config(path: str | Path) -> Config:
    with open(path) as fh:
        return config_from_dict(yaml.safe_load(fh))


def save_config(cfg: Config, path: str | Path) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(cfg.to_dict(), fh, sort_keys=False)
