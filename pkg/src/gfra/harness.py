"""Epoch orchestration, metric computation, and result emission.

Outputs per run directory:
  metrics.csv     one row per epoch: epoch, max_ncpdr, sum_throughput,
                  per-user drop rates
  summary.json    whole-run aggregates (drop rates over all counted slots)
  manifest.json   full config, seed, package version, emitted files
  events.csv      optional per-slot event log (run.event_log)
  plot_*.csv      trial-averaged, window-smoothed metric series
  checkpoint.pt   trained policy (train mode)

Determinism contract: identical (config, seed) produce byte-identical CSVs;
all randomness flows through named streams keyed by (seed, purpose, trial,
epoch, episode).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from . import __version__
from .channel import draw_lsfc
from .config import Config
from .policy import (PolicyNetwork, PolicyTrainer, ReplayBuffer, build_pilot_mask,
                     load_checkpoint, save_checkpoint)
from .rng import stream, torch_seed
from .simulator import (Baseline1Actor, Baseline2Actor, Baseline3Actor,
                        ObservationEncoder, PolicyActor, run_episode)


def _fmt(x: float) -> str:
    return repr(float(x))


@dataclass
class EpochMetrics:
    epoch: int
    drop_rates: np.ndarray
    max_ncpdr: float
    sum_throughput: float


def metrics_from_counts(epoch: int, drops: np.ndarray, n_slots: int,
                        cfg: Config) -> EpochMetrics:
    """Drop-rate based metrics over one counting window."""
    drop_rates = drops / n_slots
    max_ncpdr = float(np.max(drop_rates / cfg.system.drop_thresholds))
    sum_throughput = float(np.sum(cfg.system.arrival_rates - drop_rates))
    return EpochMetrics(epoch, drop_rates, max_ncpdr, sum_throughput)


def metrics_header(n_users: int) -> str:
    users = ",".join(f"drop_rate_{i + 1:02d}" for i in range(n_users))
    return f"epoch,max_ncpdr,sum_throughput,{users}"


def metrics_row(m: EpochMetrics) -> str:
    rates = ",".join(_fmt(r) for r in m.drop_rates)
    return f"{m.epoch},{_fmt(m.max_ncpdr)},{_fmt(m.sum_throughput)},{rates}"


class EventLog:
    """Per-slot event rows: enough to replay every metric exactly."""

    HEADER = "trial,epoch,episode,slot,user,arrival,action,success,drop"

    def __init__(self):
        self.rows: list[str] = []

    def callback(self, trial: int, epoch: int, episode: int):
        def cb(slot, gamma, action, mu, drops):
            for user in range(len(gamma)):
                self.rows.append(f"{trial},{epoch},{episode},{slot},{user + 1},"
                                 f"{gamma[user]},{action[user]},{mu[user]},{drops[user]}")
        return cb

    def write(self, path: Path) -> None:
        path.write_text("\n".join([self.HEADER] + self.rows) + "\n")


def make_actor(cfg: Config, net: PolicyNetwork | None, trial: int):
    mode = cfg.run.mode
    if mode in ("train", "eval"):
        mask = build_pilot_mask(cfg.system.n_users, cfg.system.n_pilots,
                                cfg.policy.prealloc)
        return PolicyActor(net, cfg, mask)
    if mode == "baseline1":
        return Baseline1Actor(cfg)
    if mode == "baseline2":
        return Baseline2Actor(cfg)
    if mode == "baseline3":
        return Baseline3Actor(cfg, stream(cfg.run.seed, "init", trial))
    raise ValueError(f"unknown mode {cfg.run.mode!r}")


def build_policy(cfg: Config, trial: int) -> PolicyNetwork:
    """Fresh policy network with reproducible initialization."""
    torch.manual_seed(torch_seed(cfg.run.seed, "init", trial))
    obs_dim = ObservationEncoder(cfg).obs_dim
    return PolicyNetwork(obs_dim, cfg.system.n_pilots,
                         cfg.policy.hidden_size, cfg.system.rho_max)


def rollout_epoch(cfg: Config, actor, trial: int, epoch: int, n_episodes: int,
                  record: bool = False, event_log: EventLog | None = None):
    """Run the epoch's episodes; returns (total drops, total slots, records)."""
    seed = cfg.run.seed
    n = cfg.system.n_users
    drops = np.zeros(n)
    slots = 0
    records = []
    for ep in range(n_episodes):
        lsfc = draw_lsfc(cfg.system, stream(seed, "placement", trial, epoch, ep))
        cb = event_log.callback(trial, epoch, ep) if event_log is not None else None
        counters, rec = run_episode(
            cfg, actor, lsfc,
            fading_rng=stream(seed, "fading", trial, epoch, ep),
            arrival_rng=stream(seed, "arrivals", trial, epoch, ep),
            action_rng=stream(seed, "actions", trial, epoch, ep),
            record=record, event_cb=cb)
        drops += counters.drops
        slots += counters.n_slots
        if rec is not None:
            records.append(rec)
    return drops, slots, records


@dataclass
class TrialResult:
    rows: list[EpochMetrics]
    total_drops: np.ndarray
    total_slots: int
    aborted_steps: int = 0

    def overall(self, cfg: Config) -> EpochMetrics:
        return metrics_from_counts(-1, self.total_drops, self.total_slots, cfg)


def run_trial(cfg: Config, trial: int, event_log: EventLog | None = None,
              out_dir: Path | None = None) -> TrialResult:
    """One independent trial of the configured mode."""
    torch.set_num_threads(1)
    mode = cfg.run.mode
    train = mode == "train"
    net = None
    trainer = buffer = None
    if train:
        net = build_policy(cfg, trial)
        mask = build_pilot_mask(cfg.system.n_users, cfg.system.n_pilots,
                                cfg.policy.prealloc)
        trainer = PolicyTrainer(net, cfg, mask)
        buffer = ReplayBuffer(cfg.training.buffer_capacity)
        n_epochs = cfg.training.epochs
        n_episodes = cfg.training.episodes_per_epoch
    else:
        if mode == "eval":
            ckpt = cfg.run.checkpoint
            if ckpt is None or not Path(ckpt).exists():
                raise FileNotFoundError(f"eval mode needs an existing checkpoint, got {ckpt!r}")
            net, _ = load_checkpoint(ckpt)
            expected = ObservationEncoder(cfg).obs_dim
            if net.obs_dim != expected:
                raise ValueError(
                    f"checkpoint observation size {net.obs_dim} does not match "
                    f"this config ({expected}); check feedback/prealloc/system settings")
        n_epochs = cfg.training.eval_epochs
        n_episodes = cfg.training.episodes_per_epoch
    actor = make_actor(cfg, net, trial)
    train_rng = stream(cfg.run.seed, "training", trial)

    rows: list[EpochMetrics] = []
    total_drops = np.zeros(cfg.system.n_users)
    total_slots = 0
    aborted = 0
    for epoch in range(n_epochs):
        drops, slots, records = rollout_epoch(cfg, actor, trial, epoch, n_episodes,
                                              record=train, event_log=event_log)
        rows.append(metrics_from_counts(epoch, drops, slots, cfg))
        total_drops += drops
        total_slots += slots
        if train:
            buffer.extend(records)
            for _ in range(cfg.training.steps_per_epoch):
                res = trainer.train_step(buffer.sample(cfg.training.batch_episodes,
                                                       train_rng))
                aborted += int(res.aborted)
    if train and out_dir is not None:
        save_checkpoint(out_dir / "checkpoint.pt", net,
                        meta={"config": cfg.to_dict(), "trial": trial})
    return TrialResult(rows, total_drops, total_slots, aborted)


def _write_metrics(path: Path, cfg: Config, rows: list[EpochMetrics]) -> None:
    lines = [metrics_header(cfg.system.n_users)]
    lines.extend(metrics_row(m) for m in rows)
    path.write_text("\n".join(lines) + "\n")


def _smoothed(series: list[float], window: int) -> list[float]:
    out = []
    for i in range(len(series)):
        lo = max(0, i - window + 1)
        out.append(float(np.mean(series[lo:i + 1])))
    return out


def _write_plot_data(out: Path, name: str, series: list[float], window: int) -> None:
    lines = ["epoch,value"]
    lines.extend(f"{i},{_fmt(v)}" for i, v in enumerate(_smoothed(series, window)))
    (out / f"plot_{name}.csv").write_text("\n".join(lines) + "\n")


def run_campaign(cfg: Config) -> dict:
    """Execute the configured run (all trials) and emit result files."""
    cfg.validate()
    out = Path(cfg.run.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    results: list[TrialResult] = []
    event_log = EventLog() if cfg.run.event_log else None
    for trial in range(cfg.run.trials):
        tdir = out if cfg.run.trials == 1 else out / f"trial_{trial:02d}"
        tdir.mkdir(parents=True, exist_ok=True)
        res = run_trial(cfg, trial, event_log=event_log, out_dir=tdir)
        _write_metrics(tdir / "metrics.csv", cfg, res.rows)
        results.append(res)

    if event_log is not None:
        event_log.write(out / "events.csv")

    n_epochs = len(results[0].rows)
    for name, getter in (("max_ncpdr", lambda m: m.max_ncpdr),
                         ("sum_throughput", lambda m: m.sum_throughput)):
        series = [float(np.mean([getter(res.rows[e]) for res in results]))
                  for e in range(n_epochs)]
        _write_plot_data(out, name, series, cfg.run.smooth_window)

    overall = [res.overall(cfg) for res in results]
    summary = {
        "mode": cfg.run.mode,
        "epochs": n_epochs,
        "trials": cfg.run.trials,
        "aborted_train_steps": sum(r.aborted_steps for r in results),
        "overall_per_trial": [
            {"max_ncpdr": m.max_ncpdr, "sum_throughput": m.sum_throughput,
             "drop_rates": [float(x) for x in m.drop_rates]} for m in overall],
        "mean_max_ncpdr": float(np.mean([m.max_ncpdr for m in overall])),
        "mean_sum_throughput": float(np.mean([m.sum_throughput for m in overall])),
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    manifest = {
        "package_version": __version__,
        "seed": cfg.run.seed,
        "config": cfg.to_dict(),
        "files": sorted(p.name for p in out.iterdir() if p.is_file()),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    return summary
