"""End-to-end training behaviors: single-agent sanity, defaults from the
experiment protocol, distributed-execution independence, pre-allocation."""

import json

import numpy as np
import pytest
import torch

from gfra.config import Config, TrafficClass, paired_prealloc
from gfra.harness import build_policy, make_actor, run_campaign, run_trial
from gfra.objective import DTYPE
from gfra.policy import PolicyNetwork


def test_protocol_defaults_match_experiment_settings():
    cfg = Config()
    assert cfg.training.epochs == 1000
    assert cfg.training.episodes_per_epoch == 100
    assert cfg.training.steps_per_epoch == 100
    assert cfg.training.batch_episodes == 32
    assert cfg.training.buffer_capacity == 5000
    assert cfg.training.eval_epochs == 200
    assert cfg.training.learning_rate == pytest.approx(5e-4)
    assert cfg.training.rms_smoothing == pytest.approx(0.99)
    assert cfg.training.grad_clip_gru == pytest.approx(10.0)
    assert cfg.policy.hidden_size == 64
    assert cfg.fairness.alpha == 3.0 and cfg.fairness.frame_len == 20
    assert cfg.fairness.lyapunov_v == 1000.0 and cfg.fairness.z_max == 100.0
    assert cfg.system.penalty_ell == 0.25
    # two-class scenario shipped as the default
    lam = cfg.system.arrival_rates
    assert list(lam[:4]) == [0.2] * 4 and list(lam[4:]) == [0.65] * 8
    assert list(cfg.system.max_delays[:4]) == [2] * 4
    assert list(cfg.system.max_delays[4:]) == [5] * 8


def test_single_agent_learns_to_transmit():
    """One user, one pilot, saturated arrivals, ample power: after a short
    training run the per-slot success rate approaches one."""
    cfg = Config()
    cfg.system.n_users = 1
    cfg.system.n_pilots = 1
    cfg.system.traffic_classes = [TrafficClass(1, 1.0, 0.5, 1.0, 1)]
    cfg.fairness.objective = "s1"
    cfg.training.epochs = 60
    cfg.training.episodes_per_epoch = 5
    cfg.training.steps_per_epoch = 5
    cfg.training.batch_episodes = 16
    cfg.run.mode = "train"
    cfg.run.seed = 11
    # n_pilots < n_users cannot hold in the single-agent sanity case
    res = run_trial(cfg, 0)
    drop_rate = float(np.mean([m.drop_rates[0] for m in res.rows[-10:]]))
    # 19 of 20 slots are winnable (first slot has an empty queue)
    assert drop_rate <= 0.1
    assert res.aborted_steps == 0


def test_user_rows_are_independent_in_execution():
    """Distributed execution: a user's output depends only on its own
    observation row and hidden state."""
    net = PolicyNetwork(9, 2, 8, 1.0)
    obs = torch.randn(3, 9, dtype=DTYPE)
    hidden = torch.randn(3, 8, dtype=DTYPE)
    with torch.no_grad():
        pi_a, rho_a, h_a = net(obs, hidden)
        obs2 = obs.clone()
        obs2[1] += 5.0
        hidden2 = hidden.clone()
        hidden2[2] -= 3.0
        pi_b, rho_b, h_b = net(obs2, hidden2)
    assert torch.equal(pi_a[0], pi_b[0])
    assert torch.equal(rho_a[0], rho_b[0])
    assert torch.equal(h_a[0], h_b[0])


def test_prealloc_restricts_executed_actions(tmp_path):
    cfg = Config()
    cfg.run.mode = "train"
    cfg.run.seed = 2
    cfg.run.out_dir = str(tmp_path / "run")
    cfg.run.event_log = True
    cfg.policy.prealloc = paired_prealloc(12, 6)
    cfg.training.epochs = 1
    cfg.training.episodes_per_epoch = 3
    cfg.training.steps_per_epoch = 1
    cfg.training.batch_episodes = 2
    cfg.validate()
    run_campaign(cfg)
    allowed = {u: {0, ((u - 1) % 6) + 1} for u in range(1, 13)}
    rows = (tmp_path / "run" / "events.csv").read_text().splitlines()[1:]
    assert rows
    for row in rows:
        _, _, _, _, user, _, action, _, _ = map(int, row.split(","))
        assert action in allowed[user]
    manifest = json.loads((tmp_path / "run" / "manifest.json").read_text())
    assert manifest["config"]["policy"]["prealloc"][0]["users"] == [1, 7]


def test_s2_mode_trains_end_to_end(tmp_path):
    cfg = Config()
    cfg.run.mode = "train"
    cfg.run.seed = 3
    cfg.run.out_dir = str(tmp_path / "s2")
    cfg.fairness.objective = "s2"
    cfg.training.epochs = 2
    cfg.training.episodes_per_epoch = 2
    cfg.training.steps_per_epoch = 2
    cfg.training.batch_episodes = 4
    cfg.validate()
    summary = run_campaign(cfg)
    assert summary["aborted_train_steps"] == 0


def test_mr_combiner_runs(tmp_path):
    cfg = Config()
    cfg.run.mode = "baseline1"
    cfg.run.seed = 4
    cfg.run.out_dir = str(tmp_path / "mr")
    cfg.system.combiner = "mr"
    cfg.training.eval_epochs = 1
    cfg.training.episodes_per_epoch = 3
    cfg.validate()
    summary = run_campaign(cfg)
    assert summary["epochs"] == 1


def test_actor_requires_net_for_policy_modes():
    cfg = Config()
    cfg.run.mode = "train"
    cfg.validate()
    net = build_policy(cfg, 0)
    actor = make_actor(cfg, net, 0)
    assert actor.net is net
