"""Queue/deadline dynamics: edge cases, trace-replay oracle, and
conservation properties."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gfra.traffic import Packet, UserQueue, success_indicator, urgency


def test_success_indicator_cases():
    assert success_indicator(1, np.array([2]), 10.0, 1.0) == 0    # collided
    assert success_indicator(1, np.array([1]), 2.0, 2.0) == 1    # threshold inclusive
    assert success_indicator(0, np.array([1]), 10.0, 1.0) == 0   # backed off


def test_queue_arrival_from_empty():
    q = UserQueue(max_delay=5)
    drop = q.step(mu=0, gamma=1)
    assert drop == 0 and q.backlog == 1 and q.head_deadline == 5


def test_queue_forced_expiry():
    q = UserQueue(max_delay=1)
    q.step(0, 1)
    drop = q.step(0, 0)
    assert drop == 1 and q.backlog == 0 and q.cum_drops == 1


def test_queue_success_pops_head():
    q = UserQueue(max_delay=3)
    q.step(0, 1, slot=0)
    q.step(0, 1, slot=1)
    assert q.backlog == 2 and q.head_deadline == 2
    q.step(1, 0, slot=2)
    assert q.cum_successes == 1 and q.backlog == 1 and q.head_deadline == 2


def test_queue_success_on_empty_is_error():
    q = UserQueue(max_delay=2)
    with pytest.raises(RuntimeError):
        q.step(1, 0)


def test_urgency_values():
    assert urgency(1, 5) == 1.0
    assert urgency(5, 5) == pytest.approx(0.2)
    assert urgency(3, 5) == pytest.approx(0.6)
    assert urgency(0, 5) == 0.0
    with pytest.raises(ValueError):
        urgency(6, 5)


@settings(max_examples=40, deadline=None)
@given(d_max=st.integers(1, 6), lam=st.floats(0.0, 1.0), seed=st.integers(0, 10_000))
def test_queue_trace_replay_oracle(d_max, lam, seed):
    """Replay a random trace and check the backlog recurrence
    Q' = max(Q - b, 0) + gamma exactly at every slot, plus flow conservation,
    FIFO order, and the deadline bound."""
    rng = np.random.default_rng(seed)
    q = UserQueue(d_max)
    backlog = 0
    popped_births = []
    for t in range(400):
        gamma = int(rng.random() < lam)
        head = q.head_deadline
        # random service attempt, only legal when backlogged
        mu = int(head > 0 and rng.random() < 0.4)
        births = [p.birth_slot for p in q.fifo]
        drop = q.step(mu, gamma, slot=t)
        b = mu + drop
        assert b in (0, 1)
        assert drop == (1 - mu) * (head == 1)
        new_backlog = max(backlog - b, 0) + gamma
        assert q.backlog == new_backlog
        backlog = new_backlog
        if b:
            popped_births.append((births[0], t))
            assert births[0] == min(births)           # FIFO: eldest departs
        for p in q.fifo:
            assert 1 <= p.remaining_deadline <= d_max
    for birth, departed in popped_births:
        assert departed - birth <= d_max              # no packet outlives d_max
    assert q.cum_arrivals == q.cum_successes + q.cum_drops + q.backlog


def test_no_arrivals_stays_empty():
    q = UserQueue(3)
    for t in range(50):
        q.step(0, 0, t)
    assert q.backlog == 0 and q.cum_drops == 0


def test_saturated_no_service_drops_one_per_slot():
    q = UserQueue(2)
    drops = sum(q.step(0, 1, t) for t in range(200))
    # pipeline fills after d_max slots, then exactly one drop per slot
    assert drops == 200 - 2
    assert q.backlog == 2


def test_packet_dataclass():
    p = Packet(remaining_deadline=3, birth_slot=7)
    assert p.remaining_deadline == 3 and p.birth_slot == 7
