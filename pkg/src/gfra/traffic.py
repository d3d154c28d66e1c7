"""Deadline-constrained FIFO queues with Bernoulli arrivals.

Slot ordering (fixed convention): observe -> decide -> transmit -> resolve
success/drop on the head packet -> decrement deadlines -> append the slot's
arrival. A packet arriving in slot t therefore becomes transmittable in slot
t+1 with a fresh deadline of ``max_delay`` slots.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass


@dataclass
class Packet:
    remaining_deadline: int
    birth_slot: int


class UserQueue:
    """Per-user FIFO of packets plus drop/success counters."""

    def __init__(self, max_delay: int):
        if max_delay < 1:
            raise ValueError("max_delay must be >= 1")
        self.max_delay = int(max_delay)
        self.fifo: deque[Packet] = deque()
        self.cum_arrivals = 0
        self.cum_successes = 0
        self.cum_drops = 0

    @property
    def backlog(self) -> int:
        return len(self.fifo)

    @property
    def head_deadline(self) -> int:
        """Remaining slots of the head-of-line packet; 0 when idle."""
        return self.fifo[0].remaining_deadline if self.fifo else 0

    def step(self, mu: int, gamma: int, slot: int = 0) -> int:
        """Advance one slot; returns the drop indicator.

        A success pops the head; otherwise a head with deadline 1 expires and
        is dropped. Deadlines of surviving packets decrease by one and an
        arrival (if any) is appended with the full deadline.
        """
        drop = 0
        if mu:
            if not self.fifo:
                raise RuntimeError("success reported for an empty queue")
            self.fifo.popleft()
            self.cum_successes += 1
        elif self.fifo and self.fifo[0].remaining_deadline == 1:
            self.fifo.popleft()
            self.cum_drops += 1
            drop = 1
        for pkt in self.fifo:
            pkt.remaining_deadline -= 1
        if gamma:
            self.fifo.append(Packet(self.max_delay, slot))
            self.cum_arrivals += 1
        return drop


def success_indicator(pilot: int, multiplicities, rate: float, rate_threshold: float) -> int:
    """1 iff the user transmitted alone on its pilot and met the rate target."""
    if pilot == 0:
        return 0
    if multiplicities[pilot - 1] != 1:
        return 0
    return int(rate >= rate_threshold)


def urgency(head_deadline: int, max_delay: int) -> float:
    """Urgency of the head-of-line packet: 1 - (d-1)/d_max, 0 when idle."""
    if head_deadline == 0:
        return 0.0
    if not 1 <= head_deadline <= max_delay:
        raise ValueError("head deadline outside {1..max_delay}")
    return 1.0 - (head_deadline - 1) / max_delay
