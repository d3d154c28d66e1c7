"""Grant-free random access simulator with a trainable distributed access policy.

Subpackage map:
  config     scenario / run configuration objects, YAML loading
  rng        named, reproducible random-stream derivation
  channel    physical layer: LSFC drops, pilot phase, MMSE, combining, SINR, rate proxies
  traffic    Bernoulli arrivals, deadline FIFO queues, success/drop bookkeeping
  fairness   per-slot priority levels (log-sum-exp and virtual-queue trackers)
  objective  closed-form differentiable expected sum-priority
  policy     shared recurrent policy network, replay buffer, trainer
  baselines  genie-barred ALOHA, scheduled pairs, non-orthogonal pilots
  simulator  slot/episode loop gluing the layers together
  harness    epoch orchestration, metrics, CSV/JSON emission
  validation Monte-Carlo oracles used by the verification suite
"""

__version__ = "0.1.0"
