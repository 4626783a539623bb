"""Sender/recipient pairs and payment amounts."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class WorkloadSpec:
    """``skewness`` of 0 means uniform senders; ``amount_upper`` of None means the median capacity."""

    tx_count: int = 5000
    skewness: float = 0.0
    amount_upper: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.skewness < 0:
            raise ValueError("skewness must be >= 0")
        if self.tx_count < 0:
            raise ValueError("tx_count must be >= 0")
        if self.amount_upper is not None and self.amount_upper <= 0:
            raise ValueError("amount_upper must be positive")

    @property
    def skewed(self) -> bool:
        return self.skewness > 0


@dataclass(frozen=True)
class Payment:
    sender: str
    recipient: str
    amount: int


def _recipient(rng: np.random.Generator, nodes: Sequence[str], sender_idx: int) -> str:
    # uniform over the other N-1 nodes
    j = int(rng.integers(len(nodes) - 1))
    return nodes[j + 1 if j >= sender_idx else j]


def sample_pair_uniform(rng: np.random.Generator, nodes: Sequence[str]) -> tuple[str, str]:
    if len(nodes) < 2:
        raise ValueError("need at least two nodes")
    i = int(rng.integers(len(nodes)))
    return nodes[i], _recipient(rng, nodes, i)


def sample_sender_skewed(rng: np.random.Generator, nodes: Sequence[str], skewness: float) -> str:
    """Sender index ~ floor(Exp(rate=skewness/N)), wrapped modulo N."""
    return nodes[_skewed_index(rng, len(nodes), skewness)]


def _skewed_index(rng: np.random.Generator, n: int, skewness: float) -> int:
    if skewness <= 0:
        raise ValueError("skewness must be positive")
    x = rng.exponential(n / skewness)
    return int(x) % n


def sample_pair_skewed(rng: np.random.Generator, nodes: Sequence[str], skewness: float) -> tuple[str, str]:
    if len(nodes) < 2:
        raise ValueError("need at least two nodes")
    i = _skewed_index(rng, len(nodes), skewness)
    return nodes[i], _recipient(rng, nodes, i)


def sample_amount(rng: np.random.Generator, amount_upper: int) -> int:
    if amount_upper < 1:
        raise ValueError("amount_upper must be >= 1")
    return int(rng.integers(1, amount_upper, endpoint=True))


def generate_payments(spec: WorkloadSpec, nodes: Sequence[str], amount_upper: int) -> list[Payment]:
    """The whole payment trace for ``spec``, a pure function of the spec and node order."""
    rng = np.random.default_rng(spec.seed)
    out = []
    for _ in range(spec.tx_count):
        if spec.skewed:
            s, r = sample_pair_skewed(rng, nodes, spec.skewness)
        else:
            s, r = sample_pair_uniform(rng, nodes)
        out.append(Payment(s, r, sample_amount(rng, amount_upper)))
    return out
