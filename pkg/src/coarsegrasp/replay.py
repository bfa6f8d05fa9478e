"""Proportional prioritized experience replay with FIFO eviction."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .scene import GraspAction, HeightmapPair

P_MIN = 1e-3


@dataclass
class Transition:
    s: HeightmapPair
    a: GraspAction
    r: int
    s_next: HeightmapPair
    done: bool
    priority: float = 1.0
    # cached max_a' Q(s_next) keyed by the target-network version
    cached_next_max: float | None = None
    cached_target_version: int = -1


class ReplayBuffer:
    """Sampling probability proportional to priority ** omega, without
    replacement within a batch; new transitions enter at max priority."""

    def __init__(self, capacity: int, omega: float = 0.6, p_min: float = P_MIN):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.omega = omega
        self.p_min = p_min
        self._items: list[Transition] = []
        self._next = 0  # FIFO write cursor once full

    def __len__(self) -> int:
        return len(self._items)

    def push(self, t: Transition) -> None:
        t.priority = max((x.priority for x in self._items), default=1.0)
        if len(self._items) < self.capacity:
            self._items.append(t)
        else:
            self._items[self._next] = t
            self._next = (self._next + 1) % self.capacity

    def sample(self, batch_size: int, rng: np.random.Generator) -> tuple[list[int], list[Transition]]:
        if not self._items:
            raise ValueError("cannot sample from an empty buffer")
        k = min(batch_size, len(self._items))
        pr = np.array([t.priority for t in self._items]) ** self.omega
        idx = rng.choice(len(self._items), size=k, replace=False, p=pr / pr.sum())
        return list(idx), [self._items[i] for i in idx]

    def update_priorities(self, indices: list[int], td_errors: list[float]) -> None:
        for i, e in zip(indices, td_errors):
            self._items[i].priority = max(abs(float(e)), self.p_min)
