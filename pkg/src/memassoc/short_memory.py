"""Class-balanced short-term memory: one bounded FIFO queue per class.

Batches draw a class uniformly among the non-empty queues, then an element
uniformly inside that queue, so a class with ten samples is seen as often as
one with ten thousand.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import EmptyMemoryError
from .rng import Rng

DEFAULT_CAPACITY = 256


def onehot(i: int, dim: int) -> np.ndarray:
    if not 0 <= i < dim:
        raise IndexError(f"onehot: index {i} out of range for dimension {dim}")
    v = np.zeros(dim)
    v[i] = 1.0
    return v


@dataclass
class Sample:
    class_id: int
    payload: np.ndarray


@dataclass
class Batch:
    payloads: np.ndarray  # (batch, D)
    class_ids: list[int]
    keys: np.ndarray  # (batch, num_classes) one-hot rows

    def __len__(self):
        return len(self.class_ids)


class ShortTermMemory:
    def __init__(self, num_classes: int, capacity: int = DEFAULT_CAPACITY):
        if num_classes <= 0 or capacity <= 0:
            raise ValueError("num_classes and capacity must be positive")
        self.num_classes = num_classes
        self.capacity = capacity
        self.queues = [deque(maxlen=capacity) for _ in range(num_classes)]

    def insert(self, sample: Sample | int, payload=None) -> None:
        """Append to the class queue, evicting its oldest entry when full.

        Accepts a :class:`Sample` or ``(class_id, payload)``.
        """
        if not isinstance(sample, Sample):
            sample = Sample(int(sample), payload)
        if not 0 <= sample.class_id < self.num_classes:
            raise IndexError(f"class id {sample.class_id} out of range [0, {self.num_classes})")
        self.queues[sample.class_id].append(np.asarray(sample.payload, dtype=np.float64).reshape(-1))

    def class_counts(self) -> list[int]:
        return [len(q) for q in self.queues]

    def nonempty_classes(self) -> list[int]:
        return [i for i, q in enumerate(self.queues) if q]

    def __len__(self):
        return sum(self.class_counts())

    def sample_batch(self, batch_size: int, rng: Rng) -> Batch:
        classes = self.nonempty_classes()
        if not classes:
            raise EmptyMemoryError("cannot sample from an empty short-term memory")
        ids, rows = [], []
        for _ in range(batch_size):
            c = classes[rng.randbelow(len(classes))]
            q = self.queues[c]
            ids.append(c)
            rows.append(q[rng.randbelow(len(q))])
        keys = np.zeros((batch_size, self.num_classes))
        keys[np.arange(batch_size), ids] = 1.0
        payloads = np.stack(rows) if rows else np.zeros((0, self.payload_dim() or 0))
        return Batch(payloads, ids, keys)

    def payload_dim(self) -> int | None:
        for q in self.queues:
            if q:
                return q[0].size
        return None
