"""Slotted queue evolution with unused-service accounting.

Per slot and per queue::

    u  = max(s - a - q, 0)
    q' = q + a - s + u

so that ``u * q' == 0`` always holds.  Python integers are unbounded, so the
reference path here never overflows; the compiled kernel uses int64.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .errors import ValidationError


@dataclass(frozen=True)
class QueueState:
    q: tuple[int, ...]
    t: int = 0

    def __post_init__(self):
        if any(x < 0 for x in self.q):
            raise ValidationError(f"negative queue length in {self.q}")

    @classmethod
    def empty(cls, n: int) -> "QueueState":
        return cls(q=(0,) * n, t=0)


@dataclass(frozen=True)
class SlotRecord:
    a: tuple[int, ...]
    s: tuple[int, ...]
    u: tuple[int, ...]


def step_queue(q: int, a: int, s: int) -> tuple[int, int]:
    u = s - a - q
    if u < 0:
        u = 0
    return q + a - s + u, u


def step_system(state: QueueState, a: Sequence[int], s: Sequence[int]) -> tuple[QueueState, SlotRecord]:
    n = len(state.q)
    if len(a) != n or len(s) != n:
        raise ValidationError(f"expected vectors of length {n}, got {len(a)} arrivals and {len(s)} services")
    nxt, unused = [], []
    for qn, an, sn in zip(state.q, a, s):
        qq, uu = step_queue(qn, an, sn)
        nxt.append(qq)
        unused.append(uu)
    rec = SlotRecord(a=tuple(int(x) for x in a), s=tuple(int(x) for x in s), u=tuple(unused))
    return QueueState(q=tuple(nxt), t=state.t + 1), rec
