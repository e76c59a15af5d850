"""Dispatchers, the MaxWeight scheduler and capacity-region face geometry.

Tie-breaking everywhere is uniform over the tied candidates.  The
``*_choice`` helpers take the uniform draw explicitly: candidate ``k`` of
``m`` tied ones (in index order) is picked when ``floor(u * m) == k``.  The
compiled kernel follows the same rule so both backends consume random
numbers identically.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np
from scipy.optimize import linprog

from .distributions import DistModel
from .errors import ValidationError

FACE_TOL = 1e-9


class Policy(str, Enum):
    SINGLE = "single"
    JSQ = "jsq"
    RANDOM = "random"
    MAXWEIGHT = "maxweight"


@dataclass(frozen=True)
class CapacityFace:
    c: tuple[float, ...]
    b: float
    anchor: tuple[float, ...]
    delta: float | None = None

    def __post_init__(self):
        c = tuple(float(x) for x in self.c)
        anchor = tuple(float(x) for x in self.anchor)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "anchor", anchor)
        object.__setattr__(self, "b", float(self.b))
        if len(c) != len(anchor):
            raise ValidationError("face normal and anchor have different lengths")
        if any(x < 0 for x in c) or not any(x > 0 for x in c):
            raise ValidationError(f"face normal {c} must be non-negative with a positive entry")
        if abs(float(np.dot(c, anchor)) - self.b) > FACE_TOL:
            raise ValidationError(f"anchor {anchor} is not on the face <c, r> = {self.b}")
        if self.delta is not None and not self.delta > 0:
            raise ValidationError("delta must be positive when supplied")

    @property
    def n(self) -> int:
        return len(self.c)

    @property
    def norm2(self) -> float:
        return float(np.dot(self.c, self.c))


@dataclass(frozen=True)
class ServiceSet:
    schedules: tuple[tuple[int, ...], ...]
    s_max: int | None = field(default=None, compare=False)

    def __post_init__(self):
        scheds = tuple(tuple(int(x) for x in s) for s in self.schedules)
        object.__setattr__(self, "schedules", scheds)
        if not scheds:
            raise ValidationError("service set is empty")
        n = len(scheds[0])
        if any(len(s) != n for s in scheds):
            raise ValidationError("schedules have inconsistent lengths")
        if any(x < 0 for s in scheds for x in s):
            raise ValidationError("schedules must be non-negative")
        if self.s_max is not None and any(x > self.s_max for s in scheds for x in s):
            raise ValidationError(f"a schedule exceeds S_max={self.s_max}")

    @property
    def n(self) -> int:
        return len(self.schedules[0])

    def as_array(self) -> np.ndarray:
        return np.array(self.schedules, dtype=np.int64)


# --- load balancing --------------------------------------------------------

def jsq_choice(q: Sequence[int], u: float) -> int:
    low = min(q)
    tied = [i for i, x in enumerate(q) if x == low]
    return tied[int(u * len(tied))]


def dispatch_jsq(q: Sequence[int], a_total: int, rng: np.random.Generator) -> np.ndarray:
    out = np.zeros(len(q), dtype=np.int64)
    out[jsq_choice(q, rng.random())] = a_total
    return out


def random_targets(uniforms: Sequence[float], n: int) -> list[int]:
    return [int(u * n) for u in uniforms]


def dispatch_random(q: Sequence[int], a_total: int, rng: np.random.Generator) -> np.ndarray:
    out = np.zeros(len(q), dtype=np.int64)
    for k in random_targets(rng.random(a_total), len(q)):
        out[k] += 1
    return out


# --- scheduling ------------------------------------------------------------

def maxweight_set(q: Sequence[int], schedules: Sequence[Sequence[int]]) -> list[int]:
    """Indices of the schedules maximising <q, S>."""
    weights = [sum(qi * si for qi, si in zip(q, s)) for s in schedules]
    top = max(weights)
    return [k for k, w in enumerate(weights) if w == top]


def maxweight_choice(q: Sequence[int], schedules: Sequence[Sequence[int]], u: float) -> int:
    tied = maxweight_set(q, schedules)
    return tied[int(u * len(tied))]


def maxweight(q: Sequence[int], sset: ServiceSet, rng: np.random.Generator) -> tuple[int, ...]:
    return sset.schedules[maxweight_choice(q, sset.schedules, rng.random())]


# --- capacity-region geometry ---------------------------------------------

def heavy_arrival_rates(face: CapacityFace, epsilon: float) -> np.ndarray:
    """Arrival mean vector at distance ``epsilon`` inside the face: anchor - epsilon * c."""
    if not epsilon > 0:
        raise ValidationError("epsilon must be positive")
    rates = np.asarray(face.anchor) - epsilon * np.asarray(face.c)
    if np.any(rates < 0):
        raise ValidationError(f"epsilon={epsilon} gives negative arrival rates {rates.tolist()}")
    return rates


def project_onto_face(q, face) -> tuple[np.ndarray, np.ndarray]:
    """Split ``q`` into components parallel and perpendicular to the face normal.

    ``face`` may be a CapacityFace or a bare normal vector.
    """
    c = np.asarray(face.c if isinstance(face, CapacityFace) else face, dtype=float)
    q = np.asarray(q, dtype=float)
    cc = float(np.dot(c, c))
    if cc == 0.0:
        raise ValidationError("zero normal vector")
    par = (float(np.dot(c, q)) / cc) * c
    return par, q - par


@dataclass(frozen=True)
class FaceReport:
    all_feasible: bool
    face_schedules: tuple[int, ...]
    anchor_in_face: bool
    weights: tuple[float, ...] | None


def validate_face(sset: ServiceSet, face: CapacityFace) -> FaceReport:
    if sset.n != face.n:
        raise ValidationError(f"service set has dimension {sset.n}, face has {face.n}")
    S = sset.as_array().astype(float)
    levels = S @ np.asarray(face.c)
    feasible = bool(np.all(levels <= face.b + FACE_TOL))
    on_face = tuple(int(k) for k in np.flatnonzero(np.abs(levels - face.b) <= FACE_TOL))
    if not on_face:
        raise ValidationError(f"no schedule attains <c, S> = {face.b}; max is {levels.max()}")
    weights = _convex_weights(S[list(on_face)], np.asarray(face.anchor))
    return FaceReport(
        all_feasible=feasible,
        face_schedules=on_face,
        anchor_in_face=weights is not None,
        weights=None if weights is None else tuple(float(w) for w in weights),
    )


def _convex_weights(points: np.ndarray, target: np.ndarray):
    k = len(points)
    a_eq = np.vstack([points.T, np.ones((1, k))])
    b_eq = np.concatenate([target, [1.0]])
    res = linprog(np.zeros(k), A_eq=a_eq, b_eq=b_eq, bounds=[(0, None)] * k, method="highs")
    if res.status != 0:
        return None
    if np.max(np.abs(a_eq @ res.x - b_eq)) > 1e-7:
        return None
    return res.x


def perp_norm(q, c) -> float:
    _, perp = project_onto_face(q, c)
    return float(np.linalg.norm(perp))


def drift_of_perp(q: Sequence[int], sset: ServiceSet, c, arrivals: Sequence[DistModel]) -> float:
    """Exact one-slot drift E[||Q_perp(t+1)||] - ||Q_perp(t)|| under MaxWeight.

    Enumerates the joint arrival pmf and averages over tied schedules.
    """
    tied = maxweight_set(q, sset.schedules)
    v0 = perp_norm(q, c)
    tables = [list(d.pmf.items()) for d in arrivals]
    total = 0.0
    for combo in itertools.product(*tables):
        prob = math.prod(p for _, p in combo)
        a = [v for v, _ in combo]
        acc = 0.0
        for k in tied:
            s = sset.schedules[k]
            nxt = [max(qi + ai - si, 0) for qi, ai, si in zip(q, a, s)]
            acc += perp_norm(nxt, c)
        total += prob * acc / len(tied)
    return total - v0


def estimate_drift_margin(face: CapacityFace, sset: ServiceSet, arrivals: Sequence[DistModel],
                          radius: float = 200.0, n_directions: int = 16, seed: int = 0) -> float:
    """Numerical stand-in for the face drift constant when none is configured.

    Evaluates the exact one-slot drift of ||Q_perp|| at states far from the
    face normal (perpendicular distance ``radius``) with arrivals at the
    anchor rates, and returns the smallest observed decrease.
    """
    c = np.asarray(face.c)
    chat = c / np.linalg.norm(c)
    n = face.n
    if n == 1:
        raise ValidationError("a one-dimensional system has no perpendicular component")
    basis = np.linalg.svd(chat[None, :])[2][1:]
    if n == 2:
        dirs = np.vstack([basis, -basis])
    else:
        g = np.random.default_rng(seed).standard_normal((n_directions, n - 1))
        dirs = (g / np.linalg.norm(g, axis=1, keepdims=True)) @ basis
    worst = -math.inf
    for v in dirs:
        base = 3.0 * radius * chat
        q = np.maximum(np.rint(base + radius * v), 0).astype(int)
        worst = max(worst, drift_of_perp(q.tolist(), sset, c, arrivals))
    return -worst
