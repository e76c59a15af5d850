"""Finite-support integer distributions for per-slot arrivals and service.

Every model is an explicit pmf table, so means, variances and moment
generating functions are exact finite sums.  Unbounded families (Poisson,
geometric) are truncated where the discarded tail mass drops below
``TAIL_MASS`` and renormalised.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from functools import cached_property
from typing import Mapping

import numpy as np
from scipy import stats

from .errors import ValidationError

SUM_TOL = 1e-12
TAIL_MASS = 1e-10


@dataclass(frozen=True)
class DistModel:
    pmf: Mapping[int, float] = field(compare=True)
    mean: float
    variance: float
    max_support: int

    def __hash__(self):
        return hash(tuple(sorted(self.pmf.items())))

    @cached_property
    def values(self) -> np.ndarray:
        return np.array(sorted(self.pmf), dtype=np.int64)

    @cached_property
    def probs(self) -> np.ndarray:
        return np.array([self.pmf[v] for v in sorted(self.pmf)], dtype=float)

    @cached_property
    def _cdf(self) -> np.ndarray:
        cdf = np.cumsum(self.probs)
        # the last bin absorbs rounding so a uniform in [0, 1) never falls off the end
        cdf[-1] = np.inf
        return cdf

    def sample_array(self, rng: np.random.Generator, size) -> np.ndarray:
        """Inverse-CDF draws as an int64 array of the given shape."""
        u = rng.random(size)
        return self.values[np.searchsorted(self._cdf, u, side="right")]

    def __repr__(self):
        return f"DistModel(mean={self.mean:.6g}, variance={self.variance:.6g}, support=0..{self.max_support})"


@dataclass(frozen=True)
class LightTailCert:
    theta: float
    bound: float


def make_discrete_dist(pmf: Mapping[int, float]) -> DistModel:
    if not pmf:
        raise ValidationError("empty pmf")
    table = {}
    for value, prob in pmf.items():
        if isinstance(value, bool) or int(value) != value or value < 0:
            raise ValidationError(f"support value {value!r} is not a non-negative integer")
        prob = float(prob)
        if not (prob >= 0.0) or prob > 1.0:
            raise ValidationError(f"probability {prob!r} for value {value} outside [0, 1]")
        if prob > 0.0:
            table[int(value)] = table.get(int(value), 0.0) + prob
    total = math.fsum(table.values())
    if abs(total - 1.0) > SUM_TOL:
        raise ValidationError(f"probabilities sum to {total!r}, not 1")
    if not table:
        raise ValidationError("pmf has no positive mass")
    mean = math.fsum(v * p for v, p in table.items())
    variance = math.fsum((v - mean) ** 2 * p for v, p in table.items())
    return DistModel(pmf=dict(sorted(table.items())), mean=mean, variance=variance,
                     max_support=max(table))


def moments(d: DistModel, order: int) -> float:
    """Raw moment E[X^order]."""
    if order < 1:
        raise ValidationError("moment order must be >= 1")
    return math.fsum(p * float(v) ** order for v, p in d.pmf.items())


def sample(d: DistModel, rng: np.random.Generator) -> int:
    return int(d.sample_array(rng, None))


def light_tail_certificate(d: DistModel, theta: float) -> LightTailCert:
    """Exact mgf value E[exp(theta X)] of a finite-support model."""
    if not theta > 0:
        raise ValidationError("theta must be positive")
    bound = math.fsum(p * math.exp(theta * v) for v, p in d.pmf.items())
    return LightTailCert(theta=float(theta), bound=bound)


# --- named families -------------------------------------------------------

def bernoulli(p: float) -> DistModel:
    if not 0.0 <= p <= 1.0:
        raise ValidationError(f"bernoulli p={p} outside [0, 1]")
    return make_discrete_dist({0: 1.0 - p, 1: p})


def binomial(n: int, p: float) -> DistModel:
    if n < 1 or not 0.0 <= p <= 1.0:
        raise ValidationError(f"binomial needs n >= 1 and p in [0, 1], got n={n}, p={p}")
    probs = stats.binom.pmf(np.arange(n + 1), n, p)
    return _normalised({k: float(q) for k, q in enumerate(probs)})


def uniform(lo: int, hi: int) -> DistModel:
    if lo < 0 or hi < lo:
        raise ValidationError(f"uniform needs 0 <= lo <= hi, got {lo}..{hi}")
    k = hi - lo + 1
    return make_discrete_dist({v: 1.0 / k for v in range(lo, hi + 1)})


def point(value: int) -> DistModel:
    return make_discrete_dist({int(value): 1.0})


def _truncated(frozen, tail_mass: float) -> DistModel:
    top = int(frozen.isf(tail_mass))
    while frozen.sf(top) > tail_mass:
        top += 1
    probs = frozen.pmf(np.arange(top + 1))
    return _normalised({k: float(q) for k, q in enumerate(probs)})


def poisson(lam: float, tail_mass: float = TAIL_MASS) -> DistModel:
    if lam < 0:
        raise ValidationError("poisson rate must be non-negative")
    if lam == 0:
        return point(0)
    return _truncated(stats.poisson(lam), tail_mass)


def geometric(p: float, tail_mass: float = TAIL_MASS) -> DistModel:
    """Failures before the first success, support 0, 1, 2, ..."""
    if not 0.0 < p <= 1.0:
        raise ValidationError("geometric p must be in (0, 1]")
    return _truncated(stats.geom(p, loc=-1), tail_mass)


def _normalised(table: dict[int, float]) -> DistModel:
    total = math.fsum(table.values())
    return make_discrete_dist({k: v / total for k, v in table.items()})


@dataclass(frozen=True)
class DistFamily:
    """A one-parameter family indexed by its mean, e.g. arrivals at rate lambda(eps)."""

    name: str
    n: int = 1

    def with_mean(self, mean: float) -> DistModel:
        if mean < 0:
            raise ValidationError(f"negative arrival mean {mean}")
        if self.name == "bernoulli":
            return bernoulli(mean)
        if self.name == "binomial":
            if mean > self.n:
                raise ValidationError(f"binomial n={self.n} cannot reach mean {mean}")
            return binomial(self.n, mean / self.n)
        if self.name == "poisson":
            return poisson(mean)
        raise ValidationError(f"family {self.name!r} is not parametrised by its mean")


_KV = re.compile(r"(\w+)\s*=\s*([-+0-9.eE]+)")
_RANGE = re.compile(r"^\s*(\d+)\s*\.\.\s*(\d+)\s*$")


def _params(text: str) -> dict[str, float]:
    return {k: float(v) for k, v in _KV.findall(text)}


def parse_dist(spec) -> DistModel:
    """Build a model from ``"bernoulli p=0.45"``, ``"uniform 0..2"`` or a pmf table."""
    if isinstance(spec, Mapping):
        return make_discrete_dist({int(k): float(v) for k, v in spec.items()})
    if not isinstance(spec, str):
        raise ValidationError(f"cannot read a distribution from {spec!r}")
    head, _, rest = spec.strip().partition(" ")
    head = head.lower()
    kv = _params(rest)
    try:
        if head == "bernoulli":
            return bernoulli(kv["p"])
        if head == "binomial":
            return binomial(int(kv["n"]), kv["p"])
        if head == "poisson":
            return poisson(kv["lam"])
        if head == "geometric":
            return geometric(kv["p"])
        if head in ("point", "constant"):
            return point(int(rest.strip()))
        if head == "uniform":
            m = _RANGE.match(rest)
            if not m:
                raise ValidationError(f"uniform expects 'lo..hi', got {rest!r}")
            return uniform(int(m.group(1)), int(m.group(2)))
    except KeyError as exc:
        raise ValidationError(f"distribution {spec!r} is missing parameter {exc}") from None
    raise ValidationError(f"unknown distribution family {head!r}")


def parse_family(spec: str) -> DistFamily:
    """Mean-parametrised family: ``"bernoulli"``, ``"binomial n=2"``, ``"poisson"``."""
    head, _, rest = spec.strip().partition(" ")
    head = head.lower()
    if head in ("bernoulli", "poisson"):
        return DistFamily(head)
    if head == "binomial":
        kv = _params(rest)
        if "n" not in kv:
            raise ValidationError("binomial arrival family needs n=<trials>")
        return DistFamily("binomial", int(kv["n"]))
    raise ValidationError(f"arrival family {spec!r} cannot be parametrised by its mean")
