"""Experiment definitions: one concrete system at a fixed epsilon, and the
epsilon-indexed template that produces them.

Three system kinds share one statistic, ``<c, Q>``:

* ``single_server``: N = 1, c = (1,), arrivals at rate mu - eps;
* ``load_balance``: a dispatcher splits one arrival stream of rate
  mu_sum - eps over N servers, c = (1, ..., 1) so ``<c, Q> = ||Q||_1``;
* ``schedule``: per-queue arrivals at ``anchor - eps * c`` served by
  MaxWeight over a finite service set, c is the face normal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .control import CapacityFace, Policy, ServiceSet, heavy_arrival_rates, validate_face
from .distributions import DistFamily, DistModel
from .errors import ValidationError

KINDS = ("single_server", "load_balance", "schedule")


@dataclass(frozen=True)
class SystemSpec:
    kind: str
    n: int
    policy: Policy
    arrivals: tuple[DistModel, ...]
    service: tuple[DistModel, ...] | None
    service_set: ServiceSet | None = None
    face: CapacityFace | None = None
    epsilon: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "policy", Policy(self.policy))
        if self.kind not in KINDS:
            raise ValidationError(f"unknown system kind {self.kind!r}")
        if self.kind == "single_server":
            if self.n != 1 or self.policy is not Policy.SINGLE:
                raise ValidationError("a single-server system has N = 1 and policy 'single'")
        elif self.kind == "load_balance":
            if self.n < 2:
                raise ValidationError("load balancing requires N >= 2")
            if self.policy not in (Policy.JSQ, Policy.RANDOM):
                raise ValidationError("load balancing policy must be 'jsq' or 'random'")
            if len(self.arrivals) != 1:
                raise ValidationError("load balancing takes one aggregate arrival model")
        else:
            if self.policy is not Policy.MAXWEIGHT:
                raise ValidationError("scheduling policy must be 'maxweight'")
            if self.service_set is None or self.face is None:
                raise ValidationError("scheduling requires a service set and a face")
            if self.service_set.n != self.n or self.face.n != self.n:
                raise ValidationError("service set / face dimension differs from N")
        if self.kind != "load_balance" and len(self.arrivals) != self.n:
            raise ValidationError(f"expected {self.n} arrival models, got {len(self.arrivals)}")
        if self.kind != "schedule" and (self.service is None or len(self.service) != self.n):
            raise ValidationError(f"expected {self.n} service models")
        if not self.epsilon > 0:
            raise ValidationError("epsilon must be positive")

    @property
    def c(self) -> np.ndarray:
        """Direction of the scaled statistic."""
        if self.kind == "schedule":
            return np.asarray(self.face.c, dtype=float)
        return np.ones(self.n)

    @property
    def c_norm2(self) -> float:
        return float(self.c @ self.c)

    @property
    def arrival_rate_c(self) -> float:
        """<c, lambda>, the mean per-slot arrival increment of the statistic."""
        if self.kind == "schedule":
            return float(sum(cn * d.mean for cn, d in zip(self.c, self.arrivals)))
        return float(sum(d.mean for d in self.arrivals))

    @property
    def capacity_c(self) -> float:
        """Service capacity in the statistic's units: mu_sum, or b for a face."""
        if self.kind == "schedule":
            return self.face.b
        return float(sum(d.mean for d in self.service))

    @property
    def drift_gap(self) -> float:
        """Distance of the arrival load below capacity, in units of <c, .>."""
        return self.capacity_c - self.arrival_rate_c

    @property
    def sigma2(self) -> float:
        """Variance entering the limiting exponential.

        single server: var(a) + var(s); load balancing: var(A_sum) +
        sum var(S_n); scheduling: sum c_n^2 var(A_n).
        """
        if self.kind == "schedule":
            return float(sum(cn * cn * d.variance for cn, d in zip(self.c, self.arrivals)))
        return float(sum(d.variance for d in self.arrivals) + sum(d.variance for d in self.service))

    @property
    def target_rate(self) -> float:
        """Rate of the exponential approximating ``epsilon * <c, Q>``.

        Equals 2 / sigma2 when the drift gap is epsilon, i.e. for the single
        server, load balancing, and faces with a unit normal.
        """
        s2 = self.sigma2
        gap = self.drift_gap
        if s2 <= 0 or gap <= 0:
            return math.inf
        return 2.0 * gap / (self.epsilon * s2)

    @property
    def target_mean(self) -> float:
        return 1.0 / self.target_rate

    @property
    def max_arrival(self) -> int:
        return max(d.max_support for d in self.arrivals)

    def with_epsilon(self, epsilon: float) -> "SystemSpec":
        return replace(self, epsilon=epsilon)


@dataclass(frozen=True)
class SystemTemplate:
    """Epsilon-indexed family of systems sharing everything but the arrival rates."""

    kind: str
    n: int
    policy: Policy
    arrival_family: DistFamily
    service: tuple[DistModel, ...] | None = None
    service_set: ServiceSet | None = None
    face: CapacityFace | None = None

    def __post_init__(self):
        object.__setattr__(self, "policy", Policy(self.policy))
        if self.kind == "schedule":
            if self.face is None or self.service_set is None:
                raise ValidationError("scheduling requires a service set and a face")
            report = validate_face(self.service_set, self.face)
            if not report.all_feasible:
                raise ValidationError("a schedule lies outside the declared face")
            if not report.anchor_in_face:
                raise ValidationError("face anchor is not a convex combination of face schedules")

    def rates(self, epsilon: float) -> np.ndarray:
        if self.kind == "schedule":
            return heavy_arrival_rates(self.face, epsilon)
        mu_total = sum(d.mean for d in self.service)
        scalar = CapacityFace(c=(1.0,), b=mu_total, anchor=(mu_total,))
        return heavy_arrival_rates(scalar, epsilon)

    def at(self, epsilon: float) -> SystemSpec:
        rates = self.rates(epsilon)
        arrivals = tuple(self.arrival_family.with_mean(float(m)) for m in rates)
        return SystemSpec(kind=self.kind, n=self.n, policy=self.policy, arrivals=arrivals,
                          service=self.service, service_set=self.service_set, face=self.face,
                          epsilon=float(epsilon))
