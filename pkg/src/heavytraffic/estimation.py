"""Steady-state estimation from long simulated trajectories.

One run simulates ``horizon`` slots from empty queues, discards
``burn_in`` slots and accumulates per-batch sums of the slot statistics
(scaled statistic, unused service, cross term, perpendicular moments,
face saturation).  Confidence intervals are non-overlapping batch means.
The empirical law of the statistic is kept as an exact histogram when
``c`` is integral, otherwise as a systematically thinned sample of at most
``max_samples`` values.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import kernel
from .control import FACE_TOL, Policy
from .distributions import LightTailCert
from .errors import DivergenceError, ValidationError
from .system import SystemSpec

CHUNK = 1 << 17
HIST_START = 1024

FIXED_ROWS = ("stat", "u", "u2", "cross", "serv", "sat", "stat2")


@dataclass(frozen=True)
class EstimatorConfig:
    horizon: int
    burn_in: int | None = None
    batch_count: int = 32
    seed: int = 0
    thinning: int = 1
    replications: int = 1
    perp_orders: tuple[float, ...] = (1.0, 2.0)
    guard: int = 10**9
    max_samples: int = 1 << 20

    def __post_init__(self):
        object.__setattr__(self, "perp_orders", tuple(float(r) for r in self.perp_orders))
        if self.horizon < 1:
            raise ValidationError("horizon must be positive")
        if self.burn_in is not None and not 0 < self.burn_in < self.horizon:
            raise ValidationError("burn_in must satisfy 0 < burn_in < horizon")
        if self.batch_count < 2:
            raise ValidationError("batch_count must be at least 2")
        if self.thinning < 1 or self.replications < 1:
            raise ValidationError("thinning and replications must be positive")
        if any(r < 0 for r in self.perp_orders):
            raise ValidationError("moment orders must be non-negative")

    def burn_in_for(self, epsilon: float) -> int:
        """Explicit burn-in, or 20 / eps^2 capped at a quarter of the horizon."""
        if self.burn_in is not None:
            return self.burn_in
        return max(1, min(math.ceil(20.0 / epsilon**2), self.horizon // 4))


@dataclass
class _Accum:
    sums: np.ndarray
    lengths: np.ndarray
    hist: np.ndarray | None
    buf: np.ndarray | None
    sched_counts: np.ndarray
    violations: int
    final_q: np.ndarray

    @property
    def n_post(self) -> int:
        return int(self.lengths.sum())


def _merge(parts: list[_Accum]) -> _Accum:
    if len(parts) == 1:
        return parts[0]
    hist = None
    if parts[0].hist is not None:
        size = max(len(p.hist) for p in parts)
        hist = np.zeros(size, dtype=np.int64)
        for p in parts:
            hist[: len(p.hist)] += p.hist
    buf = None if parts[0].buf is None else np.concatenate([p.buf for p in parts])
    return _Accum(
        sums=np.concatenate([p.sums for p in parts], axis=1),
        lengths=np.concatenate([p.lengths for p in parts]),
        hist=hist,
        buf=buf,
        sched_counts=sum(p.sched_counts for p in parts),
        violations=sum(p.violations for p in parts),
        final_q=parts[-1].final_q,
    )


def _policy_code(policy: Policy) -> int:
    return {Policy.SINGLE: kernel.FIXED, Policy.JSQ: kernel.JSQ,
            Policy.RANDOM: kernel.RANDOM, Policy.MAXWEIGHT: kernel.MAXWEIGHT}[policy]


def _per_queue(models, rng, rows) -> np.ndarray:
    return np.ascontiguousarray(np.column_stack([d.sample_array(rng, rows) for d in models]),
                                dtype=np.int64)


def replication_seed(seed: int, replication: int) -> np.random.SeedSequence:
    """Stream for one replication: SeedSequence(seed) spawned at key (replication,)."""
    return np.random.SeedSequence(entropy=seed, spawn_key=(replication,))


def simulate(spec: SystemSpec, cfg: EstimatorConfig, replication: int = 0) -> _Accum:
    """Run one replication and return its raw accumulators."""
    rng = np.random.Generator(np.random.PCG64(replication_seed(cfg.seed, replication)))
    n = spec.n
    policy = _policy_code(spec.policy)
    burn_in = cfg.burn_in_for(spec.epsilon)
    n_post = cfg.horizon - burn_in
    if n_post < cfg.batch_count:
        raise ValidationError("horizon - burn_in is shorter than batch_count")
    batch_len = n_post // cfg.batch_count

    c = np.ascontiguousarray(spec.c, dtype=float)
    integral = bool(np.all(c == np.round(c)))
    c_int = np.round(c).astype(np.int64) if integral else np.zeros(n, dtype=np.int64)
    if integral:
        stride = cfg.thinning
        hist = np.zeros(HIST_START, dtype=np.int64)
        buf = np.zeros(0)
    else:
        kept = -(-n_post // cfg.thinning)
        stride = cfg.thinning * max(1, -(-kept // cfg.max_samples))
        hist = np.zeros(0, dtype=np.int64)
        buf = np.zeros(min(cfg.max_samples, kept))

    if spec.kind == "schedule":
        schedules = spec.service_set.as_array()
        levels = schedules @ c
        on_face = (np.abs(levels - spec.face.b) <= FACE_TOL).astype(np.int64)
    else:
        schedules = np.zeros((1, n), dtype=np.int64)
        on_face = np.zeros(1, dtype=np.int64)

    orders = np.asarray(cfg.perp_orders, dtype=float)
    sums = np.zeros((kernel.N_FIXED + len(orders), cfg.batch_count))
    counters = np.zeros(2, dtype=np.int64)
    sched_counts = np.zeros(len(schedules), dtype=np.int64)
    q = np.zeros(n, dtype=np.int64)
    tie_width = max(1, spec.max_arrival) if spec.policy is Policy.RANDOM else 1
    dummy_ties = np.zeros((1, 1))
    dummy_service = np.zeros((0, n), dtype=np.int64)

    t0 = 0
    while t0 < cfg.horizon:
        rows = min(CHUNK, cfg.horizon - t0)
        if spec.kind == "load_balance":
            arrivals = spec.arrivals[0].sample_array(rng, rows).reshape(rows, 1)
        else:
            arrivals = _per_queue(spec.arrivals, rng, rows)
        service = _per_queue(spec.service, rng, rows) if spec.kind != "schedule" else dummy_service
        ties = rng.random((rows, tie_width)) if policy != kernel.FIXED else dummy_ties

        start = 0
        while True:
            done, status = kernel.run_chunk(
                q, policy, arrivals, service, ties, schedules, on_face, c, c_int, orders,
                sums, hist, buf, counters, sched_counts,
                start, t0, burn_in, batch_len, stride, cfg.guard)
            if status == kernel.DONE:
                break
            if status == kernel.HIST_FULL:
                hist = np.concatenate([hist, np.zeros(len(hist), dtype=np.int64)])
                start = done
                continue
            raise DivergenceError(
                f"queue exceeded guard {cfg.guard} at slot {t0 + done} (epsilon={spec.epsilon})",
                epsilon=spec.epsilon, slot=t0 + done)
        t0 += rows

    lengths = np.full(cfg.batch_count, batch_len, dtype=np.int64)
    lengths[-1] = n_post - batch_len * (cfg.batch_count - 1)
    if integral:
        nz = np.flatnonzero(hist)
        hist = hist[: nz[-1] + 1] if len(nz) else hist[:1]
    return _Accum(
        sums=sums, lengths=lengths,
        hist=hist if integral else None,
        buf=buf[: counters[1]].copy() if not integral else None,
        sched_counts=sched_counts, violations=int(counters[0]), final_q=q,
    )


def _simulate_task(args):
    spec, cfg, rep = args
    return simulate(spec, cfg, rep)


def batch_mean_ci(batch_sums: np.ndarray, lengths: np.ndarray, level: float = 0.95) -> tuple[float, float]:
    """Overall mean and the batch-means confidence half-width."""
    means = batch_sums / lengths
    k = len(means)
    total = float(batch_sums.sum() / lengths.sum())
    if k < 2:
        return total, math.inf
    sd = float(np.std(means, ddof=1))
    half = float(stats.t.ppf(0.5 + level / 2, k - 1)) * sd / math.sqrt(k)
    return total, half


@dataclass
class SteadyStateEstimate:
    kind: str
    epsilon: float
    horizon: int
    burn_in: int
    n_post: int
    scaled_values: np.ndarray
    scaled_weights: np.ndarray | None
    mean_scaled: float
    mean_u: float
    mean_u2: float
    cross_term: float
    perp_moments: dict[float, float]
    face_saturation: float | None
    mean_service_c: float
    drift_residual: float
    batch_ci: dict[str, float]
    violations: int
    schedule_counts: tuple[int, ...]
    target_rate: float
    drift_gap: float
    c_norm2: float
    face_b: float | None = None
    schedule_levels: tuple[float, ...] = ()
    n_batches: int = 0
    dw: float = field(default=math.nan)

    @property
    def target_mean(self) -> float:
        return 1.0 / self.target_rate

    def to_json_dict(self) -> dict:
        perp = {_order_key(r): v for r, v in self.perp_moments.items()}
        return {
            "epsilon": self.epsilon,
            "horizon": self.horizon,
            "burn_in": self.burn_in,
            "mean_scaled": self.mean_scaled,
            "target_mean": self.target_mean,
            "dw": self.dw,
            "mean_u": self.mean_u,
            "mean_u2": self.mean_u2,
            "cross_term": self.cross_term,
            "perp_moments": perp,
            "face_saturation": self.face_saturation,
            "orthogonality_violations": self.violations,
            "ci": dict(sorted(self.batch_ci.items())),
        }


def _order_key(r: float) -> str:
    return str(int(r)) if float(r).is_integer() else repr(float(r))


def finalize(spec: SystemSpec, cfg: EstimatorConfig, acc: _Accum) -> SteadyStateEstimate:
    eps = spec.epsilon
    rows = {name: i for i, name in enumerate(FIXED_ROWS)}
    lengths = acc.lengths
    ci = {}

    def est(row, name, scale=1.0):
        m, h = batch_mean_ci(acc.sums[row] * scale, lengths)
        ci[name] = h
        return m

    mean_scaled = est(rows["stat"], "mean_scaled", eps)
    mean_u = est(rows["u"], "mean_u")
    mean_u2 = est(rows["u2"], "mean_u2")
    cross = est(rows["cross"], "cross_term")
    serv = est(rows["serv"], "mean_service_c")
    resid_sums = acc.sums[rows["u"]] - acc.sums[rows["serv"]] + spec.arrival_rate_c * lengths
    resid, ci["drift_residual"] = batch_mean_ci(resid_sums, lengths)
    sat = est(rows["sat"], "face_saturation") if spec.kind == "schedule" else None
    perp = {}
    for i, r in enumerate(cfg.perp_orders):
        perp[r] = est(kernel.N_FIXED + i, f"perp_m{_order_key(r)}")

    if acc.hist is not None:
        ks = np.flatnonzero(acc.hist)
        values = ks * eps * 1.0
        weights = acc.hist[ks].astype(float)
    else:
        values = acc.buf * eps
        weights = None

    levels = ()
    if spec.kind == "schedule":
        levels = tuple(float(x) for x in spec.service_set.as_array() @ spec.c)

    out = SteadyStateEstimate(
        kind=spec.kind, epsilon=eps, horizon=cfg.horizon, burn_in=cfg.burn_in_for(eps),
        n_post=acc.n_post, scaled_values=values, scaled_weights=weights,
        mean_scaled=mean_scaled, mean_u=mean_u, mean_u2=mean_u2, cross_term=cross,
        perp_moments=perp, face_saturation=sat, mean_service_c=serv, drift_residual=resid,
        batch_ci=ci, violations=acc.violations,
        schedule_counts=tuple(int(x) for x in acc.sched_counts),
        target_rate=spec.target_rate, drift_gap=spec.drift_gap, c_norm2=spec.c_norm2,
        face_b=spec.face.b if spec.face is not None else None, schedule_levels=levels,
        n_batches=len(lengths),
    )
    if math.isfinite(spec.target_rate) and len(values):
        out.dw = wasserstein_to_exp(values, spec.target_rate, weights)
    return out


def run_steady_state(spec: SystemSpec, cfg: EstimatorConfig, workers: int = 1) -> SteadyStateEstimate:
    """Simulate all replications of ``spec`` and reduce them to one estimate.

    Replications are merged in index order, so the result does not depend
    on ``workers``.
    """
    tasks = [(spec, cfg, rep) for rep in range(cfg.replications)]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_simulate_task, tasks))
    else:
        parts = [_simulate_task(t) for t in tasks]
    return finalize(spec, cfg, _merge(parts))


# --- distances and identities ----------------------------------------------

def wasserstein_to_exp(samples, rate: float, weights=None) -> float:
    """Exact W1 distance between the (weighted) empirical law and Exp(rate).

    Integrates |F_n(t) - (1 - exp(-rate t))| piecewise over the sorted
    sample, splitting each interval where the exponential CDF crosses the
    empirical level.
    """
    x = np.asarray(samples, dtype=float).ravel()
    if x.size == 0:
        raise ValidationError("no samples")
    if not rate > 0:
        raise ValidationError("rate must be positive")
    if np.any(x < 0) or not np.all(np.isfinite(x)):
        raise ValidationError("samples must be finite and non-negative")
    if weights is None:
        w = np.ones_like(x)
    else:
        w = np.asarray(weights, dtype=float).ravel()
        if w.shape != x.shape or np.any(w < 0) or w.sum() <= 0:
            raise ValidationError("weights must be non-negative, positive in total, one per sample")
    vals, inv = np.unique(x, return_inverse=True)
    mass = np.bincount(inv, weights=w)
    level = np.cumsum(mass) / mass.sum()

    # [0, v_0): F = 0
    total = vals[0] + math.expm1(-rate * vals[0]) / rate
    # [v_j, v_{j+1}): F = level_j
    if len(vals) > 1:
        a, b, F = vals[:-1], vals[1:], level[:-1]
        with np.errstate(divide="ignore"):
            cross = np.where(F < 1.0, -np.log1p(-np.minimum(F, 1.0)) / rate, np.inf)
        m = np.clip(cross, a, b)
        total += float(np.sum(_signed(F, a, m, rate) - _signed(F, m, b, rate)))
    # [v_last, inf): F = 1
    total += math.exp(-rate * vals[-1]) / rate
    return float(total)


def _signed(F, a, b, rate):
    """Integral of F - (1 - exp(-rate t)) over [a, b]."""
    return (F - 1.0) * (b - a) - np.exp(-rate * a) * np.expm1(-rate * (b - a)) / rate


@dataclass(frozen=True)
class DriftReport:
    epsilon: float
    mean_u: float
    mean_u_ci: float
    u_minus_eps: float
    contains_eps: bool
    gap_bound_ok: bool
    drift_residual: float
    drift_residual_ci: float
    residual_ok: bool
    violations: int
    cross_term: float
    cross_term_ci: float

    @property
    def ok(self) -> bool:
        return self.residual_ok and self.gap_bound_ok and self.violations == 0


def drift_identities(est: SteadyStateEstimate, epsilon: float, level: float = 0.95) -> DriftReport:
    """Zero-drift identities of the statistic ``<c, Q>`` in steady state.

    ``E[<c,U>] = E[<c,S>] - <c,lambda>`` always; for the single server and
    load balancing the offered service has mean mu_sum so this is
    ``E[u] = epsilon``.  Under MaxWeight only ``E[<c,U>] <= epsilon ||c||^2``
    holds, with equality when the schedule stays on the face.

    Interval half-widths are the stored 95% batch-means ones rescaled to
    ``level`` (use a Bonferroni level when checking many runs jointly).
    """
    scale = 1.0
    if level != 0.95:
        dof = max(est.n_batches - 1, 1)
        scale = float(stats.t.ppf(0.5 + level / 2, dof) / stats.t.ppf(0.975, dof))
    h = est.batch_ci["mean_u"] * scale
    hr = est.batch_ci["drift_residual"] * scale
    diff = est.mean_u - epsilon
    gap = epsilon * est.c_norm2 if est.kind == "schedule" else epsilon
    return DriftReport(
        epsilon=epsilon, mean_u=est.mean_u, mean_u_ci=h, u_minus_eps=diff,
        contains_eps=abs(diff) <= h,
        gap_bound_ok=est.mean_u - h <= gap,
        drift_residual=est.drift_residual, drift_residual_ci=hr,
        residual_ok=abs(est.drift_residual) <= hr,
        violations=est.violations,
        cross_term=est.cross_term, cross_term_ci=est.batch_ci["cross_term"] * scale,
    )


def u_squared_threshold(epsilon: float, cert: LightTailCert, fourth_moment_s: float) -> tuple[float, float]:
    """Truncation level s' = log(D / eps^2) / theta and the E[u^2] bound it gives.

    bound = eps * s' + sqrt(E[s^4]) * sqrt(D * exp(-theta * s')).
    """
    if not epsilon > 0:
        raise ValidationError("epsilon must be positive")
    s_prime = math.log(cert.bound / epsilon**2) / cert.theta
    if s_prime <= 0:
        if s_prime < 0:
            warnings.warn(f"eps^2 >= D ({epsilon**2} >= {cert.bound}); clamping s' to 0", stacklevel=2)
        s_prime = 0.0
    bound = epsilon * s_prime + math.sqrt(fourth_moment_s) * math.sqrt(cert.bound * math.exp(-cert.theta * s_prime))
    return s_prime, bound


def ssc_moments(perp_norms, orders, batch_count: int = 32) -> dict[float, tuple[float, float]]:
    """Batch-means estimates of E||Q_perp||^r from a trajectory of norms."""
    x = np.asarray(perp_norms, dtype=float)
    if x.size < batch_count:
        raise ValidationError("fewer samples than batches")
    edges = np.linspace(0, x.size, batch_count + 1).astype(int)
    lengths = np.diff(edges)
    out = {}
    for r in orders:
        if r == 0:
            out[r] = (1.0, 0.0)
            continue
        p = x ** r
        out[r] = batch_mean_ci(np.add.reduceat(p, edges[:-1]), lengths)
    return out
