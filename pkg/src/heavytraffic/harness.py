"""Epsilon sweeps, convergence-rate fits and state-space-collapse checks."""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .control import CapacityFace
from .errors import DivergenceError, ValidationError
from .estimation import EstimatorConfig, SteadyStateEstimate, run_steady_state
from .system import SystemTemplate

SWEEP_COLUMNS = ("epsilon", "dw", "dw_over_eps", "mean_scaled", "target_mean", "mean_u",
                 "mean_u2", "cross_term", "face_saturation", "perp_m2")
MODELS = ("linear", "eps_log")


@dataclass(frozen=True)
class SweepRow:
    epsilon: float
    dw: float
    dw_over_eps: float
    mean_scaled: float
    target_mean: float
    mean_u: float
    mean_u2: float
    cross_term: float
    face_saturation: float | None
    perp_m2: float | None


@dataclass(frozen=True)
class FitResult:
    model: str
    K: float
    r2: float


@dataclass
class SweepResult:
    rows: list[SweepRow]
    fits: dict[str, FitResult] = field(default_factory=dict)
    estimates: list[SteadyStateEstimate] = field(default_factory=list, repr=False)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows], dtype=float)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(SWEEP_COLUMNS)
        for r in self.rows:
            w.writerow(["" if getattr(r, k) is None else repr(float(getattr(r, k))) for k in SWEEP_COLUMNS])
        return buf.getvalue()

    def to_long_csv(self) -> str:
        """One ``epsilon,metric,value`` line per cell, for plotting tools."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("epsilon", "metric", "value"))
        for r in self.rows:
            for k in SWEEP_COLUMNS[1:]:
                v = getattr(r, k)
                if v is not None:
                    w.writerow((repr(r.epsilon), k, repr(float(v))))
        return buf.getvalue()

    def fit_report(self) -> dict:
        return {m: asdict(f) for m, f in sorted(self.fits.items())}


def _row(est: SteadyStateEstimate) -> SweepRow:
    return SweepRow(
        epsilon=est.epsilon, dw=est.dw, dw_over_eps=est.dw / est.epsilon,
        mean_scaled=est.mean_scaled, target_mean=est.target_mean,
        mean_u=est.mean_u, mean_u2=est.mean_u2, cross_term=est.cross_term,
        face_saturation=est.face_saturation, perp_m2=est.perp_moments.get(2.0),
    )


def _sweep_point(args):
    template, eps, cfg = args
    try:
        return run_steady_state(template.at(eps), cfg)
    except DivergenceError as exc:
        raise DivergenceError(f"run at epsilon={eps} diverged: {exc}", epsilon=eps, slot=exc.slot) from exc


def sweep(template: SystemTemplate, eps_grid, cfg: EstimatorConfig, workers: int = 1) -> SweepResult:
    """Run one steady-state estimate per epsilon, rows ordered by decreasing epsilon."""
    grid = sorted({float(e) for e in eps_grid}, reverse=True)
    if not grid:
        raise ValidationError("empty epsilon grid")
    for e in grid:
        template.rates(e)  # fail early on infeasible rates
    tasks = [(template, e, cfg) for e in grid]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            ests = list(pool.map(_sweep_point, tasks))
    else:
        ests = [_sweep_point(t) for t in tasks]
    result = SweepResult(rows=[_row(e) for e in ests], estimates=ests)
    if len(result.rows) >= 2:
        for m in MODELS:
            K, r2 = fit_rate(result, m)
            result.fits[m] = FitResult(m, K, r2)
    return result


def fit_through_origin(x, y) -> tuple[float, float]:
    """Least squares y ~ K x with no intercept; r2 against the centred total sum of squares."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) < 2:
        raise ValidationError("need at least two points to fit")
    K = float(x @ y / (x @ x))
    ss_res = float(np.sum((y - K * x) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0.0:
        return K, 1.0 if ss_res == 0.0 else -math.inf
    return K, 1.0 - ss_res / ss_tot


def rate_regressor(eps, model: str) -> np.ndarray:
    eps = np.asarray(eps, dtype=float)
    if model == "linear":
        return eps
    if model == "eps_log":
        return eps * np.log(1.0 / eps)
    raise ValidationError(f"unknown rate model {model!r}")


def fit_rate(result, model: str = "linear") -> tuple[float, float]:
    """Fit dw against eps (``linear``) or eps*log(1/eps) (``eps_log``) through the origin."""
    rows = result.rows if isinstance(result, SweepResult) else result
    if len(rows) < 2:
        raise ValidationError("need at least two sweep rows to fit a rate")
    eps = [r.epsilon for r in rows]
    return fit_through_origin(rate_regressor(eps, model), [r.dw for r in rows])


# --- state-space collapse constants -----------------------------------------

@dataclass(frozen=True)
class SscBoundConstants:
    N: int
    A_max: int
    S_max: int
    delta: float
    r: int
    L: float
    D: float
    kappa: float
    eta: float
    V_r: float
    M_r_bound: float
    lemma2_bound: float


def stirling_factor(r: int) -> float:
    """r^(r + 1/2) e^(1 - r), an upper bound on r! for r >= 1 (and 0! = 1)."""
    if r == 0:
        return 1.0
    return r ** (r + 0.5) * math.exp(1 - r)


def ssc_bound_constants(N: int, A_max: int, S_max: int, delta: float, r: int) -> SscBoundConstants:
    """Moment bound constants for ||Q_perp|| from a one-slot drift condition.

    L = N m^2, D = sqrt(N) m with m = max(A_max, S_max); kappa = 2L/delta,
    eta = delta/2; V_r = (4L/delta + (8D^2 + 4D delta)/delta)^r.
    """
    if not delta > 0:
        raise ValidationError("delta must be positive")
    if r < 0 or int(r) != r:
        raise ValidationError("moment order r must be a non-negative integer")
    r = int(r)
    m = max(A_max, S_max)
    L = N * m * m
    D = math.sqrt(N) * m
    kappa = 2.0 * L / delta
    eta = delta / 2.0
    V_r = (4.0 * L / delta + (8.0 * D * D + 4.0 * D * delta) / delta) ** r
    lemma2 = (2.0 * kappa) ** r + (4.0 * D) ** r * ((D + eta) / eta) ** r * math.factorial(r)
    return SscBoundConstants(N=N, A_max=A_max, S_max=S_max, delta=delta, r=r, L=L, D=D,
                             kappa=kappa, eta=eta, V_r=V_r, M_r_bound=V_r * stirling_factor(r),
                             lemma2_bound=lemma2)


@dataclass(frozen=True)
class SscCheck:
    r: int
    estimate: float
    M_r_bound: float
    lemma2_bound: float

    @property
    def below_M(self) -> bool:
        return self.estimate <= self.M_r_bound

    @property
    def below_lemma2(self) -> bool:
        return self.estimate <= self.lemma2_bound

    @property
    def passed(self) -> bool:
        return self.below_M and self.below_lemma2


def ssc_empirical_check(est: SteadyStateEstimate, consts: SscBoundConstants, r=None) -> SscCheck:
    r = consts.r if r is None else r
    if r != consts.r:
        raise ValidationError(f"constants were computed for r={consts.r}, not r={r}")
    if r == 0:
        value = 1.0
    elif float(r) in est.perp_moments:
        value = est.perp_moments[float(r)]
    else:
        raise ValidationError(f"estimate carries no perpendicular moment of order {r}")
    return SscCheck(r=int(r), estimate=value, M_r_bound=consts.M_r_bound, lemma2_bound=consts.lemma2_bound)


# --- face saturation ---------------------------------------------------------

@dataclass(frozen=True)
class FaceSaturation:
    epsilon: float
    one_minus_pi: float
    moment: float
    r_prime: float


def face_saturation_check(est: SteadyStateEstimate, face: CapacityFace, r_prime: float,
                          epsilon: float | None = None) -> FaceSaturation:
    """Empirical P(<c,S> != b) and E[(b - <c,S>)^r'] from the schedule frequencies."""
    if not r_prime > 1:
        raise ValidationError("r' must exceed 1")
    counts = np.asarray(est.schedule_counts, dtype=float)
    if counts.sum() == 0:
        raise ValidationError("estimate has no schedule counts (not a MaxWeight run)")
    freq = counts / counts.sum()
    gaps = np.maximum(face.b - np.asarray(est.schedule_levels), 0.0)
    on = np.abs(gaps) <= 1e-9
    return FaceSaturation(
        epsilon=est.epsilon if epsilon is None else epsilon,
        one_minus_pi=float(freq[~on].sum()),
        moment=float(np.sum(freq * gaps**r_prime)),
        r_prime=r_prime,
    )


@dataclass(frozen=True)
class ScalingFit:
    slope: float
    r2: float

    def linear(self, min_r2: float) -> bool:
        return self.slope > 0 and self.r2 >= min_r2


def face_saturation_sweep(result: SweepResult, face: CapacityFace, r_prime: float = 2.0):
    """Per-row saturation statistics plus through-origin fits of both against eps."""
    reports = [face_saturation_check(e, face, r_prime) for e in result.estimates]
    eps = [r.epsilon for r in reports]
    gap = ScalingFit(*fit_through_origin(eps, [r.one_minus_pi for r in reports]))
    mom = ScalingFit(*fit_through_origin(eps, [r.moment for r in reports]))
    return reports, gap, mom


def cross_term_scaling(result: SweepResult) -> ScalingFit:
    """Fit of the measured cross term against eps (its g(eps) growth)."""
    return ScalingFit(*fit_through_origin(result.column("epsilon"), result.column("cross_term")))


@dataclass(frozen=True)
class CollapseReport:
    perp_ratio: float
    parallel_growth: tuple[float, ...]

    def witnessed(self, max_perp_ratio: float = 2.0, growth_band=(2.0 / 3.0, 1.5)) -> bool:
        lo, hi = growth_band
        return self.perp_ratio < max_perp_ratio and all(lo <= g <= hi for g in self.parallel_growth)


def collapse_check(result: SweepResult, order: float = 2.0) -> CollapseReport:
    """Spread of E||Q_perp||^r across the grid and growth of E<c,Q> against 1/eps.

    ``perp_ratio`` is max/min of the perpendicular moment over the grid.
    ``parallel_growth[i]`` is E<c,Q> at row i+1 over row i, divided by the
    1/eps prediction eps_i / eps_{i+1}; it is 1 for an exact 1/eps law.
    """
    perp = np.array([e.perp_moments[float(order)] for e in result.estimates])
    scaled = result.column("mean_scaled")
    growth = tuple(float(scaled[i + 1] / scaled[i]) for i in range(len(scaled) - 1))
    pos = perp[perp > 0]
    ratio = float(pos.max() / pos.min()) if len(pos) else 1.0
    return CollapseReport(perp_ratio=ratio, parallel_growth=growth)
