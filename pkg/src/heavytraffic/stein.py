"""Stein equation for the reflected Brownian motion generator.

For drift ``theta`` and variance ``sigma2`` the equation

    0.5 * sigma2 * f''(x) - theta * f'(x) = h(x) - E[h(Z)],   f'(0) = 0,

with Z ~ Exp(2 theta / sigma2) has the explicit solution

    f'(x)  = -(2/sigma2) * int_x^inf (h(t) - E h(Z)) exp(-k (t - x)) dt
    f''(x) = -(2/sigma2) * int_x^inf h'(t) exp(-k (t - x)) dt

where k = 2 theta / sigma2.  Both integrals are evaluated by adaptive
quadrature; f''' follows from differentiating the equation once.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import integrate

from .errors import NumericalError, ValidationError

TAIL_WEIGHT = 1e-14
QUAD_OPTS = dict(epsabs=1e-13, epsrel=1e-12, limit=200)


@dataclass(frozen=True)
class SteinParams:
    sigma2: float
    theta: float

    def __post_init__(self):
        if not self.sigma2 > 0 or not self.theta > 0:
            raise ValidationError(f"need sigma2 > 0 and theta > 0, got {self.sigma2}, {self.theta}")

    @property
    def rate(self) -> float:
        return 2.0 * self.theta / self.sigma2

    @property
    def mean(self) -> float:
        return self.sigma2 / (2.0 * self.theta)


def stein_rate(params: SteinParams) -> float:
    return params.rate


@dataclass(frozen=True)
class TestFunction:
    """A Lipschitz test function with its (one-sided) derivative and kinks."""

    h: Callable[[float], float]
    dh: Callable[[float], float]
    lip_const: float
    breakpoints: tuple[float, ...] = ()
    name: str = "h"

    __test__ = False  # not a pytest class

    def __call__(self, x):
        return self.h(x)


def identity() -> TestFunction:
    return TestFunction(h=lambda x: x, dh=lambda x: 1.0, lip_const=1.0, name="identity")


def constant(value: float) -> TestFunction:
    return TestFunction(h=lambda x: value, dh=lambda x: 0.0, lip_const=0.0, name="constant")


def soft_clip(scale: float = 1.0) -> TestFunction:
    """scale * tanh(x / scale): slope 1 at the origin, saturating at ``scale``."""
    if not scale > 0:
        raise ValidationError("soft-clip scale must be positive")
    return TestFunction(h=lambda x: scale * math.tanh(x / scale),
                        dh=lambda x: 1.0 / math.cosh(x / scale) ** 2,
                        lip_const=1.0, name="softclip")


def piecewise_linear(knots: Sequence[tuple[float, float]]) -> TestFunction:
    """Linear interpolation through ``(x, y)`` knots, constant past the ends."""
    pts = sorted((float(x), float(y)) for x, y in knots)
    if len(pts) < 2:
        raise ValidationError("piecewise-linear h needs at least two knots")
    xs = np.array([p[0] for p in pts])
    ys = np.array([p[1] for p in pts])
    if np.any(np.diff(xs) <= 0):
        raise ValidationError("knot abscissae must be distinct")
    slopes = np.diff(ys) / np.diff(xs)

    def h(x):
        return float(np.interp(x, xs, ys))

    def dh(x):
        if x < xs[0] or x >= xs[-1]:
            return 0.0
        return float(slopes[np.searchsorted(xs, x, side="right") - 1])

    return TestFunction(h=h, dh=dh, lip_const=float(np.max(np.abs(slopes))),
                        breakpoints=tuple(xs.tolist()), name="pwl")


def random_piecewise_linear(rng: np.random.Generator, n_knots: int = 8, x_max: float = 5.0,
                            lip: float = 1.0) -> TestFunction:
    """Random Lip(lip) function: uniform knots on [0, x_max], slopes in [-lip, lip]."""
    xs = np.concatenate([[0.0], np.sort(rng.uniform(0.0, x_max, n_knots - 1))])
    slopes = rng.uniform(-lip, lip, n_knots - 1)
    ys = np.concatenate([[0.0], np.cumsum(slopes * np.diff(xs))])
    return piecewise_linear(list(zip(xs, ys)))


@dataclass(frozen=True)
class SteinSolution:
    grid: np.ndarray
    f1: np.ndarray
    f2: np.ndarray
    f3: np.ndarray
    hhat: np.ndarray
    params: SteinParams
    expected_h: float

    @property
    def residual(self) -> np.ndarray:
        p = self.params
        return 0.5 * p.sigma2 * self.f2 - p.theta * self.f1 - self.hhat


def make_grid(params: SteinParams, points: int = 2048, span: float = 12.0, refine: float = 4.0) -> np.ndarray:
    """``points`` nodes on [0, span * E[Z]], geometrically denser near 0."""
    u = np.linspace(0.0, 1.0, points)
    return span * params.mean * np.expm1(refine * u) / math.expm1(refine)


def _quad(fn, a, b, points=()):
    inside = sorted(p for p in points if a < p < b)
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            val, _ = integrate.quad(fn, a, b, points=inside or None, **QUAD_OPTS)
        except (integrate.IntegrationWarning, ValueError, OverflowError) as exc:
            raise NumericalError(f"quadrature on [{a}, {b}] failed: {exc}") from exc
    if not math.isfinite(val):
        raise NumericalError(f"quadrature on [{a}, {b}] is not finite")
    return val


def expected_h(h: TestFunction, params: SteinParams) -> float:
    """E[h(Z)] for Z ~ Exp(rate), with h shifted so that h(0) = 0."""
    k = params.rate
    tail = -math.log(TAIL_WEIGHT) / k
    h0 = h.h(0.0)
    val = _quad(lambda z: (h.h(z) - h0) * k * math.exp(-k * z), 0.0, tail, h.breakpoints)
    # the truncated tail must be negligible, otherwise h is not integrable at this rate
    edge = abs(h.h(tail) - h0) * k * TAIL_WEIGHT
    if not math.isfinite(edge) or edge > 1e-8 * max(1.0, abs(val)):
        raise NumericalError(f"h grows too fast to integrate against Exp({k})")
    return val


def solve_stein(h: TestFunction, params: SteinParams, grid: np.ndarray | None = None) -> SteinSolution:
    if grid is None:
        grid = make_grid(params)
    grid = np.asarray(grid, dtype=float)
    k = params.rate
    c = 2.0 / params.sigma2
    tail = -math.log(TAIL_WEIGHT) / k
    h0 = h.h(0.0)
    eh = expected_h(h, params)

    f1 = np.empty_like(grid)
    f2 = np.empty_like(grid)
    for i, x in enumerate(grid):
        pts = [p for p in h.breakpoints]
        # int_x^{x+tail} h(t) e^{-k(t-x)} dt, minus the constant part analytically
        raw = _quad(lambda t: (h.h(t) - h0) * math.exp(-k * (t - x)), x, x + tail, pts)
        f1[i] = -c * (raw - eh * (-math.expm1(-k * tail)) / k)
        f2[i] = -c * _quad(lambda t: h.dh(t) * math.exp(-k * (t - x)), x, x + tail, pts)
    dh = np.array([h.dh(x) for x in grid])
    f3 = c * (dh + params.theta * f2)
    hhat = np.array([h.h(x) - h0 for x in grid]) - eh
    return SteinSolution(grid=grid, f1=f1, f2=f2, f3=f3, hhat=hhat, params=params, expected_h=eh)


@dataclass(frozen=True)
class BoundReport:
    slack_f1: float
    slack_f2: float
    slack_f3: float
    sup_f2: float
    sup_f3: float
    max_residual: float
    tol: float

    @property
    def holds(self) -> bool:
        return min(self.slack_f1, self.slack_f2, self.slack_f3) >= -self.tol

    def to_json_dict(self) -> dict:
        return {
            "slack_f1": self.slack_f1, "slack_f2": self.slack_f2, "slack_f3": self.slack_f3,
            "sup_f2": self.sup_f2, "sup_f3": self.sup_f3,
            "max_residual": self.max_residual, "tol": self.tol, "holds": self.holds,
        }


def gradient_bounds_check(sol: SteinSolution, lip_const: float, tol: float = 1e-6) -> BoundReport:
    """Smallest margin on the grid of each gradient bound (negative = violated).

    |f'(x)| <= (sigma2 + 2 theta x) / (2 theta^2) * L,  |f''| <= L / theta,
    |f'''| <= 4 L / sigma2.
    """
    s2, th = sol.params.sigma2, sol.params.theta
    b1 = (s2 + 2.0 * th * sol.grid) / (2.0 * th * th) * lip_const
    return BoundReport(
        slack_f1=float(np.min(b1 - np.abs(sol.f1))),
        slack_f2=float(lip_const / th - np.max(np.abs(sol.f2))),
        slack_f3=float(4.0 * lip_const / s2 - np.max(np.abs(sol.f3))),
        sup_f2=float(np.max(np.abs(sol.f2))),
        sup_f3=float(np.max(np.abs(sol.f3))),
        max_residual=float(np.max(np.abs(sol.residual))),
        tol=tol,
    )


def characterizing_residual(f1: Callable[[float], float], f2: Callable[[float], float],
                            f1_at_0: float, params: SteinParams) -> float:
    """E[0.5 sigma2 f''(Z) - theta f'(Z) + theta f'(0)] for Z ~ Exp(2 theta / sigma2)."""
    k = params.rate
    s2, th = params.sigma2, params.theta

    def integrand(z):
        return (0.5 * s2 * f2(z) - th * f1(z) + th * f1_at_0) * k * math.exp(-k * z)

    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            val, _ = integrate.quad(integrand, 0.0, math.inf, **QUAD_OPTS)
        except (integrate.IntegrationWarning, OverflowError) as exc:
            raise NumericalError(f"characterizing-equation quadrature diverged: {exc}") from exc
    if not math.isfinite(val):
        raise NumericalError("characterizing-equation quadrature is not finite")
    return val
