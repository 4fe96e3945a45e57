"""Closed-form theory oracles for the aggregation bound and tip dynamics.

Covers the convergence-bound surrogate P(x) = 1/(Ax) + Bx + Cx^2 + D, its
stationarity cubic, a real-root cubic solver with the discriminant
classification, the optimal mean update weight, and the per-interval tip
approval probabilities under uniform-in-round approval times.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict

import numpy as np

from .learning import StylePath


class AnalysisError(ValueError):
    """Invalid bound parameters or degenerate equations."""


@dataclass(frozen=True)
class BoundParams:
    """Inputs of the convergence bound.

    ``h_min``/``h_max`` are the extreme local iteration counts, ``k_max``
    the maximal interval between two updates, ``horizon`` the global
    training time.
    """

    gamma: float
    epsilon: float
    horizon: float
    h_min: int
    h_max: int
    k_max: int

    def __post_init__(self):
        if self.gamma <= 0 or self.epsilon <= 0 or self.horizon <= 0:
            raise AnalysisError("gamma, epsilon and horizon must be positive")
        if not 1 <= self.h_min <= self.h_max:
            raise AnalysisError("need 1 <= h_min <= h_max")
        if self.k_max < 1:
            raise AnalysisError("k_max must be >= 1")

    @property
    def delta(self) -> float:
        return self.h_max / self.h_min


@dataclass(frozen=True)
class CubicCoeffs:
    """Coefficients of the bound surrogate; all positive for valid inputs."""

    a: float
    b: float
    c: float
    d: float

    @classmethod
    def from_params(cls, p: BoundParams) -> "CubicCoeffs":
        delta = p.delta
        return cls(
            a=1.0 / (p.gamma * p.epsilon * p.horizon * p.h_min),
            b=p.k_max * delta / p.epsilon,
            c=p.gamma * p.k_max**2 * delta * p.h_max / p.epsilon,
            d=(p.gamma * delta * p.h_max**2 + p.gamma * delta * p.k_max**2 * p.h_max)
            / p.epsilon,
        )


def bound_value(x: float, coeffs: CubicCoeffs) -> float:
    """P(x) = 1/(Ax) + Bx + Cx^2 + D; defined for positive weights only."""
    if x <= 0:
        raise AnalysisError("the bound is defined for x > 0")
    return 1.0 / (coeffs.a * x) + coeffs.b * x + coeffs.c * x**2 + coeffs.d


def bound_derivative(x: float, coeffs: CubicCoeffs) -> float:
    if x <= 0:
        raise AnalysisError("the bound is defined for x > 0")
    return -1.0 / (coeffs.a * x**2) + 2.0 * coeffs.c * x + coeffs.b


@dataclass(frozen=True)
class Cubic:
    """a x^3 + b x^2 + c x + d."""

    a: float
    b: float
    c: float
    d: float

    def __call__(self, x: float) -> float:
        return ((self.a * x + self.b) * x + self.c) * x + self.d


def stationarity_cubic(coeffs: CubicCoeffs) -> Cubic:
    """The cleared form of P'(x) = 0: (2AC) x^3 + (AB) x^2 - 1 = 0."""
    return Cubic(2.0 * coeffs.a * coeffs.c, coeffs.a * coeffs.b, 0.0, -1.0)


@dataclass(frozen=True)
class CubicRoots:
    roots: tuple[float, ...]
    discriminant: float
    case: str  # "triple", "double", "one-real", "three-real"


def _newton_polish(cubic: Cubic, x: float, steps: int = 2) -> float:
    for _ in range(steps):
        f = cubic(x)
        fp = (3.0 * cubic.a * x + 2.0 * cubic.b) * x + cubic.c
        if fp == 0:
            break
        x -= f / fp
    return x


def cardano_solve(a: float, b: float, c: float, d: float) -> CubicRoots:
    """All real roots of a cubic via the discriminant classification.

    Uses the auxiliary quantities A0 = b^2 - 3ac, B0 = bc - 9ad,
    C0 = c^2 - 3bd and the discriminant B0^2 - 4 A0 C0: zero (within a
    relative tolerance) gives a simple root plus a double root, positive
    one real root, negative three distinct real roots. Roots are polished
    with two Newton steps and returned sorted, double roots listed twice.
    """
    if a == 0:
        raise AnalysisError("leading coefficient must be non-zero")
    cubic = Cubic(a, b, c, d)
    a0 = b * b - 3.0 * a * c
    b0 = b * c - 9.0 * a * d
    c0 = c * c - 3.0 * b * d
    disc = b0 * b0 - 4.0 * a0 * c0
    scale = b0 * b0 + 4.0 * abs(a0 * c0)

    if a0 == 0 and b0 == 0:
        root = -b / (3.0 * a)
        return CubicRoots((root, root, root), disc, "triple")

    if abs(disc) <= 1e-8 * scale and a0 != 0:
        k = b0 / a0
        simple = _newton_polish(cubic, -b / a + k)
        double = -k / 2.0
        roots = tuple(sorted((simple, double, double)))
        return CubicRoots(roots, disc, "double")

    if disc > 0:
        y1 = a0 * b + 1.5 * a * (-b0 + math.sqrt(disc))
        y2 = a0 * b + 1.5 * a * (-b0 - math.sqrt(disc))
        root = (-b - math.copysign(abs(y1) ** (1 / 3), y1) - math.copysign(abs(y2) ** (1 / 3), y2)) / (3.0 * a)
        return CubicRoots((_newton_polish(cubic, root),), disc, "one-real")

    # disc < 0: three distinct real roots (requires A0 > 0)
    t = (2.0 * a0 * b - 3.0 * a * b0) / (2.0 * a0 * math.sqrt(a0))
    t = min(1.0, max(-1.0, t))
    theta = math.acos(t)
    sqrt_a0 = math.sqrt(a0)
    roots = sorted(
        _newton_polish(
            cubic, (-b - 2.0 * sqrt_a0 * math.cos((theta + 2.0 * math.pi * k) / 3.0)) / (3.0 * a)
        )
        for k in range(3)
    )
    return CubicRoots(tuple(roots), disc, "three-real")


def required_gamma(epsilon: float, horizon: float, h_min: int, h_max: int, k_max: int) -> float:
    """Learning rate that collapses the stationarity cubic's discriminant."""
    delta = h_max / h_min
    return (1.0 / (27.0 * epsilon**2 * delta * h_min**3 * horizon * k_max)) ** (1.0 / 3.0)


@dataclass(frozen=True)
class OptimalAlpha:
    alpha_star: float
    gamma_required: float
    on_condition: bool
    double_root: float | None
    coeffs: CubicCoeffs
    cubic: Cubic


def optimal_alpha(
    gamma: float,
    epsilon: float,
    horizon: float,
    h_min: int,
    h_max: int,
    k_max: int,
    rel_tol: float = 1e-6,
) -> OptimalAlpha:
    """Minimizer of the bound over positive weights.

    Under the zero-discriminant learning rate the minimizer has the closed
    form (9/2) gamma^2 epsilon^2 h_min^2 T = (epsilon^2 T / (8 delta^2
    K^2))^(1/3), and the cubic's negative double root -9 gamma^2 epsilon^2
    h_min^2 T comes along as a cross-check. Off that condition the
    positive root is found numerically and flagged.
    """
    params = BoundParams(gamma, epsilon, horizon, h_min, h_max, k_max)
    coeffs = CubicCoeffs.from_params(params)
    cubic = stationarity_cubic(coeffs)
    gamma_req = required_gamma(epsilon, horizon, h_min, h_max, k_max)
    on_condition = abs(gamma - gamma_req) <= rel_tol * gamma_req
    if on_condition:
        alpha_star = 4.5 * gamma**2 * epsilon**2 * h_min**2 * horizon
        double_root = -9.0 * gamma**2 * epsilon**2 * h_min**2 * horizon
        return OptimalAlpha(alpha_star, gamma_req, True, double_root, coeffs, cubic)
    solution = cardano_solve(cubic.a, cubic.b, cubic.c, cubic.d)
    positive = [r for r in solution.roots if r > 0]
    if not positive:
        raise AnalysisError("stationarity cubic has no positive root")
    # P is strictly convex on x > 0, so the positive root is unique
    return OptimalAlpha(positive[0], gamma_req, False, None, coeffs, cubic)


def bound_report(
    gamma: float | None,
    epsilon: float,
    horizon: float,
    h_min: int,
    h_max: int,
    k_max: int,
) -> dict:
    """JSON-ready summary used by the command-line `analyze bound` path."""
    gamma_req = required_gamma(epsilon, horizon, h_min, h_max, k_max)
    if gamma is None:
        gamma = gamma_req
    result = optimal_alpha(gamma, epsilon, horizon, h_min, h_max, k_max)
    solution = cardano_solve(result.cubic.a, result.cubic.b, result.cubic.c, result.cubic.d)
    return {
        "inputs": {
            "gamma": gamma,
            "epsilon": epsilon,
            "horizon": horizon,
            "h_min": h_min,
            "h_max": h_max,
            "k_max": k_max,
            "delta": h_max / h_min,
        },
        "coefficients": asdict(result.coeffs),
        "cubic": asdict(result.cubic),
        "roots": list(solution.roots),
        "discriminant": solution.discriminant,
        "alpha_star": result.alpha_star,
        "bound_at_alpha_star": bound_value(result.alpha_star, result.coeffs),
        "gamma_required": result.gamma_required,
        "on_condition": result.on_condition,
        "double_root": result.double_root,
    }


def adaptive_simpson(f, a: float, b: float, tol: float = 1e-9, max_depth: int = 40) -> float:
    """Adaptive Simpson quadrature with an absolute tolerance."""

    def simpson(lo, hi, flo, fmid, fhi):
        return (hi - lo) / 6.0 * (flo + 4.0 * fmid + fhi)

    def recurse(lo, hi, flo, fmid, fhi, whole, eps, depth):
        mid = (lo + hi) / 2.0
        lmid = (lo + mid) / 2.0
        rmid = (mid + hi) / 2.0
        fl = f(lmid)
        fr = f(rmid)
        left = simpson(lo, mid, flo, fl, fmid)
        right = simpson(mid, hi, fmid, fr, fhi)
        if depth >= max_depth or abs(left + right - whole) <= 15.0 * eps:
            return left + right + (left + right - whole) / 15.0
        return recurse(lo, mid, flo, fl, fmid, left, eps / 2.0, depth + 1) + recurse(
            mid, hi, fmid, fr, fhi, right, eps / 2.0, depth + 1
        )

    if b <= a:
        raise AnalysisError("integration interval must have positive length")
    mid = (a + b) / 2.0
    fa, fm, fb = f(a), f(mid), f(b)
    return recurse(a, b, fa, fm, fb, simpson(a, b, fa, fm, fb), tol, 0)


@dataclass(frozen=True)
class TipTheory:
    """Arrival rate, approval interval, style partition and selection bias."""

    arrival_rate: float
    interval: float
    centers: tuple[float, ...]
    beta: float
    style_path: StylePath

    def __post_init__(self):
        if self.arrival_rate <= 0 or self.interval <= 0:
            raise AnalysisError("arrival rate and approval interval must be positive")
        if self.beta < 0:
            raise AnalysisError("beta must be non-negative")
        if not self.centers:
            raise AnalysisError("need at least one style interval")

    @classmethod
    def equal_bins(
        cls, arrival_rate: float, interval: float, k: int, beta: float, style_path: StylePath
    ) -> "TipTheory":
        centers = tuple((i + 0.5) / k for i in range(k))
        return cls(arrival_rate, interval, centers, beta, style_path)


def interval_softmax(style: float, centers, beta: float) -> np.ndarray:
    """Probability of approving each style interval for an incoming style."""
    centers = np.asarray(centers, dtype=np.float64)
    logits = -beta * (centers - style) ** 2
    logits -= logits.max()
    probs = np.exp(logits)
    return probs / probs.sum()


def tip_approval_probability(theory: TipTheory, k: int, tol: float = 1e-9) -> float:
    """Average over the approval window of the interval-k selection probability.

    Approval times are uniform on (0, interval); the style path is
    piecewise constant, so the quadrature is split at its breakpoints.
    """
    if not 0 <= k < len(theory.centers):
        raise AnalysisError("interval index out of range")

    def integrand(s: float) -> float:
        return float(interval_softmax(theory.style_path(s), theory.centers, theory.beta)[k])

    cuts = [0.0] + [b for b in theory.style_path.breakpoints if 0.0 < b < theory.interval]
    cuts.append(theory.interval)
    total = 0.0
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        total += adaptive_simpson(integrand, lo, hi, tol)
    return total / theory.interval


def expected_approvals(theory: TipTheory, k: int, tol: float = 1e-9) -> float:
    """Per-round approval count expectation for interval k: rate * interval * P_k.

    Summed over intervals this telescopes to the arrival volume, which is
    what keeps the total tip count stationary.
    """
    return theory.arrival_rate * theory.interval * tip_approval_probability(theory, k, tol)


def approval_means(theory: TipTheory, tol: float = 1e-9) -> np.ndarray:
    return np.array(
        [expected_approvals(theory, k, tol) for k in range(len(theory.centers))]
    )
