"""Checks for the design assumptions: mass properties, density ratio exponent,
pseudo-moment condition, and the tail functionals ``T_P`` and ``T_Q``.

Improper integrals are decided by :func:`improper_integral`: integrate
outward over doubling truncations ``[a, a + s], [a + s, a + 2s], [a + 2s, a + 4s], ...``
and classify the sequence of segment contributions.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate

from .distributions import Distribution, Exponential, Gaussian, Pareto, Uniform

__all__ = [
    "Verdict",
    "DiagnosticReport",
    "MassPropertyConstants",
    "improper_integral",
    "check_mass_properties",
    "dre_threshold",
    "check_dre_numeric",
    "check_pseudo_moment",
    "tail_functional",
    "exponential_constants",
    "pareto_constants",
    "reference_constants",
    "default_mass_grid",
]

CAUCHY_RTOL = 1e-8
# consecutive segment ratios agreeing to this tolerance count as a settled power law
RATIO_STABILITY = 1e-6
MASS_RTOL = 1e-9
DEFAULT_BUDGET = 200


class Verdict(enum.Enum):
    SATISFIED = "satisfied"
    VIOLATED = "violated"
    INCONCLUSIVE = "inconclusive"


@dataclass(frozen=True)
class DiagnosticReport:
    verdict: Verdict
    witness: dict | None = None
    detail: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.verdict is Verdict.VIOLATED and not self.witness:
            raise ValueError("a violated report needs a witness")

    @property
    def satisfied(self) -> bool:
        return self.verdict is Verdict.SATISFIED

    @property
    def violated(self) -> bool:
        return self.verdict is Verdict.VIOLATED

    def summary(self) -> str:
        parts = [self.verdict.value]
        if self.witness:
            parts.append("witness " + ", ".join(f"{k}={_fmt(v)}" for k, v in self.witness.items()))
        return "; ".join(parts)


def _fmt(v):
    return f"{v:.6g}" if isinstance(v, float) else str(v)


@dataclass(frozen=True)
class MassPropertyConstants:
    a_minus: float
    r_minus: float
    a_plus: float
    r_plus: float

    def __post_init__(self):
        for name in ("a_minus", "r_minus", "a_plus", "r_plus"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


def exponential_constants(lam: float) -> MassPropertyConstants:
    """``(exp(-lam), 1, 2 sinh(lam) / lam, 1)``."""
    return MassPropertyConstants(math.exp(-lam), 1.0, 2 * math.sinh(lam) / lam, 1.0)


def pareto_constants(alpha: float) -> MassPropertyConstants:
    """``(2, 1/2, (3/2)^(alpha + 1), 1/2)``, the textbook constants for Pareto designs.

    The lower bound fails for balls centred near the support edge ``x = 1``.
    """
    return MassPropertyConstants(2.0, 0.5, 1.5 ** (alpha + 1), 0.5)


def reference_constants(spec: Distribution) -> MassPropertyConstants:
    """Constants to test ``spec`` against.

    Exponential and Pareto designs use their textbook constants, uniform
    designs the exact ones ``(1, w/2, 2, w/2)``.  No finite ``a_+`` fits a
    Gaussian, so it is tested against the unit exponential constants scaled
    by ``sigma``, which its tail must eventually break.
    """
    if isinstance(spec, Exponential):
        return exponential_constants(spec.lam)
    if isinstance(spec, Pareto):
        return pareto_constants(spec.alpha)
    if isinstance(spec, Uniform) and spec.dim == 1:
        half = (spec.b - spec.a) / 2
        return MassPropertyConstants(1.0, half, 2.0, half)
    if isinstance(spec, Gaussian):
        base = exponential_constants(1.0)
        return MassPropertyConstants(base.a_minus, spec.sigma, base.a_plus, spec.sigma)
    raise ValueError(f"no reference mass-property constants for {spec.family!r}")


def default_mass_grid(spec: Distribution, constants: MassPropertyConstants) -> tuple[np.ndarray, np.ndarray]:
    """``x`` grid over the bulk of ``spec`` and 20 radii up to ``max(r_-, r_+)``."""
    if isinstance(spec, Exponential):
        xs = np.linspace(0.0, 10.0 / spec.lam, 401)
    elif isinstance(spec, Pareto):
        xs = np.linspace(1.0, 50.0, 981)
    elif isinstance(spec, Uniform):
        xs = np.linspace(spec.a, spec.b, 201)
    elif isinstance(spec, Gaussian):
        xs = spec.mu + spec.sigma * np.linspace(0.0, 12.0, 241)
    else:
        raise ValueError(f"no default grid for {spec.family!r}")
    top = max(constants.r_minus, constants.r_plus)
    return xs, top * np.arange(1, 21) / 20


# --------------------------------------------------------------------------
# mass properties


def check_mass_properties(spec: Distribution, constants: MassPropertyConstants, x_grid, r_grid) -> DiagnosticReport:
    """Test ``a_- p(x) r^d <= P(B(x, r)) <= a_+ p(x) r^d`` on a grid.

    The lower bound is checked at every grid ``x`` for ``r <= r_-``; the upper
    bound at grid ``x`` inside the support for ``r <= r_+``.  The first
    violation in grid order (x outer, r inner, lower bound first) is the
    witness.
    """
    xs = np.asarray(x_grid, dtype=np.float64).reshape(-1)
    rs = np.asarray(r_grid, dtype=np.float64).reshape(-1)
    if xs.size == 0 or rs.size == 0:
        raise ValueError("grids must be nonempty")
    if np.any(rs <= 0) or np.any(rs > max(constants.r_minus, constants.r_plus)):
        raise ValueError("radii must lie in (0, max(r_minus, r_plus)]")
    d = spec.dim
    X, R = np.meshgrid(xs, rs, indexing="ij")
    mass = spec.ball_mass(X, R)
    dens = spec.pdf(X)
    scale = dens * R ** d
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(scale > 0, mass / scale, np.inf)
    low_bad = (R <= constants.r_minus) & (mass < constants.a_minus * scale * (1 - MASS_RTOL))
    high_bad = (R <= constants.r_plus) & (dens > 0) & (mass > constants.a_plus * scale * (1 + MASS_RTOL))
    detail = {
        "points": int(X.size),
        "min_ratio": float(np.min(ratio)),
        "max_ratio": float(np.max(ratio[dens > 0])) if np.any(dens > 0) else math.nan,
        "lower_violations": int(low_bad.sum()),
        "upper_violations": int(high_bad.sum()),
    }
    bad = low_bad | high_bad
    if not bad.any():
        return DiagnosticReport(Verdict.SATISFIED, detail=detail)
    i, j = np.argwhere(bad)[0]
    which = "minimal" if low_bad[i, j] else "maximal"
    bound = constants.a_minus if which == "minimal" else constants.a_plus
    witness = {
        "property": which,
        "x": float(X[i, j]),
        "r": float(R[i, j]),
        "ball_mass": float(mass[i, j]),
        "density": float(dens[i, j]),
        "ratio": float(ratio[i, j]),
        "bound": float(bound),
    }
    return DiagnosticReport(Verdict.VIOLATED, witness=witness, detail=detail)


# --------------------------------------------------------------------------
# improper integrals


@dataclass
class _Side:
    value: float
    verdict: Verdict
    segments: list
    witness: dict | None = None


def _segment(f: Callable[[float], float], a: float, b: float) -> float:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        with np.errstate(over="ignore"):
            val, _ = integrate.quad(f, a, b, epsabs=0.0, epsrel=1e-12, limit=200)
    return val


def _tail(f, anchor: float, direction: int, scale: float, budget: int) -> _Side:
    """Integrate ``f`` from ``anchor`` to ``direction * inf`` over doubling segments."""
    def seg(j):
        lo = 0.0 if j == 0 else scale * 2.0 ** (j - 1)
        hi = scale * 2.0 ** j
        a, b = anchor + direction * lo, anchor + direction * hi
        return (a, b) if direction > 0 else (b, a)

    total = 0.0
    contribs: list[float] = []
    ratios: list[float] = []
    for j in range(budget + 1):
        a, b = seg(j)
        if not (math.isfinite(a) and math.isfinite(b)):
            break
        s = _segment(f, a, b)
        if not math.isfinite(s):
            return _Side(math.inf, Verdict.VIOLATED, contribs,
                         {"segment": (a, b), "contribution": s, "reason": "integrand overflow"})
        contribs.append(s)
        total += s
        if j == 0:
            continue
        prev = contribs[-2]
        if s == 0.0:
            if prev == 0.0:
                return _Side(total, Verdict.SATISFIED, contribs)
            continue
        if prev == 0.0:
            ratios.append(math.inf)
            continue
        r = s / prev
        ratios.append(r)
        if len(ratios) >= 3:
            last = ratios[-3:]
            stable = all(abs(last[i] - last[i - 1]) <= RATIO_STABILITY * max(1.0, last[i]) for i in (1, 2))
            if stable and r >= 1.0 - 1e-9:
                return _Side(math.inf, Verdict.VIOLATED, contribs,
                             {"segment": (a, b), "contribution": s, "ratio": r,
                              "reason": "segment contributions do not shrink"})
            if stable and r < 1.0:
                # settled geometric decay (power-law tail): the remainder sums in closed form
                return _Side(total + s * r / (1.0 - r), Verdict.SATISFIED, contribs)
        if r < 1.0 and s * r / (1.0 - r) <= CAUCHY_RTOL * abs(total) and (len(ratios) < 2 or r <= ratios[-2]):
            return _Side(total, Verdict.SATISFIED, contribs)
    return _Side(total, Verdict.INCONCLUSIVE, contribs)


def improper_integral(logf: Callable[[np.ndarray], np.ndarray], support: tuple[float, float],
                      budget: int = DEFAULT_BUDGET, scale: float = 1.0) -> tuple[Verdict, float, dict]:
    """Decide whether ``int exp(logf)`` over ``support`` is finite.

    Returns ``(verdict, value, evidence)``.  ``value`` is ``inf`` when the
    integral diverges and the partial sum when the budget (number of
    doublings per infinite end) runs out.
    """
    lo, hi = support

    def f(x):
        v = logf(np.float64(x))
        return math.exp(v) if v < 709.0 else math.inf

    if math.isfinite(lo) and math.isfinite(hi):
        val = _segment(f, lo, hi)
        if not math.isfinite(val):
            return Verdict.VIOLATED, math.inf, {"segment": (lo, hi), "contribution": val}
        return Verdict.SATISFIED, val, {"segments": 1}

    sides = []
    if math.isfinite(lo):
        sides.append(_tail(f, lo, +1, scale, budget))
    elif math.isfinite(hi):
        sides.append(_tail(f, hi, -1, scale, budget))
    else:
        sides.append(_tail(f, 0.0, +1, scale, budget))
        sides.append(_tail(f, 0.0, -1, scale, budget))
    evidence = {"segments": sum(len(s.segments) for s in sides)}
    for s in sides:
        if s.verdict is Verdict.VIOLATED:
            evidence.update(s.witness or {})
            return Verdict.VIOLATED, math.inf, evidence
    value = sum(s.value for s in sides)
    if any(s.verdict is Verdict.INCONCLUSIVE for s in sides):
        return Verdict.INCONCLUSIVE, value, evidence
    return Verdict.SATISFIED, value, evidence


def _require_1d(*specs):
    for s in specs:
        if s.dim != 1:
            raise ValueError(f"numeric checks need 1-d designs, got {s.family} in dimension {s.dim}")
        if s.family == "empirical":
            raise ValueError("numeric checks need an analytic density")


def _support_gap(source: Distribution, target: Distribution):
    """A point where the target has density but the source does not, if any."""
    (pl, ph), (ql, qh) = source.support, target.support
    if ql < pl:
        return max(ql, pl - 1.0) if math.isfinite(ql) else pl - 1.0
    if qh > ph:
        return min(qh, ph + 1.0) if math.isfinite(qh) else ph + 1.0
    return None


def _ratio_logf(source: Distribution, target: Distribution, t: float):
    def logf(x):
        lq = float(target.logpdf(x))
        if lq == -math.inf:
            return -math.inf
        return lq - t * float(source.logpdf(x))
    return logf


def _report(verdict, value, evidence, **extra) -> DiagnosticReport:
    detail = {"integral": value, **evidence, **extra}
    witness = None
    if verdict is Verdict.VIOLATED:
        witness = {k: extra[k] for k in ("gamma", "rho", "t") if k in extra}
        witness.update({k: evidence[k] for k in ("segment", "contribution", "ratio", "reason", "x") if k in evidence})
    return DiagnosticReport(verdict, witness=witness, detail=detail)


def dre_threshold(source: Distribution, target: Distribution) -> float:
    """Supremum of ``gamma`` with ``int q / p^gamma < inf`` for the supported analytic pairs."""
    if isinstance(source, Exponential) and isinstance(target, Exponential):
        return target.lam / source.lam
    if isinstance(source, Pareto) and isinstance(target, Pareto):
        return target.alpha / (source.alpha + 1)
    if isinstance(source, Uniform) and isinstance(target, Uniform):
        if source.dim == target.dim and source.a <= target.a and target.b <= source.b:
            return math.inf
        raise ValueError("target uniform support must lie inside the source support")
    raise ValueError(f"no closed-form threshold for the pair ({source.family}, {target.family})")


def check_dre_numeric(source: Distribution, target: Distribution, gamma: float,
                      budget: int = DEFAULT_BUDGET) -> DiagnosticReport:
    """Numerically decide whether ``int q(x) / p(x)^gamma dx`` is finite."""
    if not gamma > 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    _require_1d(source, target)
    gap = _support_gap(source, target)
    if gap is not None:
        return DiagnosticReport(Verdict.VIOLATED, witness={"gamma": gamma, "x": gap, "reason": "q > 0 where p = 0"})
    verdict, value, evidence = improper_integral(_ratio_logf(source, target, gamma), target.support, budget)
    return _report(verdict, value, evidence, gamma=gamma)


def check_pseudo_moment(target: Distribution, rho: float, budget: int = DEFAULT_BUDGET) -> DiagnosticReport:
    """Numerically decide whether ``int q(x)^(d / (rho + d)) dx`` is finite."""
    if not rho > 0:
        raise ValueError(f"rho must be positive, got {rho}")
    _require_1d(target)
    power = target.dim / (rho + target.dim)
    verdict, value, evidence = improper_integral(lambda x: power * float(target.logpdf(x)), target.support, budget)
    return _report(verdict, value, evidence, rho=rho)


def tail_functional(source: Distribution, target: Distribution, t: float, which: str = "TP",
                    budget: int = DEFAULT_BUDGET) -> float:
    """``T_P(t) = int q / p^t`` or ``T_Q(t) = int q^(1 - t)``.

    Returns ``inf`` when the integral diverges and ``nan`` (with a warning)
    when the budget runs out before a verdict.
    """
    if not t > 0:
        raise ValueError(f"t must be positive, got {t}")
    which = which.upper()
    if which == "TP":
        _require_1d(source, target)
        if _support_gap(source, target) is not None:
            return math.inf
        logf = _ratio_logf(source, target, t)
    elif which == "TQ":
        _require_1d(target)
        logf = lambda x: (1.0 - t) * float(target.logpdf(x))  # noqa: E731
    else:
        raise ValueError(f"which must be 'TP' or 'TQ', got {which!r}")
    verdict, value, _ = improper_integral(logf, target.support, budget)
    if verdict is Verdict.VIOLATED:
        return math.inf
    if verdict is Verdict.INCONCLUSIVE:
        warnings.warn(f"{which}({t}) undecided within {budget} doublings", RuntimeWarning, stacklevel=2)
        return math.nan
    return value
