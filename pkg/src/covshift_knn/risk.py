"""Regression tasks under covariate shift, Monte Carlo excess risk, and rate fitting.

Randomness is organised as a tree of :class:`numpy.random.SeedSequence`
keys.  Replicate ``r`` at grid point ``(n, m)`` of an experiment seeded with
``seed`` draws from ``SeedSequence(seed, spawn_key=(n, m, r))``; its source
sample, target sample and test points use children ``0``, ``1`` and ``2``.
Inside a sample the covariates use child ``0`` and the noise child ``1``.
Results therefore do not depend on thread scheduling or on which other grid
points are run.
"""

from __future__ import annotations

import enum
import logging
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, asdict
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import stats

from . import diagnostics
from .distributions import Distribution, Pareto
from .estimators import (
    LabeledDataset,
    OneSampleRegressor,
    TwoSampleRegressor,
    local_regressor,
    standard_k_schedule,
    standard_regressor,
)

__all__ = [
    "Sine",
    "Cusp",
    "ConstantFunction",
    "GaussianNoise",
    "LaplaceNoise",
    "RegressionTask",
    "Setting",
    "Regime",
    "RateResult",
    "theoretical_rate",
    "generate_labeled",
    "excess_risk_mc",
    "RiskRecord",
    "RiskCurve",
    "RateReport",
    "DegenerateGridError",
    "fit_rate",
    "EstimatorConfig",
    "build_regressor",
    "simulate",
    "run_rate_experiment",
    "substream",
]

log = logging.getLogger(__name__)


def substream(seed, *keys: int) -> np.random.SeedSequence:
    """Child of ``seed`` at ``keys`` without mutating ``seed`` (unlike ``SeedSequence.spawn``)."""
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(seed)
    return np.random.SeedSequence(seed.entropy, spawn_key=tuple(seed.spawn_key) + tuple(int(k) for k in keys),
                                  pool_size=seed.pool_size)


# --------------------------------------------------------------------------
# regression functions and noise


class TargetFunction:
    name: str
    beta: float
    bound: float
    lipschitz: float

    def __call__(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def certify(self, dim: int, rng: np.random.Generator | None = None, pairs: int = 20000,
                span: float = 20.0) -> None:
        """Spot-check ``|f| <= F`` and ``|f(x) - f(y)| <= L |x - y|^beta`` on random points.

        Raises ``ValueError`` on the first counterexample.
        """
        rng = rng or np.random.default_rng(0)
        x = rng.uniform(-span, span, size=(pairs, dim))
        # mix wide and very close pairs; the Holder bound bites at small separations
        scale = np.exp(rng.uniform(np.log(1e-6), np.log(span), size=(pairs, 1)))
        y = x + scale * rng.standard_normal((pairs, dim))
        fx, fy = self(x), self(y)
        if np.any(np.abs(fx) > self.bound * (1 + 1e-12)):
            raise ValueError(f"{self.name}: |f| exceeds F={self.bound}")
        gap = np.abs(fx - fy)
        allowed = self.lipschitz * np.linalg.norm(x - y, axis=1) ** self.beta
        if np.any(gap > allowed * (1 + 1e-9) + 1e-12):
            raise ValueError(f"{self.name}: Holder bound with L={self.lipschitz}, beta={self.beta} fails")

    def to_dict(self) -> dict:
        raise NotImplementedError


def _project(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        return x
    return x.sum(axis=-1) / math.sqrt(x.shape[-1])


@dataclass(frozen=True)
class Sine(TargetFunction):
    """``F sin(omega <u, x>)`` with ``u`` the unit diagonal; Lipschitz (beta = 1) with ``L = F omega``."""

    amplitude: float = 1.0
    omega: float = 2 * math.pi
    name = "sine"
    beta = 1.0

    @property
    def bound(self):
        return abs(self.amplitude)

    @property
    def lipschitz(self):
        return abs(self.amplitude * self.omega)

    def __call__(self, x):
        return self.amplitude * np.sin(self.omega * _project(x))

    def to_dict(self):
        return {"name": self.name, "amplitude": self.amplitude, "omega": self.omega}


@dataclass(frozen=True)
class Cusp(TargetFunction):
    """``min(F, L |x - c|^beta)``, a capped power cusp in ``H_beta(F, L)``."""

    bound: float = 1.0
    lipschitz: float = 1.0
    beta: float = 0.5
    center: float = 0.0
    name = "cusp"

    def __post_init__(self):
        if not 0 < self.beta <= 1:
            raise ValueError(f"beta must lie in (0, 1], got {self.beta}")
        if not (self.bound > 0 and self.lipschitz > 0):
            raise ValueError("bound and lipschitz must be positive")

    def __call__(self, x):
        x = np.asarray(x, dtype=np.float64)
        dist = np.abs(x - self.center) if x.ndim == 1 else np.linalg.norm(x - self.center, axis=-1)
        return np.minimum(self.bound, self.lipschitz * dist ** self.beta)

    def to_dict(self):
        return {"name": self.name, "bound": self.bound, "lipschitz": self.lipschitz,
                "beta": self.beta, "center": self.center}


@dataclass(frozen=True)
class ConstantFunction(TargetFunction):
    value: float = 0.0
    name = "constant"
    beta = 1.0
    lipschitz = 0.0

    @property
    def bound(self):
        return abs(self.value)

    def __call__(self, x):
        return np.full(len(np.atleast_1d(_project(x))), float(self.value))

    def to_dict(self):
        return {"name": self.name, "value": self.value}


TARGET_FUNCTIONS = {cls.name: cls for cls in (Sine, Cusp, ConstantFunction)}


@dataclass(frozen=True)
class GaussianNoise:
    sigma: float = 0.5
    name = "gaussian"

    def __post_init__(self):
        if not self.sigma >= 0:
            raise ValueError(f"sigma must be nonnegative, got {self.sigma}")

    @property
    def variance(self):
        return self.sigma ** 2

    def draw(self, rng, count):
        if self.sigma == 0:
            return np.zeros(count)
        return rng.normal(0.0, self.sigma, size=count)

    def to_dict(self):
        return {"name": self.name, "sigma": self.sigma}


@dataclass(frozen=True)
class LaplaceNoise:
    scale: float = 0.5
    name = "laplace"

    def __post_init__(self):
        if not self.scale >= 0:
            raise ValueError(f"scale must be nonnegative, got {self.scale}")

    @property
    def variance(self):
        return 2 * self.scale ** 2

    def draw(self, rng, count):
        if self.scale == 0:
            return np.zeros(count)
        return rng.laplace(0.0, self.scale, size=count)

    def to_dict(self):
        return {"name": self.name, "scale": self.scale}


NOISES = {cls.name: cls for cls in (GaussianNoise, LaplaceNoise)}


@dataclass(frozen=True)
class RegressionTask:
    """``Y = f(X) + noise`` with ``X`` from the source or the target design."""

    target_fn: TargetFunction
    noise: GaussianNoise | LaplaceNoise
    source: Distribution
    target: Distribution

    def __post_init__(self):
        if self.source.dim != self.target.dim:
            raise ValueError("source and target designs must share the dimension")

    @property
    def dim(self) -> int:
        return self.source.dim

    def design(self, which: str) -> Distribution:
        if which == "source":
            return self.source
        if which == "target":
            return self.target
        raise ValueError(f"which must be 'source' or 'target', got {which!r}")


def generate_labeled(task: RegressionTask, which: str, n: int, seed) -> LabeledDataset:
    """Draw ``n`` labelled points from the source or target design.

    The noise stream depends on ``seed`` only, so the same seed applies the
    same noise draws whichever design the covariates come from.
    """
    if int(n) != n or n < 1:
        raise ValueError(f"n must be a positive integer, got {n}")
    cloud = task.design(which).sample(int(n), np.random.default_rng(substream(seed, 0)))
    eps = task.noise.draw(np.random.default_rng(substream(seed, 1)), int(n))
    return LabeledDataset(cloud, task.target_fn(_flat(cloud.points)) + eps)


def _flat(points: np.ndarray) -> np.ndarray:
    return points[:, 0] if points.shape[1] == 1 else points


def excess_risk_mc(regressor, task: RegressionTask, test_count: int, seed) -> float:
    """Mean of ``(f_hat(Z) - f(Z))^2`` over ``test_count`` fresh draws ``Z`` from the target design.

    ``regressor`` is anything with ``predict`` or a plain callable.
    """
    if int(test_count) != test_count or test_count < 1:
        raise ValueError(f"test_count must be a positive integer, got {test_count}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(substream(seed))
    z = task.target.sample(int(test_count), rng).points
    predict = regressor.predict if hasattr(regressor, "predict") else regressor
    err = np.asarray(predict(_flat(z)), dtype=np.float64) - task.target_fn(_flat(z))
    return float(np.mean(err * err))


# --------------------------------------------------------------------------
# theoretical rates


class Setting(enum.Enum):
    STANDARD_ONE_SAMPLE = "standard-one-sample"
    STANDARD_TWO_SAMPLE_TARGET = "standard-two-sample-target"
    LOCAL_ONE_SAMPLE = "local-one-sample"
    LOCAL_TWO_SAMPLE_TARGET = "local-two-sample-target"


class Regime(enum.Enum):
    SOURCE_LIMITED = "source-limited"  # the distribution term of the minimum binds
    SMOOTHNESS_LIMITED = "smoothness-limited"


@dataclass(frozen=True)
class RateResult:
    rate: float
    regime: Regime


def _ratio(a: float, b_coef: float, c: float) -> float:
    """``a / (b_coef * a + c)`` with the ``a -> inf`` limit."""
    return 1.0 / b_coef if math.isinf(a) else a / (b_coef * a + c)


def theoretical_rate(setting: Setting | str, beta: float, d: int, gamma: float = math.inf,
                     rho: float = math.inf) -> RateResult:
    """Risk exponent promised for ``setting`` and which side of the minimum binds.

    Source rates (one-sample settings) depend on ``gamma``; target rates
    (two-sample target settings) on ``rho``.  Infinite ``gamma``/``rho`` mean
    the condition holds for every exponent.
    """
    setting = Setting(setting)
    for name, v in (("beta", beta), ("d", d), ("gamma", gamma), ("rho", rho)):
        if not v > 0:
            raise ValueError(f"{name} must be positive, got {v}")
    smooth = 2 * beta / (2 * beta + d)
    if setting is Setting.STANDARD_ONE_SAMPLE:
        other = _ratio(gamma, 1, 1)
    elif setting is Setting.STANDARD_TWO_SAMPLE_TARGET:
        other = _ratio(rho, 2, d)
    elif setting is Setting.LOCAL_ONE_SAMPLE:
        other = gamma
    else:
        other = _ratio(rho, 1, d)
    if other < smooth:
        return RateResult(other, Regime.SOURCE_LIMITED)
    return RateResult(smooth, Regime.SMOOTHNESS_LIMITED)


def gap_region(beta: float, d: int) -> tuple[float, float]:
    """Interval of ``gamma`` where the local rate beats the standard one while the latter is below optimal."""
    return 2 * beta / (2 * beta + d), 2 * beta / d


# --------------------------------------------------------------------------
# risk curves and rate fits


@dataclass(frozen=True)
class RiskRecord:
    n: int
    m: int
    replicate: int
    estimator: str
    risk: float
    seed: int
    wall_time_ms: float


@dataclass
class RiskCurve:
    estimator: str
    records: list[RiskRecord] = field(default_factory=list)

    @property
    def grid(self) -> list[tuple[int, int]]:
        seen: dict[tuple[int, int], None] = {}
        for r in self.records:
            seen.setdefault((r.n, r.m), None)
        return list(seen)

    @property
    def n_grid(self) -> list[int]:
        return [n for n, _ in self.grid]

    @property
    def m_grid(self) -> list[int]:
        return [m for _, m in self.grid]

    def risks(self, n: int, m: int = 0) -> np.ndarray:
        return np.array([r.risk for r in self.records if r.n == n and r.m == m])

    @property
    def per_point(self) -> list[tuple[int, int, np.ndarray]]:
        return [(n, m, self.risks(n, m)) for n, m in self.grid]

    def medians(self) -> np.ndarray:
        return np.array([np.median(r) for _, _, r in self.per_point])

    @classmethod
    def from_values(cls, n_grid: Sequence[int], risks: Sequence[Sequence[float]], m_grid: Sequence[int] | None = None,
                    estimator: str = "synthetic") -> "RiskCurve":
        m_grid = list(m_grid) if m_grid is not None else [0] * len(n_grid)
        recs = [RiskRecord(int(n), int(m), i, estimator, float(v), 0, 0.0)
                for n, m, vals in zip(n_grid, m_grid, risks) for i, v in enumerate(vals)]
        return cls(estimator, recs)


class DegenerateGridError(ValueError):
    pass


@dataclass(frozen=True)
class RateReport:
    fitted_slope: float
    slope_stderr: float
    theoretical_rate: float
    regime: Regime | None
    intercept: float
    points: int
    log_argument: str

    def as_dict(self) -> dict:
        d = asdict(self)
        d["regime"] = self.regime.value if self.regime else None
        return d


def fit_rate(curve: RiskCurve, log_argument: str = "N", theoretical: RateResult | None = None,
             min_points: int = 3, min_replicates: int = 5) -> RateReport:
    """Least-squares slope of ``log(median risk)`` against ``log(n / log A)``.

    ``A`` is ``n`` (``log_argument="N"``) or ``n + m`` (``"NPlusM"``).  The
    sign is flipped so that ``risk ~ (log A / n)^r`` yields slope ``r``.
    """
    if log_argument not in ("N", "NPlusM"):
        raise ValueError(f"log_argument must be 'N' or 'NPlusM', got {log_argument!r}")
    pts = curve.per_point
    if len(pts) < min_points or len({n for n, _, _ in pts}) < min_points:
        raise DegenerateGridError(f"degenerate grid: need {min_points} distinct n values, got {len(pts)}")
    if any(len(r) < min_replicates for _, _, r in pts):
        raise DegenerateGridError(f"degenerate grid: need {min_replicates} replicates per point")
    n = np.array([p[0] for p in pts], dtype=np.float64)
    m = np.array([p[1] for p in pts], dtype=np.float64)
    med = np.array([np.median(p[2]) for p in pts])
    if np.any(med <= 0) or not np.all(np.isfinite(med)):
        raise ValueError("median risks must be positive and finite to fit in log space")
    A = n if log_argument == "N" else n + m
    if np.any(A <= 1):
        raise ValueError("log argument must exceed 1")
    fit = stats.linregress(np.log(n / np.log(A)), np.log(med))
    theo = theoretical
    return RateReport(
        fitted_slope=float(-fit.slope),
        slope_stderr=float(fit.stderr),
        theoretical_rate=theo.rate if theo else math.nan,
        regime=theo.regime if theo else None,
        intercept=float(fit.intercept),
        points=len(pts),
        log_argument=log_argument,
    )


# --------------------------------------------------------------------------
# experiments


@dataclass(frozen=True)
class EstimatorConfig:
    """How to build a regressor from the sample sizes and the task.

    ``gamma`` defaults to 0.9 times the closed-form density-ratio threshold of
    the task's design pair; ``rho`` to ``alpha`` for Pareto targets and
    infinity otherwise.  ``fixed_k`` forces a constant neighbour count and
    ``density_override`` a constant density in the local schedule.
    """

    kind: str = "local"
    two_sample: bool = False
    kappa_p: float = 1.0
    kappa_q: float = 1.0
    ell_multiplier: float = 3.0
    beta: float | None = None
    gamma: float | None = None
    rho: float | None = None
    fixed_k: int | None = None
    density_override: float | None = None
    normalize_volume: bool = False

    def __post_init__(self):
        if self.kind not in ("local", "standard"):
            raise ValueError(f"estimator kind must be 'local' or 'standard', got {self.kind!r}")
        for name in ("kappa_p", "kappa_q", "ell_multiplier"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    @property
    def label(self) -> str:
        return f"{self.kind}-{'two' if self.two_sample else 'one'}-sample"

    def resolved_beta(self, task: RegressionTask) -> float:
        return float(self.beta if self.beta is not None else task.target_fn.beta)

    def resolved_gamma(self, task: RegressionTask) -> float:
        if self.gamma is not None:
            return float(self.gamma)
        try:
            return 0.9 * diagnostics.dre_threshold(task.source, task.target)
        except ValueError:
            raise ValueError("gamma must be set explicitly for this design pair") from None

    def resolved_rho(self, task: RegressionTask) -> float:
        if self.rho is not None:
            return float(self.rho)
        return float(task.target.alpha) if isinstance(task.target, Pareto) else math.inf

    def setting(self) -> Setting:
        return Setting.LOCAL_ONE_SAMPLE if self.kind == "local" else Setting.STANDARD_ONE_SAMPLE

    def source_rate(self, task: RegressionTask) -> RateResult:
        try:
            gamma = self.resolved_gamma(task)
        except ValueError:
            # the local schedule never needs gamma; only its reported rate does
            if self.kind == "standard":
                raise
            gamma = math.inf
        return theoretical_rate(self.setting(), self.resolved_beta(task), task.dim, gamma=gamma)

    def target_rate(self, task: RegressionTask) -> RateResult:
        setting = Setting.LOCAL_TWO_SAMPLE_TARGET if self.kind == "local" else Setting.STANDARD_TWO_SAMPLE_TARGET
        return theoretical_rate(setting, self.resolved_beta(task), task.dim, rho=self.resolved_rho(task))


def _one_side(cfg: EstimatorConfig, data: LabeledDataset, kappa: float, log_arg: float, rate: RateResult | None,
              beta: float) -> OneSampleRegressor:
    if cfg.fixed_k is not None:
        return standard_regressor(data, min(cfg.fixed_k, data.n))
    if cfg.kind == "local":
        return local_regressor(data, beta=beta, kappa=kappa, ell_multiplier=cfg.ell_multiplier, log_arg=log_arg,
                               ell_log_arg=log_arg, density_override=cfg.density_override,
                               normalize_volume=cfg.normalize_volume)
    if data.n < 2:
        return standard_regressor(data, 1)
    k = standard_k_schedule(data.n, log_arg, beta, data.dim, gamma=math.inf, kappa=kappa, rate=rate.rate)
    return standard_regressor(data, k)


def build_regressor(cfg: EstimatorConfig, task: RegressionTask, source: LabeledDataset,
                    target: LabeledDataset | None = None):
    """Regressor with the neighbour schedule prescribed for ``cfg`` at the given sample sizes."""
    beta = cfg.resolved_beta(task)
    if not cfg.two_sample:
        rate = cfg.source_rate(task) if cfg.kind == "standard" else None
        return _one_side(cfg, source, cfg.kappa_p, source.n, rate, beta)
    m = 0 if target is None else target.n
    log_arg = source.n + m
    src_rate = cfg.source_rate(task) if cfg.kind == "standard" else None
    src = _one_side(cfg, source, cfg.kappa_p, log_arg, src_rate, beta)
    if m == 0:
        return TwoSampleRegressor(src, None)
    tgt_rate = cfg.target_rate(task) if cfg.kind == "standard" else None
    return TwoSampleRegressor(src, _one_side(cfg, target, cfg.kappa_q, log_arg, tgt_rate, beta))


def _replicate(task, estimators, n, m, rep, seed, test_count):
    root = substream(seed, n, m, rep)
    source = generate_labeled(task, "source", n, substream(root, 0))
    target = generate_labeled(task, "target", m, substream(root, 1)) if m > 0 else None
    out = []
    for name, cfg in estimators.items():
        t0 = time.perf_counter()
        try:
            reg = build_regressor(cfg, task, source, target)
            risk = excess_risk_mc(reg, task, test_count, substream(root, 2))
        except Exception as exc:
            raise RuntimeError(f"estimator {name!r} failed at n={n}, m={m}, replicate={rep}: {exc}") from exc
        out.append(RiskRecord(n, m, rep, name, risk, seed, (time.perf_counter() - t0) * 1e3))
    return out


def _pair_grids(n_grid, m_grid) -> list[tuple[int, int]]:
    n_grid = [int(n) for n in n_grid]
    m_grid = [int(m) for m in (m_grid or [])]
    if not n_grid:
        raise DegenerateGridError("degenerate grid: empty n grid")
    if any(b <= a for a, b in zip(n_grid, n_grid[1:])):
        raise ValueError("n grid must be strictly increasing")
    if any(n < 1 for n in n_grid) or any(m < 0 for m in m_grid):
        raise ValueError("sample sizes must be positive")
    if not m_grid:
        return [(n, 0) for n in n_grid]
    if len(m_grid) == 1:
        return [(n, m_grid[0]) for n in n_grid]
    if len(m_grid) != len(n_grid):
        raise ValueError("m grid must have one entry or as many as the n grid")
    return list(zip(n_grid, m_grid))


def simulate(task: RegressionTask, estimators: dict[str, EstimatorConfig], n_grid: Sequence[int],
             m_grid: Sequence[int] | None, replicates: int, test_count: int, seed: int,
             threads: int = 1, progress: Callable[[str], None] | None = None) -> dict[str, RiskCurve]:
    """Monte Carlo risks for several estimators on shared (paired) datasets."""
    if int(replicates) != replicates or replicates < 1:
        raise ValueError("replicates must be a positive integer")
    grid = _pair_grids(n_grid, m_grid)
    jobs = [(n, m, r) for n, m in grid for r in range(int(replicates))]
    workers = (os.cpu_count() or 1) if threads == 0 else max(1, int(threads))

    def run(job):
        return _replicate(task, estimators, *job, seed=seed, test_count=test_count)

    results: list[list[RiskRecord]] = []
    if workers == 1:
        for i, job in enumerate(jobs):
            results.append(run(job))
            if progress and (i + 1) % replicates == 0:
                progress(f"n={job[0]} m={job[1]}: {replicates} replicates done")
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            # map preserves job order regardless of completion order
            for i, res in enumerate(pool.map(run, jobs)):
                results.append(res)
                if progress and (i + 1) % replicates == 0:
                    progress(f"n={jobs[i][0]} m={jobs[i][1]}: {replicates} replicates done")
    curves = {name: RiskCurve(name) for name in estimators}
    for recs in results:
        for rec in recs:
            curves[rec.estimator].records.append(rec)
    return curves


def run_rate_experiment(task: RegressionTask, estimator: EstimatorConfig, n_grid: Sequence[int],
                        m_grid: Sequence[int] | None = None, replicates: int = 20, test_count: int = 2000,
                        seed: int = 0, threads: int = 1, log_argument: str | None = None,
                        progress: Callable[[str], None] | None = None) -> tuple[RiskCurve, RateReport | None]:
    """Simulate one estimator over the grid and fit its rate.

    The report is ``None`` when the curve cannot be fitted (fewer than three
    grid points or five replicates); the curve is returned either way.
    """
    curves = simulate(task, {estimator.label: estimator}, n_grid, m_grid, replicates, test_count, seed,
                      threads=threads, progress=progress)
    curve = curves[estimator.label]
    try:
        report = fit_curve(curve, estimator, task, log_argument)
    except DegenerateGridError as exc:
        log.info("%s; no fit", exc)
        report = None
    return curve, report


def fit_curve(curve: RiskCurve, estimator: EstimatorConfig, task: RegressionTask,
              log_argument: str | None = None) -> RateReport:
    if log_argument is None:
        log_argument = "NPlusM" if estimator.two_sample and any(curve.m_grid) else "N"
    return fit_rate(curve, log_argument, theoretical=estimator.source_rate(task))


CSV_HEADER = ("n", "m", "replicate", "estimator", "risk", "seed", "wall_time_ms")


def csv_rows(records: Iterable[RiskRecord], timing: bool = False) -> Iterable[list[str]]:
    """Rows for the risk CSV.  ``wall_time_ms`` stays empty unless ``timing`` is set,
    which keeps the file byte-identical across runs."""
    yield list(CSV_HEADER)
    for r in records:
        yield [str(r.n), str(r.m), str(r.replicate), r.estimator, repr(r.risk), str(r.seed),
               f"{r.wall_time_ms:.3f}" if timing else ""]
