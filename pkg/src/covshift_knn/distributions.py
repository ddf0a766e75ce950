"""Analytic design distributions: uniform cube, exponential, Pareto, Gaussian.

Every family exposes ``sample``, ``pdf``, ``logpdf``, ``cdf``, ``sf`` and
``ball_mass``.  One-dimensional families compute ball masses from whichever
tail (``cdf`` or ``sf``) avoids cancellation, so masses stay accurate far
out in the tails where ``cdf`` rounds to 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import ClassVar

import numpy as np
from scipy import special

from .neighbors import PointCloud, load_cloud_csv

__all__ = [
    "Distribution",
    "Uniform",
    "Exponential",
    "Pareto",
    "Gaussian",
    "Empirical",
    "sample",
    "pdf",
    "cdf",
    "ball_mass",
    "from_dict",
]


class Distribution:
    family: ClassVar[str]
    dim: int = 1

    # support of the density as (lo, hi); 1-d families only
    @property
    def support(self) -> tuple[float, float]:
        raise NotImplementedError

    @property
    def density_bound(self) -> float:
        """Analytic ``sup p``."""
        raise NotImplementedError

    def draw(self, rng: np.random.Generator, count: int) -> np.ndarray:
        raise NotImplementedError

    def sample(self, count: int, rng: np.random.Generator) -> PointCloud:
        if int(count) != count or count < 1:
            raise ValueError(f"count must be a positive integer, got {count}")
        return PointCloud(self.draw(rng, int(count)).reshape(int(count), self.dim))

    def logpdf(self, x):
        raise NotImplementedError

    def pdf(self, x):
        return np.exp(self.logpdf(x))

    def cdf(self, x):
        raise NotImplementedError

    def sf(self, x):
        return 1.0 - self.cdf(x)

    def ball_mass(self, x, r):
        """Probability of the closed ball ``B(x, r)``."""
        x = np.asarray(x, dtype=np.float64)
        r = np.asarray(r, dtype=np.float64)
        if np.any(r < 0):
            raise ValueError("radius must be nonnegative")
        lo, hi = x - r, x + r
        left = self.cdf(hi) - self.cdf(lo)
        right = self.sf(lo) - self.sf(hi)
        # difference of the smaller tail probabilities loses the fewest digits
        mass = np.where(self.cdf(x) <= 0.5, left, right)
        return np.clip(mass, 0.0, 1.0)

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class Uniform(Distribution):
    """Uniform law on the cube ``[a, b]^dim``."""

    a: float = 0.0
    b: float = 1.0
    dim: int = 1
    family: ClassVar[str] = "uniform"

    def __post_init__(self):
        if not self.b > self.a:
            raise ValueError(f"need a < b, got a={self.a}, b={self.b}")
        if int(self.dim) != self.dim or self.dim < 1:
            raise ValueError(f"dim must be a positive integer, got {self.dim}")

    @property
    def support(self):
        return (self.a, self.b)

    @property
    def density_bound(self):
        return (self.b - self.a) ** -self.dim

    def draw(self, rng, count):
        return rng.uniform(self.a, self.b, size=(count, self.dim))

    def _inside(self, x):
        x = np.asarray(x, dtype=np.float64)
        if self.dim == 1:
            return (x >= self.a) & (x <= self.b)
        return np.all((x >= self.a) & (x <= self.b), axis=-1)

    def logpdf(self, x):
        with np.errstate(divide="ignore"):
            return np.where(self._inside(x), -self.dim * math.log(self.b - self.a), -np.inf)

    def cdf(self, x):
        self._require_1d("cdf")
        return np.clip((np.asarray(x, dtype=np.float64) - self.a) / (self.b - self.a), 0.0, 1.0)

    def sf(self, x):
        self._require_1d("sf")
        return np.clip((self.b - np.asarray(x, dtype=np.float64)) / (self.b - self.a), 0.0, 1.0)

    def ball_mass(self, x, r):
        if self.dim == 1:
            return super().ball_mass(x, r)
        # Euclidean ball in a cube has no closed form past d = 1
        raise ValueError(f"ball_mass is only available for 1-d uniforms, got dim={self.dim}")

    def _require_1d(self, what):
        if self.dim != 1:
            raise ValueError(f"{what} is only available for 1-d uniforms, got dim={self.dim}")

    def to_dict(self):
        return {"family": self.family, "a": self.a, "b": self.b, "dim": self.dim}


@dataclass(frozen=True)
class Exponential(Distribution):
    """Exponential law with rate ``lam`` on ``[0, inf)``."""

    lam: float = 1.0
    family: ClassVar[str] = "exponential"

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError(f"rate must be positive, got {self.lam}")

    @property
    def support(self):
        return (0.0, math.inf)

    @property
    def density_bound(self):
        return self.lam

    def draw(self, rng, count):
        return rng.exponential(1.0 / self.lam, size=count)

    def logpdf(self, x):
        x = np.asarray(x, dtype=np.float64)
        with np.errstate(divide="ignore"):
            return np.where(x >= 0, math.log(self.lam) - self.lam * x, -np.inf)

    def cdf(self, x):
        x = np.asarray(x, dtype=np.float64)
        return np.where(x > 0, -np.expm1(-self.lam * np.maximum(x, 0.0)), 0.0)

    def sf(self, x):
        x = np.asarray(x, dtype=np.float64)
        return np.where(x > 0, np.exp(-self.lam * np.maximum(x, 0.0)), 1.0)

    def to_dict(self):
        return {"family": self.family, "lam": self.lam}


@dataclass(frozen=True)
class Pareto(Distribution):
    """Pareto law with location 1 and shape ``alpha``: density ``alpha x^-(alpha+1)`` on ``[1, inf)``."""

    alpha: float = 1.0
    family: ClassVar[str] = "pareto"

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"shape must be positive, got {self.alpha}")

    @property
    def support(self):
        return (1.0, math.inf)

    @property
    def density_bound(self):
        return self.alpha

    def draw(self, rng, count):
        # inverse transform; 1 - U keeps the argument in (0, 1]
        u = 1.0 - rng.random(count)
        return u ** (-1.0 / self.alpha)

    def logpdf(self, x):
        x = np.asarray(x, dtype=np.float64)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(x >= 1, math.log(self.alpha) - (self.alpha + 1) * np.log(np.maximum(x, 1.0)), -np.inf)

    def cdf(self, x):
        x = np.asarray(x, dtype=np.float64)
        return np.where(x > 1, -np.expm1(-self.alpha * np.log(np.maximum(x, 1.0))), 0.0)

    def sf(self, x):
        x = np.asarray(x, dtype=np.float64)
        return np.where(x > 1, np.maximum(x, 1.0) ** -self.alpha, 1.0)

    def to_dict(self):
        return {"family": self.family, "alpha": self.alpha}


@dataclass(frozen=True)
class Gaussian(Distribution):
    mu: float = 0.0
    sigma: float = 1.0
    family: ClassVar[str] = "gaussian"

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")

    @property
    def support(self):
        return (-math.inf, math.inf)

    @property
    def density_bound(self):
        return 1.0 / (self.sigma * math.sqrt(2 * math.pi))

    def draw(self, rng, count):
        return rng.normal(self.mu, self.sigma, size=count)

    def logpdf(self, x):
        z = (np.asarray(x, dtype=np.float64) - self.mu) / self.sigma
        return -0.5 * z * z - math.log(self.sigma * math.sqrt(2 * math.pi))

    def cdf(self, x):
        return special.ndtr((np.asarray(x, dtype=np.float64) - self.mu) / self.sigma)

    def sf(self, x):
        return special.ndtr(-(np.asarray(x, dtype=np.float64) - self.mu) / self.sigma)

    def to_dict(self):
        return {"family": self.family, "mu": self.mu, "sigma": self.sigma}


@dataclass(frozen=True, eq=False)
class Empirical(Distribution):
    """Resamples rows of a fixed point cloud with replacement (e.g. a design read from CSV).

    No density is available, so the assumption diagnostics reject it.
    """

    cloud: PointCloud = field(default=None)  # type: ignore[assignment]
    path: str | None = None
    family: ClassVar[str] = "empirical"

    def __post_init__(self):
        if self.cloud is None:
            if self.path is None:
                raise ValueError("empirical design needs a cloud or a CSV path")
            object.__setattr__(self, "cloud", load_cloud_csv(self.path))

    @property
    def dim(self) -> int:  # type: ignore[override]
        return self.cloud.dim

    def draw(self, rng, count):
        return self.cloud.points[rng.integers(0, self.cloud.n, size=count)]

    def logpdf(self, x):
        raise ValueError("empirical designs have no density")

    def cdf(self, x):
        raise ValueError("empirical designs have no density")

    def ball_mass(self, x, r):
        raise ValueError("empirical designs have no density")

    def to_dict(self):
        if self.path is None:
            raise ValueError("only CSV-backed empirical designs are serializable")
        return {"family": self.family, "path": str(self.path)}


_FAMILIES = {cls.family: cls for cls in (Uniform, Exponential, Pareto, Gaussian, Empirical)}


def from_dict(spec: dict, base_dir: str | Path | None = None) -> Distribution:
    """Build a distribution from ``{"family": name, **params}``."""
    spec = dict(spec)
    try:
        family = spec.pop("family")
    except KeyError:
        raise ValueError(f"distribution spec {spec!r} lacks a 'family' key") from None
    if family not in _FAMILIES:
        raise ValueError(f"unknown distribution family {family!r}; expected one of {sorted(_FAMILIES)}")
    if family == "empirical" and base_dir is not None and "path" in spec:
        path = Path(spec["path"])
        spec["path"] = str(path if path.is_absolute() else Path(base_dir) / path)
    try:
        return _FAMILIES[family](**spec)
    except TypeError as exc:
        raise ValueError(f"bad parameters for {family}: {exc}") from None


def sample(spec: Distribution, count: int, rng: np.random.Generator) -> PointCloud:
    return spec.sample(count, rng)


def pdf(spec: Distribution, x):
    return spec.pdf(x)


def cdf(spec: Distribution, x):
    return spec.cdf(x)


def ball_mass(spec: Distribution, x, r):
    if spec.dim != 1 and not isinstance(spec, Uniform):
        raise ValueError(f"ball_mass unsupported for {spec.family} in dimension {spec.dim}")
    return spec.ball_mass(x, r)
