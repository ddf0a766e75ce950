"""JSON experiment configuration.  The schema is documented in ``docs/config.md``."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields, replace
from importlib import resources
from pathlib import Path

from .distributions import from_dict as distribution_from_dict
from .risk import NOISES, TARGET_FUNCTIONS, EstimatorConfig, RegressionTask

__all__ = ["ConfigError", "ExperimentConfig", "load_config", "preset_names", "preset_path"]

PRESET_PACKAGE = "covshift_knn.presets"


class ConfigError(ValueError):
    pass


def _build(registry: dict, spec: dict, what: str):
    if not isinstance(spec, dict) or "name" not in spec:
        raise ConfigError(f"{what} needs a 'name'")
    params = {k: v for k, v in spec.items() if k != "name"}
    try:
        cls = registry[spec["name"]]
    except KeyError:
        raise ConfigError(f"unknown {what} {spec['name']!r}; choose from {sorted(registry)}") from None
    try:
        return cls(**params)
    except TypeError as exc:
        raise ConfigError(f"bad parameters for {what} {spec['name']!r}: {exc}") from None


def _task_from_dict(d: dict, base_dir) -> RegressionTask:
    missing = {"source", "target", "function", "noise"} - set(d)
    if missing:
        raise ConfigError(f"task is missing {sorted(missing)}")
    try:
        source = distribution_from_dict(d["source"], base_dir)
        target = distribution_from_dict(d["target"], base_dir)
    except (ValueError, TypeError, KeyError) as exc:
        raise ConfigError(f"bad design: {exc}") from None
    return RegressionTask(_build(TARGET_FUNCTIONS, d["function"], "function"),
                          _build(NOISES, d["noise"], "noise"), source, target)


def _task_to_dict(task: RegressionTask) -> dict:
    return {"source": task.source.to_dict(), "target": task.target.to_dict(),
            "function": task.target_fn.to_dict(), "noise": task.noise.to_dict()}


_ESTIMATOR_KEYS = {f.name for f in fields(EstimatorConfig)}


def _estimator_from_dict(d: dict) -> tuple[str | None, EstimatorConfig]:
    unknown = set(d) - _ESTIMATOR_KEYS - {"name"}
    if unknown:
        raise ConfigError(f"unknown estimator keys {sorted(unknown)}")
    params = {k: v for k, v in d.items() if k != "name"}
    return d.get("name"), EstimatorConfig(**params)


def _estimator_to_dict(name: str, cfg: EstimatorConfig) -> dict:
    out = {"name": name}
    defaults = EstimatorConfig()
    for f in fields(EstimatorConfig):
        v = getattr(cfg, f.name)
        if f.name in ("kind", "two_sample") or v != getattr(defaults, f.name):
            out[f.name] = v
    return out


def _size_list(value, what: str) -> list[int]:
    if not isinstance(value, list) or not all(isinstance(v, int) and not isinstance(v, bool) for v in value):
        raise ConfigError(f"{what} must be a list of integers")
    return list(value)


@dataclass
class ExperimentConfig:
    """Everything a run needs; ``output`` is the CSV path (figures go next to it)."""

    task: RegressionTask
    estimators: dict[str, EstimatorConfig]
    n_grid: list[int]
    m_grid: list[int] = field(default_factory=list)
    replicates: int = 20
    test_count: int = 2000
    seed: int = 0
    output: str | None = None

    def __post_init__(self):
        if not self.estimators:
            raise ConfigError("at least one estimator is required")
        if not isinstance(self.replicates, int) or self.replicates < 1:
            raise ConfigError("replicates must be a positive integer")
        if not isinstance(self.test_count, int) or self.test_count < 1:
            raise ConfigError("test_count must be a positive integer")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError("seed must be a nonnegative integer")

    @classmethod
    def from_dict(cls, d: dict, base_dir: str | Path | None = None) -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        known = {"task", "estimator", "estimators", "n_grid", "m_grid", "replicates", "test_count", "seed", "output"}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        for key in ("task", "n_grid"):
            if key not in d:
                raise ConfigError(f"config is missing {key!r}")
        raw = d.get("estimators")
        if raw is None:
            raw = [d.get("estimator", {})]
        elif "estimator" in d:
            raise ConfigError("give either 'estimator' or 'estimators', not both")
        if not isinstance(raw, list) or not all(isinstance(e, dict) for e in raw):
            raise ConfigError("estimators must be a list of objects")
        estimators: dict[str, EstimatorConfig] = {}
        try:
            for entry in raw:
                name, est = _estimator_from_dict(entry)
                name = name or est.label
                if name in estimators:
                    raise ConfigError(f"duplicate estimator name {name!r}")
                estimators[name] = est
            return cls(
                task=_task_from_dict(d["task"], base_dir),
                estimators=estimators,
                n_grid=_size_list(d["n_grid"], "n_grid"),
                m_grid=_size_list(d.get("m_grid", []), "m_grid"),
                replicates=d.get("replicates", 20),
                test_count=d.get("test_count", 2000),
                seed=d.get("seed", 0),
                output=d.get("output"),
            )
        except ConfigError:
            raise
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc)) from None

    def to_dict(self) -> dict:
        out = {
            "task": _task_to_dict(self.task),
            "estimators": [_estimator_to_dict(k, v) for k, v in self.estimators.items()],
            "n_grid": list(self.n_grid),
            "m_grid": list(self.m_grid),
            "replicates": self.replicates,
            "test_count": self.test_count,
            "seed": self.seed,
        }
        if self.output is not None:
            out["output"] = self.output
        return out

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, allow_nan=False, default=_json_default)

    @classmethod
    def loads(cls, text: str, base_dir: str | Path | None = None) -> "ExperimentConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc}") from None
        return cls.from_dict(data, base_dir)

    def with_overrides(self, **kw) -> "ExperimentConfig":
        return replace(self, **{k: v for k, v in kw.items() if v is not None})

    def paired(self) -> "ExperimentConfig":
        """Config with both a standard and a local estimator; a lone estimator gets its counterpart."""
        if len(self.estimators) >= 2:
            return self
        ((_, est),) = self.estimators.items()
        other = replace(est, kind="standard" if est.kind == "local" else "local")
        pair = sorted((est, other), key=lambda e: e.kind != "standard")
        return replace(self, estimators={e.label: e for e in pair})


def _json_default(v):
    if isinstance(v, float) and math.isinf(v):
        raise ConfigError("infinite values cannot be written to JSON")
    raise TypeError(f"cannot serialise {type(v).__name__}")


def preset_names() -> list[str]:
    return sorted(p.name[:-5] for p in resources.files(PRESET_PACKAGE).iterdir() if p.name.endswith(".json"))


def preset_path(name: str):
    res = resources.files(PRESET_PACKAGE) / f"{name}.json"
    if not res.is_file():
        raise ConfigError(f"unknown preset {name!r}; choose from {preset_names()}")
    return res


def load_config(source: str | Path) -> ExperimentConfig:
    """Read a config from a path, or from a shipped preset given by bare name."""
    path = Path(source)
    if not path.exists() and path.suffix == "" and path.parent == Path("."):
        return ExperimentConfig.loads(preset_path(str(source)).read_text())
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {source}: {exc}") from None
    return ExperimentConfig.loads(text, path.parent)
