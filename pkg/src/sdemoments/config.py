"""Run configuration: JSON loading, validation and object construction."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Callable, Optional

import numpy as np

from .errors import ConfigError
from .models import (
    KEPLER_MU,
    InitialCondition,
    NoiseModel,
    SdeModel,
    TruncatedGaussianNoise,
    WienerNoise,
    kepler_model,
    linear_model,
    polynomial_model,
)
from .multiindex import MAX_ORDER
from .propagation import TRUNCATION_RULES, step_count

MODEL_REGISTRY: dict[str, Callable[[dict], SdeModel]] = {}


def register_model(name: str, factory: Callable[[dict], SdeModel]) -> None:
    """Make ``factory(params)`` available as ``"model": name`` in configs."""
    MODEL_REGISTRY[name] = factory


register_model(
    "kepler",
    lambda p: kepler_model(p.get("mu", KEPLER_MU), p.get("sigma3", 1e-5), p.get("sigma4", 1e-5)),
)
register_model("linear", lambda p: linear_model(p["a"], p["b"], p["sigma"]))
register_model("polynomial", lambda p: polynomial_model(p["drift"], p["diffusion"]))


@dataclass
class RunConfig:
    """Every parameter of a run, with JSON-compatible field types."""

    model: str
    init: dict
    h: float
    tn: float
    N: int
    t0: float = 0.0
    model_params: dict = field(default_factory=dict)
    noise: dict = field(default_factory=lambda: {"kind": "wiener"})
    truncation: str = "state"
    N_PCE: int = 2
    N_s: Optional[int] = None
    N_s_density: int = 100_000
    seed: int = 0
    mc_samples: int = 10_000
    grid: dict = field(default_factory=lambda: {"points": 401, "width_sigmas": 6.0})
    output_dir: str = "out"
    trajectory_stride: Optional[int] = None
    engine: str = "auto"

    # -- (de)serialization ----------------------------------------------------
    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        if not isinstance(data, dict):
            raise ConfigError("configuration must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown configuration keys: {', '.join(unknown)}")
        missing = [n for n in ("model", "init", "h", "tn", "N") if n not in data]
        if missing:
            raise ConfigError(f"missing configuration keys: {', '.join(missing)}")
        try:
            cfg = cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON in {path}: {exc}") from exc
        return cls.from_dict(data)

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    # -- validation -----------------------------------------------------------
    def validate(self) -> None:
        if self.model not in MODEL_REGISTRY:
            raise ConfigError(f"unknown model {self.model!r}; known: {sorted(MODEL_REGISTRY)}")
        if not _positive(self.h):
            raise ConfigError("h must be a positive number")
        if not (_finite(self.t0) and _finite(self.tn)) or self.tn <= self.t0:
            raise ConfigError("tn must exceed t0")
        if not isinstance(self.N, int) or not 1 <= self.N <= MAX_ORDER:
            raise ConfigError(f"N must be an integer in 1..{MAX_ORDER}")
        if self.truncation not in TRUNCATION_RULES:
            raise ConfigError(f"truncation must be one of {TRUNCATION_RULES}")
        if self.engine not in ("auto", "numpy", "numba"):
            raise ConfigError("engine must be auto, numpy or numba")
        for name in ("mc_samples", "N_s_density"):
            value = getattr(self, name)
            if not isinstance(value, int) or value < 1:
                raise ConfigError(f"{name} must be a positive integer")
        if not isinstance(self.seed, int) or not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if self.trajectory_stride is not None and (
            not isinstance(self.trajectory_stride, int) or self.trajectory_stride < 1
        ):
            raise ConfigError("trajectory_stride must be a positive integer")
        self._validate_grid()
        model = self.build_model()
        init = self.build_init()
        if init.dim != model.state_dim:
            raise ConfigError(
                f"initial state has dimension {init.dim}, model expects {model.state_dim}"
            )
        self.build_noise(model)
        if init.kind == "gaussian":
            if not isinstance(self.N_PCE, int) or self.N_PCE < 0:
                raise ConfigError("N_PCE must be a non-negative integer")
            n_p = math.comb(self.N_PCE + model.state_dim, model.state_dim)
            if self.N_s is None:
                self.N_s = 2 * n_p
            if not isinstance(self.N_s, int) or self.N_s < n_p:
                raise ConfigError(f"N_s must be at least the basis size {n_p}")
        step_count(self.t0, self.tn, self.h)

    def _validate_grid(self) -> None:
        g = self.grid
        if not isinstance(g, dict):
            raise ConfigError("grid must be an object")
        unknown = set(g) - {"points", "width_sigmas", "ranges"}
        if unknown:
            raise ConfigError(f"unknown grid keys: {sorted(unknown)}")
        points = g.get("points", 401)
        if not isinstance(points, int) or points < 2:
            raise ConfigError("grid.points must be an integer >= 2")
        if not _positive(g.get("width_sigmas", 6.0)):
            raise ConfigError("grid.width_sigmas must be positive")
        ranges = g.get("ranges")
        if ranges is not None:
            for pair in ranges:
                if len(pair) != 2 or not pair[0] < pair[1]:
                    raise ConfigError("grid.ranges entries must be [min, max] with min < max")

    # -- construction ---------------------------------------------------------
    def build_model(self) -> SdeModel:
        try:
            return MODEL_REGISTRY[self.model](dict(self.model_params))
        except KeyError as exc:
            raise ConfigError(f"missing model parameter {exc}") from exc
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"invalid model parameters: {exc}") from exc

    def build_noise(self, model: Optional[SdeModel] = None) -> NoiseModel:
        model = model or self.build_model()
        kind = self.noise.get("kind", "wiener")
        if kind == "wiener":
            return WienerNoise(model.noise_dim)
        if kind == "truncated_gaussian":
            return TruncatedGaussianNoise(model.noise_dim, float(self.noise.get("cutoff", 3.0)))
        raise ConfigError(f"unknown noise kind {kind!r}")

    def build_init(self) -> InitialCondition:
        kind = self.init.get("kind")
        try:
            if kind == "fixed":
                return InitialCondition.fixed(self.init["x0"])
            if kind == "gaussian":
                return InitialCondition.gaussian(self.init["mean"], self.init["covariance"])
        except KeyError as exc:
            raise ConfigError(f"missing initial-condition key {exc}") from exc
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"invalid initial condition: {exc}") from exc
        raise ConfigError(f"unknown initial-condition kind {kind!r}")

    @property
    def n_steps(self) -> int:
        return step_count(self.t0, self.tn, self.h)

    def density_grid(self, mean, std) -> list[np.ndarray]:
        """Per-component grids: configured ranges or ``mean +- width * std``."""
        points = self.grid.get("points", 401)
        ranges = self.grid.get("ranges")
        width = self.grid.get("width_sigmas", 6.0)
        out = []
        for k, (m, s) in enumerate(zip(mean, std)):
            if ranges is not None:
                lo, hi = ranges[k]
            else:
                half = width * s if s > 0 else max(1.0, abs(m) * 1e-6)
                lo, hi = m - half, m + half
            out.append(np.linspace(lo, hi, points))
        return out


def _finite(x: Any) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x)


def _positive(x: Any) -> bool:
    return _finite(x) and x > 0
