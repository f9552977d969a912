"""Experiment configuration: flat TOML key-value files and built-in presets."""

from __future__ import annotations

import sys
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np
import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .environment import EnvironmentSpec, EnvKind, KernelMixture
from .errors import ConfigError
from .geometry import StepSet, build_geometry

_KINDS = {k.value for k in EnvKind}


@dataclass
class ExperimentConfig:
    steps: list[list[int]]
    env_kind: str
    weights: list[float]
    atoms: list[list[float]]
    seed: int = 0
    xi: list[list[float]] = field(default_factory=list)
    rho: list[list[float]] = field(default_factory=list)
    horizons: list[int] = field(default_factory=lambda: [10])
    replicas: int = 10_000
    samples: int = 20
    grid_points: int = 21
    window_radius: float = 0.02
    epsilon: float = 0.0
    format: str = "csv"
    tol_newton: float = 1e-12
    tol_identity: float = 1e-10

    def __post_init__(self):
        self.validate()

    # -- validation -------------------------------------------------------

    def validate(self) -> None:
        try:
            steps = StepSet(self.steps)
        except (ValueError, TypeError) as exc:
            raise ConfigError("steps", str(exc)) from None
        if self.env_kind not in _KINDS:
            raise ConfigError("env_kind", f"must be one of {sorted(_KINDS)}")
        if len(self.weights) != len(self.atoms):
            raise ConfigError("weights", "one weight per atom is required")
        for j, a in enumerate(self.atoms):
            if len(a) != len(steps):
                raise ConfigError(f"atoms[{j}]", f"expected {len(steps)} probabilities, one per step")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError("seed", "must be a 64-bit unsigned integer")
        try:
            self.environment()
        except ValueError as exc:
            raise ConfigError("atoms", str(exc)) from None
        for name in ("xi", "rho"):
            for j, v in enumerate(getattr(self, name)):
                if len(v) != steps.dim:
                    raise ConfigError(f"{name}[{j}]", f"expected {steps.dim} components")
                if not all(np.isfinite(v)):
                    raise ConfigError(f"{name}[{j}]", "components must be finite")
        if not self.horizons or any(int(n) < 1 for n in self.horizons):
            raise ConfigError("horizons", "horizons must be positive integers")
        for name in ("replicas", "samples", "grid_points"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(name, "must be at least 1")
        if self.window_radius < 0:
            raise ConfigError("window_radius", "must be nonnegative")
        if self.epsilon < 0:
            raise ConfigError("epsilon", "must be nonnegative")
        if self.format not in ("csv", "json"):
            raise ConfigError("format", "must be 'csv' or 'json'")
        for name in ("tol_newton", "tol_identity"):
            if not getattr(self, name) > 0:
                raise ConfigError(name, "must be positive")

    # -- derived objects --------------------------------------------------

    def step_set(self) -> StepSet:
        return StepSet(self.steps)

    def geometry(self):
        return build_geometry(self.step_set())

    def mixture(self) -> KernelMixture:
        return KernelMixture(list(zip(self.weights, self.atoms)))

    def environment(self) -> EnvironmentSpec:
        return EnvironmentSpec(EnvKind(self.env_kind), self.mixture(), int(self.seed))

    def xi_points(self) -> list[np.ndarray]:
        from .geometry import interior_grid

        if self.xi:
            return [np.asarray(v, dtype=float) for v in self.xi]
        return interior_grid(self.step_set(), self.grid_points)

    # -- serialization ----------------------------------------------------

    def to_dict(self) -> dict:
        d = asdict(self)
        d["seed"] = int(d["seed"])
        d["steps"] = [[int(v) for v in s] for s in d["steps"]]
        for k in ("weights",):
            d[k] = [float(v) for v in d[k]]
        for k in ("atoms", "xi", "rho"):
            d[k] = [[float(v) for v in row] for row in d[k]]
        d["horizons"] = [int(v) for v in d["horizons"]]
        return d

    def to_toml(self) -> str:
        d = self.to_dict()
        if d["seed"] >= 2**63:
            # TOML integers are signed 64-bit
            d["seed"] = str(d["seed"])
        return tomli_w.dumps(d)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(unknown[0], "unknown configuration key")
        for req in ("steps", "env_kind", "weights", "atoms"):
            if req not in data:
                raise ConfigError(req, "missing required key")
        data = dict(data)
        if "seed" in data:
            try:
                data["seed"] = int(data["seed"])
            except (TypeError, ValueError):
                raise ConfigError("seed", "must be an unsigned decimal integer") from None
        return cls(**data)

    @classmethod
    def from_toml(cls, text: str) -> "ExperimentConfig":
        try:
            data = tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError("config", f"invalid TOML: {exc}") from None
        return cls.from_dict(data)

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError("config", str(exc)) from None
        return cls.from_toml(text)

    def with_overrides(self, **kw) -> "ExperimentConfig":
        kw = {k: v for k, v in kw.items() if v is not None}
        return replace(self, **kw)


def _nn(d: int) -> list[list[int]]:
    out = []
    for i in range(d):
        e = [0] * d
        e[i] = 1
        out.append(list(e))
        e[i] = -1
        out.append(list(e))
    return out


PRESETS: dict[str, dict] = {
    "symmetric-binary": dict(
        steps=[[1], [-1]],
        env_kind="spatially-constant",
        weights=[0.5, 0.5],
        atoms=[[0.9, 0.1], [0.1, 0.9]],
    ),
    "deterministic-uniform": dict(
        steps=[[1], [-1]],
        env_kind="deterministic",
        weights=[1.0],
        atoms=[[0.5, 0.5]],
    ),
    "square-2d": dict(
        steps=_nn(2),
        env_kind="spatially-constant",
        weights=[0.5, 0.5],
        atoms=[[0.4, 0.1, 0.3, 0.2], [0.1, 0.4, 0.2, 0.3]],
    ),
    "nn-3d": dict(
        steps=_nn(3),
        env_kind="spatial-iid",
        weights=[0.5, 0.5],
        atoms=[[0.3, 0.1, 0.15, 0.15, 0.15, 0.15], [0.1, 0.3, 0.15, 0.15, 0.15, 0.15]],
        horizons=[20],
        samples=5,
    ),
}


def preset(name: str) -> ExperimentConfig:
    if name not in PRESETS:
        raise ConfigError("preset", f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    return ExperimentConfig(**PRESETS[name])
