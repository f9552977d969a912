"""Environment laws, level sequences and site-indexed i.i.d. fields.

Only finitely supported kernel laws are modelled. A spatially constant
environment uses one kernel per time level for every site; a spatial i.i.d.
field draws an independent atom at every space-time point from a counter
hash of ``(seed, time, site)``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from . import _hashing
from .errors import HorizonExceeded, ZeroProbabilityStep
from .geometry import StepSet

NORM_TOL = 1e-12
DEGENERACY_TOL = 1e-10

_STREAM_LEVELS = 0x4C455645  # "LEVE"
_STREAM_FIELD = 0x4649454C  # "FIEL"


class StepKernel:
    """Probability vector indexed by the steps of a StepSet."""

    __slots__ = ("probs",)

    def __init__(self, probs: Sequence[float] | np.ndarray):
        p = np.array(probs, dtype=float).reshape(-1)
        if p.size < 1 or np.any(p < 0) or not np.all(np.isfinite(p)):
            raise ValueError(f"kernel entries must be finite and nonnegative: {p.tolist()}")
        if abs(p.sum() - 1.0) > NORM_TOL:
            raise ValueError(f"kernel entries must sum to 1 (got {p.sum()!r})")
        p.setflags(write=False)
        self.probs = p

    def __len__(self) -> int:
        return self.probs.size

    def __eq__(self, other) -> bool:
        return isinstance(other, StepKernel) and np.array_equal(self.probs, other.probs)

    def __repr__(self) -> str:
        return f"StepKernel({self.probs.tolist()})"

    @property
    def strictly_positive(self) -> bool:
        return bool(np.all(self.probs > 0))

    def mean(self, steps: StepSet) -> np.ndarray:
        return self.probs @ steps.steps.astype(float)


class KernelMixture:
    """Finitely supported law on kernels: atoms ``(weight, StepKernel)``."""

    __slots__ = ("weights", "kernels")

    def __init__(self, atoms: Sequence[tuple[float, StepKernel | Sequence[float]]]):
        if len(atoms) < 1:
            raise ValueError("a kernel mixture needs at least one atom")
        w = np.array([float(a[0]) for a in atoms])
        ks = [a[1] if isinstance(a[1], StepKernel) else StepKernel(a[1]) for a in atoms]
        if np.any(w <= 0) or not np.all(np.isfinite(w)):
            raise ValueError("mixture weights must be positive")
        if abs(w.sum() - 1.0) > NORM_TOL:
            raise ValueError(f"mixture weights must sum to 1 (got {w.sum()!r})")
        if len({len(k) for k in ks}) != 1:
            raise ValueError("all atoms must have the same number of steps")
        k = np.vstack([k.probs for k in ks])
        w.setflags(write=False)
        k.setflags(write=False)
        self.weights = w
        self.kernels = k

    @classmethod
    def single(cls, kernel: StepKernel | Sequence[float]) -> "KernelMixture":
        return cls([(1.0, kernel)])

    @property
    def atoms(self) -> list[tuple[float, StepKernel]]:
        return [(float(w), StepKernel(k)) for w, k in zip(self.weights, self.kernels)]

    @property
    def n_atoms(self) -> int:
        return int(self.weights.size)

    @property
    def n_steps(self) -> int:
        return int(self.kernels.shape[1])

    def averaged(self) -> StepKernel:
        q = self.weights @ self.kernels
        return StepKernel(q / q.sum())

    def require_positive(self) -> None:
        if np.any(self.kernels <= 0):
            raise ZeroProbabilityStep("every atom kernel must be strictly positive on R")

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, KernelMixture)
            and np.array_equal(self.weights, other.weights)
            and np.array_equal(self.kernels, other.kernels)
        )

    def __repr__(self) -> str:
        return f"KernelMixture(weights={self.weights.tolist()}, kernels={self.kernels.tolist()})"


class EnvKind(str, enum.Enum):
    DETERMINISTIC = "deterministic"
    SPATIALLY_CONSTANT = "spatially-constant"
    SPATIAL_IID = "spatial-iid"


@dataclass(frozen=True)
class EnvironmentSpec:
    kind: EnvKind
    mixture: KernelMixture
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", EnvKind(self.kind))
        if self.kind is EnvKind.DETERMINISTIC and self.mixture.n_atoms != 1:
            raise ValueError("a deterministic environment has exactly one kernel")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    @classmethod
    def deterministic(cls, kernel: StepKernel | Sequence[float], seed: int = 0) -> "EnvironmentSpec":
        return cls(EnvKind.DETERMINISTIC, KernelMixture.single(kernel), seed)

    @classmethod
    def spatially_constant(cls, mixture: KernelMixture, seed: int = 0) -> "EnvironmentSpec":
        return cls(EnvKind.SPATIALLY_CONSTANT, mixture, seed)

    @classmethod
    def spatial_iid(cls, mixture: KernelMixture, seed: int = 0) -> "EnvironmentSpec":
        return cls(EnvKind.SPATIAL_IID, mixture, seed)


@dataclass(frozen=True)
class EnvironmentSample:
    """A realized environment on time levels ``0 .. horizon-1``.

    ``levels`` holds atom indices for spatially constant samples and is
    ``None`` otherwise. Offsets implement the space-time shift T_{i,x}.
    """

    spec: EnvironmentSpec
    horizon: int
    dim: int
    levels: np.ndarray | None = field(default=None, repr=False)
    field_seed: int = 0
    time_offset: int = 0
    site_offset: tuple[int, ...] = ()

    def __post_init__(self):
        if not self.site_offset:
            object.__setattr__(self, "site_offset", (0,) * self.dim)

    @property
    def mixture(self) -> KernelMixture:
        return self.spec.mixture

    def shift(self, i: int, x=None) -> "EnvironmentSample":
        """The environment seen from space-time point (i, x)."""
        if i < 0 or i > self.horizon:
            raise HorizonExceeded(f"shift by {i} outside horizon {self.horizon}")
        site = self.site_offset
        if x is not None:
            x = np.atleast_1d(np.asarray(x, dtype=np.int64))
            if x.shape != (self.dim,):
                raise ValueError(f"site shift must have {self.dim} components")
            site = tuple(int(a + b) for a, b in zip(site, x))
        return replace(self, horizon=self.horizon - i, time_offset=self.time_offset + i, site_offset=site)

    def _check(self, i: int) -> None:
        if i < 0 or i >= self.horizon:
            raise HorizonExceeded(f"time {i} outside sampled horizon {self.horizon}")

    def atom_indices(self, i: int, sites: np.ndarray | None = None) -> np.ndarray | int:
        """Atom index at time ``i``; vectorized over an (N, d) site array."""
        self._check(i)
        kind = self.spec.kind
        if kind is EnvKind.DETERMINISTIC:
            return 0
        if kind is EnvKind.SPATIALLY_CONSTANT:
            return int(self.levels[self.time_offset + i])
        if sites is None:
            raise ValueError("spatial i.i.d. fields need explicit sites")
        sites = np.asarray(sites, dtype=np.int64).reshape(-1, self.dim)
        sites = sites + np.asarray(self.site_offset, dtype=np.int64)
        t = self.time_offset + i
        u = _hashing.uniforms(self.field_seed, _STREAM_FIELD, t, *sites.T)
        return _hashing.categorical(u, np.cumsum(self.mixture.weights))

    @property
    def is_site_dependent(self) -> bool:
        return self.spec.kind is EnvKind.SPATIAL_IID

    def level_kernel(self, i: int) -> np.ndarray:
        """Kernel probabilities at time ``i`` for site-independent samples."""
        if self.is_site_dependent:
            raise ValueError("kernel varies with the site for spatial i.i.d. fields")
        return self.mixture.kernels[self.atom_indices(i)]


def _sample(spec: EnvironmentSpec, horizon: int, levels, field_seed: int, dim: int) -> EnvironmentSample:
    return EnvironmentSample(spec=spec, horizon=int(horizon), dim=int(dim), levels=levels, field_seed=field_seed)


def averaged_kernel(env: EnvironmentSpec | KernelMixture | StepKernel) -> StepKernel:
    """q-hat(z) = E[omega_{0,0}(z)]."""
    if isinstance(env, StepKernel):
        return env
    if isinstance(env, EnvironmentSpec):
        env = env.mixture
    return env.averaged()


def sample_levels(mixture: KernelMixture, n: int, seed: int, replica: int = 0, dim: int = 1) -> EnvironmentSample:
    """``n`` i.i.d. atom indices drawn with the mixture weights.

    Level ``i`` of replica ``r`` depends only on ``(seed, r, i)``.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    u = _hashing.uniforms(seed, _STREAM_LEVELS, replica, np.arange(n, dtype=np.int64))
    levels = _hashing.categorical(u, np.cumsum(mixture.weights)).astype(np.int64)
    levels.setflags(write=False)
    return _sample(EnvironmentSpec.spatially_constant(mixture, seed), n, levels, 0, dim)


def sample_environment(spec: EnvironmentSpec, n: int, dim: int, replica: int = 0) -> EnvironmentSample:
    """Realize ``spec`` on ``n`` time levels for replica ``replica``."""
    if spec.kind is EnvKind.SPATIALLY_CONSTANT:
        s = sample_levels(spec.mixture, n, spec.seed, replica, dim)
        return replace(s, spec=spec)
    field_seed = int(_hashing.hash64(spec.seed, _STREAM_FIELD, replica)) if spec.kind is EnvKind.SPATIAL_IID else 0
    return _sample(spec, n, None, field_seed, dim)


def constant_levels(mixture: KernelMixture, levels: Sequence[int], dim: int = 1) -> EnvironmentSample:
    """Spatially constant sample with explicitly given atom indices."""
    lv = np.asarray(levels, dtype=np.int64)
    if lv.ndim != 1 or lv.size < 1 or np.any(lv < 0) or np.any(lv >= mixture.n_atoms):
        raise ValueError("levels must be valid atom indices")
    lv.setflags(write=False)
    return _sample(EnvironmentSpec.spatially_constant(mixture), lv.size, lv, 0, dim)


def kernel_at(env_sample: EnvironmentSample, i: int, x) -> StepKernel:
    """Kernel omega_{i,x} of a realized environment."""
    x = np.atleast_1d(np.asarray(x, dtype=np.int64))
    if env_sample.is_site_dependent:
        idx = int(env_sample.atom_indices(i, x.reshape(1, -1))[0])
    else:
        idx = env_sample.atom_indices(i)
    return StepKernel(env_sample.mixture.kernels[idx])


def log_w_atoms(rho, mixture: KernelMixture, steps: StepSet) -> np.ndarray:
    """log W(rho, q_j) for every atom j (-inf-safe for zero entries)."""
    rho = np.asarray(rho, dtype=float).reshape(-1)
    e = steps.steps.astype(float) @ rho
    with np.errstate(divide="ignore"):
        return logsumexp(e[None, :] + np.log(mixture.kernels), axis=1)


def degeneracy_check(mixture: KernelMixture, rho, steps: StepSet) -> bool:
    """True iff W(rho, q_j) is the same for all atoms (relative 1e-10)."""
    lw = log_w_atoms(rho, mixture, steps)
    return bool(np.max(lw) - np.min(lw) <= DEGENERACY_TOL)
