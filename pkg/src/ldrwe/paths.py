"""Exact endpoint dynamic programming, Monte Carlo and importance sampling.

All DP tables live on a fixed integer box containing every endpoint
reachable in ``n`` steps and are accumulated in log space: quenched
probabilities at n = 400 underflow double precision otherwise.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import logsumexp

from . import _hashing
from .averaged import log_mgf, rate_averaged, tilted_step_kernel
from .environment import (
    _STREAM_LEVELS,
    EnvironmentSample,
    EnvironmentSpec,
    KernelMixture,
    StepKernel,
    log_w_atoms,
    sample_environment,
)
from .errors import BudgetExceeded, EmptyWindow, HorizonExceeded
from .geometry import Geometry, StepSet

DP_CELL_BUDGET = 10**8
DEFAULT_RADIUS = 0.02
WINDOW_TOL = 1e-9
BLOCK = 8192

_STREAM_IS = 0x49534D43  # "ISMC"
_STREAM_WALK = 0x57414C4B  # "WALK"


def worker_count() -> int:
    """Worker cap from LDRWE_THREADS; results never depend on it."""
    default = os.cpu_count() or 1
    try:
        return max(1, int(os.environ.get("LDRWE_THREADS", default)))
    except ValueError:
        return default


def ordered_map(fn: Callable, items: Sequence) -> list:
    """``map`` over a thread pool with input-order results."""
    items = list(items)
    workers = min(worker_count(), max(1, len(items)))
    if workers == 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# endpoint law


@dataclass(frozen=True)
class EndpointLaw:
    """Exact law of X_n on the box ``lo + [0, shape)``, stored as log-probabilities."""

    n: int
    steps: StepSet
    lo: np.ndarray
    log_probs: np.ndarray = field(repr=False)

    @property
    def probs(self) -> np.ndarray:
        return np.exp(self.log_probs)

    def points(self) -> np.ndarray:
        """Coordinates of every box cell, shape (*box, d)."""
        grids = np.meshgrid(*[np.arange(s) + l for s, l in zip(self.log_probs.shape, self.lo)], indexing="ij")
        return np.stack(grids, axis=-1)

    def support(self) -> tuple[np.ndarray, np.ndarray]:
        """Endpoints with positive mass and their log-probabilities."""
        mask = np.isfinite(self.log_probs)
        return self.points()[mask], self.log_probs[mask]

    def as_dict(self) -> dict[tuple[int, ...], float]:
        pts, lp = self.support()
        return {tuple(int(v) for v in p): float(np.exp(q)) for p, q in zip(pts, lp)}

    def log_prob_at(self, x) -> np.ndarray:
        """log P(X_n = x) for an (N, d) array of endpoints (-inf off the box)."""
        x = np.asarray(x, dtype=np.int64).reshape(-1, self.lo.size)
        idx = x - self.lo
        shape = np.asarray(self.log_probs.shape)
        inside = np.all((idx >= 0) & (idx < shape), axis=1)
        out = np.full(x.shape[0], -np.inf)
        if np.any(inside):
            out[inside] = self.log_probs[tuple(idx[inside].T)]
        return out

    def total_mass(self) -> float:
        return float(np.exp(logsumexp(self.log_probs)))

    def log_mgf(self, rho) -> float:
        """log sum_x P(X_n = x) e^<rho,x>."""
        pts, lp = self.support()
        return float(logsumexp(lp + pts @ np.asarray(rho, dtype=float).reshape(-1)))


def _box(steps: StepSet, n: int, budget: int = DP_CELL_BUDGET) -> tuple[np.ndarray, tuple[int, ...]]:
    z = steps.steps
    lo = n * np.minimum(0, z.min(axis=0))
    hi = n * np.maximum(0, z.max(axis=0))
    shape = tuple(int(v) for v in hi - lo + 1)
    cells = math.prod(shape)
    if cells > budget:
        raise BudgetExceeded(f"DP box of {cells} cells exceeds budget {budget}")
    return lo.astype(np.int64), shape


def _shifted(a: np.ndarray, offset: np.ndarray) -> np.ndarray:
    """out[x] = a[x - offset], -inf where x - offset leaves the box."""
    out = np.full_like(a, -np.inf)
    src, dst = [], []
    for o, s in zip(offset, a.shape):
        o = int(o)
        if abs(o) >= s:
            return out
        if o >= 0:
            src.append(slice(0, s - o))
            dst.append(slice(o, s))
        else:
            src.append(slice(-o, s))
            dst.append(slice(0, s + o))
    out[tuple(dst)] = a[tuple(src)]
    return out


def _site_grid(lo: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    grids = np.meshgrid(*[np.arange(s) + l for s, l in zip(shape, lo)], indexing="ij")
    return np.stack([g.reshape(-1) for g in grids], axis=1)


def _log_step_probs(env, i: int, lo, shape, sites_cache: dict) -> np.ndarray:
    """log omega_{i,x}(z) as (|R|, *box) or (|R|, 1, ..., 1)."""
    ones = (1,) * len(shape)
    with np.errstate(divide="ignore"):
        if isinstance(env, StepKernel):
            return np.log(env.probs).reshape(-1, *ones)
        if not env.is_site_dependent:
            return np.log(env.level_kernel(i)).reshape(-1, *ones)
        if "sites" not in sites_cache:
            sites_cache["sites"] = _site_grid(lo, shape)
        idx = env.atom_indices(i, sites_cache["sites"])
        logk = np.log(env.mixture.kernels)
        return logk[idx].T.reshape(-1, *shape)


def endpoint_law(env: StepKernel | EnvironmentSample, n: int, steps: StepSet, budget: int = DP_CELL_BUDGET) -> EndpointLaw:
    """Exact forward DP for the law of X_n.

    ``env`` is either a step kernel (the averaged walk, or a deterministic
    environment) or a realized environment (the quenched law P_0^omega).
    """
    if n < 0:
        raise ValueError("n must be nonnegative")
    if isinstance(env, EnvironmentSample) and n > env.horizon:
        raise HorizonExceeded(f"n={n} exceeds sampled horizon {env.horizon}")
    lo, shape = _box(steps, n, budget)
    logp = np.full(shape, -np.inf)
    logp[tuple(-lo)] = 0.0
    cache: dict = {}
    z = steps.steps
    for i in range(n):
        ls = _log_step_probs(env, i, lo, shape, cache)
        new = np.full(shape, -np.inf)
        for k in range(len(steps)):
            src = logp + ls[k]
            new = np.logaddexp(new, _shifted(src, z[k]))
        logp = new
    logp.setflags(write=False)
    return EndpointLaw(n=n, steps=steps, lo=lo, log_probs=logp)


def log_quenched_mgf(env, n: int, rho, steps: StepSet) -> float:
    """log E_0^omega[e^<rho, X_n>] by DP."""
    if n == 0:
        return 0.0
    return endpoint_law(env, n, steps).log_mgf(rho)


# ---------------------------------------------------------------------------
# windows and LDP slopes


def window_points(law: EndpointLaw, xi, radius: float) -> np.ndarray:
    """Reachable endpoints x with |x/n - xi|_inf <= radius.

    With ``radius == 0`` the target is the reachable endpoint nearest to
    n*xi (ties broken lexicographically).
    """
    xi = np.asarray(xi, dtype=float).reshape(-1)
    pts, _ = law.support()
    if pts.size == 0:
        raise EmptyWindow("empty support")
    target = law.n * xi
    if radius == 0:
        dist = np.linalg.norm(pts - target, axis=1)
        best = np.flatnonzero(dist <= dist.min() + WINDOW_TOL)
        order = np.lexsort(pts[best].T[::-1])
        return pts[best[order[:1]]]
    inside = np.all(np.abs(pts - target) <= law.n * radius + WINDOW_TOL, axis=1)
    if not np.any(inside):
        raise EmptyWindow(f"no reachable endpoint with |X_n/n - xi| <= {radius} at n={law.n}")
    return pts[inside]


def log_window_prob(law: EndpointLaw, xi, radius: float) -> float:
    pts = window_points(law, xi, radius)
    return float(logsumexp(law.log_prob_at(pts)))


def ldp_slope(env, xi, n_grid: Sequence[int], steps: StepSet, window_radius: float = DEFAULT_RADIUS) -> list[tuple[int, float]]:
    """-(1/n) log P(X_n in n B(xi, radius)) along ``n_grid``, exactly."""
    out = []
    for n in n_grid:
        law = endpoint_law(env, int(n), steps)
        out.append((int(n), -log_window_prob(law, xi, window_radius) / n))
    return out


def conditional_first_steps(qhat, n: int, xi, steps: StepSet, k: int = 1, window_radius: float = DEFAULT_RADIUS):
    """Exact law of (Z_1..Z_k) given X_n in n B(xi, radius) under the averaged walk."""
    from .tilted import StepJointLaw, enumerate_tuples

    if not 1 <= k <= n:
        raise ValueError("need 1 <= k <= n")
    qhat = qhat if isinstance(qhat, StepKernel) else StepKernel(qhat)
    full = endpoint_law(qhat, n, steps)
    window = window_points(full, xi, window_radius)
    rest = endpoint_law(qhat, n - k, steps)
    idx, sums = enumerate_tuples(steps, k)
    with np.errstate(divide="ignore"):
        logq = np.log(qhat.probs)
    log_path = logq[idx].sum(axis=1)
    # log P(X_{n-k} in W - s) for each tuple sum s
    lw = np.array([logsumexp(rest.log_prob_at(window - s)) for s in sums])
    joint = log_path + lw
    total = logsumexp(joint)
    if not np.isfinite(total):
        raise EmptyWindow("window has zero probability")
    probs = np.exp(joint - total).reshape((len(steps),) * k)
    return StepJointLaw(steps=steps, probs=probs)


def total_variation(p, q) -> float:
    p = np.asarray(getattr(p, "probs", p), dtype=float).reshape(-1)
    q = np.asarray(getattr(q, "probs", q), dtype=float).reshape(-1)
    return 0.5 * float(np.abs(p - q).sum())


# ---------------------------------------------------------------------------
# Monte Carlo


@dataclass(frozen=True)
class MCEstimate:
    mean: float
    stderr: float
    replicas: int
    seed: int
    kind: str

    @property
    def rel_stderr(self) -> float:
        return self.stderr / self.mean if self.mean > 0 else math.inf


def _block_ranges(replicas: int) -> list[tuple[int, int]]:
    return [(s, min(s + BLOCK, replicas)) for s in range(0, replicas, BLOCK)]


def _sample_step_indices(seed: int, stream: int, r0: int, r1: int, n: int, cumulative: np.ndarray) -> np.ndarray:
    u = _hashing.uniforms(seed, stream, np.arange(r0, r1)[:, None], np.arange(n)[None, :])
    return _hashing.categorical(u, cumulative)


def importance_sample(
    qhat,
    n: int,
    xi,
    steps: StepSet,
    geom: Geometry,
    replicas: int,
    seed: int,
    window_radius: float = DEFAULT_RADIUS,
    rho=None,
) -> MCEstimate:
    """Unbiased estimate of P_0(X_n in n B(xi, radius)) under the averaged walk.

    Steps are drawn from the exponentially tilted kernel and reweighted by
    exp(-<rho, X_n> + n log phi_a(rho)). ``rho`` defaults to the tilt that
    solves the averaged dual at ``xi``; ``rho = 0`` is naive Monte Carlo.
    """
    qhat = qhat if isinstance(qhat, StepKernel) else StepKernel(qhat)
    if rho is None:
        rho = rate_averaged(xi, qhat, geom, steps).rho
    rho = np.asarray(rho, dtype=float).reshape(-1)
    kind = "naive" if not np.any(rho) else "tilted"
    sampler = tilted_step_kernel(rho, qhat, steps)
    cumulative = np.cumsum(sampler.probs)
    lphi = log_mgf(rho, qhat, steps)
    window = window_points(endpoint_law(qhat, n, steps), xi, window_radius)
    window_set = {tuple(int(v) for v in p) for p in window}
    z = steps.steps

    def block(bounds):
        r0, r1 = bounds
        idx = _sample_step_indices(seed, _STREAM_IS, r0, r1, n, cumulative)
        x = z[idx].sum(axis=1)
        hit = np.fromiter((tuple(v) in window_set for v in x.tolist()), dtype=bool, count=x.shape[0])
        logw = -x @ rho + n * lphi
        vals = np.where(hit, np.exp(logw), 0.0)
        return float(vals.sum()), float((vals * vals).sum())

    parts = ordered_map(block, _block_ranges(replicas))
    s1 = math.fsum(p[0] for p in parts)
    s2 = math.fsum(p[1] for p in parts)
    mean = s1 / replicas
    var = max(s2 / replicas - mean * mean, 0.0) * replicas / max(replicas - 1, 1)
    return MCEstimate(mean=mean, stderr=math.sqrt(var / replicas), replicas=replicas, seed=seed, kind=kind)


def simulate_endpoints(env, n: int, steps: StepSet, replicas: int, seed: int) -> np.ndarray:
    """Endpoints X_n of ``replicas`` independent walks in ``env``.

    Replica ``r`` uses uniforms keyed by ``(seed, r, step)``.
    """
    if isinstance(env, EnvironmentSample) and n > env.horizon:
        raise HorizonExceeded(f"n={n} exceeds sampled horizon {env.horizon}")
    z = steps.steps

    def block(bounds):
        r0, r1 = bounds
        u = _hashing.uniforms(seed, _STREAM_WALK, np.arange(r0, r1)[:, None], np.arange(n)[None, :])
        x = np.zeros((r1 - r0, steps.dim), dtype=np.int64)
        for i in range(n):
            if isinstance(env, StepKernel):
                cum = np.cumsum(env.probs)[None, :]
            elif env.is_site_dependent:
                cum = np.cumsum(env.mixture.kernels[env.atom_indices(i, x)], axis=1)
            else:
                cum = np.cumsum(env.level_kernel(i))[None, :]
            k = np.minimum((u[:, i : i + 1] >= cum).sum(axis=1), len(steps) - 1)
            x += z[k]
        return x

    return np.concatenate(ordered_map(block, _block_ranges(replicas)), axis=0)


# ---------------------------------------------------------------------------
# concentration of log u_n in spatially constant environments


@dataclass(frozen=True)
class ConcentrationRow:
    n: int
    mean_log_un: float
    stderr_log_un: float
    expected_log_un: float
    tail_frequency: float


@dataclass(frozen=True)
class ConcentrationReport:
    rho: np.ndarray
    epsilon: float
    replicas: int
    rows: list[ConcentrationRow]
    log_tail_slope: float


def level_matrix(mixture: KernelMixture, n: int, replicas: int, seed: int) -> np.ndarray:
    """Atom indices (replicas, n); row r equals ``sample_levels(..., replica=r)``."""
    return _levels_range(mixture, n, 0, replicas, seed)


def log_un_concentration(
    rho,
    mixture: KernelMixture,
    steps: StepSet,
    n_grid: Sequence[int],
    replicas: int,
    epsilon: float,
    seed: int,
) -> ConcentrationReport:
    """Empirical tails of |log u_n - E log u_n| >= n*epsilon.

    In a spatially constant environment log u_n is the sum of
    log u_1(rho, level_i), so E log u_n = n (Lambda_q(rho) - log phi_a(rho))
    is exact and used as the centering.
    """
    mixture.require_positive()
    rho = np.asarray(rho, dtype=float).reshape(-1)
    n_grid = sorted(int(n) for n in n_grid)
    log_u1 = log_w_atoms(rho, mixture, steps) - log_mgf(rho, mixture.averaged(), steps)
    drift = float(mixture.weights @ log_u1)
    nmax = n_grid[-1]

    def block(bounds):
        r0, r1 = bounds
        lv = _levels_range(mixture, nmax, r0, r1, seed)
        cs = np.cumsum(log_u1[lv], axis=1)
        return cs[:, [n - 1 for n in n_grid]]

    vals = np.concatenate(ordered_map(block, _block_ranges(replicas)), axis=0)
    rows = []
    for j, n in enumerate(n_grid):
        v = vals[:, j]
        se = float(v.std(ddof=1) / math.sqrt(replicas)) if replicas > 1 else math.inf
        tail = float(np.mean(np.abs(v - n * drift) >= n * epsilon))
        rows.append(ConcentrationRow(n, float(v.mean()), se, n * drift, tail))
    pos = [(r.n, math.log(r.tail_frequency)) for r in rows if r.tail_frequency > 0]
    slope = float(np.polyfit([p[0] for p in pos], [p[1] for p in pos], 1)[0]) if len(pos) >= 2 else math.nan
    return ConcentrationReport(rho=rho, epsilon=float(epsilon), replicas=replicas, rows=rows, log_tail_slope=slope)


def _levels_range(mixture: KernelMixture, n: int, r0: int, r1: int, seed: int) -> np.ndarray:
    u = _hashing.uniforms(seed, _STREAM_LEVELS, np.arange(r0, r1)[:, None], np.arange(n)[None, :])
    return _hashing.categorical(u, np.cumsum(mixture.weights))


# ---------------------------------------------------------------------------
# dimension probe


@dataclass(frozen=True)
class GapRow:
    xi: np.ndarray
    averaged_slope: float
    quenched_slope: float
    quenched_stderr: float
    gap: float
    z_score: float


def nearest_neighbor_steps(d: int) -> StepSet:
    eye = np.eye(d, dtype=np.int64)
    return StepSet(np.vstack([v for e in eye for v in (e, -e)]))


def dimension_gap_probe(
    d: int,
    mixture: KernelMixture,
    xi_list: Sequence,
    n: int,
    samples: int,
    seed: int,
    window_radius: float = DEFAULT_RADIUS,
) -> list[GapRow]:
    """Averaged vs. mean quenched finite-n slopes for a nearest-neighbour walk
    in a space-time i.i.d. field. Exploratory: reports, asserts nothing."""
    steps = nearest_neighbor_steps(d)
    if mixture.n_steps != len(steps):
        raise ValueError(f"mixture atoms must have {len(steps)} entries for d={d}")
    qhat = mixture.averaged()
    spec = EnvironmentSpec.spatial_iid(mixture, seed)
    avg = endpoint_law(qhat, n, steps)
    quenched = ordered_map(lambda s: endpoint_law(sample_environment(spec, n, d, replica=s), n, steps), range(samples))
    rows = []
    for xi in xi_list:
        xi = np.asarray(xi, dtype=float).reshape(-1)
        a = -log_window_prob(avg, xi, window_radius) / n
        # the same lattice window for every sample
        pts = window_points(avg, xi, window_radius)
        q = np.array([-float(logsumexp(law.log_prob_at(pts))) / n for law in quenched])
        mean = float(q.mean())
        se = float(q.std(ddof=1) / math.sqrt(samples)) if samples > 1 else math.inf
        gap = mean - a
        z = gap / se if se > 0 else (math.inf if gap > 0 else 0.0)
        rows.append(GapRow(xi=xi, averaged_slope=a, quenched_slope=mean, quenched_stderr=se, gap=gap, z_score=z))
    return rows


def slope_correction_constant(slopes: Sequence[tuple[int, float]], rate: float) -> float:
    """Smallest C >= 0 with slope_n >= rate - C log(n)/n over the given rows."""
    c = 0.0
    for n, s in slopes:
        if n > 1:
            c = max(c, (rate - s) * n / math.log(n))
    return c
