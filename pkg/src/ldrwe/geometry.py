"""Step set R and the convex geometry of D = conv(R).

The tangent space L of the affine hull of R and its orthogonal complement
decide which tilts are identifiable: tilts differing by a vector of L-perp
give the same tilted kernel, so solvers work in L-coordinates only.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg
from scipy.optimize import linprog

TOL_AFF = 1e-9
DELTA_RI = 1e-9
RANK_TOL = 1e-10
EXTREME_TOL = 1e-9
MAX_EXTREME_STEPS = 64


@dataclass(frozen=True)
class StepSet:
    """Ordered finite set of distinct integer steps in Z^d."""

    steps: np.ndarray = field(repr=False)

    def __init__(self, steps: Sequence[Sequence[int]] | np.ndarray):
        arr = np.asarray(steps)
        if arr.ndim == 1:
            arr = arr.reshape(-1, 1)
        if arr.ndim != 2 or arr.shape[1] < 1:
            raise ValueError("steps must be a list of integer vectors")
        if not np.all(np.equal(np.mod(arr, 1), 0)):
            raise ValueError("steps must be integer vectors")
        arr = arr.astype(np.int64)
        if arr.shape[0] < 2:
            raise ValueError("a step set needs at least two steps")
        if len({tuple(r) for r in arr.tolist()}) != arr.shape[0]:
            raise ValueError("steps must be distinct")
        arr.setflags(write=False)
        object.__setattr__(self, "steps", arr)

    @property
    def dim(self) -> int:
        return int(self.steps.shape[1])

    def __len__(self) -> int:
        return int(self.steps.shape[0])

    def __iter__(self):
        return iter(self.steps)

    def __eq__(self, other) -> bool:
        return isinstance(other, StepSet) and np.array_equal(self.steps, other.steps)

    def __hash__(self) -> int:
        return hash(self.steps.tobytes())

    def __repr__(self) -> str:
        return f"StepSet({self.steps.tolist()})"

    def tolist(self) -> list[list[int]]:
        return self.steps.tolist()


@dataclass(frozen=True)
class Geometry:
    base_point: np.ndarray
    l_basis: np.ndarray  # (k, d), rows orthonormal
    lperp_basis: np.ndarray  # (d - k, d)
    hull_dim: int
    extreme_points: np.ndarray  # (e, d)
    extreme_mask: np.ndarray  # boolean per step

    def project_l(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        return self.l_basis.T @ (self.l_basis @ v)

    def to_l_coords(self, v: np.ndarray) -> np.ndarray:
        return self.l_basis @ np.asarray(v, dtype=float)

    def from_l_coords(self, c: np.ndarray) -> np.ndarray:
        return self.l_basis.T @ np.asarray(c, dtype=float)

    def affine_residual(self, xi: np.ndarray) -> float:
        """Distance from ``xi`` to the affine hull of R."""
        v = np.asarray(xi, dtype=float) - self.base_point
        return float(np.linalg.norm(v - self.project_l(v)))


def _orthonormal_split(diffs: np.ndarray, d: int) -> tuple[np.ndarray, np.ndarray]:
    if diffs.size == 0:
        return np.zeros((0, d)), np.eye(d)
    q, r, _ = scipy.linalg.qr(diffs.T.astype(float), pivoting=True, mode="full")
    diag = np.abs(np.diag(r))
    scale = max(1.0, float(diag[0])) if diag.size else 1.0
    rank = int(np.sum(diag > RANK_TOL * scale))
    basis = q.T.copy()
    # sign convention: first significant component positive
    for row in basis:
        lead = row[np.argmax(np.abs(row) > 1e-12)]
        if lead < 0:
            row *= -1.0
    return basis[:rank], basis[rank:]


def _is_extreme(steps: np.ndarray, i: int) -> bool:
    others = np.delete(steps, i, axis=0).astype(float)
    target = steps[i].astype(float)
    m = others.shape[0]
    a_eq = np.vstack([others.T, np.ones((1, m))])
    b_eq = np.concatenate([target, [1.0]])
    res = linprog(np.zeros(m), A_eq=a_eq, b_eq=b_eq, bounds=[(0, None)] * m, method="highs")
    if res.status != 0:
        return True
    return bool(np.linalg.norm(a_eq @ res.x - b_eq) > EXTREME_TOL)


def build_geometry(steps: StepSet) -> Geometry:
    """Orthonormal bases for L and L-perp, hull dimension and extreme points."""
    z = steps.steps
    base = z[0].astype(float)
    l_basis, lperp_basis = _orthonormal_split((z[1:] - z[0]).astype(float), steps.dim)
    if len(steps) > MAX_EXTREME_STEPS:
        raise ValueError(f"extreme-point test supports at most {MAX_EXTREME_STEPS} steps")
    mask = np.array([_is_extreme(z, i) for i in range(len(steps))])
    for b in (l_basis, lperp_basis):
        b.setflags(write=False)
    return Geometry(
        base_point=base,
        l_basis=l_basis,
        lperp_basis=lperp_basis,
        hull_dim=int(l_basis.shape[0]),
        extreme_points=z[mask].copy(),
        extreme_mask=mask,
    )


def max_min_weight(xi, steps: StepSet, geom: Geometry) -> float:
    """Largest t such that xi = sum lam(z) z with lam >= t, sum lam = 1.

    Returns -inf when xi is not in conv(R).
    """
    xi = np.asarray(xi, dtype=float)
    v = xi - geom.base_point
    xi_proj = geom.base_point + geom.project_l(v)
    z = steps.steps.astype(float)
    m = len(steps)
    # variables: lam (m), t; maximize t
    c = np.zeros(m + 1)
    c[-1] = -1.0
    a_eq = np.zeros((steps.dim + 1, m + 1))
    a_eq[: steps.dim, :m] = z.T
    a_eq[steps.dim, :m] = 1.0
    b_eq = np.concatenate([xi_proj, [1.0]])
    a_ub = np.hstack([-np.eye(m), np.ones((m, 1))])  # t - lam <= 0
    b_ub = np.zeros(m)
    bounds = [(None, None)] * m + [(None, 1.0)]
    res = linprog(c, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=b_eq, bounds=bounds, method="highs")
    if res.status != 0:
        return -np.inf
    return float(res.x[-1])


def in_relative_interior(xi, geom: Geometry, steps: StepSet) -> bool:
    xi = np.asarray(xi, dtype=float).reshape(-1)
    if xi.shape != (steps.dim,) or not np.all(np.isfinite(xi)):
        return False
    if geom.affine_residual(xi) > TOL_AFF:
        return False
    return max_min_weight(xi, steps, geom) >= DELTA_RI


def project_tilt(rho, geom: Geometry) -> np.ndarray:
    """Canonical representative in L of the class rho + L-perp."""
    return geom.project_l(np.asarray(rho, dtype=float).reshape(-1))


def interior_grid(steps: StepSet, npts: int, seed: int = 0) -> list[np.ndarray]:
    """Deterministic points of ri(conv R).

    In d = 1 an evenly spaced grid covering 90% of the hull; otherwise convex
    combinations of the steps with weights bounded below by 1/(2|R|).
    """
    z = steps.steps.astype(float)
    if steps.dim == 1:
        lo, hi = float(z.min()), float(z.max())
        return [np.array([lo + (hi - lo) * t]) for t in np.linspace(0.05, 0.95, npts)]
    rng = np.random.default_rng(seed)
    m = len(steps)
    lam = 0.5 * rng.dirichlet(np.ones(m), size=npts) + 0.5 / m
    return list(lam @ z)
