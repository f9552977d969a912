"""Quenched level-1 rate for spatially constant environments.

Here the quenched log-MGF is Lambda(rho) = E[log W(rho, omega)], a finite
sum over mixture atoms, and I_{1,q} is its Legendre transform. By Jensen,
Lambda <= log phi_a, hence I_{1,a} <= I_{1,q}.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .averaged import RateSolution, TOL_NEWTON, MAX_NEWTON_ITER, log_mgf, newton_dual, tilted_moments
from .environment import KernelMixture, StepKernel, log_w_atoms
from .errors import NotInRelativeInterior
from .geometry import Geometry, StepSet, in_relative_interior, project_tilt


@dataclass(frozen=True)
class QuenchedDual:
    mixture: KernelMixture
    rho: np.ndarray
    w_values: np.ndarray
    lambda_value: float
    gradient: np.ndarray


def w_of(rho, kernel, steps: StepSet) -> float:
    """W(rho, q) = sum_z q(z) e^<rho,z>."""
    p = kernel.probs if isinstance(kernel, StepKernel) else np.asarray(kernel, dtype=float)
    z = steps.steps.astype(float)
    return float(p @ np.exp(z @ np.asarray(rho, dtype=float).reshape(-1)))


def lambda_quenched(rho, mixture: KernelMixture, steps: StepSet) -> QuenchedDual:
    """E[log W(rho, omega)] with its gradient, for strictly positive atoms."""
    mixture.require_positive()
    rho = np.asarray(rho, dtype=float).reshape(-1)
    lw, means = tilted_moments(rho, mixture.kernels, steps, order=1)
    w = mixture.weights
    return QuenchedDual(
        mixture=mixture,
        rho=rho,
        w_values=np.exp(lw),
        lambda_value=float(w @ lw),
        gradient=w @ means,
    )


def _lambda_dual(mixture: KernelMixture, steps: StepSet):
    w = mixture.weights

    def dual(rho):
        lw, means, covs = tilted_moments(rho, mixture.kernels, steps, order=2)
        return float(w @ lw), w @ means, np.einsum("j,jab->ab", w, covs)

    return dual


def rate_quenched(
    xi,
    mixture: KernelMixture,
    geom: Geometry,
    steps: StepSet,
    tol: float = TOL_NEWTON,
    max_iter: int = MAX_NEWTON_ITER,
) -> RateSolution:
    """I_{1,q}(xi) = sup_rho <rho, xi> - E[log W(rho, omega)]."""
    xi = np.asarray(xi, dtype=float).reshape(-1)
    mixture.require_positive()
    if not in_relative_interior(xi, geom, steps):
        raise NotInRelativeInterior(xi)
    rho, value, res, it = newton_dual(xi, _lambda_dual(mixture, steps), geom, tol, max_iter)
    return RateSolution(xi=xi, rho=project_tilt(rho, geom), value=max(value, 0.0), residual=res, iterations=it)


def jensen_gap(rho, mixture: KernelMixture, steps: StepSet) -> float:
    """log E[W] - E[log W] >= 0."""
    lw = log_w_atoms(rho, mixture, steps)
    gap = log_mgf(rho, mixture.averaged(), steps) - float(mixture.weights @ lw)
    return max(gap, 0.0)


def quenched_upper_bound(mixture: KernelMixture) -> float:
    """max_z E|log omega_{0,0}(z)|, an upper bound for I_{1,q} on D."""
    mixture.require_positive()
    return float(np.max(mixture.weights @ np.abs(np.log(mixture.kernels))))
