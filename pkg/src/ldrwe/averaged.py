"""Averaged level-1 rate: Legendre transform of the log-MGF of q-hat."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import logsumexp

from .environment import StepKernel
from .errors import NonConvergence, NotInRelativeInterior, ZeroProbabilityStep
from .geometry import Geometry, StepSet, in_relative_interior, project_tilt

TOL_NEWTON = 1e-12
MAX_NEWTON_ITER = 100


@dataclass(frozen=True)
class RateSolution:
    xi: np.ndarray
    rho: np.ndarray
    value: float
    residual: float
    iterations: int = 0


def _probs(kernel) -> np.ndarray:
    return kernel.probs if isinstance(kernel, StepKernel) else np.asarray(kernel, dtype=float)


def tilted_moments(rho, probs: np.ndarray, steps: StepSet, order: int = 2):
    """log sum_z p(z) e^<rho,z> with tilted mean and covariance.

    Works row-wise when ``probs`` is an (J, |R|) array of kernels.
    """
    z = steps.steps.astype(float)
    rho = np.asarray(rho, dtype=float).reshape(-1)
    e = z @ rho
    with np.errstate(divide="ignore"):
        a = np.log(probs) + e
    lse = logsumexp(a, axis=-1)
    if order == 0:
        return lse
    t = np.exp(a - np.expand_dims(lse, -1))
    mean = t @ z
    if order == 1:
        return lse, mean
    second = np.einsum("...k,ki,kj->...ij", t, z, z)
    cov = second - np.einsum("...i,...j->...ij", mean, mean)
    return lse, mean, cov


def log_mgf(rho, qhat, steps: StepSet) -> float:
    """log phi_a(rho) = log sum_z q-hat(z) e^<rho,z>."""
    return float(tilted_moments(rho, _probs(qhat), steps, order=0))


def log_mgf_grad(rho, qhat, steps: StepSet) -> np.ndarray:
    return tilted_moments(rho, _probs(qhat), steps, order=1)[1]


def log_mgf_hess(rho, qhat, steps: StepSet) -> np.ndarray:
    return tilted_moments(rho, _probs(qhat), steps, order=2)[2]


def lln_velocity(qhat, steps: StepSet) -> np.ndarray:
    return _probs(qhat) @ steps.steps.astype(float)


def tilted_step_kernel(rho, qhat, steps: StepSet) -> StepKernel:
    """q-hat(z) e^<rho,z> / phi_a(rho)."""
    p = _probs(qhat)
    lse = log_mgf(rho, p, steps)
    with np.errstate(divide="ignore"):
        t = np.exp(np.log(p) + steps.steps.astype(float) @ np.asarray(rho, dtype=float).reshape(-1) - lse)
    return StepKernel(t / t.sum())


def newton_dual(
    xi,
    dual: Callable[[np.ndarray], tuple[float, np.ndarray, np.ndarray]],
    geom: Geometry,
    tol: float = TOL_NEWTON,
    max_iter: int = MAX_NEWTON_ITER,
) -> tuple[np.ndarray, float, float, int]:
    """Maximize <rho, xi> - dual(rho) over rho in L by damped Newton.

    ``dual`` returns value, gradient and Hessian. Returns the maximizer
    (in ambient coordinates), the maximum, the L-projected residual of
    grad dual(rho) - xi and the iteration count.
    """
    xi = np.asarray(xi, dtype=float)
    b = geom.l_basis
    c = np.zeros(b.shape[0])

    def objective(cv):
        rho = b.T @ cv
        f, g, h = dual(rho)
        return f - rho @ xi, b @ (g - xi), b @ h @ b.T

    f, g, h = objective(c)
    for it in range(max_iter + 1):
        res = float(np.linalg.norm(g))
        if res <= tol:
            rho = b.T @ c
            return rho, float(-f), res, it
        if it == max_iter:
            break
        try:
            step = -np.linalg.solve(h, g)
        except np.linalg.LinAlgError:
            step = -g
        slope = float(g @ step)
        if slope >= 0:
            step, slope = -g, -float(g @ g)
        t = 1.0
        while True:
            f_new, g_new, h_new = objective(c + t * step)
            # near the optimum f changes below round-off; the gradient norm still decreases
            if f_new <= f + 1e-4 * t * slope or np.linalg.norm(g_new) <= (1 - 1e-4 * t) * res or t < 1e-12:
                break
            t *= 0.5
        c = c + t * step
        f, g, h = f_new, g_new, h_new
    raise NonConvergence(f"Newton dual solve did not reach residual {tol:g} (got {res:.3e}) at xi={xi.tolist()}")


def rate_averaged(
    xi,
    qhat,
    geom: Geometry,
    steps: StepSet,
    tol: float = TOL_NEWTON,
    max_iter: int = MAX_NEWTON_ITER,
) -> RateSolution:
    """I_{1,a}(xi) with its canonical tilt in L.

    Raises NotInRelativeInterior for xi on the boundary of conv(R) or outside.
    """
    xi = np.asarray(xi, dtype=float).reshape(-1)
    p = _probs(qhat)
    if np.any(p <= 0):
        raise ZeroProbabilityStep("the averaged kernel must charge every step")
    if not in_relative_interior(xi, geom, steps):
        raise NotInRelativeInterior(xi)

    def dual(rho):
        f, g, h = tilted_moments(rho, p, steps)
        return float(f), g, h

    rho, value, res, it = newton_dual(xi, dual, geom, tol, max_iter)
    return RateSolution(xi=xi, rho=project_tilt(rho, geom), value=max(value, 0.0), residual=res, iterations=it)
