"""Minimizers of the averaged and quenched contractions and their kernels.

mu^xi reweights the averaged walk by exp(<rho, X_n> - n log phi_a(rho)),
rho solving the averaged dual; nu^xi (constant environments only) tilts
each level kernel with the quenched dual tilt instead.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.special import logsumexp

from .averaged import log_mgf, rate_averaged
from .environment import EnvironmentSample, KernelMixture, StepKernel
from .errors import CapExceeded, HorizonExceeded, NonpositiveU
from .geometry import Geometry, StepSet
from .paths import endpoint_law, log_quenched_mgf
from .quenched import rate_quenched

ENUMERATION_CAP = 10**6


@dataclass(frozen=True)
class StepJointLaw:
    """Law of (Z_1, ..., Z_ell) as an array with one axis per step."""

    steps: StepSet
    probs: np.ndarray

    @property
    def horizon(self) -> int:
        return self.probs.ndim

    def total(self) -> float:
        return float(self.probs.sum())

    def marginal(self, i: int = 0) -> np.ndarray:
        axes = tuple(a for a in range(self.horizon) if a != i)
        return self.probs.sum(axis=axes)

    def mean_step(self, i: int = 0) -> np.ndarray:
        return self.marginal(i) @ self.steps.steps.astype(float)

    def as_dict(self) -> dict[tuple[tuple[int, ...], ...], float]:
        z = [tuple(int(v) for v in s) for s in self.steps.steps]
        return {tuple(z[k] for k in idx): float(p) for idx, p in np.ndenumerate(self.probs)}


@dataclass(frozen=True)
class TiltedKernelFamily:
    xi: np.ndarray
    rho: np.ndarray
    kernels: list[StepKernel]
    weights: np.ndarray

    def mean_step(self, steps: StepSet) -> np.ndarray:
        """Step mean with the environment averaged under its own law."""
        k = np.vstack([q.probs for q in self.kernels])
        return self.weights @ (k @ steps.steps.astype(float))


def enumerate_tuples(steps: StepSet, ell: int) -> tuple[np.ndarray, np.ndarray]:
    """Index tuples in row-major order and their step sums."""
    m = len(steps)
    if m**ell > ENUMERATION_CAP:
        raise CapExceeded(f"|R|^ell = {m**ell} exceeds enumeration cap {ENUMERATION_CAP}")
    idx = np.array(list(itertools.product(range(m), repeat=ell)), dtype=np.int64).reshape(-1, ell)
    sums = steps.steps[idx].sum(axis=1) if ell else np.zeros((1, steps.dim), dtype=np.int64)
    return idx, sums


def mu_xi_step_law(xi, qhat, geom: Geometry, steps: StepSet, ell: int) -> StepJointLaw:
    """Law of (Z_1..Z_ell) under mu^xi from its defining expectation.

    Each tuple gets P_0(Z = z) * exp(<rho, x_ell> - ell log phi_a(rho)),
    with P_0 the averaged path law; the product form is not assumed.
    """
    qhat = qhat if isinstance(qhat, StepKernel) else StepKernel(qhat)
    sol = rate_averaged(xi, qhat, geom, steps)
    idx, sums = enumerate_tuples(steps, ell)
    with np.errstate(divide="ignore"):
        log_path = np.log(qhat.probs)[idx].sum(axis=1)
    log_density = sums @ sol.rho - ell * log_mgf(sol.rho, qhat, steps)
    probs = np.exp(log_path + log_density).reshape((len(steps),) * ell)
    return StepJointLaw(steps=steps, probs=probs)


def sc_mu_kernel(rho, kernel, steps: StepSet) -> StepKernel:
    """pi(z) e^<rho,z> / W(rho, pi) for one environment level."""
    p = kernel.probs if isinstance(kernel, StepKernel) else np.asarray(kernel, dtype=float)
    with np.errstate(divide="ignore"):
        a = np.log(p) + steps.steps.astype(float) @ np.asarray(rho, dtype=float).reshape(-1)
    t = np.exp(a - logsumexp(a))
    return StepKernel(t / t.sum())


def sc_nu_kernel(xi, mixture: KernelMixture, geom: Geometry, steps: StepSet) -> TiltedKernelFamily:
    """Per-atom kernels of nu^xi, tilted with the quenched dual solution."""
    sol = rate_quenched(xi, mixture, geom, steps)
    kernels = [sc_mu_kernel(sol.rho, k, steps) for k in mixture.kernels]
    return TiltedKernelFamily(xi=sol.xi, rho=sol.rho, kernels=kernels, weights=mixture.weights)


def sc_mu_family(xi, mixture: KernelMixture, geom: Geometry, steps: StepSet) -> TiltedKernelFamily:
    """Per-atom kernels of mu^xi; environment weights are those of P."""
    sol = rate_averaged(xi, mixture.averaged(), geom, steps)
    kernels = [sc_mu_kernel(sol.rho, k, steps) for k in mixture.kernels]
    return TiltedKernelFamily(xi=sol.xi, rho=sol.rho, kernels=kernels, weights=mixture.weights)


def alpha_n_kernel(rho, env_sample: EnvironmentSample, n: int, steps: StepSet) -> np.ndarray:
    """alpha_n(omega, .) = E[e^<rho,X_n>, Z_1 = .] / E[e^<rho,X_n>] by DP.

    Uses the Markov property at time 1: the numerator for step z is
    omega_{0,0}(z) e^<rho,z> E^{T_{1,z} omega}[e^<rho, X_{n-1}>].
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    if n > env_sample.horizon:
        raise HorizonExceeded(f"n={n} exceeds sampled horizon {env_sample.horizon}")
    rho = np.asarray(rho, dtype=float).reshape(-1)
    z = steps.steps
    origin = np.zeros((1, steps.dim), dtype=np.int64)
    k0 = env_sample.mixture.kernels[np.asarray(env_sample.atom_indices(0, origin)).reshape(-1)[0]]
    denom = log_quenched_mgf(env_sample, n, rho, steps)
    with np.errstate(divide="ignore"):
        logk0 = np.log(k0)
    num = np.array(
        [
            logk0[j] + z[j] @ rho + log_quenched_mgf(env_sample.shift(1, z[j]), n - 1, rho, steps)
            if k0[j] > 0
            else -np.inf
            for j in range(len(steps))
        ]
    )
    return np.exp(num - denom)


def kernel_alpha_n(rho, env_sample: EnvironmentSample, n: int, z: int, steps: StepSet) -> float:
    """Component ``z`` (a step index) of :func:`alpha_n_kernel`."""
    return float(alpha_n_kernel(rho, env_sample, n, steps)[z])


def log_u_n(rho, env_sample: EnvironmentSample, n: int, steps: StepSet, qhat=None) -> float:
    """log u_n(rho, omega) = log E_0^omega[e^<rho,X_n> - n log phi_a(rho)]."""
    qhat = env_sample.mixture.averaged() if qhat is None else qhat
    if n > env_sample.horizon:
        raise HorizonExceeded(f"n={n} exceeds sampled horizon {env_sample.horizon}")
    return log_quenched_mgf(env_sample, n, rho, steps) - n * log_mgf(rho, qhat, steps)


def u_n_value(rho, env_sample: EnvironmentSample, n: int, steps: StepSet, qhat=None) -> float:
    return float(np.exp(log_u_n(rho, env_sample, n, steps, qhat)))


def u_n_profile(rho, env_sample: EnvironmentSample, n: int, steps: StepSet, qhat=None):
    """Endpoints x and u_n(rho, omega, x) = E_0^omega[e^{...}, X_n = x]."""
    qhat = env_sample.mixture.averaged() if qhat is None else qhat
    law = endpoint_law(env_sample, n, steps)
    pts, lp = law.support()
    lu = lp + pts @ np.asarray(rho, dtype=float).reshape(-1) - n * log_mgf(rho, qhat, steps)
    return pts, np.exp(lu)


def doob_residual(
    rho,
    qhat,
    u_candidate: Callable[[EnvironmentSample], float],
    windows: Sequence[EnvironmentSample],
    steps: StepSet,
    n: int | None = None,
) -> float:
    """Max deviation of the tilted kernel from a Doob transform with ``u``.

    Compares alpha_n (n = largest feasible, or ``n``) with
    pi(z) e^<rho,z> / phi_a(rho) * u(T_{1,z} omega) / u(omega).
    """
    rho = np.asarray(rho, dtype=float).reshape(-1)
    lphi = log_mgf(rho, qhat, steps)
    z = steps.steps
    worst = 0.0
    origin = np.zeros((1, steps.dim), dtype=np.int64)
    for w in windows:
        m = w.horizon if n is None else n
        alpha = alpha_n_kernel(rho, w, m, steps)
        u0 = float(u_candidate(w))
        if not u0 > 0:
            raise NonpositiveU("u must be positive on every window")
        k0 = w.mixture.kernels[np.asarray(w.atom_indices(0, origin)).reshape(-1)[0]]
        for j in range(len(steps)):
            u1 = float(u_candidate(w.shift(1, z[j])))
            if not u1 > 0:
                raise NonpositiveU("u must be positive on every window")
            rhs = k0[j] * np.exp(z[j] @ rho - lphi) * u1 / u0
            worst = max(worst, abs(alpha[j] - rhs))
    return worst
