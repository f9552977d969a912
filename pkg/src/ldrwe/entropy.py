"""Relative entropies and the entropy decomposition in constant environments.

Conventions: 0 log 0 = 0, and p(z) > 0 = q(z) gives +inf (``math.inf``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .averaged import log_mgf, rate_averaged
from .environment import KernelMixture, StepKernel, log_w_atoms
from .errors import CapExceeded
from .geometry import Geometry, StepSet
from .quenched import rate_quenched
from .tilted import enumerate_tuples, mu_xi_step_law, sc_mu_kernel, sc_nu_kernel


@dataclass(frozen=True)
class EntropyReport:
    xi: np.ndarray
    rho: np.ndarray
    h_env: float
    h_q: float
    i_avg: float
    i_quenched: float | None = None

    @property
    def sum(self) -> float:
        return self.h_env + self.h_q

    @property
    def residual(self) -> float:
        return abs(self.sum - self.i_avg)


def _arr(p) -> np.ndarray:
    return p.probs if isinstance(p, StepKernel) else np.asarray(p, dtype=float)


def rel_entropy(p, q) -> float:
    """sum_z p(z) log(p(z) / q(z))."""
    p, q = _arr(p).reshape(-1), _arr(q).reshape(-1)
    if p.shape != q.shape:
        raise ValueError("p and q must have the same support")
    charged = p > 0
    if np.any(q[charged] == 0):
        return math.inf
    pc, qc = p[charged], q[charged]
    return float(np.sum(pc * (np.log(pc) - np.log(qc))))


def sc_entropy_decomposition(xi, mixture: KernelMixture, geom: Geometry, steps: StepSet, with_quenched: bool = False) -> EntropyReport:
    """h_env = E[u_1 log u_1] and H_q(mu^xi) = <rho,xi> - log phi_a - h_env."""
    mixture.require_positive()
    qhat = mixture.averaged()
    sol = rate_averaged(xi, qhat, geom, steps)
    lphi = log_mgf(sol.rho, qhat, steps)
    log_u1 = log_w_atoms(sol.rho, mixture, steps) - lphi
    u1 = np.exp(log_u1)
    h_env = max(float(mixture.weights @ (u1 * log_u1)), 0.0)
    h_q = float(sol.rho @ sol.xi - lphi - h_env)
    iq = rate_quenched(xi, mixture, geom, steps).value if with_quenched else None
    return EntropyReport(xi=sol.xi, rho=sol.rho, h_env=h_env, h_q=h_q, i_avg=sol.value, i_quenched=iq)


def hq_mu_direct(xi, mixture: KernelMixture, geom: Geometry, steps: StepSet) -> float:
    """H_q(mu^xi) from its definition: kernel entropy averaged over mu^xi_Omega.

    Under mu^xi a level with kernel q_j has probability w_j u_1(rho, q_j).
    """
    qhat = mixture.averaged()
    sol = rate_averaged(xi, qhat, geom, steps)
    u1 = np.exp(log_w_atoms(sol.rho, mixture, steps) - log_mgf(sol.rho, qhat, steps))
    kl = [rel_entropy(sc_mu_kernel(sol.rho, k, steps), k) for k in mixture.kernels]
    return float(np.sum(mixture.weights * u1 * np.asarray(kl)))


def env_entropy_finite_n(rho, mixture: KernelMixture, steps: StepSet, n: int) -> float:
    """(1/n) H(mu^xi_Omega | P) on the first n levels, by enumerating level sequences."""
    qhat = mixture.averaged()
    log_u1 = log_w_atoms(rho, mixture, steps) - log_mgf(rho, qhat, steps)
    j = mixture.n_atoms
    if j**n > 10**6:
        raise CapExceeded(f"{j}^{n} level sequences exceed the enumeration cap")
    total = 0.0
    for seq in np.ndindex(*(j,) * n):
        seq = np.asarray(seq)
        p = float(np.prod(mixture.weights[seq]))
        lu = float(log_u1[seq].sum())
        total += p * math.exp(lu) * lu
    return total / n


def hq_nu(xi, mixture: KernelMixture, geom: Geometry, steps: StepSet) -> float:
    """H_q(nu^xi) = sum_j w_j KL(nu-kernel_j | q_j)."""
    fam = sc_nu_kernel(xi, mixture, geom, steps)
    kl = [rel_entropy(k, q) for k, q in zip(fam.kernels, mixture.kernels)]
    return float(mixture.weights @ np.asarray(kl))


def finite_n_specific_entropy(xi, qhat, geom: Geometry, steps: StepSet, n: int) -> float:
    """(1/n) H(mu^xi on n-step tuples | averaged walk on n-step tuples)."""
    qhat = qhat if isinstance(qhat, StepKernel) else StepKernel(qhat)
    law = mu_xi_step_law(xi, qhat, geom, steps, n)
    idx, _ = enumerate_tuples(steps, n)
    with np.errstate(divide="ignore"):
        ref = np.exp(np.log(qhat.probs)[idx].sum(axis=1))
    return rel_entropy(law.probs.reshape(-1), ref) / n
