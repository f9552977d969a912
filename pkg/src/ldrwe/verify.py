"""Identity suite: every closed-form relation the library should satisfy,
evaluated on a configuration and reported with its residual."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .averaged import log_mgf, log_mgf_grad, lln_velocity, rate_averaged, tilted_step_kernel
from .config import ExperimentConfig
from .entropy import finite_n_specific_entropy, hq_mu_direct, hq_nu, sc_entropy_decomposition
from .environment import EnvKind, constant_levels, sample_environment
from .geometry import Geometry, StepSet
from .paths import endpoint_law, ordered_map
from .quenched import jensen_gap, rate_quenched
from .tilted import doob_residual, log_u_n, sc_nu_kernel

FD_STEP = 1e-5
FD_TOL = 1e-6
MGF_TOL = 1e-11
MASS_TOL = 1e-12
DOOB_TOL = 1e-12


@dataclass(frozen=True)
class IdentityCheck:
    name: str
    lhs: object
    rhs: object
    residual: float
    tol: float

    @property
    def passed(self) -> bool:
        return bool(self.residual <= self.tol)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name} lhs={_fmt(self.lhs)} rhs={_fmt(self.rhs)} residual={self.residual:.3e} tol={self.tol:.1e}"


def _fmt(v) -> str:
    a = np.asarray(v, dtype=float)
    if a.ndim == 0:
        return f"{float(a):.12g}"
    return "(" + ",".join(f"{x:.12g}" for x in a.reshape(-1)) + ")"


def _close(name, lhs, rhs, tol) -> IdentityCheck:
    res = float(np.max(np.abs(np.asarray(lhs, dtype=float) - np.asarray(rhs, dtype=float))))
    return IdentityCheck(name, lhs, rhs, res, tol)


def _at_most(name, lhs, bound, tol) -> IdentityCheck:
    """lhs <= bound, residual is the violation."""
    return IdentityCheck(name, lhs, bound, max(float(lhs) - float(bound), 0.0), tol)


def fd_gradient_error(xi, qhat, geom: Geometry, steps: StepSet, h: float = FD_STEP) -> tuple[np.ndarray, np.ndarray, float]:
    """Tilt vs. central differences of I_{1,a} along an orthonormal basis of L.

    Relative error uses max(|g|, 1) as denominator so near xi* (g -> 0) it
    degrades to an absolute error.
    """
    sol = rate_averaged(xi, qhat, geom, steps)
    g = geom.l_basis @ sol.rho
    fd = np.array(
        [
            (rate_averaged(sol.xi + h * e, qhat, geom, steps).value - rate_averaged(sol.xi - h * e, qhat, geom, steps).value) / (2 * h)
            for e in geom.l_basis
        ]
    )
    err = float(np.linalg.norm(g - fd) / max(float(np.linalg.norm(g)), 1.0))
    return g, fd, err


def _point_checks(cfg: ExperimentConfig, k: int, xi: np.ndarray) -> list[IdentityCheck]:
    steps, geom, mixture = cfg.step_set(), cfg.geometry(), cfg.mixture()
    qhat = mixture.averaged()
    tol = cfg.tol_identity
    tag = f"[xi{k}]"
    sol = rate_averaged(xi, qhat, geom, steps, tol=cfg.tol_newton)
    out = [
        _close(f"averaged-dual-gradient{tag}", geom.project_l(log_mgf_grad(sol.rho, qhat, steps)), geom.project_l(sol.xi), tol),
        _close(
            f"averaged-legendre-value{tag}",
            sol.value,
            float(sol.rho @ sol.xi) - log_mgf(sol.rho, qhat, steps),
            tol,
        ),
    ]
    g, fd, err = fd_gradient_error(xi, qhat, geom, steps)
    out.append(IdentityCheck(f"averaged-gradient-fd{tag}", g, fd, err, FD_TOL))
    out.append(_close(f"mu-step-mean{tag}", tilted_step_kernel(sol.rho, qhat, steps).mean(steps), sol.xi, tol))
    if not qhat.strictly_positive:
        return out
    constant = cfg.env_kind != EnvKind.SPATIAL_IID.value
    if constant:
        rep = sc_entropy_decomposition(xi, mixture, geom, steps, with_quenched=True)
        out.append(_close(f"entropy-decomposition{tag}", rep.sum, rep.i_avg, tol))
        out.append(_close(f"hq-mu-direct{tag}", hq_mu_direct(xi, mixture, geom, steps), rep.h_q, tol))
        out.append(_at_most(f"averaged-below-quenched{tag}", rep.i_avg, rep.i_quenched, tol))
        fam = sc_nu_kernel(xi, mixture, geom, steps)
        out.append(_close(f"nu-step-mean{tag}", fam.mean_step(steps), sol.xi, tol))
        out.append(_close(f"hq-nu-equals-quenched-rate{tag}", hq_nu(xi, mixture, geom, steps), rep.i_quenched, tol))
        out.append(_at_most(f"jensen-gap-nonnegative{tag}", -jensen_gap(sol.rho, mixture, steps), 0.0, tol))
        if cfg.env_kind == EnvKind.DETERMINISTIC.value:
            env = constant_levels(mixture, [0] * 4, dim=steps.dim)
            res = doob_residual(sol.rho, qhat, lambda w: 1.0, [env], steps)
            out.append(IdentityCheck(f"doob-u-one-deterministic{tag}", res, 0.0, res, DOOB_TOL))
    return out


def _global_checks(cfg: ExperimentConfig) -> list[IdentityCheck]:
    steps, geom, mixture = cfg.step_set(), cfg.geometry(), cfg.mixture()
    qhat = mixture.averaged()
    tol = cfg.tol_identity
    out = []
    xstar = lln_velocity(qhat, steps)
    if qhat.strictly_positive:
        out.append(_at_most("averaged-zero-at-lln", rate_averaged(xstar, qhat, geom, steps).value, 0.0, tol))
    n = 10
    law = endpoint_law(qhat, n, steps)
    out.append(_close("endpoint-mass", law.total_mass(), 1.0, MASS_TOL))
    for scale in (0.3, 1.0, 2.0):
        rho = scale * np.ones(steps.dim) / math.sqrt(steps.dim)
        a, b = law.log_mgf(rho), n * log_mgf(rho, qhat, steps)
        out.append(IdentityCheck(f"averaged-mgf[rho={scale}]", a, b, abs(math.expm1(a - b)), MGF_TOL))
    grid = cfg.xi_points()
    for ell in (1, 3, 5):
        if len(steps) ** ell > 10**5:
            continue
        for k in (0, len(grid) // 2):
            xi = grid[k]
            i_avg = rate_averaged(xi, qhat, geom, steps).value
            out.append(_close(f"specific-entropy[n={ell},xi{k}]", finite_n_specific_entropy(xi, qhat, geom, steps, ell), i_avg, tol))
    if not mixture.kernels.min() > 0:
        return out
    # rho = 0 is the tilt at xi*: u = 1 solves the Doob relation in any environment
    if cfg.env_kind == EnvKind.SPATIAL_IID.value:
        envs = [sample_environment(cfg.environment(), 3, steps.dim, replica=r) for r in range(2)]
    else:
        envs = [constant_levels(mixture, lv, dim=steps.dim) for lv in itertools.islice(itertools.product(range(mixture.n_atoms), repeat=3), 4)]
    res = doob_residual(np.zeros(steps.dim), qhat, lambda w: 1.0, envs, steps)
    out.append(IdentityCheck("doob-u-one-at-lln", res, 0.0, res, DOOB_TOL))
    if cfg.env_kind != EnvKind.SPATIAL_IID.value:
        rep = sc_entropy_decomposition(xstar, mixture, geom, steps)
        out.append(_at_most("env-entropy-zero-at-lln", rep.h_env, 0.0, 1e-12))
        # E[u_n] = 1 by enumerating level sequences; u_n from the path DP
        rho = geom.project_l(np.ones(steps.dim))
        n_levels = 3
        mean = 0.0
        for seq in itertools.product(range(mixture.n_atoms), repeat=n_levels):
            p = float(np.prod(mixture.weights[list(seq)]))
            mean += p * math.exp(log_u_n(rho, constant_levels(mixture, seq, dim=steps.dim), n_levels, steps, qhat))
        out.append(_close("u-n-mean-one[n=3]", mean, 1.0, tol))
        sol = rate_quenched(grid[0], mixture, geom, steps)
        out.append(_close("quenched-dual-residual", sol.residual, 0.0, tol))
    return out


def run_identity_suite(cfg: ExperimentConfig) -> list[IdentityCheck]:
    """All identities, in a fixed order independent of the worker count."""
    grid = cfg.xi_points()
    per_point = ordered_map(lambda kx: _point_checks(cfg, kx[0], kx[1]), list(enumerate(grid)))
    return _global_checks(cfg) + [c for chunk in per_point for c in chunk]


def format_report(checks: list[IdentityCheck], emit: Callable[[str], None]) -> bool:
    for c in checks:
        emit(c.line())
    failed = [c for c in checks if not c.passed]
    emit(f"{len(checks) - len(failed)}/{len(checks)} identities hold")
    if failed:
        f = failed[0]
        emit(f"first failing identity: {f.name}: lhs={_fmt(f.lhs)} rhs={_fmt(f.rhs)}")
    return not failed
