import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ldrwe.averaged import log_mgf, rate_averaged
from ldrwe.environment import KernelMixture, StepKernel
from ldrwe.errors import ZeroProbabilityStep
from ldrwe.geometry import StepSet, build_geometry
from ldrwe.quenched import jensen_gap, lambda_quenched, quenched_upper_bound, rate_quenched, w_of

from .oracles import bisect, w_pm1

# W((0.9,0.1), 1) = 0.9e + 0.1/e = 2.4832416...; 2.483236 is a common mis-rounding
W_HIGH = 0.9 * math.e + 0.1 / math.e
W_LOW = 0.1 * math.e + 0.9 / math.e
LAMBDA_1 = 0.5 * (math.log(W_HIGH) + math.log(W_LOW))


def test_w_examples(pm1, sym_mix):
    s, _ = pm1
    assert w_of([0.0], [0.9, 0.1], s) == 1.0
    assert w_of([1.0], [0.9, 0.1], s) == pytest.approx(W_HIGH, rel=1e-15)
    assert w_of([1.0], [0.9, 0.1], s) == pytest.approx(2.483236, abs=1e-5)
    mean_w = sum(w * w_of([0.7], k, s) for w, k in zip(sym_mix.weights, sym_mix.kernels))
    assert math.log(mean_w) == pytest.approx(log_mgf([0.7], sym_mix.averaged(), s), abs=1e-15)


def test_lambda_examples(pm1, sym_mix):
    s, _ = pm1
    assert abs(lambda_quenched([0.0], sym_mix, s).lambda_value) <= 1e-15
    lam = lambda_quenched([1.0], sym_mix, s)
    assert lam.lambda_value == pytest.approx(LAMBDA_1, abs=1e-15)
    assert lam.lambda_value == pytest.approx(0.201843, abs=1e-4)
    single = KernelMixture([(1.0, [0.3, 0.7])])
    assert lambda_quenched([0.4], single, s).lambda_value == pytest.approx(log_mgf([0.4], single.averaged(), s), abs=1e-15)


def test_lambda_rejects_zero_entries(pm1):
    s, _ = pm1
    with pytest.raises(ZeroProbabilityStep):
        lambda_quenched([1.0], KernelMixture([(0.5, [1.0, 0.0]), (0.5, [0.5, 0.5])]), s)


def test_rate_quenched_examples(pm1, sym_mix):
    s, g = pm1
    zero = rate_quenched([0.0], sym_mix, g, s)
    assert zero.value <= 1e-14 and abs(zero.rho[0]) <= 1e-12
    sol = rate_quenched([0.5], sym_mix, g, s)
    avg = rate_averaged([0.5], sym_mix.averaged(), g, s)
    assert sol.value > avg.value + 1e-3

    # independent oracle: bisection on the derivative of E log W
    def dlam(r):
        return 0.5 * sum((w_pm1(p, r) - 2 * (1 - p) * math.exp(-r)) / w_pm1(p, r) for p in (0.9, 0.1)) - 0.5

    r = bisect(dlam, 0.0, 5.0)
    value = 0.5 * r - 0.5 * (math.log(w_pm1(0.9, r)) + math.log(w_pm1(0.1, r)))
    assert sol.rho[0] == pytest.approx(r, abs=1e-10)
    assert sol.value == pytest.approx(value, abs=1e-12)


def test_single_atom_collapses(pm1):
    s, g = pm1
    single = KernelMixture([(1.0, [0.35, 0.65])])
    for xi in (-0.7, -0.1, 0.4, 0.8):
        assert rate_quenched([xi], single, g, s).value == pytest.approx(
            rate_averaged([xi], single.averaged(), g, s).value, abs=1e-12
        )


def test_jensen_gap_examples(pm1, sym_mix):
    s, _ = pm1
    assert jensen_gap([0.0], sym_mix, s) <= 1e-15
    gap = jensen_gap([1.0], sym_mix, s)
    assert gap == pytest.approx(math.log(math.cosh(1.0)) - LAMBDA_1, abs=1e-14)
    assert gap == pytest.approx(0.231938, abs=1e-4)
    s2 = StepSet([[1, 0], [0, 1]])
    mix2 = KernelMixture([(0.5, [0.2, 0.8]), (0.5, [0.7, 0.3])])
    assert jensen_gap([3.0, 3.0], mix2, s2) <= 1e-14


SQUARE = StepSet([[1, 0], [-1, 0], [0, 1], [0, -1]])
MIX2D = KernelMixture([(0.5, [0.4, 0.1, 0.3, 0.2]), (0.5, [0.1, 0.4, 0.2, 0.3])])


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0.05, 0.95), min_size=4, max_size=4))
def test_quenched_dominates_averaged_and_bound(lam):
    g = build_geometry(SQUARE)
    lam = np.asarray(lam) / np.sum(lam)
    xi = lam @ SQUARE.steps.astype(float)
    q = rate_quenched(xi, MIX2D, g, SQUARE)
    a = rate_averaged(xi, MIX2D.averaged(), g, SQUARE)
    assert a.value <= q.value + 1e-12
    assert q.value <= quenched_upper_bound(MIX2D) + 1e-9
    assert q.residual <= 1e-10
    assert abs(q.value + lambda_quenched(q.rho, MIX2D, SQUARE).lambda_value - q.rho @ xi) <= 1e-10


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-2, 2), min_size=2, max_size=2))
def test_lambda_gradient_fd(rho):
    rho = np.asarray(rho)
    h = 1e-6
    f = lambda r: lambda_quenched(r, MIX2D, SQUARE).lambda_value
    fd = np.array([(f(rho + h * e) - f(rho - h * e)) / (2 * h) for e in np.eye(2)])
    g = lambda_quenched(rho, MIX2D, SQUARE).gradient
    assert np.linalg.norm(g - fd) / max(np.linalg.norm(g), 1.0) <= 1e-6
    assert lambda_quenched(rho, MIX2D, SQUARE).lambda_value <= log_mgf(rho, MIX2D.averaged(), SQUARE) + 1e-12


@settings(max_examples=30, deadline=None)
@given(st.floats(-0.9, 0.9), st.floats(-4, 4))
def test_quenched_lperp_invariance(t, shift):
    s = StepSet([[1, 1], [0, 1], [-1, 1]])
    g = build_geometry(s)
    mix = KernelMixture([(0.5, [0.5, 0.3, 0.2]), (0.5, [0.2, 0.3, 0.5])])
    sol = rate_quenched([t, 1.0], mix, g, s)
    from ldrwe.tilted import sc_mu_kernel

    v = g.lperp_basis[0]
    for k in mix.kernels:
        np.testing.assert_allclose(
            sc_mu_kernel(sol.rho, k, s).probs, sc_mu_kernel(sol.rho + shift * v, k, s).probs, atol=1e-12, rtol=0
        )
