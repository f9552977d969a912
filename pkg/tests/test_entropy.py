import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ldrwe.averaged import rate_averaged
from ldrwe.entropy import (
    env_entropy_finite_n,
    finite_n_specific_entropy,
    hq_mu_direct,
    hq_nu,
    rel_entropy,
    sc_entropy_decomposition,
)
from ldrwe.environment import KernelMixture, StepKernel
from ldrwe.geometry import StepSet, build_geometry, interior_grid
from ldrwe.quenched import rate_quenched

I_HALF = 0.75 * math.log(1.5) + 0.25 * math.log(0.5)

MIXTURES = {
    "symmetric-binary": (StepSet([[1], [-1]]), KernelMixture([(0.5, [0.9, 0.1]), (0.5, [0.1, 0.9])])),
    "skewed-three-atom": (
        StepSet([[1], [0], [-1]]),
        KernelMixture([(0.2, [0.6, 0.3, 0.1]), (0.5, [0.2, 0.2, 0.6]), (0.3, [0.3, 0.4, 0.3])]),
    ),
    "square-2d": (
        StepSet([[1, 0], [-1, 0], [0, 1], [0, -1]]),
        KernelMixture([(0.5, [0.4, 0.1, 0.3, 0.2]), (0.5, [0.1, 0.4, 0.2, 0.3])]),
    ),
}


def test_rel_entropy_examples():
    assert rel_entropy([0.3, 0.7], [0.3, 0.7]) == 0.0
    assert rel_entropy([0.75, 0.25], [0.5, 0.5]) == pytest.approx(I_HALF, abs=1e-15)
    assert rel_entropy([1.0, 0.0], [0.5, 0.5]) == pytest.approx(math.log(2), abs=1e-15)
    assert rel_entropy([0.5, 0.5], [1.0, 0.0]) == math.inf
    assert rel_entropy(StepKernel([0.2, 0.8]), StepKernel([0.5, 0.5])) > 0


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(0.0, 1.0), min_size=3, max_size=3), st.lists(st.floats(0.01, 1.0), min_size=3, max_size=3))
def test_rel_entropy_nonnegative(p, q):
    if sum(p) == 0:
        return
    p, q = np.array(p) / sum(p), np.array(q) / sum(q)
    h = rel_entropy(p, q)
    assert h >= -1e-15
    if np.max(np.abs(p - q)) > 1e-6:
        assert h > 0
    assert rel_entropy(q, q) == 0.0


def test_decomposition_at_rho_one(pm1, sym_mix):
    s, g = pm1
    rep = sc_entropy_decomposition([math.tanh(1.0)], sym_mix, g, s)
    assert rep.rho[0] == pytest.approx(1.0, abs=1e-10)
    # closed forms: u_1 = W / cosh(1)
    u = np.array([0.9 * math.e + 0.1 / math.e, 0.1 * math.e + 0.9 / math.e]) / math.cosh(1.0)
    h_env = 0.5 * float(np.sum(u * np.log(u)))
    assert rep.h_env == pytest.approx(h_env, abs=1e-12)
    assert rep.h_env == pytest.approx(0.19924, abs=1e-5)
    assert rep.h_q == pytest.approx(0.12857, abs=1e-5)
    assert rep.sum == pytest.approx(0.32781, abs=1e-5)
    assert rep.residual <= 1e-10
    assert env_entropy_finite_n(rep.rho, sym_mix, s, 10) == pytest.approx(rep.h_env, abs=1e-12)
    assert hq_mu_direct([math.tanh(1.0)], sym_mix, g, s) == pytest.approx(rep.h_q, abs=1e-12)


def test_decomposition_trivial_cases(pm1, sym_mix):
    s, g = pm1
    rep = sc_entropy_decomposition([0.0], sym_mix, g, s)
    assert rep.h_env <= 1e-15 and abs(rep.h_q) <= 1e-15
    single = KernelMixture([(1.0, [0.3, 0.7])])
    for xi in (-0.9, 0.0, 0.6):
        assert sc_entropy_decomposition([xi], single, g, s).h_env == 0.0


@pytest.mark.parametrize("name", sorted(MIXTURES))
def test_decomposition_on_grid(name):
    s, mix = MIXTURES[name]
    g = build_geometry(s)
    xstar = mix.averaged().mean(s)
    for xi in interior_grid(s, 20):
        rep = sc_entropy_decomposition(xi, mix, g, s, with_quenched=True)
        assert rep.residual <= 1e-10
        assert rep.h_env >= -1e-12 and rep.h_q >= -1e-12
        # H_q(mu) <= I_a <= I_q
        assert rep.h_q <= rep.i_avg + 1e-12
        assert rep.i_avg <= rep.i_quenched + 1e-12
        if np.linalg.norm(xi - xstar) >= 0.2:
            assert rep.h_env > 1e-6


def test_hq_nu_examples(pm1, sym_mix):
    s, g = pm1
    single = KernelMixture([(1.0, [0.35, 0.65])])
    assert hq_nu([0.3], single, g, s) == pytest.approx(rate_averaged([0.3], single.averaged(), g, s).value, abs=1e-12)
    assert hq_nu([0.0], sym_mix, g, s) <= 1e-14
    assert hq_nu([0.5], sym_mix, g, s) == pytest.approx(rate_quenched([0.5], sym_mix, g, s).value, abs=1e-10)


@pytest.mark.parametrize("name", sorted(MIXTURES))
def test_hq_nu_equals_quenched_rate(name):
    s, mix = MIXTURES[name]
    g = build_geometry(s)
    for xi in interior_grid(s, 8):
        assert hq_nu(xi, mix, g, s) - rate_quenched(xi, mix, g, s).value <= 1e-10


def test_finite_n_specific_entropy(pm1, uniform_pm1):
    s, g = pm1
    assert finite_n_specific_entropy([0.0], uniform_pm1, g, s, 4) <= 1e-15
    assert finite_n_specific_entropy([0.5], uniform_pm1, g, s, 3) == pytest.approx(I_HALF, abs=1e-12)
    one = finite_n_specific_entropy([0.5], uniform_pm1, g, s, 1)
    five = finite_n_specific_entropy([0.5], uniform_pm1, g, s, 5)
    assert abs(one - five) <= 1e-12
