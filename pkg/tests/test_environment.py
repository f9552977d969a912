import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ldrwe.environment import (
    EnvironmentSpec,
    KernelMixture,
    StepKernel,
    averaged_kernel,
    constant_levels,
    degeneracy_check,
    kernel_at,
    sample_environment,
    sample_levels,
)
from ldrwe.errors import HorizonExceeded
from ldrwe.geometry import StepSet


def test_averaged_kernel_examples(sym_mix):
    np.testing.assert_allclose(averaged_kernel(sym_mix).probs, [0.5, 0.5], atol=1e-15)
    det = EnvironmentSpec.deterministic([0.3, 0.7])
    np.testing.assert_allclose(averaged_kernel(det).probs, [0.3, 0.7])
    mix = KernelMixture([(0.25, [1.0, 0.0]), (0.75, [0.0, 1.0])])
    np.testing.assert_allclose(averaged_kernel(mix).probs, [0.25, 0.75])


def test_kernel_validation():
    with pytest.raises(ValueError):
        StepKernel([0.5, 0.6])
    with pytest.raises(ValueError):
        StepKernel([1.2, -0.2])
    with pytest.raises(ValueError):
        KernelMixture([(0.5, [1.0, 0.0])])
    with pytest.raises(ValueError):
        KernelMixture([])


def test_kernel_at_constant_levels(sym_mix):
    env = constant_levels(sym_mix, [1, 0])
    for x in (-5, 0, 3):
        np.testing.assert_array_equal(kernel_at(env, 0, x).probs, [0.1, 0.9])
        np.testing.assert_array_equal(kernel_at(env, 1, x).probs, [0.9, 0.1])
    with pytest.raises(HorizonExceeded):
        kernel_at(env, 2, 0)


def test_kernel_at_field_is_pure(sym_mix):
    spec = EnvironmentSpec.spatial_iid(sym_mix, seed=99)
    a = sample_environment(spec, 10, dim=2)
    b = sample_environment(spec, 10, dim=2)
    for i, x in [(0, (0, 0)), (3, (-2, 5)), (9, (7, 7))]:
        assert kernel_at(a, i, x) == kernel_at(a, i, x) == kernel_at(b, i, x)


def test_field_atom_frequency():
    mix = KernelMixture([(0.3, [0.6, 0.4]), (0.7, [0.2, 0.8])])
    env = sample_environment(EnvironmentSpec.spatial_iid(mix, seed=5), 1000, dim=1)
    idx = np.concatenate([env.atom_indices(i, np.arange(-50, 50)[:, None]) for i in range(1000)])
    assert idx.size == 10**5
    freq = np.mean(idx == 0)
    assert abs(freq - 0.3) <= 3 * np.sqrt(0.3 * 0.7 / idx.size)


def test_sample_levels_examples(sym_mix):
    single = KernelMixture([(1.0, [0.5, 0.5])])
    assert np.all(sample_levels(single, 50, seed=1).levels == 0)
    a = sample_levels(sym_mix, 100, seed=42)
    b = sample_levels(sym_mix, 100, seed=42)
    np.testing.assert_array_equal(a.levels, b.levels)
    big = sample_levels(sym_mix, 10**5, seed=7)
    freq = np.mean(big.levels == 0)
    assert abs(freq - 0.5) <= 3 * np.sqrt(0.25 / 10**5)


def test_sample_levels_prefix_stable(sym_mix):
    short = sample_levels(sym_mix, 20, seed=3, replica=4)
    long = sample_levels(sym_mix, 200, seed=3, replica=4)
    np.testing.assert_array_equal(short.levels, long.levels[:20])


def test_degeneracy_examples(sym_mix):
    s = StepSet([[1], [-1]])
    assert degeneracy_check(sym_mix, [0.0], s)
    assert not degeneracy_check(sym_mix, [1.0], s)
    s2 = StepSet([[1, 0], [0, 1]])
    mix2 = KernelMixture([(0.5, [0.2, 0.8]), (0.5, [0.7, 0.3])])
    # (1, 1) is orthogonal to the step difference, hence in L-perp
    assert degeneracy_check(mix2, [2.5, 2.5], s2)
    assert not degeneracy_check(mix2, [1.0, 0.0], s2)


def test_seed_range():
    mix = KernelMixture([(1.0, [0.5, 0.5])])
    EnvironmentSpec.spatial_iid(mix, seed=2**64 - 1)
    with pytest.raises(ValueError):
        EnvironmentSpec.spatial_iid(mix, seed=2**64)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0.05, 1.0), min_size=2, max_size=4), st.integers(0, 2**64 - 1))
def test_averaged_kernel_is_a_kernel(raw, seed):
    w = np.array(raw) / np.sum(raw)
    w[-1] = 1.0 - w[:-1].sum()
    atoms = [(wi, np.roll([0.7, 0.2, 0.1], j)) for j, wi in enumerate(w)]
    mix = KernelMixture(atoms)
    q = averaged_kernel(EnvironmentSpec.spatially_constant(mix, seed)).probs
    assert np.all(q >= 0) and abs(q.sum() - 1) <= 1e-12


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**64 - 1), st.integers(0, 50), st.integers(-20, 20), st.integers(-20, 20))
def test_constant_samples_ignore_site(seed, i, x, y):
    mix = KernelMixture([(0.5, [0.9, 0.1]), (0.5, [0.1, 0.9])])
    env = sample_environment(EnvironmentSpec.spatially_constant(mix, seed), 51, dim=1)
    assert kernel_at(env, i, x) == kernel_at(env, i, y)
