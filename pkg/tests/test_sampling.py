from __future__ import annotations

import math

import numpy as np
import pytest
from scipy import integrate, stats

from radchaos import InputError, Kernel, RademacherLaw
from radchaos.chaos import law_of_Q
from radchaos.distance import w1_bootstrap, w1_discrete, w1_empirical
from radchaos.kernel import counterexample_kernel, random_kernel
from radchaos.sampling import SamplerSpec, block_rng, moment_with_se, sample_many, sample_Q


def test_custom_table_validation():
    with pytest.raises(InputError):
        SamplerSpec.custom([1.0, 2.0], [0.5, 0.5])
    with pytest.raises(InputError):
        SamplerSpec.custom([1.0, -1.0], [0.5, 0.4])
    spec = SamplerSpec.custom([1.0, -1.0], [0.5, 0.5])
    assert spec.kind == "custom"
    with pytest.raises(InputError):
        SamplerSpec.gaussian(seed=-1)


def test_uniform_grid_is_centred_unit_variance():
    spec = SamplerSpec.uniform_grid()
    v, p = np.asarray(spec.values), np.asarray(spec.probs)
    assert p @ v == pytest.approx(0.0, abs=1e-15)
    assert p @ v ** 2 == pytest.approx(1.0, abs=1e-12)


def test_symmetric_first_chaos_samples_are_signs():
    x = sample_Q(Kernel.indicator(0, 4), SamplerSpec.rademacher(RademacherLaw.symmetric(4), 1), 100_000)
    assert set(np.unique(x)) == {-1.0, 1.0}
    assert abs(np.mean(x == 1.0) - 0.5) < 5 * 0.5 / math.sqrt(len(x))


def test_biased_samples_match_exact_moments():
    rng = np.random.default_rng(8)
    law = RademacherLaw(rng.uniform(0.2, 0.8, 6))
    f = random_kernel(2, 6, rng)
    x = sample_Q(f, SamplerSpec.rademacher(law, 3), 400_000)
    atoms, w = law_of_Q(f, law)
    for m in (2, 4):
        est, se = moment_with_se(x, m)
        assert abs(est - w @ atoms ** m) < 4 * se


def test_sampling_deterministic_and_thread_independent():
    f = counterexample_kernel(2, 50)
    spec = SamplerSpec.rademacher(RademacherLaw.symmetric(50), 17)
    a = sample_Q(f, spec, 300_000, threads=1)
    b = sample_Q(f, spec, 300_000, threads=4)
    assert np.array_equal(a, b)
    c = sample_Q(f, spec.with_seed(18), 300_000)
    assert not np.array_equal(a, c)


def test_sample_many_shares_inputs():
    f = Kernel.indicator(0, 3)
    x = sample_many([f, f.scaled(2.0)], SamplerSpec.gaussian(5), 1000)
    assert x.shape == (2, 1000)
    assert np.allclose(x[1], 2 * x[0])


def test_gaussian_input_product_moment():
    # Q_2 with a single key (0, 1) -> 1/2 is G_1 G_2, whose fourth moment is 9
    x = sample_Q(Kernel(2, 2, {(0, 1): 0.5}), SamplerSpec.gaussian(2), 400_000)
    est, se = moment_with_se(x, 4)
    assert abs(est - 9.0) < 4 * se


def test_block_rng_streams_differ():
    assert block_rng(1, 0).random() != block_rng(1, 1).random()
    assert block_rng(1, 0).random() == block_rng(1, 0).random()


# ---------------------------------------------------------------- distance

def coin_w1_by_quadrature() -> float:
    a, _ = integrate.quad(lambda x: stats.norm.cdf(x) - 0.5, 0, 1, epsabs=1e-13)
    b, _ = integrate.quad(lambda x: stats.norm.sf(x), 1, np.inf, epsabs=1e-13)
    return 2 * a + 2 * b


def test_w1_point_mass():
    assert w1_discrete(np.array([0.0])) == pytest.approx(math.sqrt(2 / math.pi), abs=1e-12)


def test_w1_fair_coin_matches_quadrature():
    exact = w1_discrete(np.array([-1.0, 1.0]), np.array([0.5, 0.5]))
    assert exact == pytest.approx(coin_w1_by_quadrature(), abs=1e-10)


def test_w1_fair_coin_monte_carlo():
    rng = np.random.default_rng(0)
    x = np.where(rng.random(10_000_000) < 0.5, -1.0, 1.0)
    est, se = w1_bootstrap(x, rng, reps=20)
    exact = coin_w1_by_quadrature()
    assert abs(est - exact) < 3 * se


def test_w1_discrete_matches_quadrature_general():
    rng = np.random.default_rng(4)
    atoms = rng.normal(size=7)
    w = rng.random(7)
    w /= w.sum()
    order = np.argsort(atoms)
    cdf_vals = np.cumsum(w[order])

    def cdf(x):
        i = np.searchsorted(atoms[order], x, side="right")
        return 0.0 if i == 0 else cdf_vals[i - 1]

    pts = np.sort(atoms)
    total, _ = integrate.quad(lambda x: abs(cdf(x) - stats.norm.cdf(x)), -np.inf, pts[0])
    for lo, hi in zip(pts[:-1], pts[1:]):
        total += integrate.quad(lambda x: abs(cdf(x) - stats.norm.cdf(x)), lo, hi, epsabs=1e-13)[0]
    total += integrate.quad(lambda x: abs(cdf(x) - stats.norm.cdf(x)), pts[-1], np.inf)[0]
    assert w1_discrete(atoms, w) == pytest.approx(total, abs=1e-8)


def test_w1_nonnegative_and_empirical_consistent():
    rng = np.random.default_rng(1)
    x = rng.normal(size=200_000)
    assert 0.0 <= w1_empirical(x) < 0.01
