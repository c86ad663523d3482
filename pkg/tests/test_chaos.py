from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from radchaos import HypercubeFunction, InputError, Kernel, RademacherLaw, ResourceError, counterexample_kernel
from radchaos.chaos import (chaos_product, discrete_gradient, eval_Q, expect_exact, first_chaos_law, law_of_Q,
                            moments, multiply_symmetric, normalized_value, product_decomposition,
                            product_top_kernel_check, q_table, set_exact_cap, get_exact_cap, sign_matrix,
                            walsh_decompose)
from radchaos.kernel import random_kernel


def random_law(rng, N, symmetric):
    return RademacherLaw.symmetric(N) if symmetric else RademacherLaw(rng.uniform(0.1, 0.9, N))


def test_law_validation():
    with pytest.raises(InputError):
        RademacherLaw([0.5, 1.0])
    with pytest.raises(InputError):
        RademacherLaw([])
    law = RademacherLaw.parse("0.5\n0.25\n")
    assert law.dim == 2
    assert RademacherLaw.parse(law.to_text()).probs.tolist() == [0.5, 0.25]


def test_normalized_values():
    sym = RademacherLaw.symmetric(1)
    assert normalized_value(sym, 0, 1) == 1.0
    assert normalized_value(sym, 0, -1) == -1.0
    biased = RademacherLaw([0.8])
    assert normalized_value(biased, 0, 1) == pytest.approx(0.5)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.01, 0.99))
def test_normalized_values_centred_unit_variance(p):
    law = RademacherLaw([p])
    up, dn = normalized_value(law, 0, 1), normalized_value(law, 0, -1)
    assert p * up + (1 - p) * dn == pytest.approx(0.0, abs=1e-12)
    assert p * up ** 2 + (1 - p) * dn ** 2 == pytest.approx(1.0, abs=1e-12)


def test_eval_Q_examples():
    law = RademacherLaw.symmetric(3)
    f = Kernel(2, 3, {(0, 1): 0.5})
    assert eval_Q(f, np.ones(3, dtype=int), law) == pytest.approx(1.0)
    biased = RademacherLaw([0.3, 0.6])
    e1 = Kernel.indicator(0, 2)
    for x0 in (1, -1):
        assert eval_Q(e1, np.array([x0, 1]), biased) == pytest.approx(normalized_value(biased, 0, x0))
    assert eval_Q(Kernel.zero(2, 3), np.array([1, -1, 1]), law) == 0.0


def test_expectation_examples():
    law = RademacherLaw([0.3, 0.7, 0.5])
    assert expect_exact(HypercubeFunction.coordinate(0, law), law) == pytest.approx(0.0, abs=1e-15)
    assert expect_exact(HypercubeFunction.constant(2.5, 3), law) == pytest.approx(2.5)
    sym = RademacherLaw.symmetric(3)
    F = q_table(Kernel(2, 3, {(0, 1): 0.5}), sym)
    assert expect_exact(F * F, sym) == pytest.approx(1.0)


def test_moment_examples():
    sym = RademacherLaw.symmetric(3)
    m = moments(Kernel.indicator(0, 3), sym, (2, 4))
    assert m[2] == pytest.approx(1.0) and m[4] == pytest.approx(1.0)
    assert moments(Kernel(2, 3, {(0, 1): 0.5}), sym, (4,))[4] == pytest.approx(1.0)
    assert moments(counterexample_kernel(2, 10), RademacherLaw.symmetric(10), (2,))[2] == pytest.approx(1.0)


def test_gradient_of_unused_coordinate_vanishes():
    law = RademacherLaw([0.3, 0.6, 0.5])
    F = q_table(Kernel.indicator(0, 3), law)
    assert np.max(np.abs(discrete_gradient(F, 2, law).values)) == 0.0


def test_walsh_decompose_examples():
    sym = RademacherLaw.symmetric(3)
    F = HypercubeFunction.coordinate(0, sym) * HypercubeFunction.coordinate(1, sym)
    dec = walsh_decompose(F, sym)
    assert dec.constant == pytest.approx(0.0, abs=1e-15)
    assert dec.orders == [2]
    assert dec.kernel(2).entries == {(0, 1): pytest.approx(0.5)}
    c = walsh_decompose(HypercubeFunction.constant(1.5, 3), sym)
    assert c.constant == pytest.approx(1.5) and c.orders == []


def test_multiply_symmetric_examples():
    e1, e2 = Kernel.indicator(0, 3), Kernel.indicator(1, 3)
    d = multiply_symmetric(e1, e1)
    assert d.constant == pytest.approx(1.0) and d.orders == []
    d = multiply_symmetric(e1, e2)
    assert d.constant == 0.0
    assert d.orders == [2]
    assert d.kernel(2).entries == {(0, 1): pytest.approx(0.5)}


def test_first_chaos_square_under_biased_law():
    law = RademacherLaw([0.7, 0.4])
    e1 = Kernel.indicator(0, 2)
    dec = product_decomposition(e1, e1, law)
    assert dec.constant == pytest.approx(1.0)
    assert dec.orders == [1]
    p, q = 0.7, 0.3
    assert dec.kernel(1)[0] == pytest.approx((q - p) / math.sqrt(p * q), abs=1e-14)


def test_product_top_kernel_check_examples():
    rng = np.random.default_rng(11)
    law = RademacherLaw(rng.uniform(0.1, 0.9, 6))
    ok, rep = product_top_kernel_check(random_kernel(2, 6, rng), random_kernel(1, 6, rng), law)
    assert ok and rep["top_kernel_deviation"] <= 1e-10
    f = counterexample_kernel(2, 6)
    sym = RademacherLaw.symmetric(6)
    ok, _ = product_top_kernel_check(f, f, sym)
    assert ok
    assert multiply_symmetric(f, f).max_abs_diff(walsh_decompose(q_table(f, sym) * q_table(f, sym), sym)) <= 1e-12


def test_exact_cap_enforced():
    old = get_exact_cap()
    try:
        set_exact_cap(4)
        with pytest.raises(ResourceError):
            q_table(Kernel.indicator(0, 5), RademacherLaw.symmetric(5))
    finally:
        set_exact_cap(old)
    with pytest.raises(InputError):
        set_exact_cap(0)


def test_first_chaos_law_matches_enumeration():
    rng = np.random.default_rng(2)
    law = RademacherLaw(rng.uniform(0.2, 0.8, 7))
    h = random_kernel(1, 7, rng)
    a1, w1 = first_chaos_law(h, law)
    a2, w2 = law_of_Q(h, law)
    for m in (1, 2, 3, 4):
        assert w1 @ a1 ** m == pytest.approx(w2 @ a2 ** m, abs=1e-12)


# ---------------------------------------------------------------- oracle comparisons

case = st.tuples(st.integers(1, 3), st.integers(3, 6), st.booleans(), st.integers(0, 2**32 - 1))


@settings(max_examples=25, deadline=None)
@given(case)
def test_q_table_matches_definition(args):
    p, N, symmetric, seed = args
    rng = np.random.default_rng(seed)
    law = random_law(rng, N, symmetric)
    f = random_kernel(p, N, rng)
    F = q_table(f, law)
    X = sign_matrix(N)
    for mask in range(0, 1 << N, 3):
        ref = oracles.q_value(f.entries, p, law.probs, X[mask])
        assert F.values[mask] == pytest.approx(ref, abs=1e-12)


@settings(max_examples=15, deadline=None)
@given(case)
def test_decomposition_matches_projection_oracle(args):
    p, N, symmetric, seed = args
    N = min(N, 5)
    rng = np.random.default_rng(seed)
    law = random_law(rng, N, symmetric)
    F = HypercubeFunction(N, rng.normal(size=1 << N))
    dec = walsh_decompose(F, law)
    X = sign_matrix(N)
    ref = oracles.walsh_kernels(lambda x: F.values[int(sum(1 << k for k in range(N) if x[k] == 1))], law.probs)
    assert dec.constant == pytest.approx(ref.get(0, {}).get((), 0.0), abs=1e-12)
    for m in range(1, N + 1):
        mine = dec.kernels[m].entries if m in dec.kernels else {}
        theirs = ref.get(m, {})
        for key in set(mine) | set(theirs):
            assert mine.get(key, 0.0) == pytest.approx(theirs.get(key, 0.0), abs=1e-12)
    assert X.shape == (1 << N, N)


@settings(max_examples=25, deadline=None)
@given(case)
def test_reconstruction_and_isometry(args):
    p, N, symmetric, seed = args
    rng = np.random.default_rng(seed)
    law = random_law(rng, N, symmetric)
    F = HypercubeFunction(N, rng.normal(size=1 << N))
    dec = walsh_decompose(F, law)
    assert dec.to_function(law).max_abs_diff(F) <= 1e-9
    assert dec.second_moment() == pytest.approx(expect_exact(F * F, law), rel=1e-10)


@settings(max_examples=25, deadline=None)
@given(case, st.integers(1, 3))
def test_orthogonality_across_chaoses(args, q):
    p, N, symmetric, seed = args
    rng = np.random.default_rng(seed)
    law = random_law(rng, N, symmetric)
    f, g = random_kernel(p, N, rng), random_kernel(min(q, N), N, rng)
    expected = math.factorial(p) ** 2 * sum(v * g[k] for k, v in f.items()) if p == g.order else 0.0
    assert expect_exact(q_table(f, law) * q_table(g, law), law) == pytest.approx(expected, abs=1e-12)


@settings(max_examples=25, deadline=None)
@given(case)
def test_gradients_commute(args):
    p, N, symmetric, seed = args
    rng = np.random.default_rng(seed)
    law = random_law(rng, N, symmetric)
    F = HypercubeFunction(N, rng.normal(size=1 << N))
    k, l = (int(v) for v in rng.choice(N, size=2, replace=False))
    a = discrete_gradient(discrete_gradient(F, k, law), l, law)
    b = discrete_gradient(discrete_gradient(F, l, law), k, law)
    assert a.max_abs_diff(b) <= 1e-12


@settings(max_examples=25, deadline=None)
@given(case, st.integers(1, 3))
def test_product_formula_matches_enumeration(args, q):
    p, N, _, seed = args
    rng = np.random.default_rng(seed)
    law = RademacherLaw.symmetric(N)
    f, g = random_kernel(p, N, rng), random_kernel(min(q, N), N, rng)
    ref = walsh_decompose(q_table(f, law) * q_table(g, law), law)
    assert multiply_symmetric(f, g).max_abs_diff(ref) <= 1e-10


@settings(max_examples=25, deadline=None)
@given(case, st.integers(1, 3))
def test_biased_product_truncates_at_top_order(args, q):
    p, N, _, seed = args
    rng = np.random.default_rng(seed)
    law = RademacherLaw(rng.uniform(0.1, 0.9, N))
    f, g = random_kernel(p, N, rng), random_kernel(min(q, N), N, rng)
    ok, rep = product_top_kernel_check(f, g, law)
    assert ok
    assert rep["above_top_max_abs"] <= 1e-10


def test_chaos_product_general_law_equals_enumeration():
    rng = np.random.default_rng(4)
    law = RademacherLaw(rng.uniform(0.1, 0.9, 6))
    f, g = random_kernel(2, 6, rng), random_kernel(2, 6, rng)
    ref = walsh_decompose(q_table(f, law) * q_table(g, law), law)
    assert chaos_product(f, g, law).max_abs_diff(ref) <= 1e-12
