from __future__ import annotations

import io
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import contraction
from radchaos import InputError, Kernel, RawTable, contract, counterexample_kernel, inner, max_influence, norm_sq, symmetrize
from radchaos.kernel import (contraction_norm_sq, leak_norm_sq, normalized, offdiag_contractions, parse_kernel,
                             random_kernel, restrict, sym_offdiag_product, sym_product_norm_sq, table_norm_sq,
                             write_kernel)


def pair_kernel(a=0, b=1, v=0.5, dim=3):
    return Kernel(2, dim, {(a, b): v})


def test_value_at_symmetric_extension():
    f = pair_kernel()
    assert f[1, 0] == 0.5
    assert f[0, 1] == 0.5
    assert f[0, 0] == 0.0
    assert f[0, 2] == 0.0


def test_value_at_rejects_bad_index():
    f = pair_kernel()
    with pytest.raises(InputError):
        f.value_at((0, 1, 2))
    with pytest.raises(InputError):
        f.value_at((0, 3))


def test_constructor_rejects_diagonal_and_duplicates():
    with pytest.raises(InputError):
        Kernel(2, 3, {(1, 1): 1.0})
    with pytest.raises(InputError):
        Kernel(2, 3, {(0, 1): 1.0, (1, 0): 2.0})
    with pytest.raises(InputError):
        Kernel(0, 3)


def test_symmetrize_two_permutations():
    t = RawTable.from_entries(2, 2, {(0, 1): 1.0})
    s = symmetrize(t)
    assert s.value_at((0, 1)) == pytest.approx(0.5)
    assert s.value_at((1, 0)) == pytest.approx(0.5)


def test_symmetrize_fixed_point():
    t = RawTable.from_entries(2, 3, {(0, 1): 1.0, (1, 0): 1.0, (2, 2): 3.0})
    assert np.array_equal(symmetrize(t).values, t.values)


def test_contract_examples():
    f = Kernel(2, 2, {(0, 1): 1.0})
    c1 = contract(f, f, 1)
    assert c1.value_at((0, 0)) == 1.0
    assert c1.value_at((1, 1)) == 1.0
    assert c1.value_at((0, 1)) == 0.0
    assert c1.value_at((1, 0)) == 0.0
    c2 = contract(f, f, 2)
    assert float(c2.values) == pytest.approx(2.0)


def test_contract_r0_is_tensor_product():
    rng = np.random.default_rng(3)
    f, g = random_kernel(1, 4, rng), random_kernel(1, 4, rng)
    t = contract(f, g, 0)
    for i in range(4):
        for j in range(4):
            assert t.value_at((i, j)) == pytest.approx(f[i] * g[j])


def test_contract_rejects_large_r():
    f = Kernel.indicator(0, 3)
    with pytest.raises(InputError):
        contract(f, f, 2)


def test_sym_offdiag_product_examples():
    e1, e2, e3 = (Kernel.indicator(k, 3) for k in range(3))
    assert sym_offdiag_product(e1, e1).nnz == 0
    assert sym_offdiag_product(e1, e2).entries == {(0, 1): pytest.approx(0.5)}
    f = Kernel(2, 3, {(0, 1): 1.0})
    h = sym_offdiag_product(f, e3)
    assert h.order == 3
    assert h.entries == {(0, 1, 2): pytest.approx(1 / 3)}


def test_norm_and_inner_examples():
    assert norm_sq(pair_kernel()) == pytest.approx(0.5)
    assert inner(Kernel.indicator(0, 2), Kernel.indicator(1, 2)) == 0.0


def test_max_influence_examples():
    assert max_influence(Kernel.zero(2, 4)) == 0.0
    a, b = 0.3, -0.7
    f = Kernel(2, 3, {(0, 1): a, (0, 2): b})
    assert max_influence(f) == pytest.approx(a * a + b * b)


def test_counterexample_kernel_values():
    f = counterexample_kernel(2, 2)
    assert f.entries == {(0, 1): 0.5}
    assert 2 * norm_sq(f) == pytest.approx(1.0)
    g = counterexample_kernel(2, 5)
    assert g.nnz == 4
    assert np.allclose(g.values, 0.25)
    for N in (3, 10, 100):
        assert max_influence(counterexample_kernel(2, N)) == pytest.approx(0.25)
    with pytest.raises(InputError):
        counterexample_kernel(1, 5)


def test_normalized_has_unit_second_moment():
    f = normalized(random_kernel(3, 6, np.random.default_rng(0)))
    assert math.factorial(3) * norm_sq(f) == pytest.approx(1.0)


def test_kernel_file_round_trip():
    f = random_kernel(3, 7, np.random.default_rng(5))
    buf = io.StringIO()
    write_kernel(f, buf)
    g = parse_kernel(buf.getvalue())
    assert g.order == 3 and g.dim == 7
    assert g.max_abs_diff(f) == 0.0


def test_parse_kernel_rejects_garbage():
    with pytest.raises(InputError):
        parse_kernel("order 2 dim 3\n0 1\n")
    with pytest.raises(InputError):
        parse_kernel("nonsense\n")


def test_offdiag_contraction_top_is_inner():
    rng = np.random.default_rng(9)
    f, g = random_kernel(2, 5, rng), random_kernel(2, 5, rng)
    out = offdiag_contractions(f, g, [2])
    assert out[2] == pytest.approx(inner(f, g))


# ---------------------------------------------------------------- properties

kernel_pairs = st.tuples(st.integers(1, 3), st.integers(1, 3), st.integers(3, 5), st.integers(0, 2**32 - 1))


@settings(max_examples=40, deadline=None)
@given(kernel_pairs)
def test_contract_matches_brute_force(args):
    p, q, N, seed = args
    N = min(N, 4)
    rng = np.random.default_rng(seed)
    f, g = random_kernel(p, N, rng), random_kernel(q, N, rng)
    for r in range(min(p, q) + 1):
        ref = contraction(f.entries, p, g.entries, q, r, N)
        t = contract(f, g, r)
        if p + q - 2 * r == 0:
            assert float(t.values) == pytest.approx(ref.get((), 0.0), abs=1e-12)
            continue
        dense = np.zeros((N,) * (p + q - 2 * r))
        for idx, v in ref.items():
            dense[idx] = v
        assert np.max(np.abs(t.values - dense)) <= 1e-12


@settings(max_examples=40, deadline=None)
@given(kernel_pairs)
def test_symmetrize_idempotent_and_contracting(args):
    p, q, N, seed = args
    rng = np.random.default_rng(seed)
    f, g = random_kernel(p, N, rng), random_kernel(q, N, rng)
    t = contract(f, g, 0)
    s = symmetrize(t)
    assert np.max(np.abs(symmetrize(s).values - s.values)) <= 1e-12
    assert table_norm_sq(s) <= table_norm_sq(t) + 1e-12


@settings(max_examples=40, deadline=None)
@given(kernel_pairs)
def test_symmetrized_product_norm_expansion(args):
    p, q, N, seed = args
    rng = np.random.default_rng(seed)
    f, g = random_kernel(p, N, rng), random_kernel(q, N, rng)
    left = math.factorial(p + q) * sym_product_norm_sq(f, g)
    right = math.factorial(p) * math.factorial(q) * sum(
        math.comb(p, r) * math.comb(q, r) * contraction_norm_sq(f, g, r) for r in range(min(p, q) + 1))
    assert left == pytest.approx(right, rel=1e-10, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(kernel_pairs)
def test_offdiag_split_is_orthogonal(args):
    p, q, N, seed = args
    rng = np.random.default_rng(seed)
    f, g = random_kernel(p, N, rng), random_kernel(q, N, rng)
    full = symmetrize(contract(f, g, 0))
    on = restrict(full, offdiag=True)
    off = restrict(full, offdiag=False)
    assert table_norm_sq(on) + table_norm_sq(off) == pytest.approx(table_norm_sq(full), rel=1e-12, abs=1e-14)
    assert leak_norm_sq(f, g) == pytest.approx(table_norm_sq(off), rel=1e-12, abs=1e-14)
    if p + q <= N:
        assert norm_sq(sym_offdiag_product(f, g)) == pytest.approx(table_norm_sq(on), rel=1e-10, abs=1e-14)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 3), st.integers(3, 6), st.integers(0, 2**32 - 1))
def test_influence_bounded_by_contraction(p, N, seed):
    f = random_kernel(p, N, np.random.default_rng(seed))
    assert max_influence(f) <= norm_sq(f) + 1e-12
    if p >= 2:
        assert max_influence(f) <= math.sqrt(contraction_norm_sq(f, f, p - 1)) + 1e-12
