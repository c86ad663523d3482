"""Slow reference implementations used only by the tests.

Everything here works from definitions with plain loops over sign vectors
and ordered index tuples, sharing no algorithms with the package.
"""
from __future__ import annotations

import itertools
import math

import numpy as np


def y_value(p: float, x: int) -> float:
    q = 1.0 - p
    return (x - p + q) / (2.0 * math.sqrt(p * q))


def atoms(probs):
    """Yield ``(x, weight)`` for every sign vector; ``x[k]`` is coordinate ``k``."""
    N = len(probs)
    for bits in itertools.product((-1, 1), repeat=N):
        w = 1.0
        for k, b in enumerate(bits):
            w *= probs[k] if b == 1 else 1.0 - probs[k]
        yield bits, w


def dense_symmetric(entries: dict, order: int, dim: int) -> dict:
    """Every ordered tuple of the symmetric extension with its value."""
    out = {}
    for key, v in entries.items():
        for perm in itertools.permutations(key):
            out[perm] = v
    return out


def q_value(entries: dict, order: int, probs, x) -> float:
    """``sum over ordered distinct tuples of f(i) Y_i1 ... Y_ip``."""
    full = dense_symmetric(entries, order, len(probs))
    ys = [y_value(probs[k], x[k]) for k in range(len(probs))]
    total = 0.0
    for idx, v in full.items():
        total += v * math.prod(ys[i] for i in idx)
    return total


def expectation(func, probs) -> float:
    return sum(w * func(x) for x, w in atoms(probs))


def walsh_kernels(func, probs) -> dict[int, dict[tuple, float]]:
    """Projection onto ``prod_{k in S} Y_k``; order-``m`` kernel value is ``c_S / m!``.

    Order 0 holds the constant under key ``()``.
    """
    N = len(probs)
    table = [(x, w, func(x)) for x, w in atoms(probs)]
    out: dict[int, dict[tuple, float]] = {}
    for m in range(N + 1):
        for S in itertools.combinations(range(N), m):
            c = 0.0
            for x, w, fx in table:
                c += w * fx * math.prod(y_value(probs[k], x[k]) for k in S)
            if abs(c) > 1e-13:
                out.setdefault(m, {})[S] = c / math.factorial(m)
    return out


def contraction(f_entries, p, g_entries, q, r, N) -> dict:
    """``(f (x)_r g)`` on all ordered tuples, by the defining sum."""
    F = dense_symmetric(f_entries, p, N)
    G = dense_symmetric(g_entries, q, N)
    out = {}
    for idx in itertools.product(range(N), repeat=p + q - 2 * r):
        a, b = idx[:p - r], idx[p - r:]
        s = 0.0
        for k in itertools.product(range(N), repeat=r):
            s += F.get(a + k, 0.0) * G.get(b + k, 0.0)
        if s != 0.0:
            out[idx] = s
    return out


def law_of(func, probs):
    vals, ws = [], []
    for x, w in atoms(probs):
        vals.append(func(x))
        ws.append(w)
    return np.array(vals), np.array(ws)
