"""1-Wasserstein distance to the standard Gaussian.

In one dimension ``W1(mu, N(0,1)) = int |F_mu - Phi|``.  For a discrete
``mu`` the CDF is a step function, and on each step ``[a, b)`` with level
``c`` the integral of ``|c - Phi|`` has a closed form through the
antiderivative ``Psi(x) = x Phi(x) + phi(x)`` of ``Phi``.
"""
from __future__ import annotations

import math

import numpy as np
from scipy.special import ndtr, ndtri

from .errors import InputError

_SQRT_2PI = math.sqrt(2.0 * math.pi)


def _psi(x: np.ndarray) -> np.ndarray:
    """Antiderivative of Phi; finite at -inf (-> 0)."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    fin = np.isfinite(x)
    out[fin] = x[fin] * ndtr(x[fin]) + np.exp(-0.5 * x[fin] ** 2) / _SQRT_2PI
    out[x == np.inf] = np.inf
    return out


def _upper_tail(x: np.ndarray) -> np.ndarray:
    """``int_x^inf (1 - Phi)``, stable for large positive ``x``."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    fin = np.isfinite(x)
    xf = x[fin]
    out[fin] = np.exp(-0.5 * xf ** 2) / _SQRT_2PI - xf * ndtr(-xf)
    out[x == -np.inf] = np.inf
    return out


def _abs_integral(c: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """``int_a^b |c - Phi(x)| dx`` elementwise, with ``a <= b`` possibly infinite."""
    c = np.asarray(c, dtype=float)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    total = np.zeros(np.broadcast(c, a, b).shape)
    c, a, b = np.broadcast_arrays(c, a, b)

    low = c <= 0.0  # |Phi| on [a, b]; a = -inf only when c = 0
    total[low] = _psi(b[low]) - _psi(a[low])
    high = c >= 1.0  # |1 - Phi|; b = +inf only when c = 1
    total[high] = _upper_tail(a[high]) - _upper_tail(b[high])

    mid = ~(low | high)
    if np.any(mid):
        cm, am, bm = c[mid], a[mid], b[mid]
        s = np.clip(ndtri(cm), am, bm)
        # left piece: c - Phi on [a, s];  right piece: Phi - c on [s, b]
        left = cm * (s - am) - (_psi(s) - _psi(am))
        right = (_psi(bm) - _psi(s)) - cm * (bm - s)
        total[mid] = left + right
    return total


def w1_discrete(atoms: np.ndarray, weights: np.ndarray | None = None) -> float:
    """Exact ``W1`` between a finitely supported law and ``N(0, 1)``."""
    x = np.asarray(atoms, dtype=float).reshape(-1)
    if x.size == 0:
        raise InputError("empty law")
    w = np.full(x.size, 1.0 / x.size) if weights is None else np.asarray(weights, dtype=float).reshape(-1)
    if w.shape != x.shape or np.any(w < 0):
        raise InputError("weights must be non-negative and match the atoms")
    order = np.argsort(x, kind="stable")
    x, w = x[order], w[order]
    uniq, start = np.unique(x, return_index=True)
    mass = np.add.reduceat(w, start)
    mass /= mass.sum()
    cdf = np.cumsum(mass)
    cdf[-1] = 1.0
    lefts = np.concatenate([[-np.inf], uniq])
    rights = np.concatenate([uniq, [np.inf]])
    levels = np.concatenate([[0.0], cdf])
    return float(_abs_integral(levels, lefts, rights).sum())


def w1_empirical(samples: np.ndarray) -> float:
    """``W1`` between the empirical law of ``samples`` and ``N(0, 1)``."""
    return w1_discrete(samples)


def w1_bootstrap(samples: np.ndarray, rng: np.random.Generator, reps: int = 50,
                 max_size: int = 200_000) -> tuple[float, float]:
    """Empirical ``W1`` and a bootstrap standard error.

    Resamples are capped at ``max_size`` draws and the spread is rescaled by
    ``sqrt(size / n)`` to the full sample size.
    """
    x = np.asarray(samples, dtype=float).reshape(-1)
    est = w1_empirical(x)
    m = min(len(x), max_size)
    boots = np.array([w1_empirical(rng.choice(x, size=m, replace=True)) for _ in range(reps)])
    se = float(boots.std(ddof=1) * math.sqrt(m / len(x)))
    return est, se
