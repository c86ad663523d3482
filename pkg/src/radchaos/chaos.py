"""Exact calculus on the weighted hypercube {-1, +1}^N.

Functions of the sign vector ``X`` are stored as value tables of length
``2**N``; atom ``i`` is the assignment with ``X_k = +1`` exactly when bit
``k`` of ``i`` is set.  Chaos coefficients use the same bitmask layout: entry
``S`` of a coefficient array is the weight of ``prod_{k in S} Y_k``.

Both directions of the Walsh transform are coordinate-by-coordinate butterfly
sweeps, ``O(N 2**N)`` in total.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable

import numpy as np

from .errors import InputError, ResourceError
from .kernel import Kernel, offdiag_contractions

_exact_cap = 24


def get_exact_cap() -> int:
    return _exact_cap


def set_exact_cap(n: int) -> None:
    """Largest ``N`` for which full enumeration of ``2**N`` atoms is allowed."""
    global _exact_cap
    if not 1 <= int(n) <= 30:
        raise InputError(f"exact cap must lie in 1..30, got {n}")
    _exact_cap = int(n)


def check_cap(dim: int, cap: int | None = None) -> None:
    cap = _exact_cap if cap is None else cap
    if dim > cap:
        raise ResourceError(f"enumeration over 2^{dim} atoms exceeds the cap 2^{cap}")


# --------------------------------------------------------------------------
# Laws
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class RademacherLaw:
    """Independent signs with ``P(X_k = +1) = probs[k]``."""

    probs: np.ndarray

    def __post_init__(self):
        p = np.array(self.probs, dtype=float).reshape(-1)
        if p.size < 1:
            raise InputError("a law needs at least one coordinate")
        if not np.all((p > 0.0) & (p < 1.0)):
            raise InputError("every success probability must lie strictly between 0 and 1")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    @classmethod
    def symmetric(cls, n: int) -> RademacherLaw:
        return cls(np.full(int(n), 0.5))

    @classmethod
    def homogeneous(cls, p: float, n: int) -> RademacherLaw:
        return cls(np.full(int(n), float(p)))

    @classmethod
    def parse(cls, text: str) -> RademacherLaw:
        try:
            vals = [float(ln.split()[0]) for ln in text.splitlines()
                    if ln.strip() and not ln.lstrip().startswith("#")]
        except ValueError as exc:
            raise InputError(f"bad law file: {exc}") from exc
        return cls(np.array(vals))

    @classmethod
    def from_file(cls, path: str | Path) -> RademacherLaw:
        return cls.parse(Path(path).read_text())

    def to_text(self) -> str:
        return "".join(format(p, ".17g") + "\n" for p in self.probs)

    def __eq__(self, other) -> bool:
        return isinstance(other, RademacherLaw) and np.array_equal(self.probs, other.probs)

    def __repr__(self) -> str:
        if self.is_symmetric:
            return f"RademacherLaw.symmetric({self.dim})"
        return f"RademacherLaw({self.probs.tolist()!r})"

    @property
    def dim(self) -> int:
        return len(self.probs)

    @property
    def q(self) -> np.ndarray:
        return 1.0 - self.probs

    @property
    def spread(self) -> np.ndarray:
        """``sqrt(p_k q_k)``."""
        return np.sqrt(self.probs * self.q)

    @property
    def plus(self) -> np.ndarray:
        """Value of ``Y_k`` when ``X_k = +1``."""
        return np.sqrt(self.q / self.probs)

    @property
    def minus(self) -> np.ndarray:
        """Value of ``Y_k`` when ``X_k = -1``."""
        return -np.sqrt(self.probs / self.q)

    @property
    def is_symmetric(self) -> bool:
        return bool(np.all(self.probs == 0.5))

    def head(self, n: int) -> RademacherLaw:
        if n > self.dim:
            raise InputError(f"law has only {self.dim} coordinates, {n} requested")
        return RademacherLaw(self.probs[:n])


def normalized_value(law: RademacherLaw, k: int, x_k: int) -> float:
    """``(x_k - p_k + q_k) / (2 sqrt(p_k q_k))``."""
    if not 0 <= k < law.dim:
        raise InputError(f"coordinate {k} outside 0..{law.dim - 1}")
    if x_k not in (1, -1):
        raise InputError(f"sign must be +1 or -1, got {x_k}")
    p, q = law.probs[k], law.q[k]
    return float((x_k - p + q) / (2.0 * math.sqrt(p * q)))


def normalize_signs(x: np.ndarray, law: RademacherLaw) -> np.ndarray:
    """Map sign arrays (last axis = coordinates) to the normalised ``Y`` values."""
    x = np.asarray(x)
    n = x.shape[-1]
    return np.where(x > 0, law.plus[:n], law.minus[:n])


# --------------------------------------------------------------------------
# Hypercube value tables
# --------------------------------------------------------------------------

def sign_matrix(dim: int) -> np.ndarray:
    """``(2**dim, dim)`` array of +-1; row ``i`` is atom ``i``."""
    check_cap(dim)
    bits = (np.arange(1 << dim)[:, None] >> np.arange(dim)) & 1
    return (2 * bits - 1).astype(np.int8)


def signs_from_mask(mask: int, dim: int) -> np.ndarray:
    return np.array([1 if (mask >> k) & 1 else -1 for k in range(dim)], dtype=np.int8)


@dataclass(eq=False)
class HypercubeFunction:
    """Value table of a real function of ``X`` over all ``2**dim`` atoms."""

    dim: int
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).reshape(-1)
        if len(self.values) != 1 << self.dim:
            raise InputError(f"table length {len(self.values)} != 2^{self.dim}")

    @classmethod
    def constant(cls, c: float, dim: int) -> HypercubeFunction:
        check_cap(dim)
        return cls(dim, np.full(1 << dim, float(c)))

    @classmethod
    def from_callable(cls, func: Callable[[np.ndarray], float], dim: int) -> HypercubeFunction:
        """Tabulate ``func(signs)`` atom by atom (slow; for oracles and small ``dim``)."""
        S = sign_matrix(dim)
        return cls(dim, np.array([func(row) for row in S], dtype=float))

    @classmethod
    def coordinate(cls, k: int, law: RademacherLaw) -> HypercubeFunction:
        """Table of ``Y_k``."""
        check_cap(law.dim)
        bit = (np.arange(1 << law.dim) >> k) & 1
        return cls(law.dim, np.where(bit == 1, law.plus[k], law.minus[k]))

    def _other(self, other):
        if isinstance(other, HypercubeFunction):
            if other.dim != self.dim:
                raise InputError("dimension mismatch")
            return other.values
        return float(other)

    def __add__(self, other):
        return HypercubeFunction(self.dim, self.values + self._other(other))

    __radd__ = __add__

    def __sub__(self, other):
        return HypercubeFunction(self.dim, self.values - self._other(other))

    def __rsub__(self, other):
        return HypercubeFunction(self.dim, self._other(other) - self.values)

    def __mul__(self, other):
        return HypercubeFunction(self.dim, self.values * self._other(other))

    __rmul__ = __mul__

    def __neg__(self):
        return HypercubeFunction(self.dim, -self.values)

    def __pow__(self, m: int):
        return HypercubeFunction(self.dim, self.values ** m)

    def apply(self, func: Callable[[np.ndarray], np.ndarray]) -> HypercubeFunction:
        return HypercubeFunction(self.dim, func(self.values))

    def max_abs_diff(self, other: HypercubeFunction) -> float:
        return float(np.max(np.abs(self.values - self._other(other))))

    def at(self, x) -> float:
        """Value at a sign vector or bitmask."""
        if isinstance(x, (int, np.integer)):
            return float(self.values[int(x)])
        x = np.asarray(x)
        return float(self.values[int(((x > 0).astype(np.int64) << np.arange(self.dim)).sum())])


def _butterfly_view(values: np.ndarray, k: int) -> np.ndarray:
    # axis 1 selects bit k: slot 0 is X_k = -1, slot 1 is X_k = +1
    return values.reshape(-1, 2, 1 << k)


def expect_exact(F: HypercubeFunction, law: RademacherLaw, cap: int | None = None) -> float:
    """``E[F]`` as the probability-weighted sum over all atoms."""
    if F.dim != law.dim:
        raise InputError(f"function dim {F.dim} != law dim {law.dim}")
    check_cap(F.dim, cap)
    v = F.values
    for k in range(F.dim - 1, -1, -1):
        v = v.reshape(2, -1)
        v = law.q[k] * v[0] + law.probs[k] * v[1]
    return float(v[0])


def l2_norm(F: HypercubeFunction, law: RademacherLaw) -> float:
    return math.sqrt(expect_exact(F * F, law))


def walsh_coefficients(F: HypercubeFunction, law: RademacherLaw) -> np.ndarray:
    """Coefficients ``c_S = E[F prod_{k in S} Y_k]`` indexed by bitmask ``S``."""
    if F.dim != law.dim:
        raise InputError(f"function dim {F.dim} != law dim {law.dim}")
    check_cap(F.dim)
    c = F.values.copy()
    p, q, s = law.probs, law.q, law.spread
    for k in range(F.dim):
        v = _butterfly_view(c, k)
        minus, plus = v[:, 0, :].copy(), v[:, 1, :].copy()
        v[:, 0, :] = p[k] * plus + q[k] * minus
        v[:, 1, :] = s[k] * (plus - minus)
    return c


def from_walsh_coefficients(coeffs: np.ndarray, law: RademacherLaw) -> HypercubeFunction:
    """Inverse of :func:`walsh_coefficients`."""
    dim = law.dim
    check_cap(dim)
    v_all = np.array(coeffs, dtype=float).reshape(-1)
    if len(v_all) != 1 << dim:
        raise InputError("coefficient array has the wrong length")
    for k in range(dim):
        v = _butterfly_view(v_all, k)
        c0, c1 = v[:, 0, :].copy(), v[:, 1, :].copy()
        v[:, 1, :] = c0 + law.plus[k] * c1
        v[:, 0, :] = c0 + law.minus[k] * c1
    return HypercubeFunction(dim, v_all)


def discrete_gradient(F: HypercubeFunction, k: int, law: RademacherLaw) -> HypercubeFunction:
    """``D_k F = sqrt(p_k q_k) (F with X_k=+1  -  F with X_k=-1)``."""
    if not 0 <= k < F.dim:
        raise InputError(f"coordinate {k} outside 0..{F.dim - 1}")
    v = _butterfly_view(F.values, k)
    d = law.spread[k] * (v[:, 1, :] - v[:, 0, :])
    out = np.empty_like(v)
    out[:, 0, :] = d
    out[:, 1, :] = d
    return HypercubeFunction(F.dim, out.reshape(-1))


def _popcount(masks: np.ndarray) -> np.ndarray:
    counts = np.zeros(masks.shape, dtype=np.int64)
    m = masks.copy()
    while np.any(m):
        counts += m & 1
        m >>= 1
    return counts


def _coefficients_from_kernel(f: Kernel, dim: int) -> np.ndarray:
    if f.dim > dim:
        raise InputError(f"kernel dim {f.dim} exceeds law dim {dim}")
    c = np.zeros(1 << dim)
    if f.nnz:
        np.add.at(c, f.bitmasks(), math.factorial(f.order) * f.values)
    return c


def q_table(f: Kernel, law: RademacherLaw) -> HypercubeFunction:
    """Table of ``Q_p(f; Y)`` over all atoms."""
    check_cap(law.dim)
    return from_walsh_coefficients(_coefficients_from_kernel(f, law.dim), law)


def _prefix_operator(f: Kernel):
    """Split keys as (prefix, last index): returns prefix rows and a sparse matrix."""
    cached = f._prefix_cache
    if cached is not None:
        return cached
    from scipy import sparse

    prefixes, row = np.unique(f.keys[:, :-1], axis=0, return_inverse=True)
    W = sparse.csr_matrix((f.values, (row.reshape(-1), f.keys[:, -1])),
                          shape=(len(prefixes), f.dim))
    f._prefix_cache = (prefixes, W)
    return prefixes, W


def homogeneous_sum(f: Kernel, xi: np.ndarray) -> np.ndarray | float:
    """``Q_p(f; xi)`` for real inputs ``xi`` of shape ``(N,)`` or ``(N, B)`` (coordinate-major).

    Keys are grouped by their first ``p - 1`` indices so the sum becomes one
    sparse matrix product plus a product over the distinct prefixes.
    """
    xi = np.asarray(xi, dtype=float)
    single = xi.ndim == 1
    if single:
        xi = xi[:, None]
    if f.nnz == 0:
        return 0.0 if single else np.zeros(xi.shape[1])
    if int(f.keys.max()) >= xi.shape[0]:
        raise InputError(f"input has {xi.shape[0]} coordinates, kernel needs {f.dim}")
    prefixes, W = _prefix_operator(f)
    if W.shape[1] > xi.shape[0]:
        W = W[:, :xi.shape[0]]
    inner_sum = W @ xi
    if f.order > 1:
        for j in range(f.order - 1):
            inner_sum *= xi[prefixes[:, j]]
        out = inner_sum.sum(axis=0)
    else:
        out = inner_sum[0]
    out *= math.factorial(f.order)
    return float(out[0]) if single else out


def eval_Q(f: Kernel, x, law: RademacherLaw) -> float | np.ndarray:
    """``Q_p(f; Y(x))`` for a sign vector (or a batch of rows of signs)."""
    x = np.asarray(x)
    if x.shape[-1] < f.dim:
        raise InputError(f"sign vector has {x.shape[-1]} coordinates, kernel needs {f.dim}")
    if f.dim > law.dim:
        raise InputError(f"kernel dim {f.dim} exceeds law dim {law.dim}")
    y = normalize_signs(x[..., :law.dim], law)
    if y.ndim == 1:
        return homogeneous_sum(f, y)
    return homogeneous_sum(f, y.T)


def moments(f: Kernel, law: RademacherLaw, orders: Iterable[int]) -> dict[int, float]:
    """Exact ``E[Q_p(f)^m]`` for each requested ``m`` by enumeration."""
    F = q_table(f, law)
    return {int(m): expect_exact(F ** int(m), law) for m in orders}


# --------------------------------------------------------------------------
# Chaos decompositions
# --------------------------------------------------------------------------

@dataclass(eq=False)
class ChaosDecomposition:
    """``constant + sum_k Q_k(kernels[k])``."""

    dim: int
    constant: float = 0.0
    kernels: dict[int, Kernel] = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        for k, h in self.kernels.items():
            if h.order != k:
                raise InputError(f"kernel stored under order {k} has order {h.order}")
            if h.dim != self.dim:
                raise InputError(f"kernel dim {h.dim} != decomposition dim {self.dim}")

    @property
    def orders(self) -> list[int]:
        return sorted(k for k, h in self.kernels.items() if h.nnz)

    @property
    def max_order(self) -> int:
        return max(self.orders, default=0)

    def kernel(self, k: int) -> Kernel:
        h = self.kernels.get(k)
        return h if h is not None else Kernel.zero(k, self.dim)

    def scale_orders(self, factor: Callable[[int], float]) -> ChaosDecomposition:
        """Multiply the order-``k`` component by ``factor(k)`` (order 0 = constant)."""
        kernels = {k: h.scaled(factor(k)) for k, h in self.kernels.items()}
        return ChaosDecomposition(self.dim, self.constant * factor(0), kernels, dict(self.meta))

    def component_norms(self) -> dict[int, float]:
        """``E[J_k^2] = k! ||h_k||^2`` for each ``k >= 1``."""
        from .kernel import norm_sq
        return {k: math.factorial(k) * norm_sq(h) for k, h in sorted(self.kernels.items())}

    def variance(self) -> float:
        return float(sum(self.component_norms().values()))

    def second_moment(self) -> float:
        return self.constant ** 2 + self.variance()

    def coefficients(self) -> np.ndarray:
        c = np.zeros(1 << self.dim)
        c[0] = self.constant
        for h in self.kernels.values():
            c += _coefficients_from_kernel(h, self.dim)
        return c

    def to_function(self, law: RademacherLaw) -> HypercubeFunction:
        if law.dim != self.dim:
            raise InputError(f"law dim {law.dim} != decomposition dim {self.dim}")
        return from_walsh_coefficients(self.coefficients(), law)

    def max_abs_diff(self, other: ChaosDecomposition) -> float:
        """Largest coefficient deviation (constant and all kernel entries)."""
        dev = abs(self.constant - other.constant)
        for k in set(self.kernels) | set(other.kernels):
            dev = max(dev, self.kernel(k).max_abs_diff(other.kernel(k)))
        return dev


def _kernels_from_coefficients(c: np.ndarray, dim: int, tol: float) -> dict[int, Kernel]:
    masks = np.nonzero(np.abs(c) > tol)[0]
    masks = masks[masks != 0]
    if not len(masks):
        return {}
    pop = _popcount(masks)
    bits = (masks[:, None] >> np.arange(dim)) & 1
    out = {}
    for m in np.unique(pop):
        sel = pop == m
        keys = np.nonzero(bits[sel])[1].reshape(-1, int(m))
        out[int(m)] = Kernel.from_arrays(int(m), dim, keys, c[masks[sel]] / math.factorial(int(m)))
    return out


def walsh_decompose(F: HypercubeFunction, law: RademacherLaw, tol: float | None = None) -> ChaosDecomposition:
    """Chaos decomposition of ``F`` via iterated discrete gradients.

    Kernel entries follow ``h_m(S) = E[D_S F] / m!``.  Coefficients with
    absolute value at most ``tol`` are dropped; the default is
    ``1e-14 * max(1, max |c|)``, which only removes round-off residue.
    """
    c = walsh_coefficients(F, law)
    if tol is None:
        tol = 1e-14 * max(1.0, float(np.max(np.abs(c))))
    return ChaosDecomposition(F.dim, float(c[0]), _kernels_from_coefficients(c, F.dim, tol),
                              {"law": "symmetric" if law.is_symmetric else "general"})


def multiply_symmetric(f: Kernel, g: Kernel) -> ChaosDecomposition:
    """Product formula for symmetric signs: order ``p+q-2r`` gets ``r! C(p,r) C(q,r) (f ~(x)_r g) 1_Delta``.

    Valid only when every ``p_k = 1/2``; the caller is responsible for that.
    """
    p, q = f.order, g.order
    terms = offdiag_contractions(f, g)
    constant = 0.0
    kernels: dict[int, Kernel] = {}
    for r, term in terms.items():
        weight = math.factorial(r) * math.comb(p, r) * math.comb(q, r)
        if p + q - 2 * r == 0:
            constant = weight * term
        elif term.nnz:
            kernels[p + q - 2 * r] = term.scaled(weight)
    return ChaosDecomposition(f.dim, constant, kernels, {"law": "symmetric (assumed)"})


def product_decomposition(f: Kernel, g: Kernel, law: RademacherLaw) -> ChaosDecomposition:
    """Walsh decomposition of the pointwise product ``Q_p(f) Q_q(g)``."""
    return walsh_decompose(q_table(f, law) * q_table(g, law), law)


def chaos_product(f: Kernel, g: Kernel, law: RademacherLaw) -> ChaosDecomposition:
    """Decomposition of ``Q_p(f) Q_q(g)`` by the cheapest exact route.

    Symmetric laws use the product formula and work at any dimension;
    otherwise the product table is enumerated (``law.dim`` within the cap).
    """
    if law.is_symmetric:
        return multiply_symmetric(f.with_dim(law.dim) if f.dim != law.dim else f,
                                  g.with_dim(law.dim) if g.dim != law.dim else g)
    return product_decomposition(f, g, law)


def product_top_kernel_check(f: Kernel, g: Kernel, law: RademacherLaw, tol: float = 1e-10) -> tuple[bool, dict]:
    """Check that ``Q_p(f) Q_q(g)`` stops at order ``p+q`` with top kernel ``(f ~(x) g) 1_Delta``."""
    from .kernel import sym_offdiag_product

    top = f.order + g.order
    c = walsh_coefficients(q_table(f, law) * q_table(g, law), law)
    pop = _popcount(np.arange(len(c), dtype=np.int64))
    above = float(np.max(np.abs(c[pop > top]), initial=0.0))
    dec = ChaosDecomposition(law.dim, float(c[0]), _kernels_from_coefficients(c, law.dim, 0.0))
    expected = sym_offdiag_product(f.with_dim(law.dim), g.with_dim(law.dim))
    top_dev = dec.kernel(top).max_abs_diff(expected)
    report = {
        "max_order_present": int(pop[np.abs(c) > tol].max(initial=0)),
        "above_top_max_abs": above,
        "top_kernel_deviation": top_dev,
        "decomposition": dec,
    }
    return (above <= tol and top_dev <= tol), report


def decomposition_inner(a: ChaosDecomposition, b: ChaosDecomposition) -> float:
    """``E[A B]`` from two chaos expansions (orthogonality across orders)."""
    from .kernel import inner
    total = a.constant * b.constant
    for k in set(a.orders) & set(b.orders):
        total += math.factorial(k) * inner(a.kernels[k], b.kernels[k])
    return float(total)


def atom_weights(law: RademacherLaw) -> np.ndarray:
    """Probability of every atom, in bitmask order."""
    check_cap(law.dim)
    w = np.ones(1)
    for k in range(law.dim):
        w = np.concatenate([w * law.q[k], w * law.probs[k]])
    return w


def law_of_Q(f: Kernel, law: RademacherLaw) -> tuple[np.ndarray, np.ndarray]:
    """Atoms and probabilities of ``Q_p(f; Y)`` (one entry per hypercube atom)."""
    if f.dim < law.dim:
        f = f.with_dim(law.dim)
    return q_table(f, law).values, atom_weights(law)


def first_chaos_law(h: Kernel, law: RademacherLaw, max_atoms: int = 1 << 20,
                    merge_tol: float = 1e-12) -> tuple[np.ndarray, np.ndarray]:
    """Exact law of ``Q_1(h)`` by successive convolution, merging coincident atoms.

    Works far beyond the enumeration cap when ``h`` takes few distinct values
    (for a constant ``h`` the support has ``N + 1`` points).
    """
    if h.order != 1:
        raise InputError("first_chaos_law needs an order-1 kernel")
    if h.dim > law.dim:
        raise InputError(f"kernel dim {h.dim} exceeds law dim {law.dim}")
    atoms, weights = np.zeros(1), np.ones(1)
    for (k,), c in h.items():
        atoms = np.concatenate([atoms + c * law.plus[k], atoms + c * law.minus[k]])
        weights = np.concatenate([weights * law.probs[k], weights * law.q[k]])
        order = np.argsort(atoms, kind="stable")
        atoms, weights = atoms[order], weights[order]
        new = np.concatenate([[True], np.diff(atoms) > merge_tol * (1.0 + np.abs(atoms[1:]))])
        starts = np.nonzero(new)[0]
        weights = np.add.reduceat(weights, starts)
        atoms = atoms[starts]
        if len(atoms) > max_atoms:
            raise ResourceError(f"first-chaos law has more than {max_atoms} atoms")
    return atoms, weights
