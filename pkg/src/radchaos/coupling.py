"""Ornstein-Uhlenbeck structure on the hypercube and the exponential-clock coupling.

``X^t`` keeps coordinate ``k`` of ``X`` while an independent Exp(1) clock
``theta_k`` has not rung (``theta_k >= t``), and replaces it by an
independent copy otherwise.  Conditional expectations given ``X`` are the
tensor product of one-coordinate mixtures

    F  ->  e^{-t} F + (1 - e^{-t}) E_k F,

where ``E_k`` averages out coordinate ``k``.  Everything here except
:func:`couple_sample` is exact.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .chaos import (ChaosDecomposition, HypercubeFunction, RademacherLaw, chaos_product,
                    check_cap, discrete_gradient, expect_exact, q_table, walsh_decompose,
                    _butterfly_view)
from .errors import InputError, ResourceError
from .kernel import Kernel


def apply_L(d: ChaosDecomposition) -> ChaosDecomposition:
    """Generator: order-``k`` component times ``-k``."""
    return d.scale_orders(lambda k: -float(k))


def apply_Pt(d: ChaosDecomposition, t: float) -> ChaosDecomposition:
    """Semigroup: order-``k`` component times ``exp(-k t)``."""
    if t < 0:
        raise InputError(f"semigroup time must be non-negative, got {t}")
    return d.scale_orders(lambda k: math.exp(-k * t))


# --------------------------------------------------------------------------
# Carre du champ
# --------------------------------------------------------------------------

def carre_du_champ(f: Kernel, g: Kernel, law: RademacherLaw) -> ChaosDecomposition:
    """``Gamma(Q_p(f), Q_q(g))`` from the chaos expansion of the product.

    ``J_k(FG)`` is rescaled by ``(p + q - k) / 2``.  Symmetric laws use the
    product formula, so no enumeration is needed there.
    """
    s = f.order + g.order
    return chaos_product(f, g, law).scale_orders(lambda k: (s - k) / 2.0)


def gamma_from_generator(F: HypercubeFunction, G: HypercubeFunction, law: RademacherLaw) -> HypercubeFunction:
    """``(L(FG) - F LG - G LF) / 2`` on all atoms, for arbitrary tables."""
    def L(H):
        return apply_L(walsh_decompose(H, law)).to_function(law)
    return 0.5 * (L(F * G) - F * L(G) - G * L(F))


def gamma_gradient_form(F: HypercubeFunction, G: HypercubeFunction, law: RademacherLaw) -> HypercubeFunction:
    """``sum_k D_k F D_k G (1 + Y_k^2) / 2``, an expression free of chaos expansions."""
    out = HypercubeFunction.constant(0.0, F.dim)
    for k in range(F.dim):
        Y = HypercubeFunction.coordinate(k, law)
        out = out + discrete_gradient(F, k, law) * discrete_gradient(G, k, law) * (1.0 + Y * Y) * 0.5
    return out


def gamma_variance(f: Kernel, g: Kernel, law: RademacherLaw) -> tuple[float, float]:
    """Both sides of ``Var Gamma = sum (p+q-k)^2/4 Var J_k(FG) <= max(p,q)^2 sum Var J_k(FG)``."""
    prod = chaos_product(f, g, law)
    s = f.order + g.order
    norms = prod.component_norms()
    exact = sum((s - k) ** 2 / 4.0 * v for k, v in norms.items())
    bound = max(f.order, g.order) ** 2 * sum(norms.values())
    return float(exact), float(bound)


var_gamma = gamma_variance


def rho(f: Kernel, law: RademacherLaw) -> float:
    """``-4p E[F^4] + 12 E[F^2 Gamma(F,F)]`` for ``F = Q_p(f)``.

    With ``F^2 = sum_k J_k`` both expectations are diagonal in ``k``, giving
    ``sum_k (8p - 6k) E[J_k^2]``.
    """
    p = f.order
    sq = chaos_product(f, f, law)
    total = (8 * p) * sq.constant ** 2
    for k, v in sq.component_norms().items():
        total += (8 * p - 6 * k) * v
    return float(total)


def moments_from_square(f: Kernel, law: RademacherLaw) -> dict[str, float]:
    """``E[F^2]``, ``E[F^4]`` and ``E[F^2 Gamma(F,F)]`` via the expansion of ``F^2``."""
    p = f.order
    sq = chaos_product(f, f, law)
    norms = sq.component_norms()
    m2 = sq.constant
    m4 = m2 ** 2 + sum(norms.values())
    f2g = p * m2 ** 2 + sum((2 * p - k) / 2.0 * v for k, v in norms.items())
    return {"m2": float(m2), "m4": float(m4), "f2gamma": float(f2g)}


# --------------------------------------------------------------------------
# Exponential-clock coupling
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class CouplingState:
    """One realisation of ``(X, X^t)``: base signs, clock indicators and refresh signs."""

    t: float
    base: np.ndarray
    clocks: np.ndarray
    refresh: np.ndarray

    @property
    def coupled(self) -> np.ndarray:
        return np.where(self.clocks, self.refresh, self.base)


def _signs(rng: np.random.Generator, law: RademacherLaw, shape) -> np.ndarray:
    u = rng.random(shape)
    return np.where(u < law.probs, 1, -1).astype(np.int8)


def couple_state(x, t: float, law: RademacherLaw, rng: np.random.Generator) -> CouplingState:
    if t < 0:
        raise InputError(f"coupling time must be non-negative, got {t}")
    x = np.asarray(x, dtype=np.int8)
    if x.shape[-1] != law.dim:
        raise InputError(f"sign vector has {x.shape[-1]} coordinates, law has {law.dim}")
    theta = rng.standard_exponential(x.shape)
    return CouplingState(float(t), x, theta < t, _signs(rng, law, x.shape))


def couple_sample(x, t: float, law: RademacherLaw, seed: int) -> np.ndarray:
    """``X^t`` given ``X = x``; ``x`` may be one sign vector or a batch of rows."""
    from .sampling import block_rng
    return couple_state(x, t, law, block_rng(seed, 0)).coupled


def _mix_coordinate(v: np.ndarray, k: int, law: RademacherLaw) -> np.ndarray:
    """``E_k v - v`` for a table ``v``."""
    w = _butterfly_view(v, k)
    avg = law.q[k] * w[:, 0, :] + law.probs[k] * w[:, 1, :]
    out = np.empty_like(w)
    out[:, 0, :] = avg - w[:, 0, :]
    out[:, 1, :] = avg - w[:, 1, :]
    return out.reshape(-1)


def mehler_increment(F: HypercubeFunction, t: float, law: RademacherLaw) -> HypercubeFunction:
    """``E[F(X^t) | X] - F(X)`` computed without subtracting O(1) quantities.

    Writing ``a = 1 - e^{-t}``, the conditional expectation is
    ``prod_k (I + a (E_k - I)) F``; the sweep carries only the increment.
    """
    if t < 0:
        raise InputError(f"coupling time must be non-negative, got {t}")
    if F.dim != law.dim:
        raise InputError(f"function dim {F.dim} != law dim {law.dim}")
    check_cap(F.dim)
    a = -math.expm1(-t)
    base = F.values
    delta = np.zeros_like(base)
    for k in range(F.dim):
        delta = delta + a * _mix_coordinate(base + delta, k, law)
    return HypercubeFunction(F.dim, delta)


def mehler_table(F: HypercubeFunction, t: float, law: RademacherLaw) -> HypercubeFunction:
    """``E[F(X^t) | X]`` on all atoms."""
    return F + mehler_increment(F, t, law)


def mehler_check(F: HypercubeFunction, t: float, law: RademacherLaw) -> float:
    """Largest gap between the coupling mixture and ``P_t`` applied to the chaos expansion."""
    via_coupling = mehler_table(F, t, law)
    via_semigroup = apply_Pt(walsh_decompose(F, law, tol=0.0), t).to_function(law)
    return via_coupling.max_abs_diff(via_semigroup)


def pair_kernel(t: float, law: RademacherLaw, k: int) -> np.ndarray:
    """2x2 joint law of ``(X_k, X_k^t)``; index 0 is -1, index 1 is +1."""
    keep = math.exp(-t)
    w = np.array([law.q[k], law.probs[k]])
    return (1.0 - keep) * np.outer(w, w) + keep * np.diag(w)


def joint_atom_law(t: float, law: RademacherLaw, cap: int = 12) -> np.ndarray:
    """``2^N x 2^N`` matrix ``P[x, y] = P(X = x, X^t = y)`` in bitmask order."""
    if law.dim > cap:
        raise ResourceError(f"joint law over 4^{law.dim} pairs exceeds the cap 4^{cap}")
    P = np.ones((1, 1))
    for k in range(law.dim):
        P = np.kron(pair_kernel(t, law, k), P)
    return P


def _value_classes(values: np.ndarray, tol: float) -> np.ndarray:
    """Label atoms by their value, merging values closer than ``tol``."""
    order = np.argsort(values, kind="stable")
    sv = values[order]
    step = np.concatenate([[0], (np.diff(sv) > tol).astype(np.int64)])
    labels = np.empty(len(values), dtype=np.int64)
    labels[order] = np.cumsum(step)
    return labels


def exchangeability_check(f: Kernel, t: float, law: RademacherLaw, tol: float = 1e-12) -> tuple[bool, dict]:
    """Is the joint law of ``(F(X), F(X^t))`` symmetric?  Exact, for ``N <= 12``."""
    F = q_table(f.with_dim(law.dim) if f.dim < law.dim else f, law)
    P = joint_atom_law(t, law)
    labels = _value_classes(F.values, 1e-9)
    m = int(labels.max()) + 1
    A = np.zeros((len(labels), m))
    A[np.arange(len(labels)), labels] = 1.0
    M = A.T @ P @ A
    asym = float(np.max(np.abs(M - M.T)))
    report = {
        "value_classes": m,
        "pair_law_asymmetry": asym,
        "atom_law_asymmetry": float(np.max(np.abs(P - P.T))),
        "total_mass": float(M.sum()),
    }
    return asym <= tol and abs(report["total_mass"] - 1.0) <= 1e-12, report


@dataclass(frozen=True)
class RegressionRow:
    check: str
    t: float
    value: float
    limit: float
    deviation: float


def regression_check(f: Kernel, law: RademacherLaw, ts=(1e-2, 1e-3, 1e-4)) -> dict:
    """Exact small-``t`` behaviour of the pair ``(F, F_t)``.

    (a) ``|| (E[F_t - F | X]) / t + p F ||``,
    (b) ``|| E[(F_t - F)^2 | X] / t - 2 Gamma(F, F) ||`` (both in L2),
    (c) ``E[(F_t - F)^4] / t`` through
        ``4 E[F^3 E[F_t - F|X]] + 6 E[F^2 E[(F_t - F)^2|X]]``, compared with ``rho``.

    Returns the rows, per-decade shrink ratios of (a) and (b), and the
    Richardson extrapolate of (c) from the two smallest ``t``.
    """
    if f.dim > law.dim:
        raise InputError("kernel dim exceeds law dim")
    f = f.with_dim(law.dim) if f.dim < law.dim else f
    p = f.order
    F = q_table(f, law)
    F2 = F * F
    gamma = carre_du_champ(f, f, law).to_function(law)
    limit_c = rho(f, law)
    ts = sorted((float(t) for t in ts), reverse=True)

    rows: list[RegressionRow] = []
    dev = {"a": [], "b": []}
    vals_c = []
    for t in ts:
        d1 = mehler_increment(F, t, law)
        d2 = mehler_increment(F2, t, law) - 2.0 * F * d1
        ra = d1 * (1.0 / t) + p * F
        rb = d2 * (1.0 / t) - 2.0 * gamma
        da = math.sqrt(expect_exact(ra * ra, law))
        db = math.sqrt(expect_exact(rb * rb, law))
        vc = (4.0 * expect_exact(F2 * F * d1, law) + 6.0 * expect_exact(F2 * d2, law)) / t
        dev["a"].append(da)
        dev["b"].append(db)
        vals_c.append(vc)
        rows.append(RegressionRow("a", t, da, 0.0, da))
        rows.append(RegressionRow("b", t, db, 0.0, db))
        rows.append(RegressionRow("c", t, vc, limit_c, abs(vc - limit_c)))

    ratios = {key: [d[i] / d[i + 1] if d[i + 1] > 0 else math.inf for i in range(len(d) - 1)]
              for key, d in dev.items()}
    richardson = None
    if len(ts) >= 2:
        t0, t1 = ts[-2], ts[-1]
        r = t0 / t1
        richardson = (r * vals_c[-1] - vals_c[-2]) / (r - 1.0)
    return {"rows": rows, "ratios": ratios, "rho": limit_c, "richardson": richardson}
