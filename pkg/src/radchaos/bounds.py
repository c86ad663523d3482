"""Normal-approximation bounds for Rademacher chaos and the inequalities behind them.

All exact quantities come from chaos expansions of products (``F^2``,
``F G``), which are available at any dimension for symmetric laws and by
enumeration for biased laws within the cap.  Distances to the Gaussian are
exact when the law of ``F`` can be enumerated and Monte Carlo otherwise.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .chaos import (ChaosDecomposition, RademacherLaw, chaos_product, decomposition_inner,
                    expect_exact, first_chaos_law, get_exact_cap, law_of_Q, q_table)
from .coupling import carre_du_champ, gamma_variance, moments_from_square, rho
from .distance import w1_bootstrap, w1_discrete
from .errors import InputError
from .kernel import (Kernel, contract, contraction_norm_sq, inner, leak_norm_sq, max_influence,
                     norm_sq, restrict, sym_product_norm_sq, symmetrize, table_inner)
from .sampling import SamplerSpec, block_rng, moment_with_se, sample_Q

NORMALIZATION_TOL = 1e-10


def gamma_p(p: int) -> float:
    """``(2p)!/p! * sum_{r=1}^p r! C(p, r)^2``."""
    if p < 1:
        raise InputError(f"gamma_p needs p >= 1, got {p}")
    s = sum(math.factorial(r) * math.comb(p, r) ** 2 for r in range(1, p + 1))
    return float(math.factorial(2 * p) // math.factorial(p) * s)


@dataclass(frozen=True)
class Constant:
    name: str
    expression: str
    value: float

    def __str__(self) -> str:
        return f"{self.name} = {self.expression} = {self.value:.12g}"


def constants_for(p: int) -> dict[str, Constant]:
    g = gamma_p(p)
    c1 = math.sqrt(2 / math.pi) + 4 / 3
    c2 = (math.sqrt(2 / math.pi) + 2 * math.sqrt(6) / 3) * math.sqrt(g)
    return {
        "gamma_p": Constant("gamma_p", f"(2p)!/p! * sum_r r! C(p,r)^2 at p={p}", g),
        "C1": Constant("C1", "sqrt(2/pi) + 4/3", c1),
        "C2": Constant("C2", "(sqrt(2/pi) + 2*sqrt(6)/3) * sqrt(gamma_p)", c2),
    }


@dataclass
class BoundReport:
    """Diagnostics of one bound evaluation.  ``lhs`` may be ``None`` when not computed."""

    second_moment: Any
    fourth_moment: Any
    fourth_cumulant: Any
    influence: Any
    contraction_norms: dict
    lhs: float | None
    rhs: float
    constants: dict[str, Constant] = field(default_factory=dict)
    modes: dict[str, str] = field(default_factory=dict)
    extra: dict[str, Any] = field(default_factory=dict)

    @property
    def holds(self) -> bool | None:
        if self.lhs is None:
            return None
        se = self.extra.get("lhs_se")
        slack = 3.0 * se if se else 1e-10
        return self.lhs <= self.rhs + slack

    def summary(self) -> str:
        lines = [
            f"E[F^2]        {_fmt(self.second_moment)}  [{self.modes.get('moments', 'exact')}]",
            f"E[F^4]        {_fmt(self.fourth_moment)}",
            f"kappa_4       {_fmt(self.fourth_cumulant)}",
            f"M(f)          {_fmt(self.influence)}",
        ]
        for r, v in sorted(self.contraction_norms.items()):
            lines.append(f"||f (x)_{r} f||^2  {v:.12g}")
        for c in self.constants.values():
            lines.append(str(c))
        lhs = "not computed" if self.lhs is None else f"{self.lhs:.12g} [{self.modes.get('lhs', 'exact')}]"
        lines.append(f"lhs           {lhs}")
        lines.append(f"rhs           {self.rhs:.12g}")
        if self.holds is not None:
            lines.append(f"lhs <= rhs    {self.holds}")
        for note in self.extra.get("notes", []):
            lines.append(f"note: {note}")
        return "\n".join(lines)


def _fmt(x) -> str:
    if isinstance(x, (list, tuple, np.ndarray)):
        return "[" + ", ".join(f"{float(v):.12g}" for v in x) + "]"
    return f"{float(x):.12g}"


def _fit(f: Kernel, law: RademacherLaw) -> Kernel:
    if f.dim > law.dim:
        raise InputError(f"kernel dim {f.dim} exceeds law dim {law.dim}")
    return f.with_dim(law.dim) if f.dim < law.dim else f


def _check_normalized(f: Kernel) -> None:
    v = math.factorial(f.order) * norm_sq(f)
    if abs(v - 1.0) > NORMALIZATION_TOL:
        raise InputError(f"kernel must satisfy p! ||f||^2 = 1 (got {v:.15g})")


def _exact_ok(law: RademacherLaw) -> bool:
    return law.dim <= get_exact_cap()


# --------------------------------------------------------------------------
# Wasserstein distance
# --------------------------------------------------------------------------

def wasserstein_exact(f: Kernel, law: RademacherLaw) -> float:
    """Exact ``W1(Q_p(f; Y), N(0, 1))`` by enumerating the law of ``Q_p(f)``."""
    atoms, weights = law_of_Q(_fit(f, law), law)
    return w1_discrete(atoms, weights)


def wasserstein_mc(f: Kernel, law: RademacherLaw, samples: int, seed: int = 0,
                   reps: int = 30) -> tuple[float, float]:
    """Empirical ``W1`` from ``samples`` draws and its bootstrap standard error."""
    x = sample_Q(f, SamplerSpec.rademacher(law, seed), samples)
    return w1_bootstrap(x, block_rng(seed, 1 << 40), reps=reps)


# --------------------------------------------------------------------------
# Univariate fourth-moment-influence bound
# --------------------------------------------------------------------------

def _self_contractions(f: Kernel) -> dict[int, float]:
    if f.dim ** (2 * f.order - 2) > 50_000_000:
        return {}
    return {r: contraction_norm_sq(f, f, r) for r in range(1, f.order)}


def dw_bound_univariate(f: Kernel, law: RademacherLaw, mc_samples: int | None = None,
                        seed: int = 0) -> BoundReport:
    """``d_W(F, Z) <= C1 sqrt|E F^4 - 3| + C2 sqrt M(f)`` for normalised ``F = Q_p(f)``."""
    f = _fit(f, law)
    _check_normalized(f)
    p = f.order
    consts = constants_for(p)
    modes: dict[str, str] = {}
    extra: dict[str, Any] = {"notes": []}
    m_inf = max_influence(f)

    if _exact_ok(law) or law.is_symmetric:
        mom = moments_from_square(f, law)
        m2, m4 = mom["m2"], mom["m4"]
        modes["moments"] = "exact"
        extra["rho"] = rho(f, law)
        extra["var_gamma"] = gamma_variance(f, f, law)[0]
    else:
        n = mc_samples or 200_000
        x = sample_Q(f, SamplerSpec.rademacher(law, seed), n)
        m2, se2 = moment_with_se(x, 2)
        m4, se4 = moment_with_se(x, 4)
        modes["moments"] = f"mc(se={se4:.3g})"
        extra["fourth_moment_se"] = se4

    kappa = m4 - 3.0 * m2 ** 2
    rhs = consts["C1"].value * math.sqrt(abs(kappa)) + consts["C2"].value * math.sqrt(m_inf)

    lhs = None
    if _exact_ok(law):
        lhs = wasserstein_exact(f, law)
        modes["lhs"] = "exact"
        extra["pair_bound"] = exchangeable_pair_bound(f, law)
    elif mc_samples:
        lhs, se = wasserstein_mc(f, law, mc_samples, seed)
        modes["lhs"] = f"mc(se={se:.3g})"
        extra["lhs_se"] = se
    return BoundReport(m2, m4, kappa, m_inf, _self_contractions(f), lhs, rhs, consts, modes, extra)


def exchangeable_pair_bound(f: Kernel, law: RademacherLaw) -> float:
    """Intermediate univariate bound ``E|2 Gamma - 2p| / (p sqrt(2 pi)) + sqrt(2p)/(3p) sqrt(rho)``.

    Exact (enumerates ``Gamma(F, F)``); always at most the final C1/C2 bound.
    """
    f = _fit(f, law)
    p = f.order
    G = carre_du_champ(f, f, law).to_function(law)
    e_abs = expect_exact((2.0 * G - 2.0 * p).apply(np.abs), law)
    r = max(rho(f, law), 0.0)
    return e_abs / (p * math.sqrt(2 * math.pi)) + math.sqrt(2 * p) / (3 * p) * math.sqrt(r)


# --------------------------------------------------------------------------
# First chaos
# --------------------------------------------------------------------------

def first_chaos_exact(h: Kernel, law: RademacherLaw, cross_check: bool = True) -> BoundReport:
    """Closed forms for ``F = Q_1(h)`` with ``||h|| = 1``.

    ``E[F^4] = 3 + sum h^4 (q - p)^2 / (pq) - 2 sum h^4``, the Wasserstein and
    Kolmogorov bounds ``sqrt(sum h^4/(pq))`` and twice that, and for a
    homogeneous law the exact-fourth-moment version.  When ``cross_check`` is
    set the formula is compared with the exact law (enumeration or
    convolution).
    """
    if h.order != 1:
        raise InputError("first_chaos_exact needs an order-1 kernel")
    h = _fit(h, law)
    if abs(norm_sq(h) - 1.0) > NORMALIZATION_TOL:
        raise InputError(f"first-chaos kernel must have unit norm (got {norm_sq(h):.15g})")
    idx = h.keys[:, 0]
    h4 = h.values ** 4
    p, q = law.probs[idx], law.q[idx]
    s4 = float(h4.sum())
    s_pq = float((h4 / (p * q)).sum())
    m4 = 3.0 + float((h4 * (q - p) ** 2 / (p * q)).sum()) - 2.0 * s4
    kappa = m4 - 3.0
    dw = math.sqrt(s_pq)
    m_inf = max_influence(h)
    extra: dict[str, Any] = {
        "dw_bound": dw,
        "dkol_bound": 2.0 * dw,
        "dw_moment_influence": math.sqrt(2) * math.sqrt(abs(kappa)) + 2 * math.sqrt(2) * math.sqrt(m_inf),
        "dkol_moment_influence": 2 * math.sqrt(2) * math.sqrt(abs(kappa)) + 4 * math.sqrt(2) * math.sqrt(m_inf),
        "sum_h4": s4,
        "notes": [],
    }
    if np.all(law.probs == law.probs[0]):
        pp = float(law.probs[0])
        qq = 1.0 - pp
        denom = pp * pp + qq * qq - 4 * pp * qq
        extra["homogeneous_kappa4"] = denom / (pp * qq) * s4
        if abs(denom) < 1e-9:
            extra["exact_fourth_moment_bound"] = None
            extra["notes"].append("exact-fourth-moment bound inapplicable: p^2 + q^2 - 4pq vanishes")
        else:
            extra["exact_fourth_moment_bound"] = math.sqrt(max(kappa / denom, 0.0))
    lhs = None
    modes = {"moments": "exact"}
    if cross_check:
        try:
            atoms, weights = first_chaos_law(h, law)
        except Exception:
            atoms = None
        if atoms is not None:
            extra["enumerated_fourth_moment"] = float(weights @ atoms ** 4)
            extra["formula_deviation"] = abs(extra["enumerated_fourth_moment"] - m4)
            lhs = w1_discrete(atoms, weights)
            modes["lhs"] = "exact"
    return BoundReport(1.0, m4, kappa, m_inf, {}, lhs, dw, {}, modes, extra)


# --------------------------------------------------------------------------
# Product-variance inequalities
# --------------------------------------------------------------------------

def _var_sum(d: ChaosDecomposition, top: int) -> float:
    """``sum_{k=1}^{top-1} Var J_k``."""
    return float(sum(v for k, v in d.component_norms().items() if 1 <= k < top))


def _leak_bound(f: Kernel, g: Kernel) -> float:
    p, q = f.order, g.order
    m = min(norm_sq(f) * max_influence(g), norm_sq(g) * max_influence(f))
    return sum(math.factorial(r) * math.comb(p, r) * math.comb(q, r) for r in range(1, min(p, q) + 1)) * m


@dataclass(frozen=True)
class Inequality:
    name: str
    lhs: float
    rhs: float

    @property
    def slack(self) -> float:
        return self.rhs - self.lhs

    def holds(self, tol: float = 1e-10) -> bool:
        return self.slack >= -tol


@dataclass(frozen=True)
class Identity:
    name: str
    left: float
    right: float

    @property
    def deviation(self) -> float:
        return abs(self.left - self.right)

    def holds(self, tol: float = 1e-10) -> bool:
        return self.deviation <= tol


def product_variance_checks(f: Kernel, g: Kernel, law: RademacherLaw) -> dict[str, Any]:
    """Both sides of the three estimates for ``F = Q_p(f)``, ``G = Q_q(g)``, plus the
    squared-norm expansion and the identity that implies the second estimate."""
    f, g = _fit(f, law), _fit(g, law)
    p, q = f.order, g.order
    fg = chaos_product(f, g, law)
    ff = chaos_product(f, f, law)
    gg = chaos_product(g, g, law)
    e_fg = fg.constant
    var_f, var_g = ff.constant, gg.constant
    e_f2g2 = fg.second_moment()
    e_f4 = ff.second_moment()
    leak_fg = leak_norm_sq(f, g)
    leak_ff = leak_norm_sq(f, f)

    lem1 = Inequality("mixed product variance", _var_sum(fg, p + q),
                      e_f2g2 - 2 * e_fg ** 2 - var_f * var_g + math.factorial(p + q) * leak_fg)
    contr = p_fact_sq_sum(f)
    rhs2 = e_f4 - 3 * var_f ** 2 + math.factorial(2 * p) * leak_ff
    var_ff = _var_sum(ff, 2 * p)
    lem2 = Inequality("square variance and contractions", max(var_ff, contr), rhs2)
    lem3 = Inequality("off-diagonal leak", leak_fg, _leak_bound(f, g))
    uni = Identity("square variance expansion", var_ff, e_f4 - 3 * var_f ** 2 - contr + math.factorial(2 * p) * leak_ff)
    nr14 = Identity("symmetrized product norm expansion", math.factorial(p + q) * sym_product_norm_sq(f, g),
                    math.factorial(p) * math.factorial(q) * sum(
                        math.comb(p, r) * math.comb(q, r) * contraction_norm_sq(f, g, r)
                        for r in range(min(p, q) + 1)))
    return {"inequalities": [lem1, lem2, lem3], "identities": [uni, nr14],
            "parts": {"square variance side": var_ff, "square contraction side": contr}}


def p_fact_sq_sum(f: Kernel) -> float:
    """``p!^2 sum_{r=1}^{p-1} C(p, r)^2 ||f (x)_r f||^2``."""
    p = f.order
    return math.factorial(p) ** 2 * sum(math.comb(p, r) ** 2 * contraction_norm_sq(f, f, r)
                                        for r in range(1, p))


def contraction_swap_identities(f: Kernel, g: Kernel) -> list[Identity]:
    """``||f (x)_r g||^2 = <f (x)_{q-r} f, g (x)_{q-r} g>`` for equal orders."""
    q = f.order
    if g.order != q:
        raise InputError("contraction swap needs equal orders")
    out = []
    for r in range(1, q):
        out.append(Identity(f"contraction swap r={r}", contraction_norm_sq(f, g, r),
                            table_inner(contract(f, f, q - r), contract(g, g, q - r))))
    return out


def gamma_variance_bounds(f: Kernel, law: RademacherLaw) -> dict[str, Any]:
    """Variance bound on ``Gamma(F,F)/p`` and the companion bound on ``3 E[F^2 Gamma] - p E F^4``."""
    f = _fit(f, law)
    _check_normalized(f)
    p = f.order
    g = gamma_p(p)
    mom = moments_from_square(f, law)
    m2, m4, f2g = mom["m2"], mom["m4"], mom["f2gamma"]
    m_inf = max_influence(f)
    var_gamma = gamma_variance(f, f, law)
    var_sum = _var_sum(chaos_product(f, f, law), 2 * p)
    square_var_rhs = m4 - 3 * m2 ** 2 + g * m2 * m_inf
    r = rho(f, law)
    return {
        "inequalities": [
            Inequality("Var Gamma / p^2 <= sum Var J_k(F^2)", var_gamma[0] / p ** 2, var_sum),
            Inequality("sum Var J_k(F^2) <= cumulant + influence", var_sum, square_var_rhs),
            Inequality("Var Gamma <= order^2 sum Var J_k", var_gamma[0], var_gamma[1]),
            Inequality("3 E[F^2 Gamma] - p E F^4 bound", 3 * f2g - p * m4, 2 * p * (m4 - 3) + 3 * p * g * m_inf),
            Inequality("rho >= 0", 0.0, r),
        ],
        "rho": r,
        "gamma_p": g,
        "influence": m_inf,
    }


# --------------------------------------------------------------------------
# Multivariate diagnostics
# --------------------------------------------------------------------------

@dataclass
class MultivariateInput:
    """Chaotic vector ``(Q_{q_1}(f_1), ..., Q_{q_d}(f_d))`` and the target Gaussian."""

    kernels: list[Kernel]
    law: RademacherLaw
    target_cov: np.ndarray | None = None
    m2: float = 1.0
    m3: float = 1.0

    def __post_init__(self):
        if not self.kernels:
            raise InputError("need at least one component")
        orders = [f.order for f in self.kernels]
        if orders != sorted(orders):
            raise InputError(f"component orders must be nondecreasing, got {orders}")
        self.kernels = [_fit(f, self.law) for f in self.kernels]
        if self.target_cov is not None:
            S = np.asarray(self.target_cov, dtype=float)
            d = len(self.kernels)
            if S.shape != (d, d):
                raise InputError(f"target covariance must be {d}x{d}")
            if np.max(np.abs(S - S.T)) > 1e-12:
                raise InputError("target covariance must be symmetric")
            if np.min(np.linalg.eigvalsh(S)) < -1e-12:
                raise InputError("target covariance must be nonnegative definite")
            self.target_cov = S

    @property
    def d(self) -> int:
        return len(self.kernels)

    @property
    def orders(self) -> list[int]:
        return [f.order for f in self.kernels]


def covariance_matrix(inp: MultivariateInput, mode: str = "formula") -> np.ndarray:
    """``E[F_i F_j]`` by orthogonality (``formula``) or by enumeration (``enumeration``)."""
    d = inp.d
    C = np.zeros((d, d))
    if mode == "formula":
        for i, fi in enumerate(inp.kernels):
            for j, fj in enumerate(inp.kernels):
                if fi.order == fj.order:
                    C[i, j] = math.factorial(fi.order) * inner(fi, fj)
    elif mode == "enumeration":
        tables = [q_table(f, inp.law) for f in inp.kernels]
        for i in range(d):
            for j in range(d):
                C[i, j] = expect_exact(tables[i] * tables[j], inp.law)
    else:
        raise InputError(f"unknown covariance mode {mode!r}")
    return C


def multivariate_bound(inp: MultivariateInput, exact_s: bool | None = None) -> BoundReport:
    """Exchangeable-pair right side for ``|E g(F) - E g(Z)|`` with ``Lambda = diag(q_i)``.

    ``E ||S||_HS`` is exact when the hypercube can be enumerated; otherwise it
    is replaced by the upper estimate ``sqrt(sum_ij E S_ij^2)`` (Jensen), which
    keeps the right side a valid bound.
    """
    law, d = inp.law, inp.d
    qs = np.array(inp.orders, dtype=float)
    Sigma_n = covariance_matrix(inp)
    Sigma = Sigma_n if inp.target_cov is None else inp.target_cov
    if exact_s is None:
        exact_s = law.dim <= min(get_exact_cap(), 16)

    gammas = {}
    var_g = np.zeros((d, d))
    e_gamma = np.zeros((d, d))
    for i in range(d):
        for j in range(i, d):
            dec = carre_du_champ(inp.kernels[i], inp.kernels[j], law)
            gammas[i, j] = dec
            var_g[i, j] = var_g[j, i] = dec.variance()
            e_gamma[i, j] = e_gamma[j, i] = dec.constant

    # E S_ij = 2 E Gamma_ij - 2 q_j Sigma_ij
    e_s = 2 * e_gamma - 2 * Sigma * qs[None, :]
    if exact_s:
        tables = {key: dec.to_function(law) for key, dec in gammas.items()}
        acc = None
        for i in range(d):
            for j in range(d):
                G = tables[min(i, j), max(i, j)]
                s = (2.0 * G - 2.0 * qs[j] * Sigma[i, j]) ** 2
                acc = s if acc is None else acc + s
        e_s_hs = expect_exact(acc.apply(np.sqrt), law)
        s_mode = "exact"
    else:
        e_s_hs = math.sqrt(float(np.sum(4 * var_g + e_s ** 2)))
        s_mode = "jensen-upper"

    sq = [chaos_product(f, f, law) for f in inp.kernels]
    m2s = np.array([x.constant for x in sq])
    m4s = np.array([x.second_moment() for x in sq])
    rhos = np.array([rho(f, law) for f in inp.kernels])
    lam_inv = 1.0 / qs.min()
    term1 = lam_inv * math.sqrt(d) * inp.m2 / 4.0 * e_s_hs
    inner_sum = float(np.sum(2 * qs * np.diag(Sigma) + np.diag(e_s)))
    term2 = math.sqrt(d) * inp.m3 * lam_inv / 18.0 * math.sqrt(max(inner_sum, 0.0)) * math.sqrt(max(rhos.sum(), 0.0))

    cov_sq = np.zeros((d, d))
    for i in range(d):
        for j in range(d):
            cov_sq[i, j] = decomposition_inner(sq[i], sq[j]) - m2s[i] * m2s[j] - 2 * Sigma_n[i, j] ** 2

    extra = {
        "Sigma_n": Sigma_n,
        "Sigma": Sigma,
        "rho": rhos,
        "E_S": e_s,
        "E_S_hs": e_s_hs,
        "var_gamma": var_g,
        "cov_sq_minus_2cov2": cov_sq,
        "term1": term1,
        "term2": term2,
        "notes": ["right side of the exchangeable-pair bound, used as a quantitative surrogate"],
    }
    return BoundReport(list(m2s), list(m4s), list(m4s - 3 * m2s ** 2),
                       [max_influence(f) for f in inp.kernels], {}, None, term1 + term2,
                       {}, {"moments": "exact", "E_S_hs": s_mode}, extra)


def square_covariance_terms(f: Kernel, g: Kernel, law: RademacherLaw) -> dict[str, Any]:
    """Decomposition of ``Cov(F^2, G^2) - 2 E[FG]^2`` and the bounds on each piece.

    For equal orders this is the three-term split (cross projections, mixed
    contractions, off-diagonal correction).  For different orders only the
    covariance bound applies.  Both cases also report the Gamma chain
    ``Var Gamma(F,G) / q^2 <= sum Var J_k(FG) <= ...``.
    """
    f, g = _fit(f, law), _fit(g, law)
    if f.order > g.order:
        f, g = g, f
    p, q = f.order, g.order
    ff, gg, fg = chaos_product(f, f, law), chaos_product(g, g, law), chaos_product(f, g, law)
    m2f, m2g = ff.constant, gg.constant
    m4f, m4g = ff.second_moment(), gg.second_moment()
    e_fg = fg.constant
    cov = decomposition_inner(ff, gg) - m2f * m2g
    target = cov - 2 * e_fg ** 2
    gq = gamma_p(q)
    uf = m4f - 3 * m2f ** 2 + gq * m2f * max_influence(f)
    ug = m4g - 3 * m2g ** 2 + gq * m2g * max_influence(g)

    var_gamma, _ = gamma_variance(f, g, law)
    gamma_chain = [
        Inequality("Var Gamma(F,G) / q^2 <= sum Var J_k(FG)", var_gamma / q ** 2, _var_sum(fg, p + q)),
        Inequality("sum Var J_k(FG) <= covariance + leak", _var_sum(fg, p + q),
                   target + math.factorial(2 * q) * _leak_bound(f, g)),
    ]
    out: dict[str, Any] = {"target": target, "cov": cov, "gamma_chain": gamma_chain}

    if p < q:
        var_sum_g = _var_sum(gg, 2 * q)
        out["inequalities"] = [
            Inequality("p<q |Cov| <= sqrt(E F^4) sqrt(sum Var J_k(G^2))", abs(cov), math.sqrt(m4f) * math.sqrt(var_sum_g)),
            Inequality("p<q |Cov| bound (gamma_q)", abs(cov), math.sqrt(m4f) * math.sqrt(max(ug, 0.0))),
        ]
        gp = gamma_p(p)
        with_gp = math.sqrt(m4f) * math.sqrt(max(m4g - 3 * m2g ** 2 + gp * m2g * max_influence(g), 0.0))
        out["gamma_p_bound"] = Inequality("p<q |Cov| bound (gamma_p)", abs(cov), with_gp)
        out["identities"] = [Identity("E[FG] = 0", e_fg, 0.0)]
        return out

    t1 = sum(math.factorial(k) * inner(ff.kernels[k], gg.kernels[k])
             for k in set(ff.orders) & set(gg.orders) if 1 <= k <= 2 * q - 1)
    coef = [math.factorial(q) ** 2 * math.comb(q, r) ** 2 for r in range(q + 1)]
    t2 = sum(coef[r] * table_inner(contract(f, g, r), contract(g, f, r)) for r in range(1, q))
    sff = symmetrize(contract(f, f, 0))
    sgg_c = restrict(symmetrize(contract(g, g, 0)), offdiag=False)
    t3 = -math.factorial(2 * q) * table_inner(sff, sgg_c)

    mixed = sum(coef[r] * contraction_norm_sq(f, g, r) for r in range(1, q))
    cs1 = math.sqrt(p_fact_sq_sum(f)) * math.sqrt(p_fact_sq_sum(g))
    hi = math.sqrt(max(uf, 0.0)) * math.sqrt(max(ug, 0.0))
    b3 = norm_sq(f) * math.sqrt(math.factorial(2 * q) * gq * m2g * max_influence(g))
    out.update({
        "terms": (t1, t2, t3),
        "inequalities": [
            Inequality("T1 cross projections", abs(t1), hi),
            Inequality("T2 <= sum ||f (x)_r g||^2", abs(t2), mixed),
            Inequality("mixed contractions Cauchy-Schwarz", mixed, cs1),
            Inequality("contractions <= cumulant + influence", cs1, hi),
            Inequality("T3 off-diagonal correction", abs(t3), b3),
            Inequality("combined", abs(target), 2 * hi + b3),
        ],
        "identities": [Identity("three-term split", t1 + t2 + t3, target)] + contraction_swap_identities(f, g),
    })
    return out


def report_row(report: BoundReport) -> dict[str, Any]:
    """Flat dictionary for CSV output."""
    row = {
        "second_moment": report.second_moment,
        "fourth_moment": report.fourth_moment,
        "fourth_cumulant": report.fourth_cumulant,
        "influence": report.influence,
        "lhs": report.lhs,
        "lhs_mode": report.modes.get("lhs", ""),
        "rhs": report.rhs,
        "moments_mode": report.modes.get("moments", ""),
    }
    for name, c in report.constants.items():
        row[name] = c.value
    return row

