"""Batch experiments and invariant suites.

Every experiment returns a list of flat row dictionaries.  Each row names one
statistic and carries its provenance in the ``mode`` column: ``exact`` or
``mc(se=...)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np
from scipy.special import roots_hermite

from .bounds import (MultivariateInput, covariance_matrix, dw_bound_univariate, first_chaos_exact,
                     product_variance_checks, multivariate_bound, square_covariance_terms, gamma_variance_bounds)
from .chaos import (RademacherLaw, discrete_gradient, eval_Q, expect_exact, multiply_symmetric,
                    product_decomposition, product_top_kernel_check, q_table, sign_matrix,
                    walsh_decompose)
from .coupling import (apply_Pt, carre_du_champ, exchangeability_check, gamma_from_generator,
                       gamma_variance, mehler_check, regression_check)
from .distance import w1_bootstrap
from .errors import InputError
from .kernel import (Kernel, contract, contraction_norm_sq, counterexample_kernel, leak_norm_sq,
                     max_influence, normalized, norm_sq, parse_kernel, random_kernel, symmetrize,
                     table_inner, table_norm_sq, write_kernel, inner)
from .sampling import SamplerSpec, block_rng, moment_with_se, sample_Q, sample_many


def mc_mode(se: float) -> str:
    return f"mc(se={se:.6g})"


def _row(stat: str, value, mode: str = "exact", **keys) -> dict:
    return {**keys, "statistic": stat, "value": value, "mode": mode}


# --------------------------------------------------------------------------
# Counterexample
# --------------------------------------------------------------------------

def run_counterexample(q: int = 2, Ns: Iterable[int] = (10, 100, 1000, 5000), samples: int = 100_000,
                       seed: int = 0, threads: int = 1, w1_reps: int = 20) -> list[dict]:
    """Influence, moments and ``W1`` of ``Q_q(f_N)`` under Rademacher and Gaussian inputs."""
    if q < 2:
        raise InputError("counterexample needs q >= 2")
    rows = []
    for i, N in enumerate(Ns):
        f = counterexample_kernel(q, N)
        rows.append(_row("influence", max_influence(f), N=N, input="-"))
        rows.append(_row("influence_formula", 1.0 / (q * math.factorial(q)), N=N, input="-"))
        for j, (label, spec) in enumerate((
                ("rademacher", SamplerSpec.rademacher(RademacherLaw.symmetric(N), seed)),
                ("gaussian", SamplerSpec.gaussian(seed)))):
            sub_seed = int(np.random.SeedSequence([seed, i, j]).generate_state(1, np.uint64)[0])
            x = sample_Q(f, spec.with_seed(sub_seed), samples, threads)
            for m in (2, 4):
                v, se = moment_with_se(x, m)
                rows.append(_row(f"moment{m}", v, mc_mode(se), N=N, input=label))
            w, se = w1_bootstrap(x, block_rng(sub_seed, 1 << 40), reps=w1_reps)
            rows.append(_row("w1", w, mc_mode(se), N=N, input=label))
    return rows


# --------------------------------------------------------------------------
# de Jong sweep
# --------------------------------------------------------------------------

def full_support_kernel(order: int, N: int) -> Kernel:
    """All increasing keys share one value, normalised to ``p! ||f||^2 = 1``."""
    from .kernel import increasing_tuples
    keys = increasing_tuples(N, order)
    return normalized(Kernel.from_arrays(order, N, keys, np.ones(len(keys))))


def graph_kernel(N: int, rng: np.random.Generator) -> Kernel:
    """Order-2 kernel on a cycle plus a random matching, random signs, normalised."""
    if N < 3:
        raise InputError("graph kernel needs N >= 3")
    edges = {(k, (k + 1) % N) for k in range(N)}
    perm = rng.permutation(N)
    edges |= {(int(perm[2 * k]), int(perm[2 * k + 1])) for k in range(N // 2)}
    keys = sorted({tuple(sorted(e)) for e in edges if e[0] != e[1]})
    signs = rng.choice([-1.0, 1.0], size=len(keys))
    return normalized(Kernel.from_arrays(2, N, np.array(keys), signs))


def dejong_specs(seed: int) -> list[tuple[str, Callable[[int], SamplerSpec]]]:
    return [
        ("rademacher", lambda N: SamplerSpec.rademacher(RademacherLaw.symmetric(N), seed)),
        ("gaussian", lambda N: SamplerSpec.gaussian(seed)),
        ("uniform-grid", lambda N: SamplerSpec.uniform_grid(64, seed)),
    ]


def run_dejong(order: int = 2, Ns: Iterable[int] = (10, 40, 160), samples: int = 100_000,
               seed: int = 0, generator: str = "full", threads: int = 1, w1_reps: int = 20) -> list[dict]:
    """Fourth cumulant, influence and ``W1`` along a sweep of influence-vanishing kernels."""
    rows = []
    for i, N in enumerate(Ns):
        if generator == "full":
            f = full_support_kernel(order, N)
        elif generator == "graph":
            if order != 2:
                raise InputError("the graph generator produces order-2 kernels")
            f = graph_kernel(N, block_rng(seed, i))
        else:
            raise InputError(f"unknown generator {generator!r}")
        rows.append(_row("influence", max_influence(f), N=N, input="-"))
        for j, (label, make) in enumerate(dejong_specs(seed)):
            sub_seed = int(np.random.SeedSequence([seed, i, j]).generate_state(1, np.uint64)[0])
            x = sample_Q(f, make(N).with_seed(sub_seed), samples, threads)
            m2, _ = moment_with_se(x, 2)
            y = x ** 4 - 3.0 * x ** 2 * m2
            rows.append(_row("kappa4", float(y.mean()), mc_mode(float(y.std(ddof=1) / math.sqrt(len(y)))),
                             N=N, input=label))
            w, se = w1_bootstrap(x, block_rng(sub_seed, 1 << 40), reps=w1_reps)
            rows.append(_row("w1", w, mc_mode(se), N=N, input=label))
    return rows


# --------------------------------------------------------------------------
# Multivariate sweep
# --------------------------------------------------------------------------

def gaussian_expectation(g: Callable[[np.ndarray], np.ndarray], cov: np.ndarray, nodes: int = 32) -> float:
    """``E g(Z)`` for ``Z ~ N(0, cov)`` by tensor Gauss-Hermite quadrature (``d <= 3``)."""
    cov = np.asarray(cov, dtype=float)
    d = cov.shape[0]
    if d > 3:
        raise InputError("tensor quadrature limited to d <= 3")
    x, w = roots_hermite(nodes)
    x, w = x * math.sqrt(2.0), w / math.sqrt(math.pi)
    vals, vecs = np.linalg.eigh(cov)
    root = vecs * np.sqrt(np.clip(vals, 0.0, None))
    grids = np.meshgrid(*([x] * d), indexing="ij")
    pts = np.stack([gr.reshape(-1) for gr in grids])
    wts = np.ones(pts.shape[1])
    for gr in np.meshgrid(*([w] * d), indexing="ij"):
        wts = wts * gr.reshape(-1)
    return float(wts @ g(root @ pts))


def cos_product(x: np.ndarray) -> np.ndarray:
    """Built-in smooth test function ``prod_j cos(x_j)`` (rows are coordinates)."""
    return np.prod(np.cos(x), axis=0)


def multivariate_components(n: int, kind: str, seed: int) -> list[Kernel]:
    h = Kernel.from_arrays(1, n, np.arange(n).reshape(-1, 1), np.full(n, 1.0 / math.sqrt(n)))
    if kind == "sweep":
        return [h, graph_kernel(n, block_rng(seed, n))]
    if kind == "counterexample":
        return [h, counterexample_kernel(2, n)]
    raise InputError(f"unknown component set {kind!r}")


def run_multivariate(ns: Iterable[int] = (16, 64, 256, 1024), samples: int = 200_000, seed: int = 0,
                     components: str = "sweep", threads: int = 1) -> list[dict]:
    """Per ``n``: covariance, cumulants, influences, Gamma variances, the exchangeable-pair
    right side and the Monte Carlo discrepancy ``|E g(F) - E g(Z)|``."""
    rows = []
    for i, n in enumerate(ns):
        law = RademacherLaw.symmetric(n)
        kernels = multivariate_components(n, components, seed)
        inp = MultivariateInput(kernels, law, target_cov=np.eye(len(kernels)))
        rep = multivariate_bound(inp, exact_s=False)
        d = inp.d
        for a in range(d):
            for b in range(d):
                rows.append(_row(f"sigma_{a + 1}{b + 1}", rep.extra["Sigma_n"][a, b], n=n))
        for a in range(d):
            rows.append(_row(f"kappa4_{a + 1}", rep.fourth_cumulant[a], n=n))
            rows.append(_row(f"influence_{a + 1}", rep.influence[a], n=n))
            rows.append(_row(f"rho_{a + 1}", rep.extra["rho"][a], n=n))
        for a in range(d):
            for b in range(a, d):
                rows.append(_row(f"var_gamma_{a + 1}{b + 1}", rep.extra["var_gamma"][a, b], n=n))
        rows.append(_row("exchangeable_pair_rhs", rep.rhs, n=n))
        fc = first_chaos_exact(kernels[0], law)
        rows.append(_row("first_chaos_formula_deviation", fc.extra.get("formula_deviation", math.nan), n=n))

        target = gaussian_expectation(cos_product, inp.target_cov)
        sub_seed = int(np.random.SeedSequence([seed, i]).generate_state(1, np.uint64)[0])
        F = sample_many(kernels, SamplerSpec.rademacher(law, sub_seed), samples, threads)
        gv = cos_product(F)
        est = float(gv.mean())
        se = float(gv.std(ddof=1) / math.sqrt(samples))
        rows.append(_row("gaussian_target", target, n=n))
        rows.append(_row("discrepancy", abs(est - target), mc_mode(se), n=n))
    return rows


def series(rows: list[dict], stat: str, key: str = "n") -> tuple[list, list[float], list[float]]:
    """Extract ``(keys, values, standard errors)`` of one statistic from experiment rows."""
    ks, vs, ses = [], [], []
    for r in rows:
        if r["statistic"] == stat:
            ks.append(r[key])
            vs.append(float(r["value"]))
            mode = r["mode"]
            ses.append(float(mode[len("mc(se="):-1]) if mode.startswith("mc(") else 0.0)
    return ks, vs, ses


def monotone_within_error(values: list[float], ses: list[float], z: float = 3.0) -> bool:
    """Non-increasing up to ``z`` combined standard errors between neighbours."""
    return all(values[i + 1] <= values[i] + z * math.hypot(ses[i], ses[i + 1])
               for i in range(len(values) - 1))


# --------------------------------------------------------------------------
# Invariant suites
# --------------------------------------------------------------------------

@dataclass
class Check:
    suite: str
    name: str
    deviation: float
    tolerance: float
    passed: bool

    def as_row(self) -> dict:
        return {"suite": self.suite, "check": self.name, "deviation": self.deviation,
                "tolerance": self.tolerance, "pass": self.passed}


class _Recorder:
    """Keeps the worst deviation seen per named check across trials."""

    def __init__(self, suite: str):
        self.suite = suite
        self.worst: dict[str, float] = {}
        self.tol: dict[str, float] = {}

    def equal(self, name: str, dev: float, tol: float = 1e-10) -> None:
        self.worst[name] = max(self.worst.get(name, 0.0), float(dev))
        self.tol[name] = tol

    def at_most(self, name: str, lhs: float, rhs: float, tol: float = 1e-10) -> None:
        """Deviation is the excess ``lhs - rhs``; negative values are slack."""
        self.worst[name] = max(self.worst.get(name, -math.inf), float(lhs - rhs))
        self.tol[name] = tol

    def checks(self) -> list[Check]:
        return [Check(self.suite, n, self.worst[n], self.tol[n], self.worst[n] <= self.tol[n])
                for n in self.worst]


def _law(rng: np.random.Generator, N: int, symmetric: bool) -> RademacherLaw:
    return RademacherLaw.symmetric(N) if symmetric else RademacherLaw(rng.uniform(0.1, 0.9, N))


def _brute_contract(f: Kernel, g: Kernel, r: int) -> np.ndarray:
    import itertools
    p, q, N = f.order, g.order, f.dim
    out = np.zeros((N,) * (p + q - 2 * r))
    for idx in itertools.product(range(N), repeat=p + q - 2 * r):
        i, j = idx[:p - r], idx[p - r:]
        out[idx] = sum(f.value_at(i + k) * g.value_at(j + k)
                       for k in itertools.product(range(N), repeat=r))
    return out


def suite_algebra(rng: np.random.Generator, trials: int) -> list[Check]:
    import io
    rec = _Recorder("algebra")
    for _ in range(trials):
        N = int(rng.integers(3, 7))
        p, q = int(rng.integers(1, 4)), int(rng.integers(1, 4))
        f, g = random_kernel(p, N, rng), random_kernel(q, N, rng)
        r = int(rng.integers(0, min(p, q) + 1))
        if p + q - 2 * r <= 4:
            rec.equal("contract vs brute force", np.max(np.abs(contract(f, g, r).values - _brute_contract(f, g, r)), initial=0.0))
        t = contract(f, g, r)
        st = symmetrize(t)
        rec.equal("symmetrize idempotent", np.max(np.abs(symmetrize(st).values - st.values), initial=0.0))
        rec.at_most("symmetrize contracts norm", table_norm_sq(st), table_norm_sq(t))
        left = math.factorial(p + q) * table_norm_sq(symmetrize(contract(f, g, 0)))
        right = math.factorial(p) * math.factorial(q) * sum(
            math.comb(p, s) * math.comb(q, s) * contraction_norm_sq(f, g, s) for s in range(min(p, q) + 1))
        rec.equal("symmetrized product norm expansion", abs(left - right))
        g2 = random_kernel(p, N, rng)
        for s in range(1, p):
            rec.equal("contraction swap", abs(contraction_norm_sq(f, g2, s)
                                    - table_inner(contract(f, f, p - s), contract(g2, g2, p - s))))
        rec.at_most("influence dominance", max_influence(f), math.sqrt(contraction_norm_sq(f, f, p - 1)))
        lem3 = sum(math.factorial(s) * math.comb(p, s) * math.comb(q, s) for s in range(1, min(p, q) + 1)) * \
            min(norm_sq(f) * max_influence(g), norm_sq(g) * max_influence(f))
        rec.at_most("off-diagonal leak bound", leak_norm_sq(f, g), lem3)
        buf = io.StringIO()
        write_kernel(f, buf)
        rec.equal("kernel file round trip", parse_kernel(buf.getvalue()).max_abs_diff(f), 0.0)
    return rec.checks()


def suite_chaos(rng: np.random.Generator, trials: int) -> list[Check]:
    rec = _Recorder("chaos")
    for trial in range(trials):
        N = int(rng.integers(3, 9))
        law = _law(rng, N, trial % 2 == 0)
        p, q = int(rng.integers(1, 4)), int(rng.integers(1, 4))
        f, g = random_kernel(p, N, rng), random_kernel(q, N, rng)
        F, G = q_table(f, law), q_table(g, law)
        H = F * G + F
        dec = walsh_decompose(H, law)
        rec.equal("reconstruction", dec.to_function(law).max_abs_diff(H), 1e-9)
        ortho = math.factorial(p) * inner(f, g) if p == q else 0.0
        rec.equal("orthogonality", abs(expect_exact(F * G, law) - ortho))
        k, l = rng.choice(N, size=2, replace=False)
        d_kl = discrete_gradient(discrete_gradient(H, int(l), law), int(k), law)
        d_lk = discrete_gradient(discrete_gradient(H, int(k), law), int(l), law)
        rec.equal("gradient commutation", d_kl.max_abs_diff(d_lk))
        rec.equal("decomposition of Q_p(f) is f", walsh_decompose(F, law).kernel(p).max_abs_diff(f))
        ok, rep = product_top_kernel_check(f, g, law)
        rec.equal("product top kernel", max(rep["above_top_max_abs"], rep["top_kernel_deviation"]))
        sym = RademacherLaw.symmetric(N)
        rec.equal("product formula vs decomposition",
                  multiply_symmetric(f, g).max_abs_diff(product_decomposition(f, g, sym)))
        x = sign_matrix(N)[int(rng.integers(1 << N))]
        rec.equal("eval_Q vs table", abs(eval_Q(f, x, law) - F.at(x)))
    return rec.checks()


def suite_coupling(rng: np.random.Generator, trials: int) -> list[Check]:
    rec = _Recorder("coupling")
    for trial in range(trials):
        N = int(rng.integers(2, 8))
        law = _law(rng, N, trial % 2 == 0)
        p = int(rng.integers(1, min(3, N) + 1))
        f = random_kernel(p, N, rng)
        F = q_table(f, law)
        gam = carre_du_champ(f, f, law).to_function(law)
        rec.equal("carre du champ spectral vs generator", gam.max_abs_diff(gamma_from_generator(F, F, law)))
        for t in (0.1, 0.5, 1.0):
            rec.equal("mehler", mehler_check(F, t, law))
            ok, rep = exchangeability_check(f, t, law)
            rec.equal("exchangeability", rep["pair_law_asymmetry"], 1e-12)
        dec = walsh_decompose(F * F, law)
        a = apply_Pt(apply_Pt(dec, 0.2), 0.3)
        rec.equal("semigroup property", a.max_abs_diff(apply_Pt(dec, 0.5)))
        exact, bound = gamma_variance(f, f, law)
        rec.at_most("Var Gamma exact <= bound", exact, bound)
        if p >= 2:
            reg = regression_check(f, law)
            for key in ("a", "b"):
                for ratio in reg["ratios"][key]:
                    rec.equal(f"regression ({key}) decade ratio in [8, 12]", 0.0 if 8 <= ratio <= 12 else abs(ratio - 10), 2.0)
            rec.equal("regression (c) Richardson vs rho", abs(reg["richardson"] / reg["rho"] - 1.0), 1e-4)
    return rec.checks()


def suite_bounds(rng: np.random.Generator, trials: int) -> list[Check]:
    rec = _Recorder("bounds")
    for trial in range(trials):
        N = int(rng.integers(3, 9))
        law = _law(rng, N, trial % 2 == 0)
        p, q = int(rng.integers(1, 4)), int(rng.integers(1, 4))
        f, g = random_kernel(p, N, rng), random_kernel(q, N, rng)
        lem = product_variance_checks(f, g, law)
        for iq in lem["inequalities"]:
            rec.at_most(iq.name, iq.lhs, iq.rhs)
        for idn in lem["identities"]:
            rec.equal(idn.name, idn.deviation)
        for iq in gamma_variance_bounds(f, law)["inequalities"]:
            rec.at_most(iq.name, iq.lhs, iq.rhs)
        st = square_covariance_terms(f, g, law)
        for iq in st["inequalities"] + st["gamma_chain"]:
            rec.at_most(iq.name, iq.lhs, iq.rhs)
        for idn in st["identities"]:
            rec.equal(idn.name, idn.deviation)
        if p >= 2:
            rep = dw_bound_univariate(f, law)
            rec.at_most("Wasserstein <= C1 sqrt|k4| + C2 sqrt M", rep.lhs, rep.rhs)
            rec.at_most("pair bound <= final bound", rep.extra["pair_bound"], rep.rhs)
        h = random_kernel(1, N, rng)
        fc = first_chaos_exact(h, law)
        rec.equal("first chaos fourth moment", fc.extra["formula_deviation"])
        rec.at_most("first chaos W1 <= bound", fc.lhs, fc.rhs)
        inp = MultivariateInput(sorted([f, g], key=lambda k: k.order), law)
        rec.equal("covariance formula vs enumeration",
                  np.max(np.abs(covariance_matrix(inp) - covariance_matrix(inp, "enumeration"))))
    return rec.checks()


SUITES = {"algebra": suite_algebra, "chaos": suite_chaos, "coupling": suite_coupling, "bounds": suite_bounds}


def run_verify(suite: str = "all", seed: int = 0, trials: int = 10) -> list[Check]:
    if suite != "all" and suite not in SUITES:
        raise InputError(f"unknown suite {suite!r}; expected one of {sorted(SUITES)} or 'all'")
    names = list(SUITES) if suite == "all" else [suite]
    out = []
    for i, name in enumerate(names):
        rng = block_rng(seed, i)
        out.extend(SUITES[name](rng, trials))
    return out
