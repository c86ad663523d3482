"""Reproducible Monte Carlo draws of homogeneous sums ``Q_d(f; xi)``.

Samples are produced in fixed-size blocks.  Block ``b`` draws from its own
generator seeded by ``SeedSequence([seed, b])``, so the output depends only on
``seed`` and the sample count, never on how blocks are scheduled.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .chaos import RademacherLaw
from .errors import InputError
from .kernel import Kernel
from .chaos import homogeneous_sum

KINDS = ("rademacher", "gaussian", "custom")
_BLOCK_BUDGET = 1 << 23  # coordinates x samples held in memory per block


@dataclass(frozen=True, eq=False)
class SamplerSpec:
    """Distribution of the i.i.d. inputs ``xi_k`` plus the master seed."""

    kind: str
    seed: int = 0
    law: RademacherLaw | None = None
    values: np.ndarray | None = None
    probs: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InputError(f"unknown sampler kind {self.kind!r}; expected one of {KINDS}")
        if not 0 <= int(self.seed) < 1 << 64:
            raise InputError("seed must be an unsigned 64-bit integer")
        if self.kind == "rademacher" and self.law is None:
            raise InputError("rademacher sampler needs a law")
        if self.kind == "custom":
            v = np.asarray(self.values, dtype=float).reshape(-1)
            w = np.asarray(self.probs, dtype=float).reshape(-1)
            if v.shape != w.shape or v.size == 0:
                raise InputError("custom table needs matching non-empty values and probabilities")
            if np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-12:
                raise InputError("custom probabilities must be positive and sum to 1")
            if abs(w @ v) > 1e-12 or abs(w @ v ** 2 - 1.0) > 1e-12:
                raise InputError("custom table must be centred with unit variance (to 1e-12)")
            object.__setattr__(self, "values", v)
            object.__setattr__(self, "probs", w)

    @classmethod
    def rademacher(cls, law: RademacherLaw, seed: int = 0) -> SamplerSpec:
        return cls("rademacher", seed, law=law)

    @classmethod
    def gaussian(cls, seed: int = 0) -> SamplerSpec:
        return cls("gaussian", seed)

    @classmethod
    def custom(cls, values, probs, seed: int = 0) -> SamplerSpec:
        return cls("custom", seed, values=values, probs=probs)

    @classmethod
    def uniform_grid(cls, m: int = 64, seed: int = 0) -> SamplerSpec:
        """Uniform law on ``m`` equally spaced symmetric points, rescaled to unit variance.

        For large ``m`` this approximates the uniform law on ``[-sqrt 3, sqrt 3]``.
        """
        if m < 2:
            raise InputError("need at least two points")
        a = math.sqrt(3.0 / (m * m - 1))
        values = a * (2 * np.arange(1, m + 1) - m - 1)
        return cls("custom", seed, values=values, probs=np.full(m, 1.0 / m))

    def label(self) -> str:
        if self.kind == "rademacher":
            return "rademacher-symmetric" if self.law.is_symmetric else "rademacher-biased"
        if self.kind == "custom":
            return f"custom({len(self.values)} atoms)"
        return self.kind

    def with_seed(self, seed: int) -> SamplerSpec:
        return SamplerSpec(self.kind, seed, self.law, self.values, self.probs)

    def draw(self, rng: np.random.Generator, n_coords: int, n_samples: int) -> np.ndarray:
        """Coordinate-major ``(n_coords, n_samples)`` array of inputs."""
        shape = (n_coords, n_samples)
        if self.kind == "gaussian":
            return rng.standard_normal(shape)
        if self.kind == "custom":
            cum = np.cumsum(self.probs)
            idx = np.searchsorted(cum, rng.random(shape), side="right")
            return self.values[np.minimum(idx, len(self.values) - 1)]
        law = self.law
        if n_coords > law.dim:
            raise InputError(f"law has {law.dim} coordinates, {n_coords} needed")
        if law.is_symmetric:
            nbits = n_coords * n_samples
            raw = np.frombuffer(rng.bytes((nbits + 7) // 8), dtype=np.uint8)
            bits = np.unpackbits(raw)[:nbits].reshape(shape)
            return 2.0 * bits - 1.0
        u = rng.random(shape)
        p = law.probs[:n_coords, None]
        return np.where(u < p, law.plus[:n_coords, None], law.minus[:n_coords, None])


def block_rng(seed: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), int(block)])))


def block_size(n_coords: int) -> int:
    """Samples per block: the largest power of two keeping a block under budget."""
    b = max(1, _BLOCK_BUDGET // max(n_coords, 1))
    return 1 << min(16, b.bit_length() - 1)


def _needed_coords(kernels: list[Kernel]) -> int:
    return max((int(f.keys.max()) + 1 for f in kernels if f.nnz), default=1)


def iter_input_blocks(spec: SamplerSpec, n_coords: int, n: int) -> Iterator[tuple[int, np.ndarray]]:
    """Yield ``(block_index, inputs)`` covering ``n`` samples in order."""
    if n < 1:
        raise InputError("sample count must be positive")
    B = block_size(n_coords)
    for b in range(math.ceil(n / B)):
        m = min(B, n - b * B)
        rng = block_rng(spec.seed, b)
        xi = spec.draw(rng, n_coords, B)
        yield b, xi[:, :m]


def sample_many(kernels: list[Kernel], spec: SamplerSpec, n: int, threads: int = 1) -> np.ndarray:
    """Joint draws: row ``j`` holds ``n`` samples of ``Q(kernels[j]; xi)`` on shared inputs."""
    if n < 1:
        raise InputError("sample count must be positive")
    n_coords = _needed_coords(kernels)
    B = block_size(n_coords)
    n_blocks = math.ceil(n / B)
    out = np.empty((len(kernels), n))

    def run(b: int) -> None:
        m = min(B, n - b * B)
        xi = spec.draw(block_rng(spec.seed, b), n_coords, B)[:, :m]
        for j, f in enumerate(kernels):
            out[j, b * B:b * B + m] = homogeneous_sum(f, xi)

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            list(pool.map(run, range(n_blocks)))
    else:
        for b in range(n_blocks):
            run(b)
    return out


def sample_Q(f: Kernel, spec: SamplerSpec, n: int, threads: int = 1) -> np.ndarray:
    """``n`` i.i.d. draws of ``Q_d(f; xi)``; deterministic given ``spec.seed``."""
    return sample_many([f], spec, n, threads)[0]


def moment_with_se(x: np.ndarray, m: int) -> tuple[float, float]:
    """Sample mean of ``x**m`` and its standard error."""
    y = np.asarray(x, dtype=float) ** m
    return float(y.mean()), float(y.std(ddof=1) / math.sqrt(len(y)))
