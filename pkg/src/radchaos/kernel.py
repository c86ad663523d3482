"""Sparse symmetric off-diagonal kernels and their contraction algebra.

A kernel of order ``p`` on ``dim`` coordinates is stored once per strictly
increasing index tuple.  The function it represents is the symmetric
extension of those entries to all ``p!`` orderings and is zero whenever an
index repeats.  Indices are 0-based throughout the package.

Intermediate results that are not symmetric or not supported off the
diagonals (contractions, tensor products) live in :class:`RawTable`, a dense
array wrapper.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import IO, Iterable, Mapping

import numpy as np

from .errors import InputError, ResourceError

ZERO_TOL = 1e-15
MAX_DENSE_ELEMENTS = 60_000_000


def _as_key(key) -> tuple[int, ...]:
    if isinstance(key, (int, np.integer)):
        return (int(key),)
    return tuple(int(i) for i in key)


class Kernel:
    """Symmetric kernel vanishing on diagonals, stored on increasing keys.

    ``keys`` is an ``(nnz, order)`` integer array with strictly increasing
    rows in lexicographic order; ``values`` holds the matching coefficients.
    Both are read-only.
    """

    __slots__ = ("order", "dim", "keys", "values", "_dense", "_lookup", "_prefix_cache")

    def __init__(self, order: int, dim: int, entries: Mapping | None = None):
        order, dim = int(order), int(dim)
        if order < 1:
            raise InputError(f"kernel order must be >= 1, got {order}")
        if dim < 1:
            raise InputError(f"kernel dim must be >= 1, got {dim}")
        merged: dict[tuple[int, ...], float] = {}
        for raw_key, val in (entries or {}).items():
            key = _as_key(raw_key)
            if len(key) != order:
                raise InputError(f"key {key} has length {len(key)}, expected {order}")
            if min(key) < 0 or max(key) >= dim:
                raise InputError(f"key {key} out of range for dim {dim}")
            skey = tuple(sorted(key))
            if len(set(skey)) != order:
                raise InputError(f"key {key} repeats an index")
            if skey in merged:
                raise InputError(f"key {key} given twice (as permutations of {skey})")
            merged[skey] = float(val)
        items = sorted((k, v) for k, v in merged.items() if v != 0.0)
        keys = np.array([k for k, _ in items], dtype=np.int64).reshape(len(items), order)
        values = np.array([v for _, v in items], dtype=float)
        self._set(order, dim, keys, values)

    def _set(self, order, dim, keys, values):
        keys.setflags(write=False)
        values.setflags(write=False)
        self.order = order
        self.dim = dim
        self.keys = keys
        self.values = values
        self._dense = None
        self._lookup = None
        self._prefix_cache = None

    @classmethod
    def from_arrays(cls, order: int, dim: int, keys: np.ndarray, values: np.ndarray) -> Kernel:
        """Build from already-increasing, unique key rows (not re-validated)."""
        keys = np.asarray(keys, dtype=np.int64).reshape(-1, order)
        values = np.asarray(values, dtype=float).reshape(-1)
        keep = values != 0.0
        keys, values = keys[keep], values[keep]
        if len(keys):
            perm = np.lexsort(keys.T[::-1])
            keys, values = keys[perm], values[perm]
        obj = cls.__new__(cls)
        obj._set(int(order), int(dim), np.ascontiguousarray(keys), np.ascontiguousarray(values))
        return obj

    @classmethod
    def zero(cls, order: int, dim: int) -> Kernel:
        return cls(order, dim)

    @classmethod
    def indicator(cls, k: int, dim: int) -> Kernel:
        """First-order kernel ``e_k``."""
        return cls(1, dim, {(k,): 1.0})

    @classmethod
    def from_table(cls, table: RawTable, tol: float = ZERO_TOL) -> Kernel:
        """Read a symmetric table on its increasing tuples (diagonal part is discarded)."""
        if table.order < 1:
            raise InputError("cannot build a kernel from an order-0 table")
        idx = increasing_tuples(table.dim, table.order)
        vals = table.values[tuple(idx.T)] if len(idx) else np.zeros(0)
        keep = np.abs(vals) >= tol
        return cls.from_arrays(table.order, table.dim, idx[keep], vals[keep])

    # --- basic protocol -------------------------------------------------
    @property
    def nnz(self) -> int:
        return len(self.values)

    def __len__(self) -> int:
        return self.nnz

    def items(self) -> Iterable[tuple[tuple[int, ...], float]]:
        for row, v in zip(self.keys.tolist(), self.values.tolist()):
            yield tuple(row), v

    @property
    def entries(self) -> dict[tuple[int, ...], float]:
        return dict(self.items())

    def __repr__(self) -> str:
        return f"Kernel(order={self.order}, dim={self.dim}, nnz={self.nnz})"

    def __eq__(self, other) -> bool:
        if not isinstance(other, Kernel):
            return NotImplemented
        if (self.order, self.dim) != (other.order, other.dim):
            return False
        mine = {k: v for k, v in self.items() if abs(v) >= ZERO_TOL}
        theirs = {k: v for k, v in other.items() if abs(v) >= ZERO_TOL}
        return mine == theirs

    __hash__ = None

    def max_abs_diff(self, other: Kernel) -> float:
        """Sup-norm distance between the represented functions."""
        if self.order != other.order:
            raise InputError("order mismatch")
        mine, theirs = self.entries, other.entries
        keys = mine.keys() | theirs.keys()
        return max((abs(mine.get(k, 0.0) - theirs.get(k, 0.0)) for k in keys), default=0.0)

    def allclose(self, other: Kernel, atol: float = 1e-10) -> bool:
        return self.order == other.order and self.max_abs_diff(other) <= atol

    def value_at(self, idx) -> float:
        key = _as_key(idx)
        if len(key) != self.order:
            raise InputError(f"index {key} has length {len(key)}, expected {self.order}")
        if min(key) < 0 or max(key) >= self.dim:
            raise InputError(f"index {key} out of range for dim {self.dim}")
        if len(set(key)) != self.order:
            return 0.0
        if self._lookup is None:
            self._lookup = self.entries
        return self._lookup.get(tuple(sorted(key)), 0.0)

    __getitem__ = value_at

    # --- arithmetic -----------------------------------------------------
    def scaled(self, c: float) -> Kernel:
        return Kernel.from_arrays(self.order, self.dim, self.keys, self.values * c)

    def __mul__(self, c: float) -> Kernel:
        return self.scaled(float(c))

    __rmul__ = __mul__

    def __add__(self, other: Kernel) -> Kernel:
        if (self.order, self.dim) != (other.order, other.dim):
            raise InputError("order/dim mismatch")
        acc = self.entries
        for k, v in other.items():
            acc[k] = acc.get(k, 0.0) + v
        if not acc:
            return Kernel.zero(self.order, self.dim)
        keys = np.array(list(acc.keys()), dtype=np.int64)
        return Kernel.from_arrays(self.order, self.dim, keys, np.array(list(acc.values())))

    def __sub__(self, other: Kernel) -> Kernel:
        return self + other.scaled(-1.0)

    def with_dim(self, dim: int) -> Kernel:
        """Same kernel viewed on a larger coordinate universe."""
        if self.nnz and dim <= int(self.keys.max()):
            raise InputError(f"dim {dim} too small for stored keys")
        return Kernel.from_arrays(self.order, dim, self.keys, self.values)

    # --- dense views ----------------------------------------------------
    def to_dense(self) -> np.ndarray:
        """Dense ``(dim,)*order`` array of the symmetric extension (read-only, cached)."""
        if self._dense is None:
            size = self.dim ** self.order
            if size > MAX_DENSE_ELEMENTS:
                raise ResourceError(f"dense kernel would need {size} entries")
            arr = np.zeros((self.dim,) * self.order)
            if self.nnz:
                for perm in itertools.permutations(range(self.order)):
                    arr[tuple(self.keys[:, perm].T)] = self.values
            arr.setflags(write=False)
            self._dense = arr
        return self._dense

    def to_table(self) -> RawTable:
        return RawTable(self.to_dense().copy(), self.dim, (self.order,))

    def bitmasks(self) -> np.ndarray:
        """Integer bitmask of each stored key (bit ``k`` set for index ``k``)."""
        if self.dim > 62:
            raise ResourceError("bitmask encoding limited to 62 coordinates")
        return (np.left_shift(np.int64(1), self.keys)).sum(axis=1) if self.nnz else np.zeros(0, np.int64)


def value_at(f: Kernel, idx) -> float:
    return f.value_at(idx)


def section(f: Kernel, k: int) -> Kernel:
    """The order ``p-1`` kernel ``f(k, .)`` (requires ``p >= 2``)."""
    if f.order < 2:
        raise InputError("section needs order >= 2")
    rows = np.any(f.keys == k, axis=1)
    keys = f.keys[rows]
    rest = keys[keys != k].reshape(len(keys), f.order - 1)
    return Kernel.from_arrays(f.order - 1, f.dim, rest, f.values[rows])


@lru_cache(maxsize=64)
def _increasing_tuples_cached(n: int, p: int) -> np.ndarray:
    count = math.comb(n, p)
    if count * p > MAX_DENSE_ELEMENTS:
        raise ResourceError(f"{count} increasing {p}-tuples over {n} coordinates")
    flat = np.fromiter(itertools.chain.from_iterable(itertools.combinations(range(n), p)),
                       dtype=np.int64, count=count * p)
    out = flat.reshape(count, p)
    out.setflags(write=False)
    return out


def increasing_tuples(n: int, p: int) -> np.ndarray:
    """All strictly increasing ``p``-tuples over ``range(n)`` as a ``(C(n,p), p)`` array."""
    return _increasing_tuples_cached(int(n), int(p))


# --------------------------------------------------------------------------
# Raw (possibly non-symmetric, possibly diagonal) tables
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class RawTable:
    """Dense coefficient table of a given order over ``dim`` coordinates.

    ``blocks`` optionally records contiguous groups of axes within which the
    table is already known to be symmetric, e.g. ``(p - r, q - r)`` for an
    ``r``-contraction of two symmetric kernels.  It only speeds up
    :func:`symmetrize`; ``None`` means nothing is known.
    """

    values: np.ndarray
    dim: int
    blocks: tuple[int, ...] | None = None

    @property
    def order(self) -> int:
        return self.values.ndim

    @classmethod
    def from_entries(cls, order: int, dim: int, entries: Mapping) -> RawTable:
        arr = np.zeros((dim,) * order)
        for key, v in entries.items():
            key = _as_key(key) if order else ()
            if len(key) != order:
                raise InputError(f"key {key} has wrong length")
            arr[key] += v
        return cls(arr, dim)

    @classmethod
    def scalar(cls, c: float, dim: int) -> RawTable:
        return cls(np.array(float(c)), dim, ())

    def value_at(self, idx) -> float:
        key = _as_key(idx) if self.order else ()
        if len(key) != self.order:
            raise InputError("wrong index length")
        return float(self.values[key])

    def entries(self, tol: float = 0.0) -> dict[tuple[int, ...], float]:
        nz = np.argwhere(np.abs(self.values) > tol)
        return {tuple(int(i) for i in row): float(self.values[tuple(row)]) for row in nz}


def _symmetrize_array(values: np.ndarray, blocks: tuple[int, ...] | None) -> np.ndarray:
    p = values.ndim
    if p <= 1:
        return values.copy()
    if blocks is None or sum(blocks) != p:
        blocks = (1,) * p
    labels = [j for j, b in enumerate(blocks) for _ in range(b)]
    labelings = sorted(set(itertools.permutations(labels)))
    acc = np.zeros_like(values, dtype=float)
    for lab in labelings:
        # axis m of `values` is sent to output position target[m]
        target = [pos for j in range(len(blocks)) for pos, l in enumerate(lab) if l == j]
        acc += values.transpose(np.argsort(target))
    return acc / len(labelings)


def symmetrize(t: RawTable) -> RawTable:
    """Canonical symmetrisation: average over all permutations of the arguments."""
    return RawTable(_symmetrize_array(np.asarray(t.values, dtype=float), t.blocks), t.dim,
                    (t.order,) if t.order else ())


def _coerce_table(x) -> RawTable:
    return x.to_table() if isinstance(x, Kernel) else x


def contract(f: Kernel, g: Kernel, r: int) -> RawTable:
    """``r``-contraction ``f (x)_r g`` as a dense table of order ``p + q - 2r``.

    The free arguments of ``f`` come first, then those of ``g``; ``r = 0`` is
    the tensor product.
    """
    p, q = f.order, g.order
    if f.dim != g.dim:
        raise InputError(f"dimension mismatch: {f.dim} vs {g.dim}")
    if not 0 <= r <= min(p, q):
        raise InputError(f"contraction index r={r} outside 0..{min(p, q)}")
    size = f.dim ** (p + q - 2 * r)
    if size > MAX_DENSE_ELEMENTS:
        raise ResourceError(f"contraction table would need {size} entries")
    F, G = f.to_dense(), g.to_dense()
    if r == 0:
        vals = np.multiply.outer(F, G)
    else:
        vals = np.tensordot(F, G, axes=(list(range(p - r, p)), list(range(q - r, q))))
    blocks = tuple(b for b in (p - r, q - r) if b)
    return RawTable(np.asarray(vals, dtype=float), f.dim, blocks)


@lru_cache(maxsize=32)
def _offdiag_mask_cached(order: int, dim: int) -> np.ndarray:
    mask = np.ones((dim,) * order, dtype=bool)
    ar = np.arange(dim)
    for a, b in itertools.combinations(range(order), 2):
        sa = [1] * order
        sb = [1] * order
        sa[a] = dim
        sb[b] = dim
        mask &= ar.reshape(sa) != ar.reshape(sb)
    mask.setflags(write=False)
    return mask


def offdiag_mask(order: int, dim: int) -> np.ndarray:
    """Boolean indicator of the off-diagonal set (all indices distinct)."""
    return _offdiag_mask_cached(int(order), int(dim))


def restrict(t: RawTable, offdiag: bool = True) -> RawTable:
    """Multiply ``t`` by the indicator of the off-diagonal set, or of its complement."""
    if t.order <= 1:
        return t if offdiag else RawTable(np.zeros_like(t.values), t.dim, t.blocks)
    mask = offdiag_mask(t.order, t.dim)
    keep = mask if offdiag else ~mask
    return RawTable(np.where(keep, t.values, 0.0), t.dim, t.blocks)


def table_inner(s: RawTable, t: RawTable) -> float:
    if s.values.shape != t.values.shape:
        raise InputError("table shape mismatch")
    return float(np.vdot(s.values, t.values))


def table_norm_sq(t: RawTable) -> float:
    return table_inner(t, t)


# --------------------------------------------------------------------------
# Kernel-level algebra
# --------------------------------------------------------------------------

def _check_pair(f: Kernel, g: Kernel) -> None:
    if f.order != g.order:
        raise InputError(f"order mismatch: {f.order} vs {g.order}")
    if f.dim != g.dim:
        raise InputError(f"dimension mismatch: {f.dim} vs {g.dim}")


def _encode_rows(rows: np.ndarray, dim: int) -> np.ndarray:
    k = rows.shape[1]
    if k == 0:
        return np.zeros(len(rows), dtype=np.int64)
    if dim ** k >= 2 ** 62:
        raise ResourceError("index tuples too long to encode")
    weights = dim ** np.arange(k - 1, -1, -1, dtype=np.int64)
    return rows @ weights


def _decode_codes(codes: np.ndarray, dim: int, k: int) -> np.ndarray:
    out = np.empty((len(codes), k), dtype=np.int64)
    rest = codes.copy()
    for j in range(k - 1, -1, -1):
        out[:, j] = rest % dim
        rest //= dim
    return out


def inner(f: Kernel, g: Kernel) -> float:
    """Inner product summed over all ordered tuples (``p!`` times the key sum)."""
    _check_pair(f, g)
    if not f.nnz or not g.nnz:
        return 0.0
    cf, cg = _encode_rows(f.keys, f.dim), _encode_rows(g.keys, g.dim)
    _, i, j = np.intersect1d(cf, cg, assume_unique=True, return_indices=True)
    return math.factorial(f.order) * float(np.dot(f.values[i], g.values[j]))


def norm_sq(f: Kernel) -> float:
    return math.factorial(f.order) * float(np.dot(f.values, f.values))


def max_influence(f: Kernel) -> float:
    """Largest total squared weight carried by a single coordinate."""
    if f.order < 1:
        raise InputError("maximal influence needs order >= 1")
    if not f.nnz:
        return 0.0
    flat = f.keys.ravel()
    sq = np.repeat(f.values ** 2, f.order)
    per_coord = np.bincount(flat, weights=sq, minlength=f.dim)
    # bincount accumulates sequentially; re-sum the leading coordinates exactly
    top = np.flatnonzero(per_coord >= per_coord.max() * (1 - 1e-9))
    best = max(math.fsum(sq[flat == k]) for k in top)
    return math.factorial(f.order - 1) * best


def normalized(f: Kernel) -> Kernel:
    """Rescale so that ``p! * ||f||^2 == 1``."""
    n2 = norm_sq(f)
    if n2 == 0.0:
        raise InputError("cannot normalise the zero kernel")
    return f.scaled(1.0 / math.sqrt(math.factorial(f.order) * n2))


def counterexample_kernel(q: int, N: int) -> Kernel:
    """Kernel that puts ``1/(q! sqrt(N-q+1))`` on every key ``(0, ..., q-2, s)``, ``s >= q-1``.

    Its homogeneous sum over i.i.d. symmetric signs is asymptotically
    Gaussian while the Gaussian-input version has the law of ``G_1 ... G_q``.
    """
    q, N = int(q), int(N)
    if q < 2:
        raise InputError(f"q must be >= 2, got {q}")
    if N < q:
        raise InputError(f"N must be >= q, got N={N}, q={q}")
    tails = np.arange(q - 1, N, dtype=np.int64)
    keys = np.column_stack([np.tile(np.arange(q - 1, dtype=np.int64), (len(tails), 1)), tails])
    val = 1.0 / (math.factorial(q) * math.sqrt(N - q + 1))
    return Kernel.from_arrays(q, N, keys, np.full(len(tails), val))


def offdiag_contractions(f: Kernel, g: Kernel, rs: Iterable[int] | None = None) -> dict[int, Kernel | float]:
    """Symmetrised contractions restricted to the off-diagonal set, computed sparsely.

    Returns ``{r: (f ~(x)_r g) 1_Delta}`` for each requested ``r``.  The
    ``r = p = q`` entry is the scalar ``<f, g>``.  Cost is proportional to
    ``nnz(f) * nnz(g)``: every pair of stored keys sharing exactly ``r``
    indices contributes to the key formed by their symmetric difference.
    """
    p, q = f.order, g.order
    if f.dim != g.dim:
        raise InputError(f"dimension mismatch: {f.dim} vs {g.dim}")
    rs = list(range(min(p, q) + 1)) if rs is None else [int(r) for r in rs]
    for r in rs:
        if not 0 <= r <= min(p, q):
            raise InputError(f"contraction index r={r} outside 0..{min(p, q)}")
    dim = f.dim
    codes: dict[int, list] = {r: [] for r in rs}
    weights: dict[int, list] = {r: [] for r in rs}
    A, C = f.keys, g.keys
    chunk = max(1, 4_000_000 // max(1, len(C) * p * q))
    for start in range(0, len(A), chunk):
        a = A[start:start + chunk]
        fa = f.values[start:start + chunk]
        eq = a[:, None, :, None] == C[None, :, None, :]
        in_a = eq.any(axis=3)
        in_c = eq.any(axis=2)
        overlap = in_a.sum(axis=2)
        for r in rs:
            ia, ic = np.nonzero(overlap == r)
            if not len(ia):
                continue
            w = fa[ia] * g.values[ic]
            k = p + q - 2 * r
            if k == 0:
                weights[r].append(np.array([w.sum()]))
                continue
            ua = np.where(in_a[ia, ic], dim, a[ia])
            uc = np.where(in_c[ia, ic], dim, C[ic])
            u = np.sort(np.concatenate([ua, uc], axis=1), axis=1)[:, :k]
            codes[r].append(_encode_rows(u, dim))
            weights[r].append(w)

    out: dict[int, Kernel | float] = {}
    for r in rs:
        k = p + q - 2 * r
        factor = math.factorial(r) * math.factorial(p - r) * math.factorial(q - r) / math.factorial(k)
        if k == 0:
            out[r] = factor * float(sum(x.sum() for x in weights[r]))
            continue
        if not codes[r]:
            out[r] = Kernel.zero(k, dim)
            continue
        allc = np.concatenate(codes[r])
        allw = np.concatenate(weights[r])
        uniq, inv = np.unique(allc, return_inverse=True)
        sums = np.bincount(inv, weights=allw) * factor
        out[r] = Kernel.from_arrays(k, dim, _decode_codes(uniq, dim, k), sums)
    return out


def sym_offdiag_product(f: Kernel, g: Kernel) -> Kernel:
    """``(f ~(x) g) 1_Delta`` as a kernel of order ``p + q``."""
    return offdiag_contractions(f, g, rs=[0])[0]


def leak_norm_sq(f: Kernel, g: Kernel) -> float:
    """``|| (f ~(x) g) 1_{Delta^c} ||^2`` from the dense symmetrised tensor product."""
    t = symmetrize(contract(f, g, 0))
    return table_norm_sq(restrict(t, offdiag=False))


def sym_product_norm_sq(f: Kernel, g: Kernel) -> float:
    """``|| f ~(x) g ||^2`` (full, diagonal part included)."""
    return table_norm_sq(symmetrize(contract(f, g, 0)))


def contraction_norm_sq(f: Kernel, g: Kernel, r: int) -> float:
    return table_norm_sq(contract(f, g, r))


# --------------------------------------------------------------------------
# Random kernels and file format
# --------------------------------------------------------------------------

def random_kernel(order: int, dim: int, rng: np.random.Generator, density: float = 0.5,
                  normalize: bool = True) -> Kernel:
    """Random kernel with i.i.d. Gaussian coefficients on a random subset of keys."""
    if dim < order:
        raise InputError(f"need dim >= order, got dim={dim}, order={order}")
    idx = increasing_tuples(dim, order)
    keep = rng.random(len(idx)) < density
    if not keep.any():
        keep[rng.integers(len(idx))] = True
    f = Kernel.from_arrays(order, dim, idx[keep], rng.standard_normal(int(keep.sum())))
    return normalized(f) if normalize else f


def write_kernel(f: Kernel, dest: str | Path | IO[str]) -> None:
    """Text format: ``order p dim N`` header, then ``i_1 ... i_p value`` per key."""
    lines = [f"order {f.order} dim {f.dim}"]
    for key, v in f.items():
        lines.append(" ".join(str(i) for i in key) + " " + format(v, ".17g"))
    text = "\n".join(lines) + "\n"
    if hasattr(dest, "write"):
        dest.write(text)
    else:
        Path(dest).write_text(text)


def parse_kernel(text: str) -> Kernel:
    rows = [ln.split() for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    if not rows:
        raise InputError("empty kernel file")
    head = rows[0]
    if len(head) != 4 or head[0] != "order" or head[2] != "dim":
        raise InputError(f"bad kernel header: {' '.join(head)!r}")
    try:
        order, dim = int(head[1]), int(head[3])
        entries = {}
        for row in rows[1:]:
            if len(row) != order + 1:
                raise InputError(f"bad kernel line: {' '.join(row)!r}")
            entries[tuple(int(i) for i in row[:-1])] = float(row[-1])
    except ValueError as exc:
        raise InputError(f"bad kernel file: {exc}") from exc
    return Kernel(order, dim, entries)


def read_kernel(path: str | Path) -> Kernel:
    return parse_kernel(Path(path).read_text())
