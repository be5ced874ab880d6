"""Finite measure-preserving systems and weighted multiple ergodic averages.

A system is a set of ``size`` points with the uniform measure and a list of
pairwise commuting permutations. ``T f = f o T``: iterating an observable by
``T^e`` reads it at the point ``T^e x``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import CostGuardError
from .pet import PolyFamily
from .primes import WTrickTable, lambda_w_r_values

_CHUNK_ELEMS = 1 << 21
MAX_POINTS = 1 << 24


@dataclass(frozen=True)
class _Cycles:
    flat: np.ndarray  # points listed cycle by cycle
    start: np.ndarray  # for each point, offset of its cycle in ``flat``
    pos: np.ndarray  # position of the point inside its cycle
    length: np.ndarray  # length of the point's cycle
    lengths: tuple[int, ...]  # distinct cycle lengths
    order: int


def _cycles(perm: np.ndarray) -> _Cycles:
    n = perm.size
    seen = np.zeros(n, dtype=bool)
    flat = np.empty(n, dtype=np.int64)
    start = np.empty(n, dtype=np.int64)
    pos = np.empty(n, dtype=np.int64)
    length = np.empty(n, dtype=np.int64)
    k = 0
    for x0 in range(n):
        if seen[x0]:
            continue
        cyc = [x0]
        seen[x0] = True
        y = int(perm[x0])
        while y != x0:
            cyc.append(y)
            seen[y] = True
            y = int(perm[y])
        idx = np.array(cyc, dtype=np.int64)
        L = idx.size
        flat[k : k + L] = idx
        start[idx] = k
        pos[idx] = np.arange(L)
        length[idx] = L
        k += L
    lengths = tuple(sorted({int(v) for v in np.unique(length)}))
    order = 1
    for L in lengths:
        order = order * L // math.gcd(order, L)
    return _Cycles(flat, start, pos, length, lengths, order)


@dataclass(frozen=True, eq=False)
class FiniteSystem:
    """Uniform probability space on ``size`` points with commuting bijections."""

    size: int
    maps: tuple[np.ndarray, ...]
    labels: tuple[str, ...] | None = None
    _cyc: tuple[_Cycles, ...] = field(init=False, repr=False)

    def __post_init__(self):
        if self.size < 1:
            raise ValueError("a system needs at least one point")
        if self.size > MAX_POINTS:
            raise CostGuardError(f"system size {self.size} exceeds {MAX_POINTS}")
        if not self.maps:
            raise ValueError("a system needs at least one map")
        maps = []
        for i, m in enumerate(self.maps):
            arr = np.asarray(m, dtype=np.int64).reshape(-1)
            if arr.size != self.size:
                raise ValueError(f"map {i} has {arr.size} entries, expected {self.size}")
            if arr.min() < 0 or arr.max() >= self.size:
                raise ValueError(f"map {i} sends a point outside 0..{self.size - 1}")
            if np.unique(arr).size != self.size:
                raise ValueError(f"map {i} is not a bijection")
            arr.setflags(write=False)
            maps.append(arr)
        for i in range(len(maps)):
            for j in range(i + 1, len(maps)):
                if not np.array_equal(maps[i][maps[j]], maps[j][maps[i]]):
                    raise ValueError(f"maps {i} and {j} do not commute")
        if self.labels is not None and len(self.labels) != len(maps):
            raise ValueError("one label per map is required")
        object.__setattr__(self, "maps", tuple(maps))
        object.__setattr__(self, "_cyc", tuple(_cycles(m) for m in maps))

    @property
    def ell(self) -> int:
        return len(self.maps)

    def order(self, i: int) -> int:
        """Order of the permutation ``T_i``."""
        return self._cyc[i].order

    def power(self, i: int, e: int) -> np.ndarray:
        """The permutation ``T_i^e`` as an index array; negative ``e`` inverts."""
        return self.powers(i, [e])[0]

    def powers(self, i: int, exps: Sequence[int]) -> np.ndarray:
        """Stack of ``T_i^e`` for each exponent, shape (len(exps), size).

        Exponents may be arbitrary Python integers; each is reduced modulo the
        length of the cycle it acts on.
        """
        c = self._cyc[i]
        out = np.empty((len(exps), self.size), dtype=np.int64)
        for L in c.lengths:
            cols = np.flatnonzero(c.length == L)
            r = np.array([int(e) % L for e in exps], dtype=np.int64)
            out[:, cols] = c.flat[c.start[cols] + (c.pos[cols] + r[:, None]) % L]
        return out

    def to_json(self) -> dict:
        data = {"size": self.size, "maps": [m.tolist() for m in self.maps]}
        if self.labels is not None:
            data["labels"] = list(self.labels)
        return data

    @classmethod
    def from_json(cls, data: dict) -> "FiniteSystem":
        try:
            size = int(data["size"])
            maps = [np.asarray(m, dtype=np.int64) for m in data["maps"]]
        except (KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"system JSON needs 'size' and 'maps': {exc}") from exc
        labels = data.get("labels")
        return cls(size, tuple(maps), tuple(labels) if labels is not None else None)


def rotation(M: int, step: int = 1) -> FiniteSystem:
    """x -> x + step on Z_M."""
    return FiniteSystem(M, ((np.arange(M) + step) % M,))


def torus_shifts(shape: Sequence[int]) -> FiniteSystem:
    """Unit coordinate shifts on the product of cyclic groups Z_{n_1} x ... x Z_{n_k}.

    Points are numbered in C order, so point ``x`` is ``np.unravel_index(x, shape)``.
    """
    shape = tuple(int(s) for s in shape)
    size = math.prod(shape)
    grid = np.arange(size).reshape(shape)
    maps = tuple(np.roll(grid, -1, axis=k).reshape(-1) for k in range(len(shape)))
    return FiniteSystem(size, maps)


def product_rotations(moduli: Sequence[int], steps: Sequence[Sequence[int]]) -> FiniteSystem:
    """Rotations of Z_{M_1} x ... x Z_{M_k}; map i adds the vector ``steps[i]``."""
    moduli = tuple(int(m) for m in moduli)
    size = math.prod(moduli)
    coords = np.indices(moduli).reshape(len(moduli), -1)
    maps = []
    for v in steps:
        if len(v) != len(moduli):
            raise ValueError("each step vector needs one entry per factor")
        moved = [(coords[k] + v[k]) % moduli[k] for k in range(len(moduli))]
        maps.append(np.ravel_multi_index(moved, moduli))
    return FiniteSystem(size, tuple(maps))


@dataclass(frozen=True, eq=False)
class Observable:
    values: np.ndarray
    sup_bound: float = 1.0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex).reshape(-1)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        if v.size and np.abs(v).max() > self.sup_bound * (1 + 1e-12):
            raise ValueError(f"values exceed the stated bound {self.sup_bound}")

    @classmethod
    def constant(cls, size: int, c: complex = 1.0) -> "Observable":
        return cls(np.full(size, c, dtype=complex), max(abs(c), 1e-300))

    @classmethod
    def random_phase(cls, size: int, seed: int = 0) -> "Observable":
        rng = np.random.default_rng(seed)
        return cls(np.exp(2j * np.pi * rng.random(size)))

    def mean(self) -> complex:
        return complex(self.values.mean())


@dataclass(frozen=True, eq=False)
class EventSet:
    indicator: np.ndarray

    def __post_init__(self):
        ind = np.asarray(self.indicator, dtype=bool).reshape(-1)
        ind.setflags(write=False)
        object.__setattr__(self, "indicator", ind)

    @classmethod
    def from_points(cls, size: int, points: Sequence[int]) -> "EventSet":
        ind = np.zeros(size, dtype=bool)
        ind[np.asarray(points, dtype=np.int64)] = True
        return cls(ind)

    def measure(self) -> float:
        return float(self.indicator.mean())

    def observable(self) -> Observable:
        return Observable(self.indicator.astype(complex))


def l2_norm(f: Observable | np.ndarray) -> float:
    v = f.values if isinstance(f, Observable) else np.asarray(f)
    return float(np.sqrt(np.mean(np.abs(v) ** 2)))


def _check_size(sys: FiniteSystem, f: Observable) -> None:
    if f.values.size != sys.size:
        raise ValueError(f"observable has {f.values.size} values, system has {sys.size} points")


def iterate(sys: FiniteSystem, exponents: Sequence[int], f: Observable) -> Observable:
    """(prod_i T_i^{e_i}) f."""
    if len(exponents) != sys.ell:
        raise ValueError(f"need {sys.ell} exponents, got {len(exponents)}")
    _check_size(sys, f)
    pts = np.arange(sys.size)
    for i, e in enumerate(exponents):
        pts = sys.power(i, e)[pts]
    return Observable(f.values[pts], f.sup_bound)


def _numeric_rows(fam: PolyFamily) -> list[list[list[int]]]:
    if not fam.is_numeric:
        raise ValueError("orbit families must have coefficients constant in h")
    return [[p.int_coeffs() for p in row] for row in fam.entries]


def _eval(coeffs: Sequence[int], x: int) -> int:
    acc = 0
    for c in reversed(coeffs):
        acc = acc * x + c
    return acc


def _orbit_points(
    sys: FiniteSystem, rows, j: int, ns: Sequence[int], a: int, b: int
) -> np.ndarray:
    """Points (prod_i T_i^{q_{i,j}(a n + b)}) x for each n, shape (len(ns), size)."""
    pts = None
    for i in range(sys.ell):
        exps = [_eval(rows[i][j], a * n + b) for n in ns]
        P = sys.powers(i, exps)
        pts = P if pts is None else np.take_along_axis(P, pts, axis=1)
    return pts


def _prepare(sys, fs, fam, weights, N, affine):
    if fam.ell != sys.ell:
        raise ValueError(f"family has {fam.ell} rows but the system has {sys.ell} maps")
    if len(fs) != fam.m:
        raise ValueError(f"need {fam.m} observables, got {len(fs)}")
    for f in fs:
        _check_size(sys, f)
    if N < 1:
        raise ValueError("N must be positive")
    if weights is None:
        w = np.ones(N)
    else:
        w = np.asarray(weights, dtype=complex).reshape(-1)
        if w.size < N:
            raise ValueError(f"weights have {w.size} values, need {N}")
        w = w[:N]
        if np.all(w.imag == 0):
            w = w.real
    a, b = affine
    return _numeric_rows(fam), w, int(a), int(b)


def _weighted_sums(sys, fs, rows, w, a, b, snapshots):
    """Running sums of w(n) prod_j f_j(orbit), recorded after each n in ``snapshots``."""
    N = max(snapshots)
    chunk = max(1, _CHUNK_ELEMS // sys.size)
    acc = np.zeros(sys.size, dtype=complex)
    out = {}
    marks = sorted(set(snapshots))
    for lo in range(1, N + 1, chunk):
        hi = min(N, lo + chunk - 1)
        inner = [k for k in marks if lo <= k <= hi]
        ns = list(range(lo, hi + 1))
        prod = np.ones((len(ns), sys.size), dtype=complex)
        for j, f in enumerate(fs):
            prod *= f.values[_orbit_points(sys, rows, j, ns, a, b)]
        prod *= w[lo - 1 : hi, None]
        start = 0
        for k in inner:
            acc = acc + prod[start : k - lo + 1].sum(axis=0)
            start = k - lo + 1
            out[k] = acc.copy()
        acc = acc + prod[start:].sum(axis=0)
    return out


def weighted_multi_average(
    sys: FiniteSystem,
    fs: Sequence[Observable],
    fam: PolyFamily,
    weights=None,
    N: int = 1,
    affine: tuple[int, int] = (1, 0),
) -> Observable:
    """(1/N) sum_{n<=N} w(n) prod_j (prod_i T_i^{q_{i,j}(a n + b)}) f_j.

    ``weights=None`` means w = 1.
    """
    rows, w, a, b = _prepare(sys, fs, fam, weights, N, affine)
    total = _weighted_sums(sys, fs, rows, w, a, b, [N])[N]
    bound = float(np.abs(w).mean()) * math.prod(f.sup_bound for f in fs)
    return Observable(total / N, max(bound, 1e-300))


@dataclass
class PropKeyResult:
    w: int
    W: int
    N: int
    per_r: list[tuple[int, float]]

    @property
    def max(self) -> float:
        return max(v for _, v in self.per_r)

    def to_json(self) -> dict:
        return {
            "w": self.w,
            "W": self.W,
            "N": self.N,
            "per_r": [{"r": r, "l2": v} for r, v in self.per_r],
            "max": self.max,
        }


def prop_key_experiment(
    sys: FiniteSystem,
    fs: Sequence[Observable],
    fam: PolyFamily,
    table: WTrickTable,
    N: int,
) -> PropKeyResult:
    """L2 norm of the (Lambda'_{w,r} - 1)-weighted average along q(Wn + r), per residue r."""
    if table.W * N + table.W > table.limit:
        raise IndexError(f"table limit {table.limit} does not cover W*N + W = {table.W * (N + 1)}")
    per_r = []
    for r in table.coprime_residues:
        weights = lambda_w_r_values(table, r, N) - 1.0
        avg = weighted_multi_average(sys, fs, fam, weights, N, affine=(table.W, r))
        per_r.append((r, l2_norm(avg)))
    return PropKeyResult(table.w, table.W, N, per_r)


def recurrence_average(
    sys: FiniteSystem,
    A: EventSet,
    fam: PolyFamily,
    weights=None,
    N: int = 1,
    affine: tuple[int, int] = (1, 0),
) -> float:
    """(1/N) sum_{n<=N} w(n) mu(A and T^{q_1(n)}A and ... and T^{q_m(n)}A).

    Here ``T^e A`` is the set whose indicator is ``1_A o T^e``.
    """
    if A.indicator.size != sys.size:
        raise ValueError("event set and system differ in size")
    rows, w, a, b = _prepare(sys, [A.observable()] * fam.m, fam, weights, N, affine)
    ind = A.indicator
    chunk = max(1, _CHUNK_ELEMS // sys.size)
    total = 0.0
    for lo in range(1, N + 1, chunk):
        ns = list(range(lo, min(N, lo + chunk - 1) + 1))
        hit = np.broadcast_to(ind, (len(ns), sys.size)).copy()
        for j in range(fam.m):
            hit &= ind[_orbit_points(sys, rows, j, ns, a, b)]
        measures = hit.sum(axis=1) / sys.size
        total += complex(np.dot(w[lo - 1 : lo - 1 + len(ns)], measures)).real
    return total / N


@dataclass
class CauchyResult:
    grid: list[int]
    distances: np.ndarray

    def tail_shrinks(self) -> bool:
        """d(A(N_{k-1}), A(N_k)) for the last pair is below that of the first pair."""
        g = len(self.grid)
        if g < 4:
            raise ValueError("need at least four grid points")
        return bool(self.distances[g - 2, g - 1] < self.distances[0, 1])

    def to_json(self) -> dict:
        return {"grid": self.grid, "distances": self.distances.tolist()}


def cauchy_diagnostic(
    sys: FiniteSystem,
    fs: Sequence[Observable],
    fam: PolyFamily,
    table: WTrickTable,
    grid: Sequence[int],
) -> CauchyResult:
    """Pairwise L2 distances between A(N) = (1/N) sum_{n<=N} Lambda'(n) prod_j orbit f_j."""
    grid = [int(g) for g in grid]
    if not grid or any(b <= a for a, b in zip(grid, grid[1:])) or grid[0] < 1:
        raise ValueError("grid must be strictly ascending positive integers")
    if grid[-1] > table.limit:
        raise IndexError(f"table limit {table.limit} is below N = {grid[-1]}")
    weights = np.asarray(table.lambda_prime[1 : grid[-1] + 1])
    rows, w, a, b = _prepare(sys, fs, fam, weights, grid[-1], (1, 0))
    sums = _weighted_sums(sys, fs, rows, w, a, b, grid)
    avgs = np.stack([sums[g] / g for g in grid])
    diff = avgs[:, None, :] - avgs[None, :, :]
    dist = np.sqrt(np.mean(np.abs(diff) ** 2, axis=2))
    return CauchyResult(grid, dist)
