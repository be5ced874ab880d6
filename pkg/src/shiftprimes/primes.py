"""Sieve tables for the von Mangoldt function and its W-tricked prime weights."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np

from . import gowers
from .errors import CostGuardError

SEGMENT = 1 << 18
MAX_RESIDUE_MODULUS = 10 ** 8
MAX_LIMIT = 1 << 34


def _simple_sieve(n: int) -> np.ndarray:
    flags = np.ones(n + 1, dtype=bool)
    flags[:2] = False
    for p in range(2, math.isqrt(n) + 1):
        if flags[p]:
            flags[p * p :: p] = False
    return flags


def sieve(limit: int) -> np.ndarray:
    """Boolean primality flags for 0..limit, segmented Eratosthenes."""
    if limit < 1:
        return np.zeros(max(limit + 1, 0), dtype=bool)
    root = math.isqrt(limit)
    base_flags = _simple_sieve(root)
    base = np.flatnonzero(base_flags)
    flags = np.zeros(limit + 1, dtype=bool)
    flags[: root + 1] = base_flags
    lo = root + 1
    while lo <= limit:
        hi = min(limit, lo + SEGMENT - 1)
        seg = np.ones(hi - lo + 1, dtype=bool)
        for p in base:
            p = int(p)
            start = max(p * p, ((lo + p - 1) // p) * p)
            if start > hi:
                continue
            seg[start - lo :: p] = False
        flags[lo : hi + 1] = seg
        lo = hi + 1
    return flags


def primorial_below(w: int) -> int:
    """W = product of the primes p < w."""
    return math.prod(int(p) for p in np.flatnonzero(_simple_sieve(max(w - 1, 1))))


@dataclass(frozen=True, eq=False)
class WTrickTable:
    limit: int
    w: int
    W: int
    phi_W: int
    coprime_residues: tuple[int, ...]
    is_prime: np.ndarray = field(repr=False)
    mangoldt: np.ndarray = field(repr=False)
    lambda_prime: np.ndarray = field(repr=False)
    prime_count: np.ndarray = field(repr=False)

    def pi(self, N: int) -> int:
        """Number of primes <= N."""
        self._check(N)
        return int(self.prime_count[N])

    def primes_upto(self, N: int) -> np.ndarray:
        self._check(N)
        return np.flatnonzero(self.is_prime[: N + 1])

    def _check(self, n: int) -> None:
        if not 0 <= n <= self.limit:
            raise IndexError(f"{n} is outside the table range 0..{self.limit}")


def build_table(limit: int, w: int) -> WTrickTable:
    """Sieve to ``limit`` and set up the W-trick for W = product of primes < w."""
    if not limit >= w >= 3:
        raise ValueError(f"need limit >= w >= 3, got limit={limit}, w={w}")
    if limit > MAX_LIMIT:
        raise CostGuardError(f"sieve limit {limit} exceeds {MAX_LIMIT}")
    is_prime = sieve(limit)
    small = [p for p in range(2, w) if is_prime[p]]
    W = math.prod(small)
    if W * (limit // W + 1) >= 1 << 63:
        raise OverflowError(f"W={W} times the table range overflows 64-bit indices")
    if W > MAX_RESIDUE_MODULUS:
        raise CostGuardError(f"W={W} is too large to enumerate residues")
    phi_W = math.prod(p - 1 for p in small)
    coprime = np.ones(W + 1, dtype=bool)
    coprime[0] = False
    for p in small:
        coprime[::p] = False
    residues = tuple(int(r) for r in np.flatnonzero(coprime))
    assert len(residues) == phi_W

    mangoldt = np.zeros(limit + 1)
    primes = np.flatnonzero(is_prime)
    mangoldt[primes] = np.log(primes)
    for p in primes[: np.searchsorted(primes, math.isqrt(limit), side="right")]:
        p = int(p)
        q = p * p
        while q <= limit:
            mangoldt[q] = math.log(p)
            q *= p
    lam = np.where(is_prime, mangoldt, 0.0)
    counts = np.cumsum(is_prime, dtype=np.int64)
    for arr in (is_prime, mangoldt, lam, counts):
        arr.setflags(write=False)
    return WTrickTable(limit, w, W, phi_W, residues, is_prime, mangoldt, lam, counts)


def _check_residue(t: WTrickTable, r: int) -> None:
    if not 1 <= r <= t.W or math.gcd(r, t.W) != 1:
        raise ValueError(f"r={r} is not a residue in [1, {t.W}] coprime to W={t.W}")


def lambda_w_r(t: WTrickTable, r: int, n: int) -> float:
    """(phi(W)/W) * Lambda'(W n + r)."""
    _check_residue(t, r)
    k = t.W * n + r
    if n < 1 or k > t.limit:
        raise IndexError(f"W*n + r = {k} is outside the table (limit {t.limit})")
    return t.phi_W / t.W * float(t.lambda_prime[k])


def lambda_w_r_values(t: WTrickTable, r: int, N: int) -> np.ndarray:
    """Lambda'_{w,r}(n) for n = 1..N as an array."""
    _check_residue(t, r)
    top = t.W * N + r
    if top > t.limit:
        raise IndexError(f"W*N + r = {top} is outside the table (limit {t.limit})")
    idx = t.W * np.arange(1, N + 1, dtype=np.int64) + r
    return t.phi_W / t.W * t.lambda_prime[idx]


def weight_discrepancy(t: WTrickTable, r: int, N: int) -> float:
    """|(1/N) sum_{n<=N} (Lambda'_{w,r}(n) - 1)|."""
    return abs(float(np.mean(lambda_w_r_values(t, r, N) - 1.0)))


Bounded = Union[Callable[[int], complex], Sequence[complex], np.ndarray]


def _sample(a: Bounded, N: int) -> np.ndarray:
    """a(1..N) as an array."""
    if callable(a):
        return np.array([a(n) for n in range(1, N + 1)], dtype=complex)
    arr = np.asarray(a, dtype=complex).reshape(-1)
    if arr.size < N:
        raise ValueError(f"sequence has {arr.size} values, need {N}")
    return arr[:N]


def compare_prime_average(t: WTrickTable, a: Bounded, N: int) -> float:
    """|(1/pi(N)) sum_{p<=N} a(p) - (1/N) sum_{n<=N} Lambda'(n) a(n)|."""
    t._check(N)
    vals = _sample(a, N)
    pi_n = t.pi(N)
    if pi_n == 0:
        raise ValueError(f"no primes up to N={N}")
    mask = t.is_prime[1 : N + 1]
    prime_avg = vals[mask].sum() / pi_n
    weighted = np.dot(t.lambda_prime[1 : N + 1], vals) / N
    return float(abs(prime_avg - weighted))


@dataclass
class Profile:
    w: int
    W: int
    N: int
    d: int
    per_r: list[tuple[int, float]]
    mode: str = "exact"

    @property
    def max(self) -> float:
        return max(v for _, v in self.per_r)

    def to_json(self) -> dict:
        return {
            "w": self.w,
            "W": self.W,
            "N": self.N,
            "d": self.d,
            "mode": self.mode,
            "per_r": [{"r": r, "norm": v} for r, v in self.per_r],
            "max": self.max,
        }


def uniformity_profile(
    t: WTrickTable,
    N: int,
    d: int,
    sampling: bool = False,
    samples: int = 200_000,
    seed: int = 0,
    workers: int = 1,
) -> Profile:
    """||(Lambda'_{w,r} - 1) 1_[1,N]||_{U_d(Z_dN)} for every residue r coprime to W."""
    if d < 1:
        raise ValueError("d must be >= 1")
    if t.W * N + t.W > t.limit:
        raise IndexError(f"W*N + W = {t.W * N + t.W} exceeds the table limit {t.limit}")
    if d >= 4 and not sampling:
        raise CostGuardError(f"U_{d} needs sampling mode; exact mode supports d <= 3")

    def one(r: int) -> float:
        seq = gowers.ArithSequence(lambda_w_r_values(t, r, N) - 1.0)
        emb = gowers.embed(seq, d)
        if sampling:
            return gowers.gowers_sampled(emb, d, samples=samples, seed=seed + r)
        return gowers.gowers_norm(emb, d)

    rs = list(t.coprime_residues)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            norms = list(pool.map(one, rs))
    else:
        norms = [one(r) for r in rs]
    return Profile(t.w, t.W, N, d, list(zip(rs, norms)), "sampled" if sampling else "exact")
