"""Gowers uniformity norms on cyclic groups and the van der Corput bound.

Z_M is identified with {1, ..., M}; array position k holds the value at index
k + 1, so cyclic shifts act on positions modulo M.
"""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .errors import CostGuardError

# brute-force limits on the modulus per degree
BRUTE_MAX_MODULUS = {1: 4096, 2: 512, 3: 128}
# largest derivative table the recursion may build for one batch
_CHUNK_ELEMS = 1 << 22
# recursion cost bound, in multiply-adds, for the exact norm
EXACT_MAX_COST = 1 << 34


@dataclass(frozen=True, eq=False)
class ArithSequence:
    """Values a(1), ..., a(N), optionally read on Z_M with zeros at N+1..M."""

    values: np.ndarray
    modulus: int | None = None

    def __post_init__(self):
        v = np.array(self.values, dtype=complex).reshape(-1)
        if v.size == 0:
            raise ValueError("sequence must have N >= 1 values")
        if self.modulus is not None and self.modulus < v.size:
            raise ValueError(f"modulus {self.modulus} is smaller than N={v.size}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def N(self) -> int:
        return self.values.size

    def cyclic(self) -> np.ndarray:
        """Length-M array on Z_M (position k is index k+1)."""
        if self.modulus is None:
            raise ValueError("sequence has no modulus; use embed() or pass modulus")
        out = np.zeros(self.modulus, dtype=complex)
        out[: self.N] = self.values
        return out

    def __call__(self, n: int) -> complex:
        if self.modulus is None:
            if not 1 <= n <= self.N:
                raise IndexError(n)
            return complex(self.values[n - 1])
        k = (n - 1) % self.modulus
        return complex(self.values[k]) if k < self.N else 0j

    def conj(self) -> "ArithSequence":
        return ArithSequence(np.conj(self.values), self.modulus)

    def to_json(self) -> dict:
        return {
            "N": self.N,
            "modulus": self.modulus,
            "values": [[float(z.real), float(z.imag)] for z in self.values],
        }

    @classmethod
    def from_json(cls, data: dict) -> "ArithSequence":
        try:
            raw = data["values"]
        except (KeyError, TypeError):
            raise ValueError("sequence JSON needs a 'values' array") from None
        vals = []
        for k, item in enumerate(raw):
            if isinstance(item, (int, float)):
                vals.append(complex(item))
            elif isinstance(item, list) and len(item) == 2:
                vals.append(complex(item[0], item[1]))
            else:
                raise ValueError(f"values[{k}] must be [re, im], got {item!r}")
        seq = cls(np.array(vals, dtype=complex), data.get("modulus"))
        if "N" in data and data["N"] != seq.N:
            raise ValueError(f"declared N={data['N']} but {seq.N} values given")
        return seq


@dataclass(frozen=True, eq=False)
class VectorSequence:
    """v(1), ..., v(N) in C^dim with the inner product <x, y> = sum x_k conj(y_k)."""

    vectors: np.ndarray

    def __post_init__(self):
        v = np.array(self.vectors, dtype=complex)
        if v.ndim == 1:
            v = v[:, None]
        if v.ndim != 2 or v.shape[0] == 0:
            raise ValueError("vectors must be an (N, dim) array with N >= 1")
        object.__setattr__(self, "vectors", v)

    @property
    def N(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]


def _as_cyclic(a) -> np.ndarray:
    if isinstance(a, ArithSequence):
        return a.cyclic()
    x = np.asarray(a, dtype=complex).reshape(-1)
    if x.size == 0:
        raise ValueError("empty sequence")
    return x


def embed(a: ArithSequence, d: int) -> ArithSequence:
    """a * 1_[1,N] viewed on Z_{dN}."""
    if d < 1:
        raise ValueError("embedding factor d must be >= 1")
    return ArithSequence(a.values, d * a.N)


def _u2_power_fft(x: np.ndarray) -> np.ndarray:
    M = x.shape[-1]
    ah = np.fft.fft(x, axis=-1) / M
    return np.sum(np.abs(ah) ** 4, axis=-1)


def _power(x: np.ndarray, d: int, fast: bool) -> np.ndarray:
    """||x||_{U_d}^{2^d} along the last axis, batched over the others."""
    M = x.shape[-1]
    if d == 1:
        return np.abs(x.mean(axis=-1)) ** 2
    if d == 2 and fast:
        return _u2_power_fft(x)
    n = np.arange(M)
    batch = int(np.prod(x.shape[:-1], dtype=np.int64))
    step = max(1, _CHUNK_ELEMS // max(1, batch * M))
    total = np.zeros(x.shape[:-1])
    xc = np.conj(x)
    for h0 in range(0, M, step):
        hs = np.arange(h0, min(M, h0 + step))
        idx = (n[None, :] + hs[:, None]) % M
        deriv = x[..., idx] * xc[..., None, :]
        total = total + _power(deriv, d - 1, fast).sum(axis=-1)
    return total / M


def _exact_cost(M: int, d: int, fast: bool) -> int:
    if d == 1:
        return M
    if fast:
        return M ** (d - 1) * (int(np.log2(M)) + 1)
    return M ** d


def gowers_norm(a, d: int, fast: bool = True) -> float:
    """||a||_{U_d(Z_M)} by the recursion U_{d+1}^{2^{d+1}} = E_h ||a_h conj(a)||_{U_d}^{2^d}.

    ``fast`` evaluates the innermost U_2 layer through the FFT; with
    ``fast=False`` the recursion runs all the way down to U_1.
    """
    if d < 1:
        raise ValueError("Gowers degree d must be >= 1")
    x = _as_cyclic(a)
    if _exact_cost(x.size, d, fast) > EXACT_MAX_COST:
        raise CostGuardError(f"U_{d} on Z_{x.size} exceeds the exact-mode cost bound")
    p = float(_power(x, d, fast))
    return max(p, 0.0) ** (1.0 / 2 ** d)


def brute_gowers(a, d: int) -> float:
    """Direct average of the 2^d-fold multiplicative cube over (n, h_1..h_d)."""
    if d not in (1, 2, 3):
        raise ValueError("brute_gowers supports d in 1..3")
    x = _as_cyclic(a)
    M = x.size
    if M > BRUTE_MAX_MODULUS[d]:
        raise CostGuardError(f"brute U_{d} limited to M <= {BRUTE_MAX_MODULUS[d]}, got {M}")
    # the cube product splits as D(n, h') * conj D(n + h_1, h') with h' = (h_2..h_d)
    # and D the (d-1)-cube product; build D by direct gathers, then sum every term
    grids = np.meshgrid(*([np.arange(M)] * d), indexing="ij")
    hs_rest, ngrid = grids[:-1], grids[-1]
    D = np.ones(ngrid.shape, dtype=complex)
    for omega in itertools.product((0, 1), repeat=d - 1):
        idx = ngrid + sum(hk for w, hk in zip(omega, hs_rest) if w)
        vals = x[idx % M]
        D *= np.conj(vals) if sum(omega) % 2 else vals
    D = D.reshape(-1, M)
    total = 0.0 + 0.0j
    for h1 in range(M):
        total += np.vdot(np.roll(D, -h1, axis=1), D)
    p = (total / M ** (d + 1)).real
    return max(p, 0.0) ** (1.0 / 2 ** d)


def u2_fourier(a) -> float:
    """(sum_xi |a^(xi)|^4)^(1/4) with a^(xi) = E_n a(n) e(-n xi / M), by explicit DFT."""
    x = _as_cyclic(a)
    M = x.size
    n = np.arange(M)
    omega = np.exp(-2j * np.pi * np.outer(n, n) / M)
    ah = omega @ x / M
    return float(np.sum(np.abs(ah) ** 4)) ** 0.25


def gowers_sampled(a, d: int, samples: int = 200_000, seed: int = 0) -> float:
    """Monte Carlo estimate of ||a||_{U_d} from random cubes (n, h_1..h_d)."""
    x = _as_cyclic(a)
    M = x.size
    rng = np.random.default_rng(seed)
    pts = rng.integers(0, M, size=(samples, d + 1))
    xc = np.conj(x)
    prod = np.ones(samples, dtype=complex)
    for omega in itertools.product((0, 1), repeat=d):
        idx = pts[:, 0] + pts[:, 1:] @ np.array(omega, dtype=np.int64)
        prod *= (xc if sum(omega) % 2 else x)[idx % M]
    p = prod.real.mean()
    return max(p, 0.0) ** (1.0 / 2 ** d)


class VdcBound(NamedTuple):
    lhs: float
    rhs: float


VDC_CONSTANT = 4.0


def vdc_inequality(v: VectorSequence) -> VdcBound:
    """Both sides of the van der Corput estimate with H = N, constant omitted.

    lhs = ||(1/N) sum v(n)||^2
    rhs = (1/N^2) sum ||v(n)||^2 + (1/N) sum_{h=1}^N |(1/N) sum_{n=1}^{N-h} <v(n+h), v(n)>|
    """
    x = v.vectors
    N = v.N
    lhs = float(np.sum(np.abs(x.mean(axis=0)) ** 2))
    L = 1 << int(np.ceil(np.log2(2 * N)))
    X = np.fft.fft(x, n=L, axis=0)
    # corr[h] = sum_n x(n+h) conj(x(n)), summed over coordinates
    corr = np.fft.ifft(X * np.conj(X), axis=0).sum(axis=1)
    energy = float(np.sum(np.abs(x) ** 2))
    lags = np.abs(corr[1:N]) / N
    rhs = energy / N ** 2 + float(lags.sum()) / N
    return VdcBound(lhs, rhs)


class IdentityCheck(NamedTuple):
    restricted: float
    truncated: float


def _values(a) -> np.ndarray:
    if isinstance(a, ArithSequence):
        return a.values
    return np.asarray(a, dtype=complex).reshape(-1)


def example_identity_check(a, N: int | None = None) -> IdentityCheck:
    """The two sides of the no-wraparound identity for the U_3 cube on Z_{3N}.

    restricted: (1/(9N^2)) sum_{1<=h1,h2<=N} |E_{n in Z_3N} a_N(n) conj a_N(n+h1)
                conj a_N(n+h2) a_N(n+h1+h2)|^2 with cyclic sums
    truncated:  (1/(81N^2)) sum_{1<=h1,h2<=N} |(1/N) sum_{n=1}^{N-h1-h2} ...|^2
                with plain integer sums
    """
    x = _values(a)
    if N is None:
        N = x.size
    x = x[:N]
    if x.size != N:
        raise ValueError(f"need {N} values, got {x.size}")
    return IdentityCheck(_restricted_cube(x), _truncated_cube(x))


def _restricted_cube(x: np.ndarray) -> float:
    N = x.size
    M = 3 * N
    y = np.zeros(M, dtype=complex)
    y[:N] = x
    yc = np.conj(y)
    n = np.arange(M)
    h2 = np.arange(1, N + 1)
    i2 = (n[None, :] + h2[:, None]) % M
    total = 0.0
    for h1 in range(1, N + 1):
        i1 = (n + h1) % M
        i12 = (n[None, :] + h1 + h2[:, None]) % M
        inner = (y[None, :] * yc[i1][None, :] * yc[i2] * y[i12]).mean(axis=1)
        total += float(np.sum(np.abs(inner) ** 2))
    return total / (9 * N * N)


def _truncated_inner(x: np.ndarray) -> np.ndarray:
    """(1/N) sum_{n=1}^{N-h1-h2} a(n) conj a(n+h1) conj a(n+h2) a(n+h1+h2), grid h1,h2=1..N."""
    N = x.size
    xc = np.conj(x)
    out = np.zeros((N, N), dtype=complex)
    for h1 in range(1, N):
        for h2 in range(1, N - h1):
            L = N - h1 - h2
            out[h1 - 1, h2 - 1] = np.sum(
                x[:L] * xc[h1:h1 + L] * xc[h2:h2 + L] * x[h1 + h2:h1 + h2 + L]
            ) / N
    return out


def _truncated_cube(x: np.ndarray) -> float:
    N = x.size
    inner = _truncated_inner(x)
    return float(np.sum(np.abs(inner) ** 2)) / (81 * N * N)


def e11_average(a, N: int | None = None) -> float:
    """(1/N^2) sum_{1<=h1,h2<=N} |(1/N) sum_{n<=N-h1-h2} ...|^2, i.e. 81 x truncated."""
    x = _values(a)
    x = x[: (N or x.size)]
    inner = _truncated_inner(x)
    return float(np.sum(np.abs(inner) ** 2)) / x.size ** 2


def inner_average_table(a) -> list[tuple[int, int, complex]]:
    """(h1, h2, inner truncated average) rows for plotting."""
    inner = _truncated_inner(_values(a))
    N = inner.shape[0]
    return [(h1, h2, complex(inner[h1 - 1, h2 - 1]))
            for h1 in range(1, N + 1) for h2 in range(1, N + 1)]


def write_inner_table_csv(path, rows: Sequence[tuple[int, int, complex]]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["h1", "h2", "re", "im", "abs2"])
        for h1, h2, z in rows:
            w.writerow([h1, h2, repr(z.real), repr(z.imag), repr(abs(z) ** 2)])
