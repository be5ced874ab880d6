"""Polynomial patterns in finite windows of Z^ell.

A :class:`WindowedSet` is a boolean mask over a box of lattice points. The
intersection ``E & (E - q_1(n)) & ... & (E - q_m(n))`` is counted on the part of
the box where every shifted copy still fits, so no wraparound happens unless a
torus model is requested explicitly.
"""

from __future__ import annotations

import logging
import math
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .dynamics import EventSet, FiniteSystem, torus_shifts
from .errors import CostGuardError, InputError, WindowExhausted
from .pet import parse_poly
from .primes import WTrickTable

log = logging.getLogger(__name__)

MAX_VOLUME = 10**7


@dataclass(frozen=True, eq=False)
class WindowedSet:
    """Members of a box ``prod_k [lo_k, hi_k]`` (inclusive), stored as a mask."""

    window: tuple[tuple[int, int], ...]
    mask: np.ndarray

    def __post_init__(self):
        window = tuple((int(lo), int(hi)) for lo, hi in self.window)
        if not window or any(hi < lo for lo, hi in window):
            raise ValueError(f"bad window {self.window}")
        shape = tuple(hi - lo + 1 for lo, hi in window)
        if math.prod(shape) > MAX_VOLUME:
            raise CostGuardError(f"window volume {math.prod(shape)} exceeds {MAX_VOLUME}")
        mask = np.asarray(self.mask, dtype=bool)
        if mask.shape != shape:
            raise ValueError(f"mask shape {mask.shape} does not match window shape {shape}")
        mask.setflags(write=False)
        object.__setattr__(self, "window", window)
        object.__setattr__(self, "mask", mask)

    @property
    def ell(self) -> int:
        return len(self.window)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.mask.shape

    @property
    def volume(self) -> int:
        return self.mask.size

    def __len__(self) -> int:
        return int(self.mask.sum())

    @classmethod
    def from_points(cls, window, points: Iterable[Sequence[int]]) -> "WindowedSet":
        window = tuple((int(lo), int(hi)) for lo, hi in window)
        shape = tuple(hi - lo + 1 for lo, hi in window)
        mask = np.zeros(shape, dtype=bool)
        pts = np.asarray(list(points), dtype=np.int64).reshape(-1, len(window))
        lo = np.array([w[0] for w in window])
        hi = np.array([w[1] for w in window])
        outside = np.any((pts < lo) | (pts > hi), axis=1)
        if outside.any():
            raise ValueError(f"point {pts[outside][0].tolist()} lies outside the window {window}")
        mask[tuple((pts - lo).T)] = True
        return cls(window, mask)

    @classmethod
    def random(cls, window, density: float, seed: int = 0) -> "WindowedSet":
        """Each point is a member independently with probability ``density``."""
        if not 0 <= density <= 1:
            raise ValueError("density must lie in [0, 1]")
        window = tuple((int(lo), int(hi)) for lo, hi in window)
        shape = tuple(hi - lo + 1 for lo, hi in window)
        rng = np.random.default_rng(seed)
        return cls(window, rng.random(shape) < density)

    @classmethod
    def full(cls, window) -> "WindowedSet":
        shape = tuple(hi - lo + 1 for lo, hi in window)
        return cls(window, np.ones(shape, dtype=bool))

    @classmethod
    def multiples(cls, window, k: int) -> "WindowedSet":
        """Points whose coordinates are all divisible by ``k``."""
        window = tuple((int(lo), int(hi)) for lo, hi in window)
        axes = [np.arange(lo, hi + 1) % k == 0 for lo, hi in window]
        mask = axes[0]
        for ax in axes[1:]:
            mask = np.multiply.outer(mask, ax)
        return cls(window, mask)

    def points(self) -> np.ndarray:
        lo = np.array([w[0] for w in self.window])
        return np.argwhere(self.mask) + lo

    def contains(self, x: Sequence[int]) -> bool:
        idx = tuple(int(c) - lo for c, (lo, _) in zip(x, self.window))
        if any(not 0 <= i < s for i, s in zip(idx, self.shape)):
            return False
        return bool(self.mask[idx])

    def density(self) -> float:
        return float(self.mask.mean())

    def translated(self, v: Sequence[int]) -> "WindowedSet":
        window = tuple((lo + int(c), hi + int(c)) for (lo, hi), c in zip(self.window, v))
        return WindowedSet(window, self.mask)

    def dyadic_density(self, min_side: int = 16) -> float:
        """Largest density over the dyadic sub-boxes whose sides are >= ``min_side``."""
        best = self.density()
        k = 1
        while all(s >> k >= min_side for s in self.shape):
            parts = 1 << k
            edges = [np.linspace(0, s, parts + 1).astype(int) for s in self.shape]
            for cell in np.ndindex(*([parts] * self.ell)):
                sl = tuple(slice(e[c], e[c + 1]) for e, c in zip(edges, cell))
                best = max(best, float(self.mask[sl].mean()))
            k += 1
        return best

    def to_json(self) -> dict:
        return {"window": [list(w) for w in self.window], "points": self.points().tolist()}


@dataclass(frozen=True)
class PatternSpec:
    """Polynomial maps q_j: Z -> Z^ell with q_j(0) = 0, as ascending coefficient lists."""

    polys: tuple[tuple[tuple[int, ...], ...], ...]

    def __post_init__(self):
        if not self.polys:
            raise ValueError("a pattern needs at least one polynomial map")
        polys = tuple(tuple(tuple(int(c) for c in comp) for comp in q) for q in self.polys)
        ells = {len(q) for q in polys}
        if len(ells) != 1:
            raise ValueError("every polynomial map needs the same number of components")
        for j, q in enumerate(polys):
            for comp in q:
                if comp and comp[0] != 0:
                    raise ValueError(f"map {j + 1} has a nonzero constant term")
        object.__setattr__(self, "polys", polys)

    @property
    def ell(self) -> int:
        return len(self.polys[0])

    @property
    def m(self) -> int:
        return len(self.polys)

    @classmethod
    def parse(cls, text: str) -> "PatternSpec":
        """``"n^2;n"`` gives two maps into Z; ``"(n,0);(0,n^2)"`` two maps into Z^2."""
        maps = []
        for part in text.split(";"):
            part = part.strip()
            if not part:
                raise ValueError(f"empty polynomial in {text!r}")
            if part.startswith("(") and part.endswith(")"):
                part = part[1:-1]
            maps.append(tuple(tuple(parse_poly(c)) for c in part.split(",")))
        return cls(tuple(maps))

    def shifts(self, n: int) -> list[tuple[int, ...]]:
        """The vectors q_j(n), exactly."""
        out = []
        for q in self.polys:
            vec = []
            for comp in q:
                acc = 0
                for c in reversed(comp):
                    acc = acc * n + c
                vec.append(acc)
            out.append(tuple(vec))
        return out

    def subset(self, k: int) -> "PatternSpec":
        """The first ``k`` maps."""
        return PatternSpec(self.polys[:k])


def _valid_slices(E: WindowedSet, shifts: list[tuple[int, ...]]):
    """Base slice of points x with x + v in the window for every shift v, and the shifted slices."""
    base, moved = [], [[] for _ in shifts]
    for k, size in enumerate(E.shape):
        comps = [v[k] for v in shifts]
        lo = max(0, -min(comps, default=0))
        hi = size - max(0, max(comps, default=0))
        if hi <= lo:
            raise WindowExhausted(
                f"shifts {shifts} leave no room in axis {k} of length {size}"
            )
        base.append(slice(lo, hi))
        for j, c in enumerate(comps):
            moved[j].append(slice(lo + c, hi + c))
    return tuple(base), [tuple(m) for m in moved]


def intersection_density(E: WindowedSet, spec: PatternSpec, n: int) -> float:
    """Density of E & (E - q_1(n)) & ... & (E - q_m(n)) on the common valid sub-window."""
    if spec.ell != E.ell:
        raise ValueError(f"pattern maps into Z^{spec.ell} but the set lives in Z^{E.ell}")
    base, moved = _valid_slices(E, spec.shifts(n))
    hit = E.mask[base].copy()
    for sl in moved:
        hit &= E.mask[sl]
    return float(hit.mean())


@dataclass
class SearchResult:
    shift: int
    threshold: float
    rows: list[tuple[int, int, float]]  # (prime, n, density) for qualifying primes
    checked: int
    skipped: int

    @property
    def primes(self) -> list[int]:
        return [p for p, _, _ in self.rows]

    def to_json(self) -> dict:
        return {
            "shift": self.shift,
            "threshold": self.threshold,
            "checked": self.checked,
            "skipped": self.skipped,
            "qualifying": len(self.rows),
            "rows": [{"prime": p, "n": n, "density": d} for p, n, d in self.rows],
        }


def shifted_prime_search(
    E: WindowedSet,
    spec: PatternSpec,
    table: WTrickTable,
    shift: int,
    threshold: float,
    p_max: int | None = None,
    workers: int = 1,
) -> SearchResult:
    """Primes p <= p_max whose pattern intersection at n = p + shift is dense enough.

    A prime qualifies when the density is >= ``threshold`` and positive, so a
    threshold of 0 asks for a nonempty intersection. Primes whose shifts do not
    fit the window are skipped and counted.
    """
    if shift not in (-1, 1):
        raise ValueError("shift must be -1 or +1")
    if p_max is None:
        p_max = table.limit
    if p_max > table.limit:
        raise IndexError(f"table limit {table.limit} is below p_max = {p_max}")
    primes = [int(p) for p in table.primes_upto(p_max)]

    def one(p: int):
        try:
            return intersection_density(E, spec, p + shift)
        except WindowExhausted:
            return None

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            dens = list(pool.map(one, primes))
    else:
        dens = [one(p) for p in primes]
    rows, skipped = [], 0
    for p, d in zip(primes, dens):
        if d is None:
            skipped += 1
        elif d > 0 and d >= threshold:
            rows.append((p, p + shift, d))
    if skipped:
        log.warning("skipped %d of %d primes whose shifts leave the window", skipped, len(primes))
    return SearchResult(shift, threshold, rows, len(primes) - skipped, skipped)


@dataclass
class CorrespondenceResult:
    combinatorial: float
    dynamical: float
    epsilon: float

    @property
    def holds(self) -> bool:
        return self.combinatorial >= self.dynamical - self.epsilon

    def to_json(self) -> dict:
        return {
            "combinatorial": self.combinatorial,
            "dynamical": self.dynamical,
            "epsilon": self.epsilon,
            "holds": self.holds,
        }


def torus_model(E: WindowedSet) -> tuple[FiniteSystem, EventSet]:
    """E as an event in the unit coordinate shifts on its window viewed as a torus."""
    return torus_shifts(E.shape), EventSet(E.mask.reshape(-1))


def correspondence_check(E: WindowedSet, spec: PatternSpec, n: int) -> CorrespondenceResult:
    """Windowed intersection density against the torus measure of the same pattern.

    ``epsilon`` is the fraction of the window lying outside the valid sub-window;
    the torus and windowed counts can differ only there.
    """
    shifts = spec.shifts(n)
    comb = intersection_density(E, spec, n)
    base, _ = _valid_slices(E, shifts)
    inner = math.prod(s.stop - s.start for s in base)
    hit = E.mask.copy()
    for v in shifts:
        hit &= np.roll(E.mask, tuple(-c for c in v), axis=tuple(range(E.ell)))
    dyn = float(hit.mean())
    eps = (E.volume - inner) / E.volume
    return CorrespondenceResult(comb, dyn, eps)


_WINDOW = re.compile(r"^window\s+(.*)$")
_RANDOM = re.compile(r"^random\s+(.*)$")


def _parse_window(text: str, lineno: int):
    parts = text.split()
    window = []
    for part in parts:
        if ":" not in part:
            raise InputError(f"line {lineno}: window axes look like lo:hi, got {part!r}")
        lo, hi = part.split(":", 1)
        try:
            window.append((int(lo), int(hi)))
        except ValueError:
            raise InputError(f"line {lineno}: non-integer window bound in {part!r}") from None
        if window[-1][1] < window[-1][0]:
            raise InputError(f"line {lineno}: empty window axis {part!r}")
    if not window:
        raise InputError(f"line {lineno}: window needs at least one axis")
    return tuple(window)


def parse_set_text(text: str) -> WindowedSet:
    """Read a set description.

    Lines hold integer points (coordinates split by spaces or commas). Optional
    directives: ``window lo:hi [lo:hi ...]`` fixes the box (otherwise the
    bounding box of the points is used), and ``random density=D seed=S`` replaces
    the point list by a reproducible random set. ``#`` starts a comment.
    """
    window = None
    rand = None
    points: list[tuple[int, ...]] = []
    dim = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if mw := _WINDOW.match(line):
            if window is not None:
                raise InputError(f"line {lineno}: window given twice")
            window = _parse_window(mw.group(1), lineno)
            continue
        if mr := _RANDOM.match(line):
            opts = dict(kv.split("=", 1) for kv in mr.group(1).split() if "=" in kv)
            try:
                rand = (float(opts["density"]), int(opts.get("seed", 0)))
            except (KeyError, ValueError):
                raise InputError(f"line {lineno}: expected random density=D seed=S") from None
            continue
        try:
            pt = tuple(int(tok) for tok in re.split(r"[,\s]+", line.strip(", \t")))
        except ValueError:
            raise InputError(f"line {lineno}: not an integer point: {raw.strip()!r}") from None
        if dim is None:
            dim = len(pt)
        elif len(pt) != dim:
            raise InputError(f"line {lineno}: point has {len(pt)} coordinates, expected {dim}")
        points.append(pt)
    if rand is not None:
        if window is None:
            raise InputError("a random set needs a window line")
        if points:
            raise InputError("a random set cannot also list points")
        return WindowedSet.random(window, *rand)
    if window is None:
        if not points:
            raise InputError("no points and no window")
        arr = np.array(points)
        window = tuple(zip(arr.min(axis=0).tolist(), arr.max(axis=0).tolist()))
    if dim is not None and dim != len(window):
        raise InputError(f"points have {dim} coordinates but the window has {len(window)} axes")
    try:
        return WindowedSet.from_points(window, points)
    except ValueError as exc:
        raise InputError(str(exc)) from None


def load_set(path: str | Path) -> WindowedSet:
    path = Path(path)
    try:
        return parse_set_text(path.read_text())
    except InputError as exc:
        raise InputError(f"{path}: {exc}") from None
