"""PET induction on families of polynomial tuples.

Polynomials live in Z[h][n]: the coefficient of each power of ``n`` is itself an
integer polynomial in a formal shift variable ``h``.  A van der Corput step with
formal ``h`` therefore describes every integer choice of ``h`` at once, up to
finitely many exceptional values (see :func:`specialization_defects`).

Repeated steps all use the same formal symbol, so a trace describes the runs in
which every differencing uses the same integer ``h``.  Leading coefficients are
compared as polynomials in ``h``.

Column indices in the public API (``tuple_index``) are 1-based.
"""

from __future__ import annotations

import math
import re
import time
from dataclasses import dataclass, field
from typing import Iterable, Sequence, Union

from .errors import CostGuardError, NoReducingTuple

HPoly = tuple[int, ...]
Shift = Union[int, str]

FORMAL_H = "h"


def _trim(c: Iterable[int]) -> HPoly:
    c = [int(x) for x in c]
    while c and c[-1] == 0:
        c.pop()
    return tuple(c)


def _hadd(a: HPoly, b: HPoly) -> HPoly:
    if len(a) < len(b):
        a, b = b, a
    out = list(a)
    for k, x in enumerate(b):
        out[k] += x
    return _trim(out)


def _hneg(a: HPoly) -> HPoly:
    return tuple(-x for x in a)


def _heval(a: HPoly, h0: int) -> int:
    acc = 0
    for x in reversed(a):
        acc = acc * h0 + x
    return acc


def _hstr(a: HPoly) -> str:
    terms = []
    for k in range(len(a) - 1, -1, -1):
        c = a[k]
        if c == 0:
            continue
        if k == 0:
            terms.append(str(c))
        else:
            mono = "h" if k == 1 else f"h^{k}"
            terms.append(mono if c == 1 else "-" + mono if c == -1 else f"{c}{mono}")
    return "+".join(terms).replace("+-", "-") if terms else "0"


def _is_formal(h: Shift) -> bool:
    if isinstance(h, str):
        if h != FORMAL_H:
            raise ValueError(f"shift must be an integer or {FORMAL_H!r}, got {h!r}")
        return True
    return False


@dataclass(frozen=True)
class ShiftPoly:
    """Polynomial in ``n`` whose k-th coefficient is an integer polynomial in ``h``.

    ``coeffs[k]`` multiplies ``n**k`` and lists its own coefficients in ascending
    powers of ``h``.  Trailing zeros at both levels are stripped on construction,
    so the zero polynomial has ``coeffs == ()`` and degree -1.
    """

    coeffs: tuple[HPoly, ...] = ()

    def __post_init__(self):
        cs = [_trim(c) for c in self.coeffs]
        while cs and not cs[-1]:
            cs.pop()
        object.__setattr__(self, "coeffs", tuple(cs))

    @classmethod
    def from_ints(cls, ints: Sequence[int]) -> "ShiftPoly":
        """Numeric polynomial from coefficients of ``n`` in ascending order."""
        return cls(tuple((int(c),) for c in ints))

    @classmethod
    def zero(cls) -> "ShiftPoly":
        return cls(())

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    @property
    def leading(self) -> HPoly:
        return self.coeffs[-1] if self.coeffs else ()

    @property
    def is_constant(self) -> bool:
        return self.degree <= 0

    @property
    def is_zero(self) -> bool:
        return not self.coeffs

    @property
    def is_numeric(self) -> bool:
        return all(len(c) <= 1 for c in self.coeffs)

    def int_coeffs(self) -> list[int]:
        if not self.is_numeric:
            raise ValueError(f"{self} depends on h")
        return [c[0] if c else 0 for c in self.coeffs]

    def __add__(self, other: "ShiftPoly") -> "ShiftPoly":
        n = max(len(self.coeffs), len(other.coeffs))
        a = self.coeffs + ((),) * (n - len(self.coeffs))
        b = other.coeffs + ((),) * (n - len(other.coeffs))
        return ShiftPoly(tuple(_hadd(x, y) for x, y in zip(a, b)))

    def __neg__(self) -> "ShiftPoly":
        return ShiftPoly(tuple(_hneg(c) for c in self.coeffs))

    def __sub__(self, other: "ShiftPoly") -> "ShiftPoly":
        return self + (-other)

    def shift(self, h: Shift = FORMAL_H) -> "ShiftPoly":
        """Return ``n -> p(n + h)``."""
        formal = _is_formal(h)
        d = self.degree
        out: list[HPoly] = [()] * (d + 1)
        for k, ck in enumerate(self.coeffs):
            if not ck:
                continue
            for j in range(k + 1):
                binom = math.comb(k, j)
                if formal:
                    term = (0,) * (k - j) + tuple(binom * x for x in ck)
                else:
                    term = tuple(binom * h ** (k - j) * x for x in ck)
                out[j] = _hadd(out[j], term)
        return ShiftPoly(tuple(out))

    def at_h(self, h0: int) -> "ShiftPoly":
        """Substitute the integer ``h0`` for the formal variable."""
        return ShiftPoly(tuple((_heval(c, h0),) for c in self.coeffs))

    def without_constant(self) -> "ShiftPoly":
        if not self.coeffs:
            return self
        return ShiftPoly(((),) + self.coeffs[1:])

    def evaluate(self, n: int, h0: int | None = None) -> int:
        if h0 is None:
            cs = self.int_coeffs()
        else:
            cs = [_heval(c, h0) for c in self.coeffs]
        acc = 0
        for c in reversed(cs):
            acc = acc * n + c
        return acc

    def to_json(self) -> list[list[int]]:
        return [list(c) for c in self.coeffs]

    @classmethod
    def from_json(cls, data) -> "ShiftPoly":
        if not isinstance(data, list) or not all(isinstance(c, list) for c in data):
            raise ValueError(f"polynomial must be a list of coefficient arrays, got {data!r}")
        for c in data:
            if not all(isinstance(x, int) and not isinstance(x, bool) for x in c):
                raise ValueError(f"coefficients must be integers, got {c!r}")
        return cls(tuple(tuple(c) for c in data))

    def __str__(self) -> str:
        terms = []
        for k in range(self.degree, -1, -1):
            c = self.coeffs[k]
            if not c:
                continue
            cs = _hstr(c)
            if k == 0:
                terms.append(cs if len(c) == 1 else f"({cs})")
                continue
            mono = "n" if k == 1 else f"n^{k}"
            if cs == "1":
                terms.append(mono)
            elif cs == "-1":
                terms.append("-" + mono)
            elif len(c) == 1:
                terms.append(f"{cs}{mono}")
            else:
                terms.append(f"({cs}){mono}")
        return " + ".join(terms).replace("+ -", "- ") if terms else "0"


def shift(p: ShiftPoly, h: Shift = FORMAL_H) -> ShiftPoly:
    return p.shift(h)


def equivalent(p: ShiftPoly, q: ShiftPoly) -> bool:
    """Same degree and same leading coefficient (as polynomials in h).

    Two constants count as equivalent; a constant and a nonconstant never do.
    """
    if p.is_constant or q.is_constant:
        return p.is_constant and q.is_constant
    return p.degree == q.degree and p.leading == q.leading


@dataclass(frozen=True)
class PolyFamily:
    """ell x m grid of polynomials; column j is the j-th polynomial ell-tuple."""

    entries: tuple[tuple[ShiftPoly, ...], ...]

    def __post_init__(self):
        rows = tuple(tuple(r) for r in self.entries)
        if not rows or not rows[0]:
            raise ValueError("a family needs ell >= 1 rows and m >= 1 columns")
        if any(len(r) != len(rows[0]) for r in rows):
            raise ValueError("family rows have different lengths")
        object.__setattr__(self, "entries", rows)

    @property
    def ell(self) -> int:
        return len(self.entries)

    @property
    def m(self) -> int:
        return len(self.entries[0])

    @property
    def degree(self) -> int:
        return max(p.degree for row in self.entries for p in row)

    @property
    def is_numeric(self) -> bool:
        return all(p.is_numeric for row in self.entries for p in row)

    def column(self, j: int) -> tuple[ShiftPoly, ...]:
        """0-based column access."""
        return tuple(row[j] for row in self.entries)

    def columns(self) -> list[tuple[ShiftPoly, ...]]:
        return [self.column(j) for j in range(self.m)]

    @classmethod
    def from_columns(cls, cols: Sequence[Sequence[ShiftPoly]]) -> "PolyFamily":
        if not cols:
            raise ValueError("a family needs at least one column")
        ell = len(cols[0])
        return cls(tuple(tuple(c[i] for c in cols) for i in range(ell)))

    @classmethod
    def from_numeric(cls, rows: Sequence[Sequence[Sequence[int]]]) -> "PolyFamily":
        """``rows[i][j]`` lists the integer coefficients of q_{i,j} in ascending powers of n."""
        return cls(tuple(tuple(ShiftPoly.from_ints(c) for c in row) for row in rows))

    def at_h(self, h0: int) -> "PolyFamily":
        return PolyFamily(tuple(tuple(p.at_h(h0) for p in row) for row in self.entries))

    def normalized(self) -> "PolyFamily":
        """Strip constant terms, merge identical columns, drop all-zero columns.

        A constant offset in an iterate can be absorbed into the function it acts
        on, and two functions sitting on the same iterate multiply into one, so
        this rewrite leaves the controlled average unchanged in kind.  The type is
        unchanged.  An all-constant family collapses to a single zero column.
        """
        seen = set()
        cols = []
        for col in self.columns():
            col = tuple(p.without_constant() for p in col)
            if all(p.is_zero for p in col) or col in seen:
                continue
            seen.add(col)
            cols.append(col)
        if not cols:
            cols = [tuple(ShiftPoly.zero() for _ in range(self.ell))]
        return PolyFamily.from_columns(cols)

    def to_json(self) -> dict:
        return {
            "ell": self.ell,
            "m": self.m,
            "entries": [[p.to_json() for p in row] for row in self.entries],
        }

    @classmethod
    def from_json(cls, data: dict) -> "PolyFamily":
        try:
            ell, m, entries = data["ell"], data["m"], data["entries"]
        except (KeyError, TypeError) as exc:
            raise ValueError(f"family JSON needs ell, m, entries: {exc}") from None
        fam = cls(tuple(tuple(ShiftPoly.from_json(p) for p in row) for row in entries))
        if fam.ell != ell or fam.m != m:
            raise ValueError(f"declared shape {ell}x{m} but entries are {fam.ell}x{fam.m}")
        return fam

    def __str__(self) -> str:
        cols = ["(" + ", ".join(str(p) for p in c) + ")" for c in self.columns()]
        return "[" + "; ".join(cols) + "]"


@dataclass(frozen=True)
class TypeMatrix:
    """Rows i = 1..ell; row i lists w_{i,s}, ..., w_{i,1} (degree s first)."""

    w: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        rows = tuple(tuple(int(x) for x in r) for r in self.w)
        if not rows or not rows[0] or any(len(r) != len(rows[0]) for r in rows):
            raise ValueError("type matrix must be a non-empty rectangle")
        if any(x < 0 for r in rows for x in r):
            raise ValueError("type matrix entries are nonnegative")
        object.__setattr__(self, "w", rows)

    @property
    def ell(self) -> int:
        return len(self.w)

    @property
    def s(self) -> int:
        return len(self.w[0])

    @property
    def is_zero(self) -> bool:
        return not any(x for r in self.w for x in r)

    def entry(self, i: int, degree: int) -> int:
        """w_{i,degree} with 1-based row index."""
        return self.w[i - 1][self.s - degree]

    def __lt__(self, other: "TypeMatrix") -> bool:
        return type_less(self, other)

    def to_json(self) -> list[list[int]]:
        return [list(r) for r in self.w]

    def __str__(self) -> str:
        return "[" + " / ".join(" ".join(map(str, r)) for r in self.w) + "]"


def type_less(a: TypeMatrix, b: TypeMatrix) -> bool:
    if (a.ell, a.s) != (b.ell, b.s):
        raise ValueError(f"type shapes differ: {a.ell}x{a.s} vs {b.ell}x{b.s}")
    # rows are stored degree-descending, so tuple order is the row-major lex order
    return a.w < b.w


def family_type(f: PolyFamily, s: int | None = None) -> TypeMatrix:
    deg = f.degree
    if s is None:
        s = max(1, deg)
    if s < 1 or s < deg:
        raise ValueError(f"degree bound s={s} is below the family degree {deg}")
    rows = []
    earlier_constant = [True] * f.m
    for i in range(f.ell):
        classes: dict[int, set[HPoly]] = {}
        for j, p in enumerate(f.entries[i]):
            if earlier_constant[j] and not p.is_constant:
                classes.setdefault(p.degree, set()).add(p.leading)
        rows.append(tuple(len(classes.get(k, ())) for k in range(s, 0, -1)))
        for j, p in enumerate(f.entries[i]):
            if not p.is_constant:
                earlier_constant[j] = False
    return TypeMatrix(tuple(rows))


def vdc_operation(f: PolyFamily, tuple_index: int, h: Shift = FORMAL_H) -> PolyFamily:
    """Replace each row Q_i by the concatenation (S_h Q_i - q_i, Q_i - q_i)."""
    if not 1 <= tuple_index <= f.m:
        raise IndexError(f"tuple_index {tuple_index} outside 1..{f.m}")
    chosen = f.column(tuple_index - 1)
    rows = []
    for row, qi in zip(f.entries, chosen):
        rows.append(tuple(p.shift(h) - qi for p in row) + tuple(p - qi for p in row))
    return PolyFamily(tuple(rows))


def _column_score(col: Sequence[ShiftPoly], j: int) -> tuple[float, float, int]:
    # last row with a nonconstant entry first: subtracting such a column leaves
    # every earlier row untouched, so the type is guaranteed to drop there
    for i, p in enumerate(col):
        if not p.is_constant:
            return (-i, p.degree, j)
    return (math.inf, math.inf, j)


def choose_reducing_tuple(f: PolyFamily, s: int | None = None) -> int:
    """1-based index of a column whose formal-h vdC strictly lowers the type.

    Candidates are ordered by (row of the first nonconstant entry, descending;
    its degree; column index) and each is accepted only after comparing type
    matrices.  Every column is tried before giving up.
    """
    if s is None:
        s = max(1, f.degree)
    before = family_type(f, s)
    if before.is_zero:
        raise ValueError("family has type zero; nothing to reduce")
    order = sorted(range(f.m), key=lambda j: _column_score(f.column(j), j))
    for j in order:
        after = family_type(vdc_operation(f, j + 1), s)
        if type_less(after, before):
            return j + 1
    raise NoReducingTuple(f"no column of {f} lowers type {before}")


def specialization_defects(
    f: PolyFamily, tuple_index: int, hs: Iterable[int], s: int | None = None
) -> list[int]:
    """Integers h whose specialized vdC type differs from the generic one.

    The family's own h-dependence is evaluated at the same integer.
    """
    if s is None:
        s = max(1, f.degree)
    generic = family_type(vdc_operation(f, tuple_index), s)
    bad = []
    for h0 in hs:
        t = family_type(vdc_operation(f.at_h(h0), tuple_index, h0), s)
        if t != generic:
            bad.append(h0)
    return bad


@dataclass(frozen=True)
class PetStep:
    tuple_index: int
    h: Shift
    type: TypeMatrix
    columns: int


@dataclass(frozen=True)
class PetTrace:
    initial_type: TypeMatrix
    steps: tuple[PetStep, ...]
    s: int
    final_family: PolyFamily | None = field(default=None, compare=False)

    @property
    def degree_d(self) -> int:
        return len(self.steps)

    @property
    def gowers_degree(self) -> int:
        # d rounds of differencing land in U_{d+1}
        return len(self.steps) + 1

    def types(self) -> list[TypeMatrix]:
        return [self.initial_type] + [st.type for st in self.steps]

    def to_json(self) -> dict:
        return {
            "s": self.s,
            "initial_type": self.initial_type.to_json(),
            "steps": [
                {"step": k + 1, "tuple_index": st.tuple_index, "h": st.h,
                 "type": st.type.to_json(), "columns": st.columns}
                for k, st in enumerate(self.steps)
            ],
            "degree_d": self.degree_d,
            "gowers_degree": self.gowers_degree,
        }


# Raw fast path for pet_reduce: a polynomial is a tuple of h-coefficient tuples,
# already trimmed and with its constant term in n removed.

_BINOM = [[math.comb(k, j) for j in range(k + 1)] for k in range(64)]


def _raw_norm(cs: list[HPoly]) -> tuple[HPoly, ...]:
    if cs:
        cs[0] = ()
    while cs and not cs[-1]:
        cs.pop()
    return tuple(cs)


def _raw_shift_sub(p: tuple[HPoly, ...], q: tuple[HPoly, ...]) -> tuple[HPoly, ...]:
    """Normalized form of S_h p - q."""
    out: list[list[int]] = [[] for _ in range(max(len(p), len(q)))]
    for k, ck in enumerate(p):
        if not ck:
            continue
        row = _BINOM[k]
        for j in range(1, k + 1):
            acc = out[j]
            off = k - j
            need = off + len(ck)
            if len(acc) < need:
                acc.extend([0] * (need - len(acc)))
            b = row[j]
            for t, x in enumerate(ck):
                acc[off + t] += b * x
    for j, cq in enumerate(q):
        acc = out[j]
        if len(acc) < len(cq):
            acc.extend([0] * (len(cq) - len(acc)))
        for t, x in enumerate(cq):
            acc[t] -= x
    return _raw_norm([_trim(c) for c in out])


def _raw_sub(p: tuple[HPoly, ...], q: tuple[HPoly, ...]) -> tuple[HPoly, ...]:
    n = max(len(p), len(q))
    out = []
    for j in range(n):
        a = p[j] if j < len(p) else ()
        b = q[j] if j < len(q) else ()
        out.append(_hadd(a, _hneg(b)))
    return _raw_norm(out)


def _raw_key(col) -> tuple | None:
    for i, p in enumerate(col):
        if len(p) >= 2:
            return (i, len(p) - 1, p[-1])
    return None


def _raw_type(keys, ell: int, s: int) -> TypeMatrix:
    classes = set(k for k in keys if k is not None)
    w = [[0] * s for _ in range(ell)]
    for i, deg, _ in classes:
        w[i][s - deg] += 1
    return TypeMatrix(tuple(tuple(r) for r in w))


def _raw_vdc(cols, j: int):
    q = cols[j]
    shifted = [tuple(_raw_shift_sub(p, qi) for p, qi in zip(col, q)) for col in cols]
    plain = [tuple(_raw_sub(p, qi) for p, qi in zip(col, q)) for col in cols]
    return shifted + plain


def _raw_normalized(cols):
    out = dict.fromkeys(c for c in cols if any(c))
    return list(out)


def pet_reduce(
    f: PolyFamily,
    s: int | None = None,
    max_steps: int = 100_000,
    max_columns: int | None = None,
    max_seconds: float | None = None,
) -> PetTrace:
    """Differentiate with formal h until every polynomial is constant.

    Before each step the family is put in :meth:`PolyFamily.normalized` form, and
    ``tuple_index`` in the trace refers to that normalized family. Traces can
    grow very wide; ``max_columns`` and ``max_seconds`` turn that into a
    :class:`CostGuardError`.
    """
    if s is None:
        s = max(1, f.degree)
    initial = family_type(f, s)
    if initial.is_zero:
        return PetTrace(initial, (), s, f)
    ell = f.ell
    cols = [tuple(_raw_norm(list(p.coeffs)) for p in col) for col in f.columns()]
    t = initial
    steps = []
    deadline = None if max_seconds is None else time.perf_counter() + max_seconds
    while not t.is_zero:
        if deadline is not None and time.perf_counter() > deadline:
            raise CostGuardError(f"PET exceeded {max_seconds} s after {len(steps)} steps")
        if len(steps) >= max_steps:
            raise RuntimeError(f"PET did not terminate within {max_steps} steps")
        cols = _raw_normalized(cols)
        keys = [_raw_key(c) for c in cols]
        order = sorted(
            (j for j in range(len(cols)) if keys[j] is not None),
            key=lambda j: (-keys[j][0], keys[j][1], j),
        )
        for j in order:
            new_cols = _raw_vdc(cols, j)
            t_next = _raw_type([_raw_key(c) for c in new_cols], ell, s)
            if type_less(t_next, t):
                break
        else:
            raise NoReducingTuple(f"no column lowers type {t} after {len(steps)} steps")
        if max_columns is not None and len(new_cols) > max_columns:
            raise CostGuardError(
                f"PET family reached {len(new_cols)} columns after {len(steps) + 1} steps"
            )
        steps.append(PetStep(j + 1, FORMAL_H, t_next, len(new_cols)))
        cols, t = new_cols, t_next
    final = PolyFamily.from_columns([[ShiftPoly(p) for p in c] for c in cols])
    return PetTrace(initial, tuple(steps), s, final)


_TERM = re.compile(r"([+-]?)\s*(\d*)\s*\*?\s*(n(?:\s*(?:\^|\*\*)\s*(\d+))?)?")


def parse_poly(text: str) -> list[int]:
    """Parse an integer polynomial in ``n`` such as ``"3n^2 - n"`` or ``"2*n**3+1"``.

    Returns coefficients in ascending powers of n.
    """
    src = text.replace(" ", "")
    if not src:
        raise ValueError("empty polynomial")
    coeffs: dict[int, int] = {}
    pos = 0
    while pos < len(src):
        mt = _TERM.match(src, pos)
        if mt is None or mt.end() == pos or (not mt.group(2) and not mt.group(3)):
            raise ValueError(f"cannot parse polynomial {text!r} at offset {pos}")
        sign = -1 if mt.group(1) == "-" else 1
        if pos > 0 and not mt.group(1):
            raise ValueError(f"missing operator in {text!r} at offset {pos}")
        c = int(mt.group(2)) if mt.group(2) else 1
        k = 0
        if mt.group(3):
            k = int(mt.group(4)) if mt.group(4) else 1
        coeffs[k] = coeffs.get(k, 0) + sign * c
        pos = mt.end()
    top = max(coeffs)
    out = [coeffs.get(k, 0) for k in range(top + 1)]
    while len(out) > 1 and out[-1] == 0:
        out.pop()
    return out


def parse_family(text: str) -> PolyFamily:
    """``"n^2;n"`` gives a 1 x 2 family; ``"(n^2,0);(0,n)"`` a 2 x 2 one.

    Items separated by ``;`` are columns (polynomial tuples), commas separate the
    ell components of a tuple.
    """
    cols = []
    for item in text.split(";"):
        item = item.strip()
        if item.startswith("(") and item.endswith(")"):
            item = item[1:-1]
        cols.append([ShiftPoly.from_ints(parse_poly(c)) for c in item.split(",")])
    if len({len(c) for c in cols}) != 1:
        raise ValueError(f"tuples in {text!r} have different lengths")
    return PolyFamily.from_columns(cols)
