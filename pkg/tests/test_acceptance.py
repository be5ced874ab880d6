"""Acceptance checks, one test per criterion, each printing a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v``; the lines are repeated in
the terminal summary under "acceptance criteria".
"""

import math
import random
import time

import numpy as np
from shiftprimes.dynamics import (
    EventSet,
    Observable,
    cauchy_diagnostic,
    prop_key_experiment,
    recurrence_average,
    rotation,
)
from shiftprimes.errors import CostGuardError, NoReducingTuple
from shiftprimes.gowers import (
    VDC_CONSTANT,
    VectorSequence,
    brute_gowers,
    example_identity_check,
    gowers_norm,
    u2_fourier,
    vdc_inequality,
)
from shiftprimes.patterns import PatternSpec, WindowedSet, shifted_prime_search
from shiftprimes.pet import PolyFamily, family_type, pet_reduce, type_less
from shiftprimes.primes import (
    build_table,
    compare_prime_average,
    lambda_w_r_values,
    uniformity_profile,
    weight_discrepancy,
)

# tolerances and limits
ORACLE_REL_TOL = 1e-9
IDENTITY_REL_TOL = 1e-9
SCALAR_ABS_TOL = 1e-12
BOOKKEEPING_TOL = 0.05
COMPARE_TOL = 0.05


def _rel(a, b):
    return abs(a - b) / max(abs(a), abs(b), 1e-300)


class Timer:
    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.t0


def _finish(criterion, number, ok, detail, elapsed, limit):
    within = elapsed < limit
    criterion(number, ok and within, f"{detail}; {elapsed:.2f} s (limit {limit} s)")
    assert ok, detail
    assert within, f"took {elapsed:.2f} s, limit {limit} s"


def test_criterion_01_pet_square(criterion):
    with Timer() as t:
        tr = pet_reduce(PolyFamily.from_numeric([[[0, 0, 1]]]))
    ok = tr.degree_d == 2 and tr.gowers_degree == 3
    _finish(criterion, 1, ok, f"(n^2): steps={tr.degree_d}, gowers_degree={tr.gowers_degree}", t.elapsed, 1)


def test_criterion_02_gowers_oracles(criterion):
    rng = np.random.default_rng(2)
    worst_brute = worst_fourier = 0.0
    with Timer() as t:
        for M in (8, 16, 32, 64):
            corpus = [rng.normal(size=M) + 1j * rng.normal(size=M) for _ in range(50)]
            for d in (1, 2, 3):
                for x in corpus:
                    worst_brute = max(worst_brute, _rel(gowers_norm(x, d), brute_gowers(x, d)))
            for x in corpus:
                worst_fourier = max(worst_fourier, _rel(u2_fourier(x), gowers_norm(x, 2)))
    ok = worst_brute <= ORACLE_REL_TOL and worst_fourier <= ORACLE_REL_TOL
    detail = f"max rel err recursive/brute {worst_brute:.1e}, U_2 Fourier {worst_fourier:.1e}"
    _finish(criterion, 2, ok, detail, t.elapsed, 60)


def test_criterion_03_identity(criterion):
    rng = np.random.default_rng(3)
    cases = [("a=1, N=64", np.ones(64))]
    cases += [(f"random signs #{k}", rng.choice([-1.0, 1.0], 64)) for k in range(20)]
    with Timer() as t:
        table = build_table(2 * 128 + 1, 3)
        cases.append(("Lambda'_{3,1} - 1, N=128", lambda_w_r_values(table, 1, 128) - 1.0))
        worst = 0.0
        for _, x in cases:
            r, tr = example_identity_check(x)
            worst = max(worst, _rel(r, tr))
    ok = worst <= IDENTITY_REL_TOL
    _finish(criterion, 3, ok, f"{len(cases)} sequences, max rel gap {worst:.1e}", t.elapsed, 30)


def test_criterion_04_vdc(criterion):
    rng = np.random.default_rng(4)
    violations = 0
    with Timer() as t:
        for _ in range(200):
            N, dim = int(rng.integers(1, 513)), int(rng.integers(1, 9))
            v = rng.normal(size=(N, dim)) + 1j * rng.normal(size=(N, dim))
            b = vdc_inequality(VectorSequence(v))
            violations += b.lhs > VDC_CONSTANT * b.rhs
        c = np.array([1.0, -2.0, 0.5j])
        b = vdc_inequality(VectorSequence(np.tile(c, (300, 1))))
        e = float(np.sum(np.abs(c) ** 2))
        closed = math.isclose(b.lhs, e) and math.isclose(b.rhs, e / 300 + e * 299 / 600)
        violations += b.lhs > VDC_CONSTANT * b.rhs
    ok = violations == 0 and closed
    _finish(criterion, 4, ok, f"violations={violations}, constant case closed form {closed}", t.elapsed, 30)


def test_criterion_05_bookkeeping(criterion):
    with Timer() as t:
        table = build_table(6 * 10**5 + 6, 5)
        checks = {
            "Lambda(8)=log 2": math.isclose(table.mangoldt[8], math.log(2)),
            "Lambda'(8)=0": table.lambda_prime[8] == 0,
            "W=6": table.W == 6,
            "phi(W)=2": table.phi_W == 2,
            "residues {1,5}": table.coprime_residues == (1, 5),
        }
        gaps = {r: weight_discrepancy(table, r, 10**5) for r in (1, 5)}
    ok = all(checks.values()) and all(g <= BOOKKEEPING_TOL for g in gaps.values())
    failed = [k for k, v in checks.items() if not v]
    detail = f"failed={failed}, |mean - 1| r=1: {gaps[1]:.4f}, r=5: {gaps[5]:.4f}"
    _finish(criterion, 5, ok, detail, t.elapsed, 30)


def test_criterion_06_compare_trend(criterion):
    with Timer() as t:
        table = build_table(10**5, 3)
        seqs = {"a=1": lambda n: np.ones(n), "a=(-1)^n": lambda n: (-1.0) ** np.arange(1, n + 1)}
        diffs = {k: (compare_prime_average(table, f(10**3), 10**3),
                     compare_prime_average(table, f(10**5), 10**5)) for k, f in seqs.items()}
    ok = all(big < COMPARE_TOL and big < small for small, big in diffs.values())
    detail = ", ".join(f"{k}: {s:.4f} -> {b:.4f}" for k, (s, b) in diffs.items())
    _finish(criterion, 6, ok, detail, t.elapsed, 30)


def _profile_max(w, N):
    W = math.prod(p for p in (2, 3, 5, 7, 11, 13) if p < w)
    return uniformity_profile(build_table(W * (N + 1), w), N, 2).max


def test_criterion_07_profile_trend(criterion):
    with Timer() as t:
        w3, w7 = _profile_max(3, 2000), _profile_max(7, 2000)
        n1k, n4k = _profile_max(5, 1000), _profile_max(5, 4000)
    ok = w7 <= w3 and n4k <= n1k
    detail = f"N=2000: w=3 {w3:.4f}, w=7 {w7:.4f}; w=5: N=1000 {n1k:.4f}, N=4000 {n4k:.4f}"
    _finish(criterion, 7, ok, detail, t.elapsed, 300)


def test_criterion_08_prop_key_scalar(criterion):
    with Timer() as t:
        table = build_table(6 * 2001, 5)
        sys_ = rotation(101)
        fam = PolyFamily.from_numeric([[[0, 0, 1], [0, 1]]])
        res = prop_key_experiment(sys_, [Observable.constant(101)] * 2, fam, table, 2000)
        gaps = [abs(v - weight_discrepancy(table, r, 2000)) for r, v in res.per_r]
    ok = max(gaps) <= SCALAR_ABS_TOL
    _finish(criterion, 8, ok, f"max |prop_key - discrepancy| = {max(gaps):.1e}", t.elapsed, 60)


def test_criterion_09_recurrence_and_search(criterion):
    with Timer() as t:
        table = build_table(6 * 512 + 6, 5)
        A = EventSet.from_points(32, range(16))
        weights = lambda_w_r_values(table, 1, 512)
        avg = recurrence_average(rotation(32), A, PolyFamily.from_numeric([[[0, 1]]]), weights, 512)
        ptab = build_table(1000, 3)
        E = WindowedSet.multiples([(1, 2000)], 2)
        res = shifted_prime_search(E, PatternSpec.parse("n"), ptab, -1, 0.0, p_max=1000)
        odd = [int(p) for p in ptab.primes_upto(1000) if p > 2]
    ok = avg > 0 and res.primes == odd and res.skipped == 0
    detail = f"weighted average {avg:.4f}; {len(res.primes)}/{len(odd)} odd primes <= 1000 found"
    _finish(criterion, 9, ok, detail, t.elapsed, 60)


def test_criterion_10_cauchy(criterion):
    with Timer() as t:
        table = build_table(4000, 3)
        f = Observable(np.exp(2j * np.pi * np.arange(64) / 64))
        res = cauchy_diagnostic(rotation(64), [f], PolyFamily.from_numeric([[[0, 0, 1]]]), table,
                                [500, 1000, 2000, 4000])
        early, late = res.distances[0, 1], res.distances[2, 3]
    ok = late < early
    _finish(criterion, 10, ok, f"d(A500,A1000)={early:.4f}, d(A2000,A4000)={late:.4f}", t.elapsed, 120)


# Random families: ell, m uniform on {1, 2, 3}; each entry has degree uniform on
# {0, ..., 4} with coefficients uniform on [-3, 3]. A family whose reduction
# grows past COLUMN_CAP columns, or is still unfinished when the time budget
# runs out, counts as not terminating within the budget.
PET_FAMILIES = 500
PET_SEED = 11
PET_TIME_LIMIT = 120
COLUMN_CAP = 50_000


def _random_family(rng):
    ell, m = rng.randint(1, 3), rng.randint(1, 3)
    rows = [[[rng.randint(-3, 3) for _ in range(rng.randint(0, 4) + 1)] for _ in range(m)]
            for _ in range(ell)]
    return PolyFamily.from_numeric(rows)


def test_criterion_11_pet_well_founded(criterion):
    rng = random.Random(PET_SEED)
    families = [_random_family(rng) for _ in range(PET_FAMILIES)]
    done = not_decreasing = no_tuple = over_cap = 0
    longest = 0
    with Timer() as t:
        start = time.perf_counter()
        for f in families:
            left = PET_TIME_LIMIT - (time.perf_counter() - start)
            if left <= 0:
                break
            try:
                tr = pet_reduce(f, 4, max_columns=COLUMN_CAP, max_seconds=left)
            except NoReducingTuple:
                no_tuple += 1
                continue
            except CostGuardError:
                if time.perf_counter() - start >= PET_TIME_LIMIT:
                    break
                over_cap += 1
                continue
            types = tr.types()
            if not all(type_less(b, a) for a, b in zip(types, types[1:])):
                not_decreasing += 1
            if not family_type(tr.final_family, 4).is_zero:
                not_decreasing += 1
            done += 1
            longest = max(longest, tr.degree_d)
    unfinished = PET_FAMILIES - done - no_tuple - over_cap
    ok = done == PET_FAMILIES and not_decreasing == 0 and no_tuple == 0
    detail = (f"{done}/{PET_FAMILIES} terminated (longest {longest} steps), "
              f"non-decreasing={not_decreasing}, NoReducingTuple={no_tuple}, "
              f"over {COLUMN_CAP} columns={over_cap}, not reached in time={unfinished}")
    _finish(criterion, 11, ok, detail, t.elapsed, PET_TIME_LIMIT)
