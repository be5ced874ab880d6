import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from shiftprimes.dynamics import recurrence_average
from shiftprimes.errors import CostGuardError, InputError, WindowExhausted
from shiftprimes.patterns import (
    PatternSpec,
    WindowedSet,
    correspondence_check,
    intersection_density,
    load_set,
    parse_set_text,
    shifted_prime_search,
    torus_model,
)
from shiftprimes.pet import PolyFamily
from shiftprimes.primes import build_table


@pytest.fixture(scope="module")
def table():
    return build_table(2000, 3)


def brute_density(points, window, shifts):
    """Double loop over window points and shifts with hashed membership."""
    members = set(map(tuple, points))
    lo = [a for a, _ in window]
    hi = [b for _, b in window]
    valid = 0
    hits = 0
    for x in np.ndindex(*[b - a + 1 for a, b in window]):
        x = tuple(c + l for c, l in zip(x, lo))
        moved = [tuple(c + v for c, v in zip(x, s)) for s in shifts]
        if not all(lo[k] <= y[k] <= hi[k] for y in moved for k in range(len(x))):
            continue
        valid += 1
        hits += x in members and all(y in members for y in moved)
    return hits / valid


# ---- sets and specs ---------------------------------------------------------


def test_windowed_set_basics():
    E = WindowedSet.from_points([(1, 10)], [[1], [4], [10]])
    assert len(E) == 3 and E.density() == 0.3
    assert E.contains([4]) and not E.contains([5]) and not E.contains([11])
    assert E.points().tolist() == [[1], [4], [10]]
    with pytest.raises(ValueError):
        WindowedSet.from_points([(1, 10)], [[11]])
    with pytest.raises(ValueError):
        WindowedSet([(5, 1)], np.zeros(0, bool))


def test_volume_guard():
    with pytest.raises(CostGuardError):
        WindowedSet.full([(1, 10**4), (1, 10**4)])


def test_random_set_density_and_seed():
    a = WindowedSet.random([(1, 10**5)], 0.3, seed=4)
    b = WindowedSet.random([(1, 10**5)], 0.3, seed=4)
    assert np.array_equal(a.mask, b.mask)
    assert abs(a.density() - 0.3) < 0.01


def test_dyadic_density_finds_dense_block():
    mask = np.zeros(256, bool)
    mask[:32] = True
    E = WindowedSet([(1, 256)], mask)
    assert E.density() == 0.125
    assert E.dyadic_density(min_side=32) == 1.0
    assert E.dyadic_density(min_side=256) == 0.125


def test_pattern_spec_parse_and_shifts():
    spec = PatternSpec.parse("n^2;n")
    assert (spec.m, spec.ell) == (2, 1)
    assert spec.shifts(3) == [(9,), (3,)]
    spec2 = PatternSpec.parse("(n,0);(0,n^2)")
    assert spec2.ell == 2 and spec2.shifts(2) == [(2, 0), (0, 4)]


def test_pattern_spec_rejects_constant_terms():
    with pytest.raises(ValueError):
        PatternSpec.parse("n^2 + 1")
    with pytest.raises(ValueError):
        PatternSpec.parse("(n,0);n")


# ---- intersection density -----------------------------------------------------


def test_density_at_zero_is_set_density():
    E = WindowedSet.random([(1, 500)], 0.4, 1)
    for text in ("n", "n^2;n", "3n^3 - n"):
        assert intersection_density(E, PatternSpec.parse(text), 0) == E.density()


def test_even_numbers_shifted_by_even():
    E = WindowedSet.multiples([(1, 1000)], 2)
    assert intersection_density(E, PatternSpec.parse("n"), 10) == pytest.approx(0.5)
    assert intersection_density(E, PatternSpec.parse("n"), 7) == 0


def test_density_matches_brute_force():
    big = WindowedSet.random([(1, 10**5)], 0.3, 7)
    sub = WindowedSet(((1, 1000),), big.mask[:1000])
    spec = PatternSpec.parse("n^2")
    for n in (1, 5, 12, -9):
        got = intersection_density(sub, spec, n)
        assert got == pytest.approx(brute_density(sub.points(), sub.window, spec.shifts(n)), abs=1e-15)


def test_two_dimensional_brute_force():
    E = WindowedSet.random([(3, 30), (-5, 20)], 0.5, 2)
    spec = PatternSpec.parse("(n,n^2);(0,-n)")
    for n in (1, 2, 3):
        got = intersection_density(E, spec, n)
        assert got == pytest.approx(brute_density(E.points(), E.window, spec.shifts(n)), abs=1e-15)


def test_window_exhausted():
    E = WindowedSet.full([(1, 50)])
    with pytest.raises(WindowExhausted):
        intersection_density(E, PatternSpec.parse("n^2"), 8)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**4), st.integers(-8, 8), st.floats(0.1, 0.9))
def test_adding_polynomials_never_increases_density(seed, n, dens):
    E = WindowedSet.random([(1, 300)], dens, seed)
    spec = PatternSpec.parse("n;2n;n^2")
    # counts on the common sub-window of the largest spec, so set inclusion applies
    full = _count_on(E, spec, spec, n)
    assert intersection_density(E, spec, n) == full / _valid_count(E, spec, n)
    for k in (1, 2):
        assert full <= _count_on(E, spec.subset(k), spec, n)


def _valid_count(E, spec, n):
    shifts = spec.shifts(n)
    lo = max(0, -min(v[0] for v in shifts))
    hi = E.shape[0] - max(0, max(v[0] for v in shifts))
    return hi - lo


def _count_on(E, sub, spec, n):
    """Members of the sub-pattern intersection inside the valid window of ``spec``."""
    shifts = spec.shifts(n)
    lo = max(0, -min(v[0] for v in shifts))
    hi = E.shape[0] - max(0, max(v[0] for v in shifts))
    hit = E.mask[lo:hi].copy()
    for (v,) in sub.shifts(n):
        hit &= E.mask[lo + v : hi + v]
    return int(hit.sum())


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**4), st.integers(-10**6, 10**6), st.integers(-6, 6))
def test_translation_covariance(seed, t, n):
    E = WindowedSet.random([(1, 200)], 0.5, seed)
    F = E.translated([t])
    spec = PatternSpec.parse("n^2;n")
    assert F.density() == E.density()
    assert intersection_density(F, spec, n) == intersection_density(E, spec, n)
    assert F.contains([1 + t]) == E.contains([1])


# ---- shifted prime search --------------------------------------------------------


def test_evens_qualify_for_every_odd_prime(table):
    E = WindowedSet.multiples([(1, 2000)], 2)
    res = shifted_prime_search(E, PatternSpec.parse("n"), table, -1, 0.0, p_max=1000)
    assert res.primes == [int(p) for p in table.primes_upto(1000) if p > 2]
    assert all(n == p - 1 for p, n, _ in res.rows)


def test_full_window_threshold_one(table):
    E = WindowedSet.full([(1, 3000)])
    res = shifted_prime_search(E, PatternSpec.parse("n^2;n"), table, 1, 1.0, p_max=50)
    assert res.primes == [int(p) for p in table.primes_upto(50)]


def test_random_set_relative_density_baseline():
    t = build_table(300, 3)
    E = WindowedSet.random([(1, 10**5)], 0.2, seed=2)
    res = shifted_prime_search(E, PatternSpec.parse("n"), t, -1, 0.01)
    assert len(res.rows) / t.pi(300) > 0.5
    assert len(res.rows) == 62


def test_dense_linear_search_nonempty(table):
    for seed in range(5):
        E = WindowedSet.random([(1, 1000)], 0.5, seed)
        assert shifted_prime_search(E, PatternSpec.parse("n;2n"), table, 1, 0.0, p_max=400).rows


def test_skipped_primes_are_counted(table, caplog):
    E = WindowedSet.full([(1, 100)])
    with caplog.at_level(logging.WARNING):
        res = shifted_prime_search(E, PatternSpec.parse("n"), table, 1, 0.0, p_max=200)
    assert res.skipped == sum(1 for p in table.primes_upto(200) if p + 1 >= 100)
    assert res.checked + res.skipped == table.pi(200)
    assert "skipped" in caplog.text


def test_search_threads_agree(table):
    E = WindowedSet.random([(1, 3000)], 0.4, 1)
    a = shifted_prime_search(E, PatternSpec.parse("n^2;n"), table, -1, 0.1, p_max=50)
    b = shifted_prime_search(E, PatternSpec.parse("n^2;n"), table, -1, 0.1, p_max=50, workers=3)
    assert a.rows == b.rows


def test_search_validation(table):
    E = WindowedSet.full([(1, 10)])
    with pytest.raises(ValueError):
        shifted_prime_search(E, PatternSpec.parse("n"), table, 0, 0.0)
    with pytest.raises(IndexError):
        shifted_prime_search(E, PatternSpec.parse("n"), table, 1, 0.0, p_max=10**6)


# ---- correspondence --------------------------------------------------------------


def test_correspondence_full_window():
    c = correspondence_check(WindowedSet.full([(1, 64)]), PatternSpec.parse("n^2"), 3)
    assert c.combinatorial == 1 and c.dynamical == 1 and c.holds


def test_correspondence_evens():
    E = WindowedSet.multiples([(1, 100)], 2)
    c = correspondence_check(E, PatternSpec.parse("n"), 6)
    assert c.combinatorial == c.dynamical == E.density() == 0.5


def test_correspondence_random_square():
    E = WindowedSet.random([(1, 4096)], 0.3, 5)
    c = correspondence_check(E, PatternSpec.parse("n^2"), 6)
    assert c.holds
    assert c.epsilon == pytest.approx(36 / 4096)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**4), st.integers(-5, 5), st.floats(0.05, 0.95))
def test_correspondence_inequality_always_holds(seed, n, dens):
    E = WindowedSet.random([(1, 40), (1, 30)], dens, seed)
    c = correspondence_check(E, PatternSpec.parse("(n,0);(n,n^2)"), n)
    assert c.holds


def test_torus_model_agrees_with_dynamics():
    E = WindowedSet.random([(1, 256)], 0.3, 3)
    sys_, A = torus_model(E)
    c = correspondence_check(E, PatternSpec.parse("n^2;n"), 4)
    # at n = 4 the pattern is (16, 4): one recurrence term with constant exponents
    fam = PolyFamily.from_numeric([[[16], [4]]])
    assert recurrence_average(sys_, A, fam, None, 1) == pytest.approx(c.dynamical, abs=1e-15)


# ---- set files ---------------------------------------------------------------------


def test_parse_points_and_window(tmp_path):
    E = parse_set_text("# evens\nwindow 1:10\n2\n4, \n6\n")
    assert E.points().ravel().tolist() == [2, 4, 6] and E.window == ((1, 10),)
    F = parse_set_text("1 2\n3,4\n")
    assert F.window == ((1, 3), (2, 4)) and len(F) == 2
    path = tmp_path / "E.txt"
    path.write_text("window 1:1000\nrandom density=0.25 seed=3\n")
    G = load_set(path)
    assert np.array_equal(G.mask, WindowedSet.random([(1, 1000)], 0.25, 3).mask)


@pytest.mark.parametrize(
    "text,line",
    [
        ("1\n2\nx\n", 3),
        ("window 1:10\n1\n1 2\n", 3),
        ("window 1-10\n", 1),
        ("window 1:10\nwindow 1:5\n", 2),
        ("\n\nrandom density=abc\n", 3),
    ],
)
def test_parse_errors_name_the_line(text, line):
    with pytest.raises(InputError, match=f"line {line}"):
        parse_set_text(text)


def test_parse_errors_without_line():
    with pytest.raises(InputError):
        parse_set_text("")
    with pytest.raises(InputError):
        parse_set_text("random density=0.5 seed=1\n")
    with pytest.raises(InputError):
        parse_set_text("window 1:3\n7\n")
