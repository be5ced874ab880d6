"""Command line entry point: one subcommand per experiment, JSON reports on output.

Exit status is 0 on success, 2 for invalid input and 3 when a cost guard
rejects the request.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, dynamics, gowers, patterns, pet, primes
from .errors import CostGuardError, InputError, NoReducingTuple

OUT_DIR_ENV = "SHIFTPRIMES_OUT_DIR"

EXIT_OK, EXIT_INTERNAL, EXIT_INVALID, EXIT_COST = 0, 1, 2, 3


def _read_json(path: str):
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: line {exc.lineno}: {exc.msg}") from None


def _family(args) -> pet.PolyFamily:
    if args.family:
        try:
            return pet.PolyFamily.from_json(_read_json(args.family))
        except (KeyError, TypeError) as exc:
            raise InputError(f"{args.family}: bad family JSON: {exc}") from None
    return pet.parse_family(args.polys)


def _system(args) -> dynamics.FiniteSystem:
    if args.system:
        return dynamics.FiniteSystem.from_json(_read_json(args.system))
    if args.torus:
        return dynamics.torus_shifts([int(s) for s in args.torus.split(",")])
    return dynamics.rotation(args.rotation)


def _observables(args, sys_: dynamics.FiniteSystem, m: int) -> list[dynamics.Observable]:
    size = sys_.size
    out = []
    for j in range(m):
        if args.observable == "one":
            out.append(dynamics.Observable.constant(size))
        elif args.observable == "character":
            out.append(dynamics.Observable(np.exp(2j * np.pi * (j + 1) * np.arange(size) / size)))
        elif args.observable == "random":
            out.append(dynamics.Observable.random_phase(size, args.seed + j))
        else:
            ind = np.zeros(size, dtype=bool)
            ind[: size // 2] = True
            out.append(dynamics.EventSet(ind).observable())
    return out


def _window(text: str):
    return patterns._parse_window(text.replace(",", " "), 0)


def _set(args) -> patterns.WindowedSet:
    if args.set:
        return patterns.load_set(args.set)
    if args.window is None:
        raise InputError("give --set FILE or --window with --density or --multiples")
    window = _window(args.window)
    if args.multiples:
        return patterns.WindowedSet.multiples(window, args.multiples)
    return patterns.WindowedSet.random(window, args.density, args.seed)


def _write_csv(path: str, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def cmd_pet(args):
    f = _family(args)
    trace = pet.pet_reduce(f, args.s, max_columns=args.max_columns)
    res = trace.to_json()
    res["step_count"] = trace.degree_d
    res["family"] = f.to_json()
    rows = [(k + 1, st.tuple_index, st.columns) for k, st in enumerate(trace.steps)]
    return res, (("step", "tuple_index", "columns"), rows)


def _sequence(args) -> gowers.ArithSequence:
    if args.seq:
        return gowers.ArithSequence.from_json(_read_json(args.seq))
    rng = np.random.default_rng(args.seed)
    return gowers.ArithSequence(np.exp(2j * np.pi * rng.random(args.length)))


def cmd_gowers(args):
    a = _sequence(args)
    if args.embed:
        a = gowers.embed(a, args.d)
    elif args.modulus:
        a = gowers.ArithSequence(a.values, args.modulus)
    elif a.modulus is None:
        a = gowers.ArithSequence(a.values, a.N)
    if args.method == "exact":
        norm = gowers.gowers_norm(a, args.d)
    elif args.method == "brute":
        norm = gowers.brute_gowers(a, args.d)
    elif args.method == "fourier":
        if args.d != 2:
            raise InputError("the Fourier route computes U_2 only")
        norm = gowers.u2_fourier(a)
    else:
        norm = gowers.gowers_sampled(a, args.d, args.samples, args.seed)
    return {"N": a.N, "modulus": a.modulus, "d": args.d, "method": args.method, "norm": norm}, None


def cmd_vdc(args):
    if args.vectors:
        raw = _read_json(args.vectors)
        arr = np.array([[complex(*c) if isinstance(c, list) else complex(c) for c in row]
                        for row in raw])
    else:
        rng = np.random.default_rng(args.seed)
        arr = rng.normal(size=(args.length, args.dim)) + 1j * rng.normal(size=(args.length, args.dim))
    b = gowers.vdc_inequality(gowers.VectorSequence(arr))
    c = gowers.VDC_CONSTANT
    return {"lhs": b.lhs, "rhs": b.rhs, "constant": c, "holds": b.lhs <= c * b.rhs}, None


def _table_for(w: int, top: int) -> primes.WTrickTable:
    return primes.build_table(max(top, w), w)


def cmd_primes_profile(args):
    W = primes.primorial_below(args.w)
    t = _table_for(args.w, W * (args.N + 1))
    prof = primes.uniformity_profile(
        t, args.N, args.d, sampling=args.sampling, samples=args.samples,
        seed=args.seed, workers=args.threads,
    )
    return prof.to_json(), (("r", "norm"), prof.per_r)


def cmd_compare(args):
    t = _table_for(3, args.N)
    if args.seq:
        a = gowers.ArithSequence.from_json(_read_json(args.seq)).values
    elif args.sequence == "one":
        a = np.ones(args.N)
    else:
        a = (-1.0) ** np.arange(1, args.N + 1)
    diff = primes.compare_prime_average(t, a, args.N)
    return {"N": args.N, "pi_N": t.pi(args.N), "difference": diff}, None


def cmd_prop_key(args):
    sys_ = _system(args)
    fam = _family(args)
    W = primes.primorial_below(args.w)
    t = _table_for(args.w, W * (args.N + 1))
    res = dynamics.prop_key_experiment(sys_, _observables(args, sys_, fam.m), fam, t, args.N)
    return res.to_json(), (("r", "l2"), res.per_r)


def _event(args, size: int) -> dynamics.EventSet:
    if args.event is None:
        return dynamics.EventSet.from_points(size, range(size // 2))
    lo, _, hi = args.event.partition(":")
    try:
        lo_i, hi_i = int(lo), int(hi)
    except ValueError:
        raise InputError(f"--event expects lo:hi, got {args.event!r}") from None
    if not 0 <= lo_i <= hi_i < size:
        raise InputError(f"--event {args.event} is outside 0..{size - 1}")
    return dynamics.EventSet.from_points(size, range(lo_i, hi_i + 1))


def cmd_recurrence(args):
    sys_ = _system(args)
    fam = _family(args)
    A = _event(args, sys_.size)
    weights = None
    if args.weight == "lambda-prime":
        weights = _table_for(3, args.N).lambda_prime[1 : args.N + 1]
    elif args.weight == "lambda-w-r":
        W = primes.primorial_below(args.w)
        t = _table_for(args.w, W * args.N + args.r)
        weights = primes.lambda_w_r_values(t, args.r, args.N)
    avg = dynamics.recurrence_average(sys_, A, fam, weights, args.N)
    return {"measure_A": A.measure(), "N": args.N, "weight": args.weight, "average": avg}, None


def cmd_cauchy(args):
    sys_ = _system(args)
    fam = _family(args)
    try:
        grid = [int(g) for g in args.grid.split(",")]
    except ValueError:
        raise InputError(f"--grid expects comma-separated integers, got {args.grid!r}") from None
    t = _table_for(3, grid[-1])
    res = dynamics.cauchy_diagnostic(sys_, _observables(args, sys_, fam.m), fam, t, grid)
    out = res.to_json()
    if len(grid) >= 4:
        out["tail_shrinks"] = res.tail_shrinks()
    return out, (["N"] + grid, [[g] + row for g, row in zip(grid, res.distances.tolist())])


def cmd_search(args):
    E = _set(args)
    spec = patterns.PatternSpec.parse(args.polys)
    t = _table_for(3, args.pmax)
    res = patterns.shifted_prime_search(
        E, spec, t, args.shift, args.threshold, p_max=args.pmax, workers=args.threads
    )
    out = res.to_json()
    out["set_density"] = E.density()
    out["dyadic_density"] = E.dyadic_density()
    return out, (("prime", "n", "density"), res.rows)


def cmd_correspondence(args):
    E = _set(args)
    spec = patterns.PatternSpec.parse(args.polys)
    return patterns.correspondence_check(E, spec, args.n).to_json(), None


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", help="report path (default: stdout, or $%s/<command>.json)" % OUT_DIR_ENV)
    p.add_argument("--csv", help="also write plot-ready CSV here")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1, help="worker cap")
    p.add_argument("--no-timing", action="store_true",
                   help="report wall_time as null so reruns are byte-identical")


def _family_args(p, default="n^2") -> None:
    p.add_argument("--family", help="family JSON file")
    p.add_argument("--polys", default=default,
                   help="columns split by ';', components by ',', e.g. 'n^2;n' or '(n,0);(0,n^2)'")


def _system_args(p) -> None:
    g = p.add_mutually_exclusive_group()
    g.add_argument("--system", help="system JSON {size, maps}")
    g.add_argument("--torus", help="unit shifts on Z_a x Z_b ..., e.g. '12,12'")
    p.add_argument("--rotation", type=int, default=64, help="rotation x -> x+1 on Z_M")
    p.add_argument("--observable", choices=("one", "character", "random", "indicator"),
                   default="character")


def _set_args(p) -> None:
    p.add_argument("--set", help="set file: points, or 'window' and 'random' directives")
    p.add_argument("--window", help="lo:hi per axis, e.g. '1:100000' or '1:64,1:64'")
    p.add_argument("--density", type=float, default=0.5)
    p.add_argument("--multiples", type=int, help="use the points divisible by this integer")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="shiftprimes", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("pet", help="PET reduction trace of a polynomial family")
    _family_args(p)
    p.add_argument("--s", type=int, help="degree bound (default: family degree)")
    p.add_argument("--max-columns", type=int, default=200_000)
    p.set_defaults(func=cmd_pet)

    p = sub.add_parser("gowers", help="Gowers U_d norm of a sequence")
    p.add_argument("--seq", help="sequence JSON {values: [[re, im], ...], modulus}")
    p.add_argument("--length", type=int, default=64, help="random phase sequence length")
    p.add_argument("--d", type=int, default=2)
    p.add_argument("--modulus", type=int)
    p.add_argument("--embed", action="store_true", help="read a*1_[1,N] on Z_{dN}")
    p.add_argument("--method", choices=("exact", "brute", "fourier", "sampled"), default="exact")
    p.add_argument("--samples", type=int, default=200_000)
    p.set_defaults(func=cmd_gowers)

    p = sub.add_parser("vdc", help="both sides of the van der Corput bound")
    p.add_argument("--vectors", help="JSON array of N rows of dim entries")
    p.add_argument("--length", type=int, default=256)
    p.add_argument("--dim", type=int, default=4)
    p.set_defaults(func=cmd_vdc)

    p = sub.add_parser("primes-profile", help="U_d profile of Lambda'_{w,r} - 1 over r")
    p.add_argument("--w", type=int, default=5)
    p.add_argument("--N", type=int, default=2000)
    p.add_argument("--d", type=int, default=2)
    p.add_argument("--sampling", action="store_true")
    p.add_argument("--samples", type=int, default=200_000)
    p.set_defaults(func=cmd_primes_profile)

    p = sub.add_parser("compare", help="prime average against the Lambda'-weighted average")
    p.add_argument("--N", type=int, default=10**5)
    p.add_argument("--sequence", choices=("one", "alternating"), default="one")
    p.add_argument("--seq", help="sequence JSON overriding --sequence")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("prop-key", help="W-tricked weighted average minus the plain one")
    _system_args(p)
    _family_args(p)
    p.add_argument("--w", type=int, default=5)
    p.add_argument("--N", type=int, default=2000)
    p.set_defaults(func=cmd_prop_key)

    p = sub.add_parser("recurrence", help="average measure of the pattern intersection")
    _system_args(p)
    _family_args(p, default="n")
    p.add_argument("--event", help="point range lo:hi (default: first half)")
    p.add_argument("--N", type=int, default=512)
    p.add_argument("--weight", choices=("none", "lambda-prime", "lambda-w-r"), default="none")
    p.add_argument("--w", type=int, default=5)
    p.add_argument("--r", type=int, default=1)
    p.set_defaults(func=cmd_recurrence)

    p = sub.add_parser("cauchy", help="L2 distances between Lambda'-weighted averages")
    _system_args(p)
    _family_args(p)
    p.add_argument("--grid", default="500,1000,2000,4000")
    p.set_defaults(func=cmd_cauchy)

    p = sub.add_parser("search", help="shifted primes realising a dense pattern intersection")
    _set_args(p)
    p.add_argument("--polys", default="n")
    p.add_argument("--shift", type=int, choices=(-1, 1), default=-1)
    p.add_argument("--threshold", type=float, default=0.0)
    p.add_argument("--pmax", type=int, default=1000)
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("correspondence", help="windowed density against the torus measure")
    _set_args(p)
    p.add_argument("--polys", default="n^2")
    p.add_argument("--n", type=int, default=6)
    p.set_defaults(func=cmd_correspondence)

    for action in sub.choices.values():
        _common(action)
    return parser


def _config(args) -> dict:
    cfg = {k: v for k, v in vars(args).items() if k not in ("func", "out", "csv", "no_timing")}
    return dict(sorted(cfg.items()))


def run(args) -> dict:
    """Run one parsed subcommand and return its report."""
    t0 = time.perf_counter()
    result, table = args.func(args)
    wall = None if args.no_timing else time.perf_counter() - t0
    if args.csv and table is not None:
        _write_csv(args.csv, *table)
    return {
        "command": args.command,
        "version": __version__,
        "config": _config(args),
        "result": result,
        "wall_time": wall,
    }


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        report = run(args)
    except CostGuardError as exc:
        print(f"error: cost guard: {exc}", file=sys.stderr)
        return EXIT_COST
    except NoReducingTuple as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except (ValueError, IndexError, OverflowError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    text = json.dumps(report, indent=2, sort_keys=True) + "\n"
    out = args.out
    if out is None and os.environ.get(OUT_DIR_ENV):
        out = str(Path(os.environ[OUT_DIR_ENV]) / f"{args.command}.json")
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
