"""Command line interface: gen / solve / verify / bench.

Exit codes: 0 success, 1 infeasibility or invariant violation, 2 usage error.
Solution and instance files echo the invoking arguments in comment lines, so
identical invocations produce byte-identical files.
"""

from __future__ import annotations

import argparse
import csv
import sys
import time
from fractions import Fraction
from pathlib import Path

from .baselines import exact_opt, itp_heuristic
from .decompose import Params, build_hierarchy, check_hierarchy, describe_hierarchy
from .dp import Caps, solve
from .instance import (
    ParseError,
    UcvrpError,
    check_feasible,
    format_rational,
    gen_binpacking_path,
    gen_binpacking_star,
    gen_random_instance,
    parse_instance,
    parse_rational,
    parse_solution,
    preprocess_with_origin,
    solution_cost,
    write_instance,
    write_solution,
)
from .local import build_component_view, local_simplify, make_subtour, subtour_demand
from .structure import height_reduce, reduced_instance


def _parse_overrides(text: str) -> dict:
    out = {}
    if not text:
        return out
    for item in text.split(","):
        if not item:
            continue
        name, _, value = item.partition("=")
        if not value:
            raise UcvrpError(f"override needs name=value, got {item!r}")
        out[name.strip()] = parse_rational(value)
    return out


def _parse_caps(text: str) -> Caps:
    caps = Caps()
    if not text:
        return caps
    names = {"y": "y_cap", "cfg": "cfg_len", "x": "x_budget", "table": "table_cap"}
    for item in text.split(","):
        if not item:
            continue
        name, _, value = item.partition("=")
        if name.strip() not in names:
            raise UcvrpError(f"unknown cap {name!r} (use y=, cfg=, x=, table=)")
        setattr(caps, names[name.strip()], int(value))
    return caps


def _params(args) -> Params:
    return Params.from_eps(parse_rational(args.epsilon), **_parse_overrides(args.override))


def _argv_echo(argv) -> str:
    return "argv: " + " ".join(argv)


def cmd_gen(args, argv) -> int:
    if args.reduce:
        inst = parse_instance(Path(args.reduce).read_text())
        p = _params(args)
        pre, _origin = preprocess_with_origin(inst)
        rt = height_reduce(pre, p)
        red, origin = reduced_instance(rt)
        Path(args.out).write_text(write_instance(red, [_argv_echo(argv)]))
        sidecar = Path(args.out).with_suffix(Path(args.out).suffix + ".origin.txt")
        lines = [f"# {_argv_echo(argv)}"]
        for copy in sorted(origin):
            lines.append(f"copy {copy} root {origin[copy]}")
        sidecar.write_text("\n".join(lines) + "\n")
        print(f"wrote {args.out} and {sidecar}")
        return 0
    if args.family == "random":
        inst = gen_random_instance(args.n, args.seed, demands=args.demands)
    elif args.family in ("binpacking-path", "binpacking-star"):
        if not args.sizes:
            raise UcvrpError("--sizes is required for the bin packing families")
        sizes = [parse_rational(s) for s in args.sizes.split(",")]
        gen = gen_binpacking_path if args.family == "binpacking-path" else gen_binpacking_star
        inst = gen(sizes)
    else:
        raise UcvrpError(f"unknown family {args.family!r}")
    Path(args.out).write_text(write_instance(inst, [_argv_echo(argv)]))
    print(f"wrote {args.out}")
    return 0


def cmd_solve(args, argv) -> int:
    inst = parse_instance(Path(args.instance).read_text())
    p = _params(args)
    caps = _parse_caps(args.caps)
    started = time.monotonic()
    sol, stats = solve(inst, p, caps=caps, with_oracle=bool(args.stats))
    wall_ms = (time.monotonic() - started) * 1000
    report = check_feasible(inst, sol)
    if not report.ok:
        for msg in report.messages():
            print(f"violation: {msg}", file=sys.stderr)
        return 1
    out = write_solution(sol, [_argv_echo(argv), f"cost {format_rational(stats.cost)}"])
    if args.out:
        Path(args.out).write_text(out)
    else:
        sys.stdout.write(out)
    if args.stats:
        with open(args.stats, "w", newline="") as fh:
            fh.write("# ucvrp-stats 1\n")
            writer = csv.writer(fh)
            writer.writerow(
                ["instance", "n", "cost", "oracle_cost", "ratio", "table_entries", "y_size", "wall_ms"]
            )
            ratio = ""
            oracle = ""
            if stats.oracle_cost is not None and stats.oracle_cost > 0:
                oracle = format_rational(stats.oracle_cost)
                ratio = f"{float(stats.cost / stats.oracle_cost):.6f}"
            writer.writerow(
                [
                    args.instance,
                    stats.n_terminals,
                    format_rational(stats.cost),
                    oracle,
                    ratio,
                    stats.table_entries,
                    stats.y_size,
                    f"{wall_ms:.1f}",
                ]
            )
    print(f"cost {format_rational(stats.cost)} tours {len(sol.tours)}")
    return 0


def cmd_verify(args, argv) -> int:
    inst = parse_instance(Path(args.instance).read_text())
    p = _params(args)
    rc = 0
    pre, origin = preprocess_with_origin(inst)
    h = build_hierarchy(pre, p)
    violations = check_hierarchy(h)
    if args.dump:
        sys.stdout.write(describe_hierarchy(h))
    for v in violations:
        print(f"violation: {v}", file=sys.stderr)
        rc = 1

    if args.solution:
        sol = parse_solution(Path(args.solution).read_text())
        report = check_feasible(inst, sol)
        for msg in report.messages():
            print(f"violation: {msg}", file=sys.stderr)
        if not report.ok:
            rc = 1
        else:
            print(f"solution feasible, cost {format_rational(solution_cost(inst, sol))}")
        if args.local and report.ok:
            rc = max(rc, _verify_local(pre, origin, h, p, sol))
    elif args.local:
        print("--local needs a solution file", file=sys.stderr)
        return 2
    if rc == 0:
        print("verify ok")
    return rc


def _verify_local(pre, origin, h, p, sol) -> int:
    """Restrict the solution to each component and dump the transformer's
    diagnostics for fixture comparisons."""
    back = {orig: new for new, orig in origin.items()}
    inst = h.inst
    for ci in range(len(h.components)):
        view = build_component_view(h, ci)
        comp_terms = set(view.terminals())
        if not comp_terms:
            continue
        subtours = []
        for tour in sol.tours:
            terms = {back[t] for t in tour.terminals} & comp_terms
            below = set()
            if view.exit is not None:
                below = {
                    back[t]
                    for t in tour.terminals
                    if back[t] not in view.comp.vertices
                    and view.exit in inst.path_to_root(back[t])
                }
            if terms or below:
                subtours.append(make_subtour(view, terms, passing=bool(below)))
        s_star, bar, diag = local_simplify(view, subtours, p, max_subtours=len(subtours))
        print(f"component {view.comp.rid}: subtours={len(subtours)}")
        for xrid, srid in sorted(diag.threshold_cells.items()):
            print(f"  threshold cell of {xrid}: {srid}")
        print(f"  nice edges: {sorted(diag.nice_edges)}")
        print(f"  removed pieces: {len(diag.removed_pieces)}")
        print(f"  extra cost step2 {format_rational(diag.extra_cost_step2)}")
        print(f"  extra cost step5 {format_rational(diag.extra_cost_step5)}")
        print(f"  reconnect demand {format_rational(subtour_demand(inst, bar))}")
    return 0


def cmd_bench(args, argv) -> int:
    paths = sorted(Path(args.dir).glob("*.ucvrp"))
    if not paths:
        print(f"no .ucvrp instances under {args.dir}", file=sys.stderr)
        return 2
    p = _params(args)
    caps = _parse_caps(args.caps)
    rows = bench_rows(paths, p, caps, oracle_limit=args.oracle_limit)
    with open(args.out, "w", newline="") as fh:
        fh.write(f"# {_argv_echo(argv)}\n")
        writer = csv.writer(fh)
        writer.writerow(["instance", "n", "solver", "cost", "ratio_vs_exact", "wall_ms"])
        for row in rows:
            writer.writerow(row)
    print(f"wrote {args.out} ({len(rows)} rows)")
    return 0


def bench_rows(paths, p: Params, caps: Caps, oracle_limit: int = 14) -> list:
    rows = []
    for path in paths:
        inst = parse_instance(Path(path).read_text())
        n = len(inst.demand)
        oracle_cost = None
        if n <= oracle_limit:
            t0 = time.monotonic()
            oracle_cost = exact_opt(inst, oracle_limit).cost
            rows.append(_bench_row(path, n, "exact", oracle_cost, oracle_cost, t0))
        t0 = time.monotonic()
        sol, stats = solve(inst, p, caps=caps)
        rows.append(_bench_row(path, n, "solve", stats.cost, oracle_cost, t0))
        t0 = time.monotonic()
        itp = itp_heuristic(inst, p, mode="nextfit")
        rows.append(_bench_row(path, n, "itp", solution_cost(inst, itp), oracle_cost, t0))
    return rows


def _bench_row(path, n, solver, cost, oracle_cost, t0):
    wall_ms = (time.monotonic() - t0) * 1000
    ratio = ""
    if oracle_cost is not None and oracle_cost > 0:
        ratio = f"{float(Fraction(cost) / oracle_cost):.6f}"
    return [Path(path).name, n, solver, format_rational(cost), ratio, f"{wall_ms:.1f}"]


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="treecvrp")
    sub = ap.add_subparsers(dest="command", required=True)

    common = dict(epsilon="1/2", override="")

    g = sub.add_parser("gen", help="generate instances (random, bin packing, height-reduced)")
    g.add_argument("--family", default="random", choices=["random", "binpacking-path", "binpacking-star"])
    g.add_argument("--n", type=int, default=8)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--demands", default="dyadic", choices=["dyadic", "uniform"])
    g.add_argument("--sizes", default="", help="comma separated demands for the bin packing families")
    g.add_argument("--reduce", default="", metavar="INSTANCE", help="emit the height-reduced tree of INSTANCE")
    g.add_argument("--epsilon", default=common["epsilon"])
    g.add_argument("--override", default=common["override"], help="gamma=..,alpha=..,gamma_prime=..,beta=..,h_eps=..")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen)

    s = sub.add_parser("solve", help="run the approximation pipeline")
    s.add_argument("instance")
    s.add_argument("--epsilon", default=common["epsilon"])
    s.add_argument("--override", default=common["override"])
    s.add_argument("--caps", default="", help="y=..,cfg=..,x=..,table=..")
    s.add_argument("--out", default="")
    s.add_argument("--stats", default="", help="write a stats CSV to this path")
    s.set_defaults(func=cmd_solve)

    v = sub.add_parser("verify", help="re-check an instance, solution, and decomposition")
    v.add_argument("instance")
    v.add_argument("solution", nargs="?", default="")
    v.add_argument("--epsilon", default=common["epsilon"])
    v.add_argument("--override", default=common["override"])
    v.add_argument("--dump", action="store_true", help="print the decomposition as indented text")
    v.add_argument("--local", action="store_true", help="dump per-component transformer diagnostics")
    v.set_defaults(func=cmd_verify)

    b = sub.add_parser("bench", help="compare solve / itp / exact over a directory")
    b.add_argument("--dir", required=True)
    b.add_argument("--out", required=True)
    b.add_argument("--epsilon", default=common["epsilon"])
    b.add_argument("--override", default=common["override"])
    b.add_argument("--caps", default="")
    b.add_argument("--oracle-limit", type=int, default=14)
    b.set_defaults(func=cmd_bench)
    return ap


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0,) else 0
    try:
        return args.func(args, argv)
    except (ParseError, UcvrpError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
