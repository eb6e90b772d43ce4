"""Command-line front end.

    fpfs build      construct a filter from dataset files and save it
    fpfs query      query a saved filter for keys
    fpfs verify     exhaustively check a saved filter against datasets
    fpfs analyze    print the analytical sizing sweep as CSV
    fpfs bench      build/measure one synthetic configuration, CSV row
    fpfs casestudy  run a reference scenario, CSV rows

Reports go to standard output (key=value lines or CSV), diagnostics to
standard error.  Exit codes: 0 success, 1 I/O, parse or argument
errors, 2 disjointness violation, 3 construction exhausted its retries,
4 verification found violations.
"""

from __future__ import annotations

import argparse
import sys

from .casestudies import CASES, run_case
from .filters import (
    BuildConfig,
    DisjointnessViolation,
    build_filter,
)
from .harness import CSV_HEADER, bench, gen_disjoint_sets, verify
from .keys import DatasetError, KeyBatch, read_dataset
from .sizing import sweep
from .storage import FilterFileError, load_filter, save_filter
from .xorfunc import BuildExhausted

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_DISJOINT = 2
EXIT_EXHAUSTED = 3
EXIT_VERIFY = 4


def _fail(msg: str, code: int) -> int:
    print(f"error: {msg}", file=sys.stderr)
    return code


def _load_config(args) -> BuildConfig:
    variant = args.variant
    if_c1 = variant == "if-c1"
    if if_c1:
        variant = "if"
    return BuildConfig(
        r=args.r,
        variant=variant,
        epsilon=args.epsilon,
        master_seed=args.seed,
        max_retries=args.max_retries,
        if_c1=if_c1,
    )


def cmd_build(args) -> int:
    try:
        S = read_dataset(args.s_file)
        T = read_dataset(args.t_file) if args.t_file else KeyBatch.from_keys([])
    except (OSError, DatasetError) as exc:
        return _fail(str(exc), EXIT_ERROR)
    try:
        cfg = _load_config(args)
    except ValueError as exc:
        return _fail(str(exc), EXIT_ERROR)
    try:
        filt = build_filter(S, T, cfg)
    except DisjointnessViolation as exc:
        print("error: S and T overlap; first offenders:", file=sys.stderr)
        for k in exc.overlap[:10]:
            print(f"  {k.decode('utf-8', 'replace')}", file=sys.stderr)
        return EXIT_DISJOINT
    except BuildExhausted as exc:
        return _fail(str(exc), EXIT_EXHAUSTED)
    try:
        save_filter(filt, args.out)
    except OSError as exc:
        return _fail(str(exc), EXIT_ERROR)
    print(f"variant={filt.variant}")
    print(f"r={filt.r}")
    print(f"a={filt.a}")
    print(f"c={filt.c}")
    print(f"s={filt.s}")
    print(f"t={filt.t}")
    print(f"f={filt.f}")
    print(f"bits={filt.memory_bits}")
    print(f"retries={','.join(str(n) for n in filt.retry_counts)}")
    return EXIT_OK


def _read_query_keys(path: str) -> list[bytes]:
    # unlike datasets, a query list may repeat keys; order is preserved
    with open(path, "rb") as fh:
        data = fh.read()
    if data.endswith(b"\n"):
        data = data[:-1]
    keys = data.split(b"\n") if data else []
    if any(not k for k in keys):
        raise DatasetError(f"{path}: empty key in query list")
    return keys


def cmd_query(args) -> int:
    try:
        filt = load_filter(args.filter)
    except (OSError, FilterFileError) as exc:
        return _fail(str(exc), EXIT_ERROR)
    if args.key is not None:
        keys = [args.key.encode()]
    else:
        try:
            keys = _read_query_keys(args.keys_file)
        except (OSError, DatasetError) as exc:
            return _fail(str(exc), EXIT_ERROR)
    batch = KeyBatch.from_keys(keys)
    hits = filt.query_batch(batch)
    out = sys.stdout
    for key, hit in zip(keys, hits):
        out.write(key.decode("utf-8", "replace"))
        out.write("\t1\n" if hit else "\t0\n")
    return EXIT_OK


def cmd_verify(args) -> int:
    try:
        filt = load_filter(args.filter)
        S = read_dataset(args.s_file)
        T = read_dataset(args.t_file) if args.t_file else KeyBatch.from_keys([])
    except (OSError, FilterFileError, DatasetError) as exc:
        return _fail(str(exc), EXIT_ERROR)
    fn, tp = verify(filt, S, T)
    print(f"false_negatives={len(fn)}")
    print(f"t_positives={len(tp)}")
    for label, keys in (("false_negative", fn), ("t_positive", tp)):
        for k in keys[:10]:
            print(f"{label}: {k.decode('utf-8', 'replace')}")
        if len(keys) > 10:
            print(f"{label}: ... {len(keys) - 10} more")
    return EXIT_OK if not fn and not tp else EXIT_VERIFY


def cmd_analyze(args) -> int:
    try:
        t_values = [int(x) for x in args.t_list.split(",")]
    except ValueError:
        return _fail("--t-list must be comma-separated integers", EXIT_ERROR)
    if args.fpp is not None and not 0.0 < args.fpp < 0.5:
        return _fail("--fpp must lie in (0, 0.5)", EXIT_ERROR)
    try:
        reports = sweep(args.s, args.r, args.epsilon, t_values, args.fpp)
    except ValueError as exc:
        return _fail(str(exc), EXIT_ERROR)
    header = CSV_HEADER + (",lower_bound" if args.fpp is not None else "")
    print(header)
    for rep in reports:
        rows = [
            ("naive", rep.naive_bits, 0, 0),
            ("tf", rep.tf_bits, rep.a_tf, 0),
            ("if-c1", rep.if_c1_bits, rep.a_if_c1, 1),
            ("if-c2", rep.if_cmin_bits, rep.a_if, rep.c),
        ]
        for label, bits, a, c in rows:
            base_r = rep.r if label == "naive" else rep.r + a
            pred = 2.0 ** -base_r
            cols = [
                label,
                str(rep.r),
                str(a),
                str(c),
                str(rep.s),
                str(rep.t),
                str(int(rep.t / 2.0 ** (rep.r + a - 1)) if label != "naive" else 0),
                f"{bits:.0f}",
                f"{bits / rep.s:.4f}",
                f"{pred:.6g}",
                "",
                "",
                "",
                "",
                "",
                "",
            ]
            if args.fpp is not None:
                cols.append(f"{rep.lower_bound_bits:.0f}")
            print(",".join(cols))
    return EXIT_OK


def cmd_bench(args) -> int:
    try:
        cfg = _load_config(args)
    except ValueError as exc:
        return _fail(str(exc), EXIT_ERROR)
    S, T = gen_disjoint_sets(args.s, args.t, args.seed)
    try:
        rep = bench(cfg, S, T, runs=args.runs, rng_seed=args.seed + 17)
    except BuildExhausted as exc:
        return _fail(str(exc), EXIT_EXHAUSTED)
    print(CSV_HEADER)
    print(rep.csv_row())
    print(f"build_ratio_vs_plain={rep.build_ratio_vs_plain:.3f}", file=sys.stderr)
    print(f"pos_ratio_vs_plain={rep.pos_ratio_vs_plain:.3f}", file=sys.stderr)
    print(f"neg_ratio_vs_plain={rep.neg_ratio_vs_plain:.3f}", file=sys.stderr)
    return EXIT_OK


def cmd_casestudy(args) -> int:
    try:
        results = run_case(args.name, scale=args.scale, include_largest=args.full)
    except BuildExhausted as exc:
        return _fail(str(exc), EXIT_EXHAUSTED)
    except AssertionError as exc:
        return _fail(str(exc), EXIT_VERIFY)
    print(CSV_HEADER)
    for res in results:
        for row in res.report_rows:
            print(row.csv_row())
        for label, mult in sorted(res.overheads.items()):
            print(
                f"{res.name} t={res.t} overhead_{label}={mult:.4f}",
                file=sys.stderr,
            )
        if res.predictions_full_t:
            for label, bits in sorted(res.predictions_full_t.items()):
                print(
                    f"{res.name} predicted_bits_{label}_at_full_t={bits:.0f}",
                    file=sys.stderr,
                )
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    # usage errors are exit code 1; code 2 is reserved for disjointness
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_ERROR)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(
        prog="fpfs",
        description="Membership filters with a guaranteed false-positive-free set",
    )
    sub = p.add_subparsers(dest="command", required=True)
    variants = ["plain", "naive", "tf", "if", "if-c1"]

    b = sub.add_parser("build", help="build a filter from dataset files")
    b.add_argument("--s-file", required=True, help="members, one key per line")
    b.add_argument("--t-file", help="protected negatives, one key per line")
    b.add_argument("--variant", choices=variants, default="tf")
    b.add_argument("--r", type=int, required=True, help="fingerprint bits (2..24)")
    b.add_argument("--epsilon", type=float, default=0.23)
    b.add_argument("--seed", type=int, default=BuildConfig.master_seed)
    b.add_argument("--max-retries", type=int, default=100)
    b.add_argument("--out", required=True, help="output filter file")
    b.set_defaults(func=cmd_build)

    q = sub.add_parser("query", help="query a saved filter")
    q.add_argument("--filter", required=True)
    g = q.add_mutually_exclusive_group(required=True)
    g.add_argument("--key", help="single key to query")
    g.add_argument("--keys-file", help="dataset file of keys to query")
    q.set_defaults(func=cmd_query)

    v = sub.add_parser("verify", help="check a filter against its datasets")
    v.add_argument("--filter", required=True)
    v.add_argument("--s-file", required=True)
    v.add_argument("--t-file")
    v.set_defaults(func=cmd_verify)

    a = sub.add_parser("analyze", help="analytical sizing sweep (CSV)")
    a.add_argument("--s", type=int, required=True)
    a.add_argument("--r", type=int, required=True)
    a.add_argument("--epsilon", type=float, default=0.23)
    a.add_argument("--t-list", required=True, help="comma-separated T sizes")
    a.add_argument("--fpp", type=float, help="add the space lower bound column")
    a.set_defaults(func=cmd_analyze)

    be = sub.add_parser("bench", help="synthetic build/lookup benchmark (CSV)")
    be.add_argument("--s", type=int, required=True)
    be.add_argument("--t", type=int, required=True)
    be.add_argument("--r", type=int, required=True)
    be.add_argument("--variant", choices=variants, default="tf")
    be.add_argument("--runs", type=int, default=30)
    be.add_argument("--epsilon", type=float, default=0.23)
    be.add_argument("--seed", type=int, default=7)
    be.add_argument("--max-retries", type=int, default=100)
    be.set_defaults(func=cmd_bench)

    c = sub.add_parser("casestudy", help="run a reference scenario (CSV)")
    c.add_argument("--name", choices=sorted(CASES), required=True)
    c.add_argument("--scale", type=int, default=100, help="divide T sizes by this")
    c.add_argument(
        "--full",
        action="store_true",
        help="include the largest protected set even at --scale 1",
    )
    c.set_defaults(func=cmd_casestudy)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
