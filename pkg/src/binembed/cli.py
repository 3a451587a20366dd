"""Command-line interface: ``binembed {gen,embed,sweep,slice,retrieve,verify}``.

Exit codes: 0 success, 1 verification failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time

from . import evaluation as ev
from .core import Algorithm, BinembedError, EmbedderConfig, SeedTree, default_blocks
from .embedders import fit
from .fileio import read_dataset, sha256sum, write_codes, write_vectors

EXIT_OK, EXIT_VERIFY_FAILED, EXIT_USAGE = 0, 1, 2

log = logging.getLogger("binembed")


def _int_list(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def _algo_list(text: str) -> list[Algorithm]:
    return [Algorithm.parse(v.strip()) for v in text.split(",") if v.strip()]


def cmd_gen(args) -> int:
    data = ev.gen_sphere_dataset(args.n, args.p, args.seed)
    write_vectors(args.out, data)
    print(f"N={data.n_points} p={data.dim} sha256={sha256sum(args.out)}")
    return EXIT_OK


def resolve_config(algo, p: int, m: int, n_points: int, n=None, b=None, seed: int = 0,
                   round_m: bool = False) -> EmbedderConfig:
    """Fill omitted n and B with the experiment defaults; ``round_m`` raises m to a multiple of B."""
    algo = Algorithm.parse(algo)
    if algo is Algorithm.FBE and b is not None and m % b:
        if not round_m:
            raise BinembedError(
                f"--b {b} does not divide --m {m}; pass --round-m to raise m to {-(-m // b) * b}"
            )
        m = -(-m // b) * b
    if algo is Algorithm.FBE and b is None:
        b = default_blocks(n_points, m)
    return EmbedderConfig.with_defaults(algo, p, m, n_points=n_points, intermediate_dim=n,
                                       blocks=b, seed=SeedTree(seed))


def cmd_embed(args) -> int:
    data = read_dataset(args.inp)
    cfg = resolve_config(args.algo, data.dim, args.m, data.n_points, args.n, args.b,
                         args.seed, args.round_m)
    t0 = time.perf_counter()
    e = fit(cfg)
    fit_ms = (time.perf_counter() - t0) * 1e3
    t0 = time.perf_counter()
    codes = e.embed_batch(data, threads=args.threads)
    embed_ms = (time.perf_counter() - t0) * 1e3
    write_codes(args.out, codes)
    print(f"algorithm={cfg.algorithm.value} N={len(codes)} m={codes.n_bits} "
          f"n={cfg.intermediate_dim or 0} B={codes.n_blocks} fit_ms={fit_ms:.3f} "
          f"embed_ms={embed_ms:.3f} per_point_ms={embed_ms / len(codes):.5f}")
    return EXIT_OK


def _plot_sweep(records, path):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 4))
    agg = ev.aggregate(records)
    for a, N in sorted({(g["algorithm"], g["N"]) for g in agg}):
        pts = [g for g in agg if g["algorithm"] == a and g["N"] == N]
        ax.errorbar([g["m"] for g in pts], [g["mean_max_distortion"] for g in pts],
                    yerr=[g["std_max_distortion"] for g in pts], marker="o", capsize=3,
                    label=f"{a.upper()} N={N}")
    ax.set_xlabel("m (bits)")
    ax.set_ylabel("max pairwise distortion")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def cmd_sweep(args) -> int:
    records = ev.distortion_sweep(args.N, args.m, args.p, args.algos, args.trials,
                                  seed=args.seed, threads=args.threads)
    ev.write_csv(args.out or sys.stdout, records, ev.SWEEP_COLUMNS)
    if args.plot:
        _plot_sweep(records, args.plot)
    return EXIT_OK


def cmd_slice(args) -> int:
    records = ev.read_sweep_csv(args.inp)
    algos = sorted({r.algorithm for r in records}) if args.algo is None else [args.algo]
    rows = []
    for a in algos:
        for N, m in ev.m_for_target_delta(records, args.delta, a).items():
            rows.append(dict(algorithm=Algorithm.parse(a).value, N=N, delta=args.delta, m=m))
    ev.write_csv(args.out or sys.stdout, rows, ["algorithm", "N", "delta", "m"])
    for a in {r["algorithm"] for r in rows}:
        pts = [r for r in rows if r["algorithm"] == a]
        if len(pts) >= 3:
            slope, icpt, r2 = ev.fit_against_log([r["N"] for r in pts], [r["m"] for r in pts])
            print(f"# {a}: m ~ {icpt:.2f} + {slope:.2f} ln N, R^2 = {r2:.4f}", file=sys.stderr)
    return EXIT_OK


def cmd_retrieve(args) -> int:
    if args.base:
        base = read_dataset(args.base)
        queries = read_dataset(args.queries) if args.queries else None
        if queries is None:
            raise BinembedError("--queries is required with --base")
    else:
        tree = SeedTree(args.seed)
        base = ev.gen_sphere_dataset(args.n_base, args.p, tree, index=0)
        queries = ev.gen_sphere_dataset(args.n_queries, args.p, tree, index=1)
    rows = []
    for a in args.algos:
        if args.metric == "geodesic":
            res = ev.retrieval_eval(base, queries, args.k, None, "geodesic")
            rows.append(dict(algorithm="geodesic", m=0, n=0, B=0, k=res.k_relevant,
                             n_queries=res.n_queries, recall=res.recall, embed_ms=0.0,
                             query_ms=res.query_ms))
            break
        cfg = resolve_config(a, base.dim, args.m, base.n_points, args.n, args.b, args.seed,
                             args.round_m)
        metric = args.metric or ev.default_metric(cfg.algorithm)
        res = ev.retrieval_eval(base, queries, args.k, fit(cfg), metric)
        rows.append(dict(algorithm=cfg.algorithm.value, m=cfg.code_bits,
                         n=cfg.intermediate_dim or 0, B=cfg.blocks, k=res.k_relevant,
                         n_queries=res.n_queries, recall=res.recall, embed_ms=res.embed_ms,
                         query_ms=res.query_ms))
    ev.write_csv(args.out or sys.stdout, rows, ev.RETRIEVAL_COLUMNS)
    return EXIT_OK


def cmd_verify(args) -> int:
    checks = ev.run_verification(trials=args.trials, seed=args.seed, jl_reps=args.jl_reps)
    for c in checks:
        print(c.line())
    failed = [c for c in checks if not c.passed]
    print(f"{len(checks) - len(failed)}/{len(checks)} checks passed")
    return EXIT_VERIFY_FAILED if failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="binembed", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="write N uniform points on the sphere to a BEMB file")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--p", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)

    def embedder_flags(p, multi=False):
        if multi:
            p.add_argument("--algos", type=_algo_list, default=[Algorithm.URP])
        else:
            p.add_argument("--algo", type=Algorithm.parse, required=True)
        p.add_argument("--m", type=int, required=True)
        p.add_argument("--n", type=int, help="intermediate dimension (default ceil(1.3 m))")
        p.add_argument("--b", type=int, help="FBE block count (default ~1.8 ln N dividing m)")
        p.add_argument("--round-m", action="store_true", help="raise m to a multiple of --b")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--threads", type=int, default=1)

    p = sub.add_parser("embed", help="embed a BEMB file into a BCOD file")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    embedder_flags(p)
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("sweep", help="max pairwise distortion over a grid of N and m")
    p.add_argument("--algos", type=_algo_list, default=[Algorithm.URP])
    p.add_argument("--N", type=_int_list, default=[300])
    p.add_argument("--m", type=_int_list, default=[250, 500, 1000, 2000, 4000, 8000])
    p.add_argument("--p", type=int, default=512)
    p.add_argument("--trials", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out")
    p.add_argument("--plot", help="also save an error-bar chart to this path")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("slice", help="m reaching a target distortion, per N, from a sweep CSV")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--delta", type=float, default=0.3)
    p.add_argument("--algo")
    p.add_argument("--out")
    p.set_defaults(func=cmd_slice)

    p = sub.add_parser("retrieve", help="k-NN recall of code distances against geodesic truth")
    embedder_flags(p, multi=True)
    p.add_argument("--base", help="BEMB base set (default: synthetic)")
    p.add_argument("--queries", help="BEMB query set")
    p.add_argument("--n-base", type=int, default=5000)
    p.add_argument("--n-queries", type=int, default=500)
    p.add_argument("--p", type=int, default=512)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--metric", choices=["hamming", "median_block", "geodesic"])
    p.add_argument("--out")
    p.set_defaults(func=cmd_retrieve)

    p = sub.add_parser("verify", help="run the Monte-Carlo oracle suite")
    p.add_argument("--trials", type=int, default=100_000)
    p.add_argument("--jl-reps", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (BinembedError, OSError) as exc:
        print(f"binembed {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
