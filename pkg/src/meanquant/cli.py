"""Command-line interface.

Exit codes: 0 success, 1 a verification check failed, 2 configuration error,
3 data error. Every command writes its resolved configuration next to its
main output as ``<output>.config.json``.

File formats
  measures NDJSON : header {"ambient_dim": d, "ball_radius": R, "labels": [...]?},
                    then one {"points": [[...]], "weights": [...]} per line
  codebook JSON   : {"ambient_dim": d, "ball_radius": R, "codepoints": [[...]]}
  embedding CSV   : header v1..vk[,label], one row per measure
  labels CSV      : header "cluster", one integer per line
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import cluster, measure, synth, verify
from .quantization import Codebook, QuantizeConfig, quantize
from .vectorization import (
    SIGMA_RULES,
    Kernel,
    VectorizeConfig,
    check_kernel,
    default_sigma,
    read_embedding_csv,
    vectorize_sample,
    write_embedding_csv,
)
from .errors import ConfigError, DataError, MeanQuantError

log = logging.getLogger("meanquant")

EXIT_OK, EXIT_CHECK_FAILED, EXIT_CONFIG, EXIT_DATA = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _dump(obj, path) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _sidecar(output, args, **resolved) -> None:
    cfg = {k: v for k, v in vars(args).items() if k != "func"}
    cfg.update(resolved)
    _dump(cfg, f"{output}.config.json")


def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}")
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _iters(text):
    return "auto" if text == "auto" else _positive_int(text)


def _float_list(text):
    return [float(x) for x in text.split(",") if x]


def _int_list(text):
    return [int(x) for x in text.split(",") if x]


# -- commands -------------------------------------------------------------------


def cmd_quantize(args) -> int:
    sample = measure.read_ndjson(args.input)
    init = "kmeanspp"
    if args.init == "file":
        if not args.init_file:
            raise ConfigError("--init file needs --init-file")
        init = _read_codebook(args.init_file)
    cfg = QuantizeConfig(
        k=args.k,
        algorithm=args.algo.replace("-", "_"),
        iterations=args.iters,
        minibatch_size=args.batch_size,
        seed=args.seed,
        init=init,
        empty_cell_policy="reseed_farthest" if args.empty_cell == "reseed" else "keep",
        restarts=args.restarts,
    )
    cb, report = quantize(sample, cfg)
    out = Path(args.output)
    _dump(cb.to_json(), out)
    report_path = args.report or out.with_suffix(".report.json")
    _dump(report.to_json(), report_path)
    _sidecar(out, args, resolved_config=cfg.to_json(), n=sample.n)
    log.info("codebook -> %s, report -> %s", out, report_path)
    return EXIT_OK


def _read_codebook(path) -> Codebook:
    try:
        obj = json.loads(Path(path).read_text())
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot read codebook {path}: {exc}") from exc
    return Codebook.from_json(obj)


def cmd_vectorize(args) -> int:
    sample = measure.read_ndjson(args.input)
    cb = _read_codebook(args.codebook)
    if args.sigma == "auto":
        sigma = default_sigma(cb)
    else:
        try:
            sigma = float(args.sigma)
        except ValueError:
            raise ConfigError(f"--sigma must be a number or 'auto', got {args.sigma!r}") from None
    cfg = VectorizeConfig(sigma, Kernel.parse(args.kernel))
    emb = vectorize_sample(sample, cb, cfg)
    write_embedding_csv(emb, args.output)
    _sidecar(args.output, args, sigma=sigma, kernel=cfg.kernel.value)
    return EXIT_OK


def cmd_cluster(args) -> int:
    emb = read_embedding_csv(args.input)
    if args.method == "single-linkage":
        if (args.tau is None) == (args.n_clusters is None):
            raise ConfigError("single-linkage needs exactly one of --tau, --n-clusters")
        labels = cluster.single_linkage(
            cluster.linf_distances(emb), tau=args.tau, n_clusters=args.n_clusters
        )
    else:
        if args.n_clusters is None:
            raise ConfigError("kmeans needs --n-clusters")
        labels = cluster.kmeans_vectors(emb, args.n_clusters, restarts=args.restarts, seed=args.seed)
    cluster.write_labels_csv(labels, args.output)
    resolved = {"n_clusters_found": labels.n_clusters}
    if args.truth:
        truth = cluster.read_labels_csv(args.truth)
        score = cluster.nmi(labels, truth)
        resolved["nmi"] = score
        print(f"NMI {score:.6f}")
    _sidecar(args.output, args, **resolved)
    return EXIT_OK


def cmd_bench(args) -> int:
    spec = synth.MixtureSpec()
    if args.config:
        try:
            obj = json.loads(Path(args.config).read_text())
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read spec {args.config}: {exc}") from exc
        spec = synth.MixtureSpec.from_json(obj)
    spec.validate()
    methods = [m for m in args.methods.split(",") if m]
    common = dict(methods=methods, reps=args.reps, seed=args.seed, restarts=args.restarts,
                  workers=args.threads, sigma_rule=args.sigma_rule)
    if args.question == "q1":
        results = synth.run_q1(spec, args.budgets, **common)
    else:
        results = synth.run_q2(spec, args.signals, budget=args.budget, **common)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    synth.write_results_csv(results, out / "results.csv", timing=not args.no_timing)
    synth.write_aggregate_csv(results, out / "aggregate.csv")
    _sidecar(out / "results.csv", args, spec=spec.to_json())
    for r in results:
        print(f"{r.method:10s} {r.sweep_name}={r.sweep_value:<6g} NMI {r.mean:.3f} +/- {r.ci95:.3f}")
    return EXIT_OK


def cmd_kernel_check(args) -> int:
    rep = check_kernel(args.kernel, args.p, args.delta, args.grid_step)
    _emit(rep.to_json(), args.output)
    return EXIT_OK if rep.passed else EXIT_CHECK_FAILED


def cmd_verify(args) -> int:
    sample = measure.read_ndjson(args.input)
    result = {}
    ok = True
    if args.codebook:
        if args.r is None or args.delta is None:
            raise ConfigError("shattering needs --r and --delta")
        cert = verify.check_shattering(sample, _read_codebook(args.codebook), args.p, args.r, args.delta)
        result["shattering"] = cert.to_json()
        ok &= cert.satisfied
    if args.w is not None:
        conc = verify.check_concentration(sample, args.w)
        result["concentration"] = conc.to_json()
        ok &= conc.concentrated
    if not result:
        raise ConfigError("nothing to verify: give --codebook and/or --w")
    result["passed"] = bool(ok)
    _emit(result, args.output)
    return EXIT_OK if ok else EXIT_CHECK_FAILED


def _emit(obj, output) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True)
    if output:
        Path(output).write_text(text + "\n")
    else:
        print(text)


# -- parser ---------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="meanquant", description=__doc__,
                formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    q = sub.add_parser("quantize", help="learn a codebook for the mean measure of an NDJSON sample")
    q.add_argument("input", help="measures NDJSON")
    q.add_argument("-o", "--output", required=True, help="codebook JSON to write")
    q.add_argument("--report", help="report JSON (default: <output stem>.report.json)")
    q.add_argument("--k", type=int, required=True)
    q.add_argument("--algo", choices=["batch", "minibatch", "minibatch-nosplit"], default="batch")
    q.add_argument("--iters", type=_iters, default="auto", help="N or 'auto' = ceil(log n / log(4/3))")
    q.add_argument("--batch-size", type=_positive_int, default=1000)
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--init", choices=["kmeanspp", "file"], default="kmeanspp")
    q.add_argument("--init-file", help="codebook JSON used with --init file")
    q.add_argument("--empty-cell", choices=["keep", "reseed"], default="keep")
    q.add_argument("--restarts", type=_positive_int, default=1)
    q.set_defaults(func=cmd_quantize)

    v = sub.add_parser("vectorize", help="embed every measure with a codebook and kernel")
    v.add_argument("input", help="measures NDJSON")
    v.add_argument("--codebook", required=True)
    v.add_argument("-o", "--output", required=True, help="embedding CSV to write")
    v.add_argument("--kernel", choices=["psi0", "exp", "gauss", "laplace"], default="exp")
    v.add_argument("--sigma", default="auto", help="scale or 'auto' (half the smallest codepoint gap)")
    v.set_defaults(func=cmd_vectorize)

    c = sub.add_parser("cluster", help="cluster embedding rows")
    c.add_argument("input", help="embedding CSV")
    c.add_argument("-o", "--output", required=True, help="labels CSV to write")
    c.add_argument("--method", choices=["single-linkage", "kmeans"], default="kmeans")
    c.add_argument("--tau", type=float)
    c.add_argument("--n-clusters", type=_positive_int)
    c.add_argument("--restarts", type=_positive_int, default=100)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--truth", help="labels CSV with the true classes; prints NMI")
    c.set_defaults(func=cmd_cluster)

    b = sub.add_parser("bench", help="synthetic mixture benchmark (q1: budget sweep, q2: signal sweep)")
    b.add_argument("question", choices=["q1", "q2"])
    b.add_argument("--config", help="MixtureSpec JSON (fields d, L, p, r, N, sphere_radius, n_per_class, noise_sd)")
    b.add_argument("--out-dir", required=True)
    b.add_argument("--budgets", type=_int_list, default=[4, 8, 16, 32, 64])
    b.add_argument("--signals", type=_float_list, default=[0.5, 1.0, 2.0, 4.0])
    b.add_argument("--budget", type=_positive_int, default=32)
    b.add_argument("--methods", default="atol,rand,grid,histogram")
    b.add_argument("--reps", type=_positive_int, default=100)
    b.add_argument("--restarts", type=_positive_int, default=100)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--sigma-rule", choices=sorted(SIGMA_RULES), default="mean_nn")
    b.add_argument("--threads", type=_positive_int, default=1, help="worker threads; results do not depend on it")
    b.add_argument("--no-timing", action="store_true", help="leave wall_ms blank for byte-stable output")
    b.set_defaults(func=cmd_bench)

    kc = sub.add_parser("kernel-check", help="check the (p, delta)-kernel conditions")
    kc.add_argument("--kernel", choices=["psi0", "exp", "gauss", "laplace"], required=True)
    kc.add_argument("--p", type=_positive_int, required=True)
    kc.add_argument("--delta", type=float, required=True)
    kc.add_argument("--grid-step", type=float, default=1e-3)
    kc.add_argument("-o", "--output")
    kc.set_defaults(func=cmd_kernel_check)

    vf = sub.add_parser("verify", help="shattering / concentration certificates for a labeled sample")
    vf.add_argument("input", help="labeled measures NDJSON")
    vf.add_argument("--codebook")
    vf.add_argument("--p", type=_positive_int, default=1)
    vf.add_argument("--r", type=float)
    vf.add_argument("--delta", type=float)
    vf.add_argument("--w", type=float, help="concentration level for the W1 check")
    vf.add_argument("-o", "--output")
    vf.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, MeanQuantError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
