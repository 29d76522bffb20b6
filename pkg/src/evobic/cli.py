"""Command-line entry point: ``evobic generate|run|score|bench``.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import logging
import os
import statistics
import sys
import time
import warnings

from . import __version__
from .datamodel import dump_biclusters, load_biclusters, load_matrix, load_truth
from .evolution import EvolutionConfig, run
from .expansion import resolve
from .fitness import FitnessParams, default_sigma
from .metrics import score
from .synthgen import SUITES, ScenarioSpec, generate

log = logging.getLogger("evobic")

THREADS_ENV = "EVOBIC_THREADS"

# CLI spellings that differ from the EvolutionConfig field name
_ALIASES = {
    "max_iterations": ["--iterations"],
    "overlap_threshold": ["--overlap"],
    "rng_seed": ["--seed"],
}
_RUN_DEFAULTS = {"n_biclusters": 100, "allow_negative": True, "approx_violations": 1}


class UsageError(Exception):
    pass


def _on_off(text: str) -> bool:
    if text.lower() in ("on", "true", "yes", "1"):
        return True
    if text.lower() in ("off", "false", "no", "0"):
        return False
    raise argparse.ArgumentTypeError(f"expected on|off, got {text!r}")


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def read_config(path: str) -> dict:
    """JSON object, or ``key = value`` lines (``#`` comments allowed)."""
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    if text.lstrip().startswith("{"):
        return json.loads(text)
    out = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{n}: expected key = value")
        key, value = (part.strip() for part in line.split("=", 1))
        try:
            out[key] = json.loads(value)
        except json.JSONDecodeError:
            out[key] = value
    return out


def _fmt(x: float) -> float:
    return round(float(x), 6)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_generate(args) -> int:
    from .synthgen import emit_suite

    kwargs = {"overlap_blocks": args.overlap_blocks, "noise_sd": args.noise}
    if args.variants:
        kwargs["variants"] = args.variants
    if args.suite == "scaling" and args.rows:
        kwargs["rows"] = tuple(args.rows)
    manifest = emit_suite(args.out, args.suite, master_seed=args.seed, **kwargs)
    print(f"wrote {len(manifest)} datasets ({args.suite}) to {args.out}")
    return 0


def _run_settings(args) -> tuple[EvolutionConfig, dict]:
    settings: dict = {}
    if args.config:
        settings.update(read_config(args.config))
    for key, value in vars(args).items():
        if value is not None and key in _CONFIG_KEYS:
            settings[key] = value
    extra = {k: settings.pop(k, default) for k, default in _RUN_DEFAULTS.items()}
    threads = settings.pop("threads", None)
    if threads is None:
        threads = int(os.environ.get(THREADS_ENV, 0))
    extra["threads"] = threads
    defaults = {"max_iterations": 5000, "overlap_threshold": 0.75}
    cfg = EvolutionConfig.from_dict({**defaults, **settings})
    return cfg, extra


def cmd_run(args) -> int:
    cfg, extra = _run_settings(args)
    matrix = load_matrix(args.matrix)
    if matrix.n_imputed:
        print(f"warning: imputed {matrix.n_imputed} missing cells with column means", file=sys.stderr)

    def report(generation, top_rank):
        best = top_rank.fitnesses[0] if len(top_rank) else 0.0
        print(f"generation {generation}\tbest {best:.6f}\tlisted {len(top_rank)}", file=sys.stderr)

    result = run(matrix, cfg, threads=extra["threads"], callback=report if args.verbose else None)
    params = FitnessParams(cfg.sigma or default_sigma(matrix.n_rows))
    found = resolve(matrix, result.top_rank.series[: extra["n_biclusters"]], params, tolerance=cfg.tolerance,
                    allow_negative=extra["allow_negative"], approx_violations=extra["approx_violations"])
    if args.output:
        dump_biclusters(found, args.output)
    else:
        dump_biclusters(found, sys.stdout)
    if args.verbose:
        stop = "tabu saturation" if result.stopped_by_tabu else "iteration limit"
        print(f"{len(found)} biclusters after {result.n_generations} generations ({stop})", file=sys.stderr)
        for k, b in enumerate(found[:10], 1):
            labels = ",".join(matrix.col_labels[c] for c in b.series)
            print(f"#{k}\tfitness {b.fitness:.6f}\trows {len(b.rows)}\tcolumns {labels}", file=sys.stderr)
    return 0


def cmd_score(args) -> int:
    for path in (args.truth, args.found):
        if not os.path.exists(path):
            raise UsageError(f"no such file: {path}")
    truth = load_truth(args.truth)
    found = load_truth(args.found)
    if not found:
        print("warning: no biclusters found; scores are 0", file=sys.stderr)
    result = score(truth, found)
    payload = {
        "recovery": _fmt(result["recovery"]),
        "relevance": _fmt(result["relevance"]),
        "per_expected": [_fmt(v) for v in result["per_expected"]],
        "per_found": [_fmt(v) for v in result["per_found"]],
    }
    text = json.dumps(payload)
    print(text)
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    return 0


def bench(rows: list[int], repeats: int = 5, iterations: int = 200, n_cols: int = 100, seed: int = 0,
          threads: int = 0) -> list[dict]:
    """Time the search on generated ``rows x n_cols`` matrices."""
    out = []
    for i, n in enumerate(rows):
        # three trend blocks, shrunk to fit small matrices
        block = (max(1, min(50, n // 3)), max(1, min(15, n_cols // 3)))
        matrix, _ = generate(ScenarioSpec((n, n_cols), (block,) * 3, seed=seed + i))
        times, generations = [], []
        for r in range(repeats):
            cfg = EvolutionConfig(max_iterations=iterations, rng_seed=seed + r)
            t0 = time.perf_counter()
            result = run(matrix, cfg, threads=threads)
            times.append(time.perf_counter() - t0)
            generations.append(result.n_generations)
        sd = statistics.stdev(times) if len(times) > 1 else 0.0
        out.append({"rows": n, "mean_seconds": statistics.fmean(times), "sd_seconds": sd,
                    "generations": statistics.fmean(generations)})
    return out


def cmd_bench(args) -> int:
    threads = args.threads if args.threads is not None else int(os.environ.get(THREADS_ENV, 0))
    results = bench(args.rows, args.repeats, args.iterations, args.cols, args.seed, threads)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["rows", "mean_seconds", "sd_seconds"])
    for r in results:
        writer.writerow([r["rows"], f"{r['mean_seconds']:.6f}", f"{r['sd_seconds']:.6f}"])
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(buf.getvalue())
    sys.stdout.write(buf.getvalue())
    means = [r["mean_seconds"] for r in sorted(results, key=lambda r: r["rows"])]
    if any(b < a for a, b in zip(means, means[1:])):
        print("warning: timings are not monotone in row count", file=sys.stderr)
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

_CONFIG_KEYS = {f.name for f in dataclasses.fields(EvolutionConfig)} | set(_RUN_DEFAULTS) | {"threads"}


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("search settings (override --config)")
    for f in dataclasses.fields(EvolutionConfig):
        flags = _ALIASES.get(f.name, []) + ["--" + f.name.replace("_", "-")]
        kind = float if f.type in ("float", "float | None") else int
        g.add_argument(*flags, dest=f.name, type=kind, default=None, metavar=f.name.split("_")[-1].upper())


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="evobic", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--log-level", default="WARNING")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic benchmark suite")
    g.add_argument("--suite", required=True, choices=SUITES)
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--variants", type=int, default=None, help="datasets per scenario")
    g.add_argument("--overlap-blocks", type=int, default=3, help="blocks per overlap dataset")
    g.add_argument("--noise", type=float, default=0.0, help="sd of noise added to implanted cells")
    g.add_argument("--rows", type=_int_list, default=None, help="row counts for the scaling suite")
    g.set_defaults(func=cmd_generate)

    r = sub.add_parser("run", help="search a TSV matrix for biclusters")
    r.add_argument("matrix")
    r.add_argument("-o", "--output", help="bicluster JSON (default: stdout)")
    r.add_argument("--config", help="JSON or key = value file; flags take precedence")
    r.add_argument("--threads", type=int, default=None, help=f"fitness workers, 0 = all CPUs (env {THREADS_ENV})")
    r.add_argument("--biclusters", dest="n_biclusters", type=int, default=None, help="report at most N (default 100)")
    r.add_argument("--negative-trends", dest="allow_negative", type=_on_off, default=None, metavar="on|off")
    r.add_argument("--approx-violations", dest="approx_violations", type=int, default=None, metavar="K")
    r.add_argument("-v", "--verbose", action="store_true")
    _add_config_flags(r)
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("score", help="recovery and relevance against ground truth")
    s.add_argument("--truth", required=True)
    s.add_argument("--found", required=True)
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_score)

    b = sub.add_parser("bench", help="time the search on generated matrices")
    b.add_argument("--rows", type=_int_list, default=[5000, 10000, 15000, 20000, 25000])
    b.add_argument("--cols", type=int, default=100)
    b.add_argument("--repeats", type=int, default=5)
    b.add_argument("--iterations", type=int, default=200)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--threads", type=int, default=None)
    b.add_argument("-o", "--output", help="CSV file (also printed)")
    b.set_defaults(func=cmd_bench)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=args.log_level.upper(), format="%(levelname)s %(name)s: %(message)s")
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            return args.func(args)
    except UsageError as exc:
        print(f"evobic: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"evobic {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
