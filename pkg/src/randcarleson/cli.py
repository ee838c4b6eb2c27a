"""Command-line entry point ``randcarleson``.

Exit codes: 0 on success, 2 on invalid input or configuration, 3 when a
resource cap is hit.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .carleson import onebox_report
from .errors import InvalidInputError, ResourceLimitError
from .experiments import ExperimentConfig, emit_plotdata, load_results, run_experiment, summarize
from .gramian import gram_norm
from .kernels import KernelSpec
from .occupancy import OccupancyProblem, exact_prob, ratio_check
from .separation import (collisions_to_jsonl, cluster_count, greedy_partition, rectangle_collisions,
                         separation_constant)
from .sequences import PLACEMENTS, CountingProfile, RandomSequence, sample

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_RESOURCE = 3


def _emit(text: str, out: str | None):
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _read_sequence(path: str) -> RandomSequence:
    text = sys.stdin.read() if path == "-" else Path(path).read_text()
    return RandomSequence.loads(text)


def cmd_generate(args) -> int:
    profile = CountingProfile.exponential(args.C, args.beta, args.d, args.depth, shells=args.ball)
    seq = sample(profile, args.placement, args.seed)
    _emit(seq.dumps(), args.out)
    return EXIT_OK


def cmd_gram_norm(args) -> int:
    seq = _read_sequence(args.sequence)
    family = args.kernel or ("besov_sobolev" if seq.domain.kind == "ball" else "szego")
    spec = KernelSpec(family, seq.d, args.a)
    est = gram_norm(spec, seq, method=args.method, tol=args.tol, seed=args.seed)
    _emit(json.dumps({"points": len(seq), "norm": est.value, "converged": est.converged,
                      "method": est.method}) + "\n", args.out)
    return EXIT_OK


def cmd_separation(args) -> int:
    seq = _read_sequence(args.sequence)
    events = rectangle_collisions(seq, args.M)
    part = greedy_partition(seq, args.delta)
    report = {"points": len(seq), "separation": separation_constant(seq), "collisions": len(events),
              "clusters": cluster_count(seq, args.M, args.l), "parts": part.M}
    if args.events:
        Path(args.events).write_text(collisions_to_jsonl(events))
    _emit(json.dumps(report) + "\n", args.out)
    return EXIT_OK


def cmd_occupancy(args) -> int:
    pb = OccupancyProblem(args.n, args.N, args.r)
    report = {"n": pb.n, "N": pb.N, "r": pb.r, "alpha": pb.alpha, "p_r": pb.p_r,
              "prob": exact_prob(pb, args.k)}
    if pb.p_r > 0:
        report["ratio"] = ratio_check(pb)
    _emit(json.dumps(report) + "\n", args.out)
    return EXIT_OK


def cmd_onebox(args) -> int:
    rep = onebox_report(_read_sequence(args.sequence), args.gamma)
    _emit(rep.to_csv(), args.out)
    sys.stderr.write(f"constant {rep.constant!r} all-arcs bound {rep.all_arcs_bound!r}\n")
    return EXIT_OK


def cmd_experiment_run(args) -> int:
    cfg = ExperimentConfig.load(args.config)
    out = args.out or cfg.output or str(Path(args.config).with_suffix(".jsonl"))
    rows = run_experiment(cfg, out=out, threads=args.threads)
    failed = sum(1 for r in rows if r.error)
    sys.stderr.write(f"{len(rows)} rows in {out} ({failed} failed)\n")
    return EXIT_OK


def cmd_experiment_summarize(args) -> int:
    summary = summarize(load_results(args.results))
    if args.out:
        emit_plotdata(summary, args.out)
    sys.stdout.write(json.dumps(summary.to_dict(), sort_keys=True, indent=1) + "\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="randcarleson", description="Random Carleson sequence laboratory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", default=None, help="output file (or prefix for plot data)")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="sample a random sequence")
    g.add_argument("--C", type=float, default=1.0)
    g.add_argument("--beta", type=float, required=True)
    g.add_argument("--d", type=int, default=1)
    g.add_argument("--depth", type=int, required=True)
    g.add_argument("--ball", action="store_true")
    g.add_argument("--placement", choices=PLACEMENTS, default=PLACEMENTS[0])
    g.set_defaults(func=cmd_generate)

    g = sub.add_parser("gram-norm", help="norm of the normalised-kernel Gramian")
    g.add_argument("sequence")
    g.add_argument("--kernel", choices=("szego", "dirichlet", "besov_sobolev"))
    g.add_argument("--a", type=float, default=0.0)
    g.add_argument("--method", choices=("power", "lanczos"), default="lanczos")
    g.add_argument("--tol", type=float, default=1e-8)
    g.set_defaults(func=cmd_gram_norm)

    g = sub.add_parser("separation", help="separation, collisions, clusters and greedy partition")
    g.add_argument("sequence")
    g.add_argument("--M", type=int, default=1)
    g.add_argument("--l", type=int, default=2)
    g.add_argument("--delta", type=float, default=0.5)
    g.add_argument("--events", help="write collision events as JSON lines")
    g.set_defaults(func=cmd_separation)

    g = sub.add_parser("occupancy", help="exact occupancy probability")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--N", type=int, required=True)
    g.add_argument("--r", type=int, default=2)
    g.add_argument("--k", type=int, default=1)
    g.set_defaults(func=cmd_occupancy)

    g = sub.add_parser("onebox", help="one-box Carleson constant (disc)")
    g.add_argument("sequence")
    g.add_argument("--gamma", type=float, default=1.0)
    g.set_defaults(func=cmd_onebox)

    e = sub.add_parser("experiment", help="run or summarize experiment campaigns")
    esub = e.add_subparsers(dest="action", required=True)
    r = esub.add_parser("run")
    r.add_argument("config")
    r.set_defaults(func=cmd_experiment_run)
    s = esub.add_parser("summarize")
    s.add_argument("results")
    s.set_defaults(func=cmd_experiment_summarize)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ResourceLimitError as exc:
        sys.stderr.write(f"resource limit: {exc}\n")
        return EXIT_RESOURCE
    except (InvalidInputError, OSError) as exc:
        sys.stderr.write(f"invalid input: {exc}\n")
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
