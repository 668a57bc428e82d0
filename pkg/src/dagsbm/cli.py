"""Command-line entry point: clean, fit, summarize, generate.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 numeric failure.
"""
from __future__ import annotations

import argparse
import json
import sys
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import io as dio
from .graph import CyclicError, GraphError, break_cycles, largest_weak_component, read_edge_list, to_dag, write_edge_list, write_removal_log
from .likelihood import PriorConfig
from .posterior import ordering_density, salso_estimate, similarity_matrix, summarize_scalars
from .sampler import MODES, TuningConfig, iter_chain
from .selection import PseudoPrior, bayes_factor, fit_pseudopriors
from .synth import generate_planted

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _log(msg: str) -> None:
    print(msg, file=sys.stderr, flush=True)


# ---------------------------------------------------------------------------
# clean


def clean_graph(raw):
    """Break cycles, then keep the largest weakly connected component."""
    dag, removed = break_cycles(raw)
    sub, mapping = largest_weak_component(dag)
    report = {
        "raw_nodes": raw.n,
        "raw_edges": raw.n_edges,
        "mutual_pairs_removed": sum(r.reason == "mutual_pair" for r in removed),
        "cycle_edges_removed": sum(r.reason == "cycle" for r in removed),
        "component_nodes": sub.n,
        "component_edges": sub.n_edges,
    }
    return sub, removed, report


def cmd_clean(args) -> int:
    raw = read_edge_list(args.edges, format=args.format)
    sub, removed, report = clean_graph(raw)
    out = dio.ensure_dir(args.out)
    write_edge_list(sub, out / "edges.txt")
    write_removal_log(removed, out / "removals.csv", labels=raw.labels)
    with open(out / "report.json", "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2)
    for k, v in report.items():
        print(f"{k}: {v}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# fit


def _load_dag(args):
    raw = read_edge_list(args.edges, format=args.format)
    try:
        return to_dag(raw)
    except CyclicError as exc:
        if not args.clean:
            raise GraphError(
                f"{args.edges} contains directed cycles ({len(exc.nodes)} nodes involved); "
                "rerun with --clean to drop the offending edges, or run the clean command first"
            ) from None
        dag, removed = break_cycles(raw)
        _log(f"removed {len(removed)} edges to break cycles")
        return dag


def _run_one(job) -> dict:
    dag, priors, tuning, mode, pseudo, out, meta = job
    total = tuning.burn_in + tuning.iterations
    every = max(1, total // 10)
    start = time.perf_counter()
    done = 0
    with dio.RunWriter(out, meta) as w:
        for rec in iter_chain(dag, priors, tuning, mode, pseudo):
            w.write(rec)
            done = rec.iteration
            if done % every == 0 or done == total:
                rate = done / max(time.perf_counter() - start, 1e-9)
                _log(f"[seed {tuning.seed}] {done}/{total} sweeps, {rate:.1f} it/s")
        elapsed = time.perf_counter() - start
        rate = total / elapsed if elapsed > 0 and total else 0.0
        w.close(seconds=elapsed, iterations_per_second=rate)
    return {"out": str(out), "seconds": elapsed, "rate": rate}


def cmd_fit(args) -> int:
    priors, tuning = dio.read_config(args.config) if args.config else (PriorConfig(), TuningConfig())
    updates = {k: v for k, v in (("iterations", args.iterations), ("burn_in", args.burn_in),
                                 ("thinning", args.thinning), ("seed", args.seed)) if v is not None}
    tuning = replace(tuning, **updates)
    if args.p_r1 is not None:
        priors = replace(priors, p_r1=args.p_r1)
    pseudo = None
    if args.mode == "select":
        if not args.pseudopriors:
            raise UsageError(
                "--mode select needs --pseudopriors FILE. Produce it with: fit --mode finite, "
                "fit --mode infinite, then summarize --fit-pseudopriors FINITE_RUN INFINITE_RUN")
        if not 0 < priors.p_r1 < 1:
            raise UsageError("p_r1 must lie strictly between 0 and 1 in select mode")
        pseudo = PseudoPrior.load(args.pseudopriors)
        _log("hint: if the chain never leaves one regime, adjust p_r1 and rerun until both are visited")
    dag = _load_dag(args)
    meta = {
        "mode": args.mode, "n": dag.n, "edges": dag.n_edges, "labels": [str(x) for x in dag.labels],
        "priors": asdict(priors), "tuning": {k: v for k, v in asdict(tuning).items() if k != "s_xi"},
        "s_xi": float(np.mean(tuning.s_xi)), "edge_file": str(args.edges),
    }
    jobs = []
    for c in range(args.chains):
        tu = replace(tuning, seed=tuning.seed + c)
        out = dio.chain_dir(args.out, c, args.chains)
        jobs.append((dag, priors, tu, args.mode, pseudo, out, {**meta, "seed": tu.seed, "chain": c}))
    if args.chains == 1:
        results = [_run_one(jobs[0])]
    else:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            results = list(pool.map(_run_one, jobs))
    for r in results:
        print(f"{r['out']}: {r['seconds']:.2f} s, {r['rate']:.1f} iterations/second")
    return EXIT_OK


# ---------------------------------------------------------------------------
# summarize


def _scalar_columns(trace: dict) -> dict:
    names = {"K_n": "K_n", "a": "a", "b": "b", "alpha": "alpha", "theta": "theta", "gamma": "gamma", "k": "k"}
    cols = {name: trace[key] for name, key in names.items()}
    cols["r"] = trace["r"]
    return cols


def cmd_summarize(args) -> int:
    if args.fit_pseudopriors:
        fin = dio.read_run(args.fit_pseudopriors[0])
        inf = dio.read_run(args.fit_pseudopriors[1])
        priors = PriorConfig(**fin["meta"].get("priors", {}))
        if not len(fin["trace"]["iter"]) or not len(inf["trace"]["iter"]):
            raise dio.RunFormatError("pilot runs must contain at least one recorded iteration")
        pseudo = fit_pseudopriors(fin["trace"], inf["trace"], priors)
        out = Path(args.out or "pseudopriors.json")
        pseudo.save(out)
        print(f"pseudopriors written to {out}")
        return EXIT_OK
    if not args.run:
        raise UsageError("summarize needs --run DIR or --fit-pseudopriors FINITE_RUN INFINITE_RUN")
    run = dio.read_run(args.run)
    trace, Z, sig = run["trace"], run["z"], run["sigma"]
    if len(trace["iter"]) == 0:
        raise dio.RunFormatError(f"{args.run}: the trace is empty")
    labels = run["meta"].get("labels") or list(range(Z.shape[1]))
    out = dio.ensure_dir(args.out or args.run)

    sim = similarity_matrix(Z)
    dio.write_matrix(out / "similarity.csv", sim, labels)
    est = salso_estimate(Z, runs=args.salso_runs, rng=args.seed)
    dio.write_labels(out / "pointest.txt", est)
    dens, mean_pos = ordering_density(sig)
    rows = np.argsort(mean_pos, kind="stable")
    dio.write_matrix(out / "ordering_density.csv", dens[rows], range(dens.shape[1]),
                     row_labels=[labels[i] for i in rows])
    dio.write_matrix(out / "mean_position.csv", mean_pos[None, :], labels)
    summary = summarize_scalars(_scalar_columns(trace))
    dio.write_summary(out / "posterior_summary.csv", summary)
    print(f"samples: {len(trace['iter'])}, point estimate has {est.max() + 1} groups")
    if run["meta"].get("mode") == "select":
        prior = float(run["meta"]["priors"]["p_r1"])
        post = float(np.mean(trace["r"]))
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            bf = bayes_factor(post, prior)
        for w in caught:
            print(f"warning: {w.message}")
        prior_odds = prior / (1 - prior)
        print(f"P(r=1|Y) = {post:.4f}, prior odds = {prior_odds:.4f}, B_10 = {bf:.4f}")
        with open(out / "bayes_factor.json", "w", encoding="utf-8") as fh:
            json.dump({"posterior_r1": post, "prior_r1": prior, "prior_odds": prior_odds,
                       "bayes_factor": bf if np.isfinite(bf) else str(bf)}, fh, indent=2)
    return EXIT_OK


# ---------------------------------------------------------------------------
# generate


def cmd_generate(args) -> int:
    g, truth = generate_planted(args.n, args.k, args.within, args.between, args.seed)
    out = dio.ensure_dir(args.out)
    write_edge_list(g, out / "edges.txt")
    truth.save(out / "truth.json")
    print(f"generated {g.n} nodes and {g.n_edges} edges in {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="dagsbm", description="Block-model clustering of directed acyclic graphs")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    c = sub.add_parser("clean", help="remove cycles and keep the largest component")
    c.add_argument("--edges", required=True)
    c.add_argument("--format", default="two-column", choices=["two-column", "csv"])
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_clean)

    f = sub.add_parser("fit", help="run the sampler")
    f.add_argument("--edges", required=True)
    f.add_argument("--format", default="two-column", choices=["two-column", "csv"])
    f.add_argument("--mode", default="infinite", choices=MODES)
    f.add_argument("--config")
    f.add_argument("--seed", type=int)
    f.add_argument("--iterations", type=int)
    f.add_argument("--burn-in", type=int)
    f.add_argument("--thinning", type=int)
    f.add_argument("--p-r1", type=float, help="prior probability of the finite regime (select mode)")
    f.add_argument("--pseudopriors")
    f.add_argument("--clean", action="store_true", help="drop edges to break cycles instead of failing")
    f.add_argument("--chains", type=int, default=1)
    f.add_argument("--workers", type=int)
    f.add_argument("--out", required=True)
    f.set_defaults(func=cmd_fit)

    s = sub.add_parser("summarize", help="posterior summaries of a run")
    s.add_argument("--run")
    s.add_argument("--out")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--salso-runs", type=int, default=16)
    s.add_argument("--fit-pseudopriors", nargs=2, metavar=("FINITE_RUN", "INFINITE_RUN"))
    s.set_defaults(func=cmd_summarize)

    g = sub.add_parser("generate", help="simulate a planted-partition DAG")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--k", type=int, required=True)
    g.add_argument("--within", type=float, default=0.8)
    g.add_argument("--between", type=float, default=0.02)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "chains", 1) < 1:
        _log("error: --chains must be at least 1")
        return EXIT_USAGE
    try:
        return args.func(args)
    except (UsageError, dio.ConfigError) as exc:
        _log(f"error: {exc}")
        return EXIT_USAGE
    except (GraphError, dio.RunFormatError, OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
        _log(f"error: {exc}")
        return EXIT_DATA
    except (ArithmeticError, AssertionError) as exc:
        _log(f"numeric failure: {exc}")
        return EXIT_NUMERIC
    except ValueError as exc:
        _log(f"error: {exc}")
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
